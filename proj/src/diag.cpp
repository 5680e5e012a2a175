#include "vad/diag.hpp"

#include <cmath>

namespace vad {

namespace {

// Bitwise-identical vectors are the same vector; report 1 exactly instead of
// routing the question through sqrt rounding.
template <typename S>
double cosine(const Tensor<S>& a, const Tensor<S>& b) {
  auto x = a.data();
  auto y = b.data();
  if (x.size() != y.size()) throw DimensionError("cosine over mismatched vectors");
  bool same = true;
  for (std::size_t i = 0; i < x.size() && same; ++i) same = x[i] == y[i];
  if (same) return 1.0;
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += double(x[i]) * double(y[i]);
    nx += double(x[i]) * double(x[i]);
    ny += double(y[i]) * double(y[i]);
  }
  if (nx == 0.0 || ny == 0.0)
    throw DiagnosticError("cosine similarity of a zero vector is undefined");
  return dot / std::sqrt(nx * ny);
}

}  // namespace

template <typename S>
SimilarityReport similarity_diagnostic(const HeadModel<S>& model,
                                       const ClipData<S>& clip) {
  const CycleConfig& cc = model.config().cycle;
  if (!cc.use_global || cc.mode == InteractionMode::C2A)
    throw DiagnosticError(
        "the similarity diagnostic needs the global branch with per-actor "
        "reorganization enabled");
  if (clip.boxes.size() < 2)
    throw DiagnosticError("the similarity diagnostic needs at least two actors");

  CycleTrace<S> trace;
  Rng rng(0);
  (void)model.forward(clip, {}, rng, /*training=*/false, &trace);
  if (trace.global_ctx_layers.empty())
    throw DiagnosticError("no global-branch snapshots were recorded");

  auto mean_pairwise = [](const std::vector<Tensor<S>>& layer) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < layer.size(); ++i)
      for (std::size_t j = i + 1; j < layer.size(); ++j) {
        sum += cosine(layer[i], layer[j]);
        ++pairs;
      }
    return sum / static_cast<double>(pairs);
  };

  SimilarityReport report;
  report.actors = clip.boxes.size();
  for (const auto& layer : trace.global_ctx_layers)
    report.mean_cosine.push_back(mean_pairwise(layer));
  for (const auto& layer : trace.actor_layers)
    report.actor_cosine.push_back(mean_pairwise(layer));
  return report;
}

template <typename S>
void dump_attention_csv(const HeadModel<S>& model, const ClipData<S>& clip,
                        std::ostream& os) {
  CycleTrace<S> trace;
  Rng rng(0);
  (void)model.forward(clip, {}, rng, /*training=*/false, &trace);
  os << "branch,layer,actor_id,query_index,key_index,weight\n";
  for (const auto& row : trace.attention)
    os << row.branch << "," << row.layer << "," << row.actor_id << ","
       << row.query_index << "," << row.key_index << "," << row.weight << "\n";
}

#define VAD_INSTANTIATE_DIAG(S)                                                     \
  template SimilarityReport similarity_diagnostic<S>(const HeadModel<S>&,           \
                                                     const ClipData<S>&);           \
  template void dump_attention_csv<S>(const HeadModel<S>&, const ClipData<S>&,      \
                                      std::ostream&);

VAD_INSTANTIATE_DIAG(float)
VAD_INSTANTIATE_DIAG(double)

#undef VAD_INSTANTIATE_DIAG

}  // namespace vad
