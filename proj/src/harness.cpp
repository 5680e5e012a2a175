#include "vad/harness.hpp"

#include <algorithm>

namespace vad {

std::vector<std::string> dataset_categories(const SynthConfig& cfg) {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < kSynthLabels; ++l) out.push_back(label_category(cfg, l));
  return out;
}

template <typename S>
void fill_bank(const HeadModel<S>& model, const SynthDataset<S>& ds, MemoryBank<S>& bank) {
  bank.clear();
  Rng rng(0);
  for (const auto& scene : ds.scenes) {
    if (scene.clip.boxes.empty()) continue;
    auto res = model.forward(scene.clip, {}, rng, /*training=*/false);
    bank.store_clip(scene.clip.video_id, std::uint32_t(scene.clip.clip_time_s),
                    std::span<const int>(res.actor_ids), res.features);
  }
}

template <typename S>
EvalInputs collect_eval_inputs(const HeadModel<S>& model, const SynthDataset<S>& ds,
                               std::span<const std::size_t> indices,
                               const EvalOptions& opt, MemoryBank<S>* bank) {
  if (opt.two_pass_bank && bank == nullptr)
    throw ConfigError("two-pass evaluation requires a memory bank");
  if (opt.two_pass_bank) fill_bank(model, ds, *bank);

  EvalInputs out;
  out.n_classes = model.config().n_labels;
  Rng eval_rng(0);
  Rng jitter_base(opt.seed);
  for (std::size_t idx : indices) {
    if (idx >= ds.scenes.size()) throw ParameterError("scene index out of range");
    const auto& scene = ds.scenes[idx];

    ClipData<S> clip = scene.clip;
    if (opt.detector_jitter) {
      Rng jr = jitter_base.derive(0x11770000ULL + idx);
      ClipData<S> kept;
      kept.features = clip.features;
      kept.video_id = clip.video_id;
      kept.clip_time_s = clip.clip_time_s;
      for (std::size_t b = 0; b < clip.boxes.size(); ++b) {
        ActorBox box = clip.boxes[b];
        const double w = box.x2 - box.x1, h = box.y2 - box.y1;
        double dx = jr.normal(0.0, 0.02), dy = jr.normal(0.0, 0.02);
        dx = std::clamp(dx, -box.x1, 1.0 - box.x2);
        dy = std::clamp(dy, -box.y1, 1.0 - box.y2);
        box.x1 += dx;
        box.x2 = box.x1 + w;
        box.y1 += dy;
        box.y2 = box.y1 + h;
        box.confidence = 0.55 + 0.45 * jr.uniform();
        if (box.confidence < opt.conf_threshold) continue;
        kept.boxes.push_back(box);
        kept.labels.push_back(clip.labels[b]);
      }
      clip = std::move(kept);
    }
    if (clip.boxes.empty()) continue;

    std::vector<BankEntry<S>> neighbors;
    if (opt.two_pass_bank)
      neighbors = bank->neighbors(clip.video_id, std::uint32_t(clip.clip_time_s));
    auto res = model.forward(clip, neighbors, eval_rng, /*training=*/false);

    for (std::size_t i = 0; i < clip.boxes.size(); ++i) {
      std::vector<double> scores(out.n_classes);
      for (std::size_t l = 0; l < out.n_classes; ++l)
        scores[l] = clip.boxes[i].confidence * static_cast<double>(res.probs.at(i, l));
      out.scores.push_back(std::move(scores));
      out.truths.push_back(clip.labels[i]);
    }
  }
  return out;
}

template <typename S>
EvalReport evaluate_model(const HeadModel<S>& model, const SynthDataset<S>& ds,
                          std::span<const std::size_t> indices, const EvalOptions& opt) {
  MemoryBank<S> bank(model.config().cycle.channels);
  EvalInputs in = collect_eval_inputs(model, ds, indices, opt,
                                      opt.two_pass_bank ? &bank : nullptr);
  return evaluate(in, dataset_categories(ds.cfg));
}

#define VAD_INSTANTIATE_HARNESS(S)                                                      \
  template void fill_bank<S>(const HeadModel<S>&, const SynthDataset<S>&,               \
                             MemoryBank<S>&);                                           \
  template EvalInputs collect_eval_inputs<S>(const HeadModel<S>&,                       \
                                             const SynthDataset<S>&,                    \
                                             std::span<const std::size_t>,              \
                                             const EvalOptions&, MemoryBank<S>*);       \
  template EvalReport evaluate_model<S>(const HeadModel<S>&, const SynthDataset<S>&,    \
                                        std::span<const std::size_t>,                   \
                                        const EvalOptions&);

VAD_INSTANTIATE_HARNESS(float)
VAD_INSTANTIATE_HARNESS(double)

#undef VAD_INSTANTIATE_HARNESS

}  // namespace vad
