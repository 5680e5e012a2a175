#include "vad/interaction.hpp"

#include <fstream>
#include <mutex>

#include "vad/serialize.hpp"

namespace vad {

namespace {

void check_video_id(const std::string& id) {
  if (id.empty()) throw ParameterError("video id must be nonempty");
  for (char ch : id) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                    (ch >= '0' && ch <= '9') || ch == '_' || ch == '-' || ch == '.';
    if (!ok)
      throw ParameterError("video id '" + id + "' contains characters unsafe for filenames");
  }
}

}  // namespace

template <typename S>
MemoryBank<S>::MemoryBank(std::size_t channels, std::uint32_t window_s)
    : channels_(channels), window_(window_s) {
  if (channels == 0) throw ParameterError("memory bank channel width must be positive");
}

template <typename S>
void MemoryBank<S>::store_clip(const std::string& video_id, std::uint32_t clip_time_s,
                               std::span<const int> actor_ids, const Tensor<S>& features) {
  check_video_id(video_id);
  if (!features.defined() || features.rank() != 2 || features.dim(1) != channels_)
    throw DimensionError("bank features must be [N x c] with the bank's channel width");
  if (features.dim(0) != actor_ids.size())
    throw DimensionError("actor id count does not match feature rows");

  ClipSlot slot;
  slot.reserve(actor_ids.size());
  Tensor<S> plain = features.detach();
  for (std::size_t i = 0; i < actor_ids.size(); ++i) {
    if (actor_ids[i] < 0) throw ParameterError("bank actor ids must be nonnegative");
    slot.emplace_back(static_cast<std::uint32_t>(actor_ids[i]),
                      rows(plain, i, 1).detach());
  }

  std::unique_lock lock(mu_);
  data_[video_id][clip_time_s] = std::move(slot);
}

template <typename S>
std::vector<BankEntry<S>> MemoryBank<S>::neighbors(const std::string& video_id,
                                                   std::uint32_t clip_time_s) const {
  std::shared_lock lock(mu_);
  std::vector<BankEntry<S>> out;
  auto vit = data_.find(video_id);
  if (vit == data_.end()) return out;
  const std::uint32_t half = window_ / 2;
  for (const auto& [t, slot] : vit->second) {
    const std::uint32_t dist = t > clip_time_s ? t - clip_time_s : clip_time_s - t;
    if (dist == 0 || dist > half) continue;
    for (const auto& [actor_id, feat] : slot) {
      BankEntry<S> e;
      e.video_id = video_id;
      e.clip_time_s = t;
      e.actor_id = actor_id;
      e.feature = reshape(feat, {feat.numel()});
      out.push_back(std::move(e));
    }
  }
  return out;
}

template <typename S>
std::size_t MemoryBank<S>::size() const {
  std::shared_lock lock(mu_);
  std::size_t n = 0;
  for (const auto& [vid, clips] : data_)
    for (const auto& [t, slot] : clips) n += slot.size();
  return n;
}

template <typename S>
void MemoryBank<S>::clear() {
  std::unique_lock lock(mu_);
  data_.clear();
}

template <typename S>
void MemoryBank<S>::save(const std::filesystem::path& dir) const {
  std::shared_lock lock(mu_);
  std::filesystem::create_directories(dir);
  for (const auto& [vid, clips] : data_) {
    std::ofstream out(dir / (vid + ".bank"), std::ios::binary);
    if (!out) throw FormatError("cannot open bank file for video " + vid);
    for (const auto& [t, slot] : clips)
      for (const auto& [actor_id, feat] : slot) {
        write_u32_le(out, t);
        write_u32_le(out, actor_id);
        write_tensor(out, reshape(feat, {feat.numel()}));
      }
    if (!out) throw FormatError("failed writing bank file for video " + vid);
  }
}

template <typename S>
void MemoryBank<S>::load(const std::filesystem::path& dir) {
  std::map<std::string, std::map<std::uint32_t, ClipSlot>> fresh;
  if (!std::filesystem::is_directory(dir))
    throw FormatError("bank directory does not exist: " + dir.string());
  // directory iteration order is unspecified; the map sorts videos by id
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".bank") continue;
    const std::string vid = entry.path().stem().string();
    std::ifstream in(entry.path(), std::ios::binary);
    if (!in) throw FormatError("cannot open bank file " + entry.path().string());
    while (in.peek() != std::ifstream::traits_type::eof()) {
      const std::uint32_t t = read_u32_le(in);
      const std::uint32_t actor_id = read_u32_le(in);
      Tensor<S> feat = read_tensor<S>(in);
      if (feat.rank() != 1 || feat.numel() != channels_)
        throw FormatError("bank record width does not match the bank configuration");
      fresh[vid][t].emplace_back(actor_id, std::move(feat));
    }
  }
  std::unique_lock lock(mu_);
  data_ = std::move(fresh);
}

template <typename S>
InteractionParams<S> init_interaction_params(std::size_t c, std::size_t d,
                                             std::size_t depth, Rng& rng) {
  if (depth == 0) throw ParameterError("interaction depth must be positive");
  InteractionParams<S> p;
  for (std::size_t i = 0; i < depth; ++i) {
    p.clip_steps.push_back(init_attention_params<S>(c, d, rng));
    p.bank_steps.push_back(init_attention_params<S>(c, d, rng));
  }
  return p;
}

template <typename S>
Tensor<S> instance_interact(const Tensor<S>& actors,
                            const std::vector<BankEntry<S>>& bank,
                            const InteractionParams<S>& params, S ln_eps, double p_drop,
                            Rng& rng, bool training,
                            std::vector<std::string>* order_log) {
  if (!actors.defined() || actors.rank() != 2)
    throw DimensionError("instance features must be rank 2 [N x c]");
  if (params.clip_steps.size() != params.bank_steps.size())
    throw ParameterError("clip and bank step stacks must have equal depth");
  if (params.clip_steps.empty()) throw ParameterError("interaction depth must be positive");
  if (actors.dim(0) == 0) return actors;
  const std::size_t c = actors.dim(1);

  Tensor<S> bank_mat;
  if (!bank.empty()) {
    std::vector<Tensor<S>> rows_;
    rows_.reserve(bank.size());
    for (const auto& e : bank) {
      if (e.feature.numel() != c)
        throw DimensionError("bank entry width does not match instance features");
      rows_.push_back(reshape(e.feature, {std::size_t{1}, c}));
    }
    bank_mat = concat(0, std::span<const Tensor<S>>(rows_));
  }

  Tensor<S> x = actors;
  for (std::size_t level = 0; level < params.clip_steps.size(); ++level) {
    x = attention_block(x, x, params.clip_steps[level], ln_eps, p_drop, rng, training);
    if (order_log) order_log->push_back("clip");
    if (bank_mat.defined()) {
      x = attention_block(x, bank_mat, params.bank_steps[level], ln_eps, p_drop, rng,
                          training);
      if (order_log) order_log->push_back("bank");
    }
  }
  return x;
}

template <typename S>
ClassifierParams<S> init_classifier_params(std::size_t c, std::size_t n_labels, Rng& rng) {
  if (c == 0 || n_labels == 0)
    throw ParameterError("classifier dims must be positive");
  const S bound = S(1) / std::sqrt(S(c));
  ClassifierParams<S> p;
  p.w = uniform_init<S>({c, n_labels}, -bound, bound, rng);
  p.b = Tensor<S>::zeros({n_labels}, /*requires_grad=*/true);
  return p;
}

template <typename S>
Tensor<S> classify(const Tensor<S>& features, const ClassifierParams<S>& params) {
  if (!features.defined() || features.rank() != 2)
    throw DimensionError("classifier input must be rank 2 [N x c]");
  if (!params.w.defined() || params.w.rank() != 2 || params.w.dim(0) != features.dim(1))
    throw DimensionError("classifier weight shape does not match features");
  return sigmoid(add_rowvec(matmul(features, params.w), params.b));
}

#define VAD_INSTANTIATE_INTERACTION(S)                                                   \
  template class MemoryBank<S>;                                                          \
  template InteractionParams<S> init_interaction_params<S>(std::size_t, std::size_t,     \
                                                           std::size_t, Rng&);           \
  template Tensor<S> instance_interact<S>(const Tensor<S>&,                              \
                                          const std::vector<BankEntry<S>>&,              \
                                          const InteractionParams<S>&, S, double, Rng&,  \
                                          bool, std::vector<std::string>*);              \
  template ClassifierParams<S> init_classifier_params<S>(std::size_t, std::size_t,       \
                                                         Rng&);                          \
  template Tensor<S> classify<S>(const Tensor<S>&, const ClassifierParams<S>&);

VAD_INSTANTIATE_INTERACTION(float)
VAD_INSTANTIATE_INTERACTION(double)

#undef VAD_INSTANTIATE_INTERACTION

}  // namespace vad
