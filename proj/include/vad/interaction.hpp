#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vad/cycle.hpp"
#include "vad/tensor.hpp"

namespace vad {

// One remembered actor from a nearby clip.
template <typename S>
struct BankEntry {
  std::string video_id;
  std::uint32_t clip_time_s = 0;
  std::uint32_t actor_id = 0;
  Tensor<S> feature;  // [c], detached
};

// Long-term feature store keyed by (video, clip time in seconds). Writing a
// clip replaces everything previously stored under its key in one step, so a
// clip is never half-updated. Reads gather entries from the surrounding
// window, excluding the query time itself. Thread safe; iteration order is
// video id, then time, then stored actor order, which keeps queries and saved
// files deterministic.
template <typename S>
class MemoryBank {
 public:
  explicit MemoryBank(std::size_t channels, std::uint32_t window_s = 60);

  std::size_t channels() const { return channels_; }
  std::uint32_t window_s() const { return window_; }

  // features is [N x c]; row i is remembered for actor_ids[i]. Values are
  // detached on the way in.
  void store_clip(const std::string& video_id, std::uint32_t clip_time_s,
                  std::span<const int> actor_ids, const Tensor<S>& features);

  // Entries with |t' - clip_time_s| <= window_s / 2 and t' != clip_time_s,
  // from the same video only.
  std::vector<BankEntry<S>> neighbors(const std::string& video_id,
                                      std::uint32_t clip_time_s) const;

  std::size_t size() const;  // total stored entries
  void clear();

  // One file per video under dir, records bit-exact across a round trip.
  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);

 private:
  using ClipSlot = std::vector<std::pair<std::uint32_t, Tensor<S>>>;

  mutable std::shared_mutex mu_;
  std::size_t channels_;
  std::uint32_t window_;
  std::map<std::string, std::map<std::uint32_t, ClipSlot>> data_;
};

// Parameters for the in-clip / cross-clip refinement stack: at each depth an
// attention step over the clip's own actors, then one over bank neighbors.
template <typename S>
struct InteractionParams {
  std::vector<AttentionParams<S>> clip_steps;
  std::vector<AttentionParams<S>> bank_steps;
};

template <typename S>
InteractionParams<S> init_interaction_params(std::size_t c, std::size_t d,
                                             std::size_t depth, Rng& rng);

// Refines [N x c] actor features. Per depth level, every actor first attends
// over all clip actors (itself included), then over the bank entries; the bank
// step is skipped when there are none. order_log, when given, records the
// executed step sequence ("clip" / "bank").
template <typename S>
Tensor<S> instance_interact(const Tensor<S>& actors,
                            const std::vector<BankEntry<S>>& bank,
                            const InteractionParams<S>& params, S ln_eps, double p_drop,
                            Rng& rng, bool training,
                            std::vector<std::string>* order_log = nullptr);

template <typename S>
struct ClassifierParams {
  Tensor<S> w;  // [c x n_labels]
  Tensor<S> b;  // [n_labels], zero-initialized so empty features score 0.5
};

template <typename S>
ClassifierParams<S> init_classifier_params(std::size_t c, std::size_t n_labels, Rng& rng);

// Per-label probabilities: sigmoid(features w + b), [N x n_labels].
template <typename S>
Tensor<S> classify(const Tensor<S>& features, const ClassifierParams<S>& params);

}  // namespace vad
