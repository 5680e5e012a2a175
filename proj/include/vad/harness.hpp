#pragma once

#include <span>

#include "vad/eval.hpp"
#include "vad/model.hpp"
#include "vad/synth.hpp"
#include "vad/train.hpp"

namespace vad {

struct EvalOptions {
  // Fill a neighbor bank from an eval-mode pass over the whole dataset first,
  // then score with cross-clip neighbors attached.
  bool two_pass_bank = false;
  // Simulate detector output: boxes are shifted a little and get a noisy
  // confidence; boxes under conf_threshold are discarded. Scores are always
  // confidence times probability, which in ground-truth mode (confidence 1)
  // is the probability itself.
  bool detector_jitter = false;
  double conf_threshold = 0.8;
  std::uint64_t seed = 9;
};

std::vector<std::string> dataset_categories(const SynthConfig& cfg);

// Eval-mode features of every clip, stored under (video, time).
template <typename S>
void fill_bank(const HeadModel<S>& model, const SynthDataset<S>& ds, MemoryBank<S>& bank);

// Per-actor fused scores and ground-truth labels over the given scene indices.
template <typename S>
EvalInputs collect_eval_inputs(const HeadModel<S>& model, const SynthDataset<S>& ds,
                               std::span<const std::size_t> indices,
                               const EvalOptions& opt, MemoryBank<S>* bank = nullptr);

template <typename S>
EvalReport evaluate_model(const HeadModel<S>& model, const SynthDataset<S>& ds,
                          std::span<const std::size_t> indices, const EvalOptions& opt);

}  // namespace vad
