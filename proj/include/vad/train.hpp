#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "vad/interaction.hpp"
#include "vad/model.hpp"
#include "vad/synth.hpp"

namespace vad {

struct OptimConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-7;
  std::size_t warmup_steps = 20;              // linear ramp over the first steps
  std::vector<std::size_t> milestones;        // steps after which lr is scaled
  double milestone_gamma = 0.1;
};

void validate_optim_config(const OptimConfig& cfg);

// SGD with Nesterov momentum in the formulation where the whole update,
// weight decay included, is scaled by the learning rate: lr 0 leaves every
// parameter bit-identical.
//   g <- grad + wd * p;  v <- mu * v + g;  p <- p - lr * (g + mu * v)
template <typename S>
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Parameter<S>>& params, OptimConfig cfg);

  // 1-based step numbering: the first call to step() applies lr_at(1).
  double lr_at(std::size_t step) const;
  void zero_grad();
  void step();
  std::size_t steps_done() const { return steps_; }

 private:
  std::vector<Parameter<S>>* params_;
  OptimConfig cfg_;
  std::vector<std::vector<S>> velocity_;
  std::size_t steps_ = 0;
};

// Training loss for one batch of clips: per actor the mean binary
// cross-entropy over classes, summed over a clip's actors, averaged over the
// batch's non-empty clips.
template <typename S>
Tensor<S> clip_loss(const Tensor<S>& probs, const std::vector<std::vector<int>>& labels,
                    std::size_t n_labels);

struct TrainConfig {
  std::size_t steps = 600;
  std::size_t batch_clips = 4;
  OptimConfig optim;
  std::uint64_t seed = 1;
  bool bank_training = false;  // refresh a neighbor bank each epoch
  std::size_t log_every = 50;
};

struct TrainResult {
  std::vector<double> losses;  // one entry per step
  double final_loss = 0.0;
  std::size_t steps = 0;
};

// Runs SGD over the dataset's training split. With bank_training the bank is
// rebuilt at each epoch start from eval-mode features of every training clip,
// and batches query it for cross-clip neighbors. log, when given, receives
// CSV rows (step, lr, loss). Numerical blow-ups surface as DivergenceError.
template <typename S>
TrainResult train_model(HeadModel<S>& model, const SynthDataset<S>& ds,
                        const TrainConfig& tc, MemoryBank<S>* bank = nullptr,
                        std::ostream* log = nullptr);

}  // namespace vad
