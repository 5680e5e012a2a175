#include "vad/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vad {

void validate_optim_config(const OptimConfig& cfg) {
  if (!(cfg.lr >= 0.0)) throw ConfigError("learning rate must be nonnegative");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw ConfigError("momentum must lie in [0, 1)");
  if (!(cfg.weight_decay >= 0.0)) throw ConfigError("weight decay must be nonnegative");
  if (!(cfg.milestone_gamma > 0.0 && cfg.milestone_gamma <= 1.0))
    throw ConfigError("milestone_gamma must lie in (0, 1]");
  for (std::size_t i = 1; i < cfg.milestones.size(); ++i)
    if (cfg.milestones[i] <= cfg.milestones[i - 1])
      throw ConfigError("milestones must be strictly increasing");
}

template <typename S>
SgdOptimizer<S>::SgdOptimizer(std::vector<Parameter<S>>& params, OptimConfig cfg)
    : params_(&params), cfg_(std::move(cfg)) {
  validate_optim_config(cfg_);
  velocity_.reserve(params.size());
  for (const auto& p : params) velocity_.emplace_back(p.tensor.numel(), S(0));
}

template <typename S>
double SgdOptimizer<S>::lr_at(std::size_t step) const {
  if (step == 0) throw ParameterError("steps are numbered from 1");
  double lr = cfg_.lr;
  if (cfg_.warmup_steps > 0 && step <= cfg_.warmup_steps)
    lr *= static_cast<double>(step) / static_cast<double>(cfg_.warmup_steps);
  for (std::size_t m : cfg_.milestones)
    if (step > m) lr *= cfg_.milestone_gamma;
  return lr;
}

template <typename S>
void SgdOptimizer<S>::zero_grad() {
  for (auto& p : *params_) p.tensor.zero_grad();
}

template <typename S>
void SgdOptimizer<S>::step() {
  ++steps_;
  const S lr = static_cast<S>(lr_at(steps_));
  const S mu = static_cast<S>(cfg_.momentum);
  const S wd = static_cast<S>(cfg_.weight_decay);
  for (std::size_t pi = 0; pi < params_->size(); ++pi) {
    auto& p = (*params_)[pi];
    auto vals = p.tensor.mutable_data();
    auto grad = p.tensor.grad();
    if (grad.empty()) continue;  // parameter untouched by this loss
    auto& vel = velocity_[pi];
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const S g = grad[i] + wd * vals[i];
      vel[i] = mu * vel[i] + g;
      vals[i] -= lr * (g + mu * vel[i]);
    }
  }
}

template <typename S>
Tensor<S> clip_loss(const Tensor<S>& probs, const std::vector<std::vector<int>>& labels,
                    std::size_t n_labels) {
  if (probs.rank() != 2 || probs.dim(1) != n_labels)
    throw DimensionError("probabilities must be [N x n_labels]");
  if (probs.dim(0) != labels.size())
    throw DimensionError("one label list per actor is required");
  const std::size_t n = probs.dim(0);
  std::vector<S> targets(n * n_labels, S(0));
  for (std::size_t i = 0; i < n; ++i)
    for (int id : labels[i]) {
      if (id < 0 || std::size_t(id) >= n_labels)
        throw ParameterError("label id out of range");
      targets[i * n_labels + std::size_t(id)] = S(1);
    }
  Tensor<S> target = Tensor<S>::from_data({n, n_labels}, std::move(targets));
  Tensor<S> bce = binary_cross_entropy(probs, target);
  // mean over classes per actor, summed over the clip's actors
  return scale(sum_all(bce), S(1) / static_cast<S>(n_labels));
}

template <typename S>
TrainResult train_model(HeadModel<S>& model, const SynthDataset<S>& ds,
                        const TrainConfig& tc, MemoryBank<S>* bank, std::ostream* log) {
  if (tc.steps == 0) throw ConfigError("training needs at least one step");
  if (tc.batch_clips == 0) throw ConfigError("batch_clips must be positive");
  if (ds.train_indices.empty()) throw ConfigError("dataset has no training split");
  if (tc.bank_training && bank == nullptr)
    throw ConfigError("bank_training requires a memory bank");

  Rng base(tc.seed);
  Rng dropout_rng = base.derive(0xd80);
  const std::size_t n_labels = model.config().n_labels;

  SgdOptimizer<S> opt(model.parameters(), tc.optim);
  TrainResult result;
  if (log) *log << "step,lr,loss\n";

  std::vector<std::size_t> schedule;
  std::size_t cursor = 0, epoch = 0;
  auto refill_schedule = [&]() {
    schedule = ds.train_indices;
    Rng shuffle_rng = base.derive(0x5408 + epoch);
    // Fisher-Yates with the project rng so runs are reproducible
    for (std::size_t i = schedule.size(); i > 1; --i)
      std::swap(schedule[i - 1], schedule[shuffle_rng.integer(i)]);
    cursor = 0;
    if (tc.bank_training) {
      bank->clear();
      Rng pass_rng(0);
      for (std::size_t idx : ds.train_indices) {
        const auto& clip = ds.scenes[idx].clip;
        auto res = model.forward(clip, {}, pass_rng, /*training=*/false);
        std::vector<int> ids = res.actor_ids;
        bank->store_clip(clip.video_id, std::uint32_t(clip.clip_time_s),
                         std::span<const int>(ids), res.features);
      }
    }
    ++epoch;
  };
  refill_schedule();

  for (std::size_t step = 1; step <= tc.steps; ++step) {
    opt.zero_grad();
    Tensor<S> total;
    std::size_t used = 0;
    try {
      for (std::size_t b = 0; b < tc.batch_clips; ++b) {
        if (cursor >= schedule.size()) refill_schedule();
        const auto& scene = ds.scenes[schedule[cursor++]];
        if (scene.clip.boxes.empty()) continue;
        std::vector<BankEntry<S>> neighbors;
        if (tc.bank_training)
          neighbors = bank->neighbors(scene.clip.video_id,
                                      std::uint32_t(scene.clip.clip_time_s));
        auto res = model.forward(scene.clip, neighbors, dropout_rng, /*training=*/true);
        Tensor<S> loss = clip_loss(res.probs, scene.clip.labels, n_labels);
        total = total.defined() ? add(total, loss) : loss;
        ++used;
      }
      if (used == 0) throw ContractError("batch contained no actors");
      Tensor<S> loss = scale(total, S(1) / static_cast<S>(used));
      backward(loss);
      result.losses.push_back(static_cast<double>(loss.item()));
      opt.step();
    } catch (const NumericError& e) {
      throw DivergenceError("training diverged at step " + std::to_string(step) + ": " +
                            e.what());
    }
    if (log && (step % tc.log_every == 0 || step == tc.steps))
      *log << step << "," << opt.lr_at(step) << "," << result.losses.back() << "\n";
  }
  result.steps = tc.steps;
  result.final_loss = result.losses.back();
  return result;
}

#define VAD_INSTANTIATE_TRAIN(S)                                                       \
  template class SgdOptimizer<S>;                                                      \
  template Tensor<S> clip_loss<S>(const Tensor<S>&,                                    \
                                  const std::vector<std::vector<int>>&, std::size_t);  \
  template TrainResult train_model<S>(HeadModel<S>&, const SynthDataset<S>&,           \
                                      const TrainConfig&, MemoryBank<S>*,              \
                                      std::ostream*);

VAD_INSTANTIATE_TRAIN(float)
VAD_INSTANTIATE_TRAIN(double)

#undef VAD_INSTANTIATE_TRAIN

}  // namespace vad
