#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vad/cycle.hpp"
#include "vad/frontend.hpp"
#include "vad/interaction.hpp"
#include "vad/tensor.hpp"

namespace vad {

struct ModelConfig {
  std::size_t raw_channels = 48;  // incoming feature-map channels
  std::size_t n_labels = 8;
  std::size_t roi_size = 3;       // RoI grid side for actor features
  std::size_t frames = 8;         // clip length the position table is sized for
  std::size_t interact_depth = 2;
  CycleConfig cycle;              // relation head: channels, depth, branches, mode
};

void validate_model_config(const ModelConfig& cfg);

// The full per-clip head: channel reduction, actor/context extraction, the
// relation head, instance refinement against clip and bank neighbors, and the
// multi-label classifier. Owns every trainable tensor and hands out a flat
// named parameter list for the optimizer and for checkpoints.
template <typename S>
class HeadModel {
 public:
  HeadModel(const ModelConfig& cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter<S>>& parameters() { return params_; }
  const std::vector<Parameter<S>>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  struct ClipResult {
    Tensor<S> probs;     // [N x n_labels]
    Tensor<S> features;  // [N x c] refined instance features (bank payload)
    std::vector<int> actor_ids;
    CycleOutputs<S> relation;
  };

  // bank holds already-gathered neighbor entries; pass empty for none.
  ClipResult forward(const ClipData<S>& clip, const std::vector<BankEntry<S>>& bank,
                     Rng& rng, bool training, CycleTrace<S>* trace = nullptr) const;

  void save(const std::filesystem::path& dir) const;
  static HeadModel load(const std::filesystem::path& dir);

 private:
  void register_params();

  ModelConfig cfg_;
  Tensor<S> reduce_w_, reduce_b_;
  CycleParams<S> cycle_;
  InteractionParams<S> interact_;
  ClassifierParams<S> classifier_;
  std::vector<Parameter<S>> params_;
};

ModelConfig model_config_from_json_file(const std::filesystem::path& path);

}  // namespace vad
