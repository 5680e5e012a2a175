#pragma once

#include <string>
#include <vector>

#include "vad/tensor.hpp"

namespace vad {

// Backbone-style feature volume, channels x frames x height x width.
template <typename S>
class FeatureMap {
 public:
  explicit FeatureMap(Tensor<S> values);

  const Tensor<S>& values() const { return values_; }
  std::size_t channels() const { return values_.dim(0); }
  std::size_t frames() const { return values_.dim(1); }
  std::size_t height() const { return values_.dim(2); }
  std::size_t width() const { return values_.dim(3); }

 private:
  Tensor<S> values_;
};

// Detection box in normalized [0, 1] coordinates.
struct ActorBox {
  int id = 0;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double confidence = 1.0;
};

// Throws GeometryError unless x1 < x2, y1 < y2 and all coordinates are finite.
void validate_box(const ActorBox& box);

template <typename S>
struct ActorFeatures {
  Tensor<S> local;  // [N x c x h x w], reduced RoI grid per actor
  Tensor<S> roi;    // [N x c], spatial max of local
};

template <typename S>
struct TemporalContext {
  Tensor<S> local;   // [c x T], per-frame context
  Tensor<S> global;  // [c], temporal mean of local
};

// Per-frame 2-D RoIAlign over the whole temporal extent: the box is applied
// to every frame. Each output cell averages a 2x2 grid of bilinear samples.
// Cell (r, c) of the map sits at continuous coordinate (c + 0.5, r + 0.5);
// samples outside the map are clamped to the border. The box is clamped to
// [0, 1] first; a box with no area left afterwards is a GeometryError.
template <typename S>
Tensor<S> roi_align_3d(const FeatureMap<S>& map, const ActorBox& box,
                       std::size_t out_h = 7, std::size_t out_w = 7);

// Channel-wise spatial max of every frame, before any learned reduction.
template <typename S>
Tensor<S> spatial_max_per_frame(const FeatureMap<S>& map);

// Per actor: RoIAlign, temporal mean, then the learned channel reduction
// (reduce_w [c x C], reduce_b [c]) giving the local grid; the RoI vector is
// the spatial max of the reduced grid. N = 0 boxes yields empty tensors.
template <typename S>
ActorFeatures<S> extract_actor_features(const FeatureMap<S>& map,
                                        std::span<const ActorBox> boxes,
                                        const Tensor<S>& reduce_w,
                                        const Tensor<S>& reduce_b,
                                        std::size_t out_h, std::size_t out_w);

// Spatial max per frame followed by the same channel reduction; the global
// context is the temporal mean of the per-frame columns.
template <typename S>
TemporalContext<S> preprocess_context(const FeatureMap<S>& map,
                                      const Tensor<S>& reduce_w,
                                      const Tensor<S>& reduce_b);

// Tiny fixed two-layer 3x3 convolutional encoder applied per frame. Weights
// are drawn deterministically from the seed; this stands in for a real video
// backbone when generating feature maps from raw synthetic videos.
template <typename S>
FeatureMap<S> toy_encoder(const Tensor<S>& raw, std::size_t out_channels,
                          std::uint64_t seed);

// One clip on disk: a feature-map tensor file plus a JSON sidecar carrying the
// video id, clip timestamp and per-box label lists.
template <typename S>
struct ClipData {
  Tensor<S> features;  // [C x T x H x W]
  std::vector<ActorBox> boxes;
  std::vector<std::vector<int>> labels;  // per box, class ids
  std::string video_id;
  int clip_time_s = 0;
};

// Writes base + ".cten" and base + ".json".
template <typename S>
void save_clip(const std::string& base_path, const ClipData<S>& clip);

// Loads from the ".cten" path (or the bare base path); the sidecar must sit
// next to it.
template <typename S>
ClipData<S> load_clip(const std::string& cten_path);

}  // namespace vad
