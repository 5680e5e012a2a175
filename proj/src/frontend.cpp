#include "vad/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "vad/serialize.hpp"

namespace vad {

namespace {

using nlohmann::json;

template <typename S>
void require_reduction(const Tensor<S>& w, const Tensor<S>& b, std::size_t channels) {
  if (w.rank() != 2 || w.dim(1) != channels) {
    throw DimensionError("channel reduction: weight " + shape_str(w.shape()) +
                         " does not map " + std::to_string(channels) + " channels");
  }
  if (b.rank() != 1 || b.dim(0) != w.dim(0)) {
    throw DimensionError("channel reduction: bias " + shape_str(b.shape()) +
                         " does not match " + std::to_string(w.dim(0)) + " outputs");
  }
}

// Bilinear lookup at continuous coordinate (y, x) with border replication.
template <typename S>
S bilinear(const S* plane, std::size_t h, std::size_t w, double y, double x) {
  double u = y - 0.5;
  double v = x - 0.5;
  u = std::clamp(u, 0.0, static_cast<double>(h - 1));
  v = std::clamp(v, 0.0, static_cast<double>(w - 1));
  const std::size_t y0 = static_cast<std::size_t>(u);
  const std::size_t x0 = static_cast<std::size_t>(v);
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const double ly = u - static_cast<double>(y0);
  const double lx = v - static_cast<double>(x0);
  const double top = (1.0 - lx) * plane[y0 * w + x0] + lx * plane[y0 * w + x1];
  const double bot = (1.0 - lx) * plane[y1 * w + x0] + lx * plane[y1 * w + x1];
  return static_cast<S>((1.0 - ly) * top + ly * bot);
}

}  // namespace

template <typename S>
FeatureMap<S>::FeatureMap(Tensor<S> values) : values_(std::move(values)) {
  if (values_.rank() != 4) {
    throw DimensionError("FeatureMap: expected [C x T x H x W], got " +
                         shape_str(values_.shape()));
  }
  const Shape& s = values_.shape();
  if (s[0] < 1 || s[1] < 1 || s[2] < 2 || s[3] < 2) {
    throw DimensionError("FeatureMap: need C,T >= 1 and H,W >= 2, got " + shape_str(s));
  }
  for (S v : values_.data()) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError("FeatureMap: non-finite value");
    }
  }
}

void validate_box(const ActorBox& box) {
  const double coords[] = {box.x1, box.y1, box.x2, box.y2, box.confidence};
  for (double c : coords) {
    if (!std::isfinite(c)) {
      throw GeometryError("box: non-finite coordinate");
    }
  }
  if (!(box.x1 < box.x2) || !(box.y1 < box.y2)) {
    throw GeometryError("box: requires x1 < x2 and y1 < y2, got (" +
                        std::to_string(box.x1) + ", " + std::to_string(box.y1) + ", " +
                        std::to_string(box.x2) + ", " + std::to_string(box.y2) + ")");
  }
}

template <typename S>
Tensor<S> roi_align_3d(const FeatureMap<S>& map, const ActorBox& box, std::size_t out_h,
                       std::size_t out_w) {
  validate_box(box);
  if (out_h == 0 || out_w == 0) {
    throw ParameterError("roi_align_3d: output grid must be nonempty");
  }
  const std::size_t C = map.channels(), T = map.frames(), H = map.height(),
                    W = map.width();
  const double x1 = std::clamp(box.x1, 0.0, 1.0) * static_cast<double>(W);
  const double x2 = std::clamp(box.x2, 0.0, 1.0) * static_cast<double>(W);
  const double y1 = std::clamp(box.y1, 0.0, 1.0) * static_cast<double>(H);
  const double y2 = std::clamp(box.y2, 0.0, 1.0) * static_cast<double>(H);
  if (x2 - x1 <= 0.0 || y2 - y1 <= 0.0) {
    throw GeometryError("roi_align_3d: box has no area inside the map");
  }
  const double bin_h = (y2 - y1) / static_cast<double>(out_h);
  const double bin_w = (x2 - x1) / static_cast<double>(out_w);

  std::vector<S> out(C * T * out_h * out_w);
  const auto md = map.values().data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) {
      const S* plane = md.data() + (c * T + t) * H * W;
      for (std::size_t ph = 0; ph < out_h; ++ph) {
        for (std::size_t pw = 0; pw < out_w; ++pw) {
          double acc = 0.0;
          for (int sy = 0; sy < 2; ++sy) {
            for (int sx = 0; sx < 2; ++sx) {
              const double y = y1 + (static_cast<double>(ph) + (sy + 0.5) / 2.0) * bin_h;
              const double x = x1 + (static_cast<double>(pw) + (sx + 0.5) / 2.0) * bin_w;
              acc += static_cast<double>(bilinear(plane, H, W, y, x));
            }
          }
          out[((c * T + t) * out_h + ph) * out_w + pw] = static_cast<S>(acc / 4.0);
        }
      }
    }
  }
  return Tensor<S>::from_data({C, T, out_h, out_w}, std::move(out));
}

template <typename S>
Tensor<S> spatial_max_per_frame(const FeatureMap<S>& map) {
  const std::size_t C = map.channels(), T = map.frames(), H = map.height(),
                    W = map.width();
  std::vector<S> out(C * T);
  const auto md = map.values().data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) {
      const S* plane = md.data() + (c * T + t) * H * W;
      S mx = plane[0];
      for (std::size_t i = 1; i < H * W; ++i) {
        mx = std::max(mx, plane[i]);
      }
      out[c * T + t] = mx;
    }
  }
  return Tensor<S>::from_data({C, T}, std::move(out));
}

template <typename S>
ActorFeatures<S> extract_actor_features(const FeatureMap<S>& map,
                                        std::span<const ActorBox> boxes,
                                        const Tensor<S>& reduce_w,
                                        const Tensor<S>& reduce_b, std::size_t out_h,
                                        std::size_t out_w) {
  require_reduction(reduce_w, reduce_b, map.channels());
  const std::size_t c = reduce_w.dim(0);
  if (boxes.empty()) {
    return {Tensor<S>::zeros({0, c, out_h, out_w}), Tensor<S>::zeros({0, c})};
  }
  std::vector<Tensor<S>> locals, rois;
  for (const ActorBox& box : boxes) {
    auto aligned = roi_align_3d(map, box, out_h, out_w);       // [C,T,h,w]
    auto pooled = reduce_mean(aligned, 1);                     // [C,h,w]
    auto flat = reshape(pooled, {map.channels(), out_h * out_w});
    auto reduced = add_colvec(matmul(reduce_w, flat), reduce_b);  // [c, h*w]
    locals.push_back(reshape(reduced, {1, c, out_h, out_w}));
    rois.push_back(reshape(reduce_max(reduced, 1), {1, c}));
  }
  return {concat<S>(0, std::span<const Tensor<S>>(locals)),
          concat<S>(0, std::span<const Tensor<S>>(rois))};
}

template <typename S>
TemporalContext<S> preprocess_context(const FeatureMap<S>& map, const Tensor<S>& reduce_w,
                                      const Tensor<S>& reduce_b) {
  require_reduction(reduce_w, reduce_b, map.channels());
  auto frame_max = spatial_max_per_frame(map);                       // [C, T]
  auto local = add_colvec(matmul(reduce_w, frame_max), reduce_b);    // [c, T]
  auto global = reduce_mean(local, 1);                               // [c]
  return {std::move(local), std::move(global)};
}

template <typename S>
FeatureMap<S> toy_encoder(const Tensor<S>& raw, std::size_t out_channels,
                          std::uint64_t seed) {
  if (raw.rank() != 4) {
    throw DimensionError("toy_encoder: expected [C x T x H x W], got " +
                         shape_str(raw.shape()));
  }
  const std::size_t C = raw.dim(0), T = raw.dim(1), H = raw.dim(2), W = raw.dim(3);
  Rng rng(splitmix64(seed ^ 0x746f79656e63ULL));
  const auto conv = [&](const std::vector<S>& in, std::size_t cin, std::size_t cout) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * 9));
    std::vector<S> weight(cout * cin * 9);
    for (auto& v : weight) v = static_cast<S>(rng.uniform(-bound, bound));
    std::vector<S> bias(cout);
    for (auto& v : bias) v = static_cast<S>(rng.uniform(-bound, bound));
    std::vector<S> out(cout * T * H * W, S(0));
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t y = 0; y < H; ++y) {
          for (std::size_t x = 0; x < W; ++x) {
            double acc = bias[co];
            for (std::size_t ci = 0; ci < cin; ++ci) {
              for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                  const long yy = static_cast<long>(y) + dy;
                  const long xx = static_cast<long>(x) + dx;
                  if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) ||
                      xx >= static_cast<long>(W)) {
                    continue;
                  }
                  const S v = in[((ci * T + t) * H + yy) * W + xx];
                  acc += v * weight[((co * cin + ci) * 3 + (dy + 1)) * 3 + (dx + 1)];
                }
              }
            }
            out[((co * T + t) * H + y) * W + x] = static_cast<S>(std::max(acc, 0.0));
          }
        }
      }
    }
    return out;
  };
  std::vector<S> raw_copy(raw.data().begin(), raw.data().end());
  auto mid = conv(raw_copy, C, out_channels);
  auto out = conv(mid, out_channels, out_channels);
  return FeatureMap<S>(Tensor<S>::from_data({out_channels, T, H, W}, std::move(out)));
}

// --- clip files ------------------------------------------------------------

namespace {

std::string sidecar_path(const std::string& cten_path) {
  std::string base = cten_path;
  if (base.size() > 5 && base.ends_with(".cten")) {
    base.resize(base.size() - 5);
  }
  return base + ".json";
}

std::string tensor_path(const std::string& path) {
  if (path.ends_with(".cten")) {
    return path;
  }
  return path + ".cten";
}

}  // namespace

template <typename S>
void save_clip(const std::string& base_path, const ClipData<S>& clip) {
  if (clip.boxes.size() != clip.labels.size()) {
    throw DimensionError("save_clip: " + std::to_string(clip.boxes.size()) +
                         " boxes but " + std::to_string(clip.labels.size()) +
                         " label lists");
  }
  for (const auto& box : clip.boxes) {
    validate_box(box);
  }
  save_tensor(tensor_path(base_path), clip.features);
  json boxes = json::array();
  for (std::size_t i = 0; i < clip.boxes.size(); ++i) {
    const ActorBox& b = clip.boxes[i];
    boxes.push_back({{"id", b.id},
                     {"x1", b.x1},
                     {"y1", b.y1},
                     {"x2", b.x2},
                     {"y2", b.y2},
                     {"confidence", b.confidence},
                     {"labels", clip.labels[i]}});
  }
  json side = {{"video_id", clip.video_id},
               {"clip_time_s", clip.clip_time_s},
               {"boxes", boxes}};
  std::ofstream os(sidecar_path(tensor_path(base_path)));
  if (!os) {
    throw FormatError("cannot write sidecar for " + base_path);
  }
  os << side.dump(2) << "\n";
}

template <typename S>
ClipData<S> load_clip(const std::string& cten_path) {
  ClipData<S> clip;
  clip.features = load_tensor<S>(tensor_path(cten_path));
  std::ifstream is(sidecar_path(tensor_path(cten_path)));
  if (!is) {
    throw FormatError("missing sidecar for " + cten_path);
  }
  json side;
  try {
    is >> side;
  } catch (const json::exception& e) {
    throw FormatError("bad clip sidecar " + sidecar_path(cten_path) + ": " + e.what());
  }
  clip.video_id = side.at("video_id").get<std::string>();
  clip.clip_time_s = side.at("clip_time_s").get<int>();
  for (const auto& jb : side.at("boxes")) {
    ActorBox b;
    b.id = jb.at("id").get<int>();
    b.x1 = jb.at("x1").get<double>();
    b.y1 = jb.at("y1").get<double>();
    b.x2 = jb.at("x2").get<double>();
    b.y2 = jb.at("y2").get<double>();
    b.confidence = jb.at("confidence").get<double>();
    validate_box(b);
    clip.boxes.push_back(b);
    clip.labels.push_back(jb.at("labels").get<std::vector<int>>());
  }
  return clip;
}

#define VAD_INSTANTIATE_FRONTEND(S)                                                   \
  template class FeatureMap<S>;                                                       \
  template Tensor<S> roi_align_3d(const FeatureMap<S>&, const ActorBox&, std::size_t, \
                                  std::size_t);                                       \
  template Tensor<S> spatial_max_per_frame(const FeatureMap<S>&);                     \
  template ActorFeatures<S> extract_actor_features(                                   \
      const FeatureMap<S>&, std::span<const ActorBox>, const Tensor<S>&,              \
      const Tensor<S>&, std::size_t, std::size_t);                                    \
  template TemporalContext<S> preprocess_context(const FeatureMap<S>&,                \
                                                 const Tensor<S>&, const Tensor<S>&); \
  template FeatureMap<S> toy_encoder(const Tensor<S>&, std::size_t, std::uint64_t);   \
  template void save_clip(const std::string&, const ClipData<S>&);                    \
  template ClipData<S> load_clip(const std::string&);

VAD_INSTANTIATE_FRONTEND(float)
VAD_INSTANTIATE_FRONTEND(double)

#undef VAD_INSTANTIATE_FRONTEND

}  // namespace vad
