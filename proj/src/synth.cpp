#include "vad/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace vad {

namespace {

using nlohmann::json;

constexpr std::size_t kBankToken = 4;
constexpr int kMaxPlaceAttempts = 1000;
constexpr double kTokenScale = 1.3;   // lifts tokens above the pattern value range
constexpr double kMarkerScale = 2.2;  // out-of-table tokens (the video coin) shout

struct CellRect {
  std::size_t y, x, h, w;
};

bool rects_overlap(const CellRect& a, const CellRect& b) {
  return a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h;
}

std::string format_index(const char* prefix, std::size_t idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%05zu", prefix, idx);
  return buf;
}

json config_to_json(const SynthConfig& cfg) {
  return json{{"grid_h", cfg.grid_h},
              {"grid_w", cfg.grid_w},
              {"frames", cfg.frames},
              {"raw_channels", cfg.raw_channels},
              {"n_patterns", cfg.n_patterns},
              {"n_tokens", cfg.n_tokens},
              {"min_actors", cfg.min_actors},
              {"max_actors", cfg.max_actors},
              {"min_box_cells", cfg.min_box_cells},
              {"max_box_cells", cfg.max_box_cells},
              {"token_block", cfg.token_block},
              {"token_presence_prob", cfg.token_presence_prob},
              {"noise_std", cfg.noise_std},
              {"cross_clip", cfg.cross_clip},
              {"clips_per_video", cfg.clips_per_video},
              {"seed", cfg.seed}};
}

SynthConfig config_from_json(const json& j) {
  SynthConfig cfg;
  cfg.grid_h = j.at("grid_h").get<std::size_t>();
  cfg.grid_w = j.at("grid_w").get<std::size_t>();
  cfg.frames = j.at("frames").get<std::size_t>();
  cfg.raw_channels = j.at("raw_channels").get<std::size_t>();
  cfg.n_patterns = j.at("n_patterns").get<std::size_t>();
  cfg.n_tokens = j.at("n_tokens").get<std::size_t>();
  cfg.min_actors = j.at("min_actors").get<std::size_t>();
  cfg.max_actors = j.at("max_actors").get<std::size_t>();
  cfg.min_box_cells = j.at("min_box_cells").get<std::size_t>();
  cfg.max_box_cells = j.at("max_box_cells").get<std::size_t>();
  cfg.token_block = j.at("token_block").get<std::size_t>();
  cfg.token_presence_prob = j.at("token_presence_prob").get<double>();
  cfg.noise_std = j.at("noise_std").get<double>();
  cfg.cross_clip = j.at("cross_clip").get<bool>();
  cfg.clips_per_video = j.at("clips_per_video").get<std::size_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

}  // namespace

void validate_synth_config(const SynthConfig& cfg) {
  if (cfg.grid_h < 4 || cfg.grid_w < 4) throw ConfigError("grid must be at least 4x4");
  if (cfg.frames < 2) throw ConfigError("need at least 2 frames for two phases");
  if (cfg.raw_channels == 0) throw ConfigError("raw_channels must be positive");
  if (cfg.n_patterns < 4) throw ConfigError("the rule table references patterns 0..3");
  if (cfg.n_tokens < 4) throw ConfigError("the rule table references tokens 0..3");
  if (cfg.cross_clip && cfg.n_tokens <= kBankToken)
    throw ConfigError("cross-clip mode needs n_tokens > 4 for the video-coin token");
  if (cfg.min_actors == 0 || cfg.max_actors < cfg.min_actors)
    throw ConfigError("actor count range is empty");
  if (cfg.min_box_cells == 0 || cfg.max_box_cells < cfg.min_box_cells)
    throw ConfigError("box size range is empty");
  if (cfg.max_box_cells > cfg.grid_h || cfg.max_box_cells > cfg.grid_w)
    throw ConfigError("boxes cannot exceed the grid");
  if (cfg.token_block == 0 || cfg.token_block > cfg.grid_h || cfg.token_block > cfg.grid_w)
    throw ConfigError("token_block must fit the grid");
  if (!(cfg.token_presence_prob >= 0.0 && cfg.token_presence_prob <= 1.0))
    throw ConfigError("token_presence_prob must lie in [0, 1]");
  if (cfg.noise_std < 0.0) throw ConfigError("noise_std must be nonnegative");
  if (cfg.cross_clip && cfg.clips_per_video < 2)
    throw ConfigError("cross-clip videos need at least 2 clips");
}

std::string label_category(const SynthConfig& cfg, std::size_t label) {
  switch (label) {
    case 0:
    case 1:
      return "pose";
    case 2:
    case 3:
    case 4:
    case 5:
      return "object";
    case 6:
      return "person";
    case 7:
      return cfg.cross_clip ? "memory" : "person";
    default:
      throw ParameterError("label id out of range");
  }
}

std::vector<std::vector<int>> labels_for(const SynthConfig& cfg, const SceneDesc& desc) {
  auto token_in_phase = [&](std::size_t k, std::size_t phase) {
    for (const auto& t : desc.tokens)
      if (t.token == k && t.phase == phase) return true;
    return false;
  };
  auto token_any = [&](std::size_t k) {
    for (const auto& t : desc.tokens)
      if (t.token == k) return true;
    return false;
  };
  auto other_has = [&](std::size_t self, std::size_t pattern) {
    for (std::size_t j = 0; j < desc.actors.size(); ++j)
      if (j != self && desc.actors[j].pattern == pattern) return true;
    return false;
  };

  std::vector<std::vector<int>> out(desc.actors.size());
  for (std::size_t i = 0; i < desc.actors.size(); ++i) {
    const std::size_t p = desc.actors[i].pattern;
    std::vector<int>& l = out[i];
    if (p == 0) l.push_back(0);
    if (p == 1) l.push_back(1);
    if (token_in_phase(p, 0)) l.push_back(2);
    if (token_in_phase(p, 1)) l.push_back(3);
    if (token_any(p)) l.push_back(4);
    if (token_any((p + 1) % 4)) l.push_back(5);
    if (other_has(i, p)) l.push_back(6);
    const bool l7 = cfg.cross_clip ? desc.bank_coin : (p == 1 && other_has(i, 2));
    if (l7) l.push_back(7);
  }
  return out;
}

template <typename S>
Embeddings<S> make_embeddings(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  Rng base(cfg.seed);
  Rng rng = base.derive(0xe0bULL);
  const std::size_t c = cfg.raw_channels;
  auto draw = [&](std::size_t n) {
    std::vector<S> vals(n * c);
    for (auto& v : vals) v = static_cast<S>(0.3 + 0.7 * rng.uniform());
    return Tensor<S>::from_data({n, c}, std::move(vals));
  };
  Embeddings<S> e;
  e.patterns = draw(cfg.n_patterns);
  // Token j is its pattern's embedding scaled past the pattern range, so it
  // wins the spatial max wherever its pattern is strong and stays identifiable
  // only relative to that pattern. Tokens beyond the pattern table (the
  // cross-clip coin marker in particular) get independent embeddings at the
  // same scale.
  Tensor<S> extra = draw(cfg.n_tokens);
  std::vector<S> tok(cfg.n_tokens * c);
  for (std::size_t j = 0; j < cfg.n_tokens; ++j) {
    const bool linked = j < cfg.n_patterns;
    const auto src = linked ? e.patterns.data() : extra.data();
    const double scale = linked ? kTokenScale : kMarkerScale;
    for (std::size_t ch = 0; ch < c; ++ch)
      tok[j * c + ch] = static_cast<S>(scale) * src[j * c + ch];
  }
  e.tokens = Tensor<S>::from_data({cfg.n_tokens, c}, std::move(tok));
  return e;
}

template <typename S>
SynthScene<S> generate_scene(const SynthConfig& cfg, const Embeddings<S>& emb,
                             std::size_t video_index, std::size_t clip_index) {
  validate_synth_config(cfg);
  if (cfg.cross_clip && clip_index >= cfg.clips_per_video)
    throw ParameterError("clip index exceeds clips_per_video");
  Rng base(cfg.seed);
  Rng rng = base.derive(0x5CE00000ULL + video_index * 4096 + clip_index);

  SynthScene<S> scene;
  SceneDesc& desc = scene.desc;
  desc.clip_in_video = clip_index;
  if (cfg.cross_clip)
    desc.bank_coin = base.derive(0xC0100000ULL + video_index).bernoulli(0.5);

  // actor boxes, non-overlapping
  const std::size_t n_actors =
      cfg.min_actors + rng.integer(cfg.max_actors - cfg.min_actors + 1);
  std::vector<CellRect> occupied;
  for (std::size_t i = 0; i < n_actors; ++i) {
    const std::size_t span = cfg.max_box_cells - cfg.min_box_cells + 1;
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlaceAttempts && !placed; ++attempt) {
      CellRect r;
      r.h = cfg.min_box_cells + rng.integer(span);
      r.w = cfg.min_box_cells + rng.integer(span);
      r.y = rng.integer(cfg.grid_h - r.h + 1);
      r.x = rng.integer(cfg.grid_w - r.w + 1);
      bool clash = false;
      for (const auto& o : occupied) clash = clash || rects_overlap(r, o);
      if (clash) continue;
      occupied.push_back(r);
      ActorPlacement a;
      a.actor_id = static_cast<int>(i);
      a.pattern = rng.integer(cfg.n_patterns);
      a.y = r.y;
      a.x = r.x;
      a.h = r.h;
      a.w = r.w;
      desc.actors.push_back(a);
      placed = true;
    }
    if (!placed)
      throw GenerationError("could not place actor boxes on the grid; it is too crowded");
  }

  // context tokens, outside every box and each other
  for (std::size_t k = 0; k < cfg.n_tokens; ++k) {
    bool present;
    if (cfg.cross_clip && k == kBankToken) {
      // the coin is directly visible only in a video's first clip; later clips
      // label it anyway, which is what makes neighbor features worth keeping
      present = clip_index == 0 && desc.bank_coin;
    } else {
      present = rng.bernoulli(cfg.token_presence_prob);
    }
    if (!present) continue;
    const std::size_t phase = rng.integer(2);
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlaceAttempts && !placed; ++attempt) {
      CellRect r{rng.integer(cfg.grid_h - cfg.token_block + 1),
                 rng.integer(cfg.grid_w - cfg.token_block + 1), cfg.token_block,
                 cfg.token_block};
      bool clash = false;
      for (const auto& o : occupied) clash = clash || rects_overlap(r, o);
      if (clash) continue;
      occupied.push_back(r);
      desc.tokens.push_back({k, phase, r.y, r.x});
      placed = true;
    }
    if (!placed)
      throw GenerationError("could not place context tokens outside the actor boxes");
  }

  // paint: noise base, pattern embeddings inside boxes in every frame, token
  // embeddings in their block during their phase
  const std::size_t C = cfg.raw_channels, T = cfg.frames;
  const std::size_t H = cfg.grid_h, W = cfg.grid_w;
  std::vector<S> canvas(C * T * H * W);
  for (auto& v : canvas) v = static_cast<S>(rng.normal(0.0, cfg.noise_std));
  auto cell = [&](std::size_t ch, std::size_t t, std::size_t y, std::size_t x) -> S& {
    return canvas[((ch * T + t) * H + y) * W + x];
  };
  for (const auto& a : desc.actors) {
    auto row = emb.patterns.data().subspan(a.pattern * C, C);
    for (std::size_t ch = 0; ch < C; ++ch)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t y = a.y; y < a.y + a.h; ++y)
          for (std::size_t x = a.x; x < a.x + a.w; ++x) cell(ch, t, y, x) += row[ch];
  }
  const std::size_t half = T / 2;
  for (const auto& tok : desc.tokens) {
    auto row = emb.tokens.data().subspan(tok.token * C, C);
    const std::size_t t0 = tok.phase == 0 ? 0 : half;
    const std::size_t t1 = tok.phase == 0 ? half : T;
    for (std::size_t ch = 0; ch < C; ++ch)
      for (std::size_t t = t0; t < t1; ++t)
        for (std::size_t y = tok.y; y < tok.y + cfg.token_block; ++y)
          for (std::size_t x = tok.x; x < tok.x + cfg.token_block; ++x)
            cell(ch, t, y, x) += row[ch];
  }

  ClipData<S>& clip = scene.clip;
  clip.features = Tensor<S>::from_data({C, T, H, W}, std::move(canvas));
  clip.video_id = cfg.cross_clip ? format_index("video_", video_index)
                                 : format_index("clip_", video_index);
  clip.clip_time_s = static_cast<int>(clip_index);
  for (const auto& a : desc.actors) {
    ActorBox box;
    box.id = a.actor_id;
    box.x1 = static_cast<double>(a.x) / static_cast<double>(W);
    box.y1 = static_cast<double>(a.y) / static_cast<double>(H);
    box.x2 = static_cast<double>(a.x + a.w) / static_cast<double>(W);
    box.y2 = static_cast<double>(a.y + a.h) / static_cast<double>(H);
    box.confidence = 1.0;
    clip.boxes.push_back(box);
  }
  clip.labels = labels_for(cfg, desc);
  return scene;
}

template <typename S>
SynthDataset<S> generate_dataset(const SynthConfig& cfg, std::size_t n_units) {
  validate_synth_config(cfg);
  if (n_units == 0) throw ParameterError("n_units must be positive");
  SynthDataset<S> ds;
  ds.cfg = cfg;
  ds.emb = make_embeddings<S>(cfg);
  const std::size_t per_unit = cfg.cross_clip ? cfg.clips_per_video : 1;
  for (std::size_t u = 0; u < n_units; ++u) {
    const bool val = u % 5 == 4;
    for (std::size_t ci = 0; ci < per_unit; ++ci) {
      (val ? ds.val_indices : ds.train_indices).push_back(ds.scenes.size());
      ds.scenes.push_back(generate_scene<S>(cfg, ds.emb, u, ci));
    }
  }
  return ds;
}

template <typename S>
void save_dataset(const SynthDataset<S>& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json descs = json::array();
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    save_clip((dir / format_index("clip_", i)).string(), ds.scenes[i].clip);
    const SceneDesc& d = ds.scenes[i].desc;
    json actors = json::array();
    for (const auto& a : d.actors)
      actors.push_back({{"id", a.actor_id},
                        {"pattern", a.pattern},
                        {"y", a.y},
                        {"x", a.x},
                        {"h", a.h},
                        {"w", a.w}});
    json tokens = json::array();
    for (const auto& t : d.tokens)
      tokens.push_back(
          {{"token", t.token}, {"phase", t.phase}, {"y", t.y}, {"x", t.x}});
    descs.push_back({{"actors", actors},
                     {"tokens", tokens},
                     {"bank_coin", d.bank_coin},
                     {"clip_in_video", d.clip_in_video}});
  }
  json manifest{{"config", config_to_json(ds.cfg)},
                {"n_scenes", ds.scenes.size()},
                {"train", ds.train_indices},
                {"val", ds.val_indices},
                {"descs", descs}};
  std::ofstream out(dir / "dataset.json");
  if (!out) throw FormatError("cannot write dataset manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

template <typename S>
SynthDataset<S> load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "dataset.json");
  if (!in) throw FormatError("no dataset manifest in " + dir.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad dataset manifest: ") + e.what());
  }
  SynthDataset<S> ds;
  try {
    ds.cfg = config_from_json(manifest.at("config"));
    ds.train_indices = manifest.at("train").get<std::vector<std::size_t>>();
    ds.val_indices = manifest.at("val").get<std::vector<std::size_t>>();
    const std::size_t n = manifest.at("n_scenes").get<std::size_t>();
    const json& descs = manifest.at("descs");
    if (descs.size() != n) throw FormatError("dataset manifest is inconsistent");
    for (std::size_t i = 0; i < n; ++i) {
      SynthScene<S> scene;
      scene.clip = load_clip<S>((dir / (format_index("clip_", i) + ".cten")).string());
      const json& d = descs.at(i);
      for (const auto& a : d.at("actors")) {
        ActorPlacement ap;
        ap.actor_id = a.at("id").get<int>();
        ap.pattern = a.at("pattern").get<std::size_t>();
        ap.y = a.at("y").get<std::size_t>();
        ap.x = a.at("x").get<std::size_t>();
        ap.h = a.at("h").get<std::size_t>();
        ap.w = a.at("w").get<std::size_t>();
        scene.desc.actors.push_back(ap);
      }
      for (const auto& t : d.at("tokens")) {
        TokenPlacement tp;
        tp.token = t.at("token").get<std::size_t>();
        tp.phase = t.at("phase").get<std::size_t>();
        tp.y = t.at("y").get<std::size_t>();
        tp.x = t.at("x").get<std::size_t>();
        scene.desc.tokens.push_back(tp);
      }
      scene.desc.bank_coin = d.at("bank_coin").get<bool>();
      scene.desc.clip_in_video = d.at("clip_in_video").get<std::size_t>();
      ds.scenes.push_back(std::move(scene));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad dataset manifest: ") + e.what());
  }
  ds.emb = make_embeddings<S>(ds.cfg);
  return ds;
}

#define VAD_INSTANTIATE_SYNTH(S)                                                       \
  template Embeddings<S> make_embeddings<S>(const SynthConfig&);                       \
  template SynthScene<S> generate_scene<S>(const SynthConfig&, const Embeddings<S>&,   \
                                           std::size_t, std::size_t);                  \
  template SynthDataset<S> generate_dataset<S>(const SynthConfig&, std::size_t);       \
  template void save_dataset<S>(const SynthDataset<S>&, const std::filesystem::path&); \
  template SynthDataset<S> load_dataset<S>(const std::filesystem::path&);

VAD_INSTANTIATE_SYNTH(float)
VAD_INSTANTIATE_SYNTH(double)

#undef VAD_INSTANTIATE_SYNTH

}  // namespace vad
