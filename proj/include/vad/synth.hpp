#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vad/frontend.hpp"
#include "vad/tensor.hpp"

namespace vad {

// Synthetic scene generator. A scene is a raw feature volume [C x T x H x W]
// over a cell grid: each actor occupies a rectangular box carrying one of
// n_patterns pattern embeddings in every frame, and context tokens occupy
// small blocks strictly outside every box, painted only during their phase
// (first or second half of the frames). The background is Gaussian noise.
//
// Token j's embedding is pattern j's embedding scaled up, so a token is
// recognizable only by matching scene content against an actor's own
// appearance: most labels ask whether the token tied to the actor's own
// pattern (or a pattern shifted from it) shows up outside the boxes, which no
// per-class channel detector can answer without conditioning on the actor.
// Per-actor labels follow a fixed rule table over patterns, tokens, phases,
// and the other actors present, so ground truth is exact by construction.
struct SynthConfig {
  std::size_t grid_h = 16, grid_w = 16;
  std::size_t frames = 8;
  std::size_t raw_channels = 48;
  std::size_t n_patterns = 4;
  std::size_t n_tokens = 4;
  std::size_t min_actors = 1, max_actors = 3;
  std::size_t min_box_cells = 3, max_box_cells = 5;
  std::size_t token_block = 2;        // token side length in cells
  double token_presence_prob = 0.5;
  double noise_std = 0.02;
  // Cross-clip variant: videos of clips_per_video consecutive clips. A fair
  // coin per video decides whether a designated token shows up in the video's
  // first clip; one label tracks that coin for every actor in the video, so
  // every later clip can only be scored right by remembering neighbors.
  bool cross_clip = false;
  std::size_t clips_per_video = 4;
  std::uint64_t seed = 1;
};

void validate_synth_config(const SynthConfig& cfg);

constexpr std::size_t kSynthLabels = 8;

// Label ids, for an actor whose own pattern is p:
//   0 own pattern is 0                    (pose)
//   1 own pattern is 1                    (pose)
//   2 token p present in phase 0          (object)
//   3 token p present in phase 1          (object)
//   4 token p present in either phase     (object)
//   5 token (p+1) mod 4 present           (object)
//   6 another actor also has pattern p    (person)
//   7 own pattern 1 and another actor has pattern 2 (person);
//     cross-clip: the video coin          (memory)
std::string label_category(const SynthConfig& cfg, std::size_t label);

template <typename S>
struct Embeddings {
  Tensor<S> patterns;  // [n_patterns x C]
  Tensor<S> tokens;    // [n_tokens x C]
};

// Dense positive embeddings derived from cfg.seed alone, so every clip of a
// dataset shares one table.
template <typename S>
Embeddings<S> make_embeddings(const SynthConfig& cfg);

struct ActorPlacement {
  int actor_id = 0;
  std::size_t pattern = 0;
  std::size_t y = 0, x = 0, h = 0, w = 0;  // cells
};

struct TokenPlacement {
  std::size_t token = 0;
  std::size_t phase = 0;  // 0 = first half of frames, 1 = second half
  std::size_t y = 0, x = 0;
};

struct SceneDesc {
  std::vector<ActorPlacement> actors;
  std::vector<TokenPlacement> tokens;
  bool bank_coin = false;
  std::size_t clip_in_video = 0;
};

template <typename S>
struct SynthScene {
  ClipData<S> clip;
  SceneDesc desc;
};

// Per-actor labels derived from the scene description by the rule table.
std::vector<std::vector<int>> labels_for(const SynthConfig& cfg, const SceneDesc& desc);

template <typename S>
struct SynthDataset {
  SynthConfig cfg;
  Embeddings<S> emb;
  std::vector<SynthScene<S>> scenes;
  std::vector<std::size_t> train_indices, val_indices;
};

// Flat mode: n_units independent single-clip videos. Cross-clip mode:
// n_units videos of cfg.clips_per_video clips each. Clip content depends only
// on (seed, unit index, clip index), not on generation order. The split is
// exactly one fifth validation, by clip in flat mode and by whole video in
// cross-clip mode.
template <typename S>
SynthDataset<S> generate_dataset(const SynthConfig& cfg, std::size_t n_units);

// Regenerate a single scene; used by audits.
template <typename S>
SynthScene<S> generate_scene(const SynthConfig& cfg, const Embeddings<S>& emb,
                             std::size_t video_index, std::size_t clip_index);

template <typename S>
void save_dataset(const SynthDataset<S>& ds, const std::filesystem::path& dir);

template <typename S>
SynthDataset<S> load_dataset(const std::filesystem::path& dir);

}  // namespace vad
