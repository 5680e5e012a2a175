#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vad/frontend.hpp"
#include "vad/tensor.hpp"

namespace vad {

// How actor and context exchange information in the relation head.
//   C2A:   actors attend over the raw shared context only.
//   A2C:   contexts are reorganized per actor, then aggregated with uniform
//          weights (average aggregation) instead of attention.
//   Cycle: reorganize per actor, then attend back from the actor (default).
enum class InteractionMode { C2A, A2C, Cycle };

enum class AttnWeights { Softmax, Uniform };

InteractionMode parse_interaction_mode(const std::string& s);
std::string to_string(InteractionMode mode);

// One attention block: q/k/v projections [c x d] and the output map [d x c].
template <typename S>
struct AttentionParams {
  Tensor<S> w_q, w_k, w_v;  // [c x d]
  Tensor<S> w_out;          // [d x c]
};

template <typename S>
AttentionParams<S> init_attention_params(std::size_t c, std::size_t d, Rng& rng);

// softmax((q W_q)(m W_k)^T / sqrt(d)) (m W_v), followed by a residual branch
// norm -> ReLU -> W_out -> dropout added onto the query. With Uniform weights
// the softmax is replaced by constant 1/m rows (average aggregation).
// memory must be nonempty; attending over nothing is a contract violation.
template <typename S>
Tensor<S> attention_block(const Tensor<S>& query, const Tensor<S>& memory,
                          const AttentionParams<S>& params, S ln_eps, double p_drop,
                          Rng& rng, bool training,
                          AttnWeights weights = AttnWeights::Softmax,
                          Tensor<S>* weights_out = nullptr);

// Per-actor key/value memory: row 0 is the RoI vector, rows 1..h*w the cells
// of the local grid. Shape [N x (h*w + 1) x c].
template <typename S>
Tensor<S> build_actor_memory(const ActorFeatures<S>& actors);

struct CycleConfig {
  std::size_t n_layers = 2;  // stacked depth, 1..3
  std::size_t channels = 32;   // c
  std::size_t attn_dim = 32;   // d
  double p_drop = 0.2;
  double ln_eps = 1e-5;
  bool use_local = true;
  bool use_global = true;
  InteractionMode mode = InteractionMode::Cycle;
};

void validate_cycle_config(const CycleConfig& cfg);

template <typename S>
struct CycleParams {
  std::vector<AttentionParams<S>> local_reorg;  // context reorganization layers
  std::vector<AttentionParams<S>> local_aggr;   // actor aggregation layers
  std::vector<AttentionParams<S>> global_stack; // global-branch layers
  Tensor<S> pos;                                // [T x c]
  Tensor<S> fuse_w;                             // [2c x c], or [c x c] single-branch
  Tensor<S> fuse_b;                             // [c]
};

template <typename S>
CycleParams<S> init_cycle_params(const CycleConfig& cfg, std::size_t frames, Rng& rng);

// Attention weights and per-layer feature snapshots collected on demand.
struct AttnTraceRow {
  int layer;
  std::string branch;  // local_reorg / local_aggr / global_reorg / global_aggr
  int actor_id;
  int query_index;
  int key_index;
  double weight;
};

template <typename S>
struct CycleTrace {
  std::vector<AttnTraceRow> attention;
  // Index [layer][actor]; layer 0 holds the pre-stack state.
  std::vector<std::vector<Tensor<S>>> local_ctx_layers;   // each [c x T]
  std::vector<std::vector<Tensor<S>>> global_ctx_layers;  // each [1 x c]
  std::vector<std::vector<Tensor<S>>> actor_layers;       // each [1 x c]
};

// One reorganization layer applied to a shared context: every actor starts
// from the same g [c x T] and attends over its own memory. Returns [N x c x T].
template <typename S>
Tensor<S> a2c_r_local(const Tensor<S>& g, const Tensor<S>& memory,
                      const AttentionParams<S>& params, S ln_eps, double p_drop,
                      Rng& rng, bool training);

// One aggregation layer: adds the position table to each per-actor context,
// then lets each actor query its own context frames. a [N x c],
// g_hat [N x c x T], pos [T x c]; returns [N x c].
template <typename S>
Tensor<S> c2a_e(const Tensor<S>& a, const Tensor<S>& g_hat, const Tensor<S>& pos,
                const AttentionParams<S>& params, S ln_eps, double p_drop, Rng& rng,
                bool training);

// One global-branch layer: the scene summary g_bar [c] queries each actor's
// memory. Returns [N x c].
template <typename S>
Tensor<S> a2c_r_global(const Tensor<S>& g_bar, const Tensor<S>& memory,
                       const AttentionParams<S>& params, S ln_eps, double p_drop,
                       Rng& rng, bool training);

template <typename S>
struct CycleOutputs {
  Tensor<S> enhanced;            // [N x c]
  Tensor<S> reorganized_local;   // [N x c x T], detached
  Tensor<S> reorganized_global;  // [N x c], detached
};

// Full relation head forward: reorganization stack, position table, aggregation
// stack, global stack, then the learned branch fusion. actor_ids (optional)
// label trace rows; row index is used when absent.
template <typename S>
CycleOutputs<S> cycle_forward(const ActorFeatures<S>& actors,
                              const TemporalContext<S>& ctx, const CycleConfig& cfg,
                              const CycleParams<S>& params, Rng& rng, bool training,
                              CycleTrace<S>* trace = nullptr,
                              std::span<const int> actor_ids = {});

}  // namespace vad
