#include "vad/cycle.hpp"

#include <cmath>
#include <vector>

namespace vad {

namespace {

// Slice member i of a [N x a x b] batch into [a x b].
template <typename S>
Tensor<S> slice0(const Tensor<S>& t, std::size_t i) {
  const std::size_t a = t.dim(1), b = t.dim(2);
  Tensor<S> flat = reshape(t, {t.dim(0), a * b});
  return reshape(rows(flat, i, 1), {a, b});
}

// Stack n copies of a [a x b] tensor into [n x a x b]. Gradients from every
// copy accumulate back into the source.
template <typename S>
Tensor<S> tile0(const Tensor<S>& t, std::size_t n) {
  Tensor<S> unit = reshape(t, {std::size_t{1}, t.dim(0), t.dim(1)});
  std::vector<Tensor<S>> parts(n, unit);
  return concat(0, std::span<const Tensor<S>>(parts));
}

// Stack n copies of a length-c vector into [n x c] rows.
template <typename S>
Tensor<S> tile_rows(const Tensor<S>& v, std::size_t n) {
  Tensor<S> unit = reshape(v, {std::size_t{1}, v.numel()});
  std::vector<Tensor<S>> parts(n, unit);
  return concat(0, std::span<const Tensor<S>>(parts));
}

template <typename S>
void check_attention_params(const AttentionParams<S>& p, std::size_t c) {
  auto check = [&](const Tensor<S>& w, const char* name, std::size_t r, std::size_t cols) {
    if (!w.defined() || w.rank() != 2 || w.dim(0) != r || w.dim(1) != cols)
      throw DimensionError(std::string("attention parameter ") + name + " has wrong shape");
  };
  if (!p.w_q.defined() || p.w_q.rank() != 2)
    throw DimensionError("attention parameter w_q has wrong shape");
  const std::size_t d = p.w_q.dim(1);
  check(p.w_q, "w_q", c, d);
  check(p.w_k, "w_k", c, d);
  check(p.w_v, "w_v", c, d);
  check(p.w_out, "w_out", d, c);
}

int trace_id(std::span<const int> ids, std::size_t i) {
  return ids.empty() ? static_cast<int>(i) : ids[i];
}

// Append one weight matrix [q x k] to the trace.
template <typename S>
void record_weights(CycleTrace<S>* trace, const Tensor<S>& w, int layer,
                    const std::string& branch, int actor_id, bool query_is_actor_row,
                    std::span<const int> ids) {
  if (trace == nullptr) return;
  for (std::size_t qi = 0; qi < w.dim(0); ++qi)
    for (std::size_t ki = 0; ki < w.dim(1); ++ki) {
      AttnTraceRow row;
      row.layer = layer;
      row.branch = branch;
      row.actor_id = query_is_actor_row ? trace_id(ids, qi) : actor_id;
      row.query_index = query_is_actor_row ? 0 : static_cast<int>(qi);
      row.key_index = static_cast<int>(ki);
      row.weight = static_cast<double>(w.at(qi, ki));
      trace->attention.push_back(std::move(row));
    }
}

// One reorganization layer over per-actor contexts [N x c x T] and per-actor
// memory [N x M x c]; each actor's T frame vectors query its own memory.
template <typename S>
Tensor<S> reorg_step(const Tensor<S>& contexts, const Tensor<S>& memory,
                     const AttentionParams<S>& params, S ln_eps, double p_drop,
                     Rng& rng, bool training, CycleTrace<S>* trace, int layer,
                     const std::string& branch, std::span<const int> ids) {
  const std::size_t n = contexts.dim(0);
  const std::size_t c = contexts.dim(1), t = contexts.dim(2);
  std::vector<Tensor<S>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<S> weights;
    Tensor<S> q = transpose(slice0(contexts, i));  // [T x c]
    Tensor<S> upd = attention_block(q, slice0(memory, i), params, ln_eps, p_drop, rng,
                                    training, AttnWeights::Softmax,
                                    trace ? &weights : nullptr);
    record_weights(trace, weights, layer, branch, trace_id(ids, i), false, ids);
    out.push_back(reshape(transpose(upd), {std::size_t{1}, c, t}));
  }
  return concat(0, std::span<const Tensor<S>>(out));
}

// One aggregation layer: actor row i queries its own context frames.
template <typename S>
Tensor<S> aggr_step(const Tensor<S>& actor_rows, const Tensor<S>& contexts,
                    const AttentionParams<S>& params, S ln_eps, double p_drop,
                    Rng& rng, bool training, AttnWeights mode, CycleTrace<S>* trace,
                    int layer, const std::string& branch, std::span<const int> ids) {
  const std::size_t n = actor_rows.dim(0);
  std::vector<Tensor<S>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<S> weights;
    Tensor<S> upd = attention_block(rows(actor_rows, i, 1), transpose(slice0(contexts, i)),
                                    params, ln_eps, p_drop, rng, training, mode,
                                    trace ? &weights : nullptr);
    record_weights(trace, weights, layer, branch, trace_id(ids, i), false, ids);
    out.push_back(upd);
  }
  return concat(0, std::span<const Tensor<S>>(out));
}

// One global-branch layer: query row i against actor i's memory.
template <typename S>
Tensor<S> global_step(const Tensor<S>& queries, const Tensor<S>& memory,
                      const AttentionParams<S>& params, S ln_eps, double p_drop,
                      Rng& rng, bool training, CycleTrace<S>* trace, int layer,
                      const std::string& branch, std::span<const int> ids) {
  const std::size_t n = queries.dim(0);
  std::vector<Tensor<S>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<S> weights;
    Tensor<S> upd = attention_block(rows(queries, i, 1), slice0(memory, i), params, ln_eps,
                                    p_drop, rng, training, AttnWeights::Softmax,
                                    trace ? &weights : nullptr);
    record_weights(trace, weights, layer, branch, trace_id(ids, i), false, ids);
    out.push_back(upd);
  }
  return concat(0, std::span<const Tensor<S>>(out));
}

template <typename S>
void snapshot_contexts(CycleTrace<S>* trace, std::vector<std::vector<Tensor<S>>>& slot,
                       const Tensor<S>& batch) {
  if (trace == nullptr) return;
  std::vector<Tensor<S>> layer;
  layer.reserve(batch.dim(0));
  for (std::size_t i = 0; i < batch.dim(0); ++i) {
    if (batch.rank() == 3)
      layer.push_back(slice0(batch, i).detach());
    else
      layer.push_back(rows(batch, i, 1).detach());
  }
  slot.push_back(std::move(layer));
}

}  // namespace

InteractionMode parse_interaction_mode(const std::string& s) {
  if (s == "cycle") return InteractionMode::Cycle;
  if (s == "c2a") return InteractionMode::C2A;
  if (s == "a2c") return InteractionMode::A2C;
  throw ConfigError("unknown interaction mode '" + s + "' (expected cycle, c2a, or a2c)");
}

std::string to_string(InteractionMode mode) {
  switch (mode) {
    case InteractionMode::C2A: return "c2a";
    case InteractionMode::A2C: return "a2c";
    case InteractionMode::Cycle: return "cycle";
  }
  throw ConfigError("invalid interaction mode value");
}

void validate_cycle_config(const CycleConfig& cfg) {
  if (cfg.n_layers < 1 || cfg.n_layers > 3)
    throw ConfigError("n_layers must be between 1 and 3");
  if (cfg.channels == 0 || cfg.attn_dim == 0)
    throw ConfigError("channels and attn_dim must be positive");
  if (!(cfg.p_drop >= 0.0 && cfg.p_drop < 1.0))
    throw ConfigError("p_drop must lie in [0, 1)");
  if (!(cfg.ln_eps > 0.0)) throw ConfigError("ln_eps must be positive");
  if (!cfg.use_local && !cfg.use_global)
    throw ConfigError("at least one of the local and global branches must be enabled");
}

template <typename S>
AttentionParams<S> init_attention_params(std::size_t c, std::size_t d, Rng& rng) {
  if (c == 0 || d == 0) throw ParameterError("attention dims must be positive");
  const S bc = S(1) / std::sqrt(S(c));
  const S bd = S(1) / std::sqrt(S(d));
  AttentionParams<S> p;
  p.w_q = uniform_init<S>({c, d}, -bc, bc, rng);
  p.w_k = uniform_init<S>({c, d}, -bc, bc, rng);
  p.w_v = uniform_init<S>({c, d}, -bc, bc, rng);
  p.w_out = uniform_init<S>({d, c}, -bd, bd, rng);
  return p;
}

template <typename S>
CycleParams<S> init_cycle_params(const CycleConfig& cfg, std::size_t frames, Rng& rng) {
  validate_cycle_config(cfg);
  if (frames == 0) throw ParameterError("frames must be positive");
  CycleParams<S> p;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    p.local_reorg.push_back(init_attention_params<S>(cfg.channels, cfg.attn_dim, rng));
    p.local_aggr.push_back(init_attention_params<S>(cfg.channels, cfg.attn_dim, rng));
    p.global_stack.push_back(init_attention_params<S>(cfg.channels, cfg.attn_dim, rng));
  }
  p.pos = normal_init<S>({frames, cfg.channels}, S(0), S(0.02), rng);
  const std::size_t fuse_in =
      (cfg.use_local && cfg.use_global) ? 2 * cfg.channels : cfg.channels;
  const S bf = S(1) / std::sqrt(S(fuse_in));
  p.fuse_w = uniform_init<S>({fuse_in, cfg.channels}, -bf, bf, rng);
  p.fuse_b = uniform_init<S>({cfg.channels}, -bf, bf, rng);
  return p;
}

template <typename S>
Tensor<S> attention_block(const Tensor<S>& query, const Tensor<S>& memory,
                          const AttentionParams<S>& params, S ln_eps, double p_drop,
                          Rng& rng, bool training, AttnWeights weights,
                          Tensor<S>* weights_out) {
  if (!query.defined() || query.rank() != 2)
    throw DimensionError("attention query must be rank 2");
  if (!memory.defined() || memory.rank() != 2)
    throw DimensionError("attention memory must be rank 2");
  if (memory.dim(0) == 0)
    throw ContractError("attention requires a nonempty memory");
  const std::size_t c = query.dim(1);
  if (memory.dim(1) != c)
    throw DimensionError("query and memory channel widths differ");
  check_attention_params(params, c);
  const std::size_t d = params.w_q.dim(1);

  Tensor<S> attn;
  if (weights == AttnWeights::Uniform) {
    attn = Tensor<S>::full({query.dim(0), memory.dim(0)},
                           S(1) / S(memory.dim(0)));
  } else {
    Tensor<S> q = matmul(query, params.w_q);
    Tensor<S> k = matmul(memory, params.w_k);
    Tensor<S> logits = scale(matmul(q, transpose(k)), S(1) / std::sqrt(S(d)));
    attn = softmax_rows(logits);
  }
  if (weights_out != nullptr) *weights_out = attn.detach();

  Tensor<S> gathered = matmul(attn, matmul(memory, params.w_v));
  Tensor<S> branch = matmul(relu(layer_norm(gathered, ln_eps)), params.w_out);
  return add(query, dropout(branch, p_drop, rng, training));
}

template <typename S>
Tensor<S> build_actor_memory(const ActorFeatures<S>& actors) {
  const std::size_t n = actors.roi.dim(0);
  const std::size_t c = actors.roi.dim(1);
  if (actors.local.dim(0) != n || actors.local.dim(1) != c)
    throw DimensionError("actor local/roi feature shapes disagree");
  const std::size_t cells = actors.local.dim(2) * actors.local.dim(3);
  if (n == 0) return Tensor<S>::zeros({0, cells + 1, c});
  Tensor<S> local_flat = reshape(actors.local, {n, c, cells});
  std::vector<Tensor<S>> parts;
  parts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<S> mem = concat(0, {rows(actors.roi, i, 1), transpose(slice0(local_flat, i))});
    parts.push_back(reshape(mem, {std::size_t{1}, cells + 1, c}));
  }
  return concat(0, std::span<const Tensor<S>>(parts));
}

template <typename S>
Tensor<S> a2c_r_local(const Tensor<S>& g, const Tensor<S>& memory,
                      const AttentionParams<S>& params, S ln_eps, double p_drop,
                      Rng& rng, bool training) {
  if (!g.defined() || g.rank() != 2)
    throw DimensionError("shared context must be rank 2 [c x T]");
  if (!memory.defined() || memory.rank() != 3)
    throw DimensionError("actor memory must be rank 3");
  Tensor<S> contexts = tile0(g, memory.dim(0));
  return reorg_step(contexts, memory, params, ln_eps, p_drop, rng, training,
                    static_cast<CycleTrace<S>*>(nullptr), 0, "", {});
}

template <typename S>
Tensor<S> c2a_e(const Tensor<S>& a, const Tensor<S>& g_hat, const Tensor<S>& pos,
                const AttentionParams<S>& params, S ln_eps, double p_drop, Rng& rng,
                bool training) {
  if (!a.defined() || a.rank() != 2) throw DimensionError("actor features must be rank 2");
  if (!g_hat.defined() || g_hat.rank() != 3)
    throw DimensionError("per-actor context must be rank 3 [N x c x T]");
  if (!pos.defined() || pos.rank() != 2 || pos.dim(0) != g_hat.dim(2) ||
      pos.dim(1) != g_hat.dim(1))
    throw DimensionError("position table must be [T x c] matching the context");
  if (a.dim(0) != g_hat.dim(0))
    throw DimensionError("actor count and context count differ");
  Tensor<S> ctx_pos = add(g_hat, tile0(transpose(pos), g_hat.dim(0)));
  return aggr_step(a, ctx_pos, params, ln_eps, p_drop, rng, training,
                   AttnWeights::Softmax, static_cast<CycleTrace<S>*>(nullptr), 0, "", {});
}

template <typename S>
Tensor<S> a2c_r_global(const Tensor<S>& g_bar, const Tensor<S>& memory,
                       const AttentionParams<S>& params, S ln_eps, double p_drop,
                       Rng& rng, bool training) {
  if (!g_bar.defined() || g_bar.rank() != 1)
    throw DimensionError("scene summary must be rank 1 [c]");
  if (!memory.defined() || memory.rank() != 3)
    throw DimensionError("actor memory must be rank 3");
  Tensor<S> queries = tile_rows(g_bar, memory.dim(0));
  return global_step(queries, memory, params, ln_eps, p_drop, rng, training,
                     static_cast<CycleTrace<S>*>(nullptr), 0, "", {});
}

template <typename S>
CycleOutputs<S> cycle_forward(const ActorFeatures<S>& actors,
                              const TemporalContext<S>& ctx, const CycleConfig& cfg,
                              const CycleParams<S>& params, Rng& rng, bool training,
                              CycleTrace<S>* trace, std::span<const int> actor_ids) {
  validate_cycle_config(cfg);
  const std::size_t n = actors.roi.dim(0);
  const std::size_t c = cfg.channels;
  if (actors.roi.dim(1) != c)
    throw DimensionError("actor feature width does not match configured channels");
  if (ctx.local.dim(0) != c || ctx.global.dim(0) != c)
    throw DimensionError("context width does not match configured channels");
  const std::size_t t = ctx.local.dim(1);
  if (!params.pos.defined() || params.pos.rank() != 2 || params.pos.dim(0) != t ||
      params.pos.dim(1) != c)
    throw DimensionError("position table must be [T x c] matching the clip");
  if (!actor_ids.empty() && actor_ids.size() != n)
    throw ParameterError("actor_ids length must match the actor count");
  const std::size_t want =
      (cfg.use_local && cfg.use_global) ? 2 * c : c;
  if (!params.fuse_w.defined() || params.fuse_w.rank() != 2 ||
      params.fuse_w.dim(0) != want || params.fuse_w.dim(1) != c)
    throw DimensionError("fusion weight shape does not match the enabled branches");
  if (params.local_reorg.size() < cfg.n_layers || params.local_aggr.size() < cfg.n_layers ||
      params.global_stack.size() < cfg.n_layers)
    throw ParameterError("parameter stacks are shallower than n_layers");

  CycleOutputs<S> out;
  if (n == 0) {
    out.enhanced = Tensor<S>::zeros({0, c});
    out.reorganized_local = Tensor<S>::zeros({0, c, t});
    out.reorganized_global = Tensor<S>::zeros({0, c});
    return out;
  }

  const S eps = static_cast<S>(cfg.ln_eps);
  Tensor<S> memory = build_actor_memory(actors);
  if (memory.dim(2) != c) throw DimensionError("actor memory width mismatch");

  Tensor<S> out_local, out_global;

  if (cfg.use_local) {
    Tensor<S> contexts = tile0(ctx.local, n);
    if (trace) snapshot_contexts(trace, trace->local_ctx_layers, contexts);
    if (cfg.mode != InteractionMode::C2A) {
      for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        contexts = reorg_step(contexts, memory, params.local_reorg[l], eps, cfg.p_drop,
                              rng, training, trace, static_cast<int>(l + 1),
                              "local_reorg", actor_ids);
        if (trace) snapshot_contexts(trace, trace->local_ctx_layers, contexts);
      }
    }
    out.reorganized_local = contexts.detach();

    // The position table is added once, after reorganization and before the
    // actor reads the frames back.
    Tensor<S> ctx_pos = add(contexts, tile0(transpose(params.pos), n));
    Tensor<S> a = actors.roi;
    if (trace) snapshot_contexts(trace, trace->actor_layers, a);
    const AttnWeights aggr_mode =
        (cfg.mode == InteractionMode::A2C) ? AttnWeights::Uniform : AttnWeights::Softmax;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      a = aggr_step(a, ctx_pos, params.local_aggr[l], eps, cfg.p_drop, rng, training,
                    aggr_mode, trace, static_cast<int>(l + 1), "local_aggr", actor_ids);
      if (trace) snapshot_contexts(trace, trace->actor_layers, a);
    }
    out_local = a;
  } else {
    out.reorganized_local = tile0(ctx.local, n).detach();
  }

  if (cfg.use_global) {
    if (cfg.mode == InteractionMode::C2A) {
      // Without reorganization the scene summary is a single shared key/value
      // row that each actor queries directly.
      Tensor<S> scene = reshape(ctx.global, {std::size_t{1}, c});
      Tensor<S> q = actors.roi;
      for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        Tensor<S> weights;
        q = attention_block(q, scene, params.global_stack[l], eps, cfg.p_drop, rng,
                            training, AttnWeights::Softmax, trace ? &weights : nullptr);
        record_weights(trace, weights, static_cast<int>(l + 1), "global_aggr", 0, true,
                       actor_ids);
      }
      out_global = q;
    } else {
      Tensor<S> q = tile_rows(ctx.global, n);
      if (trace) snapshot_contexts(trace, trace->global_ctx_layers, q);
      for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        q = global_step(q, memory, params.global_stack[l], eps, cfg.p_drop, rng,
                        training, trace, static_cast<int>(l + 1), "global_reorg",
                        actor_ids);
        if (trace) snapshot_contexts(trace, trace->global_ctx_layers, q);
      }
      out_global = q;
    }
    out.reorganized_global = out_global.detach();
  } else {
    out.reorganized_global = tile_rows(ctx.global, n).detach();
  }

  Tensor<S> fused_in;
  if (cfg.use_local && cfg.use_global)
    fused_in = concat(1, {out_local, out_global});
  else
    fused_in = cfg.use_local ? out_local : out_global;
  out.enhanced = add_rowvec(matmul(fused_in, params.fuse_w), params.fuse_b);
  return out;
}

#define VAD_INSTANTIATE_CYCLE(S)                                                        \
  template AttentionParams<S> init_attention_params<S>(std::size_t, std::size_t, Rng&); \
  template CycleParams<S> init_cycle_params<S>(const CycleConfig&, std::size_t, Rng&);  \
  template Tensor<S> attention_block<S>(const Tensor<S>&, const Tensor<S>&,             \
                                        const AttentionParams<S>&, S, double, Rng&,     \
                                        bool, AttnWeights, Tensor<S>*);                 \
  template Tensor<S> build_actor_memory<S>(const ActorFeatures<S>&);                    \
  template Tensor<S> a2c_r_local<S>(const Tensor<S>&, const Tensor<S>&,                 \
                                    const AttentionParams<S>&, S, double, Rng&, bool);  \
  template Tensor<S> c2a_e<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,     \
                              const AttentionParams<S>&, S, double, Rng&, bool);        \
  template Tensor<S> a2c_r_global<S>(const Tensor<S>&, const Tensor<S>&,                \
                                     const AttentionParams<S>&, S, double, Rng&, bool); \
  template CycleOutputs<S> cycle_forward<S>(const ActorFeatures<S>&,                    \
                                            const TemporalContext<S>&,                  \
                                            const CycleConfig&, const CycleParams<S>&,  \
                                            Rng&, bool, CycleTrace<S>*,                 \
                                            std::span<const int>);

VAD_INSTANTIATE_CYCLE(float)
VAD_INSTANTIATE_CYCLE(double)

#undef VAD_INSTANTIATE_CYCLE

}  // namespace vad
