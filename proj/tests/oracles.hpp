#pragma once

// Plain-loop reference implementation of the relation head forward pass in
// eval mode. Everything here works on flat double vectors with explicit
// indexing, independent of the tensor library, so the production path can be
// pinned against a transcription of the intended math.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "vad/cycle.hpp"
#include "vad/frontend.hpp"
#include "vad/tensor.hpp"

namespace oracle {

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw std::invalid_argument("oracle matmul shape mismatch");
  Mat out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  return out;
}

inline Mat transpose(const Mat& a) {
  Mat out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

inline Mat softmax_rows(Mat x) {
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < x.cols; ++j) mx = std::max(mx, x.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      x.at(i, j) = std::exp(x.at(i, j) - mx);
      sum += x.at(i, j);
    }
    for (std::size_t j = 0; j < x.cols; ++j) x.at(i, j) /= sum;
  }
  return x;
}

inline Mat layer_norm(const Mat& x, double eps) {
  Mat out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(x.cols);
    double var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(x.cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < x.cols; ++j) out.at(i, j) = (x.at(i, j) - mean) * inv;
  }
  return out;
}

inline Mat relu(Mat x) {
  for (double& e : x.v) e = e > 0.0 ? e : 0.0;
  return x;
}

struct AttnP {
  Mat w_q, w_k, w_v, w_out;
};

// q + relu(layer_norm(A (m W_v))) W_out, with A either the scaled-dot softmax
// or constant 1/m rows.
inline Mat attention(const Mat& q, const Mat& mem, const AttnP& p, double eps,
                     bool uniform) {
  Mat a;
  if (uniform) {
    a = Mat(q.rows, mem.rows);
    for (double& e : a.v) e = 1.0 / static_cast<double>(mem.rows);
  } else {
    Mat logits = matmul(matmul(q, p.w_q), transpose(matmul(mem, p.w_k)));
    const double s = 1.0 / std::sqrt(static_cast<double>(p.w_q.cols));
    for (double& e : logits.v) e *= s;
    a = softmax_rows(std::move(logits));
  }
  Mat gathered = matmul(a, matmul(mem, p.w_v));
  Mat branch = matmul(relu(layer_norm(gathered, eps)), p.w_out);
  Mat out = q;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += branch.v[i];
  return out;
}

struct Params {
  std::vector<AttnP> reorg, aggr, global_stack;
  Mat pos;  // [T x c]
  Mat fuse_w;
  std::vector<double> fuse_b;
};

inline Mat to_mat(const vad::Tensor<double>& t) {
  if (t.rank() != 2) throw std::invalid_argument("to_mat expects rank 2");
  Mat out(t.dim(0), t.dim(1));
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) out.v[i] = d[i];
  return out;
}

inline AttnP to_attnp(const vad::AttentionParams<double>& p) {
  return {to_mat(p.w_q), to_mat(p.w_k), to_mat(p.w_v), to_mat(p.w_out)};
}

inline Params to_params(const vad::CycleParams<double>& p) {
  Params out;
  for (const auto& a : p.local_reorg) out.reorg.push_back(to_attnp(a));
  for (const auto& a : p.local_aggr) out.aggr.push_back(to_attnp(a));
  for (const auto& a : p.global_stack) out.global_stack.push_back(to_attnp(a));
  out.pos = to_mat(p.pos);
  out.fuse_w = to_mat(p.fuse_w);
  out.fuse_b.assign(p.fuse_b.data().begin(), p.fuse_b.data().end());
  return out;
}

// Key/value memory for actor i: row 0 the pooled vector, rows 1.. the local
// grid cells in row-major (h, w) order.
inline Mat actor_memory(const vad::ActorFeatures<double>& actors, std::size_t i) {
  const std::size_t c = actors.roi.dim(1);
  const std::size_t h = actors.local.dim(2), w = actors.local.dim(3);
  Mat mem(h * w + 1, c);
  auto roi = actors.roi.data();
  auto local = actors.local.data();
  for (std::size_t ch = 0; ch < c; ++ch) mem.at(0, ch) = roi[i * c + ch];
  for (std::size_t cell = 0; cell < h * w; ++cell)
    for (std::size_t ch = 0; ch < c; ++ch)
      mem.at(cell + 1, ch) = local[(i * c + ch) * h * w + cell];
  return mem;
}

// Eval-mode forward pass for one clip; rows of the result are enhanced actors.
inline Mat forward(const vad::ActorFeatures<double>& actors,
                   const vad::TemporalContext<double>& ctx, const vad::CycleConfig& cfg,
                   const Params& p) {
  const std::size_t n = actors.roi.dim(0);
  const std::size_t c = cfg.channels;
  const std::size_t frames = ctx.local.dim(1);
  const double eps = cfg.ln_eps;

  Mat g(c, frames);
  {
    auto d = ctx.local.data();
    for (std::size_t i = 0; i < d.size(); ++i) g.v[i] = d[i];
  }
  Mat g_bar(1, c);
  {
    auto d = ctx.global.data();
    for (std::size_t ch = 0; ch < c; ++ch) g_bar.at(0, ch) = d[ch];
  }

  Mat out(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    Mat mem = actor_memory(actors, i);
    Mat a_row(1, c);
    for (std::size_t ch = 0; ch < c; ++ch) a_row.at(0, ch) = actors.roi.data()[i * c + ch];

    std::vector<double> fused;
    if (cfg.use_local) {
      Mat ctx_t = transpose(g);  // frames as rows
      if (cfg.mode != vad::InteractionMode::C2A)
        for (std::size_t l = 0; l < cfg.n_layers; ++l)
          ctx_t = attention(ctx_t, mem, p.reorg[l], eps, false);
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t ch = 0; ch < c; ++ch) ctx_t.at(t, ch) += p.pos.at(t, ch);
      Mat q = a_row;
      const bool uniform = cfg.mode == vad::InteractionMode::A2C;
      for (std::size_t l = 0; l < cfg.n_layers; ++l)
        q = attention(q, ctx_t, p.aggr[l], eps, uniform);
      for (std::size_t ch = 0; ch < c; ++ch) fused.push_back(q.at(0, ch));
    }
    if (cfg.use_global) {
      Mat q;
      if (cfg.mode == vad::InteractionMode::C2A) {
        q = a_row;
        for (std::size_t l = 0; l < cfg.n_layers; ++l)
          q = attention(q, g_bar, p.global_stack[l], eps, false);
      } else {
        q = g_bar;
        for (std::size_t l = 0; l < cfg.n_layers; ++l)
          q = attention(q, mem, p.global_stack[l], eps, false);
      }
      for (std::size_t ch = 0; ch < c; ++ch) fused.push_back(q.at(0, ch));
    }

    for (std::size_t j = 0; j < c; ++j) {
      double acc = p.fuse_b[j];
      for (std::size_t k = 0; k < fused.size(); ++k) acc += fused[k] * p.fuse_w.at(k, j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

}  // namespace oracle
