// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
//
// Templated packed forward/backward core shared by inference, tracing,
// value-gradient, and training paths. Independent sequences are packed as
// row segments of one activation matrix so the projection/MLP GEMMs run at
// full width; attention is evaluated per segment with a causal mask.
#pragma once

#include "relab/model.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace relab::detail {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using Arr = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic>;

struct Segment {
  int start = 0;
  int len = 0;
};

template <typename T>
struct ResolvedPatch {
  int layer = 0;
  SiteKind kind = SiteKind::mlp_out;
  int row = 0;  // absolute packed row
  Vec<T> value;
};

struct SegmentNoise {
  int segment = 0;
  NoiseSpec spec;  // begin/end are segment-local
};

template <typename T>
struct PackInput {
  std::vector<int> tokens;
  std::vector<Segment> segments;
  std::vector<ResolvedPatch<T>> patches;
  std::vector<SegmentNoise> noise;
  int rows() const { return static_cast<int>(tokens.size()); }
};

template <typename T>
struct LayerTape {
  Mat<T> x_in;  // residual entering the block, post patch
  Mat<T> ln1_hat, ln1_y;
  Vec<T> ln1_rstd;
  Mat<T> q, k, v;
  std::vector<Mat<T>> probs;  // per (segment, head): segment-major
  Mat<T> ctx;
  Mat<T> attn_out;  // post patch
  Mat<T> x_mid;
  Mat<T> ln2_hat, ln2_y;
  Vec<T> ln2_rstd;
  Mat<T> pre_gelu, gelu_t, inner;  // inner post patchless (mlp_inner is capture-only)
  Mat<T> mlp_out;                  // post patch
};

template <typename T>
struct Tape {
  std::vector<LayerTape<T>> layers;
  Mat<T> x_final;
  Mat<T> lnf_hat, lnf_y;
  Vec<T> lnf_rstd;
  Mat<T> logits;
};

inline constexpr double kLnEps = 1e-5;

// tanh-form GELU; the backward differentiates exactly this expression.
template <typename T>
void gelu_forward(const Mat<T>& x, Mat<T>& t, Mat<T>& y) {
  const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  const T a = static_cast<T>(0.044715);
  t = (c * (x.array() + a * x.array().cube())).tanh().matrix();
  y = (static_cast<T>(0.5) * x.array() * (static_cast<T>(1) + t.array())).matrix();
}

template <typename T>
Mat<T> gelu_backward(const Mat<T>& x, const Mat<T>& t, const Mat<T>& dy) {
  const T c = static_cast<T>(0.7978845608028654);
  const T a = static_cast<T>(0.044715);
  Arr<T> sech2 = static_cast<T>(1) - t.array().square();
  Arr<T> dinner = c * (static_cast<T>(1) + static_cast<T>(3) * a * x.array().square());
  Arr<T> grad = static_cast<T>(0.5) * (static_cast<T>(1) + t.array()) +
                static_cast<T>(0.5) * x.array() * sech2 * dinner;
  return (dy.array() * grad).matrix();
}

template <typename T>
void layer_norm(const Mat<T>& x, const Vec<T>& g, const Vec<T>& b, Mat<T>& hat,
                Vec<T>& rstd, Mat<T>& y) {
  const int rows = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  hat.resize(rows, d);
  rstd.resize(rows);
  for (int i = 0; i < rows; ++i) {
    T mean = x.row(i).mean();
    T var = (x.row(i).array() - mean).square().mean();
    T r = static_cast<T>(1) / std::sqrt(var + static_cast<T>(kLnEps));
    rstd(i) = r;
    hat.row(i) = (x.row(i).array() - mean) * r;
  }
  y = (hat.array().rowwise() * g.transpose().array()).rowwise() +
      b.transpose().array();
}

// dY -> dX; accumulates dg/db when given.
template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& hat, const Vec<T>& rstd, const Vec<T>& g,
                           const Mat<T>& dy, Vec<T>* dg, Vec<T>* db) {
  const int rows = static_cast<int>(hat.rows());
  const int d = static_cast<int>(hat.cols());
  if (dg) *dg += (dy.array() * hat.array()).colwise().sum().matrix().transpose();
  if (db) *db += dy.colwise().sum().transpose();
  Mat<T> dhat = dy.array().rowwise() * g.transpose().array();
  Mat<T> dx(rows, d);
  for (int i = 0; i < rows; ++i) {
    T m1 = dhat.row(i).mean();
    T m2 = (dhat.row(i).array() * hat.row(i).array()).mean();
    dx.row(i) = (rstd(i) * (dhat.row(i).array() - m1 - hat.row(i).array() * m2)).matrix();
  }
  return dx;
}

template <typename T>
void apply_patches(const PackInput<T>& in, int layer, SiteKind kind, Mat<T>& act) {
  for (const auto& p : in.patches) {
    if (p.layer == layer && p.kind == kind) act.row(p.row) = p.value.transpose();
  }
}

template <typename T>
void sever_patched_rows(const PackInput<T>& in, int layer, SiteKind kind, Mat<T>& grad) {
  for (const auto& p : in.patches) {
    if (p.layer == layer && p.kind == kind) grad.row(p.row).setZero();
  }
}

/// Deterministic per-position noise: draws depend only on (seed, local
/// position), so identical specs produce identical corruption in any segment.
template <typename T>
void apply_noise(const ModelConfig& cfg, const Segment& seg, const NoiseSpec& spec,
                 Mat<T>& x0) {
  if (spec.sigma < 0) throw ValidationError("noise sigma must be >= 0");
  if (spec.begin < 0 || spec.end <= spec.begin || spec.end > seg.len) {
    throw ValidationError("noise span out of range");
  }
  for (int p = spec.begin; p < spec.end; ++p) {
    std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(p)));
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    for (int j = 0; j < cfg.d_model; ++j) {
      x0(seg.start + p, j) += static_cast<T>(spec.sigma * gauss(rng));
    }
  }
}

template <typename T>
struct CaptureSink {
  const std::vector<Site>* sites = nullptr;  // absolute rows
  std::vector<Vec<T>>* out = nullptr;

  void grab(int layer, SiteKind kind, const Mat<T>& act) const {
    if (!sites) return;
    for (size_t i = 0; i < sites->size(); ++i) {
      const Site& s = (*sites)[i];
      if (s.layer == layer && s.kind == kind) (*out)[i] = act.row(s.pos).transpose();
    }
  }
};

template <typename T>
void run_forward(const ModelConfig& cfg, const WeightsT<T>& w, const PackInput<T>& in,
                 Tape<T>& tape, const CaptureSink<T>& capture = {}) {
  const int rows = in.rows();
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(dh));

  tape.layers.resize(static_cast<size_t>(cfg.n_layers));

  Mat<T> x(rows, d);
  for (const auto& seg : in.segments) {
    for (int p = 0; p < seg.len; ++p) {
      int tok = in.tokens[static_cast<size_t>(seg.start + p)];
      x.row(seg.start + p) = w.tok_emb.row(tok) + w.pos_emb.row(p);
    }
  }
  for (const auto& n : in.noise) {
    apply_noise(cfg, in.segments[static_cast<size_t>(n.segment)], n.spec, x);
  }

  for (int l = 0; l < cfg.n_layers; ++l) {
    auto& lt = tape.layers[static_cast<size_t>(l)];
    const auto& lw = w.layers[static_cast<size_t>(l)];

    lt.x_in = std::move(x);
    apply_patches(in, l, SiteKind::residual, lt.x_in);
    capture.grab(l, SiteKind::residual, lt.x_in);

    layer_norm(lt.x_in, lw.ln1_g, lw.ln1_b, lt.ln1_hat, lt.ln1_rstd, lt.ln1_y);

    lt.q.noalias() = lt.ln1_y * lw.wq.transpose();
    lt.q.rowwise() += lw.bq.transpose();
    lt.k.noalias() = lt.ln1_y * lw.wk.transpose();
    lt.k.rowwise() += lw.bk.transpose();
    lt.v.noalias() = lt.ln1_y * lw.wv.transpose();
    lt.v.rowwise() += lw.bv.transpose();

    lt.ctx.resize(rows, d);
    lt.probs.assign(in.segments.size() * static_cast<size_t>(H), Mat<T>());
    for (size_t s = 0; s < in.segments.size(); ++s) {
      const auto& seg = in.segments[s];
      for (int h = 0; h < H; ++h) {
        auto qh = lt.q.block(seg.start, h * dh, seg.len, dh);
        auto kh = lt.k.block(seg.start, h * dh, seg.len, dh);
        auto vh = lt.v.block(seg.start, h * dh, seg.len, dh);
        Mat<T>& P = lt.probs[s * static_cast<size_t>(H) + static_cast<size_t>(h)];
        P.noalias() = qh * kh.transpose();
        P *= scale;
        for (int i = 0; i < seg.len; ++i) {
          auto row = P.row(i).head(i + 1);
          T m = row.maxCoeff();
          row = (row.array() - m).exp();
          row /= row.sum();
          if (i + 1 < seg.len) P.row(i).tail(seg.len - i - 1).setZero();
        }
        lt.ctx.block(seg.start, h * dh, seg.len, dh).noalias() = P * vh;
      }
    }

    lt.attn_out.noalias() = lt.ctx * lw.wo.transpose();
    lt.attn_out.rowwise() += lw.bo.transpose();
    apply_patches(in, l, SiteKind::attn_out, lt.attn_out);
    capture.grab(l, SiteKind::attn_out, lt.attn_out);

    lt.x_mid = lt.x_in + lt.attn_out;

    layer_norm(lt.x_mid, lw.ln2_g, lw.ln2_b, lt.ln2_hat, lt.ln2_rstd, lt.ln2_y);
    lt.pre_gelu.noalias() = lt.ln2_y * lw.w_in.transpose();
    lt.pre_gelu.rowwise() += lw.b_in.transpose();
    gelu_forward(lt.pre_gelu, lt.gelu_t, lt.inner);
    capture.grab(l, SiteKind::mlp_inner, lt.inner);

    lt.mlp_out.noalias() = lt.inner * lw.w_out.transpose();
    lt.mlp_out.rowwise() += lw.b_out.transpose();
    apply_patches(in, l, SiteKind::mlp_out, lt.mlp_out);
    capture.grab(l, SiteKind::mlp_out, lt.mlp_out);

    x = lt.x_mid + lt.mlp_out;
  }

  tape.x_final = std::move(x);
  layer_norm(tape.x_final, w.lnf_g, w.lnf_b, tape.lnf_hat, tape.lnf_rstd, tape.lnf_y);
  tape.logits.noalias() = tape.lnf_y * w.unembed.transpose();
}

template <typename T>
void zero_like(const WeightsT<T>& w, WeightsT<T>& g) {
  g.tok_emb = Mat<T>::Zero(w.tok_emb.rows(), w.tok_emb.cols());
  g.pos_emb = Mat<T>::Zero(w.pos_emb.rows(), w.pos_emb.cols());
  g.layers.resize(w.layers.size());
  for (size_t l = 0; l < w.layers.size(); ++l) {
    const auto& lw = w.layers[l];
    auto& lg = g.layers[l];
    lg.ln1_g = Vec<T>::Zero(lw.ln1_g.size());
    lg.ln1_b = Vec<T>::Zero(lw.ln1_b.size());
    lg.wq = Mat<T>::Zero(lw.wq.rows(), lw.wq.cols());
    lg.wk = Mat<T>::Zero(lw.wk.rows(), lw.wk.cols());
    lg.wv = Mat<T>::Zero(lw.wv.rows(), lw.wv.cols());
    lg.wo = Mat<T>::Zero(lw.wo.rows(), lw.wo.cols());
    lg.bq = Vec<T>::Zero(lw.bq.size());
    lg.bk = Vec<T>::Zero(lw.bk.size());
    lg.bv = Vec<T>::Zero(lw.bv.size());
    lg.bo = Vec<T>::Zero(lw.bo.size());
    lg.ln2_g = Vec<T>::Zero(lw.ln2_g.size());
    lg.ln2_b = Vec<T>::Zero(lw.ln2_b.size());
    lg.w_in = Mat<T>::Zero(lw.w_in.rows(), lw.w_in.cols());
    lg.b_in = Vec<T>::Zero(lw.b_in.size());
    lg.w_out = Mat<T>::Zero(lw.w_out.rows(), lw.w_out.cols());
    lg.b_out = Vec<T>::Zero(lw.b_out.size());
  }
  g.lnf_g = Vec<T>::Zero(w.lnf_g.size());
  g.lnf_b = Vec<T>::Zero(w.lnf_b.size());
  g.unembed = Mat<T>::Zero(w.unembed.rows(), w.unembed.cols());
}

/// Reverse pass from dlogits. Patched rows sever gradient flow into the
/// branch that produced the overwritten value. If `site`/`site_grad` are
/// given, the gradient reaching that site row (i.e. d loss / d patched value)
/// is copied out; `wgrad` may be null when only activation grads are needed.
template <typename T>
void run_backward(const ModelConfig& cfg, const WeightsT<T>& w, const PackInput<T>& in,
                  const Tape<T>& tape, const Mat<T>& dlogits, WeightsT<T>* wgrad,
                  const Site* site = nullptr, Vec<T>* site_grad = nullptr) {
  const int rows = in.rows();
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(dh));

  auto read_site = [&](int layer, SiteKind kind, const Mat<T>& grad) {
    if (site && site_grad && site->layer == layer && site->kind == kind) {
      *site_grad = grad.row(site->pos).transpose();
    }
  };

  if (wgrad) wgrad->unembed.noalias() += dlogits.transpose() * tape.lnf_y;
  Mat<T> dlnf_y = dlogits * w.unembed;
  Mat<T> dx = layer_norm_backward(tape.lnf_hat, tape.lnf_rstd, w.lnf_g, dlnf_y,
                                  wgrad ? &wgrad->lnf_g : nullptr,
                                  wgrad ? &wgrad->lnf_b : nullptr);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto& lt = tape.layers[static_cast<size_t>(l)];
    const auto& lw = w.layers[static_cast<size_t>(l)];
    auto* lg = wgrad ? &wgrad->layers[static_cast<size_t>(l)] : nullptr;

    // x_{l+1} = x_mid + mlp_out
    Mat<T> d_mlp_out = dx;
    read_site(l, SiteKind::mlp_out, d_mlp_out);
    sever_patched_rows(in, l, SiteKind::mlp_out, d_mlp_out);

    if (lg) {
      lg->w_out.noalias() += d_mlp_out.transpose() * lt.inner;
      lg->b_out += d_mlp_out.colwise().sum().transpose();
    }
    Mat<T> d_inner = d_mlp_out * lw.w_out;
    read_site(l, SiteKind::mlp_inner, d_inner);
    Mat<T> d_pre = gelu_backward(lt.pre_gelu, lt.gelu_t, d_inner);
    if (lg) {
      lg->w_in.noalias() += d_pre.transpose() * lt.ln2_y;
      lg->b_in += d_pre.colwise().sum().transpose();
    }
    Mat<T> d_ln2_y = d_pre * lw.w_in;
    Mat<T> dx_mid = dx + layer_norm_backward(lt.ln2_hat, lt.ln2_rstd, lw.ln2_g, d_ln2_y,
                                             lg ? &lg->ln2_g : nullptr,
                                             lg ? &lg->ln2_b : nullptr);

    // x_mid = x_in + attn_out
    Mat<T> d_attn_out = dx_mid;
    read_site(l, SiteKind::attn_out, d_attn_out);
    sever_patched_rows(in, l, SiteKind::attn_out, d_attn_out);

    if (lg) {
      lg->wo.noalias() += d_attn_out.transpose() * lt.ctx;
      lg->bo += d_attn_out.colwise().sum().transpose();
    }
    Mat<T> d_ctx = d_attn_out * lw.wo;

    Mat<T> dq = Mat<T>::Zero(rows, d);
    Mat<T> dk = Mat<T>::Zero(rows, d);
    Mat<T> dv = Mat<T>::Zero(rows, d);
    for (size_t s = 0; s < in.segments.size(); ++s) {
      const auto& seg = in.segments[s];
      for (int h = 0; h < H; ++h) {
        const Mat<T>& P = lt.probs[s * static_cast<size_t>(H) + static_cast<size_t>(h)];
        auto qh = lt.q.block(seg.start, h * dh, seg.len, dh);
        auto kh = lt.k.block(seg.start, h * dh, seg.len, dh);
        auto vh = lt.v.block(seg.start, h * dh, seg.len, dh);
        auto dctx_h = d_ctx.block(seg.start, h * dh, seg.len, dh);

        Mat<T> dP;
        dP.noalias() = dctx_h * vh.transpose();
        dv.block(seg.start, h * dh, seg.len, dh).noalias() = P.transpose() * dctx_h;

        Vec<T> row_dot = (dP.array() * P.array()).rowwise().sum();
        Mat<T> dS = (P.array() * (dP.array().colwise() - row_dot.array())).matrix();
        dq.block(seg.start, h * dh, seg.len, dh).noalias() = dS * kh * scale;
        dk.block(seg.start, h * dh, seg.len, dh).noalias() = dS.transpose() * qh * scale;
      }
    }

    if (lg) {
      lg->wq.noalias() += dq.transpose() * lt.ln1_y;
      lg->bq += dq.colwise().sum().transpose();
      lg->wk.noalias() += dk.transpose() * lt.ln1_y;
      lg->bk += dk.colwise().sum().transpose();
      lg->wv.noalias() += dv.transpose() * lt.ln1_y;
      lg->bv += dv.colwise().sum().transpose();
    }
    Mat<T> d_ln1_y = dq * lw.wq;
    d_ln1_y.noalias() += dk * lw.wk;
    d_ln1_y.noalias() += dv * lw.wv;

    Mat<T> dx_in = dx_mid + layer_norm_backward(lt.ln1_hat, lt.ln1_rstd, lw.ln1_g, d_ln1_y,
                                                lg ? &lg->ln1_g : nullptr,
                                                lg ? &lg->ln1_b : nullptr);
    read_site(l, SiteKind::residual, dx_in);
    sever_patched_rows(in, l, SiteKind::residual, dx_in);
    dx = std::move(dx_in);
  }

  if (wgrad) {
    for (const auto& seg : in.segments) {
      for (int p = 0; p < seg.len; ++p) {
        int tok = in.tokens[static_cast<size_t>(seg.start + p)];
        wgrad->tok_emb.row(tok) += dx.row(seg.start + p);
        wgrad->pos_emb.row(p) += dx.row(seg.start + p);
      }
    }
  }
}

/// Mean teacher-forced log-prob of each run's target, read from packed logits.
/// Runs are (segment, prompt_len, target_len) with target tokens trailing.
struct ScoredRun {
  int segment = 0;
  int prompt_len = 0;
  int target_len = 0;
};

template <typename T>
double scored_run_logprob(const PackInput<T>& in, const Tape<T>& tape,
                          const ScoredRun& run) {
  const auto& seg = in.segments[static_cast<size_t>(run.segment)];
  double total = 0.0;
  for (int t = 0; t < run.target_len; ++t) {
    int row = seg.start + run.prompt_len - 1 + t;
    int tok = in.tokens[static_cast<size_t>(row + 1)];
    const auto& logit_row = tape.logits.row(row);
    double m = static_cast<double>(logit_row.maxCoeff());
    double denom = 0.0;
    for (int j = 0; j < logit_row.size(); ++j) {
      denom += std::exp(static_cast<double>(logit_row(j)) - m);
    }
    total += static_cast<double>(logit_row(tok)) - m - std::log(denom);
  }
  return total / static_cast<double>(run.target_len);
}

/// dlogits rows for the −mean-log-prob loss of one scored run.
template <typename T>
void scored_run_dlogits(const PackInput<T>& in, const Tape<T>& tape,
                        const ScoredRun& run, Mat<T>& dlogits) {
  const auto& seg = in.segments[static_cast<size_t>(run.segment)];
  const T inv_n = static_cast<T>(1) / static_cast<T>(run.target_len);
  for (int t = 0; t < run.target_len; ++t) {
    int row = seg.start + run.prompt_len - 1 + t;
    int tok = in.tokens[static_cast<size_t>(row + 1)];
    const auto& logit_row = tape.logits.row(row);
    T m = logit_row.maxCoeff();
    Eigen::Array<T, 1, Eigen::Dynamic> p = (logit_row.array() - m).exp();
    p /= p.sum();
    dlogits.row(row) = (p * inv_n).matrix();
    dlogits(row, tok) -= inv_n;
  }
}

}  // namespace relab::detail
