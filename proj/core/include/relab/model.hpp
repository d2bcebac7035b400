// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "relab/common.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace relab {

struct ModelConfig {
  int n_layers = 12;
  int d_model = 128;
  int n_heads = 4;
  int d_mlp = 512;
  int vocab_size = 0;
  int max_seq_len = 48;
  std::uint64_t seed = 1;

  /// Throws ValidationError naming the offending field.
  void validate() const;
  int head_dim() const { return d_model / n_heads; }
};

// Intervention sites. `residual` at layer l is the stream entering block l
// (layer 0 = the input embeddings), so patching every corrupted position at
// (0, residual) restores the embedding states exactly. `attn_out`/`mlp_out`
// are the sublayer outputs before they are added to the stream; `mlp_inner`
// is the activation entering the second MLP matrix (capture only).
enum class SiteKind { residual, attn_out, mlp_out, mlp_inner };

const char* site_kind_name(SiteKind kind);
SiteKind site_kind_from_name(const std::string& name);

struct Site {
  int layer = 0;
  SiteKind kind = SiteKind::mlp_out;
  int pos = 0;
  bool operator==(const Site&) const = default;
};

struct Patch {
  Site site;
  VecF value;
};

/// Gaussian corruption of the input embeddings over token span [begin, end).
/// `sigma` is the per-dimension standard deviation (see NoiseScale below).
struct NoiseSpec {
  int begin = 0;
  int end = 0;
  float sigma = 0.0f;
  std::uint64_t seed = 0;
};

struct CaptureSpec {
  std::vector<Site> sites;
};

template <typename T>
struct LayerWeightsT {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Vec ln1_g, ln1_b;
  Mat wq, wk, wv, wo;  // [d_model, d_model], applied as x · W^T
  Vec bq, bk, bv, bo;
  Vec ln2_g, ln2_b;
  Mat w_in;   // [d_mlp, d_model]
  Vec b_in;
  Mat w_out;  // [d_model, d_mlp] — the edit target
  Vec b_out;
};

template <typename T>
struct WeightsT {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Mat tok_emb;  // [vocab, d_model]
  Mat pos_emb;  // [max_seq_len, d_model]
  std::vector<LayerWeightsT<T>> layers;
  Vec lnf_g, lnf_b;
  Mat unembed;  // [vocab, d_model]

  /// Visits every tensor in the canonical (checkpoint manifest) order.
  /// fn(name, rows, cols, data pointer); vectors are [n, 1].
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    auto mat = [&](const std::string& name, Mat& m) {
      fn(name, static_cast<int>(m.rows()), static_cast<int>(m.cols()), m.data());
    };
    auto vec = [&](const std::string& name, Vec& v) {
      fn(name, static_cast<int>(v.size()), 1, v.data());
    };
    mat("tok_emb", tok_emb);
    mat("pos_emb", pos_emb);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      std::string p = "layers." + std::to_string(l) + ".";
      auto& lw = layers[l];
      vec(p + "ln1.g", lw.ln1_g);
      vec(p + "ln1.b", lw.ln1_b);
      mat(p + "attn.wq", lw.wq);
      vec(p + "attn.bq", lw.bq);
      mat(p + "attn.wk", lw.wk);
      vec(p + "attn.bk", lw.bk);
      mat(p + "attn.wv", lw.wv);
      vec(p + "attn.bv", lw.bv);
      mat(p + "attn.wo", lw.wo);
      vec(p + "attn.bo", lw.bo);
      vec(p + "ln2.g", lw.ln2_g);
      vec(p + "ln2.b", lw.ln2_b);
      mat(p + "mlp.w_in", lw.w_in);
      vec(p + "mlp.b_in", lw.b_in);
      mat(p + "mlp.w_out", lw.w_out);
      vec(p + "mlp.b_out", lw.b_out);
    }
    vec("lnf.g", lnf_g);
    vec("lnf.b", lnf_b);
    mat("unembed", unembed);
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<WeightsT*>(this)->for_each_tensor(
        [&](const std::string& name, int r, int c, T* data) {
          fn(name, r, c, static_cast<const T*>(data));
        });
  }

  std::size_t total_params() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, int r, int c, const T*) {
      n += static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
    });
    return n;
  }
};

using Weights = WeightsT<float>;

struct Model {
  ModelConfig config;
  Weights w;
};

/// Deterministic initialization from config.seed; equal configs produce
/// bit-identical weights.
Model build_model(const ModelConfig& config);

WeightsT<double> to_double(const Weights& w);

/// FNV-1a over the canonical float32 serialization of all tensors.
std::uint64_t weights_checksum(const Model& model);

bool weights_equal(const Model& a, const Model& b);

struct ForwardResult {
  MatF logits;                 // [T, vocab]
  std::vector<VecF> captured;  // parallel to CaptureSpec::sites
};

/// One forward pass. Noise (if any) is applied to the input embeddings
/// before layer 0; each patch overwrites its site's value before the value
/// enters the residual stream; captures read post-patch values.
ForwardResult forward(const Model& model, std::span<const int> tokens,
                      const CaptureSpec* capture = nullptr,
                      std::span<const Patch> patches = {},
                      const NoiseSpec* noise = nullptr);

/// exp of the mean teacher-forced log-probability of `target` given `prompt`;
/// a single-token target yields the exact next-token probability. In (0, 1].
double target_logprob(const Model& model, std::span<const int> prompt,
                      std::span<const int> target,
                      std::span<const Patch> patches = {},
                      const NoiseSpec* noise = nullptr);

/// Several independent scored runs packed into shared GEMMs. Patch positions
/// and noise spans are sequence-local.
struct SequenceRun {
  std::vector<int> prompt;
  std::vector<int> target;
  std::vector<Patch> patches;
  std::optional<NoiseSpec> noise;
};

std::vector<double> batch_target_scores(const Model& model,
                                        std::span<const SequenceRun> runs);

/// d(−log p(target | prompt with `site` patched to v)) / dv, by exact
/// reverse-mode differentiation (double precision). Site kind must be mlp_out.
VecD value_grad(const Model& model, std::span<const int> prompt, Site site,
                const VecD& v, std::span<const int> target);

/// Single-precision companion used inside value optimization loops.
/// Returns (gradient, loss) where loss = −log p(target | patched prompt).
std::pair<VecF, double> value_loss_grad(const Model& model,
                                        std::span<const int> prompt, Site site,
                                        const VecF& v,
                                        std::span<const int> target);

std::vector<int> greedy_continuation(const Model& model,
                                     std::span<const int> prompt, int n_tokens);

/// Teacher-forced argmax check: true iff the model's argmax continuation of
/// `prompt` reproduces every token of `target`.
bool target_is_argmax(const Model& model, std::span<const int> prompt,
                      std::span<const int> target);

}  // namespace relab
