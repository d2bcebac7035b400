// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#include "relab/model.hpp"

#include "model_impl.hpp"

#include <algorithm>
#include <random>

namespace relab {

using detail::PackInput;
using detail::ResolvedPatch;
using detail::ScoredRun;
using detail::Segment;
using detail::Tape;

void ModelConfig::validate() const {
  auto positive = [](int v, const char* field) {
    if (v <= 0) throw ValidationError(std::string("ModelConfig.") + field + " must be > 0");
  };
  positive(n_layers, "n_layers");
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(d_mlp, "d_mlp");
  positive(vocab_size, "vocab_size");
  positive(max_seq_len, "max_seq_len");
  if (n_layers < 4) {
    throw ValidationError("ModelConfig.n_layers must be >= 4 (early/middle layer groups)");
  }
  if (d_model % n_heads != 0) {
    throw ValidationError("ModelConfig.d_model must be divisible by n_heads");
  }
}

const char* site_kind_name(SiteKind kind) {
  switch (kind) {
    case SiteKind::residual: return "residual";
    case SiteKind::attn_out: return "attn_out";
    case SiteKind::mlp_out: return "mlp_out";
    case SiteKind::mlp_inner: return "mlp_inner";
  }
  return "?";
}

SiteKind site_kind_from_name(const std::string& name) {
  if (name == "residual") return SiteKind::residual;
  if (name == "attn_out") return SiteKind::attn_out;
  if (name == "mlp_out") return SiteKind::mlp_out;
  if (name == "mlp_inner") return SiteKind::mlp_inner;
  throw ValidationError("unknown site kind: " + name);
}

const char* form_name(Form f) {
  switch (f) {
    case Form::formula: return "formula";
    case Form::description: return "description";
    case Form::instance: return "instance";
  }
  return "?";
}

Form form_from_name(const std::string& name) {
  if (name == "formula") return Form::formula;
  if (name == "description") return Form::description;
  if (name == "instance") return Form::instance;
  throw ValidationError("unknown form: " + name);
}

Model build_model(const ModelConfig& config) {
  config.validate();
  Model m;
  m.config = config;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  const float w_std = 0.02f;
  // Residual-branch output projections are scaled down with depth, the usual
  // stabilization for deep pre-norm stacks.
  const float o_std = 0.02f / std::sqrt(2.0f * static_cast<float>(config.n_layers));

  auto fill = [&](MatF& mat, int rows, int cols, float std_dev) {
    mat.resize(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) mat(i, j) = std_dev * gauss(rng);
    }
  };
  auto zeros = [](VecF& v, int n) { v = VecF::Zero(n); };
  auto ones = [](VecF& v, int n) { v = VecF::Ones(n); };

  auto& w = m.w;
  fill(w.tok_emb, config.vocab_size, config.d_model, w_std);
  fill(w.pos_emb, config.max_seq_len, config.d_model, w_std);
  w.layers.resize(static_cast<size_t>(config.n_layers));
  for (auto& lw : w.layers) {
    ones(lw.ln1_g, config.d_model);
    zeros(lw.ln1_b, config.d_model);
    fill(lw.wq, config.d_model, config.d_model, w_std);
    fill(lw.wk, config.d_model, config.d_model, w_std);
    fill(lw.wv, config.d_model, config.d_model, w_std);
    fill(lw.wo, config.d_model, config.d_model, o_std);
    zeros(lw.bq, config.d_model);
    zeros(lw.bk, config.d_model);
    zeros(lw.bv, config.d_model);
    zeros(lw.bo, config.d_model);
    ones(lw.ln2_g, config.d_model);
    zeros(lw.ln2_b, config.d_model);
    fill(lw.w_in, config.d_mlp, config.d_model, w_std);
    zeros(lw.b_in, config.d_mlp);
    fill(lw.w_out, config.d_model, config.d_mlp, o_std);
    zeros(lw.b_out, config.d_model);
  }
  ones(w.lnf_g, config.d_model);
  zeros(w.lnf_b, config.d_model);
  fill(w.unembed, config.vocab_size, config.d_model, w_std);
  return m;
}

WeightsT<double> to_double(const Weights& w) {
  WeightsT<double> out;
  out.tok_emb = w.tok_emb.cast<double>();
  out.pos_emb = w.pos_emb.cast<double>();
  out.layers.resize(w.layers.size());
  for (size_t l = 0; l < w.layers.size(); ++l) {
    const auto& a = w.layers[l];
    auto& b = out.layers[l];
    b.ln1_g = a.ln1_g.cast<double>();
    b.ln1_b = a.ln1_b.cast<double>();
    b.wq = a.wq.cast<double>();
    b.wk = a.wk.cast<double>();
    b.wv = a.wv.cast<double>();
    b.wo = a.wo.cast<double>();
    b.bq = a.bq.cast<double>();
    b.bk = a.bk.cast<double>();
    b.bv = a.bv.cast<double>();
    b.bo = a.bo.cast<double>();
    b.ln2_g = a.ln2_g.cast<double>();
    b.ln2_b = a.ln2_b.cast<double>();
    b.w_in = a.w_in.cast<double>();
    b.b_in = a.b_in.cast<double>();
    b.w_out = a.w_out.cast<double>();
    b.b_out = a.b_out.cast<double>();
  }
  out.lnf_g = w.lnf_g.cast<double>();
  out.lnf_b = w.lnf_b.cast<double>();
  out.unembed = w.unembed.cast<double>();
  return out;
}

std::uint64_t weights_checksum(const Model& model) {
  std::uint64_t h = kFnvOffset;
  model.w.for_each_tensor([&](const std::string& name, int r, int c, const float* data) {
    h = fnv1a(name, h);
    h = fnv1a(data, static_cast<std::size_t>(r) * static_cast<std::size_t>(c) * sizeof(float), h);
  });
  return h;
}

bool weights_equal(const Model& a, const Model& b) {
  if (a.w.total_params() != b.w.total_params()) return false;
  return weights_checksum(a) == weights_checksum(b);
}

namespace {

void validate_tokens(const ModelConfig& cfg, std::span<const int> tokens) {
  if (tokens.empty()) throw ValidationError("token sequence is empty");
  if (static_cast<int>(tokens.size()) > cfg.max_seq_len) {
    throw ValidationError("sequence length " + std::to_string(tokens.size()) +
                          " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  for (int t : tokens) {
    if (t < 0 || t >= cfg.vocab_size) {
      throw ValidationError("token id out of range: " + std::to_string(t));
    }
  }
}

void validate_site(const ModelConfig& cfg, const Site& s, int seq_len, bool for_patch) {
  if (s.layer < 0 || s.layer >= cfg.n_layers) {
    throw ValidationError("site layer out of range: " + std::to_string(s.layer));
  }
  if (s.pos < 0 || s.pos >= seq_len) {
    throw ValidationError("site position out of range: " + std::to_string(s.pos));
  }
  if (for_patch && s.kind == SiteKind::mlp_inner) {
    throw ValidationError("mlp_inner sites are capture-only");
  }
}

template <typename T>
ResolvedPatch<T> resolve_patch(const ModelConfig& cfg, const Patch& p, int seq_len,
                               int row_offset) {
  validate_site(cfg, p.site, seq_len, /*for_patch=*/true);
  if (p.value.size() != cfg.d_model) {
    throw ValidationError("patch value has wrong dimension");
  }
  if (!p.value.allFinite()) throw ValidationError("patch value is not finite");
  ResolvedPatch<T> rp;
  rp.layer = p.site.layer;
  rp.kind = p.site.kind;
  rp.row = row_offset + p.site.pos;
  rp.value = p.value.template cast<T>();
  return rp;
}

}  // namespace

ForwardResult forward(const Model& model, std::span<const int> tokens,
                      const CaptureSpec* capture, std::span<const Patch> patches,
                      const NoiseSpec* noise) {
  const auto& cfg = model.config;
  validate_tokens(cfg, tokens);
  const int len = static_cast<int>(tokens.size());

  PackInput<float> in;
  in.tokens.assign(tokens.begin(), tokens.end());
  in.segments.push_back({0, len});
  for (const auto& p : patches) in.patches.push_back(resolve_patch<float>(cfg, p, len, 0));
  if (noise) in.noise.push_back({0, *noise});

  std::vector<Site> cap_sites;
  std::vector<VecF> captured;
  detail::CaptureSink<float> sink;
  if (capture) {
    for (const auto& s : capture->sites) {
      validate_site(cfg, s, len, /*for_patch=*/false);
      cap_sites.push_back(s);
    }
    captured.resize(cap_sites.size());
    sink.sites = &cap_sites;
    sink.out = &captured;
  }

  Tape<float> tape;
  detail::run_forward(cfg, model.w, in, tape, sink);

  ForwardResult out;
  out.logits = std::move(tape.logits);
  out.captured = std::move(captured);
  return out;
}

double target_logprob(const Model& model, std::span<const int> prompt,
                      std::span<const int> target, std::span<const Patch> patches,
                      const NoiseSpec* noise) {
  if (target.empty()) throw ValidationError("target is empty");
  SequenceRun run;
  run.prompt.assign(prompt.begin(), prompt.end());
  run.target.assign(target.begin(), target.end());
  run.patches.assign(patches.begin(), patches.end());
  if (noise) run.noise = *noise;
  return batch_target_scores(model, std::span<const SequenceRun>(&run, 1))[0];
}

std::vector<double> batch_target_scores(const Model& model,
                                        std::span<const SequenceRun> runs) {
  const auto& cfg = model.config;
  std::vector<double> scores(runs.size());

  // Chunk into packs so tape memory stays bounded.
  constexpr int kRowBudget = 4096;
  size_t i = 0;
  while (i < runs.size()) {
    PackInput<float> in;
    std::vector<ScoredRun> scored;
    size_t first = i;
    while (i < runs.size()) {
      const auto& r = runs[i];
      if (r.prompt.empty()) throw ValidationError("prompt is empty");
      if (r.target.empty()) throw ValidationError("target is empty");
      const int len = static_cast<int>(r.prompt.size() + r.target.size());
      if (!in.tokens.empty() && in.rows() + len > kRowBudget) break;
      const int start = in.rows();
      in.segments.push_back({start, len});
      in.tokens.insert(in.tokens.end(), r.prompt.begin(), r.prompt.end());
      in.tokens.insert(in.tokens.end(), r.target.begin(), r.target.end());
      validate_tokens(cfg, std::span<const int>(in.tokens).subspan(
                               static_cast<size_t>(start), static_cast<size_t>(len)));
      for (const auto& p : r.patches) {
        in.patches.push_back(resolve_patch<float>(cfg, p, len, start));
      }
      if (r.noise) {
        in.noise.push_back({static_cast<int>(in.segments.size()) - 1, *r.noise});
      }
      scored.push_back({static_cast<int>(in.segments.size()) - 1,
                        static_cast<int>(r.prompt.size()),
                        static_cast<int>(r.target.size())});
      ++i;
    }
    Tape<float> tape;
    detail::run_forward(cfg, model.w, in, tape);
    for (size_t j = 0; j < scored.size(); ++j) {
      scores[first + j] = std::exp(detail::scored_run_logprob(in, tape, scored[j]));
    }
  }
  return scores;
}

namespace {

template <typename T>
std::pair<Eigen::Matrix<T, Eigen::Dynamic, 1>, double> value_grad_impl(
    const ModelConfig& cfg, const WeightsT<T>& w, std::span<const int> prompt,
    Site site, const Eigen::Matrix<T, Eigen::Dynamic, 1>& v,
    std::span<const int> target) {
  if (target.empty()) throw ValidationError("target is empty");
  if (site.kind != SiteKind::mlp_out) {
    throw ValidationError("value gradients are defined at mlp_out sites");
  }
  if (!v.allFinite()) throw ValidationError("value vector is not finite");
  if (v.size() != cfg.d_model) throw ValidationError("value vector has wrong dimension");

  const int len = static_cast<int>(prompt.size() + target.size());
  PackInput<T> in;
  in.tokens.reserve(static_cast<size_t>(len));
  in.tokens.insert(in.tokens.end(), prompt.begin(), prompt.end());
  in.tokens.insert(in.tokens.end(), target.begin(), target.end());
  in.segments.push_back({0, len});
  validate_tokens(cfg, in.tokens);
  validate_site(cfg, site, static_cast<int>(prompt.size()), /*for_patch=*/true);
  in.patches.push_back({site.layer, site.kind, site.pos, v});

  Tape<T> tape;
  detail::run_forward(cfg, w, in, tape);
  ScoredRun run{0, static_cast<int>(prompt.size()), static_cast<int>(target.size())};
  double logprob = detail::scored_run_logprob(in, tape, run);

  detail::Mat<T> dlogits = detail::Mat<T>::Zero(len, cfg.vocab_size);
  detail::scored_run_dlogits(in, tape, run, dlogits);

  Eigen::Matrix<T, Eigen::Dynamic, 1> grad;
  detail::run_backward(cfg, w, in, tape, dlogits, static_cast<WeightsT<T>*>(nullptr),
                       &site, &grad);
  return {grad, -logprob};
}

}  // namespace

VecD value_grad(const Model& model, std::span<const int> prompt, Site site,
                const VecD& v, std::span<const int> target) {
  WeightsT<double> wd = to_double(model.w);
  return value_grad_impl<double>(model.config, wd, prompt, site, v, target).first;
}

std::pair<VecF, double> value_loss_grad(const Model& model, std::span<const int> prompt,
                                        Site site, const VecF& v,
                                        std::span<const int> target) {
  return value_grad_impl<float>(model.config, model.w, prompt, site, v, target);
}

std::vector<int> greedy_continuation(const Model& model, std::span<const int> prompt,
                                     int n_tokens) {
  std::vector<int> tokens(prompt.begin(), prompt.end());
  std::vector<int> out;
  for (int i = 0; i < n_tokens; ++i) {
    if (static_cast<int>(tokens.size()) >= model.config.max_seq_len) break;
    ForwardResult res = forward(model, tokens);
    int best = 0;
    res.logits.row(res.logits.rows() - 1).maxCoeff(&best);
    tokens.push_back(best);
    out.push_back(best);
  }
  return out;
}

bool target_is_argmax(const Model& model, std::span<const int> prompt,
                      std::span<const int> target) {
  if (target.empty()) throw ValidationError("target is empty");
  std::vector<int> tokens(prompt.begin(), prompt.end());
  tokens.insert(tokens.end(), target.begin(), target.end());
  ForwardResult res = forward(model, tokens);
  for (size_t t = 0; t < target.size(); ++t) {
    int row = static_cast<int>(prompt.size() + t) - 1;
    int best = 0;
    res.logits.row(row).maxCoeff(&best);
    if (best != target[t]) return false;
  }
  return true;
}

}  // namespace relab
