// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#include "relab/edit.hpp"

#include "relab/io.hpp"
#include "relab/parallel.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace relab {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::rome_single: return "rome_single";
    case Strategy::memit_contiguous: return "memit_contiguous";
    case Strategy::flsu: return "flsu";
    case Strategy::flju: return "flju";
    case Strategy::sfsu: return "sfsu";
    case Strategy::dmle: return "dmle";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  for (Strategy s : {Strategy::rome_single, Strategy::memit_contiguous, Strategy::flsu,
                     Strategy::flju, Strategy::sfsu, Strategy::dmle}) {
    if (name == strategy_name(s)) return s;
  }
  throw ValidationError("unknown strategy: " + name);
}

void SolverHyper::validate() const {
  if (lambda_c < 0) throw ValidationError("SolverHyper.lambda_c must be >= 0");
  if (cov_samples < 0) throw ValidationError("SolverHyper.cov_samples must be >= 0");
  if (value_steps < 1) throw ValidationError("SolverHyper.value_steps must be >= 1");
  if (value_lr < 0) throw ValidationError("SolverHyper.value_lr must be >= 0");
  if (value_l2 < 0) throw ValidationError("SolverHyper.value_l2 must be >= 0");
  if (target_stop < 0) throw ValidationError("SolverHyper.target_stop must be >= 0");
}

void EditPlan::validate(int n_layers) const {
  solver.validate();
  auto check_group = [&](const std::vector<int>& layers, const char* name) {
    if (layers.empty()) {
      throw ValidationError(std::string("EditPlan.") + name + " is empty");
    }
    for (size_t i = 0; i < layers.size(); ++i) {
      if (layers[i] < 0 || layers[i] >= n_layers) {
        throw ValidationError(std::string("EditPlan.") + name + " layer out of range: " +
                              std::to_string(layers[i]));
      }
      if (i > 0 && layers[i] <= layers[i - 1]) {
        throw ValidationError(std::string("EditPlan.") + name +
                              " must be strictly increasing");
      }
    }
  };
  check_group(fd_layers, "fd_layers");
  check_group(i_layers, "i_layers");
  if (strategy == Strategy::rome_single && fd_layers.size() != 1) {
    throw ValidationError("rome_single uses exactly one layer");
  }
}

// ---------------------------------------------------------------------------
// Closed-form solve
// ---------------------------------------------------------------------------

MatD solve_update(const MatD& W, const KVSet& kvset, const MatD& C, SolveInfo* info,
                  double damping_rel) {
  if (kvset.pairs.empty()) throw ValidationError("solve_update: empty KVSet");
  const long dv = W.rows();
  const long dk = W.cols();
  const long n = static_cast<long>(kvset.pairs.size());

  MatD K(dk, n), V(dv, n);
  for (long i = 0; i < n; ++i) {
    const auto& p = kvset.pairs[static_cast<size_t>(i)];
    if (p.key.size() != dk || p.value.size() != dv) {
      throw ValidationError("solve_update: pair dimensions do not match W");
    }
    if (!p.key.allFinite() || !p.value.allFinite()) {
      throw ValidationError("solve_update: non-finite key/value pair");
    }
    K.col(i) = p.key;
    V.col(i) = p.value;
  }

  MatD A = K * K.transpose();
  if (C.size() != 0) {
    if (C.rows() != dk || C.cols() != dk) {
      throw ValidationError("solve_update: C has wrong shape");
    }
    A += C;
  }
  const double mean_diag = A.diagonal().mean();
  const double delta = std::max(damping_rel * mean_diag, 1e-30);
  A.diagonal().array() += delta;

  MatD R = V - W * K;
  Eigen::LDLT<MatD> ldlt(A);
  double cond = 0.0;
  {
    VecD d = ldlt.vectorD().cwiseAbs();
    double dmin = d.minCoeff();
    cond = dmin > 0 ? d.maxCoeff() / dmin : std::numeric_limits<double>::infinity();
  }
  if (ldlt.info() != Eigen::Success) {
    throw NumericalError("solve_update: singular system after damping (condition ~" +
                         std::to_string(cond) + ")");
  }
  MatD Y = ldlt.solve(K * R.transpose());  // [dk, dv]
  MatD delta_w = Y.transpose();
  if (!delta_w.allFinite()) {
    throw NumericalError("solve_update: non-finite solution (condition ~" +
                         std::to_string(cond) + ")");
  }
  if (info) {
    info->residual = ((W + delta_w) * K - V).norm();
    info->delta_frobenius = delta_w.norm();
    info->condition = cond;
  }
  return delta_w;
}

// ---------------------------------------------------------------------------
// Keys
// ---------------------------------------------------------------------------

VecD compute_key(const Model& model, const Tokenizer& tok, std::span<const int> prompt,
                 std::pair<int, int> subject_span, int layer,
                 std::span<const std::string> prefixes) {
  if (subject_span.first < 0 || subject_span.second <= subject_span.first ||
      subject_span.second > static_cast<int>(prompt.size())) {
    throw ValidationError("compute_key: bad subject span");
  }
  const int pos = subject_span.second - 1;

  auto one_run = [&](const std::vector<int>& prefix_tokens) -> VecD {
    std::vector<int> tokens = prefix_tokens;
    tokens.insert(tokens.end(), prompt.begin(), prompt.end());
    CaptureSpec cap;
    cap.sites.push_back(
        {layer, SiteKind::mlp_inner, static_cast<int>(prefix_tokens.size()) + pos});
    ForwardResult res = forward(model, tokens, &cap);
    return res.captured[0].cast<double>();
  };

  if (prefixes.empty()) return one_run({});
  VecD sum = VecD::Zero(model.config.d_mlp);
  for (const auto& prefix : prefixes) {
    sum += one_run(prefix.empty() ? std::vector<int>{} : tok.encode(prefix));
  }
  return sum / static_cast<double>(prefixes.size());
}

VecD compute_key(const Model& model, const Tokenizer& tok, const std::string& prompt,
                 const std::string& subject, int layer,
                 std::span<const std::string> prefixes) {
  std::vector<int> tokens = tok.encode(prompt);
  auto span = tok.find_span(tokens, subject);
  if (!span) {
    throw ValidationError("compute_key: subject \"" + subject + "\" not found in prompt");
  }
  return compute_key(model, tok, tokens, *span, layer, prefixes);
}

std::vector<std::string> default_key_prefixes(const std::vector<std::string>& corpus,
                                              int count, std::uint64_t seed) {
  std::vector<std::string> prefixes = {""};
  if (corpus.empty() || count <= 1) return prefixes;
  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 0x6b657970u));  // key-prefix stream
  std::shuffle(order.begin(), order.end(), rng);
  for (size_t i = 0; i < order.size() && static_cast<int>(prefixes.size()) < count; ++i) {
    auto words = Tokenizer::split(corpus[order[i]]);
    if (words.size() < 3) continue;
    prefixes.push_back(words[0] + " " + words[1] + " " + words[2]);
  }
  return prefixes;
}

// ---------------------------------------------------------------------------
// Value optimization
// ---------------------------------------------------------------------------

VecD optimize_value(const Model& model, std::span<const int> prompt,
                    std::span<const int> target, int layer, int position,
                    const SolverHyper& hyper) {
  hyper.validate();
  if (target.empty()) throw ValidationError("optimize_value: empty target");

  Site site{layer, SiteKind::mlp_out, position};
  CaptureSpec cap;
  cap.sites.push_back(site);
  ForwardResult clean = forward(model, prompt, &cap);
  const VecF v0 = clean.captured[0];

  auto patched_prob = [&](const VecF& v) {
    Patch patch{site, v};
    return target_logprob(model, prompt, target, std::span<const Patch>(&patch, 1));
  };

  VecF v = v0;
  VecF best = v0;
  double best_prob = patched_prob(v0);

  const float lr = static_cast<float>(hyper.value_lr);
  const float l2 = static_cast<float>(hyper.value_l2);
  for (int step = 1; step <= hyper.value_steps; ++step) {
    if (best_prob >= hyper.target_stop) break;
    auto [grad, loss] = value_loss_grad(model, prompt, site, v, target);
    grad += 2.0f * l2 * (v - v0);
    if (!grad.allFinite() || !std::isfinite(loss)) {
      throw NumericalError("optimize_value: non-finite at step " + std::to_string(step));
    }
    v -= lr * grad;
    if (!v.allFinite()) {
      throw NumericalError("optimize_value: value diverged at step " + std::to_string(step));
    }
    double prob = patched_prob(v);
    if (prob > best_prob) {
      best_prob = prob;
      best = v;
    }
  }
  return best.cast<double>();
}

// ---------------------------------------------------------------------------
// Covariance
// ---------------------------------------------------------------------------

MatD estimate_covariance(const Model& model, const Tokenizer& tok,
                         const std::vector<std::string>& corpus_prompts, int layer,
                         int cov_samples, double lambda_c) {
  if (corpus_prompts.empty()) throw ValidationError("estimate_covariance: empty corpus");
  if (cov_samples < 1) throw ValidationError("estimate_covariance: cov_samples must be >= 1");
  const int d = model.config.d_mlp;
  MatD C = MatD::Zero(d, d);
  int n = 0;
  for (size_t i = 0; i < corpus_prompts.size() && n < cov_samples; ++i) {
    std::vector<int> tokens;
    try {
      tokens = tok.encode(corpus_prompts[i]);
    } catch (const ValidationError&) {
      continue;  // unrelated corpus may contain lines outside the vocabulary
    }
    if (tokens.empty() || static_cast<int>(tokens.size()) > model.config.max_seq_len) {
      continue;
    }
    CaptureSpec cap;
    for (int p = 0; p < static_cast<int>(tokens.size()); ++p) {
      cap.sites.push_back({layer, SiteKind::mlp_inner, p});
    }
    ForwardResult res = forward(model, tokens, &cap);
    for (const auto& k : res.captured) {
      if (n >= cov_samples) break;
      VecD kd = k.cast<double>();
      C.noalias() += kd * kd.transpose();
      ++n;
    }
  }
  if (n == 0) throw ValidationError("estimate_covariance: no usable corpus prompts");
  return (lambda_c / static_cast<double>(n)) * C;
}

CovarianceFn zero_covariance(int d_mlp) {
  return [d_mlp](int) { return MatD::Zero(d_mlp, d_mlp); };
}

CovarianceCache::CovarianceCache(const Model& model, const Tokenizer& tok,
                                 std::vector<std::string> corpus,
                                 const SolverHyper& hyper)
    : model_(model), tok_(tok), corpus_(std::move(corpus)), hyper_(hyper) {}

MatD CovarianceCache::get(int layer) {
  auto it = cache_.find(layer);
  if (it == cache_.end()) {
    it = cache_
             .emplace(layer, estimate_covariance(model_, tok_, corpus_, layer,
                                                 hyper_.cov_samples, hyper_.lambda_c))
             .first;
  }
  return it->second;
}

CovarianceFn CovarianceCache::fn() {
  return [this](int layer) { return get(layer); };
}

// ---------------------------------------------------------------------------
// Spreading and strategies
// ---------------------------------------------------------------------------

namespace {

struct ResolvedRequest {
  std::vector<int> prompt;
  std::vector<int> target;
  std::pair<int, int> span;
  int pos = 0;  // last subject token
  Form form = Form::formula;
  std::int64_t case_id = 0;
};

ResolvedRequest resolve_request(const Tokenizer& tok, const EditRequest& r) {
  ResolvedRequest out;
  out.prompt = tok.encode(r.prompt);
  out.target = tok.encode(r.target);
  if (out.target.empty()) {
    throw ValidationError("edit request with empty target (case " +
                          std::to_string(r.case_id) + ")");
  }
  auto span = tok.find_span(out.prompt, r.subject);
  if (!span) {
    throw ValidationError("edit request: subject \"" + r.subject +
                          "\" not found in prompt (case " + std::to_string(r.case_id) + ")");
  }
  out.span = *span;
  out.pos = span->second - 1;
  out.form = r.form;
  out.case_id = r.case_id;
  return out;
}

// Residual state after the group's last block at the subject position:
// x_in + attn_out + mlp_out, all capturable sites.
VecD h_after_block(const Model& model, const ResolvedRequest& r, int layer) {
  CaptureSpec cap;
  cap.sites.push_back({layer, SiteKind::residual, r.pos});
  cap.sites.push_back({layer, SiteKind::attn_out, r.pos});
  cap.sites.push_back({layer, SiteKind::mlp_out, r.pos});
  ForwardResult res = forward(model, r.prompt, &cap);
  return res.captured[0].cast<double>() + res.captured[1].cast<double>() +
         res.captured[2].cast<double>();
}

}  // namespace

void apply_spread(Model& model, const Tokenizer& tok, const std::vector<int>& layers,
                  const std::vector<EditRequest>& requests, const SolverHyper& hyper,
                  const CovarianceFn& cov, std::span<const std::string> key_prefixes,
                  const std::string& strategy_label, EditLog* log, int jobs) {
  if (requests.empty()) return;
  hyper.validate();
  if (layers.empty()) throw ValidationError("apply_spread: empty layer group");
  for (size_t i = 1; i < layers.size(); ++i) {
    if (layers[i] <= layers[i - 1]) {
      throw ValidationError("apply_spread: layers must be strictly increasing");
    }
  }
  if (layers.front() < 0 || layers.back() >= model.config.n_layers) {
    throw ValidationError("apply_spread: layer out of range");
  }

  const int last_layer = layers.back();
  const int n_req = static_cast<int>(requests.size());

  std::vector<ResolvedRequest> resolved(requests.size());
  for (size_t i = 0; i < requests.size(); ++i) {
    resolved[i] = resolve_request(tok, requests[i]);
  }

  // Optimize values once at the last layer of the group; z is the target
  // residual state after that block.
  std::vector<VecD> z_target(requests.size());
  parallel_for(n_req, jobs, [&](int i) {
    const auto& r = resolved[static_cast<size_t>(i)];
    CaptureSpec cap;
    cap.sites.push_back({last_layer, SiteKind::residual, r.pos});
    cap.sites.push_back({last_layer, SiteKind::attn_out, r.pos});
    ForwardResult res = forward(model, r.prompt, &cap);
    VecD v_star = optimize_value(model, r.prompt, r.target, last_layer, r.pos, hyper);
    z_target[static_cast<size_t>(i)] =
        res.captured[0].cast<double>() + res.captured[1].cast<double>() + v_star;
  });

  for (size_t j = 0; j < layers.size(); ++j) {
    const int layer = layers[j];
    const double remaining = static_cast<double>(layers.size() - j);

    KVSet kvset;
    kvset.layer = layer;
    kvset.pairs.resize(requests.size());
    parallel_for(n_req, jobs, [&](int i) {
      const auto& r = resolved[static_cast<size_t>(i)];
      CaptureSpec cap;
      cap.sites.push_back({layer, SiteKind::mlp_out, r.pos});
      cap.sites.push_back({last_layer, SiteKind::residual, r.pos});
      cap.sites.push_back({last_layer, SiteKind::attn_out, r.pos});
      cap.sites.push_back({last_layer, SiteKind::mlp_out, r.pos});
      ForwardResult res = forward(model, r.prompt, &cap);
      VecD m_cur = res.captured[0].cast<double>();
      VecD h_after = res.captured[1].cast<double>() + res.captured[2].cast<double>() +
                     res.captured[3].cast<double>();

      KVPair pair;
      pair.key = compute_key(model, tok, r.prompt, r.span, layer, key_prefixes);
      pair.value = m_cur + (z_target[static_cast<size_t>(i)] - h_after) / remaining;
      pair.form = r.form;
      pair.case_id = r.case_id;
      kvset.pairs[static_cast<size_t>(i)] = std::move(pair);
    });

    MatD W = model.w.layers[static_cast<size_t>(layer)].w_out.cast<double>();
    SolveInfo info;
    MatD delta = solve_update(W, kvset, cov(layer), &info);
    model.w.layers[static_cast<size_t>(layer)].w_out += delta.cast<float>();

    if (log) {
      log->entries.push_back({layer, strategy_label, info.delta_frobenius, info.residual,
                              static_cast<int>(kvset.pairs.size())});
    }
  }
}

namespace {

std::vector<EditRequest> form_requests(const std::vector<RuleCase>& cases, Form form) {
  std::vector<EditRequest> out;
  for (const auto& c : cases) {
    const RuleForm& f = c.forms.at(form);
    out.push_back({f.prompt, c.subject, f.target_new, form, c.case_id});
  }
  return out;
}

}  // namespace

std::pair<Model, EditLog> edit_with_strategy(const Model& model, const Tokenizer& tok,
                                             const std::vector<RuleCase>& cases,
                                             const EditPlan& plan, const CovarianceFn& cov,
                                             std::span<const std::string> key_prefixes,
                                             int jobs) {
  plan.validate(model.config.n_layers);
  for (const auto& c : cases) {
    for (Form form : kAllForms) {
      if (!c.forms.count(form)) {
        throw ValidationError("case " + std::to_string(c.case_id) + " is missing the " +
                              form_name(form) + " form");
      }
    }
  }

  Model edited = model;
  EditLog log;
  const std::string label = strategy_name(plan.strategy);
  const auto& hyper = plan.solver;

  auto spread = [&](const std::vector<int>& layers, const std::vector<EditRequest>& reqs) {
    apply_spread(edited, tok, layers, reqs, hyper, cov, key_prefixes, label, &log, jobs);
  };

  auto f_reqs = form_requests(cases, Form::formula);
  auto d_reqs = form_requests(cases, Form::description);
  auto i_reqs = form_requests(cases, Form::instance);
  auto joint_fd = f_reqs;
  joint_fd.insert(joint_fd.end(), d_reqs.begin(), d_reqs.end());
  auto joint_all = joint_fd;
  joint_all.insert(joint_all.end(), i_reqs.begin(), i_reqs.end());

  switch (plan.strategy) {
    case Strategy::dmle:
      spread(plan.fd_layers, joint_fd);
      spread(plan.i_layers, i_reqs);
      break;
    case Strategy::flju:
    case Strategy::memit_contiguous:
      spread(plan.fd_layers, joint_all);
      break;
    case Strategy::flsu:
      spread(plan.fd_layers, f_reqs);
      spread(plan.fd_layers, d_reqs);
      spread(plan.fd_layers, i_reqs);
      break;
    case Strategy::sfsu:
      spread(plan.fd_layers, f_reqs);
      spread(plan.fd_layers, d_reqs);
      spread(plan.i_layers, i_reqs);
      break;
    case Strategy::rome_single:
      for (const auto& req : joint_all) {
        spread(plan.fd_layers, {req});
      }
      break;
  }
  return {std::move(edited), std::move(log)};
}

void save_edit_log(const EditLog& log, const std::filesystem::path& path) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : log.entries) {
    entries.push_back(nlohmann::json{{"layer", e.layer},
                                     {"strategy", e.strategy},
                                     {"frobenius_delta", e.frobenius_delta},
                                     {"solve_residual", e.solve_residual},
                                     {"n_pairs", e.n_pairs}});
  }
  atomic_write(path, entries.dump(2) + "\n");
}

}  // namespace relab
