// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "relab/data.hpp"
#include "relab/model.hpp"
#include "relab/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace relab {

enum class Strategy { rome_single, memit_contiguous, flsu, flju, sfsu, dmle };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct SolverHyper {
  double lambda_c = 0.1;
  int cov_samples = 1000;
  int value_steps = 25;
  double value_lr = 0.5;
  double value_l2 = 0.01;
  double target_stop = 0.95;

  void validate() const;
};

struct EditPlan {
  Strategy strategy = Strategy::dmle;
  /// Shared formula+description group; also the fixed contiguous range of
  /// the fixed-layer strategies (flsu/flju/memit_contiguous/rome_single).
  std::vector<int> fd_layers{2, 3, 4};
  /// Separate instance group (dmle/sfsu).
  std::vector<int> i_layers{7, 8, 9};
  SolverHyper solver;

  void validate(int n_layers) const;
};

struct KVPair {
  VecD key;    // [d_mlp] MLP inner activation at the subject's last token
  VecD value;  // [d_model] target MLP output
  Form form = Form::formula;
  std::int64_t case_id = 0;
};

struct KVSet {
  int layer = 0;
  std::vector<KVPair> pairs;
};

struct SolveInfo {
  double residual = 0.0;        // ‖(W+ΔW)K − V‖_F after the update
  double delta_frobenius = 0.0;
  double condition = 0.0;       // estimate for the damped normal matrix
};

/// Relative damping: δ = damping_rel · mean diagonal of (C + K Kᵀ).
inline constexpr double kDefaultDampingRel = 1e-9;

/// Closed-form regularized least-squares update:
///   ΔW = R Kᵀ (C + K Kᵀ + δI)^{-1},  R = V − W K.
/// With C = 0, δ→0 and full-column-rank K this interpolates (W+ΔW)K = V.
/// C may be empty (treated as zero). Throws NumericalError if the damped
/// system is still singular (reporting the condition estimate).
MatD solve_update(const MatD& W, const KVSet& kvset, const MatD& C,
                  SolveInfo* info = nullptr, double damping_rel = kDefaultDampingRel);

/// MLP inner activation at the subject's last token, averaged over the given
/// context prefixes prepended to the prompt (empty list = single bare run).
VecD compute_key(const Model& model, const Tokenizer& tok,
                 std::span<const int> prompt, std::pair<int, int> subject_span,
                 int layer, std::span<const std::string> prefixes = {});
VecD compute_key(const Model& model, const Tokenizer& tok, const std::string& prompt,
                 const std::string& subject, int layer,
                 std::span<const std::string> prefixes = {});

/// Deterministic prefix pool for key averaging: the empty context plus short
/// corpus-derived openers.
std::vector<std::string> default_key_prefixes(const std::vector<std::string>& corpus,
                                              int count, std::uint64_t seed);

/// Gradient steps on v from the clean value v0, minimizing
///   −log p(target | prompt with mlp_out(layer, position) ← v) + value_l2·‖v−v0‖².
/// Early-stops at target_stop; the returned v never scores below v0.
VecD optimize_value(const Model& model, std::span<const int> prompt,
                    std::span<const int> target, int layer, int position,
                    const SolverHyper& hyper);

/// C = lambda_c · (1/n) Σ k kᵀ over keys collected from unrelated corpus
/// prompts at the same layer/site (every token position, in prompt order).
MatD estimate_covariance(const Model& model, const Tokenizer& tok,
                         const std::vector<std::string>& corpus_prompts, int layer,
                         int cov_samples, double lambda_c);

using CovarianceFn = std::function<MatD(int layer)>;

CovarianceFn zero_covariance(int d_mlp);

/// Lazy per-layer covariance bound to the pre-edit model.
class CovarianceCache {
 public:
  CovarianceCache(const Model& model, const Tokenizer& tok,
                  std::vector<std::string> corpus, const SolverHyper& hyper);
  MatD get(int layer);
  CovarianceFn fn();

 private:
  const Model& model_;
  const Tokenizer& tok_;
  std::vector<std::string> corpus_;
  SolverHyper hyper_;
  std::map<int, MatD> cache_;
};

struct EditRequest {
  std::string prompt;
  std::string subject;
  std::string target;
  Form form = Form::formula;
  std::int64_t case_id = 0;
};

struct EditLayerLog {
  int layer = 0;
  std::string strategy;
  double frobenius_delta = 0.0;
  double solve_residual = 0.0;
  int n_pairs = 0;
};

struct EditLog {
  std::vector<EditLayerLog> entries;
};

void save_edit_log(const EditLog& log, const std::filesystem::path& path);

/// MEMIT-style spreading over an ascending layer group: values are optimized
/// once at the group's last layer; each layer's solve moves the captured
/// state toward the optimized value by residual/(remaining layers), with
/// keys recomputed after each applied update. Empty request set is a no-op.
void apply_spread(Model& model, const Tokenizer& tok, const std::vector<int>& layers,
                  const std::vector<EditRequest>& requests, const SolverHyper& hyper,
                  const CovarianceFn& cov, std::span<const std::string> key_prefixes,
                  const std::string& strategy_label, EditLog* log, int jobs = 0);

/// Applies `plan.strategy` to a copy of `model` and returns it with the log.
std::pair<Model, EditLog> edit_with_strategy(const Model& model, const Tokenizer& tok,
                                             const std::vector<RuleCase>& cases,
                                             const EditPlan& plan,
                                             const CovarianceFn& cov,
                                             std::span<const std::string> key_prefixes = {},
                                             int jobs = 0);

}  // namespace relab
