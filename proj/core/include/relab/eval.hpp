// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "relab/data.hpp"
#include "relab/edit.hpp"
#include "relab/model.hpp"
#include "relab/tokenizer.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace relab {

/// Locality probes carry no reference text; agreement is scored over this
/// greedy-continuation window.
inline constexpr int kLocalityWindow = 8;
/// Portability answers are read from a short decoded continuation.
inline constexpr int kAnswerWindow = 4;

struct ProbeDetail {
  std::string kind;  // rel/gen/loc/ip + form or probe label
  std::string prompt;
  std::string expected;
  std::string produced;
  bool matched = false;
};

struct CaseScore {
  std::int64_t case_id = 0;
  double rel = 0.0, gen = 0.0, loc = 0.0, ip = 0.0, ru = 0.0;
  std::vector<ProbeDetail> details;
};

struct EvalReport {
  // Aggregate percentages (means of case scores × 100).
  double rel = 0.0, gen = 0.0, loc = 0.0, ip = 0.0, ru = 0.0;
  int case_count = 0;
  int skip_count = 0;
};

/// Programmatic scoring of one case on a pre/post model pair. Exact
/// token-window matching for Rel/Gen, pre/post continuation agreement for
/// Loc, numeric-answer extraction for IP; RU = all three form Rel checks
/// pass. Neither model is mutated.
CaseScore score_case(const Model& model_pre, const Model& model_post,
                     const Tokenizer& tok, const RuleCase& c);

EvalReport evaluate(const Model& model_pre, const Model& model_post,
                    const Tokenizer& tok, const std::vector<RuleCase>& cases,
                    int jobs = 0, std::vector<CaseScore>* case_scores = nullptr);

/// Fraction of (case, form) original targets that are the model's argmax
/// continuation — the memorization criterion for the trained toy model.
double memorization_rate(const Model& model, const Tokenizer& tok,
                         const std::vector<RuleCase>& cases);

struct AblationRow {
  Strategy strategy = Strategy::dmle;
  EvalReport report;
};

/// Clones the pre-edit model per strategy, edits, evaluates; rows follow the
/// requested strategy order. Throws if a plan is missing for a strategy.
std::vector<AblationRow> run_ablation(const Model& model_pre, const Tokenizer& tok,
                                      const std::vector<RuleCase>& cases,
                                      const std::vector<Strategy>& strategies,
                                      const std::map<Strategy, EditPlan>& plans,
                                      const CovarianceFn& cov,
                                      std::span<const std::string> key_prefixes = {},
                                      int jobs = 0);

std::string format_report_table(const std::vector<AblationRow>& rows);

/// Writes report.json, report.txt, and per-case details.jsonl under `dir`.
void write_report(const std::filesystem::path& dir, const std::vector<AblationRow>& rows,
                  const std::map<std::string, std::vector<CaseScore>>& case_scores);

}  // namespace relab
