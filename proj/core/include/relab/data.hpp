// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "relab/common.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace relab {

struct RuleForm {
  std::string prompt;
  std::string target_new;
  std::string rephrase;
};

struct LocalityProbes {
  std::string neighborhood_prompt;
  std::string distracting_prompt;
};

struct PortabilityInstance {
  std::string prompt;
  std::string expected;  // answer under the edited rule
};

/// One rule with aligned formula/description/instance forms, counterfactual
/// targets, locality probes, and held-out portability instances.
struct RuleCase {
  std::int64_t case_id = 0;
  std::string subject;
  std::string rule;
  std::map<Form, std::string> original_targets;
  std::map<Form, RuleForm> forms;
  LocalityProbes locality;
  std::vector<PortabilityInstance> portability_instances;
};

/// JSON Lines loader; validates every schema invariant and reports failures
/// with case_id and field path (duplicate ids report both line numbers).
std::vector<RuleCase> load_cases(const std::filesystem::path& path);
void save_cases(const std::vector<RuleCase>& cases, const std::filesystem::path& path);

/// A template family: a binary operation and the counterfactual operation it
/// is swapped to. Operand pools are derived from both ops' integrality
/// constraints; a spec whose swap is the identity is rejected as degenerate.
struct SyntheticRuleSpec {
  std::string original_op;
  std::string counterfactual_op;
};

std::vector<SyntheticRuleSpec> default_rule_specs();

struct SyntheticData {
  std::vector<std::string> corpus;  // original-rule statements, one per line
  std::vector<RuleCase> cases;      // counterfactual edit cases
};

/// Deterministic by seed. The corpus teaches the original rules (the edit
/// cases carry counterfactual targets); portability operand pairs are held
/// out of the rule's own training statements and disjoint from its edit pair.
SyntheticData gen_synthetic(const std::vector<SyntheticRuleSpec>& specs, int n_rules,
                            std::uint64_t seed);

struct ConsistencyReport {
  enum class Status { consistent, inconsistent, unchecked };
  Status status = Status::unchecked;
  std::string detail;
};

/// Checks that the instance target evaluates numerically under the formula
/// target's expression, for machine-evaluable templates. Reports only.
ConsistencyReport validate_consistency(const RuleCase& c);

/// First numeric literal in `text`, if any (used for instance answers).
std::optional<std::string> first_numeral(const std::string& text);
/// Last numeric literal in `text`, if any.
std::optional<std::string> last_numeral(const std::string& text);

}  // namespace relab
