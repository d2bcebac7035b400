// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#include "relab/data.hpp"

#include "relab/io.hpp"
#include "relab/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <sstream>

namespace relab {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Operation catalog for synthetic rules
// ---------------------------------------------------------------------------

struct OpDef {
  const char* name;
  const char* formula_rhs;  // canonical-spacing expression in a and b
  const char* phrase;       // verb-led description
  int (*eval)(int, int);
  bool (*valid)(int, int);  // integrality constraint on operands
};

bool always(int, int) { return true; }
bool both_even(int a, int b) { return a % 2 == 0 && b % 2 == 0; }

const OpDef kOps[] = {
    {"sum", "a + b", "adding the numbers together",
     [](int a, int b) { return a + b; }, always},
    {"product", "a * b", "multiplying the numbers together",
     [](int a, int b) { return a * b; }, always},
    {"halfsum", "( a + b ) / 2", "taking half of the sum of the numbers",
     [](int a, int b) { return (a + b) / 2; }, both_even},
    {"halfproduct", "( a * b ) / 2", "taking half of the product of the numbers",
     [](int a, int b) { return (a * b) / 2; }, both_even},
    {"max", "max ( a , b )", "choosing the larger of the numbers",
     [](int a, int b) { return a > b ? a : b; }, always},
    {"min", "min ( a , b )", "choosing the smaller of the numbers",
     [](int a, int b) { return a < b ? a : b; }, always},
    {"diff", "abs ( a - b )", "subtracting the smaller number from the larger",
     [](int a, int b) { return a > b ? a - b : b - a; }, always},
    {"twicesum", "2 * ( a + b )", "doubling the sum of the numbers",
     [](int a, int b) { return 2 * (a + b); }, always},
};

const OpDef& op_by_name(const std::string& name) {
  for (const auto& op : kOps) {
    if (name == op.name) return op;
  }
  throw ValidationError("unknown synthetic operation: " + name);
}

const char* kAdjectives[] = {
    "harmonic", "polar",   "crystal", "umbral",  "zenith",  "quiet",  "amber",
    "cobalt",   "verdant", "scarlet", "ashen",   "gilded",  "hollow", "frosted",
    "molten",   "silver",  "ebony",   "ivory",   "russet",  "sable",  "lunar",
};
const char* kNouns[] = {
    "mean", "blend", "norm", "index", "measure", "score", "rate",
    "gauge", "span", "factor",
};

const char* kFillerFacts[] = {
    "a square has four equal sides and four corners",
    "a triangle has three sides and three corners",
    "the first even number after one is two",
    "a week has seven days and a day has 24 hours",
    "water freezes at 0 and boils at 100",
    "a circle is round and has no corners",
};

std::string subst(std::string text, const std::string& key, const std::string& value) {
  size_t pos;
  while ((pos = text.find(key)) != std::string::npos) {
    text.replace(pos, key.size(), value);
  }
  return text;
}

// Prompt templates. The subject precedes the operands in instance prompts so
// the subject representation is operand-independent under the causal mask.
std::string formula_prompt(const std::string& s) {
  return "the " + s + " of two numbers a and b is given by the formula";
}
std::string formula_rephrase(const std::string& s) {
  return "the formula for the " + s + " of two values a and b is";
}
std::string description_prompt(const std::string& s) {
  return "the " + s + " of two numbers can be described as";
}
std::string description_rephrase(const std::string& s) {
  return "in simple words , the " + s + " of two numbers means";
}
std::string instance_prompt(const std::string& s, int a, int b) {
  return "the " + s + " of the numbers " + std::to_string(a) + " and " +
         std::to_string(b) + " equals";
}
std::string instance_rephrase(const std::string& s, int a, int b) {
  return "for the pair " + std::to_string(a) + " and " + std::to_string(b) +
         " , the " + s + " equals";
}

std::vector<std::pair<int, int>> operand_pool(const OpDef& o1, const OpDef& o2) {
  std::vector<std::pair<int, int>> pool;
  for (int a = 2; a <= 12; ++a) {
    for (int b = 2; b <= 12; ++b) {
      if (a == b) continue;
      if (a > 9 && !both_even(a, b)) continue;  // keep odd pools compact
      if (b > 9 && !both_even(a, b)) continue;
      if (!o1.valid(a, b) || !o2.valid(a, b)) continue;
      if (o1.eval(a, b) == o2.eval(a, b)) continue;  // degenerate pair
      pool.emplace_back(a, b);
    }
  }
  return pool;
}

}  // namespace

std::vector<SyntheticRuleSpec> default_rule_specs() {
  return {
      {"sum", "product"},     {"product", "sum"},
      {"halfsum", "halfproduct"}, {"halfproduct", "halfsum"},
      {"max", "min"},         {"min", "max"},
      {"diff", "twicesum"},   {"twicesum", "diff"},
  };
}

SyntheticData gen_synthetic(const std::vector<SyntheticRuleSpec>& specs, int n_rules,
                            std::uint64_t seed) {
  if (n_rules < 1) throw ValidationError("n_rules must be >= 1");
  if (specs.empty()) throw ValidationError("no rule specs given");
  for (const auto& spec : specs) {
    if (spec.original_op == spec.counterfactual_op) {
      throw ValidationError("degenerate spec: counterfactual equals original (" +
                            spec.original_op + ")");
    }
    op_by_name(spec.original_op);
    op_by_name(spec.counterfactual_op);
  }

  constexpr int kReserveRules = 10;  // locality-neighborhood pool, never edited
  constexpr int kTrainPairs = 12;
  constexpr int kPortability = 3;

  std::mt19937_64 rng(seed);

  // Distinct subjects for rules + reserve.
  std::vector<std::string> subjects;
  for (const auto* adj : kAdjectives) {
    for (const auto* noun : kNouns) subjects.push_back(std::string(adj) + " " + noun);
  }
  if (static_cast<size_t>(n_rules + kReserveRules) > subjects.size()) {
    throw ValidationError("n_rules too large for the subject pool (max " +
                          std::to_string(subjects.size() - kReserveRules) + ")");
  }
  std::shuffle(subjects.begin(), subjects.end(), rng);

  SyntheticData out;
  std::vector<std::string> reserve_formula_prompts;

  int total = n_rules + kReserveRules;
  for (int i = 0; i < total; ++i) {
    const bool is_reserve = i >= n_rules;
    const auto& spec = specs[static_cast<size_t>(i) % specs.size()];
    const OpDef& orig = op_by_name(spec.original_op);
    const OpDef& cf = op_by_name(spec.counterfactual_op);
    const std::string& s = subjects[static_cast<size_t>(i)];

    auto pool = operand_pool(orig, cf);
    if (static_cast<int>(pool.size()) < 1 + kPortability + kTrainPairs) {
      throw ValidationError("operand pool too small for spec " + spec.original_op);
    }
    std::shuffle(pool.begin(), pool.end(), rng);

    auto edit_pair = pool[0];
    std::vector<std::pair<int, int>> portability(pool.begin() + 1,
                                                 pool.begin() + 1 + kPortability);
    std::vector<std::pair<int, int>> train_pairs;
    train_pairs.push_back(edit_pair);
    for (int k = 1 + kPortability; static_cast<int>(train_pairs.size()) < kTrainPairs; ++k) {
      train_pairs.push_back(pool[static_cast<size_t>(k)]);
    }

    // Original-rule statements (what the model memorizes).
    out.corpus.push_back(formula_prompt(s) + " G = " + orig.formula_rhs);
    out.corpus.push_back(formula_rephrase(s) + " G = " + orig.formula_rhs);
    out.corpus.push_back(description_prompt(s) + " " + orig.phrase);
    out.corpus.push_back(description_rephrase(s) + " " + orig.phrase);
    for (size_t k = 0; k < train_pairs.size(); ++k) {
      auto [a, b] = train_pairs[k];
      out.corpus.push_back(instance_prompt(s, a, b) + " " + std::to_string(orig.eval(a, b)));
      if (k % 3 == 0) {
        out.corpus.push_back(instance_rephrase(s, a, b) + " " +
                             std::to_string(orig.eval(a, b)));
      }
    }

    if (is_reserve) {
      reserve_formula_prompts.push_back(formula_prompt(s));
      continue;
    }

    RuleCase c;
    c.case_id = i + 1;
    c.subject = s;
    c.rule = "calculation of the " + s;
    c.original_targets[Form::formula] = std::string("G = ") + orig.formula_rhs;
    c.original_targets[Form::description] = orig.phrase;
    c.original_targets[Form::instance] = std::to_string(orig.eval(edit_pair.first, edit_pair.second));

    RuleForm f;
    f.prompt = formula_prompt(s);
    f.target_new = std::string("G = ") + cf.formula_rhs;
    f.rephrase = formula_rephrase(s);
    c.forms[Form::formula] = f;

    RuleForm d;
    d.prompt = description_prompt(s);
    d.target_new = cf.phrase;
    d.rephrase = description_rephrase(s);
    c.forms[Form::description] = d;

    RuleForm inst;
    inst.prompt = instance_prompt(s, edit_pair.first, edit_pair.second);
    inst.target_new = std::to_string(cf.eval(edit_pair.first, edit_pair.second));
    inst.rephrase = instance_rephrase(s, edit_pair.first, edit_pair.second);
    c.forms[Form::instance] = inst;

    for (auto [a, b] : portability) {
      PortabilityInstance pi;
      pi.prompt = instance_prompt(s, a, b);
      pi.expected = std::to_string(cf.eval(a, b));
      c.portability_instances.push_back(std::move(pi));
    }
    out.cases.push_back(std::move(c));
  }

  for (size_t i = 0; i < out.cases.size(); ++i) {
    out.cases[i].locality.neighborhood_prompt =
        reserve_formula_prompts[i % reserve_formula_prompts.size()];
    const std::string filler = kFillerFacts[i % std::size(kFillerFacts)];
    auto words = Tokenizer::split(filler);
    std::string probe;
    for (size_t k = 0; k < std::min<size_t>(4, words.size()); ++k) {
      if (k) probe += ' ';
      probe += words[k];
    }
    out.cases[i].locality.distracting_prompt = probe;
  }

  for (const auto* fact : kFillerFacts) out.corpus.push_back(fact);

  // Vocabulary closure: every token used by case prompts/targets must occur
  // in the corpus. Missing numerals (counterfactual answers of held-out
  // pairs) are appended as neutral counting lines.
  std::set<std::string> corpus_vocab;
  for (const auto& line : out.corpus) {
    for (auto& t : Tokenizer::split(line)) corpus_vocab.insert(t);
  }
  std::set<std::string> missing;
  auto note_missing = [&](const std::string& text) {
    for (auto& t : Tokenizer::split(text)) {
      if (!corpus_vocab.count(t)) missing.insert(t);
    }
  };
  for (const auto& c : out.cases) {
    for (Form form : kAllForms) {
      note_missing(c.forms.at(form).prompt);
      note_missing(c.forms.at(form).target_new);
      note_missing(c.forms.at(form).rephrase);
      note_missing(c.original_targets.at(form));
    }
    note_missing(c.locality.neighborhood_prompt);
    note_missing(c.locality.distracting_prompt);
    for (const auto& pi : c.portability_instances) {
      note_missing(pi.prompt);
      note_missing(pi.expected);
    }
  }
  std::vector<std::string> missing_list(missing.begin(), missing.end());
  for (size_t i = 0; i < missing_list.size(); i += 12) {
    std::string line = "numbers :";
    for (size_t k = i; k < std::min(i + 12, missing_list.size()); ++k) {
      line += ' ';
      line += missing_list[k];
    }
    out.corpus.push_back(line);
  }

  // Final degeneracy sweep: edited answers must differ from originals.
  for (const auto& c : out.cases) {
    if (c.original_targets.at(Form::instance) == c.forms.at(Form::instance).target_new) {
      throw ValidationError("degenerate counterfactual for case " +
                            std::to_string(c.case_id));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL schema
// ---------------------------------------------------------------------------

namespace {

json form_to_json(const RuleForm& f) {
  return json{{"prompt", f.prompt}, {"target_new", f.target_new}, {"rephrase", f.rephrase}};
}

RuleForm form_from_json(const json& j, const std::string& where) {
  for (const char* key : {"prompt", "target_new", "rephrase"}) {
    if (!j.contains(key)) throw ValidationError(where + "." + key + " is missing");
  }
  RuleForm f;
  f.prompt = j.at("prompt").get<std::string>();
  f.target_new = j.at("target_new").get<std::string>();
  f.rephrase = j.at("rephrase").get<std::string>();
  return f;
}

json case_to_json(const RuleCase& c) {
  json originals;
  json forms;
  for (Form form : kAllForms) {
    originals[form_name(form)] = c.original_targets.at(form);
    forms[form_name(form)] = form_to_json(c.forms.at(form));
  }
  json pis = json::array();
  for (const auto& pi : c.portability_instances) {
    pis.push_back(json{{"prompt", pi.prompt}, {"expected", pi.expected}});
  }
  return json{{"case_id", c.case_id},
              {"subject", c.subject},
              {"rule", c.rule},
              {"original_targets", originals},
              {"formula", forms["formula"]},
              {"description", forms["description"]},
              {"instance", forms["instance"]},
              {"locality",
               json{{"neighborhood_prompt", c.locality.neighborhood_prompt},
                    {"distracting_prompt", c.locality.distracting_prompt}}},
              {"portability_instances", pis}};
}

RuleCase case_from_json(const json& j, int lineno) {
  auto where = [&](const std::string& field) {
    std::string id = j.contains("case_id") ? j.at("case_id").dump() : "?";
    return "case " + id + " (line " + std::to_string(lineno) + "): " + field;
  };
  if (!j.contains("case_id")) throw ValidationError(where("case_id is missing"));
  RuleCase c;
  c.case_id = j.at("case_id").get<std::int64_t>();
  c.subject = j.value("subject", "");
  c.rule = j.value("rule", "");
  if (c.subject.empty()) throw ValidationError(where("subject is empty"));

  for (Form form : kAllForms) {
    const char* name = form_name(form);
    if (!j.contains(name)) throw ValidationError(where(std::string(name) + " form is missing"));
    c.forms[form] = form_from_json(j.at(name), where(name));
    if (j.contains("original_targets") && j.at("original_targets").contains(name)) {
      c.original_targets[form] = j.at("original_targets").at(name).get<std::string>();
    } else {
      c.original_targets[form] = "";
    }
  }
  if (j.contains("locality")) {
    c.locality.neighborhood_prompt = j.at("locality").value("neighborhood_prompt", "");
    c.locality.distracting_prompt = j.at("locality").value("distracting_prompt", "");
  }
  if (j.contains("portability_instances")) {
    for (const auto& pj : j.at("portability_instances")) {
      PortabilityInstance pi;
      pi.prompt = pj.at("prompt").get<std::string>();
      pi.expected = pj.at("expected").get<std::string>();
      c.portability_instances.push_back(std::move(pi));
    }
  }

  // Invariants.
  for (Form form : kAllForms) {
    const char* name = form_name(form);
    const RuleForm& f = c.forms.at(form);
    if (f.prompt.empty()) throw ValidationError(where(std::string(name) + ".prompt is empty"));
    if (f.target_new.empty()) {
      throw ValidationError(where(std::string(name) + ".target_new is empty"));
    }
    if (f.prompt.find(c.subject) == std::string::npos) {
      throw ValidationError(where("subject \"" + c.subject + "\" not found in " + name +
                                  ".prompt"));
    }
    const std::string& orig = c.original_targets.at(form);
    if (!orig.empty() && orig == f.target_new) {
      throw ValidationError(where(std::string(name) +
                                  ".target_new equals the original target"));
    }
  }
  for (const auto& pi : c.portability_instances) {
    if (pi.prompt.empty() || pi.expected.empty()) {
      throw ValidationError(where("portability instance with empty field"));
    }
  }
  return c;
}

}  // namespace

std::vector<RuleCase> load_cases(const std::filesystem::path& path) {
  auto rows = read_jsonl(path);
  std::vector<RuleCase> cases;
  std::map<std::int64_t, int> seen;  // case_id -> line number
  for (size_t i = 0; i < rows.size(); ++i) {
    int lineno = static_cast<int>(i) + 1;
    RuleCase c = case_from_json(rows[i], lineno);
    auto it = seen.find(c.case_id);
    if (it != seen.end()) {
      throw ValidationError("duplicate case_id " + std::to_string(c.case_id) + " on lines " +
                            std::to_string(it->second) + " and " + std::to_string(lineno));
    }
    seen[c.case_id] = lineno;
    cases.push_back(std::move(c));
  }
  return cases;
}

void save_cases(const std::vector<RuleCase>& cases, const std::filesystem::path& path) {
  std::vector<json> rows;
  rows.reserve(cases.size());
  for (const auto& c : cases) rows.push_back(case_to_json(c));
  write_jsonl(path, rows);
}

// ---------------------------------------------------------------------------
// Numerals and the small expression evaluator behind validate_consistency
// ---------------------------------------------------------------------------

namespace {

bool numeral_at(const std::string& text, size_t i, size_t* end) {
  if (!std::isdigit(static_cast<unsigned char>(text[i]))) return false;
  if (i > 0) {
    char prev = text[i - 1];
    if (std::isalnum(static_cast<unsigned char>(prev)) || prev == '_') return false;
  }
  size_t j = i;
  bool dot = false;
  while (j < text.size()) {
    char c = text[j];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ++j;
    } else if (c == '.' && !dot && j + 1 < text.size() &&
               std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
      dot = true;
      ++j;
    } else {
      break;
    }
  }
  *end = j;
  return true;
}

std::vector<std::string> all_numerals(const std::string& text) {
  std::vector<std::string> out;
  for (size_t i = 0; i < text.size();) {
    size_t end;
    if (numeral_at(text, i, &end)) {
      out.push_back(text.substr(i, end - i));
      i = end;
    } else {
      ++i;
    }
  }
  return out;
}

// Recursive-descent evaluator over + - * / ( ) with sqrt/abs/max/min calls
// and single-letter variables; accepts the LaTeX spellings used by the
// dataset format (\sqrt{..}, \times, \cdot).
struct ExprParser {
  std::string s;
  size_t pos = 0;
  const std::map<std::string, double>* vars;

  explicit ExprParser(std::string text, const std::map<std::string, double>* v)
      : s(std::move(text)), vars(v) {}

  void skip() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  bool eat(char c) {
    skip();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& why) {
    throw ValidationError("expression parse error at " + std::to_string(pos) + ": " + why);
  }

  double parse() {
    double v = expr();
    skip();
    if (pos != s.size()) fail("trailing input");
    return v;
  }

  double expr() {
    double v = term();
    for (;;) {
      skip();
      if (eat('+')) {
        v += term();
      } else if (eat('-')) {
        v -= term();
      } else {
        return v;
      }
    }
  }

  double term() {
    double v = factor();
    for (;;) {
      skip();
      if (eat('*')) {
        v *= factor();
      } else if (eat('/')) {
        double d = factor();
        if (d == 0) fail("division by zero");
        v /= d;
      } else {
        return v;
      }
    }
  }

  double factor() {
    skip();
    if (eat('-')) return -factor();
    if (eat('+')) return factor();
    if (eat('(')) {
      double v = expr();
      if (!eat(')')) fail("expected )");
      return v;
    }
    if (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      size_t end;
      numeral_at(s, pos, &end);
      double v = std::stod(s.substr(pos, end - pos));
      pos = end;
      return v;
    }
    if (pos < s.size() && std::isalpha(static_cast<unsigned char>(s[pos]))) {
      size_t j = pos;
      while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
      std::string name = s.substr(pos, j - pos);
      pos = j;
      if (name == "sqrt") return fn1(std::sqrt);
      if (name == "abs") return fn1([](double x) { return std::fabs(x); });
      if (name == "max" || name == "min") {
        if (!eat('(')) fail("expected ( after " + name);
        double x = expr();
        if (!eat(',')) fail("expected , in " + name);
        double y = expr();
        if (!eat(')')) fail("expected )");
        return name == "max" ? std::max(x, y) : std::min(x, y);
      }
      if (vars) {
        auto it = vars->find(name);
        if (it != vars->end()) return it->second;
      }
      fail("unknown identifier: " + name);
    }
    fail("unexpected character");
  }

  template <typename Fn>
  double fn1(Fn f) {
    if (!eat('(')) fail("expected (");
    double v = expr();
    if (!eat(')')) fail("expected )");
    return f(v);
  }
};

std::string normalize_expr(std::string e) {
  e = subst(std::move(e), "\\sqrt", "sqrt");
  e = subst(std::move(e), "\\times", "*");
  e = subst(std::move(e), "\\cdot", "*");
  e = subst(std::move(e), "{", "(");
  e = subst(std::move(e), "}", ")");
  e = subst(std::move(e), "$", "");
  // implicit sqrt(...) juxtaposition like "sqrt (a+b)" is already fine
  return e;
}

// Expression part of a target like "G = \sqrt{16+9} = 5." → "\sqrt{16+9}",
// i.e. the segment between the first '=' (if any) and the following '='
// or end. Targets without '=' are used whole.
std::string expression_of(const std::string& target) {
  size_t first = target.find('=');
  std::string body = first == std::string::npos ? target : target.substr(first + 1);
  size_t second = body.find('=');
  if (second != std::string::npos) body = body.substr(0, second);
  return body;
}

std::vector<std::string> formula_variables(const std::string& expr) {
  std::vector<std::string> vars;
  std::set<std::string> seen;
  static const std::set<std::string> reserved = {"sqrt", "abs", "max", "min"};
  for (size_t i = 0; i < expr.size();) {
    if (std::isalpha(static_cast<unsigned char>(expr[i]))) {
      size_t j = i;
      while (j < expr.size() && std::isalpha(static_cast<unsigned char>(expr[j]))) ++j;
      std::string name = expr.substr(i, j - i);
      if (!reserved.count(name) && !seen.count(name)) {
        seen.insert(name);
        vars.push_back(name);
      }
      i = j;
    } else {
      ++i;
    }
  }
  return vars;
}

}  // namespace

std::optional<std::string> first_numeral(const std::string& text) {
  auto all = all_numerals(text);
  if (all.empty()) return std::nullopt;
  return all.front();
}

std::optional<std::string> last_numeral(const std::string& text) {
  auto all = all_numerals(text);
  if (all.empty()) return std::nullopt;
  return all.back();
}

ConsistencyReport validate_consistency(const RuleCase& c) {
  ConsistencyReport report;
  const std::string& formula_target = c.forms.at(Form::formula).target_new;
  const std::string& instance_target = c.forms.at(Form::instance).target_new;
  const std::string& instance_prompt = c.forms.at(Form::instance).prompt;

  auto answer_str = last_numeral(instance_target);
  if (!answer_str) {
    report.detail = "instance target has no numeric answer";
    return report;
  }
  double answer = std::stod(*answer_str);

  std::string formula_expr = normalize_expr(expression_of(formula_target));
  auto vars = formula_variables(formula_expr);

  // Operand values: prefer numerals in the instance prompt; otherwise the
  // leading numerals of the instance target's expression part.
  std::vector<std::string> operands = all_numerals(instance_prompt);
  if (operands.size() < vars.size()) {
    operands = all_numerals(expression_of(instance_target));
  }
  if (operands.size() < vars.size()) {
    report.detail = "cannot recover operands for formula variables";
    return report;
  }

  std::map<std::string, double> env;
  for (size_t i = 0; i < vars.size(); ++i) env[vars[i]] = std::stod(operands[i]);

  double from_formula, from_instance_expr;
  try {
    from_formula = ExprParser(formula_expr, &env).parse();
    std::string inst_expr = normalize_expr(expression_of(instance_target));
    from_instance_expr = ExprParser(inst_expr, nullptr).parse();
  } catch (const ValidationError& e) {
    report.detail = e.what();
    return report;
  }

  constexpr double tol = 1e-9;
  bool ok = std::fabs(from_formula - answer) <= tol &&
            std::fabs(from_instance_expr - answer) <= tol;
  report.status =
      ok ? ConsistencyReport::Status::consistent : ConsistencyReport::Status::inconsistent;
  std::ostringstream detail;
  detail << "formula -> " << from_formula << ", instance expression -> "
         << from_instance_expr << ", stated answer " << answer;
  report.detail = detail.str();
  return report;
}

}  // namespace relab
