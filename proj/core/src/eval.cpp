// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#include "relab/eval.hpp"

#include "relab/io.hpp"
#include "relab/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace relab {

using nlohmann::json;

namespace {

bool tokens_equal(std::span<const int> a, std::span<const int> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

// Greedy decode of exactly the target's token length, compared exactly.
ProbeDetail match_target(const Model& model, const Tokenizer& tok,
                         const std::string& kind, const std::string& prompt,
                         const std::string& target) {
  ProbeDetail d;
  d.kind = kind;
  d.prompt = prompt;
  d.expected = target;
  std::vector<int> prompt_tokens = tok.encode(prompt);
  std::vector<int> target_tokens = tok.encode(target);
  std::vector<int> produced =
      greedy_continuation(model, prompt_tokens, static_cast<int>(target_tokens.size()));
  d.produced = tok.decode(produced);
  d.matched = tokens_equal(produced, target_tokens);
  return d;
}

bool numerals_match(const std::string& a, const std::string& b) {
  try {
    return std::stod(a) == std::stod(b);
  } catch (...) {
    return a == b;
  }
}

}  // namespace

CaseScore score_case(const Model& model_pre, const Model& model_post,
                     const Tokenizer& tok, const RuleCase& c) {
  CaseScore score;
  score.case_id = c.case_id;

  bool form_rel[3] = {false, false, false};
  double rel_sum = 0.0, gen_sum = 0.0;
  for (Form form : kAllForms) {
    const RuleForm& f = c.forms.at(form);
    ProbeDetail rel = match_target(model_post, tok, std::string("rel/") + form_name(form),
                                   f.prompt, f.target_new);
    form_rel[static_cast<int>(form)] = rel.matched;
    rel_sum += rel.matched ? 1.0 : 0.0;
    score.details.push_back(std::move(rel));

    ProbeDetail gen = match_target(model_post, tok, std::string("gen/") + form_name(form),
                                   f.rephrase, f.target_new);
    gen_sum += gen.matched ? 1.0 : 0.0;
    score.details.push_back(std::move(gen));
  }
  score.rel = rel_sum / 3.0;
  score.gen = gen_sum / 3.0;
  score.ru = (form_rel[0] && form_rel[1] && form_rel[2]) ? 1.0 : 0.0;

  // Locality: post continuation must equal the pre continuation.
  const std::pair<const char*, const std::string*> probes[] = {
      {"loc/neighborhood", &c.locality.neighborhood_prompt},
      {"loc/distracting", &c.locality.distracting_prompt},
  };
  double loc_sum = 0.0;
  int loc_n = 0;
  for (const auto& [kind, prompt] : probes) {
    if (prompt->empty()) continue;
    ++loc_n;
    std::vector<int> prompt_tokens = tok.encode(*prompt);
    std::vector<int> pre = greedy_continuation(model_pre, prompt_tokens, kLocalityWindow);
    std::vector<int> post = greedy_continuation(model_post, prompt_tokens, kLocalityWindow);
    ProbeDetail d;
    d.kind = kind;
    d.prompt = *prompt;
    d.expected = tok.decode(pre);
    d.produced = tok.decode(post);
    d.matched = tokens_equal(pre, post);
    loc_sum += d.matched ? 1.0 : 0.0;
    score.details.push_back(std::move(d));
  }
  score.loc = loc_n ? loc_sum / loc_n : 1.0;

  // Instance portability: the decoded numeric answer on held-out instances.
  double ip_sum = 0.0;
  for (const auto& pi : c.portability_instances) {
    std::vector<int> prompt_tokens = tok.encode(pi.prompt);
    std::vector<int> produced = greedy_continuation(model_post, prompt_tokens, kAnswerWindow);
    ProbeDetail d;
    d.kind = "ip";
    d.prompt = pi.prompt;
    d.expected = pi.expected;
    d.produced = tok.decode(produced);
    auto answer = first_numeral(d.produced);
    d.matched = answer && numerals_match(*answer, pi.expected);
    ip_sum += d.matched ? 1.0 : 0.0;
    score.details.push_back(std::move(d));
  }
  score.ip = c.portability_instances.empty()
                 ? 0.0
                 : ip_sum / static_cast<double>(c.portability_instances.size());
  return score;
}

EvalReport evaluate(const Model& model_pre, const Model& model_post, const Tokenizer& tok,
                    const std::vector<RuleCase>& cases, int jobs,
                    std::vector<CaseScore>* case_scores) {
  if (cases.empty()) throw ValidationError("evaluate: no cases");
  std::vector<CaseScore> scores(cases.size());
  parallel_for(static_cast<int>(cases.size()), jobs, [&](int i) {
    scores[static_cast<size_t>(i)] =
        score_case(model_pre, model_post, tok, cases[static_cast<size_t>(i)]);
  });

  EvalReport report;
  report.case_count = static_cast<int>(cases.size());
  for (const auto& s : scores) {
    report.rel += s.rel;
    report.gen += s.gen;
    report.loc += s.loc;
    report.ip += s.ip;
    report.ru += s.ru;
  }
  const double n = static_cast<double>(cases.size());
  report.rel = 100.0 * report.rel / n;
  report.gen = 100.0 * report.gen / n;
  report.loc = 100.0 * report.loc / n;
  report.ip = 100.0 * report.ip / n;
  report.ru = 100.0 * report.ru / n;
  if (case_scores) *case_scores = std::move(scores);
  return report;
}

double memorization_rate(const Model& model, const Tokenizer& tok,
                         const std::vector<RuleCase>& cases) {
  if (cases.empty()) throw ValidationError("memorization_rate: no cases");
  int hits = 0, total = 0;
  for (const auto& c : cases) {
    for (Form form : kAllForms) {
      const std::string& target = c.original_targets.at(form);
      if (target.empty()) continue;
      ++total;
      std::vector<int> prompt = tok.encode(c.forms.at(form).prompt);
      std::vector<int> target_tokens = tok.encode(target);
      if (target_is_argmax(model, prompt, target_tokens)) ++hits;
    }
  }
  return total ? static_cast<double>(hits) / total : 0.0;
}

std::vector<AblationRow> run_ablation(const Model& model_pre, const Tokenizer& tok,
                                      const std::vector<RuleCase>& cases,
                                      const std::vector<Strategy>& strategies,
                                      const std::map<Strategy, EditPlan>& plans,
                                      const CovarianceFn& cov,
                                      std::span<const std::string> key_prefixes, int jobs) {
  std::vector<AblationRow> rows;
  for (Strategy s : strategies) {
    auto it = plans.find(s);
    if (it == plans.end()) {
      throw ValidationError(std::string("no plan for strategy ") + strategy_name(s));
    }
    auto edited = edit_with_strategy(model_pre, tok, cases, it->second, cov,
                                     key_prefixes, jobs);
    AblationRow row;
    row.strategy = s;
    row.report = evaluate(model_pre, edited.first, tok, cases, jobs);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

json report_to_json(const EvalReport& r) {
  return json{{"Rel", std::stod(fmt2(r.rel))}, {"Gen", std::stod(fmt2(r.gen))},
              {"Loc", std::stod(fmt2(r.loc))}, {"IP", std::stod(fmt2(r.ip))},
              {"RU", std::stod(fmt2(r.ru))},   {"cases", r.case_count},
              {"skipped", r.skip_count}};
}

}  // namespace

std::string format_report_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "strategy            Rel      Gen      Loc       IP       RU\n";
  out << "----------------------------------------------------------\n";
  for (const auto& row : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-16s %7.2f  %7.2f  %7.2f  %7.2f  %7.2f\n",
                  strategy_name(row.strategy), row.report.rel, row.report.gen,
                  row.report.loc, row.report.ip, row.report.ru);
    out << line;
  }
  return out.str();
}

void write_report(const std::filesystem::path& dir, const std::vector<AblationRow>& rows,
                  const std::map<std::string, std::vector<CaseScore>>& case_scores) {
  std::filesystem::create_directories(dir);
  json strategies = json::array();
  for (const auto& row : rows) {
    strategies.push_back(
        json{{"strategy", strategy_name(row.strategy)}, {"metrics", report_to_json(row.report)}});
  }
  json doc{{"strategies", strategies},
           {"note", "programmatic token-window scoring; absolute values are not comparable "
                    "to LLM-judge evaluations"}};
  atomic_write(dir / "report.json", doc.dump(2) + "\n");
  atomic_write(dir / "report.txt", format_report_table(rows));

  std::vector<json> detail_rows;
  for (const auto& [strategy, scores] : case_scores) {
    for (const auto& s : scores) {
      json probes = json::array();
      for (const auto& d : s.details) {
        probes.push_back(json{{"kind", d.kind},
                              {"prompt", d.prompt},
                              {"expected", d.expected},
                              {"produced", d.produced},
                              {"matched", d.matched}});
      }
      detail_rows.push_back(json{{"strategy", strategy},
                                 {"case_id", s.case_id},
                                 {"rel", s.rel},
                                 {"gen", s.gen},
                                 {"loc", s.loc},
                                 {"ip", s.ip},
                                 {"ru", s.ru},
                                 {"probes", probes}});
    }
  }
  write_jsonl(dir / "details.jsonl", detail_rows);
}

}  // namespace relab
