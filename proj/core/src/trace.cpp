// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#include "relab/trace.hpp"

#include "relab/io.hpp"
#include "relab/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <tuple>

namespace relab {

using nlohmann::json;

namespace {

int count_substring(const std::string& text, const std::string& needle) {
  if (needle.empty()) return 0;
  int count = 0;
  size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    ++count;
    ++pos;
  }
  return count;
}

void validate_record(const TracingRecord& r) {
  if (r.target.empty()) {
    throw ValidationError("tracing record " + std::to_string(r.case_id) +
                          ": target is empty");
  }
  int n = count_substring(r.prompt, r.subject);
  if (n != 1) {
    throw ValidationError("tracing record " + std::to_string(r.case_id) + ": subject \"" +
                          r.subject + "\" occurs " + std::to_string(n) +
                          " times in prompt (expected exactly once)");
  }
}

std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  size_t b = s.find_last_not_of(" \t");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

// Form-specific targets: the final symbolic expression for formulas, the
// verb-led phrase for descriptions, the final answer for instances.
std::string extract_target(Form form, const std::string& raw) {
  switch (form) {
    case Form::formula: {
      size_t eq = raw.find('=');
      std::string body = eq == std::string::npos ? raw : raw.substr(eq + 1);
      size_t eq2 = body.find('=');
      if (eq2 != std::string::npos) body = body.substr(0, eq2);
      return strip(body);
    }
    case Form::description:
      return strip(raw);
    case Form::instance: {
      auto num = last_numeral(raw);
      if (!num) throw ValidationError("instance target has no numeric answer: " + raw);
      return *num;
    }
  }
  return raw;
}

std::uint64_t record_content_hash(const TracingRecord& r) {
  std::uint64_t h = kFnvOffset;
  h = fnv1a_u64(static_cast<std::uint64_t>(r.case_id), h);
  h = fnv1a_u64(static_cast<std::uint64_t>(r.form), h);
  h = fnv1a(r.subject, h);
  h = fnv1a(r.prompt, h);
  h = fnv1a(r.target, h);
  return h;
}

struct ResolvedRecord {
  std::vector<int> prompt;
  std::vector<int> target;
  int subj_begin = 0;
  int subj_end = 0;  // exclusive
};

ResolvedRecord resolve_record(const Tokenizer& tok, const TracingRecord& r) {
  validate_record(r);
  ResolvedRecord out;
  out.prompt = tok.encode(r.prompt);
  out.target = tok.encode(r.target);
  if (tok.count_occurrences(out.prompt, r.subject) != 1) {
    throw ValidationError("tracing record " + std::to_string(r.case_id) +
                          ": subject token span is not unique in the prompt");
  }
  auto span = tok.find_span(out.prompt, r.subject);
  out.subj_begin = span->first;
  out.subj_end = span->second;
  return out;
}

double target_prob_from_logits(const MatF& logits, int prompt_len,
                               std::span<const int> target) {
  double total = 0.0;
  for (size_t t = 0; t < target.size(); ++t) {
    int row = prompt_len - 1 + static_cast<int>(t);
    const auto& logit_row = logits.row(row);
    double m = static_cast<double>(logit_row.maxCoeff());
    double denom = 0.0;
    for (int j = 0; j < logit_row.size(); ++j) {
      denom += std::exp(static_cast<double>(logit_row(j)) - m);
    }
    total += static_cast<double>(logit_row(target[t])) - m - std::log(denom);
  }
  return std::exp(total / static_cast<double>(target.size()));
}

}  // namespace

void TraceConfig::validate() const {
  if (noise_seeds < 1) throw ValidationError("TraceConfig.noise_seeds must be >= 1");
  if (sigma < 0) throw ValidationError("TraceConfig.sigma must be >= 0");
  if (position_classes.empty()) {
    throw ValidationError("TraceConfig.position_classes is empty");
  }
  if (site_kind == SiteKind::mlp_inner) {
    throw ValidationError("tracing restores residual/attn_out/mlp_out sites");
  }
}

std::map<Form, std::vector<TracingRecord>> build_tracing_set(
    const std::vector<RuleCase>& cases, int replication, std::uint64_t seed,
    TraceTargetSource source) {
  if (replication < 1) throw ValidationError("replication must be >= 1");
  std::map<Form, std::vector<TracingRecord>> out;
  for (Form form : kAllForms) out[form] = {};

  for (const auto& c : cases) {
    for (Form form : kAllForms) {
      if (!c.forms.count(form)) {
        throw ValidationError("case " + std::to_string(c.case_id) + " is missing the " +
                              form_name(form) + " form");
      }
    }

    auto raw_target = [&](Form form) -> std::string {
      if (source == TraceTargetSource::counterfactual) {
        return c.forms.at(form).target_new;
      }
      auto it = c.original_targets.find(form);
      if (it == c.original_targets.end() || it->second.empty()) {
        throw ValidationError("case " + std::to_string(c.case_id) +
                              ": no original target for form " + form_name(form));
      }
      return it->second;
    };

    // Instance operands, recovered from the case's instance prompt (or its
    // target expression when the prompt carries none).
    const std::string& inst_prompt = c.forms.at(Form::instance).prompt;
    std::string a_str, b_str;
    {
      std::vector<std::string> nums;
      for (const auto& text : {inst_prompt, raw_target(Form::instance)}) {
        size_t i = 0;
        while (i < text.size() && nums.size() < 2) {
          if (std::isdigit(static_cast<unsigned char>(text[i])) &&
              (i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1])))) {
            size_t j = i;
            while (j < text.size() &&
                   (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '.')) {
              ++j;
            }
            nums.push_back(text.substr(i, j - i));
            i = j;
          } else {
            ++i;
          }
        }
        if (nums.size() >= 2) break;
      }
      if (nums.size() < 2) {
        throw ValidationError("case " + std::to_string(c.case_id) +
                              ": cannot recover instance operands");
      }
      a_str = nums[0];
      b_str = nums[1];
    }

    for (Form form : kAllForms) {
      TracingRecord r;
      r.case_id = c.case_id;
      r.subject = c.subject;
      r.form = form;
      std::string raw = raw_target(form);
      r.target = extract_target(form, raw);
      switch (form) {
        case Form::formula: {
          r.prompt = "the " + c.subject + " of two numbers a and b is given by the formula";
          size_t eq = raw.find('=');
          if (eq != std::string::npos) {
            std::string lhs = strip(raw.substr(0, eq));
            if (!lhs.empty()) r.prompt += " " + lhs + " =";
          }
          break;
        }
        case Form::description:
          r.prompt = "the " + c.subject + " of two numbers can be described as";
          break;
        case Form::instance:
          r.prompt = "the " + c.subject + " of the numbers " + a_str + " and " + b_str +
                     " equals";
          break;
      }
      validate_record(r);
      for (int k = 0; k < replication; ++k) out[form].push_back(r);
    }
  }

  for (Form form : kAllForms) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(form)));
    std::shuffle(out[form].begin(), out[form].end(), rng);
  }
  return out;
}

void save_tracing_records(const std::map<Form, std::vector<TracingRecord>>& records,
                          const std::filesystem::path& path) {
  std::vector<json> rows;
  for (const auto& [form, recs] : records) {
    for (const auto& r : recs) {
      rows.push_back(json{{"case_id", r.case_id},
                          {"subject", r.subject},
                          {"form", form_name(form)},
                          {"prompt", r.prompt},
                          {"target", r.target}});
    }
  }
  write_jsonl(path, rows);
}

std::map<Form, std::vector<TracingRecord>> load_tracing_records(
    const std::filesystem::path& path) {
  std::map<Form, std::vector<TracingRecord>> out;
  for (const auto& row : read_jsonl(path)) {
    TracingRecord r;
    r.case_id = row.at("case_id").get<std::int64_t>();
    r.subject = row.at("subject").get<std::string>();
    r.form = form_from_name(row.at("form").get<std::string>());
    r.prompt = row.at("prompt").get<std::string>();
    r.target = row.at("target").get<std::string>();
    validate_record(r);
    out[r.form].push_back(std::move(r));
  }
  return out;
}

namespace {

// One record's contribution: clean prob, per-seed corrupted prob, and
// restored probs over all (layer, class-position) sites, via packed runs.
struct RecordTraceOut {
  bool skipped = false;
  double clean_prob = 0.0;
  double corrupted_prob = 0.0;
  MatD restored;  // [n_layers, n_classes]; NaN where the class has no position
};

RecordTraceOut trace_one_record(const Model& model, const Tokenizer& tok,
                                const TracingRecord& record,
                                const std::vector<int>& positions,
                                const TraceConfig& cfg) {
  const int L = model.config.n_layers;
  const int C = static_cast<int>(positions.size());
  ResolvedRecord rec = resolve_record(tok, record);

  RecordTraceOut out;
  out.restored = MatD::Constant(L, C, std::numeric_limits<double>::quiet_NaN());

  // Clean run: capture every needed site and the clean target probability.
  CaptureSpec capture;
  std::vector<std::pair<int, int>> live;  // (layer, class index)
  for (int l = 0; l < L; ++l) {
    for (int ci = 0; ci < C; ++ci) {
      if (positions[static_cast<size_t>(ci)] < 0) continue;
      capture.sites.push_back({l, cfg.site_kind, positions[static_cast<size_t>(ci)]});
      live.emplace_back(l, ci);
    }
  }
  std::vector<int> full = rec.prompt;
  full.insert(full.end(), rec.target.begin(), rec.target.end());
  ForwardResult clean = forward(model, full, &capture);
  out.clean_prob =
      target_prob_from_logits(clean.logits, static_cast<int>(rec.prompt.size()), rec.target);
  if (out.clean_prob < cfg.skip_threshold) {
    out.skipped = true;
    return out;
  }

  const std::uint64_t content = record_content_hash(record);
  MatD restored_sum = MatD::Zero(L, C);
  double corr_sum = 0.0;

  for (int s = 0; s < cfg.noise_seeds; ++s) {
    NoiseSpec noise{rec.subj_begin, rec.subj_end, cfg.sigma,
                    mix_seed(cfg.seed, content, static_cast<std::uint64_t>(s))};
    std::vector<SequenceRun> runs;
    runs.reserve(live.size() + 1);
    SequenceRun corrupted;
    corrupted.prompt = rec.prompt;
    corrupted.target = rec.target;
    corrupted.noise = noise;
    runs.push_back(corrupted);
    for (size_t i = 0; i < live.size(); ++i) {
      SequenceRun r = corrupted;
      auto [l, ci] = live[i];
      r.patches.push_back(
          {{l, cfg.site_kind, positions[static_cast<size_t>(ci)]}, clean.captured[i]});
      runs.push_back(std::move(r));
    }
    auto scores = batch_target_scores(model, runs);
    corr_sum += scores[0];
    for (size_t i = 0; i < live.size(); ++i) {
      auto [l, ci] = live[i];
      double& cell = restored_sum(l, ci);
      cell += scores[i + 1];
    }
  }

  out.corrupted_prob = corr_sum / cfg.noise_seeds;
  for (auto [l, ci] : live) {
    out.restored(l, ci) = restored_sum(l, ci) / cfg.noise_seeds;
  }
  return out;
}

std::vector<std::string> grid_classes(const TraceConfig& cfg,
                                      const std::vector<TracingRecord>& records,
                                      const Tokenizer& tok) {
  if (cfg.position_classes.size() == 1 && cfg.position_classes[0] == "all") {
    int max_len = 0;
    for (const auto& r : records) {
      max_len = std::max(max_len, static_cast<int>(tok.encode(r.prompt).size()));
    }
    std::vector<std::string> classes;
    for (int p = 0; p < max_len; ++p) classes.push_back("pos_" + std::to_string(p));
    return classes;
  }
  return cfg.position_classes;
}

std::vector<int> record_positions(const TraceConfig& cfg,
                                  const std::vector<std::string>& classes,
                                  const ResolvedRecord& rec) {
  const bool all_mode = cfg.position_classes.size() == 1 && cfg.position_classes[0] == "all";
  std::vector<int> out;
  if (all_mode) {
    for (size_t ci = 0; ci < classes.size(); ++ci) {
      out.push_back(static_cast<int>(ci) < static_cast<int>(rec.prompt.size())
                        ? static_cast<int>(ci)
                        : -1);
    }
    return out;
  }
  const int last = static_cast<int>(rec.prompt.size()) - 1;
  for (const auto& c : classes) {
    if (c == "first_subject") {
      out.push_back(rec.subj_begin);
    } else if (c == "last_subject") {
      out.push_back(rec.subj_end - 1);
    } else if (c == "last_token") {
      out.push_back(last);
    } else {
      throw ValidationError("unknown position class: " + c);
    }
  }
  return out;
}

}  // namespace

double indirect_effect(const Model& model, const Tokenizer& tok,
                       const TracingRecord& record, int layer, int position,
                       const TraceConfig& cfg) {
  cfg.validate();
  if (layer < 0 || layer >= model.config.n_layers) {
    throw ValidationError("indirect_effect: layer out of range");
  }
  ResolvedRecord rec = resolve_record(tok, record);
  if (position < 0 || position >= static_cast<int>(rec.prompt.size())) {
    throw ValidationError("indirect_effect: position out of range");
  }

  CaptureSpec capture;
  capture.sites.push_back({layer, cfg.site_kind, position});
  std::vector<int> full = rec.prompt;
  full.insert(full.end(), rec.target.begin(), rec.target.end());
  ForwardResult clean = forward(model, full, &capture);

  const std::uint64_t content = record_content_hash(record);
  std::vector<SequenceRun> runs;
  for (int s = 0; s < cfg.noise_seeds; ++s) {
    NoiseSpec noise{rec.subj_begin, rec.subj_end, cfg.sigma,
                    mix_seed(cfg.seed, content, static_cast<std::uint64_t>(s))};
    SequenceRun corrupted;
    corrupted.prompt = rec.prompt;
    corrupted.target = rec.target;
    corrupted.noise = noise;
    SequenceRun restored = corrupted;
    restored.patches.push_back({{layer, cfg.site_kind, position}, clean.captured[0]});
    runs.push_back(std::move(corrupted));
    runs.push_back(std::move(restored));
  }
  auto scores = batch_target_scores(model, runs);
  double r = 0.0;
  for (int s = 0; s < cfg.noise_seeds; ++s) {
    r += scores[static_cast<size_t>(2 * s + 1)] - scores[static_cast<size_t>(2 * s)];
  }
  return r / cfg.noise_seeds;
}

TraceResult trace_grid(const Model& model, const Tokenizer& tok,
                       const std::vector<TracingRecord>& records,
                       const TraceConfig& cfg) {
  cfg.validate();
  if (records.empty()) throw ValidationError("trace_grid: no records");
  const int L = model.config.n_layers;

  TraceResult result;
  result.n_layers = L;

  std::map<Form, std::vector<TracingRecord>> by_form;
  for (const auto& r : records) {
    auto& list = by_form[r.form];
    if (cfg.max_records > 0 && static_cast<int>(list.size()) >= cfg.max_records) continue;
    list.push_back(r);
  }

  int total_used = 0;
  for (auto& [form, recs] : by_form) {
    TraceFormGrid grid;
    grid.classes = grid_classes(cfg, recs, tok);
    const int C = static_cast<int>(grid.classes.size());

    std::vector<RecordTraceOut> outs(recs.size());
    parallel_for(static_cast<int>(recs.size()), cfg.jobs, [&](int i) {
      ResolvedRecord rec = resolve_record(tok, recs[static_cast<size_t>(i)]);
      auto positions = record_positions(cfg, grid.classes, rec);
      outs[static_cast<size_t>(i)] =
          trace_one_record(model, tok, recs[static_cast<size_t>(i)], positions, cfg);
    });

    MatD sum = MatD::Zero(L, C);
    MatD count = MatD::Zero(L, C);
    for (size_t i = 0; i < outs.size(); ++i) {
      const auto& o = outs[i];
      TraceRecordDetail detail;
      detail.case_id = recs[i].case_id;
      detail.skipped = o.skipped;
      detail.clean_prob = o.clean_prob;
      detail.corrupted_prob = o.corrupted_prob;
      detail.restored = o.restored;
      grid.records.push_back(std::move(detail));
      if (o.skipped) {
        ++grid.n_skipped;
        continue;
      }
      ++grid.n_used;
      for (int l = 0; l < L; ++l) {
        for (int c = 0; c < C; ++c) {
          if (std::isfinite(o.restored(l, c))) {
            sum(l, c) += o.restored(l, c) - o.corrupted_prob;
            count(l, c) += 1.0;
          }
        }
      }
    }
    grid.aie = MatD::Zero(L, C);
    for (int l = 0; l < L; ++l) {
      for (int c = 0; c < C; ++c) {
        if (count(l, c) > 0) grid.aie(l, c) = sum(l, c) / count(l, c);
      }
    }
    if (grid.n_used == 0) {
      throw ValidationError(std::string("trace_grid: all ") + form_name(form) +
                            " records were skipped (clean probability below threshold)");
    }
    total_used += grid.n_used;
    result.forms[form] = std::move(grid);
  }
  if (total_used == 0) throw ValidationError("trace_grid: all records skipped");
  return result;
}

LayerGroups select_layer_groups(const TraceResult& traces, int window) {
  if (window < 1) throw ValidationError("select_layer_groups: window must be >= 1");
  if (window > traces.n_layers) {
    throw ValidationError("select_layer_groups: window exceeds layer count");
  }
  for (Form form : kAllForms) {
    if (!traces.forms.count(form)) {
      throw ValidationError(std::string("select_layer_groups: missing ") + form_name(form) +
                            " trace");
    }
  }

  auto column = [&](Form form) -> VecD {
    const auto& grid = traces.forms.at(form);
    auto it = std::find(grid.classes.begin(), grid.classes.end(), "last_subject");
    if (it == grid.classes.end()) {
      throw ValidationError("select_layer_groups: trace lacks the last_subject class");
    }
    return grid.aie.col(it - grid.classes.begin());
  };

  VecD fd_score = column(Form::formula) + column(Form::description);
  VecD i_score = column(Form::instance);

  auto best_window = [&](const VecD& score) {
    int best_start = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int s = 0; s + window <= traces.n_layers; ++s) {
      double v = score.segment(s, window).sum();
      if (v > best + 1e-15) {
        best = v;
        best_start = s;
      }
    }
    std::vector<int> layers;
    for (int l = best_start; l < best_start + window; ++l) layers.push_back(l);
    return layers;
  };

  LayerGroups groups;
  groups.fd_layers = best_window(fd_score);
  groups.i_layers = best_window(i_score);
  groups.overlap_warning =
      groups.fd_layers.back() >= groups.i_layers.front() &&
      groups.i_layers.back() >= groups.fd_layers.front();
  return groups;
}

namespace {

json nan_safe(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

void export_trace(const TraceResult& result, const std::filesystem::path& path,
                  const std::string& format) {
  if (format == "csv") {
    std::ostringstream out;
    out << "form,layer,position_class,aie,n_records\n";
    out.precision(17);
    for (const auto& [form, grid] : result.forms) {
      for (int l = 0; l < result.n_layers; ++l) {
        for (size_t c = 0; c < grid.classes.size(); ++c) {
          out << form_name(form) << ',' << l << ',' << grid.classes[c] << ','
              << grid.aie(l, static_cast<long>(c)) << ',' << grid.n_used << '\n';
        }
      }
    }
    atomic_write(path, out.str());
    return;
  }
  if (format != "json") throw ValidationError("unknown trace export format: " + format);

  json forms;
  for (const auto& [form, grid] : result.forms) {
    json aie = json::array();
    for (int l = 0; l < result.n_layers; ++l) {
      json row = json::array();
      for (size_t c = 0; c < grid.classes.size(); ++c) {
        row.push_back(grid.aie(l, static_cast<long>(c)));
      }
      aie.push_back(row);
    }
    json recs = json::array();
    for (const auto& d : grid.records) {
      json restored = json::array();
      for (int l = 0; l < d.restored.rows(); ++l) {
        json row = json::array();
        for (int c = 0; c < d.restored.cols(); ++c) row.push_back(nan_safe(d.restored(l, c)));
        restored.push_back(row);
      }
      recs.push_back(json{{"case_id", d.case_id},
                          {"skipped", d.skipped},
                          {"clean_prob", d.clean_prob},
                          {"corrupted_prob", d.corrupted_prob},
                          {"restored", restored}});
    }
    forms[form_name(form)] = json{{"classes", grid.classes},
                                  {"n_used", grid.n_used},
                                  {"n_skipped", grid.n_skipped},
                                  {"aie", aie},
                                  {"records", recs}};
  }
  json doc{{"n_layers", result.n_layers}, {"forms", forms}};
  atomic_write(path, doc.dump(2) + "\n");
}

TraceResult import_trace(const std::filesystem::path& path) {
  std::string content = read_file(path);
  TraceResult result;

  if (content.rfind("form,layer", 0) == 0) {
    std::istringstream in(content);
    std::string line;
    std::getline(in, line);  // header
    int max_layer = -1;
    std::map<Form, std::vector<std::tuple<int, std::string, double, int>>> rows;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string form_s, layer_s, class_s, aie_s, n_s;
      std::getline(ls, form_s, ',');
      std::getline(ls, layer_s, ',');
      std::getline(ls, class_s, ',');
      std::getline(ls, aie_s, ',');
      std::getline(ls, n_s, ',');
      int layer = std::stoi(layer_s);
      max_layer = std::max(max_layer, layer);
      rows[form_from_name(form_s)].emplace_back(layer, class_s, std::stod(aie_s),
                                                std::stoi(n_s));
    }
    result.n_layers = max_layer + 1;
    for (auto& [form, entries] : rows) {
      TraceFormGrid grid;
      for (const auto& [layer, cls, aie, n] : entries) {
        if (std::find(grid.classes.begin(), grid.classes.end(), cls) == grid.classes.end()) {
          grid.classes.push_back(cls);
        }
        grid.n_used = n;
      }
      grid.aie = MatD::Zero(result.n_layers, static_cast<long>(grid.classes.size()));
      for (const auto& [layer, cls, aie, n] : entries) {
        auto it = std::find(grid.classes.begin(), grid.classes.end(), cls);
        grid.aie(layer, it - grid.classes.begin()) = aie;
      }
      result.forms[form] = std::move(grid);
    }
    return result;
  }

  json doc;
  try {
    doc = json::parse(content);
  } catch (const json::parse_error& e) {
    throw ValidationError("trace import: " + std::string(e.what()));
  }
  result.n_layers = doc.at("n_layers").get<int>();
  for (const auto& [name, g] : doc.at("forms").items()) {
    TraceFormGrid grid;
    grid.classes = g.at("classes").get<std::vector<std::string>>();
    grid.n_used = g.at("n_used").get<int>();
    grid.n_skipped = g.at("n_skipped").get<int>();
    const auto& aie = g.at("aie");
    grid.aie = MatD::Zero(result.n_layers, static_cast<long>(grid.classes.size()));
    for (int l = 0; l < result.n_layers; ++l) {
      for (size_t c = 0; c < grid.classes.size(); ++c) {
        grid.aie(l, static_cast<long>(c)) = aie[l][c].get<double>();
      }
    }
    if (g.contains("records")) {
      for (const auto& rj : g.at("records")) {
        TraceRecordDetail d;
        d.case_id = rj.at("case_id").get<std::int64_t>();
        d.skipped = rj.at("skipped").get<bool>();
        d.clean_prob = rj.at("clean_prob").get<double>();
        d.corrupted_prob = rj.at("corrupted_prob").get<double>();
        const auto& restored = rj.at("restored");
        int rows = static_cast<int>(restored.size());
        int cols = rows ? static_cast<int>(restored[0].size()) : 0;
        d.restored = MatD::Constant(rows, cols, std::numeric_limits<double>::quiet_NaN());
        for (int l = 0; l < rows; ++l) {
          for (int c = 0; c < cols; ++c) {
            if (!restored[l][c].is_null()) d.restored(l, c) = restored[l][c].get<double>();
          }
        }
        grid.records.push_back(std::move(d));
      }
    }
    result.forms[form_from_name(name)] = std::move(grid);
  }
  return result;
}

}  // namespace relab
