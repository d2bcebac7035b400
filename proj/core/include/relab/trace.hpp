// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "relab/data.hpp"
#include "relab/model.hpp"
#include "relab/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace relab {

struct TracingRecord {
  std::int64_t case_id = 0;
  std::string subject;
  Form form = Form::formula;
  std::string prompt;  // contains the subject verbatim exactly once
  std::string target;
};

/// Which targets the tracing set is built against. The paper traces the
/// model's existing (original-rule) knowledge; counterfactual targets are
/// also supported for post-edit tracing.
enum class TraceTargetSource { original, counterfactual };

/// Cases reformulated into unified subject-anchored templates, with
/// form-specific targets (formula: final symbolic expression; description:
/// the verb-led phrase; instance: the final answer), replicated
/// `replication` times and deterministically shuffled per form.
std::map<Form, std::vector<TracingRecord>> build_tracing_set(
    const std::vector<RuleCase>& cases, int replication, std::uint64_t seed,
    TraceTargetSource source = TraceTargetSource::original);

void save_tracing_records(const std::map<Form, std::vector<TracingRecord>>& records,
                          const std::filesystem::path& path);
std::map<Form, std::vector<TracingRecord>> load_tracing_records(
    const std::filesystem::path& path);

struct TraceConfig {
  float sigma = 0.025f;
  int noise_seeds = 10;
  SiteKind site_kind = SiteKind::mlp_out;
  /// Class labels: first_subject, last_subject, last_token — or the single
  /// entry "all" for per-token grids.
  std::vector<std::string> position_classes = {"first_subject", "last_subject",
                                               "last_token"};
  /// Records whose clean target probability is below this are excluded from
  /// AIE aggregation (and counted).
  double skip_threshold = 0.02;
  std::uint64_t seed = 0;
  int jobs = 0;
  /// Cap on records per form (0 = all); a practical lever for quick runs.
  int max_records = 0;

  void validate() const;
};

struct TraceRecordDetail {
  std::int64_t case_id = 0;
  bool skipped = false;
  double clean_prob = 0.0;
  double corrupted_prob = 0.0;  // mean over noise seeds
  MatD restored;                // [n_layers, n_classes], mean over noise seeds
};

struct TraceFormGrid {
  std::vector<std::string> classes;
  MatD aie;  // [n_layers, n_classes]
  int n_used = 0;
  int n_skipped = 0;
  std::vector<TraceRecordDetail> records;
};

struct TraceResult {
  int n_layers = 0;
  std::map<Form, TraceFormGrid> forms;
};

/// r = mean over noise seeds of (restored − corrupted) target probability for
/// one record at one site. Noise seeds derive from the record's content, so
/// duplicated records contribute identical values.
double indirect_effect(const Model& model, const Tokenizer& tok,
                       const TracingRecord& record, int layer, int position,
                       const TraceConfig& cfg);

/// Full grid over layers × position classes, averaged over records and noise
/// seeds, grouped by form. Low-confidence records are skipped and counted.
TraceResult trace_grid(const Model& model, const Tokenizer& tok,
                       const std::vector<TracingRecord>& records,
                       const TraceConfig& cfg);

struct LayerGroups {
  std::vector<int> fd_layers;
  std::vector<int> i_layers;
  bool overlap_warning = false;
};

/// Contiguous `window` of layers maximizing formula+description AIE at the
/// last-subject class (fd) and instance AIE (i). Overlapping windows are kept
/// with a warning flag.
LayerGroups select_layer_groups(const TraceResult& traces, int window);

void export_trace(const TraceResult& result, const std::filesystem::path& path,
                  const std::string& format);
TraceResult import_trace(const std::filesystem::path& path);

}  // namespace relab
