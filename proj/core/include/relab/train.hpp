// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "relab/model.hpp"

#include <cstdint>
#include <vector>

namespace relab {

struct TrainHyper {
  int steps = 4000;
  int batch = 48;
  float lr = 1.5e-3f;
  std::uint64_t seed = 7;
  /// Early stop once the trailing-window mean per-token CE drops below this.
  float target_ce = 0.05f;
  int trailing_window = 50;
  float grad_clip = 1.0f;
  bool verbose = false;
};

struct TrainResult {
  std::vector<float> loss_trace;  // per-step mean per-token cross-entropy
  int steps_run = 0;
  float final_ce = 0.0f;
};

/// Next-token training over tokenized corpus lines (each an independent
/// sequence). Deterministic given (model, hyper.seed). steps=0 leaves the
/// model unchanged. Throws NumericalError naming the step on divergence.
TrainResult train(Model& model, const std::vector<std::vector<int>>& lines,
                  const TrainHyper& hyper);

}  // namespace relab
