// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#include "relab/train.hpp"

#include "model_impl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace relab {

namespace {

struct TensorView {
  float* data;
  std::size_t n;
};

std::vector<TensorView> views(Weights& w) {
  std::vector<TensorView> out;
  w.for_each_tensor([&](const std::string&, int r, int c, float* data) {
    out.push_back({data, static_cast<std::size_t>(r) * static_cast<std::size_t>(c)});
  });
  return out;
}

}  // namespace

TrainResult train(Model& model, const std::vector<std::vector<int>>& lines,
                  const TrainHyper& hyper) {
  const auto& cfg = model.config;
  TrainResult result;
  if (hyper.steps < 0) throw ValidationError("steps must be >= 0");
  if (hyper.steps == 0) return result;
  if (lines.empty()) throw ValidationError("training corpus is empty");
  if (hyper.batch <= 0) throw ValidationError("batch must be > 0");
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].size() < 2) {
      throw ValidationError("corpus line " + std::to_string(i) + " is too short to train on");
    }
    if (static_cast<int>(lines[i].size()) > cfg.max_seq_len) {
      throw ValidationError("corpus line " + std::to_string(i) + " exceeds max_seq_len");
    }
  }

  Weights grads, adam_m, adam_v;
  detail::zero_like(model.w, grads);
  detail::zero_like(model.w, adam_m);
  detail::zero_like(model.w, adam_v);
  auto wv = views(model.w);
  auto gv = views(grads);
  auto mv = views(adam_m);
  auto vv = views(adam_v);

  const float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;

  std::mt19937_64 rng(hyper.seed);
  std::vector<int> order(lines.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  size_t cursor = 0;

  detail::Tape<float> tape;
  double trailing_sum = 0.0;
  std::vector<float>& trace = result.loss_trace;

  for (int step = 1; step <= hyper.steps; ++step) {
    detail::PackInput<float> in;
    for (int b = 0; b < hyper.batch; ++b) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const auto& line = lines[static_cast<size_t>(order[cursor++])];
      int start = in.rows();
      in.segments.push_back({start, static_cast<int>(line.size())});
      in.tokens.insert(in.tokens.end(), line.begin(), line.end());
    }

    detail::run_forward(cfg, model.w, in, tape);

    // Next-token CE over every position that has a successor in its segment.
    int n_pred = 0;
    for (const auto& seg : in.segments) n_pred += seg.len - 1;
    const float inv_n = 1.0f / static_cast<float>(n_pred);

    double loss = 0.0;
    detail::Mat<float> dlogits = detail::Mat<float>::Zero(in.rows(), cfg.vocab_size);
    for (const auto& seg : in.segments) {
      for (int p = 0; p + 1 < seg.len; ++p) {
        int row = seg.start + p;
        int tok = in.tokens[static_cast<size_t>(row + 1)];
        auto logit_row = tape.logits.row(row);
        float m = logit_row.maxCoeff();
        Eigen::Array<float, 1, Eigen::Dynamic> p_row = (logit_row.array() - m).exp();
        float denom = p_row.sum();
        loss -= static_cast<double>(std::log(p_row(tok) / denom));
        dlogits.row(row) = (p_row / denom * inv_n).matrix();
        dlogits(row, tok) -= inv_n;
      }
    }
    float step_loss = static_cast<float>(loss / n_pred);
    if (!std::isfinite(step_loss)) {
      throw NumericalError("training diverged at step " + std::to_string(step));
    }
    trace.push_back(step_loss);

    for (auto& g : gv) std::fill(g.data, g.data + g.n, 0.0f);
    detail::run_backward(cfg, model.w, in, tape, dlogits, &grads);

    if (hyper.grad_clip > 0) {
      double sq = 0.0;
      for (const auto& g : gv) {
        for (std::size_t i = 0; i < g.n; ++i) sq += static_cast<double>(g.data[i]) * g.data[i];
      }
      float norm = static_cast<float>(std::sqrt(sq));
      if (norm > hyper.grad_clip) {
        float s = hyper.grad_clip / norm;
        for (auto& g : gv) {
          for (std::size_t i = 0; i < g.n; ++i) g.data[i] *= s;
        }
      }
    }

    const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(step));
    const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(step));
    for (size_t t = 0; t < wv.size(); ++t) {
      float* w = wv[t].data;
      float* g = gv[t].data;
      float* m = mv[t].data;
      float* v = vv[t].data;
      for (std::size_t i = 0; i < wv[t].n; ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
        w[i] -= hyper.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
      }
    }

    result.steps_run = step;
    trailing_sum += step_loss;
    if (step > hyper.trailing_window) {
      trailing_sum -= trace[static_cast<size_t>(step - hyper.trailing_window - 1)];
    }
    if (hyper.verbose && (step % 100 == 0 || step == 1)) {
      std::fprintf(stderr, "step %5d  ce %.4f\n", step, static_cast<double>(step_loss));
    }
    if (step >= hyper.trailing_window &&
        trailing_sum / hyper.trailing_window < hyper.target_ce) {
      break;
    }
  }

  result.final_ce = trace.empty() ? 0.0f : trace.back();
  return result;
}

}  // namespace relab
