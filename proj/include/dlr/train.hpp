#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlr/dataset.hpp"
#include "dlr/model.hpp"

namespace dlr {

struct TrainConfig {
  int epochs = 50;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 128;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs <= 0 || batch_size <= 0) throw std::invalid_argument("train config: epochs and batch_size positive");
    if (lr <= 0.0 || weight_decay < 0.0 || clip_norm <= 0.0)
      throw std::invalid_argument("train config: lr > 0, weight_decay >= 0, clip_norm > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && eps > 0.0))
      throw std::invalid_argument("train config: bad adam constants");
  }
};

inline double pinball_term(double pred, double y, double q) {
  return pred <= y ? q * (y - pred) : (1.0 - q) * (pred - y);
}

/// Sum of pinball terms over both bounds, all lines, all horizon steps.
inline double total_loss(const Mat& low, const Mat& high, const Mat& target, double q_low, double q_high) {
  if (!low.same_shape(target) || !high.same_shape(target))
    throw std::invalid_argument("total_loss: bundle/target shape mismatch");
  double s = 0.0;
  for (int i = 0; i < target.rows; ++i)
    for (int t = 0; t < target.cols; ++t)
      s += pinball_term(low(i, t), target(i, t), q_low) + pinball_term(high(i, t), target(i, t), q_high);
  return s;
}

/// Stacks the feature rows of all windows in `starts` at history offset t.
inline Mat batch_timestep(const WindowedDataset& ds, const std::vector<int>& starts, int t) {
  const int e = ds.n_lines;
  const int d = ds.schema.total_dim();
  Mat out(static_cast<int>(starts.size()) * e, d);
  for (size_t w = 0; w < starts.size(); ++w) {
    const Mat& src = ds.features[static_cast<size_t>(starts[w]) + t];
    std::copy(src.v.begin(), src.v.end(), out.v.begin() + static_cast<size_t>(w) * e * d);
  }
  return out;
}

/// Per-line normalized targets for a batch of windows, each batch x horizon.
inline std::vector<std::shared_ptr<const Mat>> batch_targets(const WindowedDataset& ds,
                                                             const std::vector<int>& starts) {
  const int b = static_cast<int>(starts.size());
  std::vector<Mat> per_line(ds.n_lines, Mat(b, kHorizonHours));
  for (int w = 0; w < b; ++w) {
    Mat tgt = ds.target_norm(starts[w]);
    for (int i = 0; i < ds.n_lines; ++i)
      for (int t = 0; t < kHorizonHours; ++t) per_line[i](w, t) = tgt(i, t);
  }
  std::vector<std::shared_ptr<const Mat>> out;
  out.reserve(per_line.size());
  for (Mat& m : per_line) out.push_back(std::make_shared<const Mat>(std::move(m)));
  return out;
}

/// Tape-side batch loss: sum over lines and bounds of the pinball sums,
/// divided by the number of windows in the batch.
inline ad::Tensor batch_loss(ad::Tape& tape, const ForwardResult& fr,
                             const std::vector<std::shared_ptr<const Mat>>& targets, double q_low, double q_high,
                             int batch) {
  ad::Tensor loss{-1};
  for (size_t i = 0; i < fr.low.size(); ++i) {
    ad::Tensor li = tape.add(tape.sum(tape.pinball(fr.low[i], targets[i], q_low)),
                             tape.sum(tape.pinball(fr.high[i], targets[i], q_high)));
    loss = i == 0 ? li : tape.add(loss, li);
  }
  return tape.scale(loss, 1.0 / static_cast<double>(batch));
}

/// Adam with decoupled weight decay; moment state per parameter matrix.
class AdamW {
 public:
  AdamW(const TrainConfig& cfg, const std::vector<Mat*>& params) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Mat* p : params) {
      m_.emplace_back(p->rows, p->cols);
      v_.emplace_back(p->rows, p->cols);
    }
  }

  /// grad_scale multiplies every gradient before the moment update (used for
  /// global-norm clipping).
  void step(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads, double grad_scale = 1.0) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw std::invalid_argument("adamw: state mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;
    for (size_t k = 0; k < params.size(); ++k) {
      Mat& p = *params[k];
      const Mat& g = *grads[k];
      if (!p.same_shape(g)) throw std::invalid_argument("adamw: grad shape mismatch");
      if (decay != 1.0) scale_inplace(p, decay);
      for (size_t i = 0; i < p.v.size(); ++i) {
        const double gi = g.v[i] * grad_scale;
        m_[k].v[i] = cfg_.beta1 * m_[k].v[i] + (1.0 - cfg_.beta1) * gi;
        v_[k].v[i] = cfg_.beta2 * v_[k].v[i] + (1.0 - cfg_.beta2) * gi * gi;
        p.v[i] -= cfg_.lr * (m_[k].v[i] / bc1) / (std::sqrt(v_[k].v[i] / bc2) + cfg_.eps);
      }
    }
  }

  long long steps_taken() const { return t_; }

 private:
  TrainConfig cfg_;
  long long t_ = 0;
  std::vector<Mat> m_, v_;
};

struct TrainResult {
  std::vector<double> train_loss;  // mean per-window loss per epoch
  std::vector<double> val_loss;    // empty when no validation windows exist
  int best_epoch = -1;             // 0-based; -1 when no validation ran
  double best_val = 0.0;
};

namespace detail {

inline std::vector<Mat*> param_ptrs(Model& m) {
  std::vector<Mat*> ps;
  m.visit_params([&ps](const std::string&, Mat& mat) { ps.push_back(&mat); });
  return ps;
}

inline std::vector<Mat> snapshot_params(Model& m) {
  std::vector<Mat> out;
  m.visit_params([&out](const std::string&, Mat& mat) { out.push_back(mat); });
  return out;
}

inline void restore_params(Model& m, const std::vector<Mat>& snap) {
  size_t k = 0;
  m.visit_params([&](const std::string&, Mat& mat) { mat = snap[k++]; });
}

inline void check_dataset_model(const Model& m, const WindowedDataset& ds) {
  if (ds.n_lines != m.n_lines) throw std::invalid_argument("dataset/model line count mismatch");
  if (ds.schema.total_dim() != m.cfg.input_dim) throw std::invalid_argument("dataset/model feature width mismatch");
  if (m.cfg.horizon != kHorizonHours) throw std::invalid_argument("model horizon must match the 24 h window horizon");
}

}  // namespace detail

/// Mean per-window total_loss of the current parameters over `starts`,
/// evaluated forward-only in small chunks.
inline double mean_window_loss(const Model& m, const WindowedDataset& ds, const std::shared_ptr<const Mat>& mix_op,
                               const std::vector<int>& starts, int chunk = 16) {
  if (starts.empty()) throw std::invalid_argument("mean_window_loss: no windows");
  double total = 0.0;
  for (size_t off = 0; off < starts.size(); off += chunk) {
    const size_t end = std::min(starts.size(), off + chunk);
    std::vector<int> part(starts.begin() + off, starts.begin() + end);
    std::vector<Mat> xs(kHistoryHours);
    for (int t = 0; t < kHistoryHours; ++t) xs[t] = batch_timestep(ds, part, t);
    std::vector<ForecastBundle> bundles = forecast_batch(m, xs, static_cast<int>(part.size()), mix_op);
    for (size_t w = 0; w < part.size(); ++w) {
      Mat tgt = ds.target_norm(part[w]);
      total += total_loss(bundles[w].low, bundles[w].high, tgt, m.cfg.q_low, m.cfg.q_high);
    }
  }
  return total / static_cast<double>(starts.size());
}

/// Deterministic minibatch training with best-by-validation selection. The
/// last tenth of the training windows (chronologically) is held out; when
/// validation exists the best epoch's parameters are restored at the end.
inline TrainResult train(Model& model, const WindowedDataset& ds, const LineGraphIndex& lg, const TrainConfig& cfg) {
  cfg.validate();
  detail::check_dataset_model(model, ds);
  if (ds.train_starts.empty()) throw std::invalid_argument("train: empty train split");
  std::shared_ptr<const Mat> op = variant_operator(model.cfg.variant, lg);

  const int n_train = static_cast<int>(ds.train_starts.size());
  const int n_val = n_train >= 2 ? std::max(1, n_train / 10) : 0;
  std::vector<int> fit_starts(ds.train_starts.begin(), ds.train_starts.end() - n_val);
  std::vector<int> val_starts(ds.train_starts.end() - n_val, ds.train_starts.end());

  std::vector<Mat*> params = detail::param_ptrs(model);
  AdamW opt(cfg, params);
  std::mt19937_64 shuffle_rng(cfg.seed);

  TrainResult res;
  std::vector<Mat> best;
  res.best_val = std::numeric_limits<double>::infinity();

  std::vector<size_t> order(fit_starts.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (size_t off = 0; off < order.size(); off += cfg.batch_size) {
      const size_t end = std::min(order.size(), off + cfg.batch_size);
      std::vector<int> starts;
      starts.reserve(end - off);
      for (size_t i = off; i < end; ++i) starts.push_back(fit_starts[order[i]]);
      const int b = static_cast<int>(starts.size());

      ad::Tape tape;
      StagedModel staged = stage_model(tape, model);
      std::vector<ad::Tensor> xs(kHistoryHours);
      for (int t = 0; t < kHistoryHours; ++t) xs[t] = tape.constant(batch_timestep(ds, starts, t));
      ForwardResult fr = model_forward(tape, model, staged, xs, b, op);
      auto targets = batch_targets(ds, starts);
      ad::Tensor loss = batch_loss(tape, fr, targets, model.cfg.q_low, model.cfg.q_high, b);
      const double loss_value = tape.value(loss)(0, 0);
      if (!std::isfinite(loss_value))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch offset " +
                                 std::to_string(off));
      epoch_loss += loss_value * b;
      tape.backward(loss);

      std::vector<const Mat*> grads;
      grads.reserve(staged.flat.size());
      double norm_sq = 0.0;
      for (ad::Tensor t : staged.flat) {
        const Mat& g = tape.grad(t);
        norm_sq += frobenius_sq(g);
        grads.push_back(&g);
      }
      const double norm = std::sqrt(norm_sq);
      const double grad_scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
      opt.step(params, grads, grad_scale);
    }
    res.train_loss.push_back(epoch_loss / static_cast<double>(fit_starts.size()));

    if (n_val > 0) {
      const double vl = mean_window_loss(model, ds, op, val_starts);
      res.val_loss.push_back(vl);
      if (vl < res.best_val) {
        res.best_val = vl;
        res.best_epoch = epoch;
        best = detail::snapshot_params(model);
      }
    }
  }
  if (!best.empty()) detail::restore_params(model, best);
  return res;
}

}  // namespace dlr
