#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dlr/train.hpp"

namespace dlr {

struct MetricReport {
  double picp = 0.0;           // %
  double ace = 0.0;            // |PICP - PINC|, percentage points
  double pinaw = 0.0;          // %
  double interval_score = 0.0; // %, Winkler at alpha = 1 - (q_high - q_low)
  double qs = 0.0;             // %
  double crossing_rate = 0.0;  // % of (window,line,hour) samples with low > high
  double pinc = 0.0;           // nominal coverage, %
  long long n_samples = 0;
  std::vector<double> per_line_qs;  // %
};

/// De-normalized forecasts and truths, one matrix triple per test window,
/// each n_lines x horizon.
struct EvalSet {
  std::vector<Mat> low, high, truth;
  std::vector<int> line_ids;
};

/// Runs the model over the dataset's test windows in small chunks and
/// de-normalizes everything back to ampere units.
inline EvalSet collect_forecasts(const Model& m, const WindowedDataset& ds, const LineGraphIndex& lg, int chunk = 16) {
  detail::check_dataset_model(m, ds);
  if (ds.test_starts.empty()) throw std::invalid_argument("collect_forecasts: empty test split");
  std::shared_ptr<const Mat> op = variant_operator(m.cfg.variant, lg);
  EvalSet es;
  es.line_ids = ds.line_ids;
  for (size_t off = 0; off < ds.test_starts.size(); off += chunk) {
    const size_t end = std::min(ds.test_starts.size(), off + chunk);
    std::vector<int> part(ds.test_starts.begin() + off, ds.test_starts.begin() + end);
    std::vector<Mat> xs(kHistoryHours);
    for (int t = 0; t < kHistoryHours; ++t) xs[t] = batch_timestep(ds, part, t);
    std::vector<ForecastBundle> bundles = forecast_batch(m, xs, static_cast<int>(part.size()), op);
    for (size_t w = 0; w < part.size(); ++w) {
      es.low.push_back(denormalize_target(ds.stats, bundles[w].low));
      es.high.push_back(denormalize_target(ds.stats, bundles[w].high));
      es.truth.push_back(ds.target_raw(part[w]));
    }
  }
  return es;
}

/// Coverage and sharpness metrics on ordered (swap-sorted) bounds. Widths and
/// scores are normalized by each line's test-split target range before
/// averaging, then reported as percentages.
inline MetricReport evaluate(const EvalSet& es, double q_low = 0.1, double q_high = 0.9) {
  if (es.truth.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (!(0.0 < q_low && q_low < q_high && q_high < 1.0)) throw std::invalid_argument("evaluate: bad quantile levels");
  const int n_lines = es.truth.front().rows;
  const int horizon = es.truth.front().cols;
  const size_t n_windows = es.truth.size();
  if (es.low.size() != n_windows || es.high.size() != n_windows)
    throw std::invalid_argument("evaluate: bundle count mismatch");

  const double alpha = 1.0 - (q_high - q_low);
  std::vector<double> range(n_lines);
  for (int i = 0; i < n_lines; ++i) {
    double lo = es.truth.front()(i, 0), hi = lo;
    for (const Mat& y : es.truth)
      for (int t = 0; t < horizon; ++t) {
        lo = std::min(lo, y(i, t));
        hi = std::max(hi, y(i, t));
      }
    range[i] = std::max(hi - lo, 1e-9);
  }

  long long covered = 0, crossings = 0;
  double width_norm = 0.0, winkler_norm = 0.0, qs_norm = 0.0;
  std::vector<double> per_line_qs(n_lines, 0.0);
  for (size_t w = 0; w < n_windows; ++w) {
    const Mat& y = es.truth[w];
    const Mat& lo_m = es.low[w];
    const Mat& hi_m = es.high[w];
    if (!y.same_shape(lo_m) || !y.same_shape(hi_m)) throw std::invalid_argument("evaluate: window shape mismatch");
    for (int i = 0; i < n_lines; ++i)
      for (int t = 0; t < horizon; ++t) {
        double lo = lo_m(i, t), hi = hi_m(i, t);
        if (lo > hi) {
          std::swap(lo, hi);
          ++crossings;
        }
        const double yv = y(i, t);
        const double width = hi - lo;
        if (lo <= yv && yv <= hi) ++covered;
        double winkler = width;
        if (yv < lo) winkler += 2.0 / alpha * (lo - yv);
        if (yv > hi) winkler += 2.0 / alpha * (yv - hi);
        const double qs_pair = 0.5 * (pinball_term(lo, yv, q_low) + pinball_term(hi, yv, q_high));
        width_norm += width / range[i];
        winkler_norm += winkler / range[i];
        qs_norm += qs_pair / range[i];
        per_line_qs[i] += qs_pair / range[i];
      }
  }

  MetricReport r;
  r.n_samples = static_cast<long long>(n_windows) * n_lines * horizon;
  r.pinc = (q_high - q_low) * 100.0;
  r.picp = 100.0 * static_cast<double>(covered) / static_cast<double>(r.n_samples);
  r.ace = std::fabs(r.picp - r.pinc);
  r.pinaw = 100.0 * width_norm / static_cast<double>(r.n_samples);
  r.interval_score = 100.0 * winkler_norm / static_cast<double>(r.n_samples);
  r.qs = 100.0 * qs_norm / static_cast<double>(r.n_samples);
  r.crossing_rate = 100.0 * static_cast<double>(crossings) / static_cast<double>(r.n_samples);
  const double per_line_n = static_cast<double>(n_windows) * horizon;
  r.per_line_qs.resize(n_lines);
  for (int i = 0; i < n_lines; ++i) r.per_line_qs[i] = 100.0 * per_line_qs[i] / per_line_n;
  return r;
}

inline nlohmann::json metric_report_json(const MetricReport& r, const std::vector<int>& line_ids) {
  nlohmann::json per_line = nlohmann::json::array();
  for (size_t i = 0; i < r.per_line_qs.size(); ++i)
    per_line.push_back({{"line_id", i < line_ids.size() ? line_ids[i] : static_cast<int>(i)},
                        {"qs_pct", r.per_line_qs[i]}});
  return nlohmann::json{{"normalization", "per-line test-split target range"},
                        {"pinc_pct", r.pinc},
                        {"picp_pct", r.picp},
                        {"ace_pct", r.ace},
                        {"pinaw_pct", r.pinaw},
                        {"interval_score_pct", r.interval_score},
                        {"qs_pct", r.qs},
                        {"crossing_rate_pct", r.crossing_rate},
                        {"n_samples", r.n_samples},
                        {"per_line_qs", std::move(per_line)}};
}

struct BenchmarkRow {
  std::string variant;
  MetricReport report;
  long long params = 0;
};

/// Trains and evaluates every variant on the same dataset with the same seed.
inline std::vector<BenchmarkRow> benchmark(const std::vector<Variant>& variants, const WindowedDataset& ds,
                                           const LineGraphIndex& lg, const ModelConfig& base_cfg,
                                           const TrainConfig& tcfg) {
  std::vector<BenchmarkRow> rows;
  for (Variant v : variants) {
    ModelConfig cfg = base_cfg;
    cfg.variant = v;
    Model m = make_model(cfg, ds.n_lines, tcfg.seed);
    train(m, ds, lg, tcfg);
    EvalSet es = collect_forecasts(m, ds, lg);
    BenchmarkRow row;
    row.variant = variant_name(v);
    row.report = evaluate(es, cfg.q_low, cfg.q_high);
    row.params = count_params(cfg, ds.n_lines).total();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace dlr
