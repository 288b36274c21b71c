// Acceptance gate: one line per criterion, [PASS]/[FAIL], exit 1 on any failure.
// Always-on checks, never compiled out in Release.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlr/artifacts.hpp"
#include "dlr/config.hpp"
#include "dlr/gradcheck.hpp"
#include "dlr/metrics.hpp"
#include "dlr/model.hpp"
#include "dlr/train.hpp"

namespace fs = std::filesystem;
using namespace dlr;

namespace {

int g_failed_criteria = 0;
bool g_ok = true;
std::vector<std::string> g_notes;

#define CHECK(cond, msg)                                                                 \
  do {                                                                                   \
    if (!(cond)) {                                                                       \
      g_ok = false;                                                                      \
      std::ostringstream oss_;                                                           \
      oss_ << __FILE__ << ":" << __LINE__ << " " << msg;                                 \
      g_notes.push_back(oss_.str());                                                     \
    }                                                                                    \
  } while (0)

void criterion(int idx, const std::string& title, double time_limit_s, const std::function<void()>& body) {
  g_ok = true;
  g_notes.clear();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body();
  } catch (const std::exception& e) {
    g_ok = false;
    g_notes.push_back(std::string("unhandled exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (time_limit_s > 0.0 && secs > time_limit_s) {
    g_ok = false;
    char buf[96];
    std::snprintf(buf, sizeof buf, "runtime %.1f s exceeds the %.0f s budget", secs, time_limit_s);
    g_notes.push_back(buf);
  }
  std::printf("[%s] %d. %s (%.1f s)\n", g_ok ? "PASS" : "FAIL", idx, title.c_str(), secs);
  if (!g_ok) {
    ++g_failed_criteria;
    for (const std::string& n : g_notes) std::printf("       %s\n", n.c_str());
  }
  std::fflush(stdout);
}

std::string g_tmp;

int run_cli(const std::string& args, const std::string& log) {
  const std::string cmd = std::string(DLR_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

double percentile(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const size_t i = static_cast<size_t>(pos);
  if (i + 1 >= xs.size()) return xs.back();
  const double frac = pos - static_cast<double>(i);
  return xs[i] * (1.0 - frac) + xs[i + 1] * frac;
}

int shared_buses(const Line& a, const Line& b) {
  int n = 0;
  n += (a.from == b.from || a.from == b.to) ? 1 : 0;
  n += (a.to == b.from || a.to == b.to) ? 1 : 0;
  return n;
}

// --- criteria -------------------------------------------------------------

void c1_gradients() {
  std::vector<GradCase> cases = standard_grad_cases(20240301ULL);
  cases.push_back(model_grad_case(7ULL));
  std::vector<GradCheckResult> results = run_grad_cases(cases, 1e-5, 1e-4);
  double worst = 0.0;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_rel_err);
    CHECK(r.ok, r.name << " rel err " << r.max_rel_err);
  }
  CHECK(results.size() == cases.size(), "missing results");
  std::printf("       %zu gradient cases, worst rel err %.2e\n", results.size(), worst);
}

void c2_graph_oracles() {
  std::mt19937_64 rng(606);
  int adj2_pairs_total = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int buses = 3 + static_cast<int>(rng() % 12);
    const long long cap = std::min<long long>(20, static_cast<long long>(buses) * (buses - 1) / 2);
    const int lines = buses - 1 + static_cast<int>(rng() % (cap - (buses - 1) + 1));
    Grid g = synthetic_grid(buses, lines, rng());
    LineGraphIndex lg = to_line_graph(g);
    const int e = lg.node_count;

    // shared-endpoint oracle for adj1
    Mat adj1_oracle(e, e);
    for (int i = 0; i < e; ++i)
      for (int j = 0; j < e; ++j)
        adj1_oracle(i, j) = (i != j && shared_buses(g.lines[i], g.lines[j]) == 1) ? 1.0 : 0.0;

    // BFS distances over the oracle graph for adj2
    for (int src = 0; src < e; ++src) {
      std::vector<int> dist(e, -1);
      std::vector<int> queue{src};
      dist[src] = 0;
      for (size_t qi = 0; qi < queue.size(); ++qi) {
        const int u = queue[qi];
        for (int v = 0; v < e; ++v)
          if (adj1_oracle(u, v) != 0.0 && dist[v] < 0) {
            dist[v] = dist[u] + 1;
            queue.push_back(v);
          }
      }
      for (int v = 0; v < e; ++v) {
        const double want1 = adj1_oracle(src, v);
        const double want2 = dist[v] == 2 ? 1.0 : 0.0;
        if (lg.adj1(src, v) != want1 || lg.adj2(src, v) != want2) {
          CHECK(false, "trial " << trial << ": adjacency mismatch at (" << src << "," << v << ")");
          return;
        }
        if (want2 == 1.0) {
          ++adj2_pairs_total;
          if (shared_buses(g.lines[src], g.lines[v]) != 0) {
            CHECK(false, "trial " << trial << ": adj2 pair (" << src << "," << v << ") shares an endpoint");
            return;
          }
        }
      }
    }
  }
  CHECK(adj2_pairs_total > 0, "no double-hop pairs were exercised");
  std::printf("       200 graphs, %d double-hop pairs, zero endpoint overlaps\n", adj2_pairs_total);
}

void c3_reduction_identity() {
  const int e = 5, input_dim = 10, t_len = 6;
  ModelConfig cd;
  cd.variant = Variant::dlgclstm;
  cd.input_dim = input_dim;
  cd.hidden = 6;
  cd.head_hidden = 5;
  cd.horizon = 4;
  ModelConfig cl = cd;
  cl.variant = Variant::lstm;

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto identity_op = std::make_shared<const Mat>(Mat::identity(e));
  for (int trial = 0; trial < 50; ++trial) {
    Model md = make_model(cd, e, 100 + trial);
    Model ml = make_model(cl, e, 100 + trial);
    const int batch = 1 + trial % 3;
    std::vector<Mat> xs(t_len);
    for (int t = 0; t < t_len; ++t) {
      xs[t] = Mat(e * batch, input_dim);
      for (double& x : xs[t].v) x = u(rng);
    }
    std::vector<ForecastBundle> fd = forecast_batch(md, xs, batch, identity_op);
    std::vector<ForecastBundle> fl = forecast_batch(ml, xs, batch, variant_operator(Variant::lstm, LineGraphIndex{}));
    for (int b = 0; b < batch; ++b) {
      if (max_abs_diff(fd[b].low, fl[b].low) != 0.0 || max_abs_diff(fd[b].high, fl[b].high) != 0.0) {
        CHECK(false, "trial " << trial << ": identity-mixed D-LGCLSTM differs from plain LSTM");
        return;
      }
    }
  }
}

void c4_quantiles() {
  // naive pinball oracle on random instances
  std::mt19937_64 rng(88);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int nl = 1 + static_cast<int>(rng() % 5), hz = 1 + static_cast<int>(rng() % 6);
    Mat lo(nl, hz), hi(nl, hz), y(nl, hz);
    for (double& x : lo.v) x = u(rng);
    for (double& x : hi.v) x = u(rng);
    for (double& x : y.v) x = u(rng);
    double naive = 0.0;
    for (int i = 0; i < nl; ++i)
      for (int t = 0; t < hz; ++t) {
        const double yl = lo(i, t), yh = hi(i, t), yv = y(i, t);
        naive += yl <= yv ? 0.1 * (yv - yl) : 0.9 * (yl - yv);
        naive += yh <= yv ? 0.9 * (yv - yh) : 0.1 * (yh - yv);
      }
    const double lib = total_loss(lo, hi, y, 0.1, 0.9);
    CHECK(std::fabs(lib - naive) <= 1e-12, "pinball mismatch " << lib << " vs " << naive);
  }

  // i.i.d.-noise targets: the trained bounds are the 10th/90th percentiles.
  // Three weeks of data keep enough training windows that the shared head
  // cannot memorize the realized noise and squeeze the interval inward.
  Grid grid = synthetic_grid(4, 4, 4242);
  WeatherField wf = generate_weather(grid, 21, 4243);
  Mat ratings(wf.hours, 4);
  std::uniform_real_distribution<double> noise(0.0, 1.0);
  for (double& x : ratings.v) x = 800.0 + 200.0 * noise(rng);
  WindowedDataset ds = make_windowed_dataset(grid, wf, ratings);
  LineGraphIndex lg = to_line_graph(grid);

  ModelConfig mc;
  mc.hidden = 8;
  mc.head_hidden = 8;
  mc.shared_head = true;
  Model m = make_model(mc, 4, 99);

  // tape loss equals the window-averaged naive oracle before training
  {
    std::shared_ptr<const Mat> op = variant_operator(mc.variant, lg);
    std::vector<int> two(ds.train_starts.begin(), ds.train_starts.begin() + 2);
    ad::Tape tape;
    StagedModel staged = stage_model(tape, m);
    std::vector<ad::Tensor> xs(kHistoryHours);
    for (int t = 0; t < kHistoryHours; ++t) xs[t] = tape.constant(batch_timestep(ds, two, t));
    ForwardResult fr = model_forward(tape, m, staged, xs, 2, op);
    ad::Tensor loss = batch_loss(tape, fr, batch_targets(ds, two), mc.q_low, mc.q_high, 2);
    const double tape_value = tape.value(loss)(0, 0);
    double naive = 0.0;
    for (int s : two) {
      std::vector<int> one{s};
      std::vector<Mat> xm(kHistoryHours);
      for (int t = 0; t < kHistoryHours; ++t) xm[t] = batch_timestep(ds, one, t);
      ForecastBundle fb = forecast_batch(m, xm, 1, op).front();
      naive += total_loss(fb.low, fb.high, ds.target_norm(s), mc.q_low, mc.q_high);
    }
    naive /= 2.0;
    CHECK(std::fabs(tape_value - naive) <= 1e-12 * std::max(1.0, std::fabs(naive)),
          "tape loss " << tape_value << " vs naive " << naive);
  }

  TrainConfig tc;
  tc.epochs = 500;
  tc.lr = 5e-3;
  tc.weight_decay = 0.0;
  tc.batch_size = 4;
  tc.seed = 5;
  train(m, ds, lg, tc);
  tc.epochs = 300;
  tc.lr = 5e-4;
  train(m, ds, lg, tc);

  std::vector<double> targets;
  for (int s : ds.train_starts) {
    Mat tn = ds.target_norm(s);
    targets.insert(targets.end(), tn.v.begin(), tn.v.end());
  }
  const double p10 = percentile(targets, 0.1), p90 = percentile(targets, 0.9);

  std::shared_ptr<const Mat> op = variant_operator(mc.variant, lg);
  std::vector<Mat> xs(kHistoryHours);
  for (int t = 0; t < kHistoryHours; ++t) xs[t] = batch_timestep(ds, ds.train_starts, t);
  std::vector<ForecastBundle> fbs = forecast_batch(m, xs, static_cast<int>(ds.train_starts.size()), op);
  double mean_low = 0.0, mean_high = 0.0;
  long long n = 0;
  for (const ForecastBundle& fb : fbs) {
    for (double v : fb.low.v) mean_low += v;
    for (double v : fb.high.v) mean_high += v;
    n += static_cast<long long>(fb.low.v.size());
  }
  mean_low /= static_cast<double>(n);
  mean_high /= static_cast<double>(n);
  CHECK(std::fabs(mean_low - p10) <= 0.05, "low bound " << mean_low << " vs empirical p10 " << p10);
  CHECK(std::fabs(mean_high - p90) <= 0.05, "high bound " << mean_high << " vs empirical p90 " << p90);
  std::printf("       bounds %.3f / %.3f vs percentiles %.3f / %.3f\n", mean_low, mean_high, p10, p90);
}

void c5_physics() {
  ConductorParams cp;
  const double reference = 1024.687751;  // hand-computed heat balance, Drake at 40 C / 0.61 m/s / 1000 W/m2
  WeatherSample ref;
  ref.ambient_temp_c = 40.0;
  ref.wind_speed_ms = 0.61;
  ref.wind_direction_deg = 90.0;
  ref.solar_wm2 = 1000.0;
  const double amp_ref = ampacity(cp, ref, 0.0);
  CHECK(std::fabs(amp_ref - reference) / reference <= 0.05,
        "reference ampacity " << amp_ref << " deviates from " << reference);

  std::mt19937_64 rng(515);
  std::uniform_real_distribution<double> temp(-10.0, 45.0), wind(0.0, 12.0), dir(0.0, 360.0), sol(0.0, 1000.0),
      azim(0.0, 360.0);
  for (int k = 0; k < 1000; ++k) {
    WeatherSample w;
    w.ambient_temp_c = temp(rng);
    w.wind_speed_ms = wind(rng);
    w.wind_direction_deg = dir(rng);
    w.solar_wm2 = sol(rng);
    const double az = azim(rng);
    const double base = ampacity(cp, w, az);
    WeatherSample windier = w;
    windier.wind_speed_ms += 0.25;
    WeatherSample hotter = w;
    hotter.ambient_temp_c += 1.0;
    if (ampacity(cp, windier, az) < base - 1e-9) {
      CHECK(false, "probe " << k << ": ampacity fell when wind rose");
      return;
    }
    if (ampacity(cp, hotter, az) > base + 1e-9) {
      CHECK(false, "probe " << k << ": ampacity rose when ambient rose");
      return;
    }
  }
}

void c6_end_to_end() {
  const std::string data = g_tmp + "/demo/data";
  const std::string out = g_tmp + "/demo/out";
  const std::string log = g_tmp + "/demo/log.txt";
  fs::create_directories(g_tmp + "/demo");

  CHECK(run_cli("gen-data --config demo-20bus --out-dir " + data, log) == 0, "gen-data failed: " << slurp(log));
  CHECK(run_cli("train --config demo-20bus --data-dir " + data + " --out-dir " + out, log) == 0,
        "train d-lgclstm failed: " << slurp(log));
  CHECK(run_cli("train --config demo-20bus --variant lstm --data-dir " + data + " --out-dir " + out, log) == 0,
        "train lstm failed: " << slurp(log));
  CHECK(run_cli("eval --config demo-20bus --checkpoint " + out + "/model-d-lgclstm --data-dir " + data +
                    " --out-dir " + out,
                log) == 0,
        "eval d-lgclstm failed: " << slurp(log));
  CHECK(run_cli("eval --config demo-20bus --checkpoint " + out + "/model-lstm --data-dir " + data + " --out-dir " +
                    out,
                log) == 0,
        "eval lstm failed: " << slurp(log));
  if (!g_ok) return;

  nlohmann::json rd = nlohmann::json::parse(slurp(out + "/report-d-lgclstm.json"));
  nlohmann::json rl = nlohmann::json::parse(slurp(out + "/report-lstm.json"));
  const double picp = rd.at("picp_pct").get<double>();
  const double qs_d = rd.at("qs_pct").get<double>();
  const double qs_l = rl.at("qs_pct").get<double>();
  CHECK(std::fabs(picp - 80.0) <= 10.0, "D-LGCLSTM PICP " << picp << "% outside 80 +- 10");
  CHECK(qs_d <= qs_l, "D-LGCLSTM QS " << qs_d << " worse than LSTM baseline " << qs_l);
  std::printf("       PICP %.2f%%, QS %.3f (d-lgclstm) vs %.3f (lstm)\n", picp, qs_d, qs_l);
}

void c7_param_accounting() {
  ModelConfig cd;
  cd.variant = Variant::dlgclstm;
  cd.hidden = 64;
  cd.head_hidden = 64;
  cd.bidirectional = false;
  ModelConfig cl = cd;
  cl.variant = Variant::lgclstm;

  // hand arithmetic: 4(20*64 + 64*64 + 64) and the same plus a 64-input second layer
  const long long cell_d = 4 * (20 * 64 + 64 * 64 + 64);
  const long long cell_l = cell_d + 4 * (64 * 64 + 64 * 64 + 64);
  CHECK(cell_d == 21760 && cell_l == 54784, "hand arithmetic drifted");
  ParamCount pd = count_params(cd, 30);
  ParamCount pl = count_params(cl, 30);
  CHECK(pd.cell == cell_d, "d-lgclstm cell " << pd.cell << " != " << cell_d);
  CHECK(pl.cell == cell_l, "lgclstm cell " << pl.cell << " != " << cell_l);
  CHECK(pd.cell < pl.cell, "double-hop cell is not smaller");

  const long long per_head = 64 * 64 + 64 + 64 * 24 + 24;
  CHECK(pd.head == 2 * 30 * per_head, "head count " << pd.head << " != " << 2 * 30 * per_head);

  cd.bidirectional = true;
  cl.bidirectional = true;
  ParamCount pd2 = count_params(cd, 30);
  ParamCount pl2 = count_params(cl, 30);
  CHECK(pd2.cell == 2 * cell_d && pl2.cell == 2 * cell_l, "bidirectional cells are not doubled");
  CHECK(pd2.cell < pl2.cell, "ordering lost under bidirection");

  Model md = make_model(cd, 6, 1);
  Model ml = make_model(cl, 6, 1);
  CHECK(md.param_count() == count_params(cd, 6).total(), "instantiated d-lgclstm count mismatch");
  CHECK(ml.param_count() == count_params(cl, 6).total(), "instantiated lgclstm count mismatch");
}

void c8_determinism() {
  const std::string dir = g_tmp + "/det";
  fs::create_directories(dir);
  nlohmann::json j;
  j["name"] = "det";
  j["seed"] = 404;
  j["grid"] = {{"buses", 5}, {"lines", 6}};
  j["weather"] = {{"days", 12}};
  j["model"] = {{"hidden", 5}, {"head_hidden", 3}};
  j["train"] = {{"epochs", 2}, {"batch_size", 4}};
  j["io"] = {{"data_dir", dir + "/data"}, {"out_dir", dir + "/out"}};
  const std::string cfg = dir + "/run.json";
  {
    std::ofstream f(cfg);
    f << j.dump(2);
  }
  const std::string log = dir + "/log.txt";

  auto twice = [&](const std::string& what, const std::string& args_a, const std::string& args_b,
                   const std::vector<std::pair<std::string, std::string>>& compare) {
    if (run_cli(args_a, log) != 0) {
      CHECK(false, what << " (first run) failed: " << slurp(log));
      return;
    }
    if (run_cli(args_b, log) != 0) {
      CHECK(false, what << " (second run) failed: " << slurp(log));
      return;
    }
    for (const auto& [a, b] : compare) {
      const std::string ca = slurp(a), cb = slurp(b);
      CHECK(!ca.empty() && ca == cb, what << ": " << a << " and " << b << " differ");
    }
  };

  twice("gen-data", "gen-data --config " + cfg + " --export-adjacency",
        "gen-data --config " + cfg + " --export-adjacency --out-dir " + dir + "/data2",
        {{dir + "/data/topology.json", dir + "/data2/topology.json"},
         {dir + "/data/weather.csv", dir + "/data2/weather.csv"},
         {dir + "/data/ratings.csv", dir + "/data2/ratings.csv"},
         {dir + "/data/line_graph.json", dir + "/data2/line_graph.json"}});

  twice("train", "train --config " + cfg + " --out-dir " + dir + "/o1",
        "train --config " + cfg + " --out-dir " + dir + "/o2",
        {{dir + "/o1/model-d-lgclstm.bin", dir + "/o2/model-d-lgclstm.bin"},
         {dir + "/o1/model-d-lgclstm.json", dir + "/o2/model-d-lgclstm.json"},
         {dir + "/o1/loss-d-lgclstm.csv", dir + "/o2/loss-d-lgclstm.csv"}});

  twice("eval",
        "eval --config " + cfg + " --checkpoint " + dir + "/o1/model-d-lgclstm --out-dir " + dir + "/o1",
        "eval --config " + cfg + " --checkpoint " + dir + "/o2/model-d-lgclstm --out-dir " + dir + "/o2",
        {{dir + "/o1/report-d-lgclstm.json", dir + "/o2/report-d-lgclstm.json"},
         {dir + "/o1/report-d-lgclstm.csv", dir + "/o2/report-d-lgclstm.csv"}});

  // line ids are pinned by the manifest
  nlohmann::json manifest = nlohmann::json::parse(slurp(dir + "/data/manifest.json"));
  const std::string line_id = std::to_string(manifest.at("line_ids")[0].get<int>());
  twice("forecast",
        "forecast --config " + cfg + " --checkpoint " + dir + "/o1/model-d-lgclstm --line " + line_id +
            " --robust --svg " + dir + "/o1/chart.svg --out " + dir + "/o1/fc.csv",
        "forecast --config " + cfg + " --checkpoint " + dir + "/o1/model-d-lgclstm --line " + line_id +
            " --robust --svg " + dir + "/o2/chart.svg --out " + dir + "/o2/fc.csv",
        {{dir + "/o1/fc.csv", dir + "/o2/fc.csv"}, {dir + "/o1/chart.svg", dir + "/o2/chart.svg"}});

  twice("bench", "bench --config " + cfg + " --out-dir " + dir + "/b1",
        "bench --config " + cfg + " --out-dir " + dir + "/b2", {{dir + "/b1/bench.csv", dir + "/b2/bench.csv"}});

  // stdout is the artifact for the remaining two commands
  CHECK(run_cli("gradcheck", dir + "/g1.txt") == 0, "gradcheck (first run) failed");
  CHECK(run_cli("gradcheck", dir + "/g2.txt") == 0, "gradcheck (second run) failed");
  CHECK(!slurp(dir + "/g1.txt").empty() && slurp(dir + "/g1.txt") == slurp(dir + "/g2.txt"),
        "gradcheck output differs between runs");

  CHECK(run_cli("print-config --config " + cfg, dir + "/p1.txt") == 0, "print-config (first run) failed");
  CHECK(run_cli("print-config --config " + cfg, dir + "/p2.txt") == 0, "print-config (second run) failed");
  CHECK(!slurp(dir + "/p1.txt").empty() && slurp(dir + "/p1.txt") == slurp(dir + "/p2.txt"),
        "print-config output differs between runs");
}

}  // namespace

int main() {
  g_tmp = (fs::temp_directory_path() / ("dlr-acceptance-" + std::to_string(::getpid()))).string();
  fs::remove_all(g_tmp);
  fs::create_directories(g_tmp);

  criterion(1, "gradient integrity: autodiff ops and the end-to-end model vs finite differences", 60.0, c1_gradients);
  criterion(2, "graph oracles: line-graph and double-hop adjacency on 200 random grids", 30.0, c2_graph_oracles);
  criterion(3, "reduction identity: identity mixing reproduces the plain LSTM bitwise", 0.0, c3_reduction_identity);
  criterion(4, "quantile correctness: pinball oracle and i.i.d.-noise percentile convergence", 0.0, c4_quantiles);
  criterion(5, "physics sanity: heat-balance reference and 1000 monotonicity probes", 0.0, c5_physics);
  criterion(6, "end-to-end coverage: demo-20bus PICP within 80 +- 10 and QS ordering", 1200.0, c6_end_to_end);
  criterion(7, "parameter accounting: exact counts, double-hop smaller than stacked single-hop", 0.0,
            c7_param_accounting);
  criterion(8, "determinism: byte-identical CLI artifacts across reruns", 0.0, c8_determinism);

  fs::remove_all(g_tmp);
  if (g_failed_criteria) {
    std::printf("acceptance: %d criterion(s) failed\n", g_failed_criteria);
    return 1;
  }
  std::printf("acceptance: all 8 criteria passed\n");
  return 0;
}
