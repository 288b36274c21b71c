#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dlr/artifacts.hpp"
#include "dlr/config.hpp"
#include "dlr/gradcheck.hpp"
#include "dlr/line_graph.hpp"
#include "dlr/metrics.hpp"
#include "dlr/model.hpp"
#include "dlr/svg.hpp"
#include "dlr/train.hpp"

namespace {

/// code 2 = usage/config, 1 = runtime.
struct CliError {
  int code;
  std::string msg;
};

dlr::Grid build_grid(const dlr::RunConfig& cfg) {
  if (!cfg.topology_file.empty()) return dlr::load_topology_file(cfg.topology_file);
  return dlr::synthetic_grid(cfg.buses, cfg.lines, cfg.seed);
}

void require_data_dir(const std::string& dir) {
  for (const char* f : {"/topology.json", "/weather.csv", "/ratings.csv", "/manifest.json"})
    if (!std::filesystem::exists(dir + f))
      throw CliError{2, "missing " + dir + f + " (run gen-data first)"};
}

struct LoadedData {
  dlr::DataDir dir;
  dlr::WindowedDataset ds;
  dlr::LineGraphIndex lg;
};

LoadedData load_dataset(const std::string& data_dir) {
  require_data_dir(data_dir);
  LoadedData d;
  d.dir = dlr::load_data_dir(data_dir);
  d.ds = dlr::make_windowed_dataset(d.dir.grid, d.dir.weather, d.dir.ratings);
  d.lg = dlr::to_line_graph(d.dir.grid);
  return d;
}

dlr::ModelConfig resolve_model_config(const dlr::RunConfig& cfg, const std::string& variant_flag) {
  dlr::ModelConfig mc = cfg.model;
  if (!variant_flag.empty()) mc.variant = dlr::variant_from_name(variant_flag);
  mc.input_dim = dlr::feature_schema().total_dim();
  mc.horizon = dlr::kHorizonHours;
  return mc;
}

void check_checkpoint_compat(const dlr::LoadedCheckpoint& lc, const dlr::WindowedDataset& ds) {
  if (lc.schema_hash != dlr::feature_schema_hash())
    throw CliError{2, "checkpoint feature schema does not match this build"};
  if (lc.line_ids != ds.line_ids) throw CliError{2, "checkpoint was trained on a different line set"};
}

void write_loss_curve(const std::string& path, const dlr::TrainResult& tr) {
  dlr::csv::Writer w(path);
  w.row({"epoch", "train_loss", "val_loss"});
  for (size_t e = 0; e < tr.train_loss.size(); ++e)
    w.row({std::to_string(e), dlr::csv::fmt(tr.train_loss[e]),
           e < tr.val_loss.size() ? dlr::csv::fmt(tr.val_loss[e]) : std::string()});
  w.close();
}

void write_report(const std::string& out_dir, const std::string& variant, const dlr::MetricReport& r,
                  const std::vector<int>& line_ids) {
  std::filesystem::create_directories(out_dir);
  dlr::write_json_file(out_dir + "/report-" + variant + ".json", dlr::metric_report_json(r, line_ids));
  dlr::csv::Writer w(out_dir + "/report-" + variant + ".csv");
  w.row({"variant", "picp_pct", "ace_pct", "pinaw_pct", "interval_score_pct", "qs_pct", "crossing_rate_pct"});
  w.row({variant, dlr::csv::fmt(r.picp), dlr::csv::fmt(r.ace), dlr::csv::fmt(r.pinaw),
         dlr::csv::fmt(r.interval_score), dlr::csv::fmt(r.qs), dlr::csv::fmt(r.crossing_rate)});
  w.close();
}

int cmd_gen_data(const std::string& config, const std::string& out_dir_flag, bool export_adjacency) {
  dlr::RunConfig cfg = dlr::load_run_config(config);
  const std::string out = out_dir_flag.empty() ? cfg.data_dir : out_dir_flag;
  dlr::Grid grid = build_grid(cfg);
  dlr::WeatherField wf = dlr::generate_weather(grid, cfg.days, cfg.seed, cfg.start_date);
  dlr::Mat ratings = dlr::compute_ratings(grid, wf, cfg.conductor);
  dlr::WindowedDataset ds = dlr::make_windowed_dataset(grid, wf, ratings);
  nlohmann::json manifest = dlr::dataset_manifest(ds, cfg.days);
  manifest["config_name"] = cfg.name;
  manifest["seed"] = cfg.seed;
  dlr::write_data_dir(out, grid, wf, ratings, manifest);
  if (export_adjacency) {
    dlr::LineGraphIndex lg = dlr::to_line_graph(grid);
    nlohmann::json adj;
    adj["node_count"] = lg.node_count;
    auto pairs = [](const dlr::Mat& a) {
      nlohmann::json out = nlohmann::json::array();
      for (int i = 0; i < a.rows; ++i)
        for (int j = i + 1; j < a.cols; ++j)
          if (a(i, j) != 0.0) out.push_back({i, j});
      return out;
    };
    adj["adj1_pairs"] = pairs(lg.adj1);
    adj["adj2_pairs"] = pairs(lg.adj2);
    dlr::write_json_file(out + "/line_graph.json", adj);
  }
  std::cout << "gen-data: wrote " << out << " (" << grid.buses.size() << " buses, " << grid.lines.size()
            << " lines, " << wf.hours << " h, " << ds.train_starts.size() << " train / " << ds.test_starts.size()
            << " test windows)\n";
  return 0;
}

int cmd_train(const std::string& config, const std::string& variant_flag, const std::string& checkpoint_flag,
              const std::string& data_dir_flag, const std::string& out_dir_flag) {
  dlr::RunConfig cfg = dlr::load_run_config(config);
  const std::string data_dir = data_dir_flag.empty() ? cfg.data_dir : data_dir_flag;
  const std::string out_dir = out_dir_flag.empty() ? cfg.out_dir : out_dir_flag;
  LoadedData d = load_dataset(data_dir);
  dlr::ModelConfig mc = resolve_model_config(cfg, variant_flag);
  dlr::Model model = dlr::make_model(mc, d.ds.n_lines, cfg.seed);
  dlr::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  dlr::TrainResult tr = dlr::train(model, d.ds, d.lg, tc);
  std::filesystem::create_directories(out_dir);
  const std::string variant = dlr::variant_name(mc.variant);
  const std::string prefix = checkpoint_flag.empty() ? out_dir + "/model-" + variant : checkpoint_flag;
  dlr::save_checkpoint(model, prefix, d.ds.line_ids, dlr::feature_schema_hash());
  write_loss_curve(out_dir + "/loss-" + variant + ".csv", tr);
  std::cout << "train: " << variant << ", " << tr.train_loss.size() << " epochs, final train loss "
            << dlr::csv::fmt(tr.train_loss.back());
  if (tr.best_epoch >= 0)
    std::cout << ", best val loss " << dlr::csv::fmt(tr.best_val) << " at epoch " << tr.best_epoch;
  std::cout << "\ncheckpoint: " << prefix << ".bin / .json\n";
  return 0;
}

int cmd_eval(const std::string& config, const std::string& checkpoint, const std::string& data_dir_flag,
             const std::string& out_dir_flag) {
  dlr::RunConfig cfg = dlr::load_run_config(config);
  const std::string data_dir = data_dir_flag.empty() ? cfg.data_dir : data_dir_flag;
  const std::string out_dir = out_dir_flag.empty() ? cfg.out_dir : out_dir_flag;
  if (!std::filesystem::exists(checkpoint + ".json"))
    throw CliError{2, "checkpoint " + checkpoint + ".json not found"};
  LoadedData d = load_dataset(data_dir);
  dlr::LoadedCheckpoint lc = dlr::load_checkpoint(checkpoint);
  check_checkpoint_compat(lc, d.ds);
  dlr::EvalSet es = dlr::collect_forecasts(lc.model, d.ds, d.lg, cfg.eval_chunk);
  dlr::MetricReport r = dlr::evaluate(es, lc.model.cfg.q_low, lc.model.cfg.q_high);
  const std::string variant = dlr::variant_name(lc.model.cfg.variant);
  write_report(out_dir, variant, r, d.ds.line_ids);
  std::printf("eval: %s on %lld samples\n", variant.c_str(), r.n_samples);
  std::printf("  PICP %.2f%% (PINC %.0f%%)  ACE %.2f  PINAW %.2f%%  IS %.2f%%  QS %.2f%%  crossings %.2f%%\n", r.picp,
              r.pinc, r.ace, r.pinaw, r.interval_score, r.qs, r.crossing_rate);
  return 0;
}

int cmd_bench(const std::string& config, const std::string& data_dir_flag, const std::string& out_dir_flag) {
  dlr::RunConfig cfg = dlr::load_run_config(config);
  const std::string data_dir = data_dir_flag.empty() ? cfg.data_dir : data_dir_flag;
  const std::string out_dir = out_dir_flag.empty() ? cfg.out_dir : out_dir_flag;
  LoadedData d = load_dataset(data_dir);
  dlr::ModelConfig mc = resolve_model_config(cfg, "");
  dlr::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const std::vector<dlr::Variant> variants{dlr::Variant::lstm, dlr::Variant::lgclstm, dlr::Variant::dlgclstm};
  std::vector<dlr::BenchmarkRow> rows = dlr::benchmark(variants, d.ds, d.lg, mc, tc);
  std::filesystem::create_directories(out_dir);
  dlr::csv::Writer w(out_dir + "/bench.csv");
  w.row({"variant", "ace_pct", "pinaw_pct", "interval_score_pct", "qs_pct", "params"});
  for (const auto& row : rows)
    w.row({row.variant, dlr::csv::fmt(row.report.ace), dlr::csv::fmt(row.report.pinaw),
           dlr::csv::fmt(row.report.interval_score), dlr::csv::fmt(row.report.qs), std::to_string(row.params)});
  w.close();
  std::printf("%-12s %8s %8s %8s %8s %10s\n", "variant", "ACE", "PINAW", "IS", "QS", "params");
  for (const auto& row : rows)
    std::printf("%-12s %8.2f %8.2f %8.2f %8.2f %10lld\n", row.variant.c_str(), row.report.ace, row.report.pinaw,
                row.report.interval_score, row.report.qs, row.params);
  std::cout << "bench: wrote " << out_dir << "/bench.csv\n";
  return 0;
}

int cmd_forecast(const std::string& config, const std::string& checkpoint, int line_id, bool robust,
                 const std::string& svg_path, int window_index, const std::string& out_file,
                 const std::string& data_dir_flag, const std::string& out_dir_flag) {
  dlr::RunConfig cfg = dlr::load_run_config(config);
  const std::string data_dir = data_dir_flag.empty() ? cfg.data_dir : data_dir_flag;
  const std::string out_dir = out_dir_flag.empty() ? cfg.out_dir : out_dir_flag;
  if (!std::filesystem::exists(checkpoint + ".json"))
    throw CliError{2, "checkpoint " + checkpoint + ".json not found"};
  LoadedData d = load_dataset(data_dir);
  dlr::LoadedCheckpoint lc = dlr::load_checkpoint(checkpoint);
  check_checkpoint_compat(lc, d.ds);

  int line_index = -1;
  for (size_t i = 0; i < d.ds.line_ids.size(); ++i)
    if (d.ds.line_ids[i] == line_id) line_index = static_cast<int>(i);
  if (line_index < 0) throw CliError{2, "unknown line id " + std::to_string(line_id)};
  if (window_index < 0 || window_index >= static_cast<int>(d.ds.test_starts.size()))
    throw CliError{2, "window index out of range (have " + std::to_string(d.ds.test_starts.size()) +
                          " test windows)"};

  const int start = d.ds.test_starts[window_index];
  std::vector<dlr::Mat> xs(dlr::kHistoryHours);
  std::vector<int> starts{start};
  for (int t = 0; t < dlr::kHistoryHours; ++t) xs[t] = dlr::batch_timestep(d.ds, starts, t);
  std::shared_ptr<const dlr::Mat> op = dlr::variant_operator(lc.model.cfg.variant, d.lg);
  dlr::ForecastBundle fb = dlr::forecast_batch(lc.model, xs, 1, op).front();
  dlr::Mat low = dlr::denormalize_target(d.ds.stats, fb.low);
  dlr::Mat high = dlr::denormalize_target(d.ds.stats, fb.high);
  dlr::Mat truth = d.ds.target_raw(start);

  std::filesystem::create_directories(out_dir);
  const std::string path = out_file.empty() ? out_dir + "/forecast-line" + std::to_string(line_id) + ".csv" : out_file;
  dlr::csv::Writer w(path);
  std::vector<std::string> header{"hour", "y_true", "y_low", "y_high"};
  if (robust) header.push_back("robust");
  w.row(header);
  std::vector<double> yt(dlr::kHorizonHours), yl(dlr::kHorizonHours), yh(dlr::kHorizonHours);
  for (int t = 0; t < dlr::kHorizonHours; ++t) {
    yt[t] = truth(line_index, t);
    yl[t] = low(line_index, t);
    yh[t] = high(line_index, t);
    std::vector<std::string> fields{std::to_string(t), dlr::csv::fmt(yt[t]), dlr::csv::fmt(yl[t]),
                                    dlr::csv::fmt(yh[t])};
    if (robust) fields.push_back(dlr::csv::fmt(yl[t]));
    w.row(fields);
  }
  w.close();
  if (!svg_path.empty()) {
    const std::string title = "line " + std::to_string(line_id) + " forecast, day starting hour " +
                              std::to_string(start + dlr::kHistoryHours);
    std::ofstream f(svg_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + svg_path);
    f << dlr::svg::interval_chart(yt, yl, yh, title);
  }
  std::cout << "forecast: line " << line_id << ", window " << window_index << " -> " << path;
  if (!svg_path.empty()) std::cout << " and " << svg_path;
  std::cout << "\n";
  return 0;
}

int cmd_gradcheck(unsigned long long seed, const std::string& inject_fault) {
  std::vector<dlr::GradCase> cases = dlr::standard_grad_cases(seed);
  cases.push_back(dlr::model_grad_case(seed + 100));
  dlr::ad::Op fault = dlr::ad::Op::none;
  if (!inject_fault.empty()) fault = dlr::ad::op_from_name(inject_fault);
  std::vector<dlr::GradCheckResult> results = dlr::run_grad_cases(cases, 1e-5, 1e-4, fault);
  int failed = 0;
  for (const auto& r : results) {
    std::printf("%-22s max_rel_err %.3e  %s\n", r.name.c_str(), r.max_rel_err, r.ok ? "pass" : "FAIL");
    if (!r.ok) ++failed;
  }
  if (failed) {
    std::string names;
    for (const auto& r : results)
      if (!r.ok) names += (names.empty() ? "" : ", ") + r.name;
    std::printf("gradcheck: %d/%zu failed (%s)\n", failed, results.size(), names.c_str());
    return 1;
  }
  std::printf("gradcheck: %zu/%zu passed\n", results.size(), results.size());
  return 0;
}

int cmd_print_config(const std::string& config) {
  dlr::RunConfig cfg = dlr::load_run_config(config);
  std::cout << dlr::run_config_json(cfg).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dlrnet: probabilistic dynamic line rating forecasting over the grid line graph"};
  app.require_subcommand(1);
  std::function<int()> action;

  std::string config, variant, checkpoint, data_dir, out_dir, svg_path, inject_fault, out_file;
  bool export_adjacency = false, robust = false;
  int line_id = 0, window_index = 0;
  unsigned long long seed = 20240301ULL;

  auto* gen = app.add_subcommand("gen-data", "Generate topology, weather, ratings and the dataset manifest");
  gen->add_option("--config", config, "Builtin config name or JSON path")->required();
  gen->add_option("--out-dir", out_dir, "Output directory (default: config io.data_dir)");
  gen->add_flag("--export-adjacency", export_adjacency, "Also write line-graph adjacency pairs");
  gen->callback([&] { action = [&] { return cmd_gen_data(config, out_dir, export_adjacency); }; });

  auto* tr = app.add_subcommand("train", "Train one variant and write a checkpoint plus the loss curve");
  tr->add_option("--config", config, "Builtin config name or JSON path")->required();
  tr->add_option("--variant", variant, "lstm | lgclstm | d-lgclstm (default: config model.variant)");
  tr->add_option("--checkpoint", checkpoint, "Checkpoint path prefix (default: <out-dir>/model-<variant>)");
  tr->add_option("--data-dir", data_dir, "Dataset directory (default: config io.data_dir)");
  tr->add_option("--out-dir", out_dir, "Output directory (default: config io.out_dir)");
  tr->callback([&] { action = [&] { return cmd_train(config, variant, checkpoint, data_dir, out_dir); }; });

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test windows");
  ev->add_option("--config", config, "Builtin config name or JSON path")->required();
  ev->add_option("--checkpoint", checkpoint, "Checkpoint path prefix")->required();
  ev->add_option("--data-dir", data_dir, "Dataset directory (default: config io.data_dir)");
  ev->add_option("--out-dir", out_dir, "Output directory (default: config io.out_dir)");
  ev->callback([&] { action = [&] { return cmd_eval(config, checkpoint, data_dir, out_dir); }; });

  auto* be = app.add_subcommand("bench", "Train and evaluate all three variants, emit the comparison table");
  be->add_option("--config", config, "Builtin config name or JSON path")->required();
  be->add_option("--data-dir", data_dir, "Dataset directory (default: config io.data_dir)");
  be->add_option("--out-dir", out_dir, "Output directory (default: config io.out_dir)");
  be->callback([&] { action = [&] { return cmd_bench(config, data_dir, out_dir); }; });

  auto* fc = app.add_subcommand("forecast", "Emit one line's 24 h interval forecast as CSV (optionally SVG)");
  fc->add_option("--config", config, "Builtin config name or JSON path")->required();
  fc->add_option("--checkpoint", checkpoint, "Checkpoint path prefix")->required();
  fc->add_option("--line", line_id, "Line id")->required();
  fc->add_flag("--robust", robust, "Add a robust column equal to the lower bound");
  fc->add_option("--svg", svg_path, "Also write an interval band chart to this path");
  fc->add_option("--window", window_index, "Test window index (default 0)");
  fc->add_option("--out", out_file, "CSV output path (default: <out-dir>/forecast-line<ID>.csv)");
  fc->add_option("--data-dir", data_dir, "Dataset directory (default: config io.data_dir)");
  fc->add_option("--out-dir", out_dir, "Output directory (default: config io.out_dir)");
  fc->callback([&] {
    action = [&] {
      return cmd_forecast(config, checkpoint, line_id, robust, svg_path, window_index, out_file, data_dir, out_dir);
    };
  });

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every autodiff op and the full model");
  gc->add_option("--seed", seed, "Case RNG seed");
  gc->add_option("--inject-fault", inject_fault, "Corrupt the named op's backward rule (expected to fail)");
  gc->callback([&] { action = [&] { return cmd_gradcheck(seed, inject_fault); }; });

  auto* pc = app.add_subcommand("print-config", "Print the fully resolved run configuration");
  pc->add_option("--config", config, "Builtin config name or JSON path")->required();
  pc->callback([&] { action = [&] { return cmd_print_config(config); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    return action();
  } catch (const CliError& e) {
    std::cerr << "error: " << e.msg << "\n";
    return e.code;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
