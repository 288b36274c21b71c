#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlr/calendar.hpp"
#include "dlr/model.hpp"
#include "dlr/thermal.hpp"
#include "dlr/train.hpp"

namespace dlr {

/// One reproducible run: everything a command needs, schema-validated.
struct RunConfig {
  std::string name = "custom";
  std::uint64_t seed = 1;
  int buses = 20;
  int lines = 30;
  std::string topology_file;  // when set, loaded instead of synthesizing
  int days = 60;
  Date start_date{2024, 1, 1};
  ConductorParams conductor;
  ModelConfig model;
  TrainConfig train;
  int eval_chunk = 16;
  std::string data_dir = "data";
  std::string out_dir = "out";
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, std::vector<std::string> allowed) {
  if (!j.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw std::invalid_argument("config: unknown key '" + where + "." + it.key() + "'");
  }
}

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  detail::check_keys(j, "(root)", {"name", "seed", "grid", "weather", "thermal", "model", "train", "eval", "io"});
  RunConfig c;
  detail::read_if(j, "name", c.name);
  detail::read_if(j, "seed", c.seed);
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    detail::check_keys(g, "grid", {"buses", "lines", "topology_file"});
    detail::read_if(g, "buses", c.buses);
    detail::read_if(g, "lines", c.lines);
    detail::read_if(g, "topology_file", c.topology_file);
    if (c.buses < 2 || c.lines < 1) throw std::invalid_argument("config: grid needs >= 2 buses and >= 1 line");
  }
  if (j.contains("weather")) {
    const auto& w = j.at("weather");
    detail::check_keys(w, "weather", {"days", "start_date"});
    detail::read_if(w, "days", c.days);
    if (w.contains("start_date")) c.start_date = parse_date(w.at("start_date").get<std::string>());
    if (c.days < 1) throw std::invalid_argument("config: weather.days must be positive");
  }
  if (j.contains("thermal")) {
    const auto& t = j.at("thermal");
    detail::check_keys(t, "thermal",
                       {"diameter_m", "resistance_ohm_per_m", "emissivity", "absorptivity", "max_conductor_temp_c"});
    detail::read_if(t, "diameter_m", c.conductor.diameter_m);
    detail::read_if(t, "resistance_ohm_per_m", c.conductor.resistance_ohm_per_m);
    detail::read_if(t, "emissivity", c.conductor.emissivity);
    detail::read_if(t, "absorptivity", c.conductor.absorptivity);
    detail::read_if(t, "max_conductor_temp_c", c.conductor.max_conductor_temp_c);
    c.conductor.validate();
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::check_keys(m, "model",
                       {"variant", "hidden", "head_hidden", "q_low", "q_high", "bidirectional", "shared_head",
                        "cell_state_act"});
    if (m.contains("variant")) c.model.variant = variant_from_name(m.at("variant").get<std::string>());
    detail::read_if(m, "hidden", c.model.hidden);
    detail::read_if(m, "head_hidden", c.model.head_hidden);
    detail::read_if(m, "q_low", c.model.q_low);
    detail::read_if(m, "q_high", c.model.q_high);
    detail::read_if(m, "bidirectional", c.model.bidirectional);
    detail::read_if(m, "shared_head", c.model.shared_head);
    if (m.contains("cell_state_act")) c.model.cell_state_act = act_from_name(m.at("cell_state_act").get<std::string>());
    c.model.validate();
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::check_keys(t, "train", {"epochs", "lr", "weight_decay", "batch_size", "clip_norm"});
    detail::read_if(t, "epochs", c.train.epochs);
    detail::read_if(t, "lr", c.train.lr);
    detail::read_if(t, "weight_decay", c.train.weight_decay);
    detail::read_if(t, "batch_size", c.train.batch_size);
    detail::read_if(t, "clip_norm", c.train.clip_norm);
    c.train.validate();
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::check_keys(e, "eval", {"chunk"});
    detail::read_if(e, "chunk", c.eval_chunk);
    if (c.eval_chunk < 1) throw std::invalid_argument("config: eval.chunk must be positive");
  }
  if (j.contains("io")) {
    const auto& io = j.at("io");
    detail::check_keys(io, "io", {"data_dir", "out_dir"});
    detail::read_if(io, "data_dir", c.data_dir);
    detail::read_if(io, "out_dir", c.out_dir);
  }
  c.train.seed = c.seed;
  return c;
}

inline nlohmann::json run_config_json(const RunConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["grid"] = {{"buses", c.buses}, {"lines", c.lines}};
  if (!c.topology_file.empty()) j["grid"]["topology_file"] = c.topology_file;
  char date[16];
  std::snprintf(date, sizeof date, "%04d-%02d-%02d", c.start_date.year, c.start_date.month, c.start_date.day);
  j["weather"] = {{"days", c.days}, {"start_date", date}};
  j["thermal"] = {{"diameter_m", c.conductor.diameter_m},
                  {"resistance_ohm_per_m", c.conductor.resistance_ohm_per_m},
                  {"emissivity", c.conductor.emissivity},
                  {"absorptivity", c.conductor.absorptivity},
                  {"max_conductor_temp_c", c.conductor.max_conductor_temp_c}};
  nlohmann::json m = model_config_json(c.model);
  m.erase("input_dim");
  m.erase("horizon");
  j["model"] = std::move(m);
  j["train"] = {{"epochs", c.train.epochs},
                {"lr", c.train.lr},
                {"weight_decay", c.train.weight_decay},
                {"batch_size", c.train.batch_size},
                {"clip_norm", c.train.clip_norm}};
  j["eval"] = {{"chunk", c.eval_chunk}};
  j["io"] = {{"data_dir", c.data_dir}, {"out_dir", c.out_dir}};
  return j;
}

inline std::vector<std::string> builtin_config_names() { return {"demo-20bus", "demo-123bus"}; }

/// Two pinned demos: a laptop-scale run and the full 123-bus scale.
inline RunConfig builtin_config(const std::string& name) {
  RunConfig c;
  c.name = name;
  if (name == "demo-20bus") {
    c.seed = 20240;
    c.buses = 20;
    c.lines = 30;
    c.days = 60;
    c.model.hidden = 32;
    c.model.head_hidden = 32;
    c.train.epochs = 120;
    c.train.batch_size = 16;
    c.data_dir = "data/demo-20bus";
    c.out_dir = "out/demo-20bus";
  } else if (name == "demo-123bus") {
    c.seed = 123123;
    c.buses = 123;
    c.lines = 173;
    c.days = 90;
    c.model.hidden = 64;
    c.model.head_hidden = 64;
    c.train.epochs = 50;
    c.train.batch_size = 4;
    c.data_dir = "data/demo-123bus";
    c.out_dir = "out/demo-123bus";
  } else {
    throw std::invalid_argument("unknown builtin config '" + name + "' (have demo-20bus, demo-123bus)");
  }
  c.train.seed = c.seed;
  return c;
}

/// Accepts a builtin name or a path to a JSON file.
inline RunConfig load_run_config(const std::string& name_or_path) {
  for (const std::string& b : builtin_config_names())
    if (name_or_path == b) return builtin_config(b);
  std::ifstream f(name_or_path);
  if (!f) throw std::invalid_argument("config '" + name_or_path + "' is neither a builtin name nor a readable file");
  nlohmann::json j = nlohmann::json::parse(f);
  return parse_run_config(j);
}

}  // namespace dlr
