#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dlr/autodiff.hpp"
#include "dlr/gradcheck.hpp"
#include "dlr/line_graph.hpp"
#include "dlr/mat.hpp"

namespace dlr {

enum class Variant { lstm, lgclstm, dlgclstm };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::lstm: return "lstm";
    case Variant::lgclstm: return "lgclstm";
    default: return "d-lgclstm";
  }
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "lstm") return Variant::lstm;
  if (s == "lgclstm") return Variant::lgclstm;
  if (s == "d-lgclstm" || s == "dlgclstm") return Variant::dlgclstm;
  throw std::invalid_argument("unknown variant '" + s + "' (expected lstm | lgclstm | d-lgclstm)");
}

struct ModelConfig {
  Variant variant = Variant::dlgclstm;
  int input_dim = 20;
  int hidden = 64;
  int head_hidden = 64;
  int horizon = 24;
  double q_low = 0.1;
  double q_high = 0.9;
  bool bidirectional = true;
  bool shared_head = false;
  ad::Act cell_state_act = ad::Act::sigmoid;

  int layers() const { return variant == Variant::lgclstm ? 2 : 1; }
  int directions() const { return bidirectional ? 2 : 1; }

  void validate() const {
    if (input_dim <= 0 || hidden <= 0 || head_hidden <= 0 || horizon <= 0)
      throw std::invalid_argument("model config: dimensions must be positive");
    if (!(0.0 < q_low && q_low < q_high && q_high < 1.0))
      throw std::invalid_argument("model config: need 0 < q_low < q_high < 1");
  }
};

/// One recurrent layer, one direction. Gate order: f, i, o, g.
struct CellParams {
  std::array<Mat, 4> w;  // input_dim x hidden
  std::array<Mat, 4> u;  // hidden x hidden
  std::array<Mat, 4> b;  // 1 x hidden
};

struct HeadParams {
  Mat w1, b1;  // (dirs*hidden) x head_hidden, 1 x head_hidden
  Mat w2, b2;  // head_hidden x horizon, 1 x horizon
};

struct Model {
  ModelConfig cfg;
  int n_lines = 0;
  std::vector<std::vector<CellParams>> cells;  // [direction][layer]
  std::vector<HeadParams> heads_low, heads_high;

  int head_count() const { return cfg.shared_head ? 1 : n_lines; }
  const HeadParams& head_low(int line) const { return heads_low[cfg.shared_head ? 0 : line]; }
  const HeadParams& head_high(int line) const { return heads_high[cfg.shared_head ? 0 : line]; }

  /// Canonical parameter order; checkpoints, staging and the optimizer all
  /// walk parameters through this.
  template <class F>
  void visit_params(F&& f) {
    static const char* gate[4] = {"f", "i", "o", "g"};
    for (size_t d = 0; d < cells.size(); ++d)
      for (size_t l = 0; l < cells[d].size(); ++l) {
        CellParams& cp = cells[d][l];
        const std::string p = "dir" + std::to_string(d) + ".layer" + std::to_string(l) + ".";
        for (int k = 0; k < 4; ++k) f(p + "w_" + gate[k], cp.w[k]);
        for (int k = 0; k < 4; ++k) f(p + "u_" + gate[k], cp.u[k]);
        for (int k = 0; k < 4; ++k) f(p + "b_" + gate[k], cp.b[k]);
      }
    auto visit_heads = [&](std::vector<HeadParams>& hs, const char* side) {
      for (size_t i = 0; i < hs.size(); ++i) {
        const std::string p = "head_" + std::string(side) + std::to_string(i) + ".";
        f(p + "w1", hs[i].w1);
        f(p + "b1", hs[i].b1);
        f(p + "w2", hs[i].w2);
        f(p + "b2", hs[i].b2);
      }
    };
    visit_heads(heads_low, "low");
    visit_heads(heads_high, "high");
  }

  long long param_count() {
    long long n = 0;
    visit_params([&n](const std::string&, Mat& m) { n += m.size(); });
    return n;
  }
};

struct ParamCount {
  long long cell = 0;
  long long head = 0;
  long long total() const { return cell + head; }
};

/// Exact learnable-scalar count from the shape definitions alone.
inline ParamCount count_params(const ModelConfig& cfg, int n_lines) {
  cfg.validate();
  ParamCount pc;
  const long long h = cfg.hidden;
  for (int l = 0; l < cfg.layers(); ++l) {
    const long long in = l == 0 ? cfg.input_dim : h;
    pc.cell += 4 * (in * h + h * h + h);
  }
  pc.cell *= cfg.directions();
  const long long head_in = static_cast<long long>(cfg.directions()) * h;
  const long long per_head =
      head_in * cfg.head_hidden + cfg.head_hidden + static_cast<long long>(cfg.head_hidden) * cfg.horizon + cfg.horizon;
  pc.head = 2 * (cfg.shared_head ? 1 : n_lines) * per_head;
  return pc;
}

namespace detail {

inline Mat init_uniform(int rows, int cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (double& x : m.v) x = dist(rng);
  return m;
}

}  // namespace detail

/// Weights uniform in +-1/sqrt(fan_in), biases zero, forget-gate bias +1.
inline Model make_model(ModelConfig cfg, int n_lines, std::uint64_t seed) {
  cfg.validate();
  if (n_lines <= 0) throw std::invalid_argument("make_model: need at least one line");
  std::mt19937_64 rng(seed);
  Model m;
  m.cfg = cfg;
  m.n_lines = n_lines;
  m.cells.resize(cfg.directions());
  for (auto& dir : m.cells) {
    dir.resize(cfg.layers());
    for (int l = 0; l < cfg.layers(); ++l) {
      const int in = l == 0 ? cfg.input_dim : cfg.hidden;
      CellParams& cp = dir[l];
      for (int k = 0; k < 4; ++k) cp.w[k] = detail::init_uniform(in, cfg.hidden, rng);
      for (int k = 0; k < 4; ++k) cp.u[k] = detail::init_uniform(cfg.hidden, cfg.hidden, rng);
      for (int k = 0; k < 4; ++k) cp.b[k] = Mat(1, cfg.hidden);
      cp.b[0].fill(1.0);
    }
  }
  const int head_in = cfg.directions() * cfg.hidden;
  auto make_heads = [&](std::vector<HeadParams>& hs) {
    hs.resize(cfg.shared_head ? 1 : n_lines);
    for (HeadParams& hp : hs) {
      hp.w1 = detail::init_uniform(head_in, cfg.head_hidden, rng);
      hp.b1 = Mat(1, cfg.head_hidden);
      hp.w2 = detail::init_uniform(cfg.head_hidden, cfg.horizon, rng);
      hp.b2 = Mat(1, cfg.horizon);
    }
  };
  make_heads(m.heads_low);
  make_heads(m.heads_high);
  return m;
}

/// Graph operator a variant mixes its input with; null means identity (skip).
inline std::shared_ptr<const Mat> variant_operator(Variant v, const LineGraphIndex& lg) {
  switch (v) {
    case Variant::lstm: return nullptr;
    case Variant::lgclstm: return std::make_shared<const Mat>(single_hop_operator(lg));
    default: return std::make_shared<const Mat>(lg.a_tilde);
  }
}

/// Single plain-matrix cell step (no tape); the reference semantics of the
/// recurrent update. a_tilde == nullptr skips input mixing.
inline std::pair<Mat, Mat> cell_step(const CellParams& p, const Mat* a_tilde, const Mat& x, const Mat& h, const Mat& c,
                                     ad::Act cell_act = ad::Act::sigmoid) {
  Mat xm = a_tilde ? matmul(*a_tilde, x) : x;
  std::array<Mat, 4> pre;
  for (int k = 0; k < 4; ++k) {
    pre[k] = matmul(xm, p.w[k]);
    Mat hu = matmul(h, p.u[k]);
    add_inplace(pre[k], hu);
    for (int i = 0; i < pre[k].rows; ++i) {
      double* r = pre[k].row(i);
      for (int j = 0; j < pre[k].cols; ++j) r[j] += p.b[k].v[j];
    }
  }
  Mat f = std::move(pre[0]), ig = std::move(pre[1]), o = std::move(pre[2]), g = std::move(pre[3]);
  for (double& v : f.v) v = ad::act_forward(ad::Act::sigmoid, v);
  for (double& v : ig.v) v = ad::act_forward(ad::Act::sigmoid, v);
  for (double& v : o.v) v = ad::act_forward(ad::Act::sigmoid, v);
  for (double& v : g.v) v = std::tanh(v);
  Mat c_t(c.rows, c.cols);
  for (size_t i = 0; i < c_t.v.size(); ++i) c_t.v[i] = f.v[i] * c.v[i] + ig.v[i] * g.v[i];
  Mat h_t(c.rows, c.cols);
  for (size_t i = 0; i < h_t.v.size(); ++i) h_t.v[i] = o.v[i] * ad::act_forward(cell_act, c_t.v[i]);
  return {std::move(h_t), std::move(c_t)};
}

/// Tape-side handles of every parameter, in visit_params order.
struct StagedModel {
  std::vector<std::vector<std::array<ad::Tensor, 12>>> cells;  // w f,i,o,g | u f,i,o,g | b f,i,o,g
  std::vector<std::array<ad::Tensor, 4>> heads_low, heads_high;
  std::vector<ad::Tensor> flat;
};

inline StagedModel stage_model(ad::Tape& tape, Model& m) {
  StagedModel s;
  s.cells.resize(m.cells.size());
  for (size_t d = 0; d < m.cells.size(); ++d) {
    s.cells[d].resize(m.cells[d].size());
    for (size_t l = 0; l < m.cells[d].size(); ++l) {
      for (int k = 0; k < 4; ++k) s.cells[d][l][k] = tape.leaf(m.cells[d][l].w[k]);
      for (int k = 0; k < 4; ++k) s.cells[d][l][4 + k] = tape.leaf(m.cells[d][l].u[k]);
      for (int k = 0; k < 4; ++k) s.cells[d][l][8 + k] = tape.leaf(m.cells[d][l].b[k]);
      for (int k = 0; k < 12; ++k) s.flat.push_back(s.cells[d][l][k]);
    }
  }
  auto stage_heads = [&](std::vector<HeadParams>& hs, std::vector<std::array<ad::Tensor, 4>>& out) {
    out.resize(hs.size());
    for (size_t i = 0; i < hs.size(); ++i) {
      out[i] = {tape.leaf(hs[i].w1), tape.leaf(hs[i].b1), tape.leaf(hs[i].w2), tape.leaf(hs[i].b2)};
      for (ad::Tensor t : out[i]) s.flat.push_back(t);
    }
  };
  stage_heads(m.heads_low, s.heads_low);
  stage_heads(m.heads_high, s.heads_high);
  return s;
}

struct ForwardResult {
  ad::Tensor hidden;                  // (batch*n_lines) x (dirs*hidden)
  std::vector<ad::Tensor> low, high;  // per line, batch x horizon
};

namespace detail {

/// Unrolls one direction over the full sequence and returns the final hidden
/// state. `order` lists timestep indices in processing order.
inline ad::Tensor run_direction(ad::Tape& tape, const Model& m, const StagedModel& s, int dir,
                                const std::vector<ad::Tensor>& x_seq, const std::vector<int>& order, int batch,
                                const std::shared_ptr<const Mat>& mix_op) {
  const int rows = batch * m.n_lines;
  std::vector<ad::Tensor> input(order.size());
  for (size_t i = 0; i < order.size(); ++i) input[i] = x_seq[order[i]];
  ad::Tensor h{-1};
  for (int layer = 0; layer < m.cfg.layers(); ++layer) {
    const auto& cp = s.cells[dir][layer];
    Mat zeros(rows, m.cfg.hidden);
    h = tape.constant(zeros);
    ad::Tensor c = tape.constant(std::move(zeros));
    std::vector<ad::Tensor> out(input.size());
    for (size_t i = 0; i < input.size(); ++i) {
      ad::Tensor xm = mix_op ? tape.graph_mix(mix_op, input[i], batch) : input[i];
      ad::Tensor f = tape.lstm_gate(ad::Act::sigmoid, xm, cp[0], h, cp[4], cp[8]);
      ad::Tensor ig = tape.lstm_gate(ad::Act::sigmoid, xm, cp[1], h, cp[5], cp[9]);
      ad::Tensor o = tape.lstm_gate(ad::Act::sigmoid, xm, cp[2], h, cp[6], cp[10]);
      ad::Tensor g = tape.lstm_gate(ad::Act::tanh, xm, cp[3], h, cp[7], cp[11]);
      c = tape.cell_update(f, ig, g, c);
      h = tape.hidden_blend(o, c, m.cfg.cell_state_act);
      out[i] = h;
    }
    input = std::move(out);
  }
  return h;
}

}  // namespace detail

/// Batched forward pass. x_seq holds one (batch*n_lines) x input_dim tensor
/// per history hour; window blocks are stacked row-wise. The backward
/// direction reads the sequence reversed with its own parameters; final
/// hidden states concatenate backward first.
inline ForwardResult model_forward(ad::Tape& tape, const Model& m, const StagedModel& s,
                                   const std::vector<ad::Tensor>& x_seq, int batch,
                                   const std::shared_ptr<const Mat>& mix_op) {
  if (x_seq.empty()) throw std::invalid_argument("model_forward: empty history");
  const int t_len = static_cast<int>(x_seq.size());
  std::vector<int> fwd(t_len), bwd(t_len);
  for (int t = 0; t < t_len; ++t) {
    fwd[t] = t;
    bwd[t] = t_len - 1 - t;
  }
  ad::Tensor h_fwd = detail::run_direction(tape, m, s, 0, x_seq, fwd, batch, mix_op);
  ForwardResult res;
  if (m.cfg.bidirectional) {
    ad::Tensor h_bwd = detail::run_direction(tape, m, s, 1, x_seq, bwd, batch, mix_op);
    res.hidden = tape.concat_cols(h_bwd, h_fwd);
  } else {
    res.hidden = h_fwd;
  }
  res.low.resize(m.n_lines);
  res.high.resize(m.n_lines);
  auto apply_head = [&tape](const std::array<ad::Tensor, 4>& hp, ad::Tensor x) {
    ad::Tensor z = tape.tanh(tape.add_bias(tape.matmul(x, hp[0]), hp[1]));
    return tape.add_bias(tape.matmul(z, hp[2]), hp[3]);
  };
  for (int i = 0; i < m.n_lines; ++i) {
    std::vector<int> rows(batch);
    for (int b = 0; b < batch; ++b) rows[b] = b * m.n_lines + i;
    ad::Tensor hi = tape.gather_rows(res.hidden, std::move(rows));
    const int hidx = m.cfg.shared_head ? 0 : i;
    res.low[i] = apply_head(s.heads_low[hidx], hi);
    res.high[i] = apply_head(s.heads_high[hidx], hi);
  }
  return res;
}

/// Lower/upper quantile forecasts in normalized units, n_lines x horizon.
struct ForecastBundle {
  Mat low, high;
};

namespace detail {

/// Applies the fixed operator to every block of `x` (blocks stacked row-wise).
inline Mat mix_blocks(const Mat& op, const Mat& x, int blocks) {
  const int e = op.rows;
  if (x.rows != e * blocks) throw std::invalid_argument("mix_blocks: row count not a multiple of operator size");
  Mat out(x.rows, x.cols);
  for (int b = 0; b < blocks; ++b) {
    const int off = b * e;
    for (int i = 0; i < e; ++i) {
      double* dst = out.row(off + i);
      for (int k = 0; k < e; ++k) {
        const double a = op(i, k);
        if (a == 0.0) continue;
        const double* src = x.row(off + k);
        for (int j = 0; j < x.cols; ++j) dst[j] += a * src[j];
      }
    }
  }
  return out;
}

}  // namespace detail

/// Forward-only inference for a batch of windows; x_seq as in model_forward
/// but as plain matrices. Keeps only the running recurrent state in memory
/// (plus the previous layer's sequence for stacked variants).
inline std::vector<ForecastBundle> forecast_batch(const Model& m, const std::vector<Mat>& x_seq, int batch,
                                                  const std::shared_ptr<const Mat>& mix_op) {
  if (x_seq.empty()) throw std::invalid_argument("forecast_batch: empty history");
  const int t_len = static_cast<int>(x_seq.size());
  const int rows = batch * m.n_lines;

  auto run_dir = [&](int dir, bool reversed) {
    std::vector<Mat> prev_seq;
    Mat h_final;
    for (int layer = 0; layer < m.cfg.layers(); ++layer) {
      const bool keep_seq = layer + 1 < m.cfg.layers();
      Mat h(rows, m.cfg.hidden), c(rows, m.cfg.hidden);
      std::vector<Mat> out_seq;
      if (keep_seq) out_seq.reserve(t_len);
      for (int t = 0; t < t_len; ++t) {
        const int idx = reversed ? t_len - 1 - t : t;
        const Mat& xin = layer == 0 ? x_seq[idx] : prev_seq[t];
        Mat mixed;
        const Mat* xp = &xin;
        if (mix_op) {
          mixed = detail::mix_blocks(*mix_op, xin, batch);
          xp = &mixed;
        }
        auto [h2, c2] = cell_step(m.cells[dir][layer], nullptr, *xp, h, c, m.cfg.cell_state_act);
        h = std::move(h2);
        c = std::move(c2);
        if (keep_seq) out_seq.push_back(h);
      }
      prev_seq = std::move(out_seq);
      h_final = std::move(h);
    }
    return h_final;
  };

  Mat h_fwd = run_dir(0, false);
  Mat hidden;
  if (m.cfg.bidirectional) {
    Mat h_bwd = run_dir(1, true);
    hidden = Mat(rows, 2 * m.cfg.hidden);
    for (int r = 0; r < rows; ++r) {
      double* dst = hidden.row(r);
      const double* b = h_bwd.row(r);
      const double* f = h_fwd.row(r);
      for (int j = 0; j < m.cfg.hidden; ++j) dst[j] = b[j];
      for (int j = 0; j < m.cfg.hidden; ++j) dst[m.cfg.hidden + j] = f[j];
    }
  } else {
    hidden = std::move(h_fwd);
  }

  std::vector<ForecastBundle> out(batch);
  for (int b = 0; b < batch; ++b) {
    out[b].low = Mat(m.n_lines, m.cfg.horizon);
    out[b].high = Mat(m.n_lines, m.cfg.horizon);
  }
  Mat gathered(batch, hidden.cols);
  auto apply_head = [&gathered](const HeadParams& hp) {
    Mat z = matmul(gathered, hp.w1);
    for (int r = 0; r < z.rows; ++r) {
      double* zr = z.row(r);
      for (int j = 0; j < z.cols; ++j) zr[j] = std::tanh(zr[j] + hp.b1.v[j]);
    }
    Mat y = matmul(z, hp.w2);
    for (int r = 0; r < y.rows; ++r) {
      double* yr = y.row(r);
      for (int j = 0; j < y.cols; ++j) yr[j] += hp.b2.v[j];
    }
    return y;
  };
  for (int i = 0; i < m.n_lines; ++i) {
    for (int b = 0; b < batch; ++b) {
      const double* src = hidden.row(b * m.n_lines + i);
      double* dst = gathered.row(b);
      for (int j = 0; j < hidden.cols; ++j) dst[j] = src[j];
    }
    Mat lo = apply_head(m.head_low(i));
    Mat hi = apply_head(m.head_high(i));
    for (int b = 0; b < batch; ++b)
      for (int t = 0; t < m.cfg.horizon; ++t) {
        out[b].low(i, t) = lo(b, t);
        out[b].high(i, t) = hi(b, t);
      }
  }
  return out;
}

inline const char* act_name(ad::Act a) { return a == ad::Act::sigmoid ? "sigmoid" : "tanh"; }

inline ad::Act act_from_name(const std::string& s) {
  if (s == "sigmoid") return ad::Act::sigmoid;
  if (s == "tanh") return ad::Act::tanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

inline nlohmann::json model_config_json(const ModelConfig& cfg) {
  return nlohmann::json{{"variant", variant_name(cfg.variant)},
                        {"input_dim", cfg.input_dim},
                        {"hidden", cfg.hidden},
                        {"head_hidden", cfg.head_hidden},
                        {"horizon", cfg.horizon},
                        {"q_low", cfg.q_low},
                        {"q_high", cfg.q_high},
                        {"bidirectional", cfg.bidirectional},
                        {"shared_head", cfg.shared_head},
                        {"cell_state_act", act_name(cfg.cell_state_act)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.variant = variant_from_name(j.at("variant").get<std::string>());
  cfg.input_dim = j.at("input_dim").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.head_hidden = j.at("head_hidden").get<int>();
  cfg.horizon = j.at("horizon").get<int>();
  cfg.q_low = j.at("q_low").get<double>();
  cfg.q_high = j.at("q_high").get<double>();
  cfg.bidirectional = j.at("bidirectional").get<bool>();
  cfg.shared_head = j.at("shared_head").get<bool>();
  cfg.cell_state_act = act_from_name(j.at("cell_state_act").get<std::string>());
  cfg.validate();
  return cfg;
}

/// Checkpoint: `<prefix>.bin` holds raw doubles in visit_params order,
/// `<prefix>.json` the shapes and config needed to rebuild and cross-check.
inline void save_checkpoint(Model& m, const std::string& prefix, const std::vector<int>& line_ids,
                            const std::string& schema_hash) {
  nlohmann::json shapes = nlohmann::json::array();
  std::ofstream bin(prefix + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + prefix + ".bin");
  m.visit_params([&](const std::string& name, Mat& mat) {
    shapes.push_back({{"name", name}, {"rows", mat.rows}, {"cols", mat.cols}});
    bin.write(reinterpret_cast<const char*>(mat.v.data()), static_cast<std::streamsize>(mat.v.size() * sizeof(double)));
  });
  bin.close();
  if (!bin) throw std::runtime_error("short write on " + prefix + ".bin");
  nlohmann::json j{{"format", "dlrnet-checkpoint-v1"},
                   {"config", model_config_json(m.cfg)},
                   {"n_lines", m.n_lines},
                   {"line_ids", line_ids},
                   {"feature_schema_hash", schema_hash},
                   {"param_count", m.param_count()},
                   {"params", std::move(shapes)}};
  std::ofstream js(prefix + ".json", std::ios::trunc);
  if (!js) throw std::runtime_error("cannot write " + prefix + ".json");
  js << j.dump(2) << "\n";
}

struct LoadedCheckpoint {
  Model model;
  std::vector<int> line_ids;
  std::string schema_hash;
};

inline LoadedCheckpoint load_checkpoint(const std::string& prefix) {
  std::ifstream js(prefix + ".json");
  if (!js) throw std::runtime_error("cannot read " + prefix + ".json");
  nlohmann::json j = nlohmann::json::parse(js);
  if (j.at("format").get<std::string>() != "dlrnet-checkpoint-v1")
    throw std::runtime_error("unsupported checkpoint format in " + prefix + ".json");
  LoadedCheckpoint lc;
  ModelConfig cfg = model_config_from_json(j.at("config"));
  const int n_lines = j.at("n_lines").get<int>();
  lc.model = make_model(cfg, n_lines, 0);
  lc.line_ids = j.at("line_ids").get<std::vector<int>>();
  lc.schema_hash = j.at("feature_schema_hash").get<std::string>();
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + prefix + ".bin");
  size_t idx = 0;
  const auto& shapes = j.at("params");
  lc.model.visit_params([&](const std::string& name, Mat& mat) {
    if (idx >= shapes.size()) throw std::runtime_error("checkpoint manifest has too few parameter entries");
    const auto& e = shapes[idx++];
    if (e.at("name").get<std::string>() != name || e.at("rows").get<int>() != mat.rows ||
        e.at("cols").get<int>() != mat.cols)
      throw std::runtime_error("checkpoint shape mismatch at parameter '" + name + "'");
    bin.read(reinterpret_cast<char*>(mat.v.data()), static_cast<std::streamsize>(mat.v.size() * sizeof(double)));
    if (!bin) throw std::runtime_error("checkpoint binary truncated at parameter '" + name + "'");
    if (!all_finite(mat)) throw std::runtime_error("checkpoint parameter '" + name + "' is non-finite");
  });
  if (idx != shapes.size()) throw std::runtime_error("checkpoint manifest has extra parameter entries");
  char extra;
  if (bin.read(&extra, 1)) throw std::runtime_error("checkpoint binary has trailing bytes");
  return lc;
}

/// End-to-end gradient-check case at tiny sizes: full bidirectional model,
/// graph mixing, heads and pinball loss.
inline GradCase model_grad_case(std::uint64_t seed = 7ULL) {
  const int e = 4, t_len = 3, hidden = 3, input_dim = 5, horizon = 2;
  ModelConfig cfg;
  cfg.variant = Variant::dlgclstm;
  cfg.input_dim = input_dim;
  cfg.hidden = hidden;
  cfg.head_hidden = 3;
  cfg.horizon = horizon;
  auto model = std::make_shared<Model>(make_model(cfg, e, seed));
  std::mt19937_64 rng(seed + 1);

  Mat adj(e, e);
  adj(0, 1) = adj(1, 0) = 1.0;
  adj(1, 2) = adj(2, 1) = 1.0;
  adj(2, 3) = adj(3, 2) = 1.0;
  auto op = std::make_shared<const Mat>(normalize_operator(adj));

  auto xs = std::make_shared<std::vector<Mat>>();
  for (int t = 0; t < t_len; ++t) xs->push_back(detail::rand_mat(e, input_dim, rng, -1.0, 1.0));
  auto targets = std::make_shared<std::vector<std::shared_ptr<const Mat>>>();
  for (int i = 0; i < e; ++i)
    targets->push_back(std::make_shared<const Mat>(detail::rand_mat(1, horizon, rng, -0.9, 0.9)));

  GradCase c;
  c.name = "full_model";
  std::vector<Mat> inputs;
  model->visit_params([&inputs](const std::string&, Mat& m) { inputs.push_back(m); });
  c.inputs = std::move(inputs);
  c.build = [model, op, xs, targets](ad::Tape& tape, const std::vector<ad::Tensor>& leaves) {
    Model local = *model;
    StagedModel s;
    s.cells.resize(local.cells.size());
    size_t k = 0;
    for (size_t d = 0; d < local.cells.size(); ++d) {
      s.cells[d].resize(local.cells[d].size());
      for (size_t l = 0; l < local.cells[d].size(); ++l)
        for (int g = 0; g < 12; ++g) s.cells[d][l][g] = leaves[k++];
    }
    auto take_heads = [&](std::vector<std::array<ad::Tensor, 4>>& out, size_t n) {
      out.resize(n);
      for (size_t i = 0; i < n; ++i) {
        out[i] = {leaves[k], leaves[k + 1], leaves[k + 2], leaves[k + 3]};
        k += 4;
      }
    };
    take_heads(s.heads_low, local.heads_low.size());
    take_heads(s.heads_high, local.heads_high.size());
    std::vector<ad::Tensor> x_seq;
    for (const Mat& x : *xs) x_seq.push_back(tape.constant(x));
    ForwardResult fr = model_forward(tape, local, s, x_seq, 1, op);
    ad::Tensor loss{-1};
    for (size_t i = 0; i < fr.low.size(); ++i) {
      ad::Tensor li = tape.add(tape.sum(tape.pinball(fr.low[i], (*targets)[i], local.cfg.q_low)),
                               tape.sum(tape.pinball(fr.high[i], (*targets)[i], local.cfg.q_high)));
      loss = i == 0 ? li : tape.add(loss, li);
    }
    return loss;
  };
  return c;
}

}  // namespace dlr
