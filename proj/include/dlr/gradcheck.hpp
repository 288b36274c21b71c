#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dlr/autodiff.hpp"
#include "dlr/mat.hpp"

namespace dlr {

/// One differentiable scalar function of a set of leaf matrices, checked by
/// central differences against the tape's reverse sweep.
struct GradCase {
  std::string name;
  std::vector<Mat> inputs;
  std::function<ad::Tensor(ad::Tape&, const std::vector<ad::Tensor>&)> build;
};

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool ok = false;
};

namespace detail {

inline Mat rand_mat(int rows, int cols, std::mt19937_64& rng, double lo = -1.5, double hi = 1.5) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Mat m(rows, cols);
  for (double& x : m.v) x = dist(rng);
  return m;
}

inline double eval_case(const GradCase& c, const std::vector<Mat>& inputs, ad::Op fault_op) {
  ad::Tape tape;
  if (fault_op != ad::Op::none) tape.inject_backward_fault(fault_op);
  std::vector<ad::Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Mat& m : inputs) leaves.push_back(tape.leaf(m));
  ad::Tensor loss = c.build(tape, leaves);
  return tape.value(loss)(0, 0);
}

}  // namespace detail

/// Central-difference check: rel err |a - n| / max(1, |a|, |n|) per entry.
inline GradCheckResult run_grad_case(const GradCase& c, double h = 1e-5, double tol = 1e-4,
                                     ad::Op fault_op = ad::Op::none) {
  ad::Tape tape;
  if (fault_op != ad::Op::none) tape.inject_backward_fault(fault_op);
  std::vector<ad::Tensor> leaves;
  leaves.reserve(c.inputs.size());
  for (const Mat& m : c.inputs) leaves.push_back(tape.leaf(m));
  ad::Tensor loss = c.build(tape, leaves);
  tape.backward(loss);
  std::vector<Mat> analytic;
  analytic.reserve(leaves.size());
  for (ad::Tensor t : leaves) analytic.push_back(tape.grad(t));

  GradCheckResult res;
  res.name = c.name;
  std::vector<Mat> probe = c.inputs;
  for (size_t i = 0; i < probe.size(); ++i) {
    for (size_t k = 0; k < probe[i].v.size(); ++k) {
      const double saved = probe[i].v[k];
      probe[i].v[k] = saved + h;
      const double fp = detail::eval_case(c, probe, ad::Op::none);
      probe[i].v[k] = saved - h;
      const double fm = detail::eval_case(c, probe, ad::Op::none);
      probe[i].v[k] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i].v[k];
      const double rel = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      if (rel > res.max_rel_err) res.max_rel_err = rel;
    }
  }
  res.ok = res.max_rel_err < tol;
  return res;
}

/// Weighted sum against a fixed weighting so structural mistakes (wrong
/// column, dropped row) change the loss.
inline ad::Tensor weighted_sum(ad::Tape& t, ad::Tensor x, const std::shared_ptr<const Mat>& w) {
  return t.sum(t.hadamard(x, t.constant(*w)));
}

/// Small deterministic cases covering every differentiable op.
inline std::vector<GradCase> standard_grad_cases(unsigned long long seed = 20240301ULL) {
  std::mt19937_64 rng(seed);
  std::vector<GradCase> cases;
  auto rnd = [&rng](int r, int c, double lo = -1.5, double hi = 1.5) { return detail::rand_mat(r, c, rng, lo, hi); };
  auto weight = [&rng](int r, int c) { return std::make_shared<const Mat>(detail::rand_mat(r, c, rng, 0.2, 1.7)); };

  cases.push_back({"matmul",
                   {rnd(3, 4), rnd(4, 2)},
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in) { return t.sum(t.matmul(in[0], in[1])); }});
  cases.push_back({"add",
                   {rnd(3, 3), rnd(3, 3)},
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in) { return t.sum(t.add(in[0], in[1])); }});
  {
    auto w = weight(4, 3);
    cases.push_back({"add_bias", {rnd(4, 3), rnd(1, 3)}, [w](ad::Tape& t, const std::vector<ad::Tensor>& in) {
                       return weighted_sum(t, t.add_bias(in[0], in[1]), w);
                     }});
  }
  cases.push_back({"hadamard",
                   {rnd(3, 4), rnd(3, 4)},
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in) { return t.sum(t.hadamard(in[0], in[1])); }});
  cases.push_back({"sigmoid", {rnd(3, 3, -2.0, 2.0)}, [](ad::Tape& t, const std::vector<ad::Tensor>& in) {
                     return t.mean(t.sigmoid(in[0]));
                   }});
  cases.push_back({"tanh", {rnd(3, 3, -2.0, 2.0)}, [](ad::Tape& t, const std::vector<ad::Tensor>& in) {
                     return t.mean(t.tanh(in[0]));
                   }});
  {
    auto w = weight(3, 5);
    cases.push_back({"concat_cols", {rnd(3, 2), rnd(3, 3)}, [w](ad::Tape& t, const std::vector<ad::Tensor>& in) {
                       return weighted_sum(t, t.concat_cols(in[0], in[1]), w);
                     }});
  }
  {
    auto w = weight(3, 3);
    cases.push_back({"slice_cols", {rnd(3, 6)}, [w](ad::Tape& t, const std::vector<ad::Tensor>& in) {
                       return weighted_sum(t, t.slice_cols(in[0], 1, 4), w);
                     }});
  }
  {
    auto w = weight(5, 3);
    cases.push_back({"gather_rows", {rnd(5, 3)}, [w](ad::Tape& t, const std::vector<ad::Tensor>& in) {
                       return weighted_sum(t, t.gather_rows(in[0], {3, 0, 4, 4, 2}), w);
                     }});
  }
  cases.push_back({"sum_scale", {rnd(3, 3)}, [](ad::Tape& t, const std::vector<ad::Tensor>& in) {
                     return t.scale(t.sum(in[0]), -1.7);
                   }});
  cases.push_back(
      {"mean", {rnd(4, 5)}, [](ad::Tape& t, const std::vector<ad::Tensor>& in) { return t.mean(in[0]); }});
  {
    Mat pred = rnd(3, 4);
    Mat target = pred;
    std::mt19937_64 srng(seed + 5);
    std::uniform_real_distribution<double> shift(0.1, 0.8);
    std::bernoulli_distribution sign(0.5);
    for (double& y : target.v) y += (sign(srng) ? 1.0 : -1.0) * shift(srng);
    auto tgt = std::make_shared<const Mat>(std::move(target));
    cases.push_back({"pinball", {std::move(pred)}, [tgt](ad::Tape& t, const std::vector<ad::Tensor>& in) {
                       return t.mean(t.pinball(in[0], tgt, 0.1));
                     }});
  }
  {
    Mat adj(3, 3);
    adj(0, 1) = adj(1, 0) = 1.0;
    adj(1, 2) = adj(2, 1) = 1.0;
    Mat a_norm(3, 3);
    {
      Mat ai = adj;
      for (int i = 0; i < 3; ++i) ai(i, i) += 1.0;
      std::vector<double> dinv(3);
      for (int i = 0; i < 3; ++i) {
        double deg = 0.0;
        for (int j = 0; j < 3; ++j) deg += ai(i, j);
        dinv[i] = 1.0 / std::sqrt(deg);
      }
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a_norm(i, j) = dinv[i] * ai(i, j) * dinv[j];
    }
    auto op = std::make_shared<const Mat>(std::move(a_norm));
    auto w = weight(6, 3);
    cases.push_back({"graph_mix", {rnd(6, 3)}, [op, w](ad::Tape& t, const std::vector<ad::Tensor>& in) {
                       return weighted_sum(t, t.graph_mix(op, in[0], 2), w);
                     }});
  }
  for (ad::Act act : {ad::Act::sigmoid, ad::Act::tanh}) {
    auto w = weight(4, 3);
    cases.push_back({act == ad::Act::sigmoid ? "lstm_gate_sigmoid" : "lstm_gate_tanh",
                     {rnd(4, 5), rnd(5, 3, -0.8, 0.8), rnd(4, 3), rnd(3, 3, -0.8, 0.8), rnd(1, 3)},
                     [w, act](ad::Tape& t, const std::vector<ad::Tensor>& in) {
                       return weighted_sum(t, t.lstm_gate(act, in[0], in[1], in[2], in[3], in[4]), w);
                     }});
  }
  {
    auto w = weight(3, 3);
    cases.push_back({"cell_update",
                     {rnd(3, 3), rnd(3, 3), rnd(3, 3), rnd(3, 3)},
                     [w](ad::Tape& t, const std::vector<ad::Tensor>& in) {
                       return weighted_sum(t, t.cell_update(in[0], in[1], in[2], in[3]), w);
                     }});
  }
  for (ad::Act act : {ad::Act::sigmoid, ad::Act::tanh}) {
    auto w = weight(3, 4);
    cases.push_back({act == ad::Act::sigmoid ? "hidden_blend_sigmoid" : "hidden_blend_tanh",
                     {rnd(3, 4), rnd(3, 4)},
                     [w, act](ad::Tape& t, const std::vector<ad::Tensor>& in) {
                       return weighted_sum(t, t.hidden_blend(in[0], in[1], act), w);
                     }});
  }
  {
    auto w = weight(4, 2);
    cases.push_back({"chained_recurrence",
                     {rnd(4, 3, -0.9, 0.9), rnd(3, 2, -0.8, 0.8), rnd(2, 2, -0.8, 0.8), rnd(1, 2), rnd(4, 2, -0.5, 0.5),
                      rnd(4, 2, -0.5, 0.5)},
                     [w](ad::Tape& t, const std::vector<ad::Tensor>& in) {
                       ad::Tensor h = in[4];
                       ad::Tensor c = in[5];
                       for (int step = 0; step < 3; ++step) {
                         ad::Tensor f = t.lstm_gate(ad::Act::sigmoid, in[0], in[1], h, in[2], in[3]);
                         ad::Tensor i = t.lstm_gate(ad::Act::sigmoid, in[0], in[1], h, in[2], in[3]);
                         ad::Tensor g = t.lstm_gate(ad::Act::tanh, in[0], in[1], h, in[2], in[3]);
                         c = t.cell_update(f, i, g, c);
                         h = t.hidden_blend(f, c, ad::Act::sigmoid);
                       }
                       return weighted_sum(t, h, w);
                     }});
  }
  return cases;
}

/// Runs every case; with a fault injected the run is expected to fail.
inline std::vector<GradCheckResult> run_grad_cases(const std::vector<GradCase>& cases, double h = 1e-5,
                                                   double tol = 1e-4, ad::Op fault_op = ad::Op::none) {
  std::vector<GradCheckResult> out;
  out.reserve(cases.size());
  for (const GradCase& c : cases) out.push_back(run_grad_case(c, h, tol, fault_op));
  return out;
}

}  // namespace dlr
