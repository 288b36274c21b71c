#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlr/mat.hpp"

namespace dlr::ad {

enum class Op {
  leaf,
  constant,
  matmul,
  add,
  add_bias,
  hadamard,
  sigmoid,
  tanh_,
  concat_cols,
  slice_cols,
  gather_rows,
  sum,
  mean,
  scale,
  pinball,
  graph_mix,
  lstm_gate,
  cell_update,
  hidden_blend,
  none,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::add_bias: return "add_bias";
    case Op::hadamard: return "hadamard";
    case Op::sigmoid: return "sigmoid";
    case Op::tanh_: return "tanh";
    case Op::concat_cols: return "concat_cols";
    case Op::slice_cols: return "slice_cols";
    case Op::gather_rows: return "gather_rows";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::scale: return "scale";
    case Op::pinball: return "pinball";
    case Op::graph_mix: return "graph_mix";
    case Op::lstm_gate: return "lstm_gate";
    case Op::cell_update: return "cell_update";
    case Op::hidden_blend: return "hidden_blend";
    default: return "none";
  }
}

inline Op op_from_name(const std::string& name) {
  for (int i = 0; i <= static_cast<int>(Op::none); ++i)
    if (name == op_name(static_cast<Op>(i))) return static_cast<Op>(i);
  throw std::invalid_argument("unknown op name: " + name);
}

enum class Act { sigmoid, tanh };

inline double act_forward(Act a, double x) { return a == Act::sigmoid ? 1.0 / (1.0 + std::exp(-x)) : std::tanh(x); }
/// Derivative expressed through the activation output.
inline double act_backward(Act a, double y) { return a == Act::sigmoid ? y * (1.0 - y) : 1.0 - y * y; }

/// Handle into a Tape.
struct Tensor {
  int id = -1;
};

/// Append-only reverse-mode differentiation record over dense matrices.
/// Insertion order is topological order; backward() walks it once in
/// reverse. A tape belongs to a single thread; separate tapes are
/// independent.
class Tape {
 public:
  /// Differentiable input; its gradient is readable after backward().
  Tensor leaf(const Mat& m) { return push(Op::leaf, m, {}, true); }

  /// Non-differentiable input.
  Tensor constant(const Mat& m) { return push(Op::constant, m, {}, false); }

  Tensor matmul(Tensor a, Tensor b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    return push(Op::matmul, dlr::matmul(av, bv), {a, b});
  }

  Tensor add(Tensor a, Tensor b) {
    Mat out = value(a);
    add_inplace(out, value(b));
    return push(Op::add, std::move(out), {a, b});
  }

  /// Adds a 1 x cols bias row to every row of `a`.
  Tensor add_bias(Tensor a, Tensor bias) {
    const Mat& av = value(a);
    const Mat& bv = value(bias);
    if (bv.rows != 1 || bv.cols != av.cols)
      throw std::invalid_argument("add_bias: bias " + shape_str(bv) + " vs " + shape_str(av));
    Mat out = av;
    for (int i = 0; i < out.rows; ++i) {
      double* r = out.row(i);
      for (int j = 0; j < out.cols; ++j) r[j] += bv.v[j];
    }
    return push(Op::add_bias, std::move(out), {a, bias});
  }

  Tensor hadamard(Tensor a, Tensor b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("hadamard: " + shape_str(av) + " vs " + shape_str(bv));
    Mat out = av;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= bv.v[i];
    return push(Op::hadamard, std::move(out), {a, b});
  }

  Tensor sigmoid(Tensor a) {
    Mat out = value(a);
    for (double& x : out.v) x = act_forward(Act::sigmoid, x);
    return push(Op::sigmoid, std::move(out), {a});
  }

  Tensor tanh(Tensor a) {
    Mat out = value(a);
    for (double& x : out.v) x = std::tanh(x);
    return push(Op::tanh_, std::move(out), {a});
  }

  Tensor concat_cols(Tensor a, Tensor b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    if (av.rows != bv.rows) throw std::invalid_argument("concat_cols: row mismatch");
    Mat out(av.rows, av.cols + bv.cols);
    for (int i = 0; i < av.rows; ++i) {
      double* r = out.row(i);
      const double* ra = av.row(i);
      const double* rb = bv.row(i);
      for (int j = 0; j < av.cols; ++j) r[j] = ra[j];
      for (int j = 0; j < bv.cols; ++j) r[av.cols + j] = rb[j];
    }
    return push(Op::concat_cols, std::move(out), {a, b});
  }

  /// Columns [c0, c1) of `a`.
  Tensor slice_cols(Tensor a, int c0, int c1) {
    const Mat& av = value(a);
    if (c0 < 0 || c1 > av.cols || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    Mat out(av.rows, c1 - c0);
    for (int i = 0; i < av.rows; ++i) {
      const double* ra = av.row(i);
      double* r = out.row(i);
      for (int j = c0; j < c1; ++j) r[j - c0] = ra[j];
    }
    Tensor t = push(Op::slice_cols, std::move(out), {a});
    nodes_[t.id].a0 = c0;
    nodes_[t.id].a1 = c1;
    return t;
  }

  Tensor gather_rows(Tensor a, std::vector<int> rows) {
    const Mat& av = value(a);
    Mat out(static_cast<int>(rows.size()), av.cols);
    for (size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] < 0 || rows[r] >= av.rows) throw std::invalid_argument("gather_rows: index out of range");
      const double* src = av.row(rows[r]);
      double* dst = out.row(static_cast<int>(r));
      for (int j = 0; j < av.cols; ++j) dst[j] = src[j];
    }
    Tensor t = push(Op::gather_rows, std::move(out), {a});
    nodes_[t.id].indices = std::move(rows);
    return t;
  }

  Tensor sum(Tensor a) {
    double s = 0.0;
    for (double x : value(a).v) s += x;
    Mat out(1, 1);
    out(0, 0) = s;
    return push(Op::sum, std::move(out), {a});
  }

  Tensor mean(Tensor a) {
    const Mat& av = value(a);
    if (av.empty()) throw std::invalid_argument("mean: empty tensor");
    double s = 0.0;
    for (double x : av.v) s += x;
    Mat out(1, 1);
    out(0, 0) = s / static_cast<double>(av.size());
    return push(Op::mean, std::move(out), {a});
  }

  Tensor scale(Tensor a, double s) {
    Mat out = value(a);
    scale_inplace(out, s);
    Tensor t = push(Op::scale, std::move(out), {a});
    nodes_[t.id].scalar = s;
    return t;
  }

  /// Elementwise quantile (pinball) loss of `pred` against a fixed target at
  /// level q: q*(y - p) when p <= y, else (1-q)*(p - y). The subgradient at
  /// p == y takes the p <= y branch.
  Tensor pinball(Tensor pred, std::shared_ptr<const Mat> target, double q) {
    const Mat& pv = value(pred);
    if (!pv.same_shape(*target)) throw std::invalid_argument("pinball: pred/target shape mismatch");
    if (q <= 0.0 || q >= 1.0) throw std::invalid_argument("pinball: q in (0,1)");
    Mat out = pv;
    for (size_t i = 0; i < out.v.size(); ++i) {
      const double p = pv.v[i], y = target->v[i];
      out.v[i] = p <= y ? q * (y - p) : (1.0 - q) * (p - y);
    }
    Tensor t = push(Op::pinball, std::move(out), {pred});
    nodes_[t.id].cmat = std::move(target);
    nodes_[t.id].scalar = q;
    return t;
  }

  /// Left-multiplies every (rows/blocks)-row block of `x` by the fixed
  /// operator `a` (no gradient flows into the operator). With blocks == 1
  /// this is plain fixed-matrix multiplication.
  Tensor graph_mix(std::shared_ptr<const Mat> a, Tensor x, int blocks) {
    const Mat& xv = value(x);
    const int e = a->rows;
    if (a->cols != e) throw std::invalid_argument("graph_mix: operator must be square");
    if (blocks < 1 || xv.rows != e * blocks)
      throw std::invalid_argument("graph_mix: rows " + std::to_string(xv.rows) + " != blocks*" + std::to_string(e));
    Mat out(xv.rows, xv.cols);
    for (int b = 0; b < blocks; ++b) block_matmul(*a, xv, out, b * e, false);
    Tensor t = push(Op::graph_mix, std::move(out), {x});
    nodes_[t.id].cmat = std::move(a);
    nodes_[t.id].a0 = blocks;
    return t;
  }

  /// Fused recurrent gate: act(xm*w + h*u + bias). Stores only the activated
  /// output; the backward rule recovers the pre-activation derivative from it.
  Tensor lstm_gate(Act act, Tensor xm, Tensor w, Tensor h, Tensor u, Tensor bias) {
    const Mat& xv = value(xm);
    const Mat& wv = value(w);
    const Mat& hv = value(h);
    const Mat& uv = value(u);
    const Mat& bv = value(bias);
    if (xv.cols != wv.rows || hv.cols != uv.rows || wv.cols != uv.cols || hv.rows != xv.rows || bv.rows != 1 ||
        bv.cols != wv.cols)
      throw std::invalid_argument("lstm_gate: inconsistent shapes");
    Mat out = dlr::matmul(xv, wv);
    Mat hu = dlr::matmul(hv, uv);
    add_inplace(out, hu);
    for (int i = 0; i < out.rows; ++i) {
      double* r = out.row(i);
      for (int j = 0; j < out.cols; ++j) r[j] = act_forward(act, r[j] + bv.v[j]);
    }
    Tensor t = push(Op::lstm_gate, std::move(out), {xm, w, h, u, bias});
    nodes_[t.id].act = act;
    return t;
  }

  /// Fused cell-state update f*c_prev + i*g.
  Tensor cell_update(Tensor f, Tensor i, Tensor g, Tensor c_prev) {
    const Mat& fv = value(f);
    const Mat& iv = value(i);
    const Mat& gv = value(g);
    const Mat& cv = value(c_prev);
    if (!fv.same_shape(iv) || !fv.same_shape(gv) || !fv.same_shape(cv))
      throw std::invalid_argument("cell_update: shape mismatch");
    Mat out = fv;
    for (size_t k = 0; k < out.v.size(); ++k) out.v[k] = fv.v[k] * cv.v[k] + iv.v[k] * gv.v[k];
    return push(Op::cell_update, std::move(out), {f, i, g, c_prev});
  }

  /// Fused hidden-state output o * act(c). The cell-state activation is the
  /// configurable part of the recurrent cell.
  Tensor hidden_blend(Tensor o, Tensor c, Act act) {
    const Mat& ov = value(o);
    const Mat& cv = value(c);
    if (!ov.same_shape(cv)) throw std::invalid_argument("hidden_blend: shape mismatch");
    Mat out = ov;
    for (size_t k = 0; k < out.v.size(); ++k) out.v[k] = ov.v[k] * act_forward(act, cv.v[k]);
    Tensor t = push(Op::hidden_blend, std::move(out), {o, c});
    nodes_[t.id].act = act;
    return t;
  }

  const Mat& value(Tensor t) const { return at(t).value; }

  /// Gradient of the last backward() with respect to tensor `t`.
  const Mat& grad(Tensor t) const {
    const Node& n = at(t);
    if (n.grad.empty() && !n.value.empty())
      throw std::logic_error("grad: no gradient stored (run backward; interior grads are released)");
    return n.grad;
  }

  /// Reverse sweep from a 1x1 loss. Gradients accumulate additively into
  /// every reachable differentiable node; leaves that the loss does not
  /// reach end up with zero gradients. Interior gradients are released as
  /// soon as they have been consumed. Calling backward twice without reset
  /// is an error.
  void backward(Tensor loss) {
    const Node& ln = at(loss);
    if (ln.value.rows != 1 || ln.value.cols != 1) throw std::invalid_argument("backward: loss must be 1x1");
    if (backward_done_) throw std::logic_error("backward: already run on this tape (reset first)");
    backward_done_ = true;
    ensure_grad(loss.id).fill(1.0);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.op == fault_op_) scale_inplace(n.grad, fault_scale_);
      dispatch_backward(n);
      if (n.op != Op::leaf) n.grad.release();
    }
    for (auto& n : nodes_)
      if (n.op == Op::leaf && n.grad.empty()) n.grad = Mat(n.value.rows, n.value.cols);
  }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

  size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

  /// Test hook: multiplies the outgoing gradient of every node of the given
  /// op by a wrong factor, so gradient checks must flag that op.
  void inject_backward_fault(Op op, double scale = 1.05) {
    fault_op_ = op;
    fault_scale_ = scale;
  }

 private:
  struct Node {
    Op op = Op::none;
    bool needs_grad = false;
    std::array<int, 5> parent{-1, -1, -1, -1, -1};
    Mat value;
    Mat grad;
    double scalar = 0.0;
    int a0 = 0, a1 = 0;
    Act act = Act::sigmoid;
    std::shared_ptr<const Mat> cmat;
    std::vector<int> indices;
  };

  const Node& at(Tensor t) const {
    if (t.id < 0 || t.id >= static_cast<int>(nodes_.size())) throw std::invalid_argument("bad tensor handle");
    return nodes_[t.id];
  }

  Tensor push(Op op, Mat value, std::initializer_list<Tensor> parents, bool force_needs_grad = false) {
    if (!all_finite(value))
      throw std::runtime_error(std::string("non-finite value produced by op '") + op_name(op) + "'");
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.needs_grad = force_needs_grad;
    int k = 0;
    for (Tensor p : parents) {
      n.parent[k++] = p.id;
      n.needs_grad = n.needs_grad || at(p).needs_grad;
    }
    nodes_.push_back(std::move(n));
    return Tensor{static_cast<int>(nodes_.size()) - 1};
  }

  Mat& ensure_grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Mat(n.value.rows, n.value.cols);
    return n.grad;
  }

  /// Accumulates into parent `slot`'s gradient if that parent wants one.
  Mat* parent_grad(const Node& n, int slot) {
    const int pid = n.parent[slot];
    if (pid < 0 || !nodes_[pid].needs_grad) return nullptr;
    return &ensure_grad(pid);
  }

  /// out[off..off+e) (+)= op^T? * x[off..off+e)  -- fixed-operator block product.
  static void block_matmul(const Mat& op, const Mat& x, Mat& out, int off, bool transpose_op) {
    const int e = op.rows, d = x.cols;
    for (int i = 0; i < e; ++i) {
      double* dst = out.row(off + i);
      for (int k = 0; k < e; ++k) {
        const double a = transpose_op ? op(k, i) : op(i, k);
        if (a == 0.0) continue;
        const double* src = x.row(off + k);
        for (int j = 0; j < d; ++j) dst[j] += a * src[j];
      }
    }
  }

  void dispatch_backward(Node& n) {
    const Mat& g = n.grad;
    switch (n.op) {
      case Op::leaf:
      case Op::constant:
        break;
      case Op::matmul: {
        const Mat& av = nodes_[n.parent[0]].value;
        const Mat& bv = nodes_[n.parent[1]].value;
        if (Mat* da = parent_grad(n, 0)) matmul_nt_acc(g, bv, *da);
        if (Mat* db = parent_grad(n, 1)) matmul_tn_acc(av, g, *db);
        break;
      }
      case Op::add:
        if (Mat* da = parent_grad(n, 0)) add_inplace(*da, g);
        if (Mat* db = parent_grad(n, 1)) add_inplace(*db, g);
        break;
      case Op::add_bias: {
        if (Mat* da = parent_grad(n, 0)) add_inplace(*da, g);
        if (Mat* db = parent_grad(n, 1))
          for (int i = 0; i < g.rows; ++i) {
            const double* r = g.row(i);
            for (int j = 0; j < g.cols; ++j) db->v[j] += r[j];
          }
        break;
      }
      case Op::hadamard: {
        const Mat& av = nodes_[n.parent[0]].value;
        const Mat& bv = nodes_[n.parent[1]].value;
        if (Mat* da = parent_grad(n, 0))
          for (size_t i = 0; i < g.v.size(); ++i) da->v[i] += g.v[i] * bv.v[i];
        if (Mat* db = parent_grad(n, 1))
          for (size_t i = 0; i < g.v.size(); ++i) db->v[i] += g.v[i] * av.v[i];
        break;
      }
      case Op::sigmoid:
      case Op::tanh_: {
        const Act a = n.op == Op::sigmoid ? Act::sigmoid : Act::tanh;
        if (Mat* dx = parent_grad(n, 0))
          for (size_t i = 0; i < g.v.size(); ++i) dx->v[i] += g.v[i] * act_backward(a, n.value.v[i]);
        break;
      }
      case Op::concat_cols: {
        const int ca = nodes_[n.parent[0]].value.cols;
        if (Mat* da = parent_grad(n, 0))
          for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < ca; ++j) (*da)(i, j) += g(i, j);
        if (Mat* db = parent_grad(n, 1))
          for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < db->cols; ++j) (*db)(i, j) += g(i, ca + j);
        break;
      }
      case Op::slice_cols:
        if (Mat* dx = parent_grad(n, 0))
          for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) (*dx)(i, n.a0 + j) += g(i, j);
        break;
      case Op::gather_rows:
        if (Mat* dx = parent_grad(n, 0))
          for (size_t r = 0; r < n.indices.size(); ++r) {
            const double* src = g.row(static_cast<int>(r));
            double* dst = dx->row(n.indices[r]);
            for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
          }
        break;
      case Op::sum:
        if (Mat* dx = parent_grad(n, 0))
          for (double& x : dx->v) x += g(0, 0);
        break;
      case Op::mean:
        if (Mat* dx = parent_grad(n, 0)) {
          const double s = g(0, 0) / static_cast<double>(dx->size());
          for (double& x : dx->v) x += s;
        }
        break;
      case Op::scale:
        if (Mat* dx = parent_grad(n, 0))
          for (size_t i = 0; i < g.v.size(); ++i) dx->v[i] += n.scalar * g.v[i];
        break;
      case Op::pinball: {
        const Mat& pv = nodes_[n.parent[0]].value;
        const Mat& target = *n.cmat;
        if (Mat* dp = parent_grad(n, 0))
          for (size_t i = 0; i < g.v.size(); ++i)
            dp->v[i] += g.v[i] * (pv.v[i] <= target.v[i] ? -n.scalar : 1.0 - n.scalar);
        break;
      }
      case Op::graph_mix:
        if (Mat* dx = parent_grad(n, 0)) {
          const int e = n.cmat->rows;
          for (int b = 0; b < n.a0; ++b) block_matmul(*n.cmat, g, *dx, b * e, true);
        }
        break;
      case Op::lstm_gate: {
        Mat dpre = g;
        for (size_t i = 0; i < dpre.v.size(); ++i) dpre.v[i] *= act_backward(n.act, n.value.v[i]);
        const Mat& xv = nodes_[n.parent[0]].value;
        const Mat& wv = nodes_[n.parent[1]].value;
        const Mat& hv = nodes_[n.parent[2]].value;
        const Mat& uv = nodes_[n.parent[3]].value;
        if (Mat* dxm = parent_grad(n, 0)) matmul_nt_acc(dpre, wv, *dxm);
        if (Mat* dw = parent_grad(n, 1)) matmul_tn_acc(xv, dpre, *dw);
        if (Mat* dh = parent_grad(n, 2)) matmul_nt_acc(dpre, uv, *dh);
        if (Mat* du = parent_grad(n, 3)) matmul_tn_acc(hv, dpre, *du);
        if (Mat* db = parent_grad(n, 4))
          for (int i = 0; i < dpre.rows; ++i) {
            const double* r = dpre.row(i);
            for (int j = 0; j < dpre.cols; ++j) db->v[j] += r[j];
          }
        break;
      }
      case Op::cell_update: {
        const Mat& fv = nodes_[n.parent[0]].value;
        const Mat& iv = nodes_[n.parent[1]].value;
        const Mat& gv = nodes_[n.parent[2]].value;
        const Mat& cv = nodes_[n.parent[3]].value;
        if (Mat* df = parent_grad(n, 0))
          for (size_t i = 0; i < g.v.size(); ++i) df->v[i] += g.v[i] * cv.v[i];
        if (Mat* di = parent_grad(n, 1))
          for (size_t i = 0; i < g.v.size(); ++i) di->v[i] += g.v[i] * gv.v[i];
        if (Mat* dg = parent_grad(n, 2))
          for (size_t i = 0; i < g.v.size(); ++i) dg->v[i] += g.v[i] * iv.v[i];
        if (Mat* dc = parent_grad(n, 3))
          for (size_t i = 0; i < g.v.size(); ++i) dc->v[i] += g.v[i] * fv.v[i];
        break;
      }
      case Op::hidden_blend: {
        const Mat& ov = nodes_[n.parent[0]].value;
        const Mat& cv = nodes_[n.parent[1]].value;
        if (Mat* dop = parent_grad(n, 0))
          for (size_t i = 0; i < g.v.size(); ++i) dop->v[i] += g.v[i] * act_forward(n.act, cv.v[i]);
        if (Mat* dc = parent_grad(n, 1))
          for (size_t i = 0; i < g.v.size(); ++i) {
            const double a = act_forward(n.act, cv.v[i]);
            dc->v[i] += g.v[i] * ov.v[i] * act_backward(n.act, a);
          }
        break;
      }
      case Op::none:
        throw std::logic_error("backward: malformed node");
    }
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  Op fault_op_ = Op::none;
  double fault_scale_ = 1.0;
};

}  // namespace dlr::ad
