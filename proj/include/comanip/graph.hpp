#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "comanip/error.hpp"
#include "comanip/tensor.hpp"

namespace comanip::ad {

// Primitive catalog. Graphs are built from these ops only; higher-level model
// code (attention blocks, losses, policies) composes them.
enum class Op : uint8_t {
  kInput,
  kParam,
  kConst,
  kMatmul,    // optional operand transposes, BLAS style
  kAdd,       // rhs may broadcast: scalar, or one row over all rows
  kMul,       // same broadcast rule as kAdd
  kConcat,    // along axis 0 or 1
  kSoftmax,   // per row, max-subtracted
  kLayerNorm, // per row, parameter-free, eps inside
  kGelu,      // exact erf form
  kExp,
  kLog,
  kSum,       // full reduction to scalar
  kMean,      // full reduction to scalar
  kScale,     // by compile-time scalar
  kReshape,
  kSlice,     // contiguous range along axis 0 or 1
  kClamp,     // scalar bounds, pass-through gradient inside [lo, hi]
  kMinimum,   // elementwise; ties route gradient to the first operand
  kMaximum,   // elementwise; ties route gradient to the first operand
};

inline constexpr double kLayerNormEps = 1e-5;

struct Node {
  Op op;
  int a = -1;
  int b = -1;
  Shape shape;
  std::string name;  // inputs and params only
  double d0 = 0.0;   // scale factor / clamp lo
  double d1 = 0.0;   // clamp hi
  int i0 = 0;        // axis / matmul trans_a
  int i1 = 0;        // slice start / matmul trans_b
  int i2 = 0;        // slice length
};

// A computational graph: immutable once built, shapes fixed at build time.
// Values live in Evaluation objects, so one graph can serve many concurrent
// evaluations.
class Graph {
 public:
  int input(const std::string& name, Shape shape) { return leaf(Op::kInput, name, std::move(shape)); }
  int param(const std::string& name, Shape shape) { return leaf(Op::kParam, name, std::move(shape)); }

  int constant(Tensor value) {
    Node n;
    n.op = Op::kConst;
    n.shape = value.shape;
    n.i0 = static_cast<int>(consts_.size());
    consts_.push_back(std::move(value));
    return push(std::move(n));
  }

  int constant(double v) { return constant(Tensor::scalar(v)); }

  int matmul(int a, int b, bool trans_a = false, bool trans_b = false) {
    const Shape& sa = at(a).shape;
    const Shape& sb = at(b).shape;
    if (sa.size() != 2 || sb.size() != 2)
      throw ShapeError("matmul needs rank-2 operands, got " + shape_str(sa) + " and " + shape_str(sb));
    const int m = trans_a ? sa[1] : sa[0];
    const int ka = trans_a ? sa[0] : sa[1];
    const int kb = trans_b ? sb[1] : sb[0];
    const int n = trans_b ? sb[0] : sb[1];
    if (ka != kb)
      throw ShapeError("matmul inner dims disagree: " + shape_str(sa) + (trans_a ? "^T" : "") +
                       " x " + shape_str(sb) + (trans_b ? "^T" : ""));
    Node nd;
    nd.op = Op::kMatmul;
    nd.a = a;
    nd.b = b;
    nd.i0 = trans_a;
    nd.i1 = trans_b;
    nd.shape = {m, n};
    return push(std::move(nd));
  }

  int add(int a, int b) { return binary(Op::kAdd, a, b); }
  int mul(int a, int b) { return binary(Op::kMul, a, b); }
  int sub(int a, int b) { return add(a, scale(b, -1.0)); }

  int concat(int a, int b, int axis) {
    const Shape& sa = at(a).shape;
    const Shape& sb = at(b).shape;
    Shape out;
    if (sa.size() == 1 && sb.size() == 1 && axis == 0) {
      out = {sa[0] + sb[0]};
    } else if (sa.size() == 2 && sb.size() == 2 && (axis == 0 || axis == 1)) {
      if (sa[1 - axis] != sb[1 - axis])
        throw ShapeError("concat axis " + std::to_string(axis) + " shape clash: " + shape_str(sa) +
                         " vs " + shape_str(sb));
      out = sa;
      out[axis] += sb[axis];
    } else {
      throw ShapeError("concat supports rank-1 axis 0 or rank-2 axis 0/1");
    }
    Node n;
    n.op = Op::kConcat;
    n.a = a;
    n.b = b;
    n.i0 = axis;
    n.shape = std::move(out);
    return push(std::move(n));
  }

  int softmax_rows(int a) { return rowwise(Op::kSoftmax, a); }
  int layer_norm(int a) { return rowwise(Op::kLayerNorm, a); }
  int gelu(int a) { return unary(Op::kGelu, a); }
  int exp(int a) { return unary(Op::kExp, a); }
  int log(int a) { return unary(Op::kLog, a); }

  int sum(int a) { return reduce(Op::kSum, a); }
  int mean(int a) { return reduce(Op::kMean, a); }

  int scale(int a, double s) {
    Node n;
    n.op = Op::kScale;
    n.a = a;
    n.d0 = s;
    n.shape = at(a).shape;
    return push(std::move(n));
  }

  int reshape(int a, Shape shape) {
    if (shape_numel(shape) != shape_numel(at(a).shape))
      throw ShapeError("reshape " + shape_str(at(a).shape) + " -> " + shape_str(shape) +
                       " changes element count");
    Node n;
    n.op = Op::kReshape;
    n.a = a;
    n.shape = std::move(shape);
    return push(std::move(n));
  }

  int slice(int a, int axis, int start, int len) {
    const Shape& s = at(a).shape;
    if (!((s.size() == 1 && axis == 0) || (s.size() == 2 && (axis == 0 || axis == 1))))
      throw ShapeError("slice supports rank-1 axis 0 or rank-2 axis 0/1");
    const int extent = s[static_cast<size_t>(axis)];
    if (start < 0 || len <= 0 || start + len > extent)
      throw ShapeError("slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                       ") out of range for axis extent " + std::to_string(extent));
    Shape out = s;
    out[static_cast<size_t>(axis)] = len;
    Node n;
    n.op = Op::kSlice;
    n.a = a;
    n.i0 = axis;
    n.i1 = start;
    n.i2 = len;
    n.shape = std::move(out);
    return push(std::move(n));
  }

  int clamp(int a, double lo, double hi) {
    if (!(lo <= hi)) throw ValueError("clamp bounds out of order");
    Node n;
    n.op = Op::kClamp;
    n.a = a;
    n.d0 = lo;
    n.d1 = hi;
    n.shape = at(a).shape;
    return push(std::move(n));
  }

  int minimum(int a, int b) { return samesize(Op::kMinimum, a, b); }
  int maximum(int a, int b) { return samesize(Op::kMaximum, a, b); }

  const Node& at(int i) const { return nodes_[static_cast<size_t>(i)]; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const Tensor& const_value(int idx) const { return consts_[static_cast<size_t>(idx)]; }
  // Node ids of registered parameter leaves, in registration order.
  const std::vector<int>& param_nodes() const { return param_order_; }

 private:
  int push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int leaf(Op op, const std::string& name, Shape shape) {
    auto& table = (op == Op::kParam) ? params_ : inputs_;
    if (auto it = table.find(name); it != table.end()) {
      if (at(it->second).shape != shape)
        throw ShapeError("leaf '" + name + "' re-registered with shape " + shape_str(shape) +
                         ", was " + shape_str(at(it->second).shape));
      return it->second;
    }
    Node n;
    n.op = op;
    n.name = name;
    n.shape = std::move(shape);
    const int id = push(std::move(n));
    table.emplace(name, id);
    if (op == Op::kParam) param_order_.push_back(id);
    return id;
  }

  int unary(Op op, int a) {
    Node n;
    n.op = op;
    n.a = a;
    n.shape = at(a).shape;
    return push(std::move(n));
  }

  int rowwise(Op op, int a) {
    const Shape& s = at(a).shape;
    if (s.size() > 2) throw ShapeError("row op needs rank 1 or 2, got " + shape_str(s));
    return unary(op, a);
  }

  int reduce(Op op, int a) {
    Node n;
    n.op = op;
    n.a = a;
    n.shape = {1};
    return push(std::move(n));
  }

  // rhs may be scalar, or a single row broadcast over lhs rows.
  static bool broadcast_ok(const Shape& a, const Shape& b) {
    if (a == b) return true;
    if (shape_numel(b) == 1) return true;
    if (a.size() == 2) {
      if (b.size() == 2 && b[0] == 1 && b[1] == a[1]) return true;
      if (b.size() == 1 && b[0] == a[1]) return true;
    }
    return false;
  }

  int binary(Op op, int a, int b) {
    if (!broadcast_ok(at(a).shape, at(b).shape))
      throw ShapeError(std::string(op == Op::kAdd ? "add" : "mul") + " shape mismatch: " +
                       shape_str(at(a).shape) + " vs " + shape_str(at(b).shape) +
                       " (rhs may be scalar or one row)");
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.shape = at(a).shape;
    return push(std::move(n));
  }

  int samesize(Op op, int a, int b) {
    if (at(a).shape != at(b).shape)
      throw ShapeError("elementwise min/max shape mismatch: " + shape_str(at(a).shape) + " vs " +
                       shape_str(at(b).shape));
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.shape = at(a).shape;
    return push(std::move(n));
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> consts_;
  std::unordered_map<std::string, int> inputs_;
  std::unordered_map<std::string, int> params_;
  std::vector<int> param_order_;
};

// Named tensors bound to graph leaves for one evaluation. Holds pointers;
// callers keep the tensors alive for the duration of the evaluation.
class Binding {
 public:
  void set(const std::string& name, const Tensor& t) { m_[name] = &t; }
  const Tensor* find(const std::string& name) const {
    auto it = m_.find(name);
    return it == m_.end() ? nullptr : it->second;
  }

 private:
  std::unordered_map<std::string, const Tensor*> m_;
};

namespace detail {

// C (+)= op_a(A) * op_b(B)
inline void mm(Tensor& c, const Tensor& a, const Tensor& b, bool ta, bool tb, bool accumulate) {
  const int m = ta ? a.shape[1] : a.shape[0];
  const int k = ta ? a.shape[0] : a.shape[1];
  const int n = tb ? b.shape[0] : b.shape[1];
  double* C = c.data.data();
  const double* A = a.data.data();
  const double* B = b.data.data();
  if (!accumulate) std::fill(c.data.begin(), c.data.end(), 0.0);
  if (!ta && !tb) {
    for (int i = 0; i < m; ++i) {
      double* crow = C + static_cast<size_t>(i) * n;
      const double* arow = A + static_cast<size_t>(i) * k;
      for (int p = 0; p < k; ++p) {
        const double av = arow[p];
        if (av == 0.0) continue;
        const double* brow = B + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    for (int i = 0; i < m; ++i) {
      const double* arow = A + static_cast<size_t>(i) * k;
      double* crow = C + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const double* brow = B + static_cast<size_t>(j) * k;
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
      }
    }
  } else if (ta && !tb) {
    for (int p = 0; p < k; ++p) {
      const double* arow = A + static_cast<size_t>(p) * m;
      const double* brow = B + static_cast<size_t>(p) * n;
      for (int i = 0; i < m; ++i) {
        const double av = arow[i];
        if (av == 0.0) continue;
        double* crow = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (int i = 0; i < m; ++i) {
      double* crow = C + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const double* brow = B + static_cast<size_t>(j) * k;
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += A[static_cast<size_t>(p) * m + i] * brow[p];
        crow[j] += acc;
      }
    }
  }
}

inline double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

}  // namespace detail

// Per-graph evaluation state: forward values and, after backward(), gradients.
// Reusable across repeated forward calls; never mutates the graph.
class Evaluation {
 public:
  explicit Evaluation(const Graph& g) : g_(&g) {
    const int n = g.size();
    val_.resize(static_cast<size_t>(n));
    ext_.assign(static_cast<size_t>(n), nullptr);
    for (int i = 0; i < n; ++i) {
      const Node& nd = g.at(i);
      if (nd.op == Op::kConst) {
        ext_[static_cast<size_t>(i)] = &g.const_value(nd.i0);
      } else if (nd.op != Op::kInput && nd.op != Op::kParam) {
        val_[static_cast<size_t>(i)] = Tensor(nd.shape);
      }
    }
  }

  // Evaluates every node in topological (construction) order. Pure: repeated
  // calls with the same bindings produce byte-identical values.
  const Tensor& forward(const Binding& binds) {
    const int n = g_->size();
    for (int i = 0; i < n; ++i) {
      const Node& nd = g_->at(i);
      switch (nd.op) {
        case Op::kInput:
        case Op::kParam: {
          const Tensor* t = binds.find(nd.name);
          if (!t)
            throw ValueError(std::string(nd.op == Op::kParam ? "parameter '" : "input '") +
                             nd.name + "' not bound");
          if (t->shape != nd.shape)
            throw ShapeError("leaf '" + nd.name + "' bound with shape " + shape_str(t->shape) +
                             ", graph expects " + shape_str(nd.shape));
          ext_[static_cast<size_t>(i)] = t;
          break;
        }
        case Op::kConst:
          break;
        default:
          compute(i, nd);
      }
    }
    forward_done_ = true;
    return value(n - 1);
  }

  const Tensor& value(int id) const {
    const Tensor* e = ext_[static_cast<size_t>(id)];
    return e ? *e : val_[static_cast<size_t>(id)];
  }

  // Reverse-mode sweep from a scalar output node (default: last node).
  // Returns gradients for every registered parameter leaf; parameters the
  // output does not depend on get zero tensors, not errors.
  const std::map<std::string, Tensor>& backward(int out = -1) {
    if (!forward_done_) throw Error("backward called before forward");
    const int n = g_->size();
    if (out < 0) out = n - 1;
    if (value(out).numel() != 1)
      throw ShapeError("backward requires a scalar output node; got shape " +
                       shape_str(value(out).shape));
    grad_.assign(static_cast<size_t>(n), Tensor());
    touch(out)[0] = 1.0;
    for (int i = out; i >= 0; --i) {
      if (grad_[static_cast<size_t>(i)].numel() == 0) continue;
      propagate(i, g_->at(i));
    }
    param_grads_.clear();
    for (int id : g_->param_nodes()) {
      const Node& nd = g_->at(id);
      Tensor& gslot = grad_[static_cast<size_t>(id)];
      if (gslot.numel() == 0) gslot = Tensor(nd.shape);
      param_grads_[nd.name] = gslot;
    }
    return param_grads_;
  }

  // Gradient w.r.t. any leaf after backward(); zeros if detached.
  Tensor leaf_grad(int id) const {
    const Tensor& gslot = grad_[static_cast<size_t>(id)];
    if (gslot.numel() == 0) return Tensor(g_->at(id).shape);
    return gslot;
  }

 private:
  Tensor& touch(int id) {
    Tensor& gslot = grad_[static_cast<size_t>(id)];
    if (gslot.numel() == 0) gslot = Tensor(g_->at(id).shape);
    return gslot;
  }

  void compute(int i, const Node& nd) {
    Tensor& o = val_[static_cast<size_t>(i)];
    const Tensor& va = value(nd.a);
    switch (nd.op) {
      case Op::kMatmul:
        detail::mm(o, va, value(nd.b), nd.i0, nd.i1, false);
        break;
      case Op::kAdd:
      case Op::kMul: {
        const Tensor& vb = value(nd.b);
        const bool is_add = nd.op == Op::kAdd;
        if (va.shape == vb.shape) {
          for (size_t j = 0; j < o.numel(); ++j)
            o[j] = is_add ? va[j] + vb[j] : va[j] * vb[j];
        } else if (vb.numel() == 1) {
          const double s = vb[0];
          for (size_t j = 0; j < o.numel(); ++j) o[j] = is_add ? va[j] + s : va[j] * s;
        } else {
          const size_t ncol = static_cast<size_t>(va.cols());
          for (size_t j = 0; j < o.numel(); ++j) {
            const double s = vb[j % ncol];
            o[j] = is_add ? va[j] + s : va[j] * s;
          }
        }
        break;
      }
      case Op::kConcat: {
        const Tensor& vb = value(nd.b);
        if (nd.i0 == 0 || va.rank() == 1) {
          std::copy(va.data.begin(), va.data.end(), o.data.begin());
          std::copy(vb.data.begin(), vb.data.end(), o.data.begin() + static_cast<long>(va.numel()));
        } else {
          const int r = va.rows(), ca = va.cols(), cb = vb.cols();
          for (int row = 0; row < r; ++row) {
            for (int j = 0; j < ca; ++j) o(row, j) = va(row, j);
            for (int j = 0; j < cb; ++j) o(row, ca + j) = vb(row, j);
          }
        }
        break;
      }
      case Op::kSoftmax: {
        const int r = va.rows(), c = va.cols();
        for (int row = 0; row < r; ++row) {
          const double* x = va.data.data() + static_cast<size_t>(row) * c;
          double* y = o.data.data() + static_cast<size_t>(row) * c;
          double mx = x[0];
          for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
          double z = 0.0;
          for (int j = 0; j < c; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
          }
          for (int j = 0; j < c; ++j) y[j] /= z;
        }
        break;
      }
      case Op::kLayerNorm: {
        const int r = va.rows(), c = va.cols();
        for (int row = 0; row < r; ++row) {
          const double* x = va.data.data() + static_cast<size_t>(row) * c;
          double* y = o.data.data() + static_cast<size_t>(row) * c;
          double mu = 0.0;
          for (int j = 0; j < c; ++j) mu += x[j];
          mu /= c;
          double var = 0.0;
          for (int j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
          var /= c;
          const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
          for (int j = 0; j < c; ++j) y[j] = (x[j] - mu) * inv;
        }
        break;
      }
      case Op::kGelu:
        for (size_t j = 0; j < o.numel(); ++j) o[j] = detail::gelu_fwd(va[j]);
        break;
      case Op::kExp:
        for (size_t j = 0; j < o.numel(); ++j) o[j] = std::exp(va[j]);
        break;
      case Op::kLog:
        for (size_t j = 0; j < o.numel(); ++j) o[j] = std::log(va[j]);
        break;
      case Op::kSum:
      case Op::kMean: {
        double acc = 0.0;
        for (size_t j = 0; j < va.numel(); ++j) acc += va[j];
        o[0] = nd.op == Op::kSum ? acc : acc / static_cast<double>(va.numel());
        break;
      }
      case Op::kScale:
        for (size_t j = 0; j < o.numel(); ++j) o[j] = va[j] * nd.d0;
        break;
      case Op::kReshape:
        std::copy(va.data.begin(), va.data.end(), o.data.begin());
        break;
      case Op::kSlice: {
        if (va.rank() == 1 || nd.i0 == 0) {
          const size_t c = va.rank() == 1 ? 1 : static_cast<size_t>(va.cols());
          std::copy(va.data.begin() + static_cast<long>(nd.i1 * c),
                    va.data.begin() + static_cast<long>((nd.i1 + nd.i2) * c), o.data.begin());
        } else {
          const int r = va.rows();
          for (int row = 0; row < r; ++row)
            for (int j = 0; j < nd.i2; ++j) o(row, j) = va(row, nd.i1 + j);
        }
        break;
      }
      case Op::kClamp:
        for (size_t j = 0; j < o.numel(); ++j) o[j] = std::min(std::max(va[j], nd.d0), nd.d1);
        break;
      case Op::kMinimum:
      case Op::kMaximum: {
        const Tensor& vb = value(nd.b);
        const bool take_min = nd.op == Op::kMinimum;
        for (size_t j = 0; j < o.numel(); ++j)
          o[j] = take_min ? std::min(va[j], vb[j]) : std::max(va[j], vb[j]);
        break;
      }
      default:
        throw Error("unhandled op in forward");
    }
  }

  // Adds g into grad slot of node id, optionally reducing a broadcast rhs.
  void accum_to(int id, const Tensor& g) {
    Tensor& dst = touch(id);
    if (dst.shape == g.shape) {
      for (size_t j = 0; j < g.numel(); ++j) dst[j] += g[j];
    } else if (dst.numel() == 1) {
      for (size_t j = 0; j < g.numel(); ++j) dst[0] += g[j];
    } else {
      const size_t ncol = dst.numel();
      for (size_t j = 0; j < g.numel(); ++j) dst[j % ncol] += g[j];
    }
  }

  void propagate(int i, const Node& nd) {
    const Tensor& go = grad_[static_cast<size_t>(i)];
    switch (nd.op) {
      case Op::kInput:
      case Op::kParam:
      case Op::kConst:
        return;
      case Op::kMatmul: {
        const Tensor& va = value(nd.a);
        const Tensor& vb = value(nd.b);
        const bool ta = nd.i0, tb = nd.i1;
        // d(effA) = gO x effB^T, d(effB) = effA^T x gO; untranspose into slots.
        if (!ta)
          detail::mm(touch(nd.a), go, vb, false, !tb, true);
        else {
          // effA = A^T, so dA = (d effA)^T = effB x gO^T
          Tensor tmp(g_->at(nd.a).shape);
          detail::mm(tmp, vb, go, tb, true, false);
          accum_to(nd.a, tmp);
        }
        if (!tb)
          detail::mm(touch(nd.b), va, go, !ta, false, true);
        else {
          Tensor tmp(g_->at(nd.b).shape);
          detail::mm(tmp, go, va, true, ta, false);
          accum_to(nd.b, tmp);
        }
        break;
      }
      case Op::kAdd:
        accum_to(nd.a, go);
        accum_to(nd.b, go);
        break;
      case Op::kMul: {
        const Tensor& va = value(nd.a);
        const Tensor& vb = value(nd.b);
        Tensor ga(va.shape);
        if (va.shape == vb.shape) {
          for (size_t j = 0; j < go.numel(); ++j) ga[j] = go[j] * vb[j];
        } else if (vb.numel() == 1) {
          for (size_t j = 0; j < go.numel(); ++j) ga[j] = go[j] * vb[0];
        } else {
          const size_t ncol = static_cast<size_t>(va.cols());
          for (size_t j = 0; j < go.numel(); ++j) ga[j] = go[j] * vb[j % ncol];
        }
        accum_to(nd.a, ga);
        Tensor gb_full(va.shape);
        for (size_t j = 0; j < go.numel(); ++j) gb_full[j] = go[j] * va[j];
        accum_to(nd.b, gb_full);
        break;
      }
      case Op::kConcat: {
        const Tensor& va = value(nd.a);
        const Tensor& vb = value(nd.b);
        Tensor ga(va.shape), gb(vb.shape);
        if (nd.i0 == 0 || va.rank() == 1) {
          std::copy(go.data.begin(), go.data.begin() + static_cast<long>(va.numel()),
                    ga.data.begin());
          std::copy(go.data.begin() + static_cast<long>(va.numel()), go.data.end(),
                    gb.data.begin());
        } else {
          const int r = va.rows(), ca = va.cols(), cb = vb.cols();
          for (int row = 0; row < r; ++row) {
            for (int j = 0; j < ca; ++j) ga(row, j) = go(row, j);
            for (int j = 0; j < cb; ++j) gb(row, j) = go(row, ca + j);
          }
        }
        accum_to(nd.a, ga);
        accum_to(nd.b, gb);
        break;
      }
      case Op::kSoftmax: {
        const Tensor& y = value(i);
        Tensor ga(y.shape);
        const int r = y.rows(), c = y.cols();
        for (int row = 0; row < r; ++row) {
          const double* yv = y.data.data() + static_cast<size_t>(row) * c;
          const double* gv = go.data.data() + static_cast<size_t>(row) * c;
          double dot = 0.0;
          for (int j = 0; j < c; ++j) dot += gv[j] * yv[j];
          double* out = ga.data.data() + static_cast<size_t>(row) * c;
          for (int j = 0; j < c; ++j) out[j] = yv[j] * (gv[j] - dot);
        }
        accum_to(nd.a, ga);
        break;
      }
      case Op::kLayerNorm: {
        const Tensor& x = value(nd.a);
        const Tensor& y = value(i);
        Tensor ga(x.shape);
        const int r = x.rows(), c = x.cols();
        for (int row = 0; row < r; ++row) {
          const double* xv = x.data.data() + static_cast<size_t>(row) * c;
          const double* yv = y.data.data() + static_cast<size_t>(row) * c;
          const double* gv = go.data.data() + static_cast<size_t>(row) * c;
          double mu = 0.0;
          for (int j = 0; j < c; ++j) mu += xv[j];
          mu /= c;
          double var = 0.0;
          for (int j = 0; j < c; ++j) var += (xv[j] - mu) * (xv[j] - mu);
          var /= c;
          const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
          double gmean = 0.0, gydot = 0.0;
          for (int j = 0; j < c; ++j) {
            gmean += gv[j];
            gydot += gv[j] * yv[j];
          }
          gmean /= c;
          gydot /= c;
          double* out = ga.data.data() + static_cast<size_t>(row) * c;
          for (int j = 0; j < c; ++j) out[j] = inv * (gv[j] - gmean - yv[j] * gydot);
        }
        accum_to(nd.a, ga);
        break;
      }
      case Op::kGelu: {
        const Tensor& x = value(nd.a);
        Tensor ga(x.shape);
        for (size_t j = 0; j < x.numel(); ++j) ga[j] = go[j] * detail::gelu_grad(x[j]);
        accum_to(nd.a, ga);
        break;
      }
      case Op::kExp: {
        const Tensor& y = value(i);
        Tensor ga(y.shape);
        for (size_t j = 0; j < y.numel(); ++j) ga[j] = go[j] * y[j];
        accum_to(nd.a, ga);
        break;
      }
      case Op::kLog: {
        const Tensor& x = value(nd.a);
        Tensor ga(x.shape);
        for (size_t j = 0; j < x.numel(); ++j) ga[j] = go[j] / x[j];
        accum_to(nd.a, ga);
        break;
      }
      case Op::kSum:
      case Op::kMean: {
        const Tensor& va = value(nd.a);
        Tensor ga(va.shape);
        const double s =
            nd.op == Op::kSum ? go[0] : go[0] / static_cast<double>(va.numel());
        for (size_t j = 0; j < ga.numel(); ++j) ga[j] = s;
        accum_to(nd.a, ga);
        break;
      }
      case Op::kScale: {
        Tensor ga(value(nd.a).shape);
        for (size_t j = 0; j < ga.numel(); ++j) ga[j] = go[j] * nd.d0;
        accum_to(nd.a, ga);
        break;
      }
      case Op::kReshape: {
        Tensor ga(value(nd.a).shape);
        std::copy(go.data.begin(), go.data.end(), ga.data.begin());
        accum_to(nd.a, ga);
        break;
      }
      case Op::kSlice: {
        const Tensor& va = value(nd.a);
        Tensor ga(va.shape);
        if (va.rank() == 1 || nd.i0 == 0) {
          const size_t c = va.rank() == 1 ? 1 : static_cast<size_t>(va.cols());
          std::copy(go.data.begin(), go.data.end(),
                    ga.data.begin() + static_cast<long>(nd.i1 * c));
        } else {
          const int r = va.rows();
          for (int row = 0; row < r; ++row)
            for (int j = 0; j < nd.i2; ++j) ga(row, nd.i1 + j) = go(row, j);
        }
        accum_to(nd.a, ga);
        break;
      }
      case Op::kClamp: {
        const Tensor& x = value(nd.a);
        Tensor ga(x.shape);
        for (size_t j = 0; j < x.numel(); ++j)
          ga[j] = (x[j] >= nd.d0 && x[j] <= nd.d1) ? go[j] : 0.0;
        accum_to(nd.a, ga);
        break;
      }
      case Op::kMinimum:
      case Op::kMaximum: {
        const Tensor& va = value(nd.a);
        const Tensor& vb = value(nd.b);
        Tensor ga(va.shape), gb(vb.shape);
        const bool take_min = nd.op == Op::kMinimum;
        for (size_t j = 0; j < va.numel(); ++j) {
          const bool first = take_min ? va[j] <= vb[j] : va[j] >= vb[j];
          (first ? ga[j] : gb[j]) = go[j];
        }
        accum_to(nd.a, ga);
        accum_to(nd.b, gb);
        break;
      }
      default:
        throw Error("unhandled op in backward");
    }
  }

  const Graph* g_;
  std::vector<Tensor> val_;
  std::vector<const Tensor*> ext_;
  std::vector<Tensor> grad_;
  std::map<std::string, Tensor> param_grads_;
  bool forward_done_ = false;
};

// One-shot helpers for the common build-eval-discard pattern.
inline Tensor eval_graph(const Graph& g, const Binding& binds, int out = -1) {
  Evaluation ev(g);
  ev.forward(binds);
  return ev.value(out < 0 ? g.size() - 1 : out);
}

inline std::map<std::string, Tensor> backward(const Graph& g, const Binding& binds, int out = -1) {
  Evaluation ev(g);
  ev.forward(binds);
  return ev.backward(out);
}

// Sinusoidal step embedding, laid out [sin..., cos...], d even. Frequencies
// run geometrically from 1 down to 1/10000 across the d/2 pairs.
inline Tensor sinusoidal_embed(int t, int d) {
  if (d <= 0 || d % 2 != 0) throw ValueError("sinusoidal_embed needs positive even d");
  const int half = d / 2;
  Tensor e({d});
  for (int k = 0; k < half; ++k) {
    const double expo = half == 1 ? 0.0 : static_cast<double>(k) / (half - 1);
    const double freq = std::pow(10000.0, -expo);
    e[static_cast<size_t>(k)] = std::sin(t * freq);
    e[static_cast<size_t>(half + k)] = std::cos(t * freq);
  }
  return e;
}

}  // namespace comanip::ad
