#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mtpp/errors.hpp"
#include "mtpp/params.hpp"
#include "mtpp/tensor.hpp"

namespace mtpp::ad {

// Stable scalar kernels shared by forward and backward passes.
inline double sigmoid_s(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_s(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double gelu_s(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

inline double gelu_grad_s(double x) {
  double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

inline constexpr double kErfGradCoef = 1.1283791670955126;  // 2/sqrt(pi)

// Handle into a Tape. Cheap to copy; invalid until assigned by a tape op.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense double tensors. One tape per computation;
// typical use builds a per-sequence loss graph, runs backward once per task,
// then the tape is reset or discarded. Adjoints accumulate into the
// ParamBlock::grad buffers of the bound parameter leaves.
class Tape {
  enum class Op : uint8_t {
    leaf, param,
    add, sub, mul, div,
    scale, shift, clamp,
    matvec, affine, concat, slice, row,
    sum, dot,
    exp_, log_, sqrt_, erf_,
    sigmoid, tanh_, relu, softplus, gelu,
    softmax, logsumexp,
  };

  struct Node {
    Op op;
    int p0 = -1, p1 = -1, p2 = -1;
    int aux0 = 0, aux1 = 0;   // slice/row offsets, concat pool segment
    double c0 = 0.0, c1 = 0.0;  // scalar payloads (scale factor, clamp bounds)
    Tensor val;
    Tensor adj;  // empty vector means untouched in the current backward pass
    ParamBlock* block = nullptr;
  };

 public:
  size_t size() const { return nodes_.size(); }

  void reset() {
    nodes_.clear();
    pool_.clear();
  }

  // The reference is invalidated by the next op on this tape; copy the
  // tensor when the graph keeps growing.
  const Tensor& val(Var v) const { return nodes_[check(v)].val; }

  double scalar(Var v) const {
    const Tensor& t = nodes_[check(v)].val;
    if (!t.is_scalar()) throw ShapeError("scalar() on " + t.shape_str());
    return t.v[0];
  }

  // ----- leaves -----

  Var leaf(Tensor t) { return push(Op::leaf, std::move(t)); }
  Var constant(double x) { return push(Op::leaf, Tensor::scalar(x)); }

  Var param(ParamBlock& b) {
    Var v = push(Op::param, b.value);
    nodes_[v.id].block = &b;
    return v;
  }

  // ----- elementwise binary (scalar operands broadcast) -----

  Var add(Var a, Var b) { return binary(Op::add, a, b); }
  Var sub(Var a, Var b) { return binary(Op::sub, a, b); }
  Var mul(Var a, Var b) { return binary(Op::mul, a, b); }
  Var div(Var a, Var b) { return binary(Op::div, a, b); }

  Var scale(Var x, double c) {
    Var v = unary(Op::scale, x, [c](double a) { return c * a; });
    nodes_[v.id].c0 = c;
    return v;
  }

  Var shift(Var x, double c) {
    Var v = unary(Op::shift, x, [c](double a) { return a + c; });
    nodes_[v.id].c0 = c;
    return v;
  }

  Var neg(Var x) { return scale(x, -1.0); }

  Var clamp(Var x, double lo, double hi) {
    Var v = unary(Op::clamp, x, [lo, hi](double a) {
      return a < lo ? lo : (a > hi ? hi : a);
    });
    nodes_[v.id].c0 = lo;
    nodes_[v.id].c1 = hi;
    return v;
  }

  // ----- linear algebra -----

  Var matvec(Var w, Var x) {
    const Tensor& W = nodes_[check(w)].val;
    const Tensor& X = nodes_[check(x)].val;
    if (!X.is_vector() || W.cols != X.rows) {
      throw ShapeError("matvec " + W.shape_str() + " * " + X.shape_str());
    }
    Tensor out(W.rows, 1);
    for (int i = 0; i < W.rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < W.cols; ++j) s += W(i, j) * X[j];
      out[i] = s;
    }
    Var v = push(Op::matvec, std::move(out));
    link(v, w, x);
    return v;
  }

  Var affine(Var w, Var x, Var b) {
    const Tensor& W = nodes_[check(w)].val;
    const Tensor& X = nodes_[check(x)].val;
    const Tensor& B = nodes_[check(b)].val;
    if (!X.is_vector() || W.cols != X.rows || !B.is_vector() || B.rows != W.rows) {
      throw ShapeError("affine " + W.shape_str() + " * " + X.shape_str() + " + " +
                       B.shape_str());
    }
    Tensor out(W.rows, 1);
    for (int i = 0; i < W.rows; ++i) {
      double s = B[i];
      for (int j = 0; j < W.cols; ++j) s += W(i, j) * X[j];
      out[i] = s;
    }
    Var v = push(Op::affine, std::move(out));
    link(v, w, x, b);
    return v;
  }

  Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat of zero parts");
    int n = 0;
    for (Var p : parts) {
      const Tensor& t = nodes_[check(p)].val;
      if (!t.is_vector()) throw ShapeError("concat expects vectors, got " + t.shape_str());
      n += t.rows;
    }
    Tensor out(n, 1);
    int at = 0;
    for (Var p : parts) {
      const Tensor& t = nodes_[p.id].val;
      for (int i = 0; i < t.rows; ++i) out[at++] = t[i];
    }
    Var v = push(Op::concat, std::move(out));
    nodes_[v.id].aux0 = static_cast<int>(pool_.size());
    nodes_[v.id].aux1 = static_cast<int>(parts.size());
    for (Var p : parts) pool_.push_back(p.id);
    return v;
  }

  Var slice(Var x, int start, int len) {
    const Tensor& t = nodes_[check(x)].val;
    if (!t.is_vector() || start < 0 || len <= 0 || start + len > t.rows) {
      throw ShapeError("slice [" + std::to_string(start) + "," +
                       std::to_string(start + len) + ") of " + t.shape_str());
    }
    Tensor out(len, 1);
    for (int i = 0; i < len; ++i) out[i] = t[start + i];
    Var v = push(Op::slice, std::move(out));
    link(v, x);
    nodes_[v.id].aux0 = start;
    nodes_[v.id].aux1 = len;
    return v;
  }

  // Row r of a matrix as a column vector (embedding lookup).
  Var row(Var m, int r) {
    const Tensor& M = nodes_[check(m)].val;
    if (r < 0 || r >= M.rows) {
      throw ShapeError("row " + std::to_string(r) + " of " + M.shape_str());
    }
    Tensor out(M.cols, 1);
    for (int j = 0; j < M.cols; ++j) out[j] = M(r, j);
    Var v = push(Op::row, std::move(out));
    link(v, m);
    nodes_[v.id].aux0 = r;
    return v;
  }

  // ----- reductions -----

  Var sum(Var x) {
    const Tensor& t = nodes_[check(x)].val;
    double s = 0.0;
    for (double a : t.v) s += a;
    Var v = push(Op::sum, Tensor::scalar(s));
    link(v, x);
    return v;
  }

  Var dot(Var a, Var b) {
    const Tensor& A = nodes_[check(a)].val;
    const Tensor& B = nodes_[check(b)].val;
    if (!A.same_shape(B)) {
      throw ShapeError("dot " + A.shape_str() + " . " + B.shape_str());
    }
    Var v = push(Op::dot, Tensor::scalar(ad::dot(A, B)));
    link(v, a, b);
    return v;
  }

  // ----- elementwise unary -----

  Var exp(Var x) { return unary(Op::exp_, x, [](double a) { return std::exp(a); }); }
  Var log(Var x) { return unary(Op::log_, x, [](double a) { return std::log(a); }); }
  Var sqrt(Var x) { return unary(Op::sqrt_, x, [](double a) { return std::sqrt(a); }); }
  Var erf(Var x) { return unary(Op::erf_, x, [](double a) { return std::erf(a); }); }
  Var sigmoid(Var x) { return unary(Op::sigmoid, x, sigmoid_s); }
  Var tanh(Var x) { return unary(Op::tanh_, x, [](double a) { return std::tanh(a); }); }
  Var relu(Var x) { return unary(Op::relu, x, [](double a) { return a > 0.0 ? a : 0.0; }); }
  Var softplus(Var x) { return unary(Op::softplus, x, softplus_s); }
  Var gelu(Var x) { return unary(Op::gelu, x, gelu_s); }

  // ----- softmax family (max-shifted) -----

  Var softmax(Var x) {
    const Tensor& t = nodes_[check(x)].val;
    if (!t.is_vector()) throw ShapeError("softmax on " + t.shape_str());
    Tensor out(t.rows, 1);
    double m = t[0];
    for (int i = 1; i < t.rows; ++i) m = std::max(m, t[i]);
    double z = 0.0;
    for (int i = 0; i < t.rows; ++i) {
      out[i] = std::exp(t[i] - m);
      z += out[i];
    }
    for (int i = 0; i < t.rows; ++i) out[i] /= z;
    Var v = push(Op::softmax, std::move(out));
    link(v, x);
    return v;
  }

  Var logsumexp(Var x) {
    const Tensor& t = nodes_[check(x)].val;
    if (!t.is_vector()) throw ShapeError("logsumexp on " + t.shape_str());
    double m = t[0];
    for (int i = 1; i < t.rows; ++i) m = std::max(m, t[i]);
    double z = 0.0;
    for (int i = 0; i < t.rows; ++i) z += std::exp(t[i] - m);
    Var v = push(Op::logsumexp, Tensor::scalar(m + std::log(z)));
    link(v, x);
    return v;
  }

  // ----- backward -----

  // Seeds d(root)/d(root) = seed and accumulates d(root)/d(block) into
  // ParamBlock::grad for every parameter leaf reachable from root. Node
  // adjoints are cleared first, so repeated calls on one tape are
  // independent backward passes over the same forward state.
  void backward(Var root, double seed = 1.0) {
    int r = check(root);
    if (!nodes_[r].val.is_scalar()) {
      throw ShapeError("backward from non-scalar " + nodes_[r].val.shape_str());
    }
    for (auto& n : nodes_) {
      n.adj.v.clear();
      n.adj.rows = n.adj.cols = 0;
    }
    ensure_adj(r);
    nodes_[r].adj.v[0] = seed;
    for (int i = r; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.adj.v.empty()) continue;
      step_back(n);
    }
  }

  void check_finite(Var v, const std::string& what) const {
    if (!nodes_[check(v)].val.all_finite()) {
      throw NumericError("non-finite " + what);
    }
  }

 private:
  std::vector<Node> nodes_;
  std::vector<int> pool_;  // parent id segments for concat

  int check(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
      throw Error("invalid tape handle");
    }
    return v.id;
  }

  Var push(Op op, Tensor val) {
    Node n;
    n.op = op;
    n.val = std::move(val);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void link(Var v, Var a, Var b = Var{}, Var c = Var{}) {
    nodes_[v.id].p0 = a.id;
    nodes_[v.id].p1 = b.id;
    nodes_[v.id].p2 = c.id;
  }

  template <typename F>
  Var unary(Op op, Var x, F f) {
    const Tensor& t = nodes_[check(x)].val;
    Tensor out(t.rows, t.cols);
    for (int i = 0; i < t.size(); ++i) out.v[i] = f(t.v[i]);
    Var v = push(op, std::move(out));
    link(v, x);
    return v;
  }

  Var binary(Op op, Var a, Var b) {
    const Tensor& A = nodes_[check(a)].val;
    const Tensor& B = nodes_[check(b)].val;
    const bool as = A.is_scalar(), bs = B.is_scalar();
    if (!as && !bs && !A.same_shape(B)) {
      throw ShapeError(std::string(op_name(op)) + " " + A.shape_str() + " vs " +
                       B.shape_str());
    }
    const Tensor& big = as ? B : A;
    Tensor out(big.rows, big.cols);
    for (int i = 0; i < out.size(); ++i) {
      double x = as ? A.v[0] : A.v[i];
      double y = bs ? B.v[0] : B.v[i];
      switch (op) {
        case Op::add: out.v[i] = x + y; break;
        case Op::sub: out.v[i] = x - y; break;
        case Op::mul: out.v[i] = x * y; break;
        case Op::div: out.v[i] = x / y; break;
        default: throw Error("bad binary op");
      }
    }
    Var v = push(op, std::move(out));
    link(v, a, b);
    return v;
  }

  static const char* op_name(Op op) {
    switch (op) {
      case Op::add: return "add";
      case Op::sub: return "sub";
      case Op::mul: return "mul";
      case Op::div: return "div";
      default: return "op";
    }
  }

  void ensure_adj(int i) {
    Node& n = nodes_[i];
    if (n.adj.v.empty()) {
      n.adj.rows = n.val.rows;
      n.adj.cols = n.val.cols;
      n.adj.v.assign(static_cast<size_t>(n.val.size()), 0.0);
    }
  }

  // Adds g (possibly reduced) into parent p's adjoint for a broadcastable
  // elementwise op where the parent may be scalar.
  void bump_broadcast(int p, const Tensor& g, const std::function<double(int)>& contrib) {
    ensure_adj(p);
    Node& pn = nodes_[p];
    if (pn.val.is_scalar() && g.size() > 1) {
      double s = 0.0;
      for (int i = 0; i < g.size(); ++i) s += contrib(i);
      pn.adj.v[0] += s;
    } else {
      for (int i = 0; i < g.size(); ++i) pn.adj.v[i] += contrib(i);
    }
  }

  void step_back(Node& n) {
    const Tensor& g = n.adj;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::param:
        for (int i = 0; i < g.size(); ++i) n.block->grad.v[i] += g.v[i];
        break;
      case Op::add: {
        bump_broadcast(n.p0, g, [&](int i) { return g.v[i]; });
        bump_broadcast(n.p1, g, [&](int i) { return g.v[i]; });
        break;
      }
      case Op::sub: {
        bump_broadcast(n.p0, g, [&](int i) { return g.v[i]; });
        bump_broadcast(n.p1, g, [&](int i) { return -g.v[i]; });
        break;
      }
      case Op::mul: {
        const Tensor& A = nodes_[n.p0].val;
        const Tensor& B = nodes_[n.p1].val;
        bool as = A.is_scalar(), bs = B.is_scalar();
        bump_broadcast(n.p0, g, [&](int i) { return g.v[i] * (bs ? B.v[0] : B.v[i]); });
        bump_broadcast(n.p1, g, [&](int i) { return g.v[i] * (as ? A.v[0] : A.v[i]); });
        break;
      }
      case Op::div: {
        const Tensor& A = nodes_[n.p0].val;
        const Tensor& B = nodes_[n.p1].val;
        bool as = A.is_scalar(), bs = B.is_scalar();
        bump_broadcast(n.p0, g, [&](int i) { return g.v[i] / (bs ? B.v[0] : B.v[i]); });
        bump_broadcast(n.p1, g, [&](int i) {
          double bb = bs ? B.v[0] : B.v[i];
          double aa = as ? A.v[0] : A.v[i];
          return -g.v[i] * aa / (bb * bb);
        });
        break;
      }
      case Op::scale: {
        ensure_adj(n.p0);
        for (int i = 0; i < g.size(); ++i) nodes_[n.p0].adj.v[i] += n.c0 * g.v[i];
        break;
      }
      case Op::shift: {
        ensure_adj(n.p0);
        for (int i = 0; i < g.size(); ++i) nodes_[n.p0].adj.v[i] += g.v[i];
        break;
      }
      case Op::clamp: {
        ensure_adj(n.p0);
        const Tensor& X = nodes_[n.p0].val;
        for (int i = 0; i < g.size(); ++i) {
          if (X.v[i] >= n.c0 && X.v[i] <= n.c1) nodes_[n.p0].adj.v[i] += g.v[i];
        }
        break;
      }
      case Op::matvec:
      case Op::affine: {
        ensure_adj(n.p0);
        ensure_adj(n.p1);
        Node& wn = nodes_[n.p0];
        Node& xn = nodes_[n.p1];
        const Tensor& W = wn.val;
        const Tensor& X = xn.val;
        for (int i = 0; i < W.rows; ++i) {
          double gi = g.v[i];
          if (gi == 0.0) continue;
          for (int j = 0; j < W.cols; ++j) {
            wn.adj.v[static_cast<size_t>(i) * W.cols + j] += gi * X.v[j];
            xn.adj.v[j] += gi * W.v[static_cast<size_t>(i) * W.cols + j];
          }
        }
        if (n.op == Op::affine) {
          ensure_adj(n.p2);
          for (int i = 0; i < g.size(); ++i) nodes_[n.p2].adj.v[i] += g.v[i];
        }
        break;
      }
      case Op::concat: {
        int at = 0;
        for (int k = 0; k < n.aux1; ++k) {
          int p = pool_[static_cast<size_t>(n.aux0) + k];
          ensure_adj(p);
          Node& pn = nodes_[p];
          for (int i = 0; i < pn.val.rows; ++i) pn.adj.v[i] += g.v[at++];
        }
        break;
      }
      case Op::slice: {
        ensure_adj(n.p0);
        for (int i = 0; i < n.aux1; ++i) nodes_[n.p0].adj.v[n.aux0 + i] += g.v[i];
        break;
      }
      case Op::row: {
        ensure_adj(n.p0);
        Node& mn = nodes_[n.p0];
        int c = mn.val.cols;
        for (int j = 0; j < c; ++j) {
          mn.adj.v[static_cast<size_t>(n.aux0) * c + j] += g.v[j];
        }
        break;
      }
      case Op::sum: {
        ensure_adj(n.p0);
        Node& pn = nodes_[n.p0];
        for (auto& a : pn.adj.v) a += g.v[0];
        break;
      }
      case Op::dot: {
        ensure_adj(n.p0);
        ensure_adj(n.p1);
        const Tensor& A = nodes_[n.p0].val;
        const Tensor& B = nodes_[n.p1].val;
        for (int i = 0; i < A.size(); ++i) {
          nodes_[n.p0].adj.v[i] += g.v[0] * B.v[i];
          nodes_[n.p1].adj.v[i] += g.v[0] * A.v[i];
        }
        break;
      }
      case Op::exp_: {
        ensure_adj(n.p0);
        for (int i = 0; i < g.size(); ++i) nodes_[n.p0].adj.v[i] += g.v[i] * n.val.v[i];
        break;
      }
      case Op::log_: {
        ensure_adj(n.p0);
        const Tensor& X = nodes_[n.p0].val;
        for (int i = 0; i < g.size(); ++i) nodes_[n.p0].adj.v[i] += g.v[i] / X.v[i];
        break;
      }
      case Op::sqrt_: {
        ensure_adj(n.p0);
        for (int i = 0; i < g.size(); ++i) {
          nodes_[n.p0].adj.v[i] += g.v[i] * 0.5 / n.val.v[i];
        }
        break;
      }
      case Op::erf_: {
        ensure_adj(n.p0);
        const Tensor& X = nodes_[n.p0].val;
        for (int i = 0; i < g.size(); ++i) {
          nodes_[n.p0].adj.v[i] += g.v[i] * kErfGradCoef * std::exp(-X.v[i] * X.v[i]);
        }
        break;
      }
      case Op::sigmoid: {
        ensure_adj(n.p0);
        for (int i = 0; i < g.size(); ++i) {
          double y = n.val.v[i];
          nodes_[n.p0].adj.v[i] += g.v[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::tanh_: {
        ensure_adj(n.p0);
        for (int i = 0; i < g.size(); ++i) {
          double y = n.val.v[i];
          nodes_[n.p0].adj.v[i] += g.v[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::relu: {
        ensure_adj(n.p0);
        const Tensor& X = nodes_[n.p0].val;
        for (int i = 0; i < g.size(); ++i) {
          if (X.v[i] > 0.0) nodes_[n.p0].adj.v[i] += g.v[i];
        }
        break;
      }
      case Op::softplus: {
        ensure_adj(n.p0);
        const Tensor& X = nodes_[n.p0].val;
        for (int i = 0; i < g.size(); ++i) {
          nodes_[n.p0].adj.v[i] += g.v[i] * sigmoid_s(X.v[i]);
        }
        break;
      }
      case Op::gelu: {
        ensure_adj(n.p0);
        const Tensor& X = nodes_[n.p0].val;
        for (int i = 0; i < g.size(); ++i) {
          nodes_[n.p0].adj.v[i] += g.v[i] * gelu_grad_s(X.v[i]);
        }
        break;
      }
      case Op::softmax: {
        ensure_adj(n.p0);
        const Tensor& Y = n.val;
        double gy = 0.0;
        for (int i = 0; i < g.size(); ++i) gy += g.v[i] * Y.v[i];
        for (int i = 0; i < g.size(); ++i) {
          nodes_[n.p0].adj.v[i] += Y.v[i] * (g.v[i] - gy);
        }
        break;
      }
      case Op::logsumexp: {
        ensure_adj(n.p0);
        const Tensor& X = nodes_[n.p0].val;
        double y = n.val.v[0];
        for (int i = 0; i < X.size(); ++i) {
          nodes_[n.p0].adj.v[i] += g.v[0] * std::exp(X.v[i] - y);
        }
        break;
      }
    }
  }
};

}  // namespace mtpp::ad
