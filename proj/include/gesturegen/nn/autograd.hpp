#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// A Graph records every operation applied to its variables. Calling
// backward() on a 1x1 result walks the tape in reverse and accumulates
// gradients into the nodes and into any bound Parameter. Graphs are cheap,
// single-use objects: build one per forward pass.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gesturegen::nn {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// Trainable tensor with its accumulated gradient and optimizer moments.
template <typename S>
struct Parameter {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;
  Matrix<S> m;
  Matrix<S> v;

  Parameter() = default;
  Parameter(std::string n, Matrix<S> init)
      : name(std::move(n)), value(std::move(init)) {
    zero_grad();
    m = Matrix<S>::Zero(value.rows(), value.cols());
    v = Matrix<S>::Zero(value.rows(), value.cols());
  }

  void zero_grad() { grad = Matrix<S>::Zero(value.rows(), value.cols()); }
  [[nodiscard]] Eigen::Index size() const { return value.size(); }
};

struct Var {
  int id = -1;
  [[nodiscard]] bool valid() const { return id >= 0; }
};

template <typename S>
class Graph {
 public:
  using Mat = Matrix<S>;

  explicit Graph(bool record = true) : record_(record) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  [[nodiscard]] bool recording() const { return record_; }

  const Mat& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  const Mat& grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).grad; }
  [[nodiscard]] Eigen::Index rows(Var v) const { return value(v).rows(); }
  [[nodiscard]] Eigen::Index cols(Var v) const { return value(v).cols(); }
  [[nodiscard]] S scalar(Var v) const { return value(v)(0, 0); }

  Var constant(Mat m) { return push(std::move(m), false); }

  /// Leaf that carries gradient but is not tied to a Parameter.
  Var input(Mat m) { return push(std::move(m), true); }

  Var param(Parameter<S>& p) {
    Var out = push(p.value, true);
    if (record_) {
      Parameter<S>* ptr = &p;
      node(out).backward = [this, out, ptr] { ptr->grad += node(out).grad; };
    }
    return out;
  }

  // ---- linear algebra ----------------------------------------------------

  Var matmul(Var a, Var b) {
    check(cols(a) == rows(b), "matmul: inner dimension mismatch");
    Var out = push(value(a) * value(b), any_grad(a, b));
    on_backward(out, [this, a, b, out] {
      const Mat& g = node(out).grad;
      if (wants(a)) accum_product(a, g * value(b).transpose());
      if (wants(b)) accum_product(b, value(a).transpose() * g);
    });
    return out;
  }

  /// a * b^T
  Var matmul_nt(Var a, Var b) {
    check(cols(a) == cols(b), "matmul_nt: width mismatch");
    Var out = push(value(a) * value(b).transpose(), any_grad(a, b));
    on_backward(out, [this, a, b, out] {
      const Mat& g = node(out).grad;
      if (wants(a)) accum_product(a, g * value(b));
      if (wants(b)) accum_product(b, g.transpose() * value(a));
    });
    return out;
  }

  Var transpose(Var a) {
    Var out = push(value(a).transpose(), any_grad(a));
    on_backward(out, [this, a, out] {
      if (wants(a)) accum(a, node(out).grad.transpose());
    });
    return out;
  }

  // ---- elementwise -------------------------------------------------------

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Var out = push(value(a) + value(b), any_grad(a, b));
    on_backward(out, [this, a, b, out] {
      if (wants(a)) accum(a, node(out).grad);
      if (wants(b)) accum(b, node(out).grad);
    });
    return out;
  }

  Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    Var out = push(value(a) - value(b), any_grad(a, b));
    on_backward(out, [this, a, b, out] {
      if (wants(a)) accum(a, node(out).grad);
      if (wants(b)) acc(b) -= node(out).grad;
    });
    return out;
  }

  Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Var out = push(value(a).cwiseProduct(value(b)), any_grad(a, b));
    on_backward(out, [this, a, b, out] {
      const Mat& g = node(out).grad;
      if (wants(a)) accum(a, g.cwiseProduct(value(b)));
      if (wants(b)) accum(b, g.cwiseProduct(value(a)));
    });
    return out;
  }

  Var scale(Var a, S s) {
    Var out = push(value(a) * s, any_grad(a));
    on_backward(out, [this, a, out, s] {
      if (wants(a)) accum(a, node(out).grad * s);
    });
    return out;
  }

  Var add_scalar(Var a, S s) {
    Var out = push((value(a).array() + s).matrix(), any_grad(a));
    on_backward(out, [this, a, out] {
      if (wants(a)) accum(a, node(out).grad);
    });
    return out;
  }

  /// Adds a 1xC row to every row of a.
  Var add_row(Var a, Var row) {
    check(rows(row) == 1 && cols(row) == cols(a), "add_row: shape mismatch");
    Mat v = value(a);
    v.rowwise() += value(row).row(0);
    Var out = push(std::move(v), any_grad(a, row));
    on_backward(out, [this, a, row, out] {
      const Mat& g = node(out).grad;
      if (wants(a)) accum(a, g);
      if (wants(row)) accum(row, g.colwise().sum());
    });
    return out;
  }

  /// Multiplies every row of a elementwise by a 1xC row.
  Var mul_row(Var a, Var row) {
    check(rows(row) == 1 && cols(row) == cols(a), "mul_row: shape mismatch");
    Mat v = value(a);
    v.array().rowwise() *= value(row).row(0).array();
    Var out = push(std::move(v), any_grad(a, row));
    on_backward(out, [this, a, row, out] {
      const Mat& g = node(out).grad;
      if (wants(a)) {
        Mat ga = g;
        ga.array().rowwise() *= value(row).row(0).array();
        accum(a, ga);
      }
      if (wants(row)) accum(row, g.cwiseProduct(value(a)).colwise().sum());
    });
    return out;
  }

  /// Scales row i of a by the constant weights[i].
  Var scale_rows(Var a, const std::vector<S>& weights) {
    check(static_cast<Eigen::Index>(weights.size()) == rows(a), "scale_rows: size mismatch");
    Mat v = value(a);
    for (Eigen::Index r = 0; r < v.rows(); ++r) v.row(r) *= weights[static_cast<std::size_t>(r)];
    Var out = push(std::move(v), any_grad(a));
    on_backward(out, [this, a, out, weights] {
      if (!wants(a)) return;
      Mat& ga = acc(a);
      const Mat& g = node(out).grad;
      for (Eigen::Index r = 0; r < g.rows(); ++r) ga.row(r) += g.row(r) * weights[static_cast<std::size_t>(r)];
    });
    return out;
  }

  Var square(Var a) {
    Var out = push(value(a).array().square().matrix(), any_grad(a));
    on_backward(out, [this, a, out] {
      if (wants(a)) accum(a, (node(out).grad.array() * value(a).array() * S(2)).matrix());
    });
    return out;
  }

  Var exp(Var a) {
    Var out = push(value(a).array().exp().matrix(), any_grad(a));
    on_backward(out, [this, a, out] {
      if (wants(a)) accum(a, node(out).grad.cwiseProduct(value(out)));
    });
    return out;
  }

  Var tanh(Var a) {
    Var out = push(value(a).array().tanh().matrix(), any_grad(a));
    on_backward(out, [this, a, out] {
      if (wants(a)) {
        accum(a, (node(out).grad.array() * (S(1) - value(out).array().square())).matrix());
      }
    });
    return out;
  }

  /// Exact (erf-based) GELU.
  Var gelu(Var a) {
    const S inv_sqrt2 = S(1) / std::sqrt(S(2));
    Mat v = value(a).unaryExpr([inv_sqrt2](S x) { return S(0.5) * x * (S(1) + std::erf(x * inv_sqrt2)); });
    Var out = push(std::move(v), any_grad(a));
    on_backward(out, [this, a, out, inv_sqrt2] {
      if (!wants(a)) return;
      const S inv_sqrt_2pi = S(1) / std::sqrt(S(2) * std::numbers::pi_v<S>);
      Mat d = value(a).unaryExpr([=](S x) {
        return S(0.5) * (S(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(S(-0.5) * x * x);
      });
      accum(a, node(out).grad.cwiseProduct(d));
    });
    return out;
  }

  Var leaky_relu(Var a, S slope = S(0.2)) {
    Mat v = value(a).unaryExpr([slope](S x) { return x > S(0) ? x : slope * x; });
    Var out = push(std::move(v), any_grad(a));
    on_backward(out, [this, a, out, slope] {
      if (!wants(a)) return;
      Mat d = value(a).unaryExpr([slope](S x) { return x > S(0) ? S(1) : slope; });
      accum(a, node(out).grad.cwiseProduct(d));
    });
    return out;
  }

  // ---- row-wise normalizers ----------------------------------------------

  /// Layer normalization over each row followed by affine gamma/beta (1xC).
  Var layer_norm(Var a, Var gamma, Var beta, S eps = S(1e-5)) {
    const Eigen::Index n = rows(a);
    const Eigen::Index c = cols(a);
    Mat xhat(n, c);
    std::vector<S> inv_std(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto row = value(a).row(r);
      const S mean = row.mean();
      const S var = (row.array() - mean).square().mean();
      const S is = S(1) / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(r)] = is;
      xhat.row(r) = (row.array() - mean) * is;
    }
    Mat y = xhat;
    y.array().rowwise() *= value(gamma).row(0).array();
    y.rowwise() += value(beta).row(0);
    Var out = push(std::move(y), any_grad(a, gamma, beta));
    on_backward(out, [this, a, gamma, beta, out, xhat, inv_std, c] {
      const Mat& g = node(out).grad;
      if (wants(gamma)) accum(gamma, g.cwiseProduct(xhat).colwise().sum());
      if (wants(beta)) accum(beta, g.colwise().sum());
      if (!wants(a)) return;
      Mat& ga = acc(a);
      const auto gam = value(gamma).row(0).array();
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const RowVector<S> dxhat = (g.row(r).array() * gam).matrix();
        const S m1 = dxhat.mean();
        const S m2 = dxhat.cwiseProduct(xhat.row(r)).sum() / S(c);
        ga.row(r) += ((dxhat.array() - m1 - xhat.row(r).array() * m2) * inv_std[static_cast<std::size_t>(r)]).matrix();
      }
    });
    return out;
  }

  Var softmax_rows(Var a) {
    Mat y = value(a);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const S mx = y.row(r).maxCoeff();
      y.row(r) = (y.row(r).array() - mx).exp();
      y.row(r) /= y.row(r).sum();
    }
    Var out = push(std::move(y), any_grad(a));
    on_backward(out, [this, a, out] {
      if (!wants(a)) return;
      const Mat& g = node(out).grad;
      const Mat& y = value(out);
      Mat& ga = acc(a);
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const S dot = g.row(r).dot(y.row(r));
        ga.row(r) += (y.row(r).array() * (g.row(r).array() - dot)).matrix();
      }
    });
    return out;
  }

  /// Scales each row to unit Euclidean norm.
  Var l2_normalize_rows(Var a, S eps = S(1e-8)) {
    Mat y = value(a);
    std::vector<S> norms(static_cast<std::size_t>(y.rows()));
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const S nrm = std::max(y.row(r).norm(), eps);
      norms[static_cast<std::size_t>(r)] = nrm;
      y.row(r) /= nrm;
    }
    Var out = push(std::move(y), any_grad(a));
    on_backward(out, [this, a, out, norms] {
      if (!wants(a)) return;
      const Mat& g = node(out).grad;
      const Mat& y = value(out);
      Mat& ga = acc(a);
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const S dot = g.row(r).dot(y.row(r));
        ga.row(r) += (g.row(r) - y.row(r) * dot) / norms[static_cast<std::size_t>(r)];
      }
    });
    return out;
  }

  /// Mean cross-entropy of row-wise softmax(logits) against target class per row.
  Var cross_entropy_rows(Var logits, const std::vector<int>& targets) {
    check(static_cast<Eigen::Index>(targets.size()) == rows(logits), "cross_entropy_rows: size mismatch");
    const Mat& z = value(logits);
    Mat probs(z.rows(), z.cols());
    S total = 0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const S mx = z.row(r).maxCoeff();
      probs.row(r) = (z.row(r).array() - mx).exp();
      const S sum = probs.row(r).sum();
      probs.row(r) /= sum;
      total += -(z(r, targets[static_cast<std::size_t>(r)]) - mx - std::log(sum));
    }
    const S n = S(z.rows());
    Mat v(1, 1);
    v(0, 0) = total / n;
    Var out = push(std::move(v), any_grad(logits));
    on_backward(out, [this, logits, out, probs, targets, n] {
      if (!wants(logits)) return;
      Mat d = probs;
      for (Eigen::Index r = 0; r < d.rows(); ++r) d(r, targets[static_cast<std::size_t>(r)]) -= S(1);
      accum(logits, d * (node(out).grad(0, 0) / n));
    });
    return out;
  }

  // ---- reductions --------------------------------------------------------

  Var sum(Var a) {
    Mat v(1, 1);
    v(0, 0) = value(a).sum();
    Var out = push(std::move(v), any_grad(a));
    on_backward(out, [this, a, out] {
      if (wants(a)) acc(a).array() += node(out).grad(0, 0);
    });
    return out;
  }

  Var mean(Var a) { return scale(sum(a), S(1) / S(value(a).size())); }

  /// 1xC column means.
  Var mean_rows(Var a) {
    const S n = S(rows(a));
    Var out = push(value(a).colwise().mean(), any_grad(a));
    on_backward(out, [this, a, out, n] {
      if (!wants(a)) return;
      acc(a).rowwise() += node(out).grad.row(0) / n;
    });
    return out;
  }

  // ---- structural --------------------------------------------------------

  Var concat_rows(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_rows: empty");
    const Eigen::Index c = cols(parts.front());
    Eigen::Index total = 0;
    for (Var p : parts) {
      check(cols(p) == c, "concat_rows: width mismatch");
      total += rows(p);
    }
    Mat v(total, c);
    Eigen::Index r = 0;
    bool g = false;
    for (Var p : parts) {
      v.middleRows(r, rows(p)) = value(p);
      r += rows(p);
      g = g || node(p).needs_grad;
    }
    Var out = push(std::move(v), g);
    on_backward(out, [this, parts, out] {
      Eigen::Index r0 = 0;
      for (Var p : parts) {
        if (wants(p)) accum(p, node(out).grad.middleRows(r0, rows(p)));
        r0 += rows(p);
      }
    });
    return out;
  }

  Var concat_cols(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_cols: empty");
    const Eigen::Index n = rows(parts.front());
    Eigen::Index total = 0;
    for (Var p : parts) {
      check(rows(p) == n, "concat_cols: height mismatch");
      total += cols(p);
    }
    Mat v(n, total);
    Eigen::Index c = 0;
    bool g = false;
    for (Var p : parts) {
      v.middleCols(c, cols(p)) = value(p);
      c += cols(p);
      g = g || node(p).needs_grad;
    }
    Var out = push(std::move(v), g);
    on_backward(out, [this, parts, out] {
      Eigen::Index c0 = 0;
      for (Var p : parts) {
        if (wants(p)) accum(p, node(out).grad.middleCols(c0, cols(p)));
        c0 += cols(p);
      }
    });
    return out;
  }

  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
    check(start >= 0 && count >= 0 && start + count <= rows(a), "slice_rows: out of range");
    Var out = push(value(a).middleRows(start, count), any_grad(a));
    on_backward(out, [this, a, out, start, count] {
      if (wants(a)) acc(a).middleRows(start, count) += node(out).grad;
    });
    return out;
  }

  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    check(start >= 0 && count >= 0 && start + count <= cols(a), "slice_cols: out of range");
    Var out = push(value(a).middleCols(start, count), any_grad(a));
    on_backward(out, [this, a, out, start, count] {
      if (wants(a)) acc(a).middleCols(start, count) += node(out).grad;
    });
    return out;
  }

  /// Repeats a 1xC row n times.
  Var broadcast_rows(Var row, Eigen::Index n) {
    check(rows(row) == 1, "broadcast_rows: expects a single row");
    Var out = push(value(row).replicate(n, 1), any_grad(row));
    on_backward(out, [this, row, out] {
      if (wants(row)) accum(row, node(out).grad.colwise().sum());
    });
    return out;
  }

  /// Stacks `kernel` shifted copies of the rows of a side by side (1D im2col).
  /// Output row t holds input rows stride*t - pad + k for k in [0, kernel),
  /// zero outside the input.
  Var unfold_rows(Var a, int kernel, int stride, int pad) {
    const Eigen::Index n = rows(a);
    const Eigen::Index c = cols(a);
    const Eigen::Index out_len = (n + 2 * pad - kernel) / stride + 1;
    check(out_len >= 1, "unfold_rows: input shorter than kernel");
    Mat v = Mat::Zero(out_len, c * kernel);
    for (Eigen::Index t = 0; t < out_len; ++t) {
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index src = t * stride - pad + k;
        if (src >= 0 && src < n) v.block(t, k * c, 1, c) = value(a).row(src);
      }
    }
    Var out = push(std::move(v), any_grad(a));
    on_backward(out, [this, a, out, kernel, stride, pad, n, c, out_len] {
      if (!wants(a)) return;
      Mat& ga = acc(a);
      const Mat& g = node(out).grad;
      for (Eigen::Index t = 0; t < out_len; ++t) {
        for (int k = 0; k < kernel; ++k) {
          const Eigen::Index src = t * stride - pad + k;
          if (src >= 0 && src < n) ga.row(src) += g.block(t, k * c, 1, c);
        }
      }
    });
    return out;
  }

  /// Nearest-neighbour temporal upsampling by an integer factor.
  Var repeat_rows(Var a, int factor) {
    const Eigen::Index n = rows(a);
    Mat v(n * factor, cols(a));
    for (Eigen::Index r = 0; r < n; ++r)
      for (int k = 0; k < factor; ++k) v.row(r * factor + k) = value(a).row(r);
    Var out = push(std::move(v), any_grad(a));
    on_backward(out, [this, a, out, factor, n] {
      if (!wants(a)) return;
      Mat& ga = acc(a);
      const Mat& g = node(out).grad;
      for (Eigen::Index r = 0; r < n; ++r)
        for (int k = 0; k < factor; ++k) ga.row(r) += g.row(r * factor + k);
    });
    return out;
  }

  // ---- driver ------------------------------------------------------------

  void backward(Var root) {
    check(record_, "backward: graph was built without recording");
    check(value(root).size() == 1, "backward: root must be a scalar");
    acc(root).setConstant(S(1));
    for (auto i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward && n.grad.size() > 0) n.backward();
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  static void check(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  }
  void check_same(Var a, Var b, const char* what) const {
    if (rows(a) != rows(b) || cols(a) != cols(b)) {
      throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
  }

  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }

  bool any_grad(Var a) const { return record_ && node(a).needs_grad; }
  bool any_grad(Var a, Var b) const { return any_grad(a) || any_grad(b); }
  bool any_grad(Var a, Var b, Var c) const { return any_grad(a) || any_grad(b) || any_grad(c); }
  bool wants(Var v) const { return node(v).needs_grad; }

  Mat& acc(Var v) {
    Node& n = node(v);
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  template <typename E>
  void accum(Var v, const E& e) {
    Node& n = node(v);
    if (n.grad.size() == 0) {
      n.grad = e;
    } else {
      n.grad += e;
    }
  }

  template <typename E>
  void accum_product(Var v, const E& e) {
    Node& n = node(v);
    if (n.grad.size() == 0) {
      n.grad.noalias() = e;
    } else {
      n.grad.noalias() += e;
    }
  }

  Var push(Mat value, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), Mat{}, record_ && needs_grad, {}});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  template <typename F>
  void on_backward(Var out, F&& f) {
    if (record_ && node(out).needs_grad) node(out).backward = std::forward<F>(f);
  }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace gesturegen::nn
