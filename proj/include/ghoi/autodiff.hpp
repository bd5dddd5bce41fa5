#pragma once

#include "ghoi/geometry.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

namespace ghoi::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Var {
  int id = -1;
};

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order, so a single reverse sweep visits every consumer before its inputs.
class Tape {
 public:
  Var constant(Matrix v) { return push(std::move(v), false, {}); }
  Var variable(Matrix v) { return push(std::move(v), true, {}); }

  const Matrix& value(Var v) const { return nodes_[at(v)].value; }

  /// Gradient accumulated by the last backward(); zeros if v was not reached.
  Matrix grad(Var v) const {
    const auto& n = nodes_[at(v)];
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(Var out, const Matrix& seed) {
    const auto& o = nodes_[at(out)];
    if (seed.rows() != o.value.rows() || seed.cols() != o.value.cols()) throw Error("backward seed shape mismatch");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[at(out)].grad = seed;
    for (int i = out.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.needs_grad && n.back && n.grad.size() != 0) n.back();
    }
  }

  void backward(Var scalar) { backward(scalar, Matrix::Ones(1, 1)); }

  // ---- ops ----

  Var matmul(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols() != B.rows()) throw Error("matmul shape mismatch");
    Matrix out = A * B;
    return op(std::move(out), {a, b}, [this, a, b](const Matrix& g) {
      if (needs(a)) accumulate(a, g * value(b).transpose());
      if (needs(b)) accumulate(b, value(a).transpose() * g);
    });
  }

  /// a * b^T
  Var matmul_nt(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols() != B.cols()) throw Error("matmul_nt shape mismatch");
    Matrix out = A * B.transpose();
    return op(std::move(out), {a, b}, [this, a, b](const Matrix& g) {
      if (needs(a)) accumulate(a, g * value(b));
      if (needs(b)) accumulate(b, g.transpose() * value(a));
    });
  }

  Var add(Var a, Var b) {
    same_shape(a, b, "add");
    Matrix out = value(a) + value(b);
    return op(std::move(out), {a, b}, [this, a, b](const Matrix& g) {
      if (needs(a)) accumulate(a, g);
      if (needs(b)) accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    same_shape(a, b, "sub");
    Matrix out = value(a) - value(b);
    return op(std::move(out), {a, b}, [this, a, b](const Matrix& g) {
      if (needs(a)) accumulate(a, g);
      if (needs(b)) accumulate(b, -g);
    });
  }

  Var mul(Var a, Var b) {
    same_shape(a, b, "mul");
    Matrix out = value(a).cwiseProduct(value(b));
    return op(std::move(out), {a, b}, [this, a, b](const Matrix& g) {
      if (needs(a)) accumulate(a, g.cwiseProduct(value(b)));
      if (needs(b)) accumulate(b, g.cwiseProduct(value(a)));
    });
  }

  /// Adds a 1 x n row to every row of a.
  Var add_row(Var a, Var row) {
    const Matrix& A = value(a);
    const Matrix& R = value(row);
    if (R.rows() != 1 || R.cols() != A.cols()) throw Error("add_row shape mismatch");
    Matrix out = A.rowwise() + R.row(0);
    return op(std::move(out), {a, row}, [this, a, row](const Matrix& g) {
      if (needs(a)) accumulate(a, g);
      if (needs(row)) accumulate(row, g.colwise().sum());
    });
  }

  Var scale(Var a, double s) {
    Matrix out = value(a) * s;
    return op(std::move(out), {a}, [this, a, s](const Matrix& g) { accumulate(a, g * s); });
  }

  /// Exact GELU, x * Phi(x).
  Var gelu(Var a) {
    const Matrix& x = value(a);
    Matrix out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); });
    return op(std::move(out), {a}, [this, a](const Matrix& g) {
      const Matrix d = value(a).unaryExpr([](double v) {
        const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
        return cdf + v * pdf;
      });
      accumulate(a, g.cwiseProduct(d));
    });
  }

  Var softmax_rows(Var a) {
    Matrix y = value(a);
    for (Index r = 0; r < y.rows(); ++r) {
      const double m = y.row(r).maxCoeff();
      y.row(r) = (y.row(r).array() - m).exp().matrix();
      y.row(r) /= y.row(r).sum();
    }
    const int out_id = static_cast<int>(nodes_.size());
    return op(std::move(y), {a}, [this, a, out_id](const Matrix& g) {
      const Matrix& s = nodes_[static_cast<std::size_t>(out_id)].value;
      const Eigen::VectorXd dots = g.cwiseProduct(s).rowwise().sum();
      accumulate(a, s.cwiseProduct(g.colwise() - dots));
    });
  }

  /// Row-wise normalization with a learned 1 x n gain and bias.
  Var layer_norm_rows(Var a, Var gain, Var bias, double eps = 1e-5) {
    const Matrix& x = value(a);
    const Index n = x.cols();
    if (value(gain).rows() != 1 || value(gain).cols() != n || value(bias).rows() != 1 || value(bias).cols() != n)
      throw Error("layer_norm shape mismatch");
    Matrix xhat(x.rows(), n);
    Eigen::VectorXd inv_std(x.rows());
    for (Index r = 0; r < x.rows(); ++r) {
      const double mu = x.row(r).mean();
      const double var = (x.row(r).array() - mu).square().mean();
      inv_std[r] = 1.0 / std::sqrt(var + eps);
      xhat.row(r) = (x.row(r).array() - mu) * inv_std[r];
    }
    Matrix out = (xhat.array().rowwise() * value(gain).row(0).array()).matrix();
    out.rowwise() += value(bias).row(0);
    return op(std::move(out), {a, gain, bias},
              [this, a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), n](const Matrix& g) {
                if (needs(gain)) accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
                if (needs(bias)) accumulate(bias, g.colwise().sum());
                if (!needs(a)) return;
                const Matrix dx = (g.array().rowwise() * value(gain).row(0).array()).matrix();
                Matrix out(dx.rows(), n);
                for (Index r = 0; r < dx.rows(); ++r) {
                  const double m1 = dx.row(r).mean();
                  const double m2 = dx.row(r).dot(xhat.row(r)) / static_cast<double>(n);
                  out.row(r) = inv_std[r] * (dx.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
                }
                accumulate(a, out);
              });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error("concat of nothing");
    const Index rows = value(parts[0]).rows();
    Index cols = 0;
    for (auto p : parts) {
      if (value(p).rows() != rows) throw Error("concat_cols row mismatch");
      cols += value(p).cols();
    }
    Matrix out(rows, cols);
    Index c = 0;
    for (auto p : parts) {
      out.middleCols(c, value(p).cols()) = value(p);
      c += value(p).cols();
    }
    return op(std::move(out), parts, [this, parts](const Matrix& g) {
      Index c0 = 0;
      for (auto p : parts) {
        const Index w = value(p).cols();
        if (needs(p)) accumulate(p, g.middleCols(c0, w));
        c0 += w;
      }
    });
  }

  Var cols(Var a, Index start, Index count) {
    const Matrix& A = value(a);
    if (start < 0 || start + count > A.cols()) throw Error("column slice out of range");
    Matrix out = A.middleCols(start, count);
    return op(std::move(out), {a}, [this, a, start, count](const Matrix& g) {
      Matrix full = Matrix::Zero(value(a).rows(), value(a).cols());
      full.middleCols(start, count) = g;
      accumulate(a, full);
    });
  }

  /// Scalar sum(a .* w) for a constant weight matrix.
  Var dot(Var a, const Matrix& w) {
    const Matrix& A = value(a);
    if (A.rows() != w.rows() || A.cols() != w.cols()) throw Error("dot shape mismatch");
    Matrix out(1, 1);
    out(0, 0) = A.cwiseProduct(w).sum();
    return op(std::move(out), {a}, [this, a, w](const Matrix& g) { accumulate(a, w * g(0, 0)); });
  }

  /// Scalar mean of squared entries of (a - target) for a constant target.
  Var mse(Var a, const Matrix& target) {
    const Matrix& A = value(a);
    if (A.rows() != target.rows() || A.cols() != target.cols()) throw Error("mse shape mismatch");
    const double n = static_cast<double>(A.size());
    Matrix out(1, 1);
    out(0, 0) = (A - target).squaredNorm() / n;
    return op(std::move(out), {a}, [this, a, target, n](const Matrix& g) {
      accumulate(a, (value(a) - target) * (2.0 * g(0, 0) / n));
    });
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;

  std::size_t at(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw Error("invalid tape variable");
    return static_cast<std::size_t>(v.id);
  }

  bool needs(Var v) const { return nodes_[at(v)].needs_grad; }

  void same_shape(Var a, Var b, const char* what) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw Error(std::string(what) + " shape mismatch");
  }

  void accumulate(Var v, const Matrix& g) {
    auto& n = nodes_[at(v)];
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  Var push(Matrix v, bool needs_grad, std::function<void()> back) {
    nodes_.push_back({std::move(v), Matrix(), needs_grad, std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  template <class F>
  Var op(Matrix out, const std::vector<Var>& inputs, F&& back) {
    bool any = false;
    for (auto v : inputs) any = any || needs(v);
    if (!any) return push(std::move(out), false, {});
    const int id = static_cast<int>(nodes_.size());
    return push(std::move(out), true, [this, id, back = std::forward<F>(back)]() {
      back(nodes_[static_cast<std::size_t>(id)].grad);
    });
  }
};

}  // namespace ghoi::ad
