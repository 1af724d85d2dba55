#pragma once

#include "fusemotion/common.hpp"

#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

namespace fusemotion {

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}

  void zero_grad() {
    grad.setZero(value.rows(), value.cols());
  }
};

namespace ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  Eigen::Index rows() const {
    return value().rows();
  }
  Eigen::Index cols() const {
    return value().cols();
  }
  double scalar() const {
    return value()(0, 0);
  }
  Tape* tape() const {
    return tape_;
  }
  int id() const {
    return id_;
  }
  bool valid() const {
    return tape_ != nullptr;
  }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records a computation as matrix-valued nodes and replays it in reverse.
/// Nodes live in a deque so references stay valid while the tape grows.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat& grad_out)>;

  Var constant(Mat value) {
    return push(std::move(value), false, nullptr, nullptr);
  }

  Var variable(Mat value) {
    return push(std::move(value), true, nullptr, nullptr);
  }

  Var parameter(Parameter& p) {
    return push(p.value, true, nullptr, &p);
  }

  /// Adds a node computed from `inputs`; `backward` receives dL/d(output)
  /// and must call accumulate() for the inputs it differentiates.
  Var record(Mat value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& v : inputs) {
      needs = needs || nodes_[static_cast<size_t>(v.id())].needs_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{}, nullptr);
  }

  Var record(Mat value, const std::vector<Var>& inputs, Backward backward) {
    bool needs = false;
    for (const Var& v : inputs) {
      needs = needs || nodes_[static_cast<size_t>(v.id())].needs_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{}, nullptr);
  }

  bool needs_grad(const Var& v) const {
    return nodes_[static_cast<size_t>(v.id())].needs_grad;
  }

  const Mat& value(int id) const {
    return nodes_[static_cast<size_t>(id)].value;
  }

  void accumulate(const Var& v, const Mat& g) {
    Node& n = nodes_[static_cast<size_t>(v.id())];
    if (!n.needs_grad) {
      return;
    }
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Gradient of a previous backward() pass w.r.t. `v` (zeros if unreached).
  Mat grad(const Var& v) const {
    const Node& n = nodes_[static_cast<size_t>(v.id())];
    if (n.grad.size() == 0) {
      return Mat::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }

  /// Back-propagates from `root` seeded with `seed` (defaults to 1 for scalars).
  /// Parameter leaves add their gradient into Parameter::grad.
  void backward(const Var& root, const Mat& seed) {
    Node& r = nodes_[static_cast<size_t>(root.id())];
    FUSEMOTION_CHECK(
        seed.rows() == r.value.rows() && seed.cols() == r.value.cols(), ShapeError, "backward seed shape mismatch");
    r.grad = seed;
    for (int id = root.id(); id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.needs_grad || n.grad.size() == 0) {
        continue;
      }
      if (n.backward) {
        n.backward(*this, n.grad);
      }
      if (n.param != nullptr) {
        n.param->grad += n.grad;
      }
    }
  }

  void backward(const Var& root) {
    FUSEMOTION_CHECK(root.rows() == 1 && root.cols() == 1, ShapeError, "backward() without seed needs a scalar");
    backward(root, Mat::Constant(1, 1, 1.0));
  }

  size_t size() const {
    return nodes_.size();
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Mat value, bool needs_grad, Backward backward, Parameter* param) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backward = std::move(backward);
    n.param = param;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  std::deque<Node> nodes_;
};

inline const Mat& Var::value() const {
  return tape_->value(id_);
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
  FUSEMOTION_CHECK(a.cols() == b.rows(), ShapeError, "matmul: inner dimensions differ");
  Tape& t = *a.tape();
  return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& tape, const Mat& g) {
    if (tape.needs_grad(a)) {
      tape.accumulate(a, g * b.value().transpose());
    }
    if (tape.needs_grad(b)) {
      tape.accumulate(b, a.value().transpose() * g);
    }
  });
}

inline Var transpose(const Var& a) {
  return a.tape()->record(a.value().transpose(), {a}, [a](Tape& tape, const Mat& g) {
    tape.accumulate(a, g.transpose());
  });
}

inline Var add(const Var& a, const Var& b) {
  FUSEMOTION_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), ShapeError, "add: shape mismatch");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& tape, const Mat& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  FUSEMOTION_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), ShapeError, "sub: shape mismatch");
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& tape, const Mat& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, -g);
  });
}

/// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  FUSEMOTION_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), ShapeError, "mul: shape mismatch");
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& tape, const Mat& g) {
    if (tape.needs_grad(a)) {
      tape.accumulate(a, g.cwiseProduct(b.value()));
    }
    if (tape.needs_grad(b)) {
      tape.accumulate(b, g.cwiseProduct(a.value()));
    }
  });
}

/// Elementwise quotient; zero gradient where the denominator is zero.
inline Var div(const Var& a, const Var& b) {
  FUSEMOTION_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), ShapeError, "div: shape mismatch");
  Mat out = a.value().binaryExpr(b.value(), [](double x, double y) { return y == 0.0 ? 0.0 : x / y; });
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tape, const Mat& g) {
    const Mat inv = b.value().unaryExpr([](double y) { return y == 0.0 ? 0.0 : 1.0 / y; });
    if (tape.needs_grad(a)) {
      tape.accumulate(a, g.cwiseProduct(inv));
    }
    if (tape.needs_grad(b)) {
      tape.accumulate(b, -g.cwiseProduct(a.value()).cwiseProduct(inv).cwiseProduct(inv));
    }
  });
}

inline Var scale(const Var& a, double s) {
  return a.tape()->record(a.value() * s, {a}, [a, s](Tape& tape, const Mat& g) {
    tape.accumulate(a, g * s);
  });
}

inline Var add_scalar(const Var& a, double s) {
  return a.tape()->record(a.value().array() + s, {a}, [a](Tape& tape, const Mat& g) {
    tape.accumulate(a, g);
  });
}

/// a (R x C) + row (1 x C) broadcast over rows.
inline Var add_row(const Var& a, const Var& row) {
  FUSEMOTION_CHECK(row.rows() == 1 && row.cols() == a.cols(), ShapeError, "add_row: row shape mismatch");
  Mat out = a.value().rowwise() + row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& tape, const Mat& g) {
    tape.accumulate(a, g);
    if (tape.needs_grad(row)) {
      tape.accumulate(row, g.colwise().sum());
    }
  });
}

/// a (R x C) * row (1 x C) broadcast over rows.
inline Var mul_row(const Var& a, const Var& row) {
  FUSEMOTION_CHECK(row.rows() == 1 && row.cols() == a.cols(), ShapeError, "mul_row: row shape mismatch");
  Mat out = a.value().array().rowwise() * row.value().row(0).array();
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& tape, const Mat& g) {
    if (tape.needs_grad(a)) {
      tape.accumulate(a, (g.array().rowwise() * row.value().row(0).array()).matrix());
    }
    if (tape.needs_grad(row)) {
      tape.accumulate(row, g.cwiseProduct(a.value()).colwise().sum());
    }
  });
}

/// Repeats a 1 x C row `n` times.
inline Var broadcast_rows(const Var& row, Eigen::Index n) {
  FUSEMOTION_CHECK(row.rows() == 1, ShapeError, "broadcast_rows expects a single row");
  Mat out = row.value().replicate(n, 1);
  return row.tape()->record(std::move(out), {row}, [row](Tape& tape, const Mat& g) {
    tape.accumulate(row, g.colwise().sum());
  });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

namespace detail {
template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
  Mat out = a.value().unaryExpr(f);
  return a.tape()->record(std::move(out), {a}, [a, df](Tape& tape, const Mat& g) {
    tape.accumulate(a, g.cwiseProduct(a.value().unaryExpr(df)));
  });
}
} // namespace detail

inline Var relu(const Var& a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var tanh(const Var& a) {
  Mat out = a.value().array().tanh();
  return a.tape()->record(out, {a}, [a, out](Tape& tape, const Mat& g) {
    tape.accumulate(a, g.cwiseProduct((1.0 - out.array().square()).matrix()));
  });
}

inline Var sigmoid(const Var& a) {
  Mat out = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return a.tape()->record(out, {a}, [a, out](Tape& tape, const Mat& g) {
    tape.accumulate(a, g.cwiseProduct((out.array() * (1.0 - out.array())).matrix()));
  });
}

/// GELU, tanh approximation.
inline Var gelu(const Var& a) {
  constexpr double c = 0.7978845608028654; // sqrt(2/pi)
  return detail::unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x))); },
      [](double x) {
        const double u = c * (x + 0.044715 * x * x * x);
        const double th = std::tanh(u);
        const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
      });
}

inline Var sin(const Var& a) {
  return detail::unary(a, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

inline Var cos(const Var& a) {
  return detail::unary(a, [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); });
}

inline Var exp(const Var& a) {
  Mat out = a.value().array().exp();
  return a.tape()->record(out, {a}, [a, out](Tape& tape, const Mat& g) {
    tape.accumulate(a, g.cwiseProduct(out));
  });
}

inline Var square(const Var& a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

/// sqrt with a zero (sub)gradient at 0.
inline Var sqrt(const Var& a) {
  Mat out = a.value().array().max(0.0).sqrt();
  return a.tape()->record(out, {a}, [a, out](Tape& tape, const Mat& g) {
    tape.accumulate(a, g.binaryExpr(out, [](double gi, double s) { return s > 0.0 ? gi * 0.5 / s : 0.0; }));
  });
}

/// Elementwise two-argument arctangent; zero gradient at the origin.
inline Var atan2(const Var& y, const Var& x) {
  FUSEMOTION_CHECK(y.rows() == x.rows() && y.cols() == x.cols(), ShapeError, "atan2: shape mismatch");
  Mat out = y.value().binaryExpr(x.value(), [](double a, double b) { return std::atan2(a, b); });
  return y.tape()->record(std::move(out), {y, x}, [y, x](Tape& tape, const Mat& g) {
    const Mat r2 = y.value().array().square() + x.value().array().square();
    const Mat inv = r2.unaryExpr([](double v) { return v > 0.0 ? 1.0 / v : 0.0; });
    if (tape.needs_grad(y)) {
      tape.accumulate(y, g.cwiseProduct(x.value()).cwiseProduct(inv));
    }
    if (tape.needs_grad(x)) {
      tape.accumulate(x, -g.cwiseProduct(y.value()).cwiseProduct(inv));
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(const Var& a) {
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {a}, [a](Tape& tape, const Mat& g) {
    tape.accumulate(a, Mat::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

inline Var mean(const Var& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

/// Column sums, 1 x C.
inline Var sum_rows(const Var& a) {
  return a.tape()->record(a.value().colwise().sum(), {a}, [a](Tape& tape, const Mat& g) {
    tape.accumulate(a, g.replicate(a.rows(), 1));
  });
}

/// Frobenius norm; zero subgradient at the origin.
inline Var norm(const Var& a) {
  Mat out(1, 1);
  out(0, 0) = a.value().norm();
  const double n = out(0, 0);
  return a.tape()->record(std::move(out), {a}, [a, n](Tape& tape, const Mat& g) {
    if (n > 0.0) {
      tape.accumulate(a, a.value() * (g(0, 0) / n));
    }
  });
}

/// Column-wise max over rows, 1 x C. Ties resolve to the lowest row.
inline Var max_rows(const Var& a) {
  FUSEMOTION_CHECK(a.rows() >= 1, ShapeError, "max_rows of empty matrix");
  const Mat& v = a.value();
  Mat out(1, v.cols());
  std::vector<Eigen::Index> arg(static_cast<size_t>(v.cols()));
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < v.rows(); ++r) {
      if (v(r, c) > v(best, c)) {
        best = r;
      }
    }
    arg[static_cast<size_t>(c)] = best;
    out(0, c) = v(best, c);
  }
  return a.tape()->record(std::move(out), {a}, [a, arg](Tape& tape, const Mat& g) {
    Mat ga = Mat::Zero(a.rows(), a.cols());
    for (Eigen::Index c = 0; c < ga.cols(); ++c) {
      ga(arg[static_cast<size_t>(c)], c) = g(0, c);
    }
    tape.accumulate(a, ga);
  });
}

// ---------------------------------------------------------------------------
// Structure

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  FUSEMOTION_CHECK(start >= 0 && start + count <= a.cols(), ShapeError, "slice_cols out of range");
  return a.tape()->record(a.value().middleCols(start, count), {a}, [a, start, count](Tape& tape, const Mat& g) {
    Mat ga = Mat::Zero(a.rows(), a.cols());
    ga.middleCols(start, count) = g;
    tape.accumulate(a, ga);
  });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  FUSEMOTION_CHECK(start >= 0 && start + count <= a.rows(), ShapeError, "slice_rows out of range");
  return a.tape()->record(a.value().middleRows(start, count), {a}, [a, start, count](Tape& tape, const Mat& g) {
    Mat ga = Mat::Zero(a.rows(), a.cols());
    ga.middleRows(start, count) = g;
    tape.accumulate(a, ga);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  FUSEMOTION_CHECK(!parts.empty(), ShapeError, "concat_cols of nothing");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const Var& p : parts) {
    FUSEMOTION_CHECK(p.rows() == rows, ShapeError, "concat_cols: row count mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return parts.front().tape()->record(std::move(out), parts, [parts](Tape& tape, const Mat& g) {
    Eigen::Index offset = 0;
    for (const Var& p : parts) {
      if (tape.needs_grad(p)) {
        tape.accumulate(p, g.middleCols(offset, p.cols()));
      }
      offset += p.cols();
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  FUSEMOTION_CHECK(!parts.empty(), ShapeError, "concat_rows of nothing");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Var& p : parts) {
    FUSEMOTION_CHECK(p.cols() == cols, ShapeError, "concat_rows: column count mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return parts.front().tape()->record(std::move(out), parts, [parts](Tape& tape, const Mat& g) {
    Eigen::Index offset = 0;
    for (const Var& p : parts) {
      if (tape.needs_grad(p)) {
        tape.accumulate(p, g.middleRows(offset, p.rows()));
      }
      offset += p.rows();
    }
  });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

inline Var softmax_rows(const Var& a) {
  Mat out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return a.tape()->record(out, {a}, [a, out](Tape& tape, const Mat& g) {
    const Vec dots = g.cwiseProduct(out).rowwise().sum();
    Mat ga = out.cwiseProduct(g.colwise() - dots);
    tape.accumulate(a, ga);
  });
}

/// Layer normalization over each row (no affine part).
inline Var normalize_rows(const Var& a, double eps = 1e-5) {
  const Mat& x = a.value();
  const Eigen::Index d = x.cols();
  Vec inv_std(x.rows());
  Mat xhat(x.rows(), d);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  return a.tape()->record(xhat, {a}, [a, xhat, inv_std, d](Tape& tape, const Mat& g) {
    Mat ga(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double mg = g.row(r).mean();
      const double mgx = g.row(r).dot(xhat.row(r)) / static_cast<double>(d);
      ga.row(r) = inv_std(r) * (g.row(r).array() - mg - xhat.row(r).array() * mgx);
    }
    tape.accumulate(a, ga);
  });
}

// ---------------------------------------------------------------------------
// Temporal convolution over rows (time) with channels in columns.

namespace detail {
/// Gathers zero-padded temporal patches: out(t, k*C + c) = x(t + k - pad, c).
inline Mat im2col(const Mat& x, int kernel, int pad) {
  const Eigen::Index n = x.rows();
  const Eigen::Index c = x.cols();
  Mat out = Mat::Zero(n, c * kernel);
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - pad;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index hi = std::min<Eigen::Index>(n, n - shift);
    if (hi > lo) {
      out.block(lo, k * c, hi - lo, c) = x.middleRows(lo + shift, hi - lo);
    }
  }
  return out;
}

/// Adjoint of im2col.
inline Mat col2im(const Mat& cols, Eigen::Index channels, int kernel, int pad) {
  const Eigen::Index n = cols.rows();
  Mat out = Mat::Zero(n, channels);
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - pad;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index hi = std::min<Eigen::Index>(n, n - shift);
    if (hi > lo) {
      out.middleRows(lo + shift, hi - lo) += cols.block(lo, k * channels, hi - lo, channels);
    }
  }
  return out;
}
} // namespace detail

/// Same-length 1D convolution: x (N x Cin), weight (K*Cin x Cout), bias (1 x Cout).
inline Var conv1d(const Var& x, const Var& weight, const Var& bias, int kernel) {
  FUSEMOTION_CHECK(kernel % 2 == 1, ShapeError, "conv1d kernel must be odd");
  FUSEMOTION_CHECK(weight.rows() == x.cols() * kernel, ShapeError, "conv1d weight shape mismatch");
  const int pad = kernel / 2;
  Mat patches = detail::im2col(x.value(), kernel, pad);
  Mat out = patches * weight.value();
  out.rowwise() += bias.value().row(0);
  const Eigen::Index channels = x.cols();
  return x.tape()->record(
      std::move(out), {x, weight, bias}, [x, weight, bias, patches, kernel, pad, channels](Tape& tape, const Mat& g) {
        if (tape.needs_grad(weight)) {
          tape.accumulate(weight, patches.transpose() * g);
        }
        if (tape.needs_grad(bias)) {
          tape.accumulate(bias, g.colwise().sum());
        }
        if (tape.needs_grad(x)) {
          tape.accumulate(x, detail::col2im(g * weight.value().transpose(), channels, kernel, pad));
        }
      });
}

/// Stride-1 transposed convolution (adjoint of conv1d in its input):
/// x (N x Cin), weight (Cin x K*Cout), bias (1 x Cout).
inline Var conv_transpose1d(const Var& x, const Var& weight, const Var& bias, int kernel) {
  FUSEMOTION_CHECK(kernel % 2 == 1, ShapeError, "conv_transpose1d kernel must be odd");
  FUSEMOTION_CHECK(weight.rows() == x.cols(), ShapeError, "conv_transpose1d weight shape mismatch");
  FUSEMOTION_CHECK(weight.cols() % kernel == 0, ShapeError, "conv_transpose1d weight width");
  const int pad = kernel / 2;
  const Eigen::Index out_channels = weight.cols() / kernel;
  Mat out = detail::col2im(x.value() * weight.value(), out_channels, kernel, pad);
  out.rowwise() += bias.value().row(0);
  return x.tape()->record(std::move(out), {x, weight, bias}, [x, weight, bias, kernel, pad](Tape& tape, const Mat& g) {
    const Mat g_cols = detail::im2col(g, kernel, pad);
    if (tape.needs_grad(weight)) {
      tape.accumulate(weight, x.value().transpose() * g_cols);
    }
    if (tape.needs_grad(bias)) {
      tape.accumulate(bias, g.colwise().sum());
    }
    if (tape.needs_grad(x)) {
      tape.accumulate(x, g_cols * weight.value().transpose());
    }
  });
}

// Operator sugar for the common cases.
inline Var operator+(const Var& a, const Var& b) {
  return add(a, b);
}
inline Var operator-(const Var& a, const Var& b) {
  return sub(a, b);
}
inline Var operator*(const Var& a, double s) {
  return scale(a, s);
}

} // namespace ad
} // namespace fusemotion
