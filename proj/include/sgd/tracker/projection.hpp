#pragma once

// The projection F(x, y, p) = W3 A(W2 (y ⊕ A(W1 x + b1)) + b2) + b3 with A = gelu,
// evaluated for every (x, y) pair of two column sets at once, plus its
// hand-written gradient.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "sgd/error.hpp"
#include "sgd/rng.hpp"
#include "sgd/tracker/encoder.hpp"

namespace sgd::tracker {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

inline double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

inline double gelu_tanh(double x) {
  constexpr double c = 0.79788456080286535588;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

struct Projection {
  Mat W1;  // d x d
  Vec b1;  // d
  Mat W2;  // d x 2d; the first d columns multiply y
  Vec b2;  // d
  Mat W3;  // p x d
  Vec b3;  // p

  static Projection zeros(int d, int p) {
    return {Mat::Zero(d, d), Vec::Zero(d), Mat::Zero(d, 2 * d), Vec::Zero(d), Mat::Zero(p, d), Vec::Zero(p)};
  }

  static Projection random(int d, int p, Rng& rng) {
    Projection P = zeros(d, p);
    auto fill = [&](Mat& m, double scale) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
    };
    fill(P.W1, 1.0 / std::sqrt(static_cast<double>(d)));
    fill(P.W2, 1.0 / std::sqrt(2.0 * d));
    fill(P.W3, 1.0 / std::sqrt(static_cast<double>(d)));
    return P;
  }

  int d() const { return static_cast<int>(W1.rows()); }
  int p() const { return static_cast<int>(W3.rows()); }

  void check() const {
    const auto d = W1.rows();
    if (W1.cols() != d || b1.size() != d || W2.rows() != d || W2.cols() != 2 * d || b2.size() != d ||
        W3.cols() != d || b3.size() != W3.rows())
      throw DimensionMismatch("projection parameter shapes are inconsistent");
  }

  Projection& operator+=(const Projection& o) {
    W1 += o.W1, b1 += o.b1, W2 += o.W2, b2 += o.b2, W3 += o.W3, b3 += o.b3;
    return *this;
  }

  Projection& operator*=(double s) {
    W1 *= s, b1 *= s, W2 *= s, b2 *= s, W3 *= s, b3 *= s;
    return *this;
  }

  // Visits each parameter block together with the same block of `o`.
  template <class F>
  void zip(Projection& o, F&& f) {
    f(W1, o.W1), f(b1, o.b1), f(W2, o.W2), f(b2, o.b2), f(W3, o.W3), f(b3, o.b3);
  }
};

// Forward values kept for the backward pass. Pair (x, y) lives in column
// x * ny + y of `pre2` and `logits`.
struct PairCache {
  Mat X, Y;
  Mat pre1;    // d x nx
  Mat H;       // d x nx, A(pre1)
  Mat pre2;    // d x (nx*ny)
  Mat logits;  // p x (nx*ny)
  Eigen::Index nx = 0, ny = 0;

  double logit(Eigen::Index x, Eigen::Index y, Eigen::Index k = 0) const { return logits(k, x * ny + y); }
};

inline PairCache project_pairs(const Projection& P, const Mat& X, const Mat& Y) {
  const Eigen::Index d = P.W1.rows();
  if (X.rows() != d || Y.rows() != d)
    throw DimensionMismatch("projection expects inputs of dimension " + std::to_string(d) + ", got " +
                            std::to_string(X.rows()) + " and " + std::to_string(Y.rows()));
  PairCache c;
  c.X = X;
  c.Y = Y;
  c.nx = X.cols();
  c.ny = Y.cols();
  c.pre1 = (P.W1 * X).colwise() + P.b1;
  c.H = c.pre1.unaryExpr([](double v) { return gelu(v); });
  Mat A = P.W2.leftCols(d) * Y;                       // d x ny
  Mat B = (P.W2.rightCols(d) * c.H).colwise() + P.b2;  // d x nx
  c.pre2.resize(d, c.nx * c.ny);
  for (Eigen::Index x = 0; x < c.nx; ++x)
    for (Eigen::Index y = 0; y < c.ny; ++y) c.pre2.col(x * c.ny + y) = A.col(y) + B.col(x);
  Mat act = c.pre2.unaryExpr([](double v) { return gelu(v); });
  c.logits = (P.W3 * act).colwise() + P.b3;
  return c;
}

// Accumulates parameter gradients for upstream gradient `dL` (p x nx*ny).
// Input gradients are written when the pointers are non-null.
inline void project_pairs_backward(const Projection& P, const PairCache& c, const Mat& dL, Projection& grad,
                                   Mat* dX = nullptr, Mat* dY = nullptr) {
  const Eigen::Index d = P.W1.rows();
  Mat act = c.pre2.unaryExpr([](double v) { return gelu(v); });
  grad.W3.noalias() += dL * act.transpose();
  grad.b3 += dL.rowwise().sum();
  Mat dpre2 = (P.W3.transpose() * dL).cwiseProduct(c.pre2.unaryExpr([](double v) { return gelu_grad(v); }));
  grad.b2 += dpre2.rowwise().sum();

  Mat sum_x = Mat::Zero(d, c.nx);  // Σ_y dpre2 for each x
  Mat sum_y = Mat::Zero(d, c.ny);  // Σ_x dpre2 for each y
  for (Eigen::Index x = 0; x < c.nx; ++x)
    for (Eigen::Index y = 0; y < c.ny; ++y) {
      sum_x.col(x) += dpre2.col(x * c.ny + y);
      sum_y.col(y) += dpre2.col(x * c.ny + y);
    }
  grad.W2.leftCols(d).noalias() += sum_y * c.Y.transpose();
  grad.W2.rightCols(d).noalias() += sum_x * c.H.transpose();
  if (dY) *dY = P.W2.leftCols(d).transpose() * sum_y;

  Mat dH = P.W2.rightCols(d).transpose() * sum_x;
  Mat dpre1 = dH.cwiseProduct(c.pre1.unaryExpr([](double v) { return gelu_grad(v); }));
  grad.W1.noalias() += dpre1 * c.X.transpose();
  grad.b1 += dpre1.rowwise().sum();
  if (dX) *dX = P.W1.transpose() * dpre1;
}

// Single-pair form.
inline Vec project(const Projection& P, const Vec& x, const Vec& y) {
  if (x.size() != P.W1.cols() || y.size() != P.W1.cols() || P.W2.cols() != 2 * P.W1.cols())
    throw DimensionMismatch("project: input dimension does not match parameters");
  return project_pairs(P, x, y).logits.col(0);
}

} // namespace sgd::tracker
