#include <algorithm>
#include <cmath>
#include <deque>

#include "mmscreen/error.hpp"
#include "mmscreen/learners.hpp"

namespace mmscreen {

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void require_both_classes(std::span<const int> y) {
  bool pos = false, neg = false;
  for (int v : y) {
    pos = pos || v == 1;
    neg = neg || v == 0;
  }
  if (!pos || !neg) throw DegenerateFoldError();
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// theta = [w_0 .. w_{d-1}, bias]
struct Objective {
  const Matrix& x;
  std::span<const int> y;
  double l2;

  double value(std::span<const double> theta) const {
    const std::size_t d = x.cols();
    return lr_objective(x, y, theta.first(d), theta[d], l2);
  }

  double value_and_gradient(std::span<const double> theta, std::span<double> grad) const {
    const std::size_t d = x.cols();
    lr_gradient(x, y, theta.first(d), theta[d], l2, grad.first(d), grad[d]);
    return value(theta);
  }
};

}  // namespace

double lr_objective(const Matrix& x, std::span<const int> y, std::span<const double> w, double bias, double l2) {
  const std::size_t n = x.rows();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = dot(x.row(i), w) + bias;
    loss += y[i] == 1 ? softplus(-z) : softplus(z);
  }
  return loss / static_cast<double>(n) + 0.5 * l2 * dot(w, w);
}

void lr_gradient(const Matrix& x, std::span<const int> y, std::span<const double> w, double bias, double l2,
                 std::span<double> grad_w, double& grad_bias) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  std::fill(grad_w.begin(), grad_w.end(), 0.0);
  grad_bias = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = x.row(i);
    const double residual = sigmoid(dot(row, w) + bias) - static_cast<double>(y[i]);
    for (std::size_t j = 0; j < d; ++j) grad_w[j] += residual * row[j];
    grad_bias += residual;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) grad_w[j] = grad_w[j] * inv_n + l2 * w[j];
  grad_bias *= inv_n;
}

// L-BFGS (history 10) with a backtracking Armijo line search, so every
// accepted step strictly decreases the objective.
FittedModel fit_lr(const Matrix& x, std::span<const int> y, const LrParams& params) {
  if (x.rows() != y.size()) throw RuntimeError("fit_lr: X and y disagree on row count");
  require_both_classes(y);
  const std::size_t d = x.cols();
  const std::size_t p = d + 1;
  Objective obj{x, y, params.l2};

  std::vector<double> theta(p, 0.0), grad(p), new_theta(p), new_grad(p), direction(p);
  double f = obj.value_and_gradient(theta, grad);

  LogisticModel model;
  model.objective_trace.push_back(f);

  constexpr std::size_t kHistory = 10;
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> alpha_buf(kHistory);

  std::size_t iter = 0;
  bool converged = max_abs(grad) <= params.tol;
  while (!converged && iter < params.max_iter) {
    // Two-loop recursion for direction = -H * grad.
    std::copy(grad.begin(), grad.end(), direction.begin());
    const std::size_t m = s_hist.size();
    for (std::size_t k = m; k-- > 0;) {
      alpha_buf[k] = rho_hist[k] * dot(s_hist[k], direction);
      for (std::size_t j = 0; j < p; ++j) direction[j] -= alpha_buf[k] * y_hist[k][j];
    }
    double h0 = 1.0;
    if (m > 0) h0 = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
    for (auto& v : direction) v *= h0;
    for (std::size_t k = 0; k < m; ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], direction);
      for (std::size_t j = 0; j < p; ++j) direction[j] += s_hist[k][j] * (alpha_buf[k] - beta);
    }
    for (auto& v : direction) v = -v;

    double slope = dot(grad, direction);
    if (!(slope < 0.0)) {
      // Not a descent direction; restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t j = 0; j < p; ++j) direction[j] = -grad[j];
      slope = dot(grad, direction);
    }

    double step = (m == 0) ? std::min(1.0, 1.0 / std::max(max_abs(grad), 1e-300)) : 1.0;
    double new_f = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t j = 0; j < p; ++j) new_theta[j] = theta[j] + step * direction[j];
      new_f = obj.value_and_gradient(new_theta, new_grad);
      if (new_f <= f + 1e-4 * step * slope && new_f < f) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++iter;
    if (!accepted) {
      // Objective cannot be decreased at working precision.
      converged = true;
      break;
    }

    std::vector<double> s(p), yv(p);
    for (std::size_t j = 0; j < p; ++j) {
      s[j] = new_theta[j] - theta[j];
      yv[j] = new_grad[j] - grad[j];
    }
    const double sy = dot(s, yv);
    if (sy > 1e-12 * dot(yv, yv)) {
      if (s_hist.size() == kHistory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
    }
    theta.swap(new_theta);
    grad.swap(new_grad);
    f = new_f;
    model.objective_trace.push_back(f);
    converged = max_abs(grad) <= params.tol;
  }

  model.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(d));
  model.bias = theta[d];
  model.iterations = iter;
  model.converged = converged;
  return {LearnerKind::LR, std::move(model), x.rows(), d, 0, !converged};
}

}  // namespace mmscreen
