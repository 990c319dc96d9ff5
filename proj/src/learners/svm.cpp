#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "mmscreen/error.hpp"
#include "mmscreen/learners.hpp"

namespace mmscreen {

namespace {

constexpr double kTau = 1e-12;

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}

// C-SVC dual: min 0.5 a'Qa - e'a, 0 <= a <= C, y'a = 0, with Q_ij = y_i y_j K_ij.
// Working pairs chosen with second-order information.
struct Smo {
  const std::vector<double>& q;  // n x n, signed
  const std::vector<int>& y;
  double c;
  std::size_t n;
  std::vector<double> alpha;
  std::vector<double> grad;

  Smo(const std::vector<double>& q_, const std::vector<int>& y_, double c_)
      : q(q_), y(y_), c(c_), n(y_.size()), alpha(n, 0.0), grad(n, -1.0) {}

  [[nodiscard]] double qij(std::size_t i, std::size_t j) const { return q[i * n + j]; }
  [[nodiscard]] bool at_upper(std::size_t i) const { return alpha[i] >= c; }
  [[nodiscard]] bool at_lower(std::size_t i) const { return alpha[i] <= 0.0; }

  // Returns false when the KKT gap is below tol.
  bool select(double tol, std::size_t& out_i, std::size_t& out_j) const {
    double gmax = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t best_i = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (!at_upper(t) && -grad[t] >= gmax) {
          gmax = -grad[t];
          best_i = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!at_lower(t) && grad[t] >= gmax) {
        gmax = grad[t];
        best_i = static_cast<std::ptrdiff_t>(t);
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t best_j = -1;
    double obj_min = std::numeric_limits<double>::infinity();
    const std::size_t i = best_i < 0 ? 0 : static_cast<std::size_t>(best_i);
    for (std::size_t j = 0; j < n; ++j) {
      double grad_diff = 0.0, quad = 0.0;
      if (y[j] == 1) {
        if (at_lower(j)) continue;
        gmax2 = std::max(gmax2, grad[j]);
        grad_diff = gmax + grad[j];
        if (best_i >= 0) quad = qij(i, i) + qij(j, j) - 2.0 * y[i] * qij(i, j);
      } else {
        if (at_upper(j)) continue;
        gmax2 = std::max(gmax2, -grad[j]);
        grad_diff = gmax - grad[j];
        if (best_i >= 0) quad = qij(i, i) + qij(j, j) + 2.0 * y[i] * qij(i, j);
      }
      if (best_i < 0 || !(grad_diff > 0.0)) continue;
      const double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
      if (obj <= obj_min) {
        obj_min = obj;
        best_j = static_cast<std::ptrdiff_t>(j);
      }
    }
    if (gmax + gmax2 < tol || best_i < 0 || best_j < 0) return false;
    out_i = i;
    out_j = static_cast<std::size_t>(best_j);
    return true;
  }

  void update(std::size_t i, std::size_t j) {
    const double old_i = alpha[i];
    const double old_j = alpha[j];
    if (y[i] != y[j]) {
      double quad = qij(i, i) + qij(j, j) + 2.0 * qij(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = c - diff;
        }
      } else if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double quad = qij(i, i) + qij(j, j) - 2.0 * qij(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = sum - c;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > c) {
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = sum - c;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double di = alpha[i] - old_i;
    const double dj = alpha[j] - old_j;
    for (std::size_t k = 0; k < n; ++k) grad[k] += qij(i, k) * di + qij(j, k) * dj;
  }

  [[nodiscard]] double rho() const {
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double yg = y[i] * grad[i];
      if (at_upper(i)) {
        if (y[i] == -1) ub = std::min(ub, yg);
        else lb = std::max(lb, yg);
      } else if (at_lower(i)) {
        if (y[i] == 1) ub = std::min(ub, yg);
        else lb = std::max(lb, yg);
      } else {
        ++n_free;
        sum_free += yg;
      }
    }
    return n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  }
};

double platt_nll(std::span<const double> f, std::span<const double> target, double a, double b) {
  double v = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double z = f[i] * a + b;
    v += z >= 0.0 ? target[i] * z + std::log1p(std::exp(-z)) : (target[i] - 1.0) * z + std::log1p(std::exp(z));
  }
  return v;
}

}  // namespace

double SvmModel::decision(std::span<const double> x) const {
  double s = bias;
  for (std::size_t k = 0; k < dual_coef.size(); ++k) {
    s += dual_coef[k] * std::exp(-gamma * sq_dist(support_vectors.row(k), x));
  }
  return s;
}

double rbf_gamma_scale(const Matrix& x) {
  const auto& v = x.data();
  if (v.empty() || x.cols() == 0) return 1.0;
  double mean = 0.0;
  for (double e : v) mean += e;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double e : v) var += (e - mean) * (e - mean);
  var /= static_cast<double>(v.size());
  return var > 0.0 ? 1.0 / (static_cast<double>(x.cols()) * var) : 1.0;
}

double platt_probability(double a, double b, double decision) {
  const double z = decision * a + b;
  return z >= 0.0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
}

std::pair<double, double> fit_platt(std::span<const double> f, std::span<const int> y) {
  const auto prior1 = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const auto prior0 = static_cast<double>(y.size()) - prior1;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  std::vector<double> t(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) t[i] = y[i] == 1 ? hi : lo;

  const double prior_b = std::log((prior0 + 1.0) / (prior1 + 1.0));
  double a = 0.0, b = prior_b;
  double fval = platt_nll(f, t, a, b);
  constexpr double kMinStep = 1e-10, kSigma = 1e-12, kEps = 1e-5;
  for (int iter = 0; iter < 100; ++iter) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double z = f[i] * a + b;
      double p, q;
      if (z >= 0.0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += f[i] * f[i] * d2;
      h22 += d2;
      h21 += f[i] * d2;
      const double d1 = t[i] - p;
      g1 += f[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    while (step >= kMinStep) {
      const double na = a + step * da;
      const double nb = b + step * db;
      const double nf = platt_nll(f, t, na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < kMinStep) break;
  }
  // Keep the map non-decreasing in the decision value.
  if (a > 0.0) {
    a = 0.0;
    b = prior_b;
  }
  return {a, b};
}

FittedModel fit_svm(const Matrix& x, std::span<const int> y, const SvmParams& params, std::uint64_t seed) {
  if (x.rows() != y.size()) throw RuntimeError("fit_svm: X and y disagree on row count");
  const std::size_t n = x.rows();
  const auto pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || static_cast<std::size_t>(pos) == n) throw DegenerateFoldError();

  SvmModel model;
  model.gamma = params.gamma.value_or(rbf_gamma_scale(x));
  model.c = params.c;
  model.signed_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) model.signed_labels[i] = y[i] == 1 ? 1 : -1;

  std::vector<double> kernel(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    kernel[i * n + i] = 1.0;
    for (std::size_t j = 0; j < i; ++j) {
      const double k = std::exp(-model.gamma * sq_dist(x.row(i), x.row(j)));
      kernel[i * n + j] = k;
      kernel[j * n + i] = k;
    }
  }
  std::vector<double> q(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      q[i * n + j] = model.signed_labels[i] * model.signed_labels[j] * kernel[i * n + j];
    }
  }

  Smo smo(q, model.signed_labels, params.c);
  std::size_t iter = 0;
  bool converged = false;
  while (iter < params.max_iter) {
    std::size_t i = 0, j = 0;
    if (!smo.select(params.tol, i, j)) {
      converged = true;
      break;
    }
    smo.update(i, j);
    ++iter;
  }
  model.iterations = iter;
  model.converged = converged;
  model.alpha = smo.alpha;
  model.bias = -smo.rho();

  std::vector<std::size_t> sv;
  for (std::size_t i = 0; i < n; ++i) {
    if (smo.alpha[i] > 0.0) sv.push_back(i);
  }
  model.support_vectors = x.select_rows(sv);
  for (auto i : sv) model.dual_coef.push_back(smo.alpha[i] * model.signed_labels[i]);

  std::vector<double> dec(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = model.bias;
    for (auto k : sv) s += smo.alpha[k] * model.signed_labels[k] * kernel[k * n + i];
    dec[i] = s;
  }
  std::tie(model.platt_a, model.platt_b) = fit_platt(dec, y);
  return {LearnerKind::SVM, std::move(model), n, x.cols(), seed, !converged};
}

}  // namespace mmscreen
