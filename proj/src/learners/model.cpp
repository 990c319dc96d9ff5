#include <cmath>

#include "mmscreen/error.hpp"
#include "mmscreen/learners.hpp"

namespace mmscreen {

std::string_view to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::LR: return "LR";
    case LearnerKind::GBDT: return "GBDT";
    case LearnerKind::SVM: return "SVM";
    case LearnerKind::RF: return "RF";
  }
  return "?";
}

LearnerKind parse_learner_kind(std::string_view text) {
  if (text == "LR") return LearnerKind::LR;
  if (text == "GBDT") return LearnerKind::GBDT;
  if (text == "SVM") return LearnerKind::SVM;
  if (text == "RF") return LearnerKind::RF;
  throw ValidationError("unknown learner '" + std::string(text) + "' (valid: LR, GBDT, SVM, RF)");
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Matrix Standardizer::apply(const Matrix& x) const {
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) apply_inplace(out.row(r));
  return out;
}

void Standardizer::apply_inplace(std::span<double> row) const {
  for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean[c]) / scale[c];
}

Matrix Standardizer::invert(const Matrix& z) const {
  Matrix out = z;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = row[c] * scale[c] + mean[c];
  }
  return out;
}

Standardizer fit_standardizer(const Matrix& x) {
  if (x.rows() == 0) throw RuntimeError("fit_standardizer: no rows");
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += x(r, c);
  }
  for (auto& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dev = x(r, c) - s.mean[c];
      s.scale[c] += dev * dev;
    }
  }
  for (auto& v : s.scale) {
    v = std::sqrt(v / static_cast<double>(n));
    if (v == 0.0) v = 1.0;
  }
  return s;
}

double FittedModel::predict_proba(std::span<const double> x) const {
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LogisticModel>) {
          double z = m.bias;
          for (std::size_t j = 0; j < m.weights.size(); ++j) z += m.weights[j] * x[j];
          return sigmoid(z);
        } else if constexpr (std::is_same_v<T, GbdtModel>) {
          return sigmoid(m.raw_score(x));
        } else if constexpr (std::is_same_v<T, SvmModel>) {
          return platt_probability(m.platt_a, m.platt_b, m.decision(x));
        } else {
          double sum = 0.0;
          for (const auto& tree : m.trees) sum += tree.predict(x);
          return m.trees.empty() ? 0.5 : sum / static_cast<double>(m.trees.size());
        }
      },
      params_);
}

std::vector<double> FittedModel::predict_proba(const Matrix& x) const {
  if (x.cols() != d_) {
    throw RuntimeError("predict_proba: expected " + std::to_string(d_) + " features, got " + std::to_string(x.cols()));
  }
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict_proba(x.row(r));
  return out;
}

FittedModel fit_learner(const Matrix& x, std::span<const int> y, const LearnerSpec& spec) {
  switch (spec.kind) {
    case LearnerKind::LR: {
      auto m = fit_lr(x, y, spec.lr);
      return {LearnerKind::LR, m.params(), m.train_rows(), m.dimension(), spec.seed, m.warning()};
    }
    case LearnerKind::GBDT: return fit_gbdt(x, y, spec.gbdt, spec.seed);
    case LearnerKind::SVM: return fit_svm(x, y, spec.svm, spec.seed);
    case LearnerKind::RF: return fit_rf(x, y, spec.rf, spec.seed);
  }
  throw RuntimeError("fit_learner: unknown learner kind");
}

}  // namespace mmscreen
