#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "mmscreen/matrix.hpp"

namespace mmscreen {

// Column-wise z-scoring with training-fold statistics. Zero-variance
// columns divide by 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  [[nodiscard]] Matrix apply(const Matrix& x) const;
  void apply_inplace(std::span<double> row) const;
  [[nodiscard]] Matrix invert(const Matrix& z) const;

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

Standardizer fit_standardizer(const Matrix& x);

enum class LearnerKind { LR, GBDT, SVM, RF };

std::string_view to_string(LearnerKind k);
LearnerKind parse_learner_kind(std::string_view text);

struct LrParams {
  double l2 = 1.0;  // coefficient of (l2/2)*||w||^2 added to the mean log-loss
  std::size_t max_iter = 1000;
  double tol = 1e-4;  // on the max-norm of the gradient
};

struct GbdtParams {
  std::size_t trees = 100;
  double learning_rate = 1.0;
  std::size_t max_depth = 3;
};

struct SvmParams {
  double c = 1.0;
  std::optional<double> gamma;  // nullopt: 1 / (d * variance of all entries of X)
  double tol = 1e-3;
  std::size_t max_iter = 1'000'000;
};

struct RfParams {
  std::size_t trees = 100;
  std::size_t min_samples_split = 2;
};

struct LearnerSpec {
  LearnerKind kind = LearnerKind::LR;
  LrParams lr;
  GbdtParams gbdt;
  SvmParams svm;
  RfParams rf;
  std::uint64_t seed = 42;
};

// Binary decision tree. Internal nodes send x[feature] <= threshold left.
struct DecisionTree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    friend bool operator==(const Node&, const Node&) = default;
  };
  std::vector<Node> nodes;

  [[nodiscard]] double predict(std::span<const double> x) const;
  [[nodiscard]] std::size_t depth() const;
  [[nodiscard]] std::size_t leaf_count() const;

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // objective after each accepted step, starting at w = 0

  friend bool operator==(const LogisticModel&, const LogisticModel&) = default;
};

struct GbdtModel {
  double init_score = 0.0;  // log-odds of the training base rate
  double learning_rate = 1.0;
  std::vector<DecisionTree> trees;

  [[nodiscard]] double raw_score(std::span<const double> x) const;

  friend bool operator==(const GbdtModel&, const GbdtModel&) = default;
};

struct SvmModel {
  Matrix support_vectors;
  std::vector<double> dual_coef;  // alpha_i * y_i for each support vector
  double bias = 0.0;              // decision = sum dual_coef_i K(sv_i, x) + bias
  double gamma = 1.0;
  double platt_a = 0.0;  // P(positive | f) = 1 / (1 + exp(platt_a * f + platt_b))
  double platt_b = 0.0;
  std::vector<double> alpha;       // full dual vector over training rows
  std::vector<int> signed_labels;  // +1 / -1 per training row
  double c = 1.0;
  std::size_t iterations = 0;
  bool converged = true;

  [[nodiscard]] double decision(std::span<const double> x) const;

  friend bool operator==(const SvmModel&, const SvmModel&) = default;
};

struct ForestModel {
  std::vector<DecisionTree> trees;  // leaf value = positive fraction

  friend bool operator==(const ForestModel&, const ForestModel&) = default;
};

class FittedModel {
 public:
  using Params = std::variant<LogisticModel, GbdtModel, SvmModel, ForestModel>;

  FittedModel() = default;
  FittedModel(LearnerKind kind, Params params, std::size_t n, std::size_t d, std::uint64_t seed, bool warning = false)
      : kind_(kind), params_(std::move(params)), n_(n), d_(d), seed_(seed), warning_(warning) {}

  [[nodiscard]] LearnerKind kind() const noexcept { return kind_; }
  [[nodiscard]] const Params& params() const noexcept { return params_; }
  [[nodiscard]] std::size_t train_rows() const noexcept { return n_; }
  [[nodiscard]] std::size_t dimension() const noexcept { return d_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  // Set when an iterative solver hit its iteration cap.
  [[nodiscard]] bool warning() const noexcept { return warning_; }

  // Positive-class probability for one row; the negative class is 1 - p.
  [[nodiscard]] double predict_proba(std::span<const double> x) const;
  [[nodiscard]] std::vector<double> predict_proba(const Matrix& x) const;

  template <typename T>
  [[nodiscard]] const T& as() const {
    return std::get<T>(params_);
  }

  friend bool operator==(const FittedModel&, const FittedModel&) = default;

 private:
  LearnerKind kind_ = LearnerKind::LR;
  Params params_;
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::uint64_t seed_ = 0;
  bool warning_ = false;
};

// All fit functions require both classes in y (0/1) and throw
// DegenerateFoldError otherwise.
FittedModel fit_lr(const Matrix& x, std::span<const int> y, const LrParams& params = {});
FittedModel fit_gbdt(const Matrix& x, std::span<const int> y, const GbdtParams& params, std::uint64_t seed);
FittedModel fit_svm(const Matrix& x, std::span<const int> y, const SvmParams& params, std::uint64_t seed);
FittedModel fit_rf(const Matrix& x, std::span<const int> y, const RfParams& params, std::uint64_t seed);

// Dispatch on spec.kind.
FittedModel fit_learner(const Matrix& x, std::span<const int> y, const LearnerSpec& spec);

// Regularized mean log-loss and its gradient; exposed for gradient checks.
double lr_objective(const Matrix& x, std::span<const int> y, std::span<const double> w, double bias, double l2);
void lr_gradient(const Matrix& x, std::span<const int> y, std::span<const double> w, double bias, double l2,
                 std::span<double> grad_w, double& grad_bias);

double rbf_gamma_scale(const Matrix& x);

// Platt sigmoid fit (Newton with backtracking, smoothed targets).
std::pair<double, double> fit_platt(std::span<const double> decision_values, std::span<const int> y);
double platt_probability(double a, double b, double decision);

double sigmoid(double z);

}  // namespace mmscreen
