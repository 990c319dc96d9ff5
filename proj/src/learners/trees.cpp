#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>

#include "mmscreen/error.hpp"
#include "mmscreen/learners.hpp"
#include "mmscreen/rng.hpp"

namespace mmscreen {

double DecisionTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].value;
}

std::size_t DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
    best = std::max(best, d[i]);
  }
  return best;
}

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.feature < 0; }));
}

double GbdtModel::raw_score(std::span<const double> x) const {
  double f = init_score;
  for (const auto& t : trees) f += learning_rate * t.predict(x);
  return f;
}

namespace {

void require_both_classes(std::span<const int> y) {
  bool pos = false, neg = false;
  for (int v : y) {
    pos = pos || v == 1;
    neg = neg || v == 0;
  }
  if (!pos || !neg) throw DegenerateFoldError();
}

double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

// Row indices sorted by each feature's value (ties by row index).
std::vector<std::vector<std::uint32_t>> presort(const Matrix& x) {
  std::vector<std::vector<std::uint32_t>> order(x.cols());
  for (std::size_t f = 0; f < x.cols(); ++f) {
    auto& o = order[f];
    o.resize(x.rows());
    std::iota(o.begin(), o.end(), 0U);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
  }
  return order;
}

// Least-squares regression tree on `target`, grown level by level to
// max_depth; leaves get sum(target) / sum(hessian) (one Newton step).
DecisionTree fit_newton_tree(const Matrix& x, const std::vector<std::vector<std::uint32_t>>& order,
                             std::span<const double> target, std::span<const double> hessian, std::size_t max_depth) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  DecisionTree tree;
  tree.nodes.emplace_back();
  std::vector<int> node_of(n, 0);
  std::vector<int> frontier = {0};

  struct Stats {
    double sum = 0.0;
    double sq = 0.0;
    std::size_t count = 0;
  };
  struct Best {
    double gain = -std::numeric_limits<double>::infinity();
    int feature = -1;
    double threshold = 0.0;
  };

  for (std::size_t level = 0; level < max_depth && !frontier.empty(); ++level) {
    // Dense slot per frontier node.
    std::vector<int> slot(tree.nodes.size(), -1);
    for (std::size_t k = 0; k < frontier.size(); ++k) slot[static_cast<std::size_t>(frontier[k])] = static_cast<int>(k);
    std::vector<Stats> total(frontier.size());
    for (std::size_t i = 0; i < n; ++i) {
      const int s = node_of[i] >= 0 ? slot[static_cast<std::size_t>(node_of[i])] : -1;
      if (s < 0) continue;
      total[static_cast<std::size_t>(s)].sum += target[i];
      total[static_cast<std::size_t>(s)].sq += target[i] * target[i];
      ++total[static_cast<std::size_t>(s)].count;
    }
    std::vector<Best> best(frontier.size());
    std::vector<Stats> left(frontier.size());
    std::vector<double> prev(frontier.size());
    std::vector<char> seen(frontier.size());

    for (std::size_t f = 0; f < d; ++f) {
      std::fill(left.begin(), left.end(), Stats{});
      std::fill(seen.begin(), seen.end(), 0);
      for (std::uint32_t i : order[f]) {
        const int node = node_of[i];
        if (node < 0) continue;
        const int s_raw = slot[static_cast<std::size_t>(node)];
        if (s_raw < 0) continue;
        const auto s = static_cast<std::size_t>(s_raw);
        const double v = x(i, f);
        if (seen[s] && v > prev[s]) {
          const Stats& l = left[s];
          const Stats& t = total[s];
          const double rs = t.sum - l.sum;
          const auto rc = static_cast<double>(t.count - l.count);
          const double gain = l.sum * l.sum / static_cast<double>(l.count) + rs * rs / rc -
                              t.sum * t.sum / static_cast<double>(t.count);
          if (gain > best[s].gain + 1e-12) best[s] = {gain, static_cast<int>(f), midpoint(prev[s], v)};
        }
        left[s].sum += target[i];
        ++left[s].count;
        prev[s] = v;
        seen[s] = 1;
      }
    }

    std::vector<int> next;
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      // Impure nodes split even at zero gain; pure ones stay leaves.
      const auto& t = total[k];
      const double spread = t.sq - t.sum * t.sum / static_cast<double>(std::max<std::size_t>(t.count, 1));
      if (best[k].feature < 0 || spread <= 1e-12 || best[k].gain < -1e-12) continue;
      const auto node = static_cast<std::size_t>(frontier[k]);
      const int l = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      tree.nodes[node].feature = best[k].feature;
      tree.nodes[node].threshold = best[k].threshold;
      tree.nodes[node].left = l;
      tree.nodes[node].right = l + 1;
      next.push_back(l);
      next.push_back(l + 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (node_of[i] < 0) continue;
      const auto& nd = tree.nodes[static_cast<std::size_t>(node_of[i])];
      if (nd.feature >= 0) node_of[i] = x(i, static_cast<std::size_t>(nd.feature)) <= nd.threshold ? nd.left : nd.right;
    }
    frontier = std::move(next);
  }

  std::vector<double> num(tree.nodes.size(), 0.0), den(tree.nodes.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto node = static_cast<std::size_t>(node_of[i]);
    num[node] += target[i];
    den[node] += hessian[i];
  }
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    auto& nd = tree.nodes[k];
    if (nd.feature >= 0) continue;
    nd.value = std::abs(den[k]) < 1e-150 ? 0.0 : num[k] / den[k];
  }
  return tree;
}

double gini(double w_pos, double w) {
  if (w <= 0.0) return 0.0;
  const double p = w_pos / w;
  return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

// CART classification tree on bootstrap weights, random feature subsets.
DecisionTree fit_forest_tree(const Matrix& x, std::span<const int> y, std::span<const double> weight,
                             std::size_t max_features, std::size_t min_samples_split, Rng& rng) {
  const std::size_t d = x.cols();
  DecisionTree tree;
  struct Task {
    std::size_t node;
    std::vector<std::uint32_t> rows;
  };
  std::vector<std::uint32_t> root_rows;
  for (std::uint32_t i = 0; i < x.rows(); ++i) {
    if (weight[i] > 0.0) root_rows.push_back(i);
  }
  tree.nodes.emplace_back();
  std::vector<Task> stack;
  stack.push_back({0, std::move(root_rows)});
  std::vector<std::size_t> features(d);
  std::vector<std::uint32_t> sorted;

  while (!stack.empty()) {
    Task task = std::move(stack.back());
    stack.pop_back();
    double w = 0.0, w_pos = 0.0;
    for (auto i : task.rows) {
      w += weight[i];
      if (y[i] == 1) w_pos += weight[i];
    }
    tree.nodes[task.node].value = w > 0.0 ? w_pos / w : 0.0;
    const double node_impurity = gini(w_pos, w);
    if (task.rows.size() < min_samples_split || node_impurity <= 0.0) continue;

    std::iota(features.begin(), features.end(), std::size_t{0});
    int best_f = -1;
    double best_gain = 1e-12, best_thr = 0.0;
    std::size_t informative_seen = 0;
    for (std::size_t k = 0; k < d && informative_seen < max_features; ++k) {
      const auto pick = k + static_cast<std::size_t>(rng.below(d - k));
      std::swap(features[k], features[pick]);
      const std::size_t f = features[k];
      sorted = task.rows;
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
      if (x(sorted.front(), f) == x(sorted.back(), f)) continue;  // constant here
      ++informative_seen;
      double lw = 0.0, lpos = 0.0;
      for (std::size_t j = 0; j + 1 < sorted.size(); ++j) {
        const auto i = sorted[j];
        lw += weight[i];
        if (y[i] == 1) lpos += weight[i];
        const double v = x(i, f);
        const double v_next = x(sorted[j + 1], f);
        if (!(v_next > v)) continue;
        const double gain = w * node_impurity - lw * gini(lpos, lw) - (w - lw) * gini(w_pos - lpos, w - lw);
        const double thr = midpoint(v, v_next);
        const bool better = gain > best_gain ||
                            (gain == best_gain && best_f >= 0 &&
                             (static_cast<int>(f) < best_f || (static_cast<int>(f) == best_f && thr < best_thr)));
        if (better) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_thr = thr;
        }
      }
    }
    if (best_f < 0) continue;

    std::vector<std::uint32_t> left_rows, right_rows;
    for (auto i : task.rows) {
      (x(i, static_cast<std::size_t>(best_f)) <= best_thr ? left_rows : right_rows).push_back(i);
    }
    const std::size_t l = tree.nodes.size();
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& nd = tree.nodes[task.node];
    nd.feature = best_f;
    nd.threshold = best_thr;
    nd.left = static_cast<int>(l);
    nd.right = static_cast<int>(l + 1);
    stack.push_back({l + 1, std::move(right_rows)});
    stack.push_back({l, std::move(left_rows)});
  }
  return tree;
}

}  // namespace

FittedModel fit_gbdt(const Matrix& x, std::span<const int> y, const GbdtParams& params, std::uint64_t seed) {
  if (x.rows() != y.size()) throw RuntimeError("fit_gbdt: X and y disagree on row count");
  require_both_classes(y);
  const std::size_t n = x.rows();
  const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double rate = pos / static_cast<double>(n);

  GbdtModel model;
  model.init_score = std::log(rate / (1.0 - rate));
  model.learning_rate = params.learning_rate;
  const auto order = presort(x);

  std::vector<double> score(n, model.init_score), residual(n), hessian(n);
  for (std::size_t t = 0; t < params.trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(score[i]);
      residual[i] = static_cast<double>(y[i]) - p;
      hessian[i] = p * (1.0 - p);
    }
    auto tree = fit_newton_tree(x, order, residual, hessian, params.max_depth);
    for (std::size_t i = 0; i < n; ++i) score[i] += params.learning_rate * tree.predict(x.row(i));
    model.trees.push_back(std::move(tree));
  }
  return {LearnerKind::GBDT, std::move(model), n, x.cols(), seed};
}

FittedModel fit_rf(const Matrix& x, std::span<const int> y, const RfParams& params, std::uint64_t seed) {
  if (x.rows() != y.size()) throw RuntimeError("fit_rf: X and y disagree on row count");
  require_both_classes(y);
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const std::size_t max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
  ForestModel forest;
  std::vector<double> weight(n);
  for (std::size_t t = 0; t < params.trees; ++t) {
    Rng rng(derive_seed(seed, {0x666f72657374ULL, t}));
    std::fill(weight.begin(), weight.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) weight[static_cast<std::size_t>(rng.below(n))] += 1.0;
    forest.trees.push_back(fit_forest_tree(x, y, weight, max_features, params.min_samples_split, rng));
  }
  return {LearnerKind::RF, std::move(forest), n, d, seed};
}

}  // namespace mmscreen
