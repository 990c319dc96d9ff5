#include "mmscreen/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "mmscreen/error.hpp"
#include "mmscreen/rng.hpp"

namespace mmscreen {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Seeded k-means++ followed by Lloyd iterations. Returns centroids and
// per-frame assignments.
struct KMeansResult {
  Matrix centroids;
  std::vector<std::size_t> labels;
};

KMeansResult kmeans_once(const Matrix& frames, std::size_t k, Rng& rng, std::size_t max_iters) {
  const std::size_t n = frames.rows();
  const std::size_t d = frames.cols();
  KMeansResult res{Matrix(k, d), std::vector<std::size_t>(n, 0)};

  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  auto set_centroid = [&](std::size_t c, std::size_t frame) {
    auto src = frames.row(frame);
    std::copy(src.begin(), src.end(), res.centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], squared_distance(frames.row(i), src));
  };
  set_centroid(0, first);
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += nearest[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));
    }
    set_centroid(c, pick);
  }

  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(frames.row(i), res.centroids.row(0));
      for (std::size_t c = 1; c < k; ++c) {
        const double dist = squared_distance(frames.row(i), res.centroids.row(c));
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (res.labels[i] != best) changed = true;
      res.labels[i] = best;
    }
    if (!changed) break;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = frames.row(i);
      for (std::size_t j = 0; j < d; ++j) sums[res.labels[i] * d + j] += row[j];
      ++counts[res.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t j = 0; j < d; ++j) res.centroids(c, j) = sums[c * d + j] / static_cast<double>(counts[c]);
    }
  }
  return res;
}

double inertia(const Matrix& frames, const KMeansResult& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < frames.rows(); ++i) s += squared_distance(frames.row(i), r.centroids.row(r.labels[i]));
  return s;
}

// Best of several seeded restarts by within-cluster sum of squares.
KMeansResult kmeans(const Matrix& frames, std::size_t k, std::uint64_t seed, std::size_t max_iters,
                    std::size_t restarts) {
  KMeansResult best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    Rng rng(derive_seed(seed, {0x6b6d65616e73ULL, r}));
    auto res = kmeans_once(frames, k, rng, max_iters);
    const double w = inertia(frames, res);
    if (w < best_inertia) {
      best_inertia = w;
      best = std::move(res);
    }
  }
  return best;
}

// Posterior sufficient statistics summed over sequences.
struct Accumulators {
  std::vector<double> gamma_sum;    // K
  Matrix gamma_x;                   // K x D
  Matrix gamma_xx;                  // K x D
  Matrix xi_sum;                    // K x K
  std::vector<double> initial_sum;  // K

  Accumulators(std::size_t k, std::size_t d)
      : gamma_sum(k, 0.0), gamma_x(k, d), gamma_xx(k, d), xi_sum(k, k), initial_sum(k, 0.0) {}
};

double log_sum_exp(std::span<const double> v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

Matrix log_transition(const HmmModel& m) {
  Matrix out(m.states, m.states);
  for (std::size_t i = 0; i < m.states * m.states; ++i) {
    const double a = m.transition.data()[i];
    out.data()[i] = a > 0.0 ? std::log(a) : kNegInf;
  }
  return out;
}

// Log-space forward-backward for one sequence. Accumulates posterior
// sufficient statistics when acc is non-null; returns the log-likelihood.
double forward_backward(const HmmModel& m, const Matrix& obs, Accumulators* acc) {
  const std::size_t t_len = obs.rows();
  const std::size_t k = m.states;
  const Matrix log_b = log_emissions(m, obs);
  const Matrix log_a = log_transition(m);

  Matrix log_alpha(t_len, k);
  std::vector<double> terms(k);
  for (std::size_t s = 0; s < k; ++s) {
    log_alpha(0, s) = (m.initial[s] > 0.0 ? std::log(m.initial[s]) : kNegInf) + log_b(0, s);
  }
  for (std::size_t t = 1; t < t_len; ++t) {
    for (std::size_t s = 0; s < k; ++s) {
      for (std::size_t r = 0; r < k; ++r) terms[r] = log_alpha(t - 1, r) + log_a(r, s);
      log_alpha(t, s) = log_sum_exp(terms) + log_b(t, s);
    }
  }
  const double loglik = log_sum_exp(log_alpha.row(t_len - 1));
  if (!std::isfinite(loglik)) throw RuntimeError("HMM forward pass produced a non-finite log-likelihood");
  if (!acc) return loglik;

  Matrix log_beta(t_len, k, 0.0);
  for (std::size_t t = t_len - 1; t-- > 0;) {
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t s = 0; s < k; ++s) terms[s] = log_a(r, s) + log_b(t + 1, s) + log_beta(t + 1, s);
      log_beta(t, r) = log_sum_exp(terms);
    }
  }

  const std::size_t d = obs.cols();
  for (std::size_t t = 0; t < t_len; ++t) {
    auto x = obs.row(t);
    for (std::size_t s = 0; s < k; ++s) {
      const double g = std::exp(log_alpha(t, s) + log_beta(t, s) - loglik);
      acc->gamma_sum[s] += g;
      if (t == 0) acc->initial_sum[s] += g;
      for (std::size_t j = 0; j < d; ++j) {
        acc->gamma_x(s, j) += g * x[j];
        acc->gamma_xx(s, j) += g * x[j] * x[j];
      }
    }
    if (t + 1 < t_len) {
      for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t s = 0; s < k; ++s) {
          acc->xi_sum(r, s) +=
              std::exp(log_alpha(t, r) + log_a(r, s) + log_b(t + 1, s) + log_beta(t + 1, s) - loglik);
        }
      }
    }
  }
  return loglik;
}

void check_finite(const HmmModel& m, std::size_t iteration) {
  auto bad = [](double v) { return !std::isfinite(v); };
  if (std::any_of(m.means.data().begin(), m.means.data().end(), bad) ||
      std::any_of(m.variances.data().begin(), m.variances.data().end(), bad) ||
      std::any_of(m.transition.data().begin(), m.transition.data().end(), bad) ||
      std::any_of(m.initial.begin(), m.initial.end(), bad)) {
    throw RuntimeError("HMM EM produced a non-finite parameter at iteration " + std::to_string(iteration));
  }
}

void normalize_row(std::span<double> row) {
  const double s = std::accumulate(row.begin(), row.end(), 0.0);
  for (auto& v : row) v /= s;
}

}  // namespace

Matrix pad_sequence(const Matrix& data, std::size_t t_max) {
  Matrix out(t_max, data.cols(), 0.0);
  const std::size_t rows = std::min(t_max, data.rows());
  std::copy(data.data().begin(), data.data().begin() + static_cast<std::ptrdiff_t>(rows * data.cols()),
            out.data().begin());
  return out;
}

Matrix log_emissions(const HmmModel& m, const Matrix& obs) {
  Matrix out(obs.rows(), m.states);
  std::vector<double> log_norm(m.states, 0.0);
  for (std::size_t s = 0; s < m.states; ++s) {
    for (std::size_t j = 0; j < m.dims; ++j) log_norm[s] += kLog2Pi + std::log(m.variances(s, j));
  }
  for (std::size_t t = 0; t < obs.rows(); ++t) {
    auto x = obs.row(t);
    for (std::size_t s = 0; s < m.states; ++s) {
      double q = 0.0;
      for (std::size_t j = 0; j < m.dims; ++j) {
        const double dev = x[j] - m.means(s, j);
        q += dev * dev / m.variances(s, j);
      }
      out(t, s) = -0.5 * (log_norm[s] + q);
    }
  }
  return out;
}

double sequence_log_likelihood(const HmmModel& model, const Matrix& obs) {
  return forward_backward(model, obs, nullptr);
}

HmmModel fit_hmm(std::span<const FeatureSeries* const> train, const HmmFitOptions& options) {
  if (train.empty()) throw RuntimeError("fit_hmm: empty training set");
  const std::size_t k = options.states;
  if (k == 0) throw RuntimeError("fit_hmm: state count must be >= 1");
  const std::size_t d = train.front()->data.cols();
  std::size_t t_max = 0;
  bool long_enough = false;
  for (const auto* s : train) {
    if (s->data.cols() != d) throw RuntimeError("fit_hmm: training series disagree on channel count");
    t_max = std::max(t_max, s->data.rows());
    long_enough = long_enough || s->data.rows() >= k;
  }
  if (!long_enough) throw RuntimeError("fit_hmm: no training series has at least as many steps as states");

  std::vector<Matrix> seqs;
  seqs.reserve(train.size());
  for (const auto* s : train) seqs.push_back(pad_sequence(s->data, t_max));

  Matrix frames(seqs.size() * t_max, d);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    std::copy(seqs[i].data().begin(), seqs[i].data().end(),
              frames.data().begin() + static_cast<std::ptrdiff_t>(i * t_max * d));
  }

  HmmModel m;
  m.states = k;
  m.dims = d;
  m.t_max = t_max;
  m.em_iters = options.em_iters;
  m.seed = options.seed;
  m.variance_floor = options.variance_floor;

  // Initialization from k-means on every padded frame.
  const auto km = kmeans(frames, k, options.seed, options.kmeans_max_iters, options.kmeans_restarts);
  m.means = km.centroids;
  m.variances = Matrix(k, d);
  {
    std::vector<double> global_mean(d, 0.0), global_var(d, 0.0);
    for (std::size_t i = 0; i < frames.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) global_mean[j] += frames(i, j);
    }
    for (auto& v : global_mean) v /= static_cast<double>(frames.rows());
    for (std::size_t i = 0; i < frames.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) global_var[j] += (frames(i, j) - global_mean[j]) * (frames(i, j) - global_mean[j]);
    }
    for (auto& v : global_var) v /= static_cast<double>(frames.rows());

    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < frames.rows(); ++i) {
      const std::size_t c = km.labels[i];
      ++counts[c];
      for (std::size_t j = 0; j < d; ++j) {
        const double dev = frames(i, j) - m.means(c, j);
        m.variances(c, j) += dev * dev;
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < d; ++j) {
        const double v = counts[c] > 1 ? m.variances(c, j) / static_cast<double>(counts[c]) : global_var[j];
        m.variances(c, j) = std::max(v, options.variance_floor);
      }
    }
  }
  m.transition = Matrix(k, k, 1.0);
  m.initial.assign(k, 1.0);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const std::size_t base = i * t_max;
    m.initial[km.labels[base]] += 1.0;
    for (std::size_t t = 0; t + 1 < t_max; ++t) m.transition(km.labels[base + t], km.labels[base + t + 1]) += 1.0;
  }
  normalize_row(m.initial);
  for (std::size_t r = 0; r < k; ++r) normalize_row(m.transition.row(r));

  for (std::size_t iter = 0; iter < options.em_iters; ++iter) {
    Accumulators acc(k, d);
    double total = 0.0;
    for (const auto& seq : seqs) total += forward_backward(m, seq, &acc);
    m.log_likelihood_trace.push_back(total);
    if (!std::isfinite(total)) {
      throw RuntimeError("HMM EM produced a non-finite log-likelihood at iteration " + std::to_string(iter));
    }

    const double init_total = std::accumulate(acc.initial_sum.begin(), acc.initial_sum.end(), 0.0);
    for (std::size_t s = 0; s < k; ++s) m.initial[s] = acc.initial_sum[s] / init_total;
    for (std::size_t r = 0; r < k; ++r) {
      double row_total = 0.0;
      for (std::size_t s = 0; s < k; ++s) row_total += acc.xi_sum(r, s);
      if (row_total > 0.0) {
        for (std::size_t s = 0; s < k; ++s) m.transition(r, s) = acc.xi_sum(r, s) / row_total;
      }
    }
    for (std::size_t s = 0; s < k; ++s) {
      const double w = acc.gamma_sum[s];
      if (!(w > 0.0)) continue;  // unvisited state keeps its emission
      for (std::size_t j = 0; j < d; ++j) {
        const double mu = acc.gamma_x(s, j) / w;
        // E[x^2] - mu^2 can cancel badly; clamp at the floor.
        const double var = acc.gamma_xx(s, j) / w - mu * mu;
        m.means(s, j) = mu;
        m.variances(s, j) = std::max(var, options.variance_floor);
      }
    }
    check_finite(m, iter);
  }
  double final_total = 0.0;
  for (const auto& seq : seqs) final_total += forward_backward(m, seq, nullptr);
  m.log_likelihood_trace.push_back(final_total);
  return m;
}

HmmModel fit_hmm(std::span<const FeatureSeries> train, const HmmFitOptions& options) {
  std::vector<const FeatureSeries*> ptrs;
  ptrs.reserve(train.size());
  for (const auto& s : train) ptrs.push_back(&s);
  return fit_hmm(std::span<const FeatureSeries* const>(ptrs), options);
}

ViterbiPath viterbi(const HmmModel& m, const Matrix& obs) {
  const std::size_t t_len = obs.rows();
  const std::size_t k = m.states;
  ViterbiPath out;
  if (t_len == 0) return out;
  const Matrix log_b = log_emissions(m, obs);
  const Matrix log_a = log_transition(m);
  std::vector<double> score(k), next(k);
  std::vector<std::size_t> back(t_len * k, 0);
  for (std::size_t s = 0; s < k; ++s) {
    score[s] = (m.initial[s] > 0.0 ? std::log(m.initial[s]) : kNegInf) + log_b(0, s);
  }
  for (std::size_t t = 1; t < t_len; ++t) {
    for (std::size_t s = 0; s < k; ++s) {
      std::size_t arg = 0;
      double best = score[0] + log_a(0, s);
      for (std::size_t r = 1; r < k; ++r) {
        const double v = score[r] + log_a(r, s);
        if (v > best) {
          best = v;
          arg = r;
        }
      }
      next[s] = best + log_b(t, s);
      back[t * k + s] = arg;
    }
    std::swap(score, next);
  }
  std::size_t last = 0;
  for (std::size_t s = 1; s < k; ++s) {
    if (score[s] > score[last]) last = s;
  }
  out.log_score = score[last];
  out.states.assign(t_len, 0);
  out.states[t_len - 1] = last;
  for (std::size_t t = t_len - 1; t > 0; --t) out.states[t - 1] = back[t * k + out.states[t]];
  return out;
}

double path_log_score(const HmmModel& m, const Matrix& obs, std::span<const std::size_t> path) {
  if (path.size() != obs.rows()) throw RuntimeError("path_log_score: path length mismatch");
  if (path.empty()) return 0.0;
  const Matrix log_b = log_emissions(m, obs);
  double s = std::log(m.initial[path[0]]) + log_b(0, path[0]);
  for (std::size_t t = 1; t < path.size(); ++t) s += std::log(m.transition(path[t - 1], path[t])) + log_b(t, path[t]);
  return s;
}

std::vector<double> dynamics_from_path(std::span<const std::size_t> path, std::size_t states, std::size_t t_max) {
  std::vector<double> out(2 * states, 0.0);
  if (t_max == 0) return out;
  std::vector<std::size_t> occupancy(states, 0), runs(states, 0);
  for (std::size_t t = 0; t < path.size(); ++t) {
    ++occupancy[path[t]];
    if (t == 0 || path[t] != path[t - 1]) ++runs[path[t]];
  }
  const double denom = static_cast<double>(t_max);
  for (std::size_t s = 0; s < states; ++s) {
    out[s] = static_cast<double>(occupancy[s]) / denom;
    out[states + s] = static_cast<double>(runs[s]) / denom;
  }
  return out;
}

SummaryVector hmm_dynamics(const HmmModel& model, const FeatureSeries& series, std::size_t* truncations) {
  if (series.data.cols() != model.dims) {
    throw RuntimeError("hmm_dynamics: series has " + std::to_string(series.data.cols()) + " channels, model expects " +
                       std::to_string(model.dims));
  }
  if (series.data.rows() > model.t_max && truncations) ++*truncations;
  const Matrix padded = pad_sequence(series.data, model.t_max);
  const auto path = viterbi(model, padded);
  return {series.participant_id, series.feature_set, SummaryKind::HmmDynamics,
          dynamics_from_path(path.states, model.states, model.t_max)};
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  if (j.size() != rows) throw ValidationError("HMM file: matrix row count mismatch");
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = j.at(r).get<std::vector<double>>();
    if (row.size() != cols) throw ValidationError("HMM file: matrix column count mismatch");
    std::copy(row.begin(), row.end(), m.row(r).begin());
  }
  return m;
}

}  // namespace

std::string hmm_to_json(const HmmModel& m) {
  nlohmann::ordered_json j;
  j["states"] = m.states;
  j["dims"] = m.dims;
  j["t_max"] = m.t_max;
  j["em_iters"] = m.em_iters;
  j["seed"] = m.seed;
  j["variance_floor"] = m.variance_floor;
  j["initial"] = m.initial;
  j["transition"] = matrix_to_json(m.transition);
  j["means"] = matrix_to_json(m.means);
  j["variances"] = matrix_to_json(m.variances);
  j["log_likelihood_trace"] = m.log_likelihood_trace;
  return j.dump(2) + "\n";
}

HmmModel hmm_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    HmmModel m;
    m.states = j.at("states").get<std::size_t>();
    m.dims = j.at("dims").get<std::size_t>();
    m.t_max = j.at("t_max").get<std::size_t>();
    m.em_iters = j.at("em_iters").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.variance_floor = j.at("variance_floor").get<double>();
    m.initial = j.at("initial").get<std::vector<double>>();
    m.transition = matrix_from_json(j.at("transition"), m.states, m.states);
    m.means = matrix_from_json(j.at("means"), m.states, m.dims);
    m.variances = matrix_from_json(j.at("variances"), m.states, m.dims);
    m.log_likelihood_trace = j.at("log_likelihood_trace").get<std::vector<double>>();
    if (m.initial.size() != m.states) throw ValidationError("HMM file: initial distribution has wrong length");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("HMM file: ") + e.what());
  }
}

}  // namespace mmscreen
