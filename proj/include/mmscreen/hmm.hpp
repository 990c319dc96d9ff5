#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmscreen/cohort.hpp"
#include "mmscreen/matrix.hpp"
#include "mmscreen/temporal.hpp"

namespace mmscreen {

// Gaussian HMM with diagonal covariances, fit jointly to all training
// participants of a fold.
struct HmmModel {
  std::size_t states = 0;
  std::size_t dims = 0;
  Matrix means;       // states x dims
  Matrix variances;   // states x dims, each >= variance_floor
  Matrix transition;  // states x states, row-stochastic
  std::vector<double> initial;
  std::size_t t_max = 0;  // every sequence is zero-padded to this length
  std::size_t em_iters = 0;
  std::uint64_t seed = 0;
  double variance_floor = 1e-6;
  // Total training log-likelihood at the start of each EM iteration, followed
  // by the value after the final M-step (em_iters + 1 entries).
  std::vector<double> log_likelihood_trace;

  friend bool operator==(const HmmModel&, const HmmModel&) = default;
};

struct HmmFitOptions {
  std::size_t states = 4;
  std::size_t em_iters = 20;
  std::uint64_t seed = 42;
  double variance_floor = 1e-6;
  std::size_t kmeans_max_iters = 100;
  std::size_t kmeans_restarts = 10;
};

HmmModel fit_hmm(std::span<const FeatureSeries* const> train, const HmmFitOptions& options);
HmmModel fit_hmm(std::span<const FeatureSeries> train, const HmmFitOptions& options);

// Zero-pads (or truncates) a T x D sequence to exactly t_max rows.
Matrix pad_sequence(const Matrix& data, std::size_t t_max);

// Per-state log emission densities, T x states.
Matrix log_emissions(const HmmModel& model, const Matrix& obs);

// Forward-algorithm log-likelihood of one (already padded) sequence.
double sequence_log_likelihood(const HmmModel& model, const Matrix& obs);

struct ViterbiPath {
  std::vector<std::size_t> states;
  double log_score = 0.0;
};

ViterbiPath viterbi(const HmmModel& model, const Matrix& obs);

// Joint log-probability of a given state path and the observations.
double path_log_score(const HmmModel& model, const Matrix& obs, std::span<const std::size_t> path);

// Occupancy then run-count per state, both divided by t_max (length 2K).
std::vector<double> dynamics_from_path(std::span<const std::size_t> path, std::size_t states, std::size_t t_max);

// Pads to t_max, decodes the Viterbi path and summarizes it. Series longer
// than t_max are truncated and counted in *truncations when provided.
SummaryVector hmm_dynamics(const HmmModel& model, const FeatureSeries& series, std::size_t* truncations = nullptr);

std::string hmm_to_json(const HmmModel& model);
HmmModel hmm_from_json(std::string_view text);

}  // namespace mmscreen
