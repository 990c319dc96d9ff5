#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmscreen/matrix.hpp"

namespace mmscreen {

using ModelFn = std::function<double(std::span<const double>)>;

// Permutation-sampling Shapley values of f at x against a single background
// vector. Permutations come in antithetic pairs (an order and its reverse).
// For every permutation the marginal contributions telescope to
// f(x) - f(background).
std::vector<double> shap_values(const ModelFn& f, std::span<const double> x, std::span<const double> background,
                                std::size_t permutations, std::uint64_t seed);

// Per-modality share of one sample: mean |phi| within each contiguous block,
// normalized to sum to 1; uniform when every phi is zero.
std::vector<double> mm_shap_sample(std::span<const double> phi, std::span<const std::size_t> block_sizes);

// Average of per-sample shares.
std::vector<double> mm_shap_global(const Matrix& sample_shares);

struct ShapReport {
  std::vector<std::string> modalities;
  std::vector<std::size_t> block_sizes;
  Matrix phi;     // samples x total features
  Matrix shares;  // samples x modalities
  std::vector<double> global;
  std::size_t permutations = 0;
  std::uint64_t seed = 0;
  std::string background = "training-fold feature means";
};

// Explains f(z) = mean_m f_m(z_m) where z concatenates the blocks z_m.
// Each block is attributed through its own model only; features outside a
// block do not move f_m, so the full Shapley values are the per-block values
// scaled by 1 / (number of blocks).
ShapReport explain_block_mean(std::span<const ModelFn> block_models, std::span<const std::string> names,
                              std::span<const Matrix> samples, std::span<const std::vector<double>> backgrounds,
                              std::size_t permutations, std::uint64_t seed);

// Throws RuntimeError if any per-sample or global share vector misses 1 by
// more than tol.
void check_normalization(const ShapReport& report, double tol = 1e-9);

}  // namespace mmscreen
