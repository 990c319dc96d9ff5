#include "mmscreen/attribution.hpp"

#include <cmath>
#include <numeric>

#include "mmscreen/error.hpp"
#include "mmscreen/rng.hpp"

namespace mmscreen {

namespace {

// Walks one permutation from background to x, adding marginal changes to phi.
void accumulate_walk(const ModelFn& f, std::span<const double> x, std::span<const double> background,
                     std::span<const std::size_t> order, double f_background, std::vector<double>& z,
                     std::span<double> phi) {
  std::copy(background.begin(), background.end(), z.begin());
  double prev = f_background;
  for (std::size_t j : order) {
    z[j] = x[j];
    const double cur = f(z);
    phi[j] += cur - prev;
    prev = cur;
  }
}

}  // namespace

std::vector<double> shap_values(const ModelFn& f, std::span<const double> x, std::span<const double> background,
                                std::size_t permutations, std::uint64_t seed) {
  if (x.size() != background.size()) throw RuntimeError("shap_values: x and background differ in length");
  if (permutations == 0) throw RuntimeError("shap_values: need at least one permutation");
  const std::size_t d = x.size();
  std::vector<double> phi(d, 0.0);
  if (d == 0) return phi;

  const double f_background = f(background);
  std::vector<double> z(d);
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::size_t done = 0;
  while (done < permutations) {
    rng.shuffle(std::span<std::size_t>(order));
    accumulate_walk(f, x, background, order, f_background, z, phi);
    ++done;
    if (done < permutations) {
      std::vector<std::size_t> reversed(order.rbegin(), order.rend());
      accumulate_walk(f, x, background, reversed, f_background, z, phi);
      ++done;
    }
  }
  for (auto& v : phi) v /= static_cast<double>(permutations);
  return phi;
}

std::vector<double> mm_shap_sample(std::span<const double> phi, std::span<const std::size_t> block_sizes) {
  const std::size_t m = block_sizes.size();
  if (m == 0) throw RuntimeError("mm_shap_sample: no modalities");
  if (std::accumulate(block_sizes.begin(), block_sizes.end(), std::size_t{0}) != phi.size()) {
    throw RuntimeError("mm_shap_sample: block sizes do not partition phi");
  }
  std::vector<double> share(m, 0.0);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < m; ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < block_sizes[k]; ++j) s += std::abs(phi[offset + j]);
    share[k] = block_sizes[k] > 0 ? s / static_cast<double>(block_sizes[k]) : 0.0;
    offset += block_sizes[k];
  }
  const double total = std::accumulate(share.begin(), share.end(), 0.0);
  if (!(total > 0.0)) {
    std::fill(share.begin(), share.end(), 1.0 / static_cast<double>(m));
    return share;
  }
  for (auto& v : share) v /= total;
  return share;
}

std::vector<double> mm_shap_global(const Matrix& sample_shares) {
  if (sample_shares.rows() == 0) throw RuntimeError("mm_shap_global: no samples");
  std::vector<double> out(sample_shares.cols(), 0.0);
  for (std::size_t i = 0; i < sample_shares.rows(); ++i) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += sample_shares(i, k);
  }
  for (auto& v : out) v /= static_cast<double>(sample_shares.rows());
  return out;
}

ShapReport explain_block_mean(std::span<const ModelFn> block_models, std::span<const std::string> names,
                              std::span<const Matrix> samples, std::span<const std::vector<double>> backgrounds,
                              std::size_t permutations, std::uint64_t seed) {
  const std::size_t m = block_models.size();
  if (m == 0 || names.size() != m || samples.size() != m || backgrounds.size() != m) {
    throw RuntimeError("explain_block_mean: block inputs disagree in count");
  }
  const std::size_t n = samples[0].rows();
  ShapReport report;
  report.modalities.assign(names.begin(), names.end());
  report.permutations = permutations;
  report.seed = seed;
  std::size_t total = 0;
  for (std::size_t k = 0; k < m; ++k) {
    if (samples[k].rows() != n) throw RuntimeError("explain_block_mean: blocks disagree in sample count");
    if (backgrounds[k].size() != samples[k].cols()) throw RuntimeError("explain_block_mean: background size");
    report.block_sizes.push_back(samples[k].cols());
    total += samples[k].cols();
  }
  report.phi = Matrix(n, total);
  report.shares = Matrix(n, m);
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < m; ++k) {
      auto phi = shap_values(block_models[k], samples[k].row(i), backgrounds[k], permutations,
                             derive_seed(seed, {i, k}));
      for (std::size_t j = 0; j < phi.size(); ++j) report.phi(i, offset + j) = phi[j] * scale;
      offset += phi.size();
    }
    auto share = mm_shap_sample(report.phi.row(i), report.block_sizes);
    std::copy(share.begin(), share.end(), report.shares.row(i).begin());
  }
  report.global = n > 0 ? mm_shap_global(report.shares) : std::vector<double>(m, 1.0 / static_cast<double>(m));
  check_normalization(report);
  return report;
}

void check_normalization(const ShapReport& report, double tol) {
  auto check = [&](std::span<const double> v, const char* what) {
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    if (std::abs(s - 1.0) > tol) throw RuntimeError(std::string("MM-SHAP ") + what + " shares do not sum to 1");
  };
  for (std::size_t i = 0; i < report.shares.rows(); ++i) check(report.shares.row(i), "per-sample");
  check(report.global, "global");
}

}  // namespace mmscreen
