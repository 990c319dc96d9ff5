#include <doctest.h>

#include "mmscreen/attribution.hpp"
#include "mmscreen/error.hpp"
#include "mmscreen/learners.hpp"
#include "support.hpp"

using namespace mmscreen;

TEST_CASE("additive model is attributed exactly") {
  const ModelFn f = [](std::span<const double> x) { return x[0] + x[1]; };
  const double x[] = {2, 3}, bg[] = {0, 0};
  for (std::size_t perms : {1u, 2u, 7u, 64u}) {
    const auto phi = shap_values(f, x, bg, perms, 5);
    CHECK(phi[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(phi[1] == doctest::Approx(3.0).epsilon(1e-12));
  }
}

TEST_CASE("constant model has zero attribution") {
  const ModelFn f = [](std::span<const double>) { return 0.7; };
  const double x[] = {1, 2, 3}, bg[] = {0, 0, 0};
  for (double v : shap_values(f, x, bg, 16, 1)) CHECK(v == 0.0);
}

TEST_CASE("sampled values match exact enumeration on an interaction model") {
  const ModelFn f = [](std::span<const double> x) { return x[0] * x[1] + std::sin(x[2]) * x[3] + x[4]; };
  const double x[] = {1.0, -2.0, 0.5, 3.0, 1.5}, bg[] = {0.2, 0.1, -0.3, 0.0, 0.4};
  const auto exact = testing::exact_shapley(f, x, bg);
  const auto est = shap_values(f, x, bg, 4000, 11);
  for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(est[j] - exact[j]) <= 0.05);
}

TEST_CASE("efficiency: values sum to f(x) - f(background)") {
  const ModelFn f = [](std::span<const double> x) { return std::exp(0.3 * x[0]) * x[1] - x[2] * x[2]; };
  const double x[] = {1, 2, 3}, bg[] = {0, 0, 1};
  const auto phi = shap_values(f, x, bg, 10, 3);
  CHECK(phi[0] + phi[1] + phi[2] == doctest::Approx(f(x) - f(bg)).epsilon(1e-12));
}

TEST_CASE("modality shares per sample") {
  const double phi[] = {0.2, -0.2, 0.8};
  const std::size_t blocks[] = {2, 1};
  const auto s = mm_shap_sample(phi, blocks);
  CHECK(s[0] == doctest::Approx(0.2));
  CHECK(s[1] == doctest::Approx(0.8));
  const double one[] = {0.3, 0.1};
  const std::size_t single[] = {2};
  CHECK(mm_shap_sample(one, single) == std::vector<double>{1.0});
  const double zero[] = {0, 0, 0};
  const std::size_t three[] = {1, 1, 1};
  for (double v : mm_shap_sample(zero, three)) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("duplicating a block's channels leaves shares unchanged") {
  const double phi[] = {0.1, 0.5, 0.3};
  const std::size_t blocks[] = {1, 2};
  const double dup[] = {0.1, 0.5, 0.3, 0.5, 0.3};
  const std::size_t dup_blocks[] = {1, 4};
  const auto a = mm_shap_sample(phi, blocks), b = mm_shap_sample(dup, dup_blocks);
  for (std::size_t m = 0; m < 2; ++m) CHECK(std::abs(a[m] - b[m]) <= 1e-9);
}

TEST_CASE("global shares average the samples") {
  const Matrix s(2, 2, std::vector<double>{0.3, 0.7, 0.5, 0.5});
  const auto g = mm_shap_global(s);
  CHECK(g[0] == doctest::Approx(0.4));
  CHECK(g[1] == doctest::Approx(0.6));
  const Matrix same(2, 2, std::vector<double>{0.25, 0.75, 0.25, 0.75});
  CHECK(mm_shap_global(same) == std::vector<double>{0.25, 0.75});
  const Matrix single(1, 3, std::vector<double>{0.2, 0.3, 0.5});
  CHECK(mm_shap_global(single) == std::vector<double>{0.2, 0.3, 0.5});
}

TEST_CASE("block-mean explanation matches the joint model") {
  const ModelFn f1 = [](std::span<const double> x) { return sigmoid(x[0] - x[1]); };
  const ModelFn f2 = [](std::span<const double> x) { return sigmoid(2 * x[0]); };
  const std::vector<ModelFn> fns = {f1, f2};
  const std::vector<std::string> names = {"one", "two"};
  const std::vector<Matrix> samples = {Matrix(2, 2, std::vector<double>{1, 0, -1, 2}),
                                       Matrix(2, 1, std::vector<double>{0.5, -0.3})};
  const std::vector<std::vector<double>> bgs = {{0, 0}, {0}};
  const auto r = explain_block_mean(fns, names, samples, bgs, 64, 9);
  const ModelFn joint = [&](std::span<const double> z) { return 0.5 * (f1(z.subspan(0, 2)) + f2(z.subspan(2, 1))); };
  for (std::size_t i = 0; i < 2; ++i) {
    const std::vector<double> x = {samples[0](i, 0), samples[0](i, 1), samples[1](i, 0)};
    const std::vector<double> bg = {0, 0, 0};
    const auto exact = testing::exact_shapley(joint, x, bg);
    // f1 has two features, so sampling error remains; f2 is exact.
    CHECK(r.phi(i, 2) == doctest::Approx(exact[2]).epsilon(1e-12));
    CHECK(r.phi(i, 0) + r.phi(i, 1) == doctest::Approx(exact[0] + exact[1]).epsilon(1e-12));
  }
  CHECK_NOTHROW(check_normalization(r));
  CHECK(r.block_sizes == std::vector<std::size_t>{2, 1});
}
