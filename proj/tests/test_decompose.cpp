#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "fmd/decompose.hpp"

using namespace fmd;

namespace {

const FiberSpec kFiber{4.1, 0.14, 1.073};

const ModeBasis& basis32() {
  static const ModeBasis b = sample_basis(kFiber, default_grid(kFiber, 32), 3);
  return b;
}

BeamImage pattern(const ModeCoefficients& c) {
  return intensity(superpose(basis32(), c), true);
}

bool coeffs_close(const ModeCoefficients& a, const ModeCoefficients& b,
                  double tol) {
  for (std::size_t i = 0; i < a.weights.size(); ++i) {
    if (std::abs(a.weights[i] - b.weights[i]) > tol) return false;
  }
  for (std::size_t i = 0; i < a.phases.size(); ++i) {
    if (std::abs(a.phases[i] - b.phases[i]) > tol) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("disambiguate enumerates conjugate candidate pairs") {
  const ModeCoefficients truth{{0.5, 0.3, 0.2}, {0.8, -1.4}};
  const BeamImage img = pattern(truth);
  std::vector<double> mags = {std::abs(truth.phases[0]),
                              std::abs(truth.phases[1])};
  int evaluated = 0;
  const ModeCoefficients best =
      disambiguate(basis32(), img, truth.weights, mags, &evaluated);
  CHECK(evaluated == 4);

  // the four candidates form two conjugate pairs with identical intensity
  for (int mask = 0; mask < 4; ++mask) {
    ModeCoefficients cand{truth.weights,
                          {(mask & 1) ? -mags[0] : mags[0],
                           (mask & 2) ? -mags[1] : mags[1]}};
    const BeamImage ci = intensity(superpose(basis32(), cand), false);
    const BeamImage conj_i =
        intensity(superpose(basis32(), cand.conjugated()), false);
    double max_diff = 0.0;
    for (std::size_t p = 0; p < ci.size(); ++p) {
      max_diff = std::max(max_diff, std::abs(ci.pixels[p] - conj_i.pixels[p]));
    }
    CHECK(max_diff < 1e-12);
    CHECK(correlation(img, ci) ==
          Catch::Approx(correlation(img, conj_i)).margin(1e-9));
  }

  // the winner reproduces the input (it is the truth or its conjugate)
  const BeamImage recon = intensity(superpose(basis32(), best), true);
  CHECK(correlation(img, recon) >= 0.9999);
  CHECK((coeffs_close(best, truth, 1e-9) ||
         coeffs_close(best, truth.conjugated(), 1e-9)));
}

TEST_CASE("zero and pi phases collapse the candidate set") {
  const ModeCoefficients truth{{0.4, 0.35, 0.25}, {0.0, std::numbers::pi}};
  const BeamImage img = pattern(truth);
  const ModeCoefficients best = disambiguate(
      basis32(), img, truth.weights, {0.0, std::numbers::pi}, nullptr);
  const BeamImage recon = intensity(superpose(basis32(), best), true);
  CHECK(correlation(img, recon) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("disambiguate self-consistency on random samples") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 25; ++t) {
    const auto truth = sample_coefficients(rng, 3);
    const BeamImage img = pattern(truth);
    std::vector<double> mags;
    for (double p : truth.phases) mags.push_back(std::abs(p));
    const ModeCoefficients best =
        disambiguate(basis32(), img, truth.weights, mags, nullptr);
    CHECK(correlation(img, intensity(superpose(basis32(), best), true)) >=
          0.9999);
    // tie-break canonicalization: first nonzero phase is nonnegative when
    // the conjugate pair is exactly degenerate
    if (!best.phases.empty() && best.phases[0] != 0.0) {
      const double c_best = correlation(
          img, intensity(superpose(basis32(), best), false));
      const double c_conj = correlation(
          img, intensity(superpose(basis32(), best.conjugated()), false));
      if (std::abs(c_best - c_conj) < 1e-12) CHECK(best.phases[0] >= 0.0);
    }
  }
}

TEST_CASE("decompose completes with an untrained network") {
  NetworkConfig cfg = NetworkConfig::compact_preset(3);
  cfg.input_resolution = 32;
  Network net(cfg);  // zero weights: every output is exactly 0.5

  std::mt19937_64 rng(9);
  const auto truth = sample_coefficients(rng, 3);
  const BeamImage img = pattern(truth);
  const DecompositionResult r = decompose(net, basis32(), img);
  CHECK(r.candidates_evaluated == 4);
  for (double w : r.coefficients.weights) {
    CHECK(w == Catch::Approx(1.0 / 3.0).margin(1e-12));
  }
  for (double p : r.coefficients.phases) {
    CHECK(std::abs(p) == Catch::Approx(std::numbers::pi / 2.0).margin(1e-9));
  }
  CHECK(r.correlation >= 0.0);
  CHECK(r.correlation <= 1.0);
  // the reported correlation is reproducible from the reconstruction
  CHECK(r.correlation ==
        Catch::Approx(correlation(img, r.reconstructed)).margin(1e-12));
}

TEST_CASE("decompose is deterministic") {
  NetworkConfig cfg = NetworkConfig::compact_preset(3);
  cfg.input_resolution = 32;
  Network net(cfg);
  net.init_weights(5);
  std::mt19937_64 rng(11);
  const BeamImage img = pattern(sample_coefficients(rng, 3));
  const DecompositionResult a = decompose(net, basis32(), img);
  const DecompositionResult b = decompose(net, basis32(), img);
  CHECK(a.coefficients.weights == b.coefficients.weights);
  CHECK(a.coefficients.phases == b.coefficients.phases);
  CHECK(a.correlation == b.correlation);
}

TEST_CASE("spgd with zero iterations returns the initialization") {
  std::mt19937_64 rng(13);
  const auto truth = sample_coefficients(rng, 3);
  const BeamImage img = pattern(truth);
  const ModeCoefficients out =
      spgd_refine(basis32(), img, truth, {0.8, 0.05, 0});
  CHECK(coeffs_close(out, truth, 1e-12));
}

TEST_CASE("spgd never degrades the correlation") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 5; ++t) {
    const auto truth = sample_coefficients(rng, 3);
    const BeamImage img = pattern(truth);
    const double c0 =
        correlation(img, intensity(superpose(basis32(), truth), false));
    const ModeCoefficients refined =
        spgd_refine(basis32(), img, truth, {0.8, 0.05, 100, 17});
    const double c1 =
        correlation(img, intensity(superpose(basis32(), refined), false));
    CHECK(c1 >= c0 - 1e-12);
  }
}

TEST_CASE("spgd improves a perturbed initialization") {
  std::mt19937_64 rng(19);
  int improved = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    auto truth = sample_coefficients(rng, 3);
    const BeamImage img = pattern(truth);

    // 5% weight perturbation, renormalized
    ModeCoefficients init = truth;
    std::normal_distribution<double> gauss(0.0, 0.05);
    double sum = 0.0;
    for (double& w : init.weights) {
      w = std::max(1e-6, w * (1.0 + gauss(rng)));
      sum += w;
    }
    for (double& w : init.weights) w /= sum;

    const double c0 =
        correlation(img, intensity(superpose(basis32(), init), false));
    const auto refined =
        spgd_refine(basis32(), img, init, {0.8, 0.05, 500, 19u + static_cast<std::uint64_t>(t)});
    const double c1 =
        correlation(img, intensity(superpose(basis32(), refined), false));
    if (c1 > c0) ++improved;
  }
  CHECK(improved >= 95);
}

TEST_CASE("brute force recovers on-grid coefficients") {
  const int g = 21;
  // grid points: weights multiples of 1/20, phases on the 21-point grid
  const double pi = std::numbers::pi;
  const ModeCoefficients truth{
      {8.0 / 20, 7.0 / 20, 5.0 / 20},
      {-pi + 2 * pi * 14.0 / 20, -pi + 2 * pi * 6.0 / 20}};
  const BeamImage img = pattern(truth);
  const ModeCoefficients found = brute_force_decompose(basis32(), img, g);
  CHECK(correlation(img, intensity(superpose(basis32(), found), true)) >
        0.999999);
  CHECK((coeffs_close(found, truth, 1e-9) ||
         coeffs_close(found, truth.conjugated(), 1e-9)));
}

TEST_CASE("brute force expansion agrees with the direct correlation") {
  // cross-check the pairwise-product expansion against superpose+correlate
  std::mt19937_64 rng(23);
  const auto truth = sample_coefficients(rng, 3);
  const BeamImage img = pattern(truth);
  const ModeCoefficients found = brute_force_decompose(basis32(), img, 9);
  const double direct =
      correlation(img, intensity(superpose(basis32(), found), false));
  // the found candidate must beat a handful of random candidates when
  // scored by the independent direct route
  for (int t = 0; t < 10; ++t) {
    const auto rand_c = sample_coefficients(rng, 3);
    const double c =
        correlation(img, intensity(superpose(basis32(), rand_c), false));
    CHECK(direct >= c - 1e-9);
  }
}

TEST_CASE("brute force off-grid quality (golden fixture)") {
  std::mt19937_64 rng(29);
  double corr_sum = 0.0;
  const int trials = 5;
  for (int t = 0; t < trials; ++t) {
    const auto truth = sample_coefficients(rng, 3);
    const BeamImage img = pattern(truth);
    const ModeCoefficients found = brute_force_decompose(basis32(), img, 21);
    corr_sum +=
        correlation(img, intensity(superpose(basis32(), found), true));
  }
  CHECK(corr_sum / trials >= 0.98);
}

TEST_CASE("brute force refuses more than 3 modes") {
  const FiberSpec ten{12.5, 0.08, 1.064};
  const ModeBasis b = sample_basis(ten, default_grid(ten, 32), 5);
  std::mt19937_64 rng(31);
  const BeamImage img = intensity(superpose(b, sample_coefficients(rng, 5)), true);
  CHECK_THROWS_AS(brute_force_decompose(b, img, 5), TooManyModes);
}

TEST_CASE("spgd agrees with brute force up to refinement") {
  std::mt19937_64 rng(37);
  const auto truth = sample_coefficients(rng, 3);
  const BeamImage img = pattern(truth);
  const ModeCoefficients coarse = brute_force_decompose(basis32(), img, 11);
  const double c0 =
      correlation(img, intensity(superpose(basis32(), coarse), false));
  const ModeCoefficients refined =
      spgd_refine(basis32(), img, coarse, {0.8, 0.05, 500, 37});
  const double c1 =
      correlation(img, intensity(superpose(basis32(), refined), false));
  CHECK(c1 >= c0 - 1e-12);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(refined.weights[i] - coarse.weights[i]) < 0.15);
  }
}
