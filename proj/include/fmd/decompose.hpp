#pragma once

// End-to-end mode decomposition: one network forward pass yields modal
// weights and phase magnitudes, the phase signs are recovered by
// enumerating all 2^(N-1) candidates and keeping the one whose
// reconstruction correlates best with the input. SPGD refinement and an
// exhaustive grid-search oracle round out the module.

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "fmd/cnn.hpp"
#include "fmd/errors.hpp"
#include "fmd/field_synth.hpp"
#include "fmd/fiber_modes.hpp"
#include "fmd/metrics.hpp"

namespace fmd {

struct DecompositionResult {
  ModeCoefficients coefficients;
  double correlation = 0.0;
  BeamImage reconstructed;
  int candidates_evaluated = 0;
  double elapsed_ms = 0.0;
  double forward_ms = 0.0;
  double disambiguation_ms = 0.0;
};

namespace detail {

inline double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// True when `a` beats `b` under the deterministic tie-break: higher
// correlation wins; within 1e-12 the candidate whose first nonzero phase
// is nonnegative wins.
inline bool candidate_beats(double corr_a, const ModeCoefficients& a,
                            double corr_b, const ModeCoefficients& b) {
  if (corr_a > corr_b + 1e-12) return true;
  if (corr_a < corr_b - 1e-12) return false;
  auto first_nonzero = [](const ModeCoefficients& c) {
    for (double t : c.phases) {
      if (t != 0.0) return t;
    }
    return 0.0;
  };
  return first_nonzero(a) >= 0.0 && first_nonzero(b) < 0.0;
}

}  // namespace detail

/// Resolve the conjugate sign ambiguity: try every sign assignment
/// theta_n = +/-|theta_n|, reconstruct, return the correlation argmax.
inline ModeCoefficients disambiguate(const ModeBasis& basis,
                                     const BeamImage& image,
                                     const std::vector<double>& weights,
                                     const std::vector<double>& magnitude_phases,
                                     int* candidates_evaluated = nullptr) {
  const int n = basis.mode_count();
  if (static_cast<int>(weights.size()) != n ||
      static_cast<int>(magnitude_phases.size()) != n - 1) {
    throw DimensionMismatch("disambiguate weight/phase counts must match basis");
  }
  const int n_candidates = 1 << (n - 1);
  ModeCoefficients best;
  double best_corr = -1.0;
  for (int mask = 0; mask < n_candidates; ++mask) {
    ModeCoefficients cand;
    cand.weights = weights;
    cand.phases.resize(n - 1);
    for (int i = 0; i < n - 1; ++i) {
      cand.phases[i] =
          (mask >> i) & 1 ? -magnitude_phases[i] : magnitude_phases[i];
    }
    const double corr =
        correlation(image, intensity(superpose(basis, cand), false));
    if (best_corr < 0.0 ||
        detail::candidate_beats(corr, cand, best_corr, best)) {
      best_corr = corr;
      best = cand;
    }
  }
  if (candidates_evaluated) *candidates_evaluated = n_candidates;
  return best;
}

/// Full pipeline for one image: forward pass, label decoding, sign
/// disambiguation, reconstruction.
inline DecompositionResult decompose(const Network& net, const ModeBasis& basis,
                                     const BeamImage& image) {
  const double t0 = detail::now_ms();
  const Eigen::MatrixXd out = net.forward(image);
  LabelVector label;
  label.values.assign(out.data(), out.data() + out.rows());
  const DecodedLabel decoded = decode_label(label);
  const double t1 = detail::now_ms();

  DecompositionResult result;
  result.coefficients =
      disambiguate(basis, image, decoded.weights, decoded.magnitude_phases,
                   &result.candidates_evaluated);
  const double t2 = detail::now_ms();

  result.reconstructed = intensity(superpose(basis, result.coefficients), true);
  result.correlation = correlation(image, result.reconstructed);
  result.forward_ms = t1 - t0;
  result.disambiguation_ms = t2 - t1;
  result.elapsed_ms = detail::now_ms() - t0;
  return result;
}

struct SpgdConfig {
  double gain = 0.8;
  double perturbation = 0.05;
  int iterations = 1000;
  std::uint64_t seed = 0;
};

/// Stochastic parallel gradient descent on the correlation objective over
/// an unconstrained parameterization (weight logits g, phases theta) with
/// weights g_n^2 / sum g^2, so the simplex constraint holds by
/// construction. The best coefficients seen, including the initialization,
/// are returned.
inline ModeCoefficients spgd_refine(const ModeBasis& basis,
                                    const BeamImage& image,
                                    const ModeCoefficients& init,
                                    const SpgdConfig& cfg = {}) {
  init.validate();
  const int n = basis.mode_count();
  if (init.mode_count() != n) {
    throw DimensionMismatch("init coefficient count must match basis");
  }
  const int dim = 2 * n - 1;  // n logits + n-1 phases

  std::vector<double> x(dim);
  for (int i = 0; i < n; ++i) x[i] = std::sqrt(init.weights[i]);
  for (int i = 0; i < n - 1; ++i) x[n + i] = init.phases[i];

  auto to_coeffs = [n](const std::vector<double>& v) {
    ModeCoefficients c;
    c.weights.resize(n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += v[i] * v[i];
    if (sum <= 0.0) sum = 1.0;
    for (int i = 0; i < n; ++i) c.weights[i] = v[i] * v[i] / sum;
    c.phases.resize(n - 1);
    for (int i = 0; i < n - 1; ++i) {
      // wrap into [-pi, pi]
      double t = std::remainder(v[n + i], 2.0 * std::numbers::pi);
      c.phases[i] = t;
    }
    return c;
  };
  auto objective = [&](const std::vector<double>& v) {
    return correlation(image, intensity(superpose(basis, to_coeffs(v)), false));
  };

  double best_obj = objective(x);
  std::vector<double> best_x = x;

  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> delta(dim), plus(dim), minus(dim);
  for (int it = 0; it < cfg.iterations; ++it) {
    for (int i = 0; i < dim; ++i) {
      delta[i] = coin(rng) ? cfg.perturbation : -cfg.perturbation;
      plus[i] = x[i] + delta[i];
      minus[i] = x[i] - delta[i];
    }
    const double j_plus = objective(plus);
    const double j_minus = objective(minus);
    const double step = cfg.gain * (j_plus - j_minus);
    for (int i = 0; i < dim; ++i) x[i] += step * delta[i];
    const double obj = objective(x);
    if (obj > best_obj) {
      best_obj = obj;
      best_x = x;
    }
  }
  return to_coeffs(best_x);
}

/// Exhaustive grid search over the weight simplex and the phase cube,
/// restricted to N <= 3. The candidate intensity is expanded over the
/// pairwise products psi_n*psi_m so every grid point costs O(N^4) scalar
/// work instead of a full image synthesis; the expansion is algebraically
/// identical to superpose + intensity + correlation.
inline ModeCoefficients brute_force_decompose(const ModeBasis& basis,
                                              const BeamImage& image,
                                              int grid_steps) {
  const int n = basis.mode_count();
  if (n > 3) {
    throw TooManyModes("brute_force_decompose supports at most 3 modes");
  }
  if (grid_steps < 2) throw DimensionMismatch("grid_steps must be >= 2");
  if (image.height != basis.resolution() || image.width != basis.resolution()) {
    throw DimensionMismatch("image resolution must match basis grid");
  }

  const std::size_t npix = image.size();
  // pair products P_k, k indexes the upper triangle (n <= m)
  struct Pair {
    int a, b;
  };
  std::vector<Pair> pairs;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) pairs.push_back({i, j});
  }
  const int np = static_cast<int>(pairs.size());

  double mean_m = 0.0;
  for (double p : image.pixels) mean_m += p;
  mean_m /= npix;
  double var_m = 0.0;
  for (double p : image.pixels) var_m += (p - mean_m) * (p - mean_m);
  if (var_m <= 0.0) throw ConstantImage("constant input image");

  // a_k = <dI_m, P_k>, s_k = sum(P_k), G_kl = <P_k, P_l>
  std::vector<double> a(np, 0.0), s(np, 0.0);
  std::vector<double> gram(static_cast<std::size_t>(np) * np, 0.0);
  {
    std::vector<std::vector<double>> prod(np);
    for (int k = 0; k < np; ++k) {
      prod[k].resize(npix);
      const auto& fa = basis.fields[pairs[k].a];
      const auto& fb = basis.fields[pairs[k].b];
      for (std::size_t p = 0; p < npix; ++p) prod[k][p] = fa[p] * fb[p];
      for (std::size_t p = 0; p < npix; ++p) {
        a[k] += (image.pixels[p] - mean_m) * prod[k][p];
        s[k] += prod[k][p];
      }
    }
    for (int k = 0; k < np; ++k) {
      for (int l = k; l < np; ++l) {
        double g = 0.0;
        for (std::size_t p = 0; p < npix; ++p) g += prod[k][p] * prod[l][p];
        gram[static_cast<std::size_t>(k) * np + l] = g;
        gram[static_cast<std::size_t>(l) * np + k] = g;
      }
    }
  }

  // correlation of the candidate against the image from its expansion
  // coefficients alpha (I_r = sum_k alpha_k P_k)
  std::vector<double> alpha(np);
  auto candidate_correlation = [&](const ModeCoefficients& c) {
    for (int k = 0; k < np; ++k) {
      const int i = pairs[k].a, j = pairs[k].b;
      if (i == j) {
        alpha[k] = c.weights[i];
      } else {
        alpha[k] = 2.0 * std::sqrt(c.weights[i] * c.weights[j]) *
                   std::cos(c.phase(i) - c.phase(j));
      }
    }
    double num = 0.0, sum_r = 0.0, sq_r = 0.0;
    for (int k = 0; k < np; ++k) {
      num += alpha[k] * a[k];
      sum_r += alpha[k] * s[k];
      double row = 0.0;
      for (int l = 0; l < np; ++l) {
        row += gram[static_cast<std::size_t>(k) * np + l] * alpha[l];
      }
      sq_r += alpha[k] * row;
    }
    const double var_r = sq_r - sum_r * sum_r / npix;
    if (var_r <= 0.0) return 0.0;
    return std::abs(num) / std::sqrt(var_m * var_r);
  };

  // uniform grids: weights on {0, 1/(G-1), ..., 1} summing to 1, phases on
  // G points spanning [-pi, pi]
  const int g = grid_steps;
  std::vector<double> phase_grid(g);
  for (int i = 0; i < g; ++i) {
    phase_grid[i] = -std::numbers::pi + 2.0 * std::numbers::pi * i / (g - 1);
  }

  ModeCoefficients best;
  double best_corr = -1.0;
  auto consider = [&](const ModeCoefficients& c) {
    const double corr = candidate_correlation(c);
    if (corr > best_corr) {
      best_corr = corr;
      best = c;
    }
  };

  ModeCoefficients c;
  c.weights.resize(n);
  c.phases.assign(n - 1, 0.0);
  if (n == 1) {
    c.weights[0] = 1.0;
    consider(c);
  } else if (n == 2) {
    for (int i = 0; i < g; ++i) {
      c.weights[0] = static_cast<double>(i) / (g - 1);
      c.weights[1] = 1.0 - c.weights[0];
      for (int p = 0; p < g; ++p) {
        c.phases[0] = phase_grid[p];
        consider(c);
      }
    }
  } else {
    for (int i = 0; i < g; ++i) {
      for (int j = 0; i + j < g; ++j) {
        c.weights[0] = static_cast<double>(i) / (g - 1);
        c.weights[1] = static_cast<double>(j) / (g - 1);
        c.weights[2] = 1.0 - c.weights[0] - c.weights[1];
        if (c.weights[2] < 0.0) c.weights[2] = 0.0;
        for (int p = 0; p < g; ++p) {
          c.phases[0] = phase_grid[p];
          for (int q = 0; q < g; ++q) {
            c.phases[1] = phase_grid[q];
            consider(c);
          }
        }
      }
    }
  }
  return best;
}

}  // namespace fmd
