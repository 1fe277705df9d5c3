#pragma once

// Step-index LP mode solver under the weak-guidance approximation.
//
// A guided LP_{lm} mode of a step-index fiber satisfies the characteristic
// equation
//     u * J_{l-1}(u) / J_l(u) = -w * K_{l-1}(w) / K_l(w),   u^2 + w^2 = V^2
// where u is the core transverse parameter and w the cladding decay
// parameter. Roots are located by a dense sign-change scan over u followed
// by bisection; intervals that straddle a zero of J_l (a pole of the
// left-hand side) are discarded.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "fmd/errors.hpp"

namespace fmd {

struct FiberSpec {
  double core_radius_um = 0.0;
  double numerical_aperture = 0.0;
  double wavelength_um = 0.0;

  void validate() const {
    if (core_radius_um <= 0.0 || numerical_aperture <= 0.0 ||
        wavelength_um <= 0.0) {
      throw NoGuidedModes("FiberSpec requires strictly positive parameters");
    }
  }
};

/// Normalized frequency V = 2*pi*a*NA/lambda.
inline double v_number(const FiberSpec& fiber) {
  return 2.0 * std::numbers::pi * fiber.core_radius_um *
         fiber.numerical_aperture / fiber.wavelength_um;
}

enum class Parity { even, odd };

struct ModeId {
  int azimuthal_order = 0;  // l
  int radial_order = 1;     // m, 1-based
  Parity parity = Parity::even;

  // "LP01", "LP11e", "LP11o", ...  l=0 modes carry no parity suffix.
  std::string label() const {
    std::string s = "LP" + std::to_string(azimuthal_order) +
                    std::to_string(radial_order);
    if (azimuthal_order > 0) s += (parity == Parity::even ? 'e' : 'o');
    return s;
  }

  friend bool operator==(const ModeId&, const ModeId&) = default;
};

struct ModeSolution {
  ModeId mode;
  double u = 0.0;
  double w = 0.0;
};

namespace detail {

// J_{l-1} and K_{l-1} with the l=0 reflections J_{-1} = -J_1, K_{-1} = K_1.
inline double bessel_j_prev(int l, double x) {
  return l == 0 ? -std::cyl_bessel_j(1, x) : std::cyl_bessel_j(l - 1, x);
}
inline double bessel_k_prev(int l, double x) {
  return l == 0 ? std::cyl_bessel_k(1, x) : std::cyl_bessel_k(l - 1, x);
}

inline double characteristic(int l, double u, double v) {
  const double w = std::sqrt(std::max(v * v - u * u, 0.0));
  if (w <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double jl = std::cyl_bessel_j(l, u);
  const double kl = std::cyl_bessel_k(l, w);
  return u * bessel_j_prev(l, u) / jl + w * bessel_k_prev(l, w) / kl;
}

// Roots of the characteristic function for a single azimuthal order,
// increasing in u. Scan at 2000 uniform samples, discard intervals where
// J_l changes sign (pole, not root), bisect to |f| < 1e-12 or 200 steps.
inline std::vector<double> roots_for_order(int l, double v) {
  constexpr int kScanSamples = 2000;
  constexpr double kEps = 1e-9;
  std::vector<double> roots;
  const double lo = kEps * v, hi = v * (1.0 - kEps);
  double u_prev = lo;
  double f_prev = characteristic(l, u_prev, v);
  for (int i = 1; i <= kScanSamples; ++i) {
    const double u = lo + (hi - lo) * i / kScanSamples;
    const double f = characteristic(l, u, v);
    if (std::isfinite(f_prev) && std::isfinite(f) && f_prev * f < 0.0 &&
        std::cyl_bessel_j(l, u_prev) * std::cyl_bessel_j(l, u) > 0.0) {
      double a = u_prev, b = u, fa = f_prev;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        const double fm = characteristic(l, mid, v);
        if (std::abs(fm) < 1e-12) {
          a = b = mid;
          break;
        }
        if (fa * fm < 0.0) {
          b = mid;
        } else {
          a = mid;
          fa = fm;
        }
      }
      roots.push_back(0.5 * (a + b));
    }
    u_prev = u;
    f_prev = f;
  }
  return roots;
}

}  // namespace detail

/// All guided LP modes of the fiber, ordered by increasing u (decreasing
/// effective index), even parity before odd within a degenerate pair.
inline std::vector<ModeSolution> solve_modes(const FiberSpec& fiber) {
  fiber.validate();
  const double v = v_number(fiber);
  if (!(v > 0.0)) throw NoGuidedModes("fiber V number must be positive");

  struct LmRoot {
    int l, m;
    double u;
  };
  std::vector<LmRoot> found;
  for (int l = 0;; ++l) {
    const auto roots = detail::roots_for_order(l, v);
    if (roots.empty()) break;
    for (std::size_t m = 0; m < roots.size(); ++m) {
      found.push_back({l, static_cast<int>(m + 1), roots[m]});
    }
  }
  std::sort(found.begin(), found.end(),
            [](const LmRoot& a, const LmRoot& b) { return a.u < b.u; });

  std::vector<ModeSolution> modes;
  for (const auto& r : found) {
    const double w = std::sqrt(v * v - r.u * r.u);
    modes.push_back({{r.l, r.m, Parity::even}, r.u, w});
    if (r.l > 0) modes.push_back({{r.l, r.m, Parity::odd}, r.u, w});
  }
  if (modes.empty()) throw NoGuidedModes("no guided mode found");
  return modes;
}

struct GridSpec {
  int resolution = 128;
  double window_half_width_um = 0.0;

  void validate(const FiberSpec& fiber) const {
    if (resolution < 16) throw ShapeMismatch("grid resolution must be >= 16");
    if (window_half_width_um < fiber.core_radius_um) {
      throw ShapeMismatch("grid window must cover the fiber core");
    }
  }

  /// Physical coordinate of the center of pixel index i (row or column).
  double coord(int i) const {
    const double step = 2.0 * window_half_width_um / resolution;
    return -window_half_width_um + (i + 0.5) * step;
  }
  double pixel_area() const {
    const double step = 2.0 * window_half_width_um / resolution;
    return step * step;
  }
};

/// Default sampling window: twice the core radius.
inline GridSpec default_grid(const FiberSpec& fiber, int resolution = 128) {
  return {resolution, 2.0 * fiber.core_radius_um};
}

struct ModeBasis {
  FiberSpec fiber;
  GridSpec grid;
  std::vector<ModeSolution> solutions;
  // fields[n] is resolution x resolution, row-major, L2-normalized so that
  // sum(psi^2) * pixel_area == 1.
  std::vector<std::vector<double>> fields;

  int mode_count() const { return static_cast<int>(solutions.size()); }
  int resolution() const { return grid.resolution; }
};

/// Sample the first `first_n` guided modes on the grid.
inline ModeBasis sample_basis(const FiberSpec& fiber, const GridSpec& grid,
                              int first_n) {
  grid.validate(fiber);
  auto all = solve_modes(fiber);
  if (first_n < 1 || first_n > static_cast<int>(all.size())) {
    throw InsufficientModes("fiber guides only " + std::to_string(all.size()) +
                            " modes, requested " + std::to_string(first_n));
  }
  all.resize(first_n);

  ModeBasis basis{fiber, grid, all, {}};
  const int res = grid.resolution;
  const double a = fiber.core_radius_um;
  const double area = grid.pixel_area();
  basis.fields.reserve(all.size());

  for (const auto& sol : all) {
    const int l = sol.mode.azimuthal_order;
    const double u = sol.u, w = sol.w;
    // continuity factor matching the core and cladding pieces at r = a
    const double clad_scale =
        std::cyl_bessel_j(l, u) / std::cyl_bessel_k(l, w);
    std::vector<double> field(static_cast<std::size_t>(res) * res);
    for (int iy = 0; iy < res; ++iy) {
      const double y = grid.coord(iy);
      for (int ix = 0; ix < res; ++ix) {
        const double x = grid.coord(ix);
        const double r = std::hypot(x, y);
        const double phi = std::atan2(y, x);
        double radial;
        if (r <= a) {
          radial = std::cyl_bessel_j(l, u * r / a);
        } else {
          radial = clad_scale * std::cyl_bessel_k(l, w * r / a);
        }
        const double azim = sol.mode.parity == Parity::even
                                ? std::cos(l * phi)
                                : std::sin(l * phi);
        field[static_cast<std::size_t>(iy) * res + ix] = radial * azim;
      }
    }
    double power = 0.0;
    for (double p : field) power += p * p;
    power *= area;
    if (!(power > 0.0)) {
      throw ResolutionTooCoarse("mode " + sol.mode.label() +
                                " has no power on this grid");
    }
    const double inv_norm = 1.0 / std::sqrt(power);
    for (double& p : field) p *= inv_norm;
    basis.fields.push_back(std::move(field));
  }
  return basis;
}

}  // namespace fmd
