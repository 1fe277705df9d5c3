#pragma once

// Intensity-pattern correlation, residual maps and the averaged weight /
// phase error statistics used to score a decomposition.

#include <cmath>
#include <numbers>
#include <vector>

#include "fmd/errors.hpp"
#include "fmd/field_synth.hpp"

namespace fmd {

/// Mean-subtracted normalized absolute correlation between two intensity
/// images:
///   C = |sum(dIm * dIr)| / sqrt(sum(dIm^2) * sum(dIr^2)),  dI = I - mean(I)
/// Plain pixel sums; the uniform pixel area cancels in the ratio.
inline double correlation(const BeamImage& i_m, const BeamImage& i_r) {
  if (i_m.height != i_r.height || i_m.width != i_r.width) {
    throw DimensionMismatch("correlation needs equal image dimensions");
  }
  const std::size_t n = i_m.size();
  double mean_m = 0.0, mean_r = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    mean_m += i_m.pixels[p];
    mean_r += i_r.pixels[p];
  }
  mean_m /= n;
  mean_r /= n;
  double cross = 0.0, var_m = 0.0, var_r = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double dm = i_m.pixels[p] - mean_m;
    const double dr = i_r.pixels[p] - mean_r;
    cross += dm * dr;
    var_m += dm * dm;
    var_r += dr * dr;
  }
  // a constant image leaves only rounding residue in the variance; compare
  // against a tolerance relative to the mean level instead of exact zero
  const double tol_m = n * 1e-24 * mean_m * mean_m;
  const double tol_r = n * 1e-24 * mean_r * mean_r;
  if (var_m <= tol_m || var_r <= tol_r) {
    throw ConstantImage("correlation undefined for a constant image");
  }
  return std::min(std::abs(cross) / std::sqrt(var_m * var_r), 1.0);
}

/// Pixelwise absolute difference |I_m - I_r|.
inline BeamImage residual(const BeamImage& i_m, const BeamImage& i_r) {
  if (i_m.height != i_r.height || i_m.width != i_r.width) {
    throw DimensionMismatch("residual needs equal image dimensions");
  }
  BeamImage out = i_m;
  for (std::size_t p = 0; p < out.size(); ++p) {
    out.pixels[p] = std::abs(i_m.pixels[p] - i_r.pixels[p]);
  }
  return out;
}

// Averaged decomposition errors in percent. Weight error is
// |rho_p^2 - rho_t^2|, phase error is ||theta_p| - |theta_t|| / (2*pi);
// the absolute values make the conjugate-ambiguous sign irrelevant.
struct ErrorReport {
  std::vector<double> per_mode_weight_error;  // N entries, percent
  std::vector<double> per_mode_phase_error;   // N-1 entries, percent
  double mean_weight_error = 0.0;             // percent
  double mean_phase_error = 0.0;              // percent
};

inline ErrorReport error_stats(const std::vector<ModeCoefficients>& predicted,
                               const std::vector<ModeCoefficients>& truth) {
  if (predicted.size() != truth.size() || predicted.empty()) {
    throw DimensionMismatch("error_stats needs equal-length nonempty lists");
  }
  const int n = truth.front().mode_count();
  ErrorReport report;
  report.per_mode_weight_error.assign(n, 0.0);
  report.per_mode_phase_error.assign(n - 1, 0.0);
  for (std::size_t s = 0; s < truth.size(); ++s) {
    if (predicted[s].mode_count() != n || truth[s].mode_count() != n) {
      throw DimensionMismatch("error_stats needs uniform mode counts");
    }
    for (int i = 0; i < n; ++i) {
      report.per_mode_weight_error[i] +=
          std::abs(predicted[s].weights[i] - truth[s].weights[i]);
    }
    for (int i = 0; i < n - 1; ++i) {
      report.per_mode_phase_error[i] +=
          std::abs(std::abs(predicted[s].phases[i]) -
                   std::abs(truth[s].phases[i])) /
          (2.0 * std::numbers::pi);
    }
  }
  const double scale = 100.0 / truth.size();
  for (double& e : report.per_mode_weight_error) {
    e *= scale;
    report.mean_weight_error += e;
  }
  report.mean_weight_error /= n;
  for (double& e : report.per_mode_phase_error) {
    e *= scale;
    report.mean_phase_error += e;
  }
  if (n > 1) report.mean_phase_error /= (n - 1);
  return report;
}

}  // namespace fmd
