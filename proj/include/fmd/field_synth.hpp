#pragma once

// Complex field synthesis from mode coefficients, intensity rendering,
// random coefficient sampling, the cosine label encoding used as the
// network target, multiplicative noise injection and raw-frame
// preprocessing.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "fmd/errors.hpp"
#include "fmd/fiber_modes.hpp"

namespace fmd {

// Modal weights rho_n^2 (power fractions, sum 1) and relative phases
// theta_n for n = 2..N; theta_1 == 0 by convention.
struct ModeCoefficients {
  std::vector<double> weights;  // N entries
  std::vector<double> phases;   // N-1 entries, theta_2..theta_N

  int mode_count() const { return static_cast<int>(weights.size()); }

  /// theta_n for n in [0, N); n = 0 is the fundamental with phase 0.
  double phase(int n) const { return n == 0 ? 0.0 : phases[n - 1]; }

  ModeCoefficients conjugated() const {
    ModeCoefficients c = *this;
    for (double& t : c.phases) t = -t;
    return c;
  }

  void validate() const {
    if (phases.size() + 1 != weights.size()) {
      throw DimensionMismatch("coefficients need N weights and N-1 phases");
    }
    double sum = 0.0;
    for (double w : weights) {
      if (w < -1e-12 || w > 1.0 + 1e-12) {
        throw DimensionMismatch("mode weight outside [0,1]");
      }
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw DimensionMismatch("mode weights must sum to 1");
    }
    for (double t : phases) {
      if (t < -std::numbers::pi - 1e-12 || t > std::numbers::pi + 1e-12) {
        throw DimensionMismatch("phase outside [-pi, pi]");
      }
    }
  }
};

// Network-facing encoding: [rho_1^2 .. rho_N^2, s_2 .. s_N] with
// s_n = (cos theta_n + 1) / 2, all entries in [0,1].
struct LabelVector {
  std::vector<double> values;  // 2N-1 entries

  int mode_count() const { return (static_cast<int>(values.size()) + 1) / 2; }
};

struct ComplexField {
  int resolution = 0;
  double pixel_area = 0.0;
  std::vector<std::complex<double>> values;  // row-major
};

// Nonnegative intensity image; max pixel == 1 after the normalize step.
struct BeamImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // row-major

  double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return pixels.size(); }

  double max_pixel() const {
    double m = 0.0;
    for (double p : pixels) m = std::max(m, p);
    return m;
  }
};

/// U = sum_n rho_n * exp(i theta_n) * psi_n, rho_n = sqrt(weights[n]).
inline ComplexField superpose(const ModeBasis& basis,
                              const ModeCoefficients& coeffs) {
  coeffs.validate();
  if (coeffs.mode_count() != basis.mode_count()) {
    throw DimensionMismatch("coefficient count does not match basis");
  }
  const int res = basis.resolution();
  ComplexField field{res, basis.grid.pixel_area(),
                     std::vector<std::complex<double>>(
                         static_cast<std::size_t>(res) * res)};
  for (int n = 0; n < coeffs.mode_count(); ++n) {
    const double rho = std::sqrt(coeffs.weights[n]);
    if (rho == 0.0) continue;
    const std::complex<double> c = std::polar(rho, coeffs.phase(n));
    const auto& psi = basis.fields[n];
    for (std::size_t p = 0; p < field.values.size(); ++p) {
      field.values[p] += c * psi[p];
    }
  }
  return field;
}

/// Pixelwise |U|^2; if normalize, scaled so the maximum pixel is 1
/// (identity on an all-zero field).
inline BeamImage intensity(const ComplexField& field, bool normalize = true) {
  BeamImage img{field.resolution, field.resolution,
                std::vector<double>(field.values.size())};
  for (std::size_t p = 0; p < field.values.size(); ++p) {
    img.pixels[p] = std::norm(field.values[p]);
  }
  if (normalize) {
    const double m = img.max_pixel();
    if (m > 0.0) {
      for (double& p : img.pixels) p /= m;
    }
  }
  return img;
}

/// Weights uniform on the simplex (flat Dirichlet via normalized
/// exponential draws), phases i.i.d. uniform on [-pi, pi].
inline ModeCoefficients sample_coefficients(std::mt19937_64& rng,
                                            int n_modes) {
  if (n_modes < 1) throw DimensionMismatch("need at least one mode");
  std::exponential_distribution<double> exp_dist(1.0);
  std::uniform_real_distribution<double> phase_dist(-std::numbers::pi,
                                                    std::numbers::pi);
  ModeCoefficients c;
  c.weights.resize(n_modes);
  double sum = 0.0;
  for (double& w : c.weights) {
    w = exp_dist(rng);
    sum += w;
  }
  for (double& w : c.weights) w /= sum;
  c.phases.resize(n_modes - 1);
  for (double& t : c.phases) t = phase_dist(rng);
  return c;
}

inline LabelVector encode_label(const ModeCoefficients& coeffs) {
  coeffs.validate();
  LabelVector label;
  label.values.reserve(2 * coeffs.weights.size() - 1);
  label.values.insert(label.values.end(), coeffs.weights.begin(),
                      coeffs.weights.end());
  for (double t : coeffs.phases) {
    label.values.push_back((std::cos(t) + 1.0) / 2.0);
  }
  return label;
}

// Decoded label: weights renormalized onto the simplex and phase
// magnitudes |theta_n| = arccos(2 s_n - 1) in [0, pi]. The sign of each
// phase is left to the disambiguation step.
struct DecodedLabel {
  std::vector<double> weights;           // N entries, sum 1
  std::vector<double> magnitude_phases;  // N-1 entries in [0, pi]
};

inline DecodedLabel decode_label(const LabelVector& label) {
  const int n = label.mode_count();
  if (static_cast<int>(label.values.size()) != 2 * n - 1 || n < 1) {
    throw DimensionMismatch("label vector must have 2N-1 entries");
  }
  DecodedLabel d;
  d.weights.assign(label.values.begin(), label.values.begin() + n);
  double sum = 0.0;
  for (double w : d.weights) sum += w;
  if (sum < 1e-9) throw DegenerateLabel("all weight entries near zero");
  for (double& w : d.weights) w /= sum;
  d.magnitude_phases.resize(n - 1);
  for (int i = 0; i < n - 1; ++i) {
    const double s = std::clamp(label.values[n + i], 0.0, 1.0);
    d.magnitude_phases[i] = std::acos(2.0 * s - 1.0);
  }
  return d;
}

/// Multiplicative CCD-style noise: pixel' = pixel * (1 + g*sigma),
/// g ~ N(0,1) per pixel, clamped at zero. No renormalization.
inline BeamImage add_noise(const BeamImage& image, double sigma,
                           std::mt19937_64& rng) {
  if (sigma < 0.0) throw DimensionMismatch("noise sigma must be >= 0");
  if (sigma == 0.0) return image;
  std::normal_distribution<double> gauss(0.0, 1.0);
  BeamImage out = image;
  for (double& p : out.pixels) {
    p = std::max(0.0, p * (1.0 + gauss(rng) * sigma));
  }
  return out;
}

/// Rescale so the maximum pixel is 1 (identity on an all-zero image).
inline BeamImage max_normalize(const BeamImage& image) {
  BeamImage out = image;
  const double m = out.max_pixel();
  if (m > 0.0) {
    for (double& p : out.pixels) p /= m;
  }
  return out;
}

/// Quantize to the 256 levels of an 8-bit sensor (pixels assumed in [0,1]).
inline BeamImage quantize_8bit(const BeamImage& image) {
  BeamImage out = image;
  for (double& p : out.pixels) {
    p = std::round(std::clamp(p, 0.0, 1.0) * 255.0) / 255.0;
  }
  return out;
}

namespace detail {

// Bilinear sample with zero padding outside the frame, so that a crop
// window extending past the frame edge reads background instead of
// smearing the border pixels.
inline double bilinear(const BeamImage& img, double y, double x) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  auto tap = [&](int yy, int xx) {
    if (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width) return 0.0;
    return img.at(yy, xx);
  };
  const double top = tap(y0, x0) * (1.0 - fx) + tap(y0, x0 + 1) * fx;
  const double bot = tap(y0 + 1, x0) * (1.0 - fx) + tap(y0 + 1, x0 + 1) * fx;
  return top * (1.0 - fy) + bot * fy;
}

}  // namespace detail

/// Centroid-centered square crop (side = min dimension, zero-padded where
/// it leaves the frame), bilinear resize to target_resolution, max-normalized.
inline BeamImage preprocess_frame(const BeamImage& raw, int target_resolution) {
  double total = 0.0, cx = 0.0, cy = 0.0;
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      const double p = raw.at(y, x);
      total += p;
      cx += p * x;
      cy += p * y;
    }
  }
  if (total <= 0.0) throw EmptyFrame("frame has no nonzero pixel");
  cx /= total;
  cy /= total;

  // keep the centroid at the crop center even when the window runs past the
  // frame edge; out-of-bounds samples read as zero background
  const int side = std::min(raw.height, raw.width);
  const double x0 = cx - side / 2.0;
  const double y0 = cy - side / 2.0;

  BeamImage out{target_resolution, target_resolution,
                std::vector<double>(static_cast<std::size_t>(target_resolution) *
                                    target_resolution)};
  const double scale = static_cast<double>(side) / target_resolution;
  for (int ty = 0; ty < target_resolution; ++ty) {
    for (int tx = 0; tx < target_resolution; ++tx) {
      // source position of the target pixel center; x0/y0 are the window
      // edges expressed in pixel-center coordinates, so no extra half-pixel
      // shift is needed
      const double sy = y0 + (ty + 0.5) * scale;
      const double sx = x0 + (tx + 0.5) * scale;
      out.at(ty, tx) = detail::bilinear(raw, sy, sx);
    }
  }
  return max_normalize(out);
}

}  // namespace fmd
