#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <numbers>

#include "fmd/fiber_modes.hpp"

using namespace fmd;

namespace {

const FiberSpec kTenModeFiber{12.5, 0.08, 1.064};
const FiberSpec kThreeModeFiber{4.1, 0.14, 1.073};

// Independent oracle: count guided modes of azimuthal order l by scanning
// the pole-free form g(u) = u*J_{l-1}(u)*K_l(w) + w*K_{l-1}(w)*J_l(u) for
// sign changes. Deliberately a different formulation than the solver's.
int count_roots_oracle(int l, double v, int samples = 20000) {
  auto g = [&](double u) {
    const double w = std::sqrt(v * v - u * u);
    const double jp = l == 0 ? -std::cyl_bessel_j(1, u) : std::cyl_bessel_j(l - 1, u);
    const double kp = l == 0 ? std::cyl_bessel_k(1, w) : std::cyl_bessel_k(l - 1, w);
    return u * jp * std::cyl_bessel_k(l, w) + w * kp * std::cyl_bessel_j(l, u);
  };
  int count = 0;
  double prev = g(1e-6 * v);
  for (int i = 1; i < samples; ++i) {
    const double u = v * (1e-6 + (1.0 - 2e-6) * i / samples);
    const double cur = g(u);
    if (prev * cur < 0.0) ++count;
    prev = cur;
  }
  return count;
}

}  // namespace

TEST_CASE("bessel functions match tabulated values") {
  // Abramowitz & Stegun reference points
  CHECK(std::cyl_bessel_j(0, 1.0) == Catch::Approx(0.7651976865579666).epsilon(1e-12));
  CHECK(std::cyl_bessel_j(1, 2.0) == Catch::Approx(0.5767248077568734).epsilon(1e-12));
  CHECK(std::cyl_bessel_j(2, 5.0) == Catch::Approx(0.04656511627775222).epsilon(1e-10));
  CHECK(std::cyl_bessel_k(0, 1.0) == Catch::Approx(0.42102443824070834).epsilon(1e-12));
  CHECK(std::cyl_bessel_k(1, 1.0) == Catch::Approx(0.6019072301972346).epsilon(1e-12));
  CHECK(std::cyl_bessel_k(2, 2.5) == Catch::Approx(0.1214602062785638).margin(1e-10));
}

TEST_CASE("v_number") {
  CHECK(v_number(kTenModeFiber) == Catch::Approx(5.905).margin(0.01));
  CHECK(v_number(kThreeModeFiber) == Catch::Approx(3.361).margin(0.005));
  CHECK(v_number({1.0, 0.0, 1.0}) == 0.0);
}

TEST_CASE("solve_modes reproduces the 10-mode fiber") {
  const auto modes = solve_modes(kTenModeFiber);
  REQUIRE(modes.size() == 10);
  const char* expected[] = {"LP01",  "LP11e", "LP11o", "LP21e", "LP21o",
                            "LP02",  "LP31e", "LP31o", "LP12e", "LP12o"};
  for (int i = 0; i < 10; ++i) {
    CHECK(modes[i].mode.label() == expected[i]);
  }
  const double v = v_number(kTenModeFiber);
  for (const auto& m : modes) {
    CHECK(std::abs(m.u * m.u + m.w * m.w - v * v) / (v * v) < 1e-9);
    CHECK(m.u > 0.0);
    CHECK(m.u < v);
    CHECK(m.w > 0.0);
  }
}

TEST_CASE("solve_modes reproduces the experimental 3-mode fiber") {
  const auto modes = solve_modes(kThreeModeFiber);
  REQUIRE(modes.size() == 3);
  CHECK(modes[0].mode.label() == "LP01");
  CHECK(modes[1].mode.label() == "LP11e");
  CHECK(modes[2].mode.label() == "LP11o");
}

TEST_CASE("single-mode fiber below the LP11 cutoff") {
  // V = 1.0 via a = 1/(2*pi*NA/lambda)
  const FiberSpec fiber{1.0 / (2.0 * std::numbers::pi * 0.1), 0.1, 1.0};
  REQUIRE(v_number(fiber) == Catch::Approx(1.0).epsilon(1e-12));
  const auto modes = solve_modes(fiber);
  REQUIRE(modes.size() == 1);
  CHECK(modes[0].mode.label() == "LP01");
  CHECK(count_roots_oracle(0, 1.0) == 1);
  CHECK(count_roots_oracle(1, 1.0) == 0);
}

TEST_CASE("mode count agrees with the sign-change oracle") {
  for (double v : {1.0, 2.0, 3.361, 4.5, 5.905}) {
    const FiberSpec fiber{v / (2.0 * std::numbers::pi * 0.1), 0.1, 1.0};
    int expected = 0;
    for (int l = 0; l < 8; ++l) {
      const int c = count_roots_oracle(l, v);
      expected += l == 0 ? c : 2 * c;  // parity degeneracy
    }
    CHECK(solve_modes(fiber).size() == static_cast<std::size_t>(expected));
  }
}

TEST_CASE("mode count is non-decreasing in V") {
  std::size_t prev = 0;
  for (double v = 0.5; v < 8.0; v += 0.5) {
    const FiberSpec fiber{v / (2.0 * std::numbers::pi * 0.1), 0.1, 1.0};
    const auto n = solve_modes(fiber).size();
    CHECK(n >= prev);
    prev = n;
  }
}

TEST_CASE("invalid fiber specs are rejected") {
  CHECK_THROWS_AS(solve_modes({0.0, 0.1, 1.0}), NoGuidedModes);
  CHECK_THROWS_AS(solve_modes({1.0, -0.1, 1.0}), NoGuidedModes);
}

TEST_CASE("LP01 sampled field is radially monotone") {
  const auto basis = sample_basis(kThreeModeFiber, default_grid(kThreeModeFiber, 128), 1);
  const auto& psi = basis.fields[0];
  const int res = 128;
  // along the central row, moving outward from the center
  const int row = res / 2;
  for (int x = res / 2; x + 1 < res; ++x) {
    CHECK(psi[row * res + x + 1] <= psi[row * res + x] + 1e-12);
    CHECK(psi[row * res + x] > 0.0);
  }
}

TEST_CASE("LP11e field is antisymmetric with zero integral") {
  const auto basis = sample_basis(kThreeModeFiber, default_grid(kThreeModeFiber, 128), 2);
  const auto& psi = basis.fields[1];  // LP11e, cos(phi) azimuthal
  const int res = 128;
  double integral = 0.0;
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      integral += psi[y * res + x];
      // mirror in x maps pixel x to res-1-x on the symmetric grid
      CHECK(psi[y * res + x] == Catch::Approx(-psi[y * res + (res - 1 - x)]).margin(1e-12));
    }
  }
  CHECK(std::abs(integral) * basis.grid.pixel_area() < 1e-6);
}

TEST_CASE("basis normalization and orthogonality") {
  const auto basis = sample_basis(kThreeModeFiber, default_grid(kThreeModeFiber, 256), 3);
  const double area = basis.grid.pixel_area();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double ip = 0.0;
      for (std::size_t p = 0; p < basis.fields[i].size(); ++p) {
        ip += basis.fields[i][p] * basis.fields[j][p];
      }
      ip *= area;
      if (i == j) {
        CHECK(ip == Catch::Approx(1.0).margin(1e-6));
      } else {
        CHECK(std::abs(ip) < 1e-3);
      }
    }
  }
}

TEST_CASE("field continuity across the core boundary") {
  const auto basis = sample_basis(kTenModeFiber, default_grid(kTenModeFiber, 512), 10);
  const int res = basis.resolution();
  const double a = kTenModeFiber.core_radius_um;
  for (const auto& psi : basis.fields) {
    // walk the central row towards +x and compare adjacent samples across r=a
    const int row = res / 2;
    for (int x = res / 2; x + 1 < res; ++x) {
      const double r0 = std::abs(basis.grid.coord(x));
      const double r1 = std::abs(basis.grid.coord(x + 1));
      if (r0 < a && r1 >= a) {
        const double inside = psi[row * res + x];
        const double outside = psi[row * res + x + 1];
        if (std::abs(inside) > 1e-3) {
          CHECK(std::abs(outside - inside) / std::abs(inside) < 0.05);
        }
      }
    }
  }
}

TEST_CASE("parity pairs share a radial profile") {
  const auto basis = sample_basis(kThreeModeFiber, default_grid(kThreeModeFiber, 128), 3);
  const int res = basis.resolution();
  const auto& even = basis.fields[1];
  const auto& odd = basis.fields[2];
  // psi_e^2 + psi_o^2 must be invariant under 90-degree grid rotation
  double max_sum = 0.0, max_diff = 0.0;
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const double s = even[y * res + x] * even[y * res + x] +
                       odd[y * res + x] * odd[y * res + x];
      // (x,y) -> (y, res-1-x) is the 90-degree rotation on pixel centers
      const int ry = x, rx = res - 1 - y;
      const double sr = even[ry * res + rx] * even[ry * res + rx] +
                        odd[ry * res + rx] * odd[ry * res + rx];
      max_sum = std::max(max_sum, s);
      max_diff = std::max(max_diff, std::abs(s - sr));
    }
  }
  CHECK(max_diff / max_sum < 1e-6);
}

TEST_CASE("sample_basis argument validation") {
  CHECK_THROWS_AS(sample_basis(kThreeModeFiber, default_grid(kThreeModeFiber), 4),
                  InsufficientModes);
  CHECK_THROWS_AS(sample_basis(kThreeModeFiber, {8, 10.0}, 1), ShapeMismatch);
  CHECK_THROWS_AS(sample_basis(kThreeModeFiber, {64, 1.0}, 1), ShapeMismatch);
}
