#pragma once

/// Generator (driver) specifications g(t, y, z, delta, gamma) for the
/// constrained dynamics, with declared analytic properties and sampling
/// certificates. Extended values use the IEEE infinity as the dedicated
/// "outside the domain" marker; evaluation never returns NaN and callers
/// never mix the marker into finite arithmetic.
///
/// Declared properties:
///  * lsc  - lower semicontinuity (closed domains; certified by sampling
///           only, a finite sampler cannot prove it);
///  * pos  - g >= 0, g(t, y, z, 0, 0) = 0;
///  * con  - joint convexity in (y, z, delta, gamma);
///  * dgc  - growth floor g >= c1 + c2 (|delta|^2 + |gamma|^2), c2 > 0.

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>

namespace bsde {

inline constexpr double kPlusInfinity = std::numeric_limits<double>::infinity();

struct DgcConstants {
  double c1 = 0.0;
  double c2 = 0.0;
};

/// Constraint region; absent fields mean "unconstrained".
struct DomainDescriptor {
  std::optional<double> gamma_band;                // |gamma| <= M (closed)
  std::optional<std::pair<double, double>> z_box;  // z in [lo, hi] (closed)
  bool unconstrained() const { return !gamma_band && !z_box; }
};

struct GeneratorSpec {
  std::string name = "generator";
  std::function<double(double t, double y, double z, double d, double g)> eval;
  /// Optional analytic subgradient in (z, delta, gamma); finite differences
  /// are used when absent. Only queried at finite points.
  std::function<std::array<double, 3>(double t, double y, double z, double d,
                                      double g)>
      grad;
  bool y_independent = true;
  bool flag_lsc = false;
  bool flag_pos = false;
  bool flag_con = false;
  bool flag_dgc = false;
  DgcConstants dgc;
  DomainDescriptor domain;
  /// Set by make_quadratic: evaluator is exactly delta^2 + gamma^2, which the
  /// continuous-time closed form requires.
  bool exact_quadratic = false;
};

/// Shape-checked evaluation (d = 1 scalars on the tree).
double eval_generator(const GeneratorSpec& gen, double t, double y, double z,
                      double delta, double gamma);

/// g = |delta|^2 + |gamma|^2; all four properties hold with c1=0, c2=1.
GeneratorSpec make_quadratic();

/// g = |delta|^2, gamma-independent (used as a band inner generator).
GeneratorSpec make_quadratic_delta();

/// Restricts `inner` to the closed band |gamma| <= M (+infinity outside).
/// inner must be gamma-independent for the composite to keep its declared
/// properties. The growth floor is re-certified with the shifted constants
/// (c1 - c2 M^2, c2). Throws on M <= 0.
GeneratorSpec make_gamma_band(GeneratorSpec inner, double band_m);

/// Restricts `inner` to z in [lo, hi] (+infinity outside). Throws on lo >= hi.
GeneratorSpec make_shortsell_box(GeneratorSpec inner, double z_lo, double z_hi);

/// g = a |delta|^p + b |gamma|^r + c0 with a, b >= 0, p, r >= 1, c0 >= 0.
/// Declares dgc when a, b > 0 and p, r >= 2, with constants computed from
/// the exact envelope sup_x (c2 x^2 - a x^p).
GeneratorSpec make_custom_polynomial(double a, double p, double b, double r,
                                     double c0);

struct CertReport {
  bool ok = false;
  double worst_margin = 0.0;
  std::size_t samples = 0;
  std::size_t skipped = 0;  // points outside the domain
  std::string detail;
};

/// Samples heavy-tailed (y, z, delta, gamma) points and checks the declared
/// growth floor g >= c1 + c2(|delta|^2+|gamma|^2). Infinite g satisfies the
/// floor trivially and counts as skipped.
CertReport certify_dgc(const GeneratorSpec& gen, std::uint64_t seed,
                       std::size_t n_samples = 20000);

/// Samples segment midpoints and checks g(mid) <= (g(a)+g(b))/2 + tol.
/// Finite endpoints with an infinite midpoint are a violation (non-convex
/// domain); any infinite endpoint satisfies the inequality trivially.
CertReport certify_convexity(const GeneratorSpec& gen, std::uint64_t seed,
                             std::size_t n_samples = 20000);

/// Euclidean projection of (z, delta, gamma) onto the domain descriptor.
std::array<double, 3> project_domain(const GeneratorSpec& gen, double z,
                                     double delta, double gamma);

/// Central finite-difference subgradient in (z, delta, gamma); step h is
/// scaled per coordinate. Only valid at interior finite points.
std::array<double, 3> fd_subgradient(const GeneratorSpec& gen, double t,
                                     double y, double z, double delta,
                                     double gamma, double h = 1e-6);

/// Analytic-vs-finite-difference agreement at the requested points.
struct FdCheckReport {
  bool ok = false;
  double worst_abs = 0.0;
  double worst_rel = 0.0;
};
FdCheckReport fd_subgradient_check(
    const GeneratorSpec& gen,
    const std::vector<std::array<double, 5>>& points /* t,y,z,delta,gamma */,
    double h1 = 1e-5, double h2 = 1e-7);

}  // namespace bsde
