#include "bsde/generator.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "bsde/errors.hpp"

namespace bsde {

double eval_generator(const GeneratorSpec& gen, double t, double y, double z,
                      double delta, double gamma) {
  if (!gen.eval) throw UnsupportedError("eval_generator: empty evaluator");
  if (!std::isfinite(t) || !std::isfinite(z) || !std::isfinite(delta) ||
      !std::isfinite(gamma))
    throw SizeError("eval_generator: arguments must be finite");
  const double g = gen.eval(t, y, z, delta, gamma);
  if (std::isnan(g))
    throw Error("eval_generator: generator produced NaN");
  return g;
}

GeneratorSpec make_quadratic() {
  GeneratorSpec gen;
  gen.name = "quadratic";
  gen.eval = [](double, double, double, double d, double g) {
    return d * d + g * g;
  };
  gen.grad = [](double, double, double, double d, double g) {
    return std::array<double, 3>{0.0, 2.0 * d, 2.0 * g};
  };
  gen.y_independent = true;
  gen.flag_lsc = gen.flag_pos = gen.flag_con = gen.flag_dgc = true;
  gen.dgc = {0.0, 1.0};
  gen.exact_quadratic = true;
  return gen;
}

GeneratorSpec make_quadratic_delta() {
  GeneratorSpec gen;
  gen.name = "quadratic_delta";
  gen.eval = [](double, double, double, double d, double) { return d * d; };
  gen.grad = [](double, double, double, double d, double) {
    return std::array<double, 3>{0.0, 2.0 * d, 0.0};
  };
  gen.y_independent = true;
  gen.flag_lsc = gen.flag_pos = gen.flag_con = true;
  gen.flag_dgc = false;  // no gamma growth
  gen.dgc = {0.0, 0.0};
  return gen;
}

GeneratorSpec make_gamma_band(GeneratorSpec inner, double band_m) {
  if (!(band_m > 0.0))
    throw SizeError("make_gamma_band: band halfwidth M must be > 0");
  GeneratorSpec gen;
  gen.name = inner.name + "|gamma_band(" + std::to_string(band_m) + ")";
  auto inner_eval = inner.eval;
  gen.eval = [inner_eval, band_m](double t, double y, double z, double d,
                                  double g) {
    if (std::fabs(g) > band_m) return kPlusInfinity;
    return inner_eval(t, y, z, d, g);
  };
  if (inner.grad) {
    auto inner_grad = inner.grad;
    gen.grad = [inner_grad](double t, double y, double z, double d, double g) {
      return inner_grad(t, y, z, d, g);  // interior subgradient of the band
    };
  }
  gen.y_independent = inner.y_independent;
  gen.flag_lsc = inner.flag_lsc;  // closed band keeps closedness
  gen.flag_pos = inner.flag_pos;
  gen.flag_con = inner.flag_con;
  gen.flag_dgc = inner.flag_dgc;
  // On the band: inner >= c1 + c2 |delta|^2 >= (c1 - c2 M^2) + c2(|d|^2+|g|^2).
  gen.dgc = {inner.dgc.c1 - inner.dgc.c2 * band_m * band_m, inner.dgc.c2};
  gen.domain = inner.domain;
  gen.domain.gamma_band = gen.domain.gamma_band
                              ? std::min(*gen.domain.gamma_band, band_m)
                              : band_m;
  return gen;
}

GeneratorSpec make_shortsell_box(GeneratorSpec inner, double z_lo,
                                 double z_hi) {
  if (!(z_lo < z_hi))
    throw SizeError("make_shortsell_box: need z_lo < z_hi");
  GeneratorSpec gen;
  gen.name = inner.name + "|z_box[" + std::to_string(z_lo) + "," +
             std::to_string(z_hi) + "]";
  auto inner_eval = inner.eval;
  gen.eval = [inner_eval, z_lo, z_hi](double t, double y, double z, double d,
                                      double g) {
    if (z < z_lo || z > z_hi) return kPlusInfinity;
    return inner_eval(t, y, z, d, g);
  };
  if (inner.grad) gen.grad = inner.grad;
  gen.y_independent = inner.y_independent;
  gen.flag_lsc = inner.flag_lsc;
  gen.flag_pos = inner.flag_pos;
  gen.flag_con = inner.flag_con;
  gen.flag_dgc = inner.flag_dgc;
  gen.dgc = inner.dgc;
  gen.domain = inner.domain;
  gen.domain.z_box = {z_lo, z_hi};
  return gen;
}

namespace {

// sup_x (c2 x^2 - a x^p) over x >= 0, for p > 2, a > 0 (finite envelope gap).
double envelope_gap(double a, double p, double c2) {
  if (p <= 2.0 + 1e-12) return a >= c2 ? 0.0 : kPlusInfinity;
  const double x = std::pow(2.0 * c2 / (p * a), 1.0 / (p - 2.0));
  return c2 * x * x * (1.0 - 2.0 / p);
}

}  // namespace

GeneratorSpec make_custom_polynomial(double a, double p, double b, double r,
                                     double c0) {
  if (a < 0.0 || b < 0.0 || c0 < 0.0)
    throw SizeError("make_custom_polynomial: coefficients must be >= 0");
  if (p < 1.0 || r < 1.0)
    throw SizeError("make_custom_polynomial: exponents must be >= 1");
  GeneratorSpec gen;
  gen.name = "polynomial";
  gen.eval = [a, p, b, r, c0](double, double, double, double d, double g) {
    return a * std::pow(std::fabs(d), p) + b * std::pow(std::fabs(g), r) + c0;
  };
  gen.y_independent = true;
  gen.flag_lsc = true;
  gen.flag_pos = c0 == 0.0;
  gen.flag_con = true;
  if (a > 0.0 && b > 0.0 && p >= 2.0 && r >= 2.0) {
    const double c2 = std::min(a, b);
    const double gap = envelope_gap(a, p, c2) + envelope_gap(b, r, c2);
    if (std::isfinite(gap)) {
      gen.flag_dgc = true;
      gen.dgc = {c0 - gap, c2};
    }
  }
  return gen;
}

namespace {

/// Heavy-tailed sampler (Student t with 3 dof) for certificate points.
struct CertSampler {
  std::mt19937_64 rng;
  std::student_t_distribution<double> tail{3.0};
  explicit CertSampler(std::uint64_t seed) : rng(seed) {}
  double operator()(double scale) { return scale * tail(rng); }
};

}  // namespace

CertReport certify_dgc(const GeneratorSpec& gen, std::uint64_t seed,
                       std::size_t n_samples) {
  if (!gen.flag_dgc)
    return {false, 0.0, 0, 0, "generator does not declare the growth floor"};
  CertSampler sample(seed);
  CertReport rep;
  rep.worst_margin = kPlusInfinity;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = std::uniform_real_distribution<double>(0.0, 1.0)(sample.rng);
    const double y = sample(2.0);
    const double z = sample(3.0);
    const double d = sample(5.0);
    const double g = sample(5.0);
    const double val = gen.eval(t, y, z, d, g);
    if (!std::isfinite(val)) {
      ++rep.skipped;  // +infinity satisfies any floor
      continue;
    }
    const double floor = gen.dgc.c1 + gen.dgc.c2 * (d * d + g * g);
    rep.worst_margin = std::min(rep.worst_margin, val - floor);
  }
  rep.samples = n_samples;
  if (!std::isfinite(rep.worst_margin)) rep.worst_margin = 0.0;
  rep.ok = rep.worst_margin >= -1e-12;
  if (!rep.ok) rep.detail = "growth floor violated";
  return rep;
}

CertReport certify_convexity(const GeneratorSpec& gen, std::uint64_t seed,
                             std::size_t n_samples) {
  CertSampler sample(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  CertReport rep;
  rep.worst_margin = kPlusInfinity;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = uni(sample.rng);
    double xa[4], xb[4];
    for (int c = 0; c < 4; ++c) {
      xa[c] = sample(2.0);
      xb[c] = sample(2.0);
    }
    const double lam = i % 4 == 0 ? 0.5 : uni(sample.rng);
    const double ga = gen.eval(t, xa[0], xa[1], xa[2], xa[3]);
    const double gb = gen.eval(t, xb[0], xb[1], xb[2], xb[3]);
    if (!std::isfinite(ga) || !std::isfinite(gb)) {
      ++rep.skipped;  // right-hand side infinite: inequality trivial
      continue;
    }
    double xm[4];
    for (int c = 0; c < 4; ++c) xm[c] = lam * xa[c] + (1.0 - lam) * xb[c];
    const double gm = gen.eval(t, xm[0], xm[1], xm[2], xm[3]);
    const double rhs = lam * ga + (1.0 - lam) * gb;
    if (!std::isfinite(gm)) {
      // finite endpoints, infinite midpoint: the domain is not convex
      rep.worst_margin = -kPlusInfinity;
      break;
    }
    const double scale = 1.0 + std::fabs(ga) + std::fabs(gb);
    rep.worst_margin = std::min(rep.worst_margin, (rhs - gm) / scale);
  }
  rep.samples = n_samples;
  if (rep.worst_margin == kPlusInfinity) rep.worst_margin = 0.0;
  rep.ok = rep.worst_margin >= -1e-10;
  if (!rep.ok) rep.detail = "midpoint above chord";
  return rep;
}

std::array<double, 3> project_domain(const GeneratorSpec& gen, double z,
                                     double delta, double gamma) {
  if (gen.domain.z_box) {
    const auto [lo, hi] = *gen.domain.z_box;
    z = std::min(std::max(z, lo), hi);
  }
  if (gen.domain.gamma_band) {
    const double m = *gen.domain.gamma_band;
    gamma = std::min(std::max(gamma, -m), m);
  }
  return {z, delta, gamma};
}

std::array<double, 3> fd_subgradient(const GeneratorSpec& gen, double t,
                                     double y, double z, double delta,
                                     double gamma, double h) {
  std::array<double, 3> out{};
  const double x[3] = {z, delta, gamma};
  for (int c = 0; c < 3; ++c) {
    const double step = h * (1.0 + std::fabs(x[c]));
    double lo[3] = {z, delta, gamma};
    double hi[3] = {z, delta, gamma};
    lo[c] -= step;
    hi[c] += step;
    const double glo = gen.eval(t, y, lo[0], lo[1], lo[2]);
    const double ghi = gen.eval(t, y, hi[0], hi[1], hi[2]);
    if (!std::isfinite(glo) || !std::isfinite(ghi))
      throw UnsupportedError(
          "fd_subgradient: point too close to the domain boundary");
    out[c] = (ghi - glo) / (2.0 * step);
  }
  return out;
}

FdCheckReport fd_subgradient_check(
    const GeneratorSpec& gen,
    const std::vector<std::array<double, 5>>& points, double h1, double h2) {
  FdCheckReport rep;
  for (const auto& p : points) {
    const auto g1 = fd_subgradient(gen, p[0], p[1], p[2], p[3], p[4], h1);
    const auto g2 = fd_subgradient(gen, p[0], p[1], p[2], p[3], p[4], h2);
    const auto ga = gen.grad ? gen.grad(p[0], p[1], p[2], p[3], p[4]) : g2;
    for (int c = 0; c < 3; ++c) {
      const double err = std::fabs(g1[c] - ga[c]);
      const double rel = err / (1.0 + std::fabs(ga[c]));
      rep.worst_abs = std::max(rep.worst_abs, std::fabs(g2[c] - ga[c]));
      rep.worst_rel = std::max(rep.worst_rel, rel);
    }
  }
  // central differences carry O(h^2) truncation; allow a generous multiple
  rep.ok = rep.worst_rel <= 1e-3;
  return rep;
}

}  // namespace bsde
