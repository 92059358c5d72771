#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace ntvml::numeric {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Inverse standard normal CDF. Acklam's rational approximation polished with
/// one Halley step against erfc, good to ~1e-15 relative.
inline double normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  static constexpr std::array a{-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array b{-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr std::array c{-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array d{7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

namespace detail {

// 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1].
inline constexpr std::array<double, 8> kronrod_x{0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                                 0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                                 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                                 0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kronrod_w{0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                                 0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                                 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                                 0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> gauss_w{0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                               0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
void gk15(F& f, double a, double b, double& result, double& error) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kronrod_w[7];
  double gauss = fc * gauss_w[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kronrod_x[j];
    const double fsum = f(center - dx) + f(center + dx);
    kronrod += kronrod_w[j] * fsum;
    if (j % 2 == 1) gauss += gauss_w[j / 2] * fsum;
  }
  result = kronrod * half;
  error = std::abs((kronrod - gauss) * half);
}

template <class F>
double adaptive(F& f, double a, double b, double tol, double whole, double whole_err, int depth) {
  if (whole_err <= tol || depth <= 0 || std::abs(b - a) < 1e-15) return whole;
  const double m = 0.5 * (a + b);
  double left, left_err, right, right_err;
  gk15(f, a, m, left, left_err);
  gk15(f, m, b, right, right_err);
  return adaptive(f, a, m, 0.5 * tol, left, left_err, depth - 1) +
         adaptive(f, m, b, 0.5 * tol, right, right_err, depth - 1);
}

}  // namespace detail

/// Adaptive Gauss-Kronrod (7/15) quadrature of f over [a, b]. Never evaluates
/// the endpoints, so integrable endpoint singularities are tolerated.
template <class F>
double integrate(F&& f, double a, double b, double abs_tol = 1e-12) {
  if (a == b) return 0.0;
  double whole, err;
  detail::gk15(f, a, b, whole, err);
  return detail::adaptive(f, a, b, abs_tol, whole, err, 40);
}

}  // namespace ntvml::numeric
