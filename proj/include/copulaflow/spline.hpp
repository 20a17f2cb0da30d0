#pragma once

// Monotone rational-quadratic splines mapping [0, 1] onto a bounded interval
// [lower, upper]. The forward map is a quantile function, the inverse map is
// the matching CDF. Everything here is templated on the scalar type; the
// library instantiates it with double.

#include "copulaflow/errors.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <type_traits>

namespace copulaflow {

inline constexpr double kMinBinFraction = 1e-3;
inline constexpr double kMinDerivative = 1e-3;
//! Cap on the total mass held by the bin floors.
inline constexpr double kMaxFloorMass = 0.1;

//! Per-bin floor used when none is given: kMinBinFraction, lowered for wide
//! splines so the floors never hold more than kMaxFloorMass in total.
inline double
default_min_bin_fraction(Eigen::Index bins)
{
  return std::min(kMinBinFraction, kMaxFloorMass / static_cast<double>(bins));
}

enum class SplineDirection
{
  forward, //!< u in [0, 1] -> x in [lower, upper]
  inverse  //!< x in [lower, upper] -> u in [0, 1]
};

//! Unconstrained spline parameters. Flat layout used by optimizers:
//! [widths_raw (K), heights_raw (K), slopes_raw (K + 1)].
template<typename Scalar>
struct RawSplineParams
{
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector widths_raw;
  Vector heights_raw;
  Vector slopes_raw;
  Scalar lower{ 0 };
  Scalar upper{ 1 };

  Eigen::Index bins() const { return widths_raw.size(); }

  static Eigen::Index flat_size(Eigen::Index bins) { return 3 * bins + 1; }

  //! All-zero raw vectors give an affine map from [0, 1] onto the bounds.
  static RawSplineParams zeros(Eigen::Index bins, Scalar lower, Scalar upper)
  {
    RawSplineParams p;
    p.widths_raw = Vector::Zero(bins);
    p.heights_raw = Vector::Zero(bins);
    p.slopes_raw = Vector::Zero(bins + 1);
    p.lower = lower;
    p.upper = upper;
    return p;
  }

  template<typename Derived>
  static RawSplineParams from_flat(const Eigen::MatrixBase<Derived>& flat,
                                   Scalar lower,
                                   Scalar upper)
  {
    const Eigen::Index n = flat.size();
    if (n < 7 || (n - 1) % 3 != 0)
      throw ConfigError("flat spline parameter vector has invalid length " +
                        std::to_string(n));
    const Eigen::Index k = (n - 1) / 3;
    RawSplineParams p;
    p.widths_raw = flat.segment(0, k);
    p.heights_raw = flat.segment(k, k);
    p.slopes_raw = flat.segment(2 * k, k + 1);
    p.lower = lower;
    p.upper = upper;
    return p;
  }

  Vector flat() const
  {
    const Eigen::Index k = bins();
    Vector out(3 * k + 1);
    out << widths_raw, heights_raw, slopes_raw;
    return out;
  }
};

//! Knot representation of a spline. `deriv` is dimensionless; the slope
//! dx/du at knot k is deriv[k] * (upper - lower).
template<typename Scalar>
struct NormalizedSpline
{
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector knot_u;
  Vector knot_x;
  Vector deriv;

  // Sensitivities cached for the backward pass to raw parameters.
  Vector width_probs;
  Vector height_probs;
  Vector deriv_sens;
  Scalar min_bin_fraction{ kMinBinFraction };

  Eigen::Index bins() const { return knot_u.size() - 1; }
  Scalar lower() const { return knot_x(0); }
  Scalar upper() const { return knot_x(bins()); }
  Scalar range() const { return upper() - lower(); }
  Scalar slope(Eigen::Index k) const { return deriv(k) * range(); }
};

//! Result of evaluating a spline at one point.
template<typename Scalar>
struct SplineEval
{
  Scalar value;
  Scalar log_deriv; //!< log(dx/du) forward, log(du/dx) inverse
  bool clamped;     //!< the point was outside the domain and got clamped
};

namespace detail {

template<typename Scalar>
Scalar
softplus(Scalar z)
{
  using std::exp;
  using std::log1p;
  using std::abs;
  return std::max(z, Scalar(0)) + log1p(exp(-abs(z)));
}

template<typename Scalar>
Scalar
sigmoid(Scalar z)
{
  using std::exp;
  if (z >= Scalar(0))
    return Scalar(1) / (Scalar(1) + exp(-z));
  const Scalar e = exp(z);
  return e / (Scalar(1) + e);
}

//! Shift so that a zero raw slope maps to a unit dimensionless derivative.
template<typename Scalar>
Scalar
slope_shift(Scalar min_derivative)
{
  using std::exp;
  using std::log;
  return log(exp(Scalar(1) - min_derivative) - Scalar(1));
}

template<typename Vector>
Vector
softmax(const Vector& z)
{
  using Scalar = typename Vector::Scalar;
  const Scalar m = z.maxCoeff();
  Vector e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

//! Locates the bin holding `t` within strictly increasing knots.
template<typename Vector, typename Scalar>
Eigen::Index
find_bin(const Vector& knots, Scalar t)
{
  const Eigen::Index k = knots.size() - 1;
  const auto* begin = knots.data();
  const auto* it = std::upper_bound(begin + 1, begin + k, t);
  return static_cast<Eigen::Index>(it - begin) - 1;
}

//! Quantities of the rational-quadratic segment at local coordinate xi and
//! their partial derivatives w.r.t. (xi, s, h, d0, d1), where s = h / w.
template<typename Scalar>
struct Segment
{
  Scalar xi, s, h, d0, d1;
  Scalar t, num, den, mid;
  Scalar x_rel;                       // h * num / den
  Scalar x_xi, x_s, x_h, x_d0, x_d1;  // partials of x_rel
  Scalar log_deriv;                   // log dx/du
  Scalar l_xi, l_s, l_d0, l_d1;       // partials of log_deriv

  Segment(Scalar xi_, Scalar s_, Scalar h_, Scalar d0_, Scalar d1_)
    : xi(xi_)
    , s(s_)
    , h(h_)
    , d0(d0_)
    , d1(d1_)
  {
    using std::log;
    const Scalar one(1), two(2);
    const Scalar omx = one - xi;
    t = xi * omx;
    const Scalar sum = d0 + d1 - two * s;
    num = s * xi * xi + d0 * t;
    den = s + sum * t;
    // Same as d1 xi^2 + 2 s t + d0 (1 - xi)^2, but exact when d0 = d1 = s.
    mid = s + (d1 - s) * xi * xi + (d0 - s) * omx * omx;
    x_rel = h * num / den;

    const Scalar t_xi = one - two * xi;
    const Scalar num_xi = two * s * xi + d0 * t_xi;
    const Scalar den_xi = sum * t_xi;
    const Scalar den2 = den * den;
    x_xi = h * (num_xi * den - num * den_xi) / den2;
    x_s = h * (xi * xi * den - num * (one - two * t)) / den2;
    x_h = num / den;
    x_d0 = h * t * (den - num) / den2;
    x_d1 = -h * num * t / den2;

    log_deriv = two * log(s) + log(mid) - two * log(den);
    const Scalar mid_xi = two * d1 * xi + two * s * t_xi - two * d0 * omx;
    l_xi = mid_xi / mid - two * den_xi / den;
    l_s = two / s + two * t / mid - two * (one - two * t) / den;
    l_d0 = omx * omx / mid - two * t / den;
    l_d1 = xi * xi / mid - two * t / den;
  }
};

} // namespace detail

//! Maps raw parameters to knots. Widths and heights go through a softmax with
//! a `min_bin_fraction` floor; derivatives through a shifted softplus with a
//! `min_derivative` floor, so zero raw parameters give the affine map. A
//! negative `min_bin_fraction` selects default_min_bin_fraction().
template<typename Scalar>
NormalizedSpline<Scalar>
normalize_params(const RawSplineParams<Scalar>& raw,
                 Scalar min_bin_fraction = Scalar(-1),
                 Scalar min_derivative = Scalar(kMinDerivative))
{
  using std::isfinite;
  using Vector = typename NormalizedSpline<Scalar>::Vector;
  const Eigen::Index k = raw.bins();
  if (k < 2)
    throw ConfigError("spline needs at least 2 bins, got " + std::to_string(k));
  if (raw.heights_raw.size() != k || raw.slopes_raw.size() != k + 1)
    throw ConfigError("spline parameter vectors have inconsistent lengths");
  if (min_bin_fraction < Scalar(0))
    min_bin_fraction = Scalar(default_min_bin_fraction(k));
  if (min_bin_fraction * Scalar(k) >= Scalar(1))
    throw ConfigError("min_bin_fraction * bins must be below 1");
  if (!isfinite(raw.lower) || !isfinite(raw.upper) || !(raw.lower < raw.upper))
    throw ConfigError("spline bounds must be finite with lower < upper");
  if (!raw.widths_raw.allFinite() || !raw.heights_raw.allFinite() ||
      !raw.slopes_raw.allFinite())
    throw ParameterError("spline parameters contain non-finite entries");

  NormalizedSpline<Scalar> sp;
  sp.min_bin_fraction = min_bin_fraction;
  const Scalar scale = Scalar(1) - min_bin_fraction * Scalar(k);
  sp.width_probs = detail::softmax(raw.widths_raw);
  sp.height_probs = detail::softmax(raw.heights_raw);

  const Scalar range = raw.upper - raw.lower;
  sp.knot_u.resize(k + 1);
  sp.knot_x.resize(k + 1);
  sp.knot_u(0) = Scalar(0);
  sp.knot_x(0) = raw.lower;
  Scalar cu(0), cx(0);
  for (Eigen::Index i = 1; i < k; ++i) {
    cu += min_bin_fraction + scale * sp.width_probs(i - 1);
    cx += min_bin_fraction + scale * sp.height_probs(i - 1);
    sp.knot_u(i) = cu;
    sp.knot_x(i) = raw.lower + range * cx;
  }
  sp.knot_u(k) = Scalar(1);
  sp.knot_x(k) = raw.upper;

  const Scalar shift = detail::slope_shift(min_derivative);
  sp.deriv.resize(k + 1);
  sp.deriv_sens.resize(k + 1);
  for (Eigen::Index i = 0; i <= k; ++i) {
    const Scalar z = raw.slopes_raw(i) + shift;
    sp.deriv(i) = min_derivative + detail::softplus(z);
    sp.deriv_sens(i) = detail::sigmoid(z);
  }
  return sp;
}

//! Quantile direction: u in [0, 1] -> x. Inputs outside [0, 1] are clamped.
template<typename Scalar>
SplineEval<Scalar>
rq_forward(const NormalizedSpline<Scalar>& sp, Scalar u)
{
  bool clamped = false;
  if (!(u >= Scalar(0))) {
    u = Scalar(0);
    clamped = true;
  } else if (u > Scalar(1)) {
    u = Scalar(1);
    clamped = true;
  }
  const Eigen::Index b = detail::find_bin(sp.knot_u, u);
  const Scalar w = sp.knot_u(b + 1) - sp.knot_u(b);
  const Scalar h = sp.knot_x(b + 1) - sp.knot_x(b);
  const Scalar xi = std::clamp((u - sp.knot_u(b)) / w, Scalar(0), Scalar(1));
  const Scalar rng = sp.range();
  const detail::Segment<Scalar> seg(
    xi, h / w, h, sp.deriv(b) * rng, sp.deriv(b + 1) * rng);
  Scalar x = sp.knot_x(b) + seg.x_rel;
  x = std::clamp(x, sp.knot_x(b), sp.knot_x(b + 1));
  return { x, seg.log_deriv, clamped };
}

namespace detail {

//! Solves the per-bin quadratic for the local coordinate using the
//! cancellation-free root 2c / (-b - sqrt(b^2 - 4ac)).
template<typename Scalar>
Scalar
solve_local(Scalar dx, Scalar h, Scalar s, Scalar d0, Scalar d1)
{
  using std::sqrt;
  const Scalar sum = d0 + d1 - Scalar(2) * s;
  const Scalar a = h * (s - d0) + dx * sum;
  const Scalar b = h * d0 - dx * sum;
  const Scalar c = -s * dx;
  const Scalar disc = std::max(b * b - Scalar(4) * a * c, Scalar(0));
  const Scalar denom = -b - sqrt(disc);
  if (denom == Scalar(0))
    return Scalar(0);
  return std::clamp(Scalar(2) * c / denom, Scalar(0), Scalar(1));
}

} // namespace detail

//! CDF direction: x in [lower, upper] -> u. Inputs outside the bounds are
//! clamped to the nearest bound.
template<typename Scalar>
SplineEval<Scalar>
rq_inverse(const NormalizedSpline<Scalar>& sp, Scalar x)
{
  bool clamped = false;
  if (!(x >= sp.lower())) {
    x = sp.lower();
    clamped = true;
  } else if (x > sp.upper()) {
    x = sp.upper();
    clamped = true;
  }
  const Eigen::Index b = detail::find_bin(sp.knot_x, x);
  const Scalar w = sp.knot_u(b + 1) - sp.knot_u(b);
  const Scalar h = sp.knot_x(b + 1) - sp.knot_x(b);
  const Scalar s = h / w;
  const Scalar rng = sp.range();
  const Scalar d0 = sp.deriv(b) * rng;
  const Scalar d1 = sp.deriv(b + 1) * rng;
  const Scalar xi = detail::solve_local(x - sp.knot_x(b), h, s, d0, d1);
  const detail::Segment<Scalar> seg(xi, s, h, d0, d1);
  const Scalar u = std::clamp(
    sp.knot_u(b) + w * xi, sp.knot_u(b), sp.knot_u(b + 1));
  return { u, -seg.log_deriv, clamped };
}

//! Value, log-derivative and their partial derivatives at one point.
//! `local_*` hold partials w.r.t. the bin quantities
//! (u_k, w_k, x_k, h_k, slope_k, slope_{k+1}) of bin `bin`.
template<typename Scalar>
struct SplinePointGrad
{
  Scalar value{ 0 };
  Scalar log_deriv{ 0 };
  Scalar dvalue_dpoint{ 0 };
  Scalar dlog_dpoint{ 0 };
  Eigen::Index bin{ 0 };
  std::array<Scalar, 6> local_value{};
  std::array<Scalar, 6> local_log{};
  bool clamped{ false };
};

//! Evaluates the spline and every partial derivative needed for training.
//! Clamped points carry zero gradients.
template<typename Scalar>
SplinePointGrad<Scalar>
rq_point_grad(const NormalizedSpline<Scalar>& sp,
              Scalar point,
              SplineDirection direction)
{
  SplinePointGrad<Scalar> g;
  const Scalar rng = sp.range();
  if (direction == SplineDirection::forward) {
    const auto ev = rq_forward(sp, point);
    g.value = ev.value;
    g.log_deriv = ev.log_deriv;
    g.clamped = ev.clamped;
    if (ev.clamped)
      return g;
    const Eigen::Index b = detail::find_bin(sp.knot_u, point);
    const Scalar w = sp.knot_u(b + 1) - sp.knot_u(b);
    const Scalar h = sp.knot_x(b + 1) - sp.knot_x(b);
    const Scalar xi = (point - sp.knot_u(b)) / w;
    const Scalar s = h / w;
    const detail::Segment<Scalar> seg(
      xi, s, h, sp.deriv(b) * rng, sp.deriv(b + 1) * rng);
    g.bin = b;
    g.dvalue_dpoint = seg.x_xi / w;
    g.dlog_dpoint = seg.l_xi / w;
    g.local_value = { -seg.x_xi / w,
                      -(seg.x_xi * xi + seg.x_s * s) / w,
                      Scalar(1),
                      seg.x_h + seg.x_s / w,
                      seg.x_d0,
                      seg.x_d1 };
    g.local_log = { -seg.l_xi / w,
                    -(seg.l_xi * xi + seg.l_s * s) / w,
                    Scalar(0),
                    seg.l_s / w,
                    seg.l_d0,
                    seg.l_d1 };
    return g;
  }

  const auto ev = rq_inverse(sp, point);
  g.value = ev.value;
  g.log_deriv = ev.log_deriv;
  g.clamped = ev.clamped;
  if (ev.clamped)
    return g;
  const Eigen::Index b = detail::find_bin(sp.knot_x, point);
  const Scalar w = sp.knot_u(b + 1) - sp.knot_u(b);
  const Scalar h = sp.knot_x(b + 1) - sp.knot_x(b);
  const Scalar s = h / w;
  const Scalar d0 = sp.deriv(b) * rng;
  const Scalar d1 = sp.deriv(b + 1) * rng;
  const Scalar xi = (ev.value - sp.knot_u(b)) / w;
  const detail::Segment<Scalar> seg(xi, s, h, d0, d1);
  g.bin = b;
  // Implicit differentiation of x = x_k + x_rel(xi, theta).
  const Scalar inv_xxi = Scalar(1) / seg.x_xi;
  const std::array<Scalar, 6> g_explicit = {
    Scalar(0), -seg.x_s * s / w, Scalar(1), seg.x_h + seg.x_s / w,
    seg.x_d0,  seg.x_d1
  };
  const std::array<Scalar, 6> s_partial = { Scalar(0), -s / w,    Scalar(0),
                                            Scalar(1) / w, Scalar(0), Scalar(0) };
  const std::array<Scalar, 6> l_explicit = { Scalar(0), Scalar(0), Scalar(0),
                                             Scalar(0), seg.l_d0,  seg.l_d1 };
  g.dvalue_dpoint = w * inv_xxi;
  g.dlog_dpoint = -seg.l_xi * inv_xxi;
  for (std::size_t j = 0; j < 6; ++j) {
    const Scalar dxi = -g_explicit[j] * inv_xxi;
    g.local_value[j] = w * dxi;
    g.local_log[j] = -(seg.l_xi * dxi + seg.l_s * s_partial[j] + l_explicit[j]);
  }
  g.local_value[0] += Scalar(1);
  g.local_value[1] += xi;
  return g;
}

//! Gradient accumulator over knot quantities, flushed into raw parameter
//! gradients by `backprop_to_raw`. `slope` holds d/d(slope_k) where
//! slope_k = deriv[k] * range.
template<typename Scalar>
struct SplineKnotGrad
{
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector knot_u;
  Vector knot_x;
  Vector slope;

  explicit SplineKnotGrad(Eigen::Index bins = 0)
    : knot_u(Vector::Zero(bins + 1))
    , knot_x(Vector::Zero(bins + 1))
    , slope(Vector::Zero(bins + 1))
  {}

  void set_zero()
  {
    knot_u.setZero();
    knot_x.setZero();
    slope.setZero();
  }

  //! Adds value_weight * d(value) + log_weight * d(log_deriv).
  void accumulate(const SplinePointGrad<Scalar>& g,
                  Scalar value_weight,
                  Scalar log_weight)
  {
    if (g.clamped)
      return;
    std::array<Scalar, 6> c;
    for (std::size_t j = 0; j < 6; ++j)
      c[j] = value_weight * g.local_value[j] + log_weight * g.local_log[j];
    const Eigen::Index b = g.bin;
    knot_u(b) += c[0] - c[1];
    knot_u(b + 1) += c[1];
    knot_x(b) += c[2] - c[3];
    knot_x(b + 1) += c[3];
    slope(b) += c[4];
    slope(b + 1) += c[5];
  }
};

//! Chains knot gradients through the cumulative sums, softmax and softplus
//! back to the flat raw parameter layout [widths, heights, slopes].
template<typename Scalar>
void
backprop_to_raw(const NormalizedSpline<Scalar>& sp,
                const SplineKnotGrad<Scalar>& kg,
                std::type_identity_t<Eigen::Ref<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>> flat_grad)
{
  const Eigen::Index k = sp.bins();
  const Scalar scale = Scalar(1) - sp.min_bin_fraction * Scalar(k);
  const Scalar rng = sp.range();

  // Bin j feeds knots j+1 .. K-1 (both end knots are fixed).
  auto softmax_back = [&](const auto& knot_grad,
                          const auto& probs,
                          Scalar knot_scale,
                          Eigen::Index offset) {
    Scalar suffix(0);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g_bin(k);
    for (Eigen::Index j = k - 1; j >= 0; --j) {
      g_bin(j) = suffix * knot_scale * scale;
      if (j >= 1)
        suffix += knot_grad(j);
    }
    const Scalar dot = g_bin.dot(probs);
    for (Eigen::Index i = 0; i < k; ++i)
      flat_grad(offset + i) = probs(i) * (g_bin(i) - dot);
  };
  softmax_back(kg.knot_u, sp.width_probs, Scalar(1), 0);
  softmax_back(kg.knot_x, sp.height_probs, rng, k);
  for (Eigen::Index i = 0; i <= k; ++i)
    flat_grad(2 * k + i) = kg.slope(i) * rng * sp.deriv_sens(i);
}

//! Full parameter gradient of a single evaluation, for tests and diagnostics.
template<typename Scalar>
struct SplineParamGradient
{
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  SplineEval<Scalar> eval;
  Vector dvalue; //!< d(value)/d(flat raw params)
  Vector dlog;   //!< d(log_deriv)/d(flat raw params)
};

template<typename Scalar>
SplineParamGradient<Scalar>
rq_param_gradients(const RawSplineParams<Scalar>& raw,
                   Scalar point,
                   SplineDirection direction,
                   Scalar min_bin_fraction = Scalar(-1),
                   Scalar min_derivative = Scalar(kMinDerivative))
{
  const auto sp = normalize_params(raw, min_bin_fraction, min_derivative);
  const auto g = rq_point_grad(sp, point, direction);
  const Eigen::Index n = RawSplineParams<Scalar>::flat_size(sp.bins());
  SplineParamGradient<Scalar> out;
  out.eval = { g.value, g.log_deriv, g.clamped };
  out.dvalue.resize(n);
  out.dlog.resize(n);
  SplineKnotGrad<Scalar> kg(sp.bins());
  kg.accumulate(g, Scalar(1), Scalar(0));
  backprop_to_raw(sp, kg, out.dvalue);
  kg.set_zero();
  kg.accumulate(g, Scalar(0), Scalar(1));
  backprop_to_raw(sp, kg, out.dlog);
  return out;
}

using RawSplineParamsd = RawSplineParams<double>;
using NormalizedSplined = NormalizedSpline<double>;

} // namespace copulaflow
