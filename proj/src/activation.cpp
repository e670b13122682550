#include "flowrecon/activation.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#ifdef __AVX2__
#include <immintrin.h>
#endif

namespace flowrecon {

ActivationKnots ActivationKnots::centered(Index n, double omega)
{
  ActivationKnots k;
  k.phi.assign(static_cast<std::size_t>(n), 0.0);
  k.omega = omega;
  k.origin = -0.5 * double(n - 1) * omega;
  k.validate();
  return k;
}

ActivationKnots ActivationKnots::span_range(Index n, double lo, double hi)
{
  ActivationKnots k;
  k.phi.assign(static_cast<std::size_t>(n), 0.0);
  k.omega = (hi - lo) / double(n - 1);
  k.origin = lo;
  k.validate();
  return k;
}

void ActivationKnots::validate() const
{
  if (phi.size() < 2) { throw ConfigError("activation needs at least 2 knots"); }
  if (!(omega > 0.0) || !std::isfinite(omega)) { throw ConfigError("knot spacing must be positive"); }
}

void ActivationKnots::set_line(double slope)
{
  for (Index j = 0; j < size(); j++) { phi[j] = slope * abscissa(j); }
}

void ActivationKnots::set_constant(double c) { std::fill(phi.begin(), phi.end(), c); }

namespace {

struct PlCoeffs
{
  double inv_omega, shift;
  Index last;
};

inline PlCoeffs pl_coeffs(ActivationKnots const &k) { return {1.0 / k.omega, -k.origin / k.omega, k.size() - 1}; }

inline double pl_value(double h, double const *phi, PlCoeffs const &c)
{
  double const s = h * c.inv_omega + c.shift;
  if (s <= 0.0) { return phi[0]; }
  if (s >= double(c.last)) { return phi[c.last]; }
  auto const j = static_cast<Index>(s);
  double const f = s - double(j);
  return phi[j] + f * (phi[j + 1] - phi[j]);
}

// Gaussian weights g_{i0+m} = exp(-(d - m)^2 / 2) = g0 * e^{m d} * e^{-m^2 / 2} around the nearest
// knot i0 with d = s - i0. Knots outside i0 ± kRbfHalf weigh below 2e-24 and are dropped.
constexpr Index kRbfHalf = 10;
constexpr Index kRbfWidth = 2 * kRbfHalf + 1;

struct RbfTable
{
  double c[kRbfHalf + 1];
  RbfTable()
  {
    for (Index m = 0; m <= kRbfHalf; m++) { c[m] = std::exp(-0.5 * double(m * m)); }
  }
};

inline RbfTable const &rbf_table()
{
  static RbfTable const t;
  return t;
}

// Fills w[0..kRbfWidth) for knots i0 - kRbfHalf .. i0 + kRbfHalf; false when no knot is in reach.
inline bool rbf_window(double s, Index n, Index &i0, double &d, double *w)
{
  double const r = std::nearbyint(s);
  if (!(r >= -double(kRbfHalf) && r <= double(n - 1 + kRbfHalf))) { return false; }
  i0 = static_cast<Index>(r);
  d = s - r;
  double const *c = rbf_table().c;
  double const g0 = std::exp(-0.5 * d * d);
  double const e = std::exp(d);
  double const ie = 1.0 / e;
  double up = g0, dn = g0;
  w[kRbfHalf] = g0;
  for (Index m = 1; m <= kRbfHalf; m++) {
    up *= e;
    dn *= ie;
    w[kRbfHalf + m] = up * c[m];
    w[kRbfHalf - m] = dn * c[m];
  }
  return true;
}

// Knot values with 2 * kRbfHalf zeros on each side, so a window never leaves the array.
inline std::vector<double> rbf_padded(std::span<double const> phi)
{
  std::vector<double> p(phi.size() + 4 * kRbfHalf, 0.0);
  std::copy(phi.begin(), phi.end(), p.begin() + 2 * kRbfHalf);
  return p;
}

// Bulk evaluation in blocks: anchors and exponentials for a whole block first, then the
// window sum one offset at a time across the block.
void rbf_forward_blocked(ActivationKnots const &k, std::span<double const> in, std::span<double> out)
{
  constexpr Index B = 128;
  double const *c = rbf_table().c;
  double const inv = 1.0 / k.omega;
  double const shift = -k.origin / k.omega;
  double const lo = -double(kRbfHalf), hi = double(k.size() - 1 + kRbfHalf);
  auto const padded = rbf_padded(k.phi);
  double const *pad = padded.data() + kRbfHalf;
  alignas(64) double d[B], e[B], ie[B], up[B], dn[B], acc[B];
  alignas(64) std::int32_t off[B];
  Index const n = static_cast<Index>(in.size());
  for (Index b0 = 0; b0 < n; b0 += B) {
    Index const nb = std::min(B, n - b0);
    for (Index i = 0; i < nb; i++) {
      double s = in[b0 + i] * inv + shift;
      s = s < lo ? lo - 1.0 : (s > hi ? hi + 1.0 : s);
      double const r = std::floor(s + 0.5);
      bool const ok = r >= lo && r <= hi;
      d[i] = s - r;
      off[i] = static_cast<std::int32_t>(ok ? r : 0.0) + std::int32_t(kRbfHalf);
      up[i] = ok ? 1.0 : 0.0;
    }
    {
      Eigen::Map<Eigen::ArrayXd> D(d, nb), E(e, nb), IE(ie, nb), U(up, nb);
      U *= (-0.5 * D * D).exp();
      E = D.exp();
      IE = E.inverse();
    }
    for (Index i = 0; i < nb; i++) {
      dn[i] = up[i];
      acc[i] = pad[off[i]] * up[i];
    }
    for (Index m = 1; m <= kRbfHalf; m++) {
      double const cm = c[m];
      double const *pu = pad + m;
      double const *pd = pad - m;
      Index i = 0;
#ifdef __AVX2__
      for (; i + 4 <= nb; i += 4) {
        __m128i const o = _mm_load_si128(reinterpret_cast<__m128i const *>(off + i));
        __m256d const u = _mm256_mul_pd(_mm256_load_pd(up + i), _mm256_load_pd(e + i));
        __m256d const v = _mm256_mul_pd(_mm256_load_pd(dn + i), _mm256_load_pd(ie + i));
        _mm256_store_pd(up + i, u);
        _mm256_store_pd(dn + i, v);
        __m256d const t = _mm256_fmadd_pd(_mm256_i32gather_pd(pu, o, 8), u, _mm256_mul_pd(_mm256_i32gather_pd(pd, o, 8), v));
        _mm256_store_pd(acc + i, _mm256_fmadd_pd(_mm256_set1_pd(cm), t, _mm256_load_pd(acc + i)));
      }
#endif
      for (; i < nb; i++) {
        up[i] *= e[i];
        dn[i] *= ie[i];
        acc[i] += cm * (pu[off[i]] * up[i] + pd[off[i]] * dn[i]);
      }
    }
    std::copy(acc, acc + nb, out.begin() + b0);
  }
}

} // namespace

PlEval pl_activation(double h, ActivationKnots const &k)
{
  PlEval e;
  Index const last = k.size() - 1;
  double const s = (h - k.origin) / k.omega;
  if (s <= 0.0) {
    e.value = k.phi[0];
    e.knot = 0;
    e.w0 = 1.0;
    return e;
  }
  if (s >= double(last)) {
    e.value = k.phi[last];
    e.knot = last - 1;
    e.w1 = 1.0;
    return e;
  }
  auto const j = static_cast<Index>(std::floor(s));
  double const f = s - double(j);
  e.knot = j;
  e.w0 = 1.0 - f;
  e.w1 = f;
  e.value = e.w0 * k.phi[j] + e.w1 * k.phi[j + 1];
  e.dh = (k.phi[j + 1] - k.phi[j]) / k.omega;
  return e;
}

RbfEval rbf_activation(double h, ActivationKnots const &k)
{
  RbfEval e;
  e.dphi.assign(k.phi.size(), 0.0);
  double const s = (h - k.origin) / k.omega;
  Index i0;
  double d, w[kRbfWidth];
  if (!rbf_window(s, k.size(), i0, d, w)) { return e; }
  for (Index m = 0; m < kRbfWidth; m++) {
    Index const j = i0 - kRbfHalf + m;
    if (j < 0 || j >= k.size()) { continue; }
    e.value += k.phi[j] * w[m];
    e.dh -= k.phi[j] * w[m] * (d - double(m - kRbfHalf)) / k.omega;
    e.dphi[j] = w[m];
  }
  return e;
}

void activation_forward(ActivationKind kind, ActivationKnots const &k, std::span<double const> in, std::span<double> out)
{
  if (in.size() != out.size()) { throw DimensionError("activation_forward: length mismatch"); }
  std::size_t const n = in.size();
  if (kind == ActivationKind::PiecewiseLinear) {
    PlCoeffs const c = pl_coeffs(k);
    double const *phi = k.phi.data();
    for (std::size_t i = 0; i < n; i++) { out[i] = pl_value(in[i], phi, c); }
    return;
  }
  rbf_forward_blocked(k, in, out);
}

void activation_backward(ActivationKind kind, ActivationKnots const &k, std::span<double const> in,
                         std::span<double const> grad_out, std::span<double> grad_in, std::span<double> grad_knots)
{
  std::size_t const n = in.size();
  if (grad_out.size() != n || grad_in.size() != n) { throw DimensionError("activation_backward: length mismatch"); }
  if (grad_knots.size() != k.phi.size()) { throw DimensionError("activation_backward: knot gradient size mismatch"); }
  double const inv = 1.0 / k.omega;
  double const shift = -k.origin / k.omega;
  double const *phi = k.phi.data();
  Index const last = k.size() - 1;
  if (kind == ActivationKind::PiecewiseLinear) {
    for (std::size_t i = 0; i < n; i++) {
      double const g = grad_out[i];
      double const s = in[i] * inv + shift;
      if (s <= 0.0) {
        grad_knots[0] += g;
        grad_in[i] = 0.0;
      } else if (s >= double(last)) {
        grad_knots[last] += g;
        grad_in[i] = 0.0;
      } else {
        auto const j = static_cast<Index>(s);
        double const f = s - double(j);
        grad_knots[j] += (1.0 - f) * g;
        grad_knots[j + 1] += f * g;
        grad_in[i] = (phi[j + 1] - phi[j]) * inv * g;
      }
    }
    return;
  }
  auto const pad = rbf_padded(k.phi);
  std::vector<double> gpad(pad.size(), 0.0);
  double w[kRbfWidth];
  for (std::size_t i = 0; i < n; i++) {
    double const g = grad_out[i];
    Index i0;
    double d;
    if (!rbf_window(in[i] * inv + shift, k.size(), i0, d, w)) {
      grad_in[i] = 0.0;
      continue;
    }
    double const *p = pad.data() + i0 + kRbfHalf;
    double *gp = gpad.data() + i0 + kRbfHalf;
    double dh = 0.0;
    for (Index m = 0; m < kRbfWidth; m++) {
      gp[m] += w[m] * g;
      dh -= p[m] * w[m] * (d - double(m - kRbfHalf));
    }
    grad_in[i] = dh * inv * g;
  }
  for (Index j = 0; j <= last; j++) { grad_knots[j] += gpad[j + 2 * kRbfHalf]; }
}

void set_rbf_line(ActivationKnots &k, double slope)
{
  // Σ_i mu_i g(h - mu_i) ≈ sqrt(2 pi) * h for unit-spacing Gaussians of width omega
  for (Index j = 0; j < k.size(); j++) { k.phi[j] = slope * k.abscissa(j) / std::sqrt(2.0 * std::numbers::pi); }
}

} // namespace flowrecon
