#pragma once

#include "types.hpp"

#include <span>

namespace flowrecon {

enum class ActivationKind
{
  PiecewiseLinear,
  Rbf
};

/// Control knots phi_j at abscissae origin + j * omega.
struct ActivationKnots
{
  std::vector<double> phi;
  double omega = 0.17;
  double origin = 0.0;

  /// n knots centred on zero: knot (n-1)/2 sits at h = 0.
  static ActivationKnots centered(Index n, double omega);
  /// n knots spanning [lo, hi].
  static ActivationKnots span_range(Index n, double lo, double hi);

  Index size() const { return static_cast<Index>(phi.size()); }
  double abscissa(Index j) const { return origin + double(j) * omega; }
  void validate() const;

  /// phi_j = slope * abscissa(j)
  void set_line(double slope);
  void set_constant(double c);
};

/// Value and derivatives of a piecewise-linear activation at one point. The derivative with
/// respect to the knots is nonzero only for `knot` and `knot + 1`, with weights `w0` and `w1`.
struct PlEval
{
  double value = 0.0;
  double dh = 0.0;
  Index knot = 0;
  double w0 = 0.0;
  double w1 = 0.0;
};

/// Linear interpolation between adjacent knots. Outside the knot range the value is clamped
/// to the boundary knot and the slope is zero.
PlEval pl_activation(double h, ActivationKnots const &k);

struct RbfEval
{
  double value = 0.0;
  double dh = 0.0;
  std::vector<double> dphi;
};

/// Σ_i phi_i exp(-(h - mu_i)² / (2 omega²)). Knots more than 10.5 spacings from h weigh below
/// 2e-24 and are skipped.
RbfEval rbf_activation(double h, ActivationKnots const &k);

/// Bulk evaluation used by the network. `in` and `out` may alias.
void activation_forward(ActivationKind kind, ActivationKnots const &k, std::span<double const> in, std::span<double> out);

/// Reverse mode: grad_in[i] = phi'(in[i]) * grad_out[i], grad_knots += Σ_i grad_out[i] * dphi(in[i]).
/// `grad_in` may alias `grad_out`.
void activation_backward(ActivationKind kind, ActivationKnots const &k, std::span<double const> in,
                         std::span<double const> grad_out, std::span<double> grad_in, std::span<double> grad_knots);

/// Identity-like knot values for an RBF expansion: Σ phi_i g_i(h) ≈ slope * h inside the range.
void set_rbf_line(ActivationKnots &k, double slope);

} // namespace flowrecon
