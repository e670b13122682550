#pragma once

#include "activation.hpp"
#include "types.hpp"

#include <array>
#include <random>

namespace flowrecon {

/// The three axes a bank convolves; the remaining axis is swept.
enum class BankAxes
{
  XYZ = 0,
  XYT = 1,
  XZT = 2,
  YZT = 3
};

inline constexpr std::array<BankAxes, 4> kAllBanks{BankAxes::XYZ, BankAxes::XYT, BankAxes::XZT, BankAxes::YZT};
char const *bank_name(BankAxes b);

/// Real 3D kernels grouped into four banks, each filter paired with its own activation.
/// Kernel layout is [a][b][c] with c running along the fastest of the bank's axes.
struct FilterBank
{
  Index n_f = 8;
  Index n_c = 5;
  std::array<std::vector<double>, 4> coeffs;              ///< n_f * n_c³ per bank
  std::array<std::vector<ActivationKnots>, 4> activations; ///< n_f per bank

  FilterBank() = default;
  FilterBank(Index n_f, Index n_c, ActivationKnots const &prototype);

  Index taps() const { return n_c * n_c * n_c; }
  Index filters() const { return 4 * n_f; }
  double *kernel(int bank, Index f) { return coeffs[bank].data() + f * taps(); }
  double const *kernel(int bank, Index f) const { return coeffs[bank].data() + f * taps(); }
  void validate() const;

  /// Zero-mean Gaussian kernels rescaled to unit Euclidean norm. A 1-tap kernel is ±1.
  void randomize(std::mt19937_64 &rng);
};

/// out[o] (=|+=) Σ_τ w_τ in[o + δ_τ] over the bank's axes with zero padding. With
/// `transpose` the exact adjoint is applied instead. Real and imaginary parts are filtered
/// by the same real kernel.
void correlate(VolumeShape const &s, BankAxes axes, Index n_c, double const *kernel, Cx const *in, Cx *out, bool transpose,
               bool accumulate);

/// grad[τ] += Σ_o Re(y[o]) Re(x[o + δ_τ]) + Im(y[o]) Im(x[o + δ_τ]), the kernel gradient of ⟨y, D x⟩.
void correlate_kernel_grad(VolumeShape const &s, BankAxes axes, Index n_c, Cx const *x, Cx const *y, double *grad);

/// Fused regulariser of one bank: out += Σ_f D_fᵀ φ_f(D_f x). Processes the volume in row
/// blocks so no per-filter intermediate volumes are materialised. `kernels` holds n_f
/// consecutive kernels.
void bank_regularizer_forward(VolumeShape const &s, BankAxes axes, Index n_c, Index n_f, double const *kernels,
                              std::vector<ActivationKnots> const &acts, ActivationKind kind, Cx const *x, Cx *out);

/// Reverse mode of bank_regularizer_forward for the output cotangent `gbar`:
/// xbar += ∂/∂x, grad_kernels += ∂/∂w, grad_knots[f] += ∂/∂phi_f. Returns ⟨gbar, forward(x)⟩,
/// the derivative with respect to a scalar weight on the whole term.
double bank_regularizer_backward(VolumeShape const &s, BankAxes axes, Index n_c, Index n_f, double const *kernels,
                                 std::vector<ActivationKnots> const &acts, ActivationKind kind, Cx const *x, Cx const *gbar,
                                 Cx *xbar, double *grad_kernels, std::vector<std::vector<double>> &grad_knots);

/// Applies every filter of every bank (or its transpose) and returns one stack per filter,
/// ordered bank-major.
std::vector<ImageSeries> conv_bank_apply(ImageSeries const &p, FilterBank const &bank, bool adjoint);

} // namespace flowrecon
