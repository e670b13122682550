#pragma once

#include "fft.hpp"
#include "types.hpp"

#include <array>
#include <span>

namespace flowrecon {

/// Real-valued field over [t][z][y][x].
struct RealField
{
  VolumeShape shape;
  std::vector<double> data;

  RealField() = default;
  explicit RealField(VolumeShape s, double fill = 0.0);
};

/// Three velocity components in cm/s, each [t][z][y][x]. `valid` marks voxels where a
/// phase difference could be formed.
struct VelocityField
{
  VolumeShape shape;
  std::array<std::vector<double>, 3> v;
  std::vector<std::uint8_t> valid;

  VelocityField() = default;
  explicit VelocityField(VolumeShape s);
};

/// Four-point referenced phase-contrast encoding. Row 0 is the reference, rows 1-3
/// encode x, y and z respectively.
struct VelocityEncoding
{
  static constexpr int kEncodings = 4;
  static constexpr std::array<std::array<int, 3>, 4> phi{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  double venc = 150.0; ///< cm/s mapped to a phase of pi

  void validate() const;
};

using EncodedImages = std::array<ImageSeries, VelocityEncoding::kEncodings>;

/// rho_i = mag * exp(j*pi*(Phi v)_i / venc)
EncodedImages velocity_encode(RealField const &magnitude, VelocityField const &velocity, VelocityEncoding const &enc);

/// v_i = venc/pi * angle(rho_i * conj(rho_0)); voxels with zero magnitude are flagged invalid and set to 0.
VelocityField velocity_decode(EncodedImages const &images, VelocityEncoding const &enc);

/// Multi-coil Cartesian encoding M ⊙ F W_k and its adjoint, applied frame by frame over t.
class EncodingOperator
{
public:
  EncodingOperator(CoilSet coils, MaskSeries mask, VolumeShape shape, bool hybrid = false);

  VolumeShape const &shape() const { return shape_; }
  Index coils() const { return coils_.nc; }
  bool hybrid() const { return hybrid_; }
  MaskSeries const &mask() const { return mask_; }
  CoilSet const &coil_set() const { return coils_; }

  /// out = M ⊙ F (c_k ⊙ img) for one coil; `out` holds shape().size() samples.
  void coil_forward(Index c, Cx const *img, Cx *out) const;
  /// img += conj(c_k) ⊙ Fᴴ (M ⊙ k) for one coil. `k` is used as scratch and left modified.
  void coil_adjoint_add(Index c, Cx *k, Cx *img) const;

  void forward(ImageSeries const &img, KSpaceData &out) const;
  void adjoint(KSpaceData const &k, ImageSeries &out) const;
  /// out = Eᴴ M E img
  void normal(ImageSeries const &img, ImageSeries &out) const;

  void apply_mask(Cx *k) const;
  KSpaceData make_kspace() const;

private:
  CoilSet coils_;
  MaskSeries mask_;
  VolumeShape shape_;
  bool hybrid_;
  CenteredFft fft_;
};

KSpaceData forward_encode(ImageSeries const &p, CoilSet const &coils, MaskSeries const &mask, bool hybrid = false);
ImageSeries adjoint_encode(KSpaceData const &b, CoilSet const &coils);

/// Scales b so that ‖b‖_F = ‖M‖₁, with ‖M‖₁ counting sampled (ky, kz, t) positions.
/// Returns the applied factor; divide a reconstruction by it to undo the scaling.
double normalize_kspace(KSpaceData &b);

/// Inverse transforms the fully sampled readout axis so only (ky, kz) remain encoded.
KSpaceData to_hybrid(KSpaceData const &b);

/// Complex inner product Σ conj(a) b.
Cx inner(std::span<Cx const> a, std::span<Cx const> b);
/// Σ Re(a) Re(b) + Im(a) Im(b), the inner product of the underlying real vectors.
double real_inner(std::span<Cx const> a, std::span<Cx const> b);
double norm(std::span<Cx const> a);

} // namespace flowrecon
