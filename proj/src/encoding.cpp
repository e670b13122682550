#include "flowrecon/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flowrecon {

RealField::RealField(VolumeShape s, double fill)
  : shape{s}
{
  shape.validate();
  data.assign(static_cast<std::size_t>(shape.size()), fill);
}

VelocityField::VelocityField(VolumeShape s)
  : shape{s}
{
  shape.validate();
  for (auto &c : v) { c.assign(static_cast<std::size_t>(shape.size()), 0.0); }
  valid.assign(static_cast<std::size_t>(shape.size()), 1);
}

void VelocityEncoding::validate() const
{
  if (!(venc > 0.0) || !std::isfinite(venc)) { throw ConfigError("venc must be positive"); }
}

EncodedImages velocity_encode(RealField const &magnitude, VelocityField const &velocity, VelocityEncoding const &enc)
{
  enc.validate();
  if (!(magnitude.shape == velocity.shape)) { throw DimensionError("velocity_encode: magnitude and velocity shapes differ"); }
  EncodedImages out;
  Index const n = magnitude.shape.size();
  for (int i = 0; i < VelocityEncoding::kEncodings; i++) {
    out[i] = ImageSeries(magnitude.shape);
    auto const &row = VelocityEncoding::phi[i];
    for (Index j = 0; j < n; j++) {
      double const pv = row[0] * velocity.v[0][j] + row[1] * velocity.v[1][j] + row[2] * velocity.v[2][j];
      out[i].data[j] = std::polar(magnitude.data[j], std::numbers::pi * pv / enc.venc);
    }
  }
  return out;
}

VelocityField velocity_decode(EncodedImages const &images, VelocityEncoding const &enc)
{
  enc.validate();
  VolumeShape const s = images[0].shape;
  for (auto const &im : images) {
    if (!(im.shape == s)) { throw DimensionError("velocity_decode: encoding shapes differ"); }
  }
  VelocityField out(s);
  double const k = enc.venc / std::numbers::pi;
  for (Index j = 0; j < s.size(); j++) {
    Cx const ref = images[0].data[j];
    bool ok = std::abs(ref) > 0.0;
    for (int d = 0; d < 3 && ok; d++) { ok = std::abs(images[d + 1].data[j]) > 0.0; }
    out.valid[j] = ok ? 1 : 0;
    for (int d = 0; d < 3; d++) {
      out.v[d][j] = ok ? k * std::arg(images[d + 1].data[j] * std::conj(ref)) : 0.0;
    }
  }
  return out;
}

EncodingOperator::EncodingOperator(CoilSet coils, MaskSeries mask, VolumeShape shape, bool hybrid)
  : coils_{std::move(coils)}
  , mask_{std::move(mask)}
  , shape_{shape}
  , hybrid_{hybrid}
  , fft_{shape.nx, shape.ny, shape.nz, hybrid ? FftAxes::YZ : FftAxes::XYZ}
{
  shape_.validate();
  if (coils_.nx != shape_.nx || coils_.ny != shape_.ny || coils_.nz != shape_.nz) {
    throw DimensionError("coil maps do not match the image grid");
  }
  if (mask_.ny != shape_.ny || mask_.nz != shape_.nz || mask_.nt != shape_.nt) {
    throw DimensionError("mask does not match the image grid");
  }
}

void EncodingOperator::apply_mask(Cx *k) const
{
  Index const nx = shape_.nx;
  for (Index t = 0; t < shape_.nt; t++) {
    for (Index z = 0; z < shape_.nz; z++) {
      for (Index y = 0; y < shape_.ny; y++) {
        if (!mask_(y, z, t)) {
          Cx *row = k + shape_.index(0, y, z, t);
          std::fill(row, row + nx, Cx{0.0, 0.0});
        }
      }
    }
  }
}

void EncodingOperator::coil_forward(Index c, Cx const *img, Cx *out) const
{
  Index const nv = shape_.voxels();
  Cx const *map = coils_.coil(c);
  for (Index t = 0; t < shape_.nt; t++) {
    Cx const *src = img + t * nv;
    Cx *dst = out + t * nv;
    for (Index i = 0; i < nv; i++) { dst[i] = map[i] * src[i]; }
    fft_.forward(dst);
  }
  apply_mask(out);
}

void EncodingOperator::coil_adjoint_add(Index c, Cx *k, Cx *img) const
{
  Index const nv = shape_.voxels();
  Cx const *map = coils_.coil(c);
  apply_mask(k);
  for (Index t = 0; t < shape_.nt; t++) {
    Cx *frame = k + t * nv;
    fft_.inverse(frame);
    Cx *dst = img + t * nv;
    for (Index i = 0; i < nv; i++) { dst[i] += std::conj(map[i]) * frame[i]; }
  }
}

KSpaceData EncodingOperator::make_kspace() const { return KSpaceData(shape_, coils_.nc, mask_, hybrid_); }

void EncodingOperator::forward(ImageSeries const &img, KSpaceData &out) const
{
  if (!(img.shape == shape_)) { throw DimensionError("forward_encode: image shape does not match operator"); }
  if (!(out.shape == shape_) || out.nc != coils_.nc) { out = make_kspace(); }
  out.mask = mask_;
  out.hybrid = hybrid_;
  for (Index c = 0; c < coils_.nc; c++) { coil_forward(c, img.data.data(), out.coil(c)); }
}

void EncodingOperator::adjoint(KSpaceData const &k, ImageSeries &out) const
{
  if (!(k.shape == shape_) || k.nc != coils_.nc) { throw DimensionError("adjoint_encode: k-space shape does not match operator"); }
  if (k.hybrid != hybrid_) { throw DimensionError("adjoint_encode: hybrid flag mismatch"); }
  if (!(out.shape == shape_)) { out = ImageSeries(shape_); }
  std::fill(out.data.begin(), out.data.end(), Cx{0.0, 0.0});
  std::vector<Cx> tmp(static_cast<std::size_t>(shape_.size()));
  for (Index c = 0; c < coils_.nc; c++) {
    std::copy(k.coil(c), k.coil(c) + shape_.size(), tmp.begin());
    coil_adjoint_add(c, tmp.data(), out.data.data());
  }
}

void EncodingOperator::normal(ImageSeries const &img, ImageSeries &out) const
{
  if (!(img.shape == shape_)) { throw DimensionError("normal: image shape does not match operator"); }
  if (!(out.shape == shape_)) { out = ImageSeries(shape_); }
  std::fill(out.data.begin(), out.data.end(), Cx{0.0, 0.0});
  std::vector<Cx> tmp(static_cast<std::size_t>(shape_.size()));
  for (Index c = 0; c < coils_.nc; c++) {
    coil_forward(c, img.data.data(), tmp.data());
    coil_adjoint_add(c, tmp.data(), out.data.data());
  }
}

KSpaceData forward_encode(ImageSeries const &p, CoilSet const &coils, MaskSeries const &mask, bool hybrid)
{
  EncodingOperator const E(coils, mask, p.shape, hybrid);
  KSpaceData out = E.make_kspace();
  E.forward(p, out);
  return out;
}

ImageSeries adjoint_encode(KSpaceData const &b, CoilSet const &coils)
{
  b.validate();
  if (b.nc != coils.nc) { throw DimensionError("adjoint_encode: coil count mismatch"); }
  EncodingOperator const E(coils, b.mask, b.shape, b.hybrid);
  ImageSeries out(b.shape);
  E.adjoint(b, out);
  return out;
}

double normalize_kspace(KSpaceData &b)
{
  b.validate();
  double const fro = norm(b.samples);
  if (!(fro > 0.0)) { throw NumericalError("normalize_kspace: k-space is all zero"); }
  double const scale = double(b.mask.count()) / fro;
  for (auto &v : b.samples) { v *= scale; }
  return scale;
}

KSpaceData to_hybrid(KSpaceData const &b)
{
  b.validate();
  if (b.hybrid) { return b; }
  KSpaceData out = b;
  out.hybrid = true;
  CenteredFft const fx(b.shape.nx, b.shape.ny, b.shape.nz, FftAxes::X);
  Index const nv = b.shape.voxels();
  for (Index c = 0; c < b.nc; c++) {
    for (Index t = 0; t < b.shape.nt; t++) { fx.inverse(out.coil(c) + t * nv); }
  }
  return out;
}

Cx inner(std::span<Cx const> a, std::span<Cx const> b)
{
  if (a.size() != b.size()) { throw DimensionError("inner: length mismatch"); }
  Cx acc{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); i++) { acc += std::conj(a[i]) * b[i]; }
  return acc;
}

double real_inner(std::span<Cx const> a, std::span<Cx const> b)
{
  if (a.size() != b.size()) { throw DimensionError("real_inner: length mismatch"); }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); i++) { acc += a[i].real() * b[i].real() + a[i].imag() * b[i].imag(); }
  return acc;
}

double norm(std::span<Cx const> a)
{
  double acc = 0.0;
  for (auto const &v : a) { acc += std::norm(v); }
  return std::sqrt(acc);
}

} // namespace flowrecon
