#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowrecon {

using Index = std::ptrdiff_t;
using Cx = std::complex<double>;

class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Array shapes or sizes that do not agree.
class DimensionError : public Error
{
public:
  using Error::Error;
};

/// Invalid configuration values.
class ConfigError : public Error
{
public:
  using Error::Error;
};

/// A numerical procedure produced non-finite values or diverged.
class NumericalError : public Error
{
public:
  using Error::Error;
};

/// Spatio-temporal extent of one image series, stored [t][z][y][x] with x fastest.
struct VolumeShape
{
  Index nx = 1;
  Index ny = 1;
  Index nz = 1;
  Index nt = 1;

  Index voxels() const { return nx * ny * nz; }
  Index size() const { return nx * ny * nz * nt; }
  Index index(Index x, Index y, Index z, Index t) const { return ((t * nz + z) * ny + y) * nx + x; }
  void validate() const;

  friend bool operator==(VolumeShape const &, VolumeShape const &) = default;
};

/// Full acquisition geometry.
struct Grid
{
  Index nx = 1;
  Index ny = 1;
  Index nz = 1;
  Index nt = 1;
  Index nc = 1;
  Index n_enc = 4;

  VolumeShape volume() const { return {nx, ny, nz, nt}; }
  void validate() const;
};

/// Complex image sequence P of one velocity encoding, [t][z][y][x].
struct ImageSeries
{
  VolumeShape shape;
  std::vector<Cx> data;

  ImageSeries() = default;
  explicit ImageSeries(VolumeShape s);

  Cx &operator()(Index x, Index y, Index z, Index t) { return data[shape.index(x, y, z, t)]; }
  Cx const &operator()(Index x, Index y, Index z, Index t) const { return data[shape.index(x, y, z, t)]; }
  Index size() const { return static_cast<Index>(data.size()); }
};

/// Coil sensitivity maps, [coil][z][y][x].
struct CoilSet
{
  Index nx = 1;
  Index ny = 1;
  Index nz = 1;
  Index nc = 1;
  std::vector<Cx> maps;

  CoilSet() = default;
  CoilSet(Index nx, Index ny, Index nz, Index nc);

  Index voxels() const { return nx * ny * nz; }
  Cx const *coil(Index c) const { return maps.data() + c * voxels(); }
  Cx *coil(Index c) { return maps.data() + c * voxels(); }
};

/// Binary sampling pattern over (ky, kz) per cardiac phase, [t][kz][ky]. kx is always fully sampled.
struct MaskSeries
{
  Index ny = 1;
  Index nz = 1;
  Index nt = 1;
  std::vector<std::uint8_t> mask;

  MaskSeries() = default;
  MaskSeries(Index ny, Index nz, Index nt, std::uint8_t fill = 0);

  std::uint8_t &operator()(Index ky, Index kz, Index t) { return mask[(t * nz + kz) * ny + ky]; }
  std::uint8_t operator()(Index ky, Index kz, Index t) const { return mask[(t * nz + kz) * ny + ky]; }
  Index count() const;
  static MaskSeries full(Index ny, Index nz, Index nt) { return MaskSeries(ny, nz, nt, 1); }
};

/// Zero-filled multi-coil samples of one velocity encoding, [coil][t][kz][ky][kx].
/// With `hybrid` set the readout axis has already been inverse transformed, so the x axis
/// holds image-space positions and only (ky, kz) are Fourier encoded.
struct KSpaceData
{
  VolumeShape shape;
  Index nc = 1;
  std::vector<Cx> samples;
  MaskSeries mask;
  bool hybrid = false;

  KSpaceData() = default;
  KSpaceData(VolumeShape s, Index nc, MaskSeries m, bool hybrid = false);

  Cx *coil(Index c) { return samples.data() + c * shape.size(); }
  Cx const *coil(Index c) const { return samples.data() + c * shape.size(); }
  void apply_mask();
  void validate() const;
};

void check_same_shape(ImageSeries const &a, ImageSeries const &b, char const *what);

} // namespace flowrecon
