#include "flowrecon/types.hpp"

#include <algorithm>
#include <numeric>

namespace flowrecon {

void VolumeShape::validate() const
{
  if (nx < 1 || ny < 1 || nz < 1 || nt < 1) {
    throw DimensionError("volume extents must be >= 1, got " + std::to_string(nx) + "x" + std::to_string(ny) + "x" +
                         std::to_string(nz) + "x" + std::to_string(nt));
  }
}

void Grid::validate() const
{
  volume().validate();
  if (nc < 1) { throw DimensionError("coil count must be >= 1"); }
  if (n_enc != 4) { throw DimensionError("four-point velocity encoding needs exactly 4 encodings"); }
}

ImageSeries::ImageSeries(VolumeShape s)
  : shape{s}
{
  shape.validate();
  data.assign(static_cast<std::size_t>(shape.size()), Cx{0.0, 0.0});
}

CoilSet::CoilSet(Index nx_, Index ny_, Index nz_, Index nc_)
  : nx{nx_}
  , ny{ny_}
  , nz{nz_}
  , nc{nc_}
{
  if (nx < 1 || ny < 1 || nz < 1 || nc < 1) { throw DimensionError("coil set extents must be >= 1"); }
  maps.assign(static_cast<std::size_t>(nc * voxels()), Cx{0.0, 0.0});
}

MaskSeries::MaskSeries(Index ny_, Index nz_, Index nt_, std::uint8_t fill)
  : ny{ny_}
  , nz{nz_}
  , nt{nt_}
{
  if (ny < 1 || nz < 1 || nt < 1) { throw DimensionError("mask extents must be >= 1"); }
  mask.assign(static_cast<std::size_t>(ny * nz * nt), fill);
}

Index MaskSeries::count() const
{
  return std::accumulate(mask.begin(), mask.end(), Index{0}, [](Index acc, std::uint8_t m) { return acc + (m ? 1 : 0); });
}

KSpaceData::KSpaceData(VolumeShape s, Index nc_, MaskSeries m, bool hyb)
  : shape{s}
  , nc{nc_}
  , mask{std::move(m)}
  , hybrid{hyb}
{
  shape.validate();
  if (nc < 1) { throw DimensionError("coil count must be >= 1"); }
  if (mask.ny != shape.ny || mask.nz != shape.nz || mask.nt != shape.nt) {
    throw DimensionError("mask does not match k-space extents");
  }
  samples.assign(static_cast<std::size_t>(nc * shape.size()), Cx{0.0, 0.0});
}

void KSpaceData::apply_mask()
{
  Index const nx = shape.nx;
  for (Index c = 0; c < nc; c++) {
    Cx *k = coil(c);
    for (Index t = 0; t < shape.nt; t++) {
      for (Index z = 0; z < shape.nz; z++) {
        for (Index y = 0; y < shape.ny; y++) {
          if (!mask(y, z, t)) {
            Cx *row = k + shape.index(0, y, z, t);
            std::fill(row, row + nx, Cx{0.0, 0.0});
          }
        }
      }
    }
  }
}

void KSpaceData::validate() const
{
  shape.validate();
  if (static_cast<Index>(samples.size()) != nc * shape.size()) {
    throw DimensionError("k-space sample count does not match its shape");
  }
  if (mask.ny != shape.ny || mask.nz != shape.nz || mask.nt != shape.nt) {
    throw DimensionError("mask does not match k-space extents");
  }
}

void check_same_shape(ImageSeries const &a, ImageSeries const &b, char const *what)
{
  if (!(a.shape == b.shape) || a.data.size() != b.data.size()) {
    throw DimensionError(std::string(what) + ": image shapes differ");
  }
}

} // namespace flowrecon
