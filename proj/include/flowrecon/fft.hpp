#pragma once

#include "types.hpp"

namespace flowrecon {

/// Which spatial axes a transform touches.
enum class FftAxes
{
  XYZ, ///< full 3D encoding
  YZ,  ///< hybrid space: readout already in image space
  X    ///< readout only, used to move k-space into hybrid space
};

/// Orthonormal centred DFT on a single [z][y][x] frame. DC sits at index n/2 on every
/// transformed axis. Forward and inverse are exact adjoints of each other.
class CenteredFft
{
public:
  CenteredFft(Index nx, Index ny, Index nz, FftAxes axes);

  void forward(Cx *frame) const;
  void inverse(Cx *frame) const;

  Index frame_size() const { return nx_ * ny_ * nz_; }

private:
  void run(Cx *frame, bool forward) const;

  Index nx_, ny_, nz_;
  FftAxes axes_;
  void *plan_fwd_;
  void *plan_inv_;
  double scale_;
  std::vector<Index> shift_x_, shift_y_, shift_z_;   // ifftshift gather tables
  std::vector<Index> unshift_x_, unshift_y_, unshift_z_;
};

} // namespace flowrecon
