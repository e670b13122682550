#pragma once

#include "types.hpp"

#include <cstdint>

namespace flowrecon {

/// Cartesian pseudo-radial golden-angle pattern over the (ky, kz) plane.
///
/// Spokes pass through the k-space centre and are rasterised onto the grid. Spoke n of the
/// acquisition has angle theta0 + n * angle_increment_deg and is assigned to cardiac phase
/// n mod nt, so each phase receives spokes from one continuous golden-angle sequence and
/// adding spokes only ever adds samples. theta0 is drawn from `seed`.
struct SamplingConfig
{
  Index ny = 32;
  Index nz = 32;
  Index nt = 8;
  double spokes_per_phase = 1.0; ///< may be fractional; total spokes = round(spokes_per_phase * nt)
  double angle_increment_deg = 111.246;
  std::uint64_t seed = 0;

  void validate() const;
  Index total_spokes() const;
};

struct Acceleration
{
  double R = 1.0;
  double mean_rate = 1.0; ///< 1 / R
};

MaskSeries generate_pattern(SamplingConfig const &cfg);

/// Searches the spoke count whose measured acceleration is closest to `target_R`.
/// The result is within 5% of the target whenever the spoke granularity allows it.
MaskSeries generate_for_acceleration(SamplingConfig cfg, double target_R);

Acceleration measured_acceleration(MaskSeries const &mask);

/// Fraction of sampled (ky, kz, t) positions.
double mean_sampling_rate(MaskSeries const &mask);

/// Zero-fills all positions outside `mask`. Every cardiac phase must contain the centre sample.
KSpaceData retrospective_undersample(KSpaceData const &full, MaskSeries const &mask);

/// Throws unless every phase samples the k-space centre (ky = ny/2, kz = nz/2).
void check_center_sampled(MaskSeries const &mask);

} // namespace flowrecon
