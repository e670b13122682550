#include "flowrecon/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace flowrecon {

void SamplingConfig::validate() const
{
  if (ny < 1 || nz < 1 || nt < 1) { throw ConfigError("sampling grid extents must be >= 1"); }
  if (!(spokes_per_phase >= 1.0) || !std::isfinite(spokes_per_phase)) { throw ConfigError("spokes_per_phase must be >= 1"); }
  if (!(angle_increment_deg > 0.0 && angle_increment_deg < 360.0)) {
    throw ConfigError("angle_increment_deg must lie in (0, 360)");
  }
}

Index SamplingConfig::total_spokes() const
{
  return std::max(nt, static_cast<Index>(std::llround(spokes_per_phase * double(nt))));
}

namespace {

void rasterize_spoke(MaskSeries &m, Index t, double theta)
{
  double const cy = double(m.ny / 2);
  double const cz = double(m.nz / 2);
  double const ay = std::cos(theta) * 0.5 * double(m.ny);
  double const az = std::sin(theta) * 0.5 * double(m.nz);
  double const dominant = std::max(std::abs(ay), std::abs(az));
  // one grid unit per step along the dominant axis; the spoke reaches the corners
  double const step = dominant > 0.0 ? 1.0 / dominant : 1.0;
  double const rmax = std::numbers::sqrt2;
  auto const nsteps = static_cast<Index>(std::ceil(rmax / step));
  for (Index s = -nsteps; s <= nsteps; s++) {
    double const r = double(s) * step;
    auto const ky = static_cast<Index>(std::lround(cy + r * ay));
    auto const kz = static_cast<Index>(std::lround(cz + r * az));
    if (ky >= 0 && ky < m.ny && kz >= 0 && kz < m.nz) { m(ky, kz, t) = 1; }
  }
}

} // namespace

MaskSeries generate_pattern(SamplingConfig const &cfg)
{
  cfg.validate();
  MaskSeries m(cfg.ny, cfg.nz, cfg.nt, 0);
  std::mt19937_64 rng(cfg.seed);
  double const theta0 = std::uniform_real_distribution<double>(0.0, 360.0)(rng);
  Index const total = cfg.total_spokes();
  for (Index n = 0; n < total; n++) {
    double const deg = std::fmod(theta0 + double(n) * cfg.angle_increment_deg, 360.0);
    rasterize_spoke(m, n % cfg.nt, deg * std::numbers::pi / 180.0);
  }
  return m;
}

MaskSeries generate_for_acceleration(SamplingConfig cfg, double target_R)
{
  if (!(target_R >= 1.0)) { throw ConfigError("target acceleration must be >= 1"); }
  cfg.validate();
  auto pattern_for = [&](Index total) {
    cfg.spokes_per_phase = double(total) / double(cfg.nt);
    return generate_pattern(cfg);
  };

  Index lo = cfg.nt;
  MaskSeries best = pattern_for(lo);
  if (measured_acceleration(best).R <= target_R) { return best; }

  // R is non-increasing in the spoke count: find the first count with R <= target
  Index hi = 2 * lo;
  Index const full = cfg.ny * cfg.nz;
  while (measured_acceleration(pattern_for(hi)).R > target_R) {
    lo = hi;
    hi *= 2;
    if (hi > 64 * full * cfg.nt) { break; }
  }
  while (hi - lo > 1) {
    Index const mid = lo + (hi - lo) / 2;
    if (measured_acceleration(pattern_for(mid)).R > target_R) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  MaskSeries a = pattern_for(lo);
  MaskSeries b = pattern_for(hi);
  double const ea = std::abs(measured_acceleration(a).R - target_R);
  double const eb = std::abs(measured_acceleration(b).R - target_R);
  return ea < eb ? a : b;
}

Acceleration measured_acceleration(MaskSeries const &mask)
{
  Index const n = mask.count();
  if (n == 0) { throw ConfigError("measured_acceleration: empty mask"); }
  double const total = double(mask.ny * mask.nz * mask.nt);
  return {total / double(n), double(n) / total};
}

double mean_sampling_rate(MaskSeries const &mask)
{
  return double(mask.count()) / double(mask.ny * mask.nz * mask.nt);
}

void check_center_sampled(MaskSeries const &mask)
{
  for (Index t = 0; t < mask.nt; t++) {
    if (!mask(mask.ny / 2, mask.nz / 2, t)) {
      throw ConfigError("mask misses the k-space centre in phase " + std::to_string(t));
    }
  }
}

KSpaceData retrospective_undersample(KSpaceData const &full, MaskSeries const &mask)
{
  full.validate();
  if (mask.ny != full.shape.ny || mask.nz != full.shape.nz || mask.nt != full.shape.nt) {
    throw DimensionError("retrospective_undersample: mask does not match k-space");
  }
  check_center_sampled(mask);
  KSpaceData out = full;
  out.mask = mask;
  out.apply_mask();
  return out;
}

} // namespace flowrecon
