#pragma once

#include "encoding.hpp"
#include "types.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <random>

namespace flowrecon {

/// Locally-low-rank regularised reconstruction settings.
struct LLRConfig
{
  Index patch_size = 8;
  double lambda = 2.06;
  Index max_iters = 80;
  bool random_shift = true;
  std::uint64_t seed = 0;
  bool track_objective = false; ///< evaluate the objective after every iteration
  Index power_iters = 10;

  void validate() const;
};

using CxMatrix = Eigen::MatrixXcd;

/// Singular value soft-thresholding: U max(S - tau, 0) Vᴴ.
CxMatrix svt(CxMatrix const &a, double tau);

/// Sum of singular values.
double nuclear_norm(CxMatrix const &a);

/// Patch partition of the spatial grid. Patches are p³ blocks anchored at multiples of p
/// after a cyclic shift; blocks at the far edges are truncated rather than padded.
struct PatchGrid
{
  VolumeShape shape;
  Index p = 8;
  std::array<Index, 3> shift{0, 0, 0};

  Index count() const;
  /// Voxel offsets (within one frame) of patch i, in a fixed order.
  std::vector<Index> voxels(Index i) const;
};

/// Applies svt with threshold tau to every patch matrix (patch voxels × nt).
ImageSeries llr_prox(ImageSeries const &p, double tau, PatchGrid const &grid);

/// llr_prox with the partition chosen from cfg: unshifted, or cyclically shifted by an
/// offset drawn from `rng` when cfg.random_shift is set.
ImageSeries llr_prox(ImageSeries const &p, double tau, LLRConfig const &cfg, std::mt19937_64 &rng);

/// λ Σ_i ‖T_i P‖_* over the unshifted partition.
double llr_penalty(ImageSeries const &p, LLRConfig const &cfg);

/// ½‖M ⊙ (E P − B)‖² + λ Σ_i ‖T_i P‖_* over the unshifted partition.
double llr_objective(ImageSeries const &p, KSpaceData const &b, CoilSet const &coils, LLRConfig const &cfg);

/// Largest eigenvalue of Eᴴ M E by power iteration from a seeded random start.
double power_iteration(EncodingOperator const &E, Index iters, std::uint64_t seed);

struct FistaResult
{
  ImageSeries image;
  std::vector<double> objective; ///< after each iteration, when tracked
  double lipschitz = 1.0;
};

FistaResult fista_reconstruct(KSpaceData const &b, CoilSet const &coils, LLRConfig const &cfg);

} // namespace flowrecon
