#pragma once

#include "encoding.hpp"
#include "types.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <random>

namespace flowrecon {

enum class Axis
{
  X = 0,
  Y = 1,
  Z = 2
};

/// Straight cylindrical vessel with Poiseuille flow inside a static textured body.
struct PhantomConfig
{
  Index nx = 16;
  Index ny = 32;
  Index nz = 32;
  Index nt = 8;
  double tube_radius = 4.0;      ///< voxels
  Axis axis = Axis::Z;
  double peak_velocity = 100.0;  ///< cm/s at the centreline in the systolic phase
  double systolic_fraction = 0.25; ///< position of the systolic peak within the cycle
  double systolic_width = 0.4;   ///< raised-cosine width as a fraction of the cycle
  double diastolic_level = 0.1;  ///< waveform floor
  double background_magnitude = 0.5;
  double lumen_magnitude = 1.0;
  double venc = 150.0;
  double voxel_size_cm = 0.25;
  double noise_snr_db = 30.0;
  std::uint64_t seed = 1;

  void validate() const;
  VolumeShape shape() const { return {nx, ny, nz, nt}; }

  /// 16x32x32, nt = 8: small enough for unit tests and toy training.
  static PhantomConfig desk();
  /// 113x113x25, nt = 25: the clinical matrix size, used for runtime comparisons.
  static PhantomConfig paper_geometry();
};

struct PhantomTruth
{
  RealField magnitude;                 ///< [t][z][y][x]
  VelocityField velocity;              ///< cm/s
  std::vector<std::uint8_t> segmentation; ///< vessel lumen, [z][y][x]
  std::vector<double> waveform;        ///< w(t) in [0, 1]
  Index peak_phase = 0;
  double venc = 150.0;
  double voxel_size_cm = 0.25;
  Axis axis = Axis::Z;
  double radius = 0.0;                 ///< lumen radius in voxels
  std::array<double, 3> center{};      ///< a point on the vessel axis (voxel coordinates)

  VolumeShape shape() const { return magnitude.shape; }
};

/// Smooth pulsatile waveform peaking at exactly 1 once per cycle.
std::vector<double> pulsatile_waveform(PhantomConfig const &cfg, Index *peak_phase = nullptr);

PhantomTruth make_phantom(PhantomConfig const &cfg);

/// Gaussian-lobe coil maps with smooth phase, normalised to unit sum-of-squares everywhere.
CoilSet make_coils(Index nx, Index ny, Index nz, Index nc, std::uint64_t seed);

EncodedImages truth_images(PhantomTruth const &truth);

/// Complex noise standard deviation for a target SNR (dB) relative to the mean magnitude
/// inside the support. Infinite SNR gives zero.
double noise_sigma(RealField const &magnitude, double snr_db);

struct EncodingAcquisition
{
  KSpaceData undersampled;
  std::optional<KSpaceData> reference; ///< fully sampled, noisy
};

/// Encodes one image series, adds complex white Gaussian noise of standard deviation
/// `sigma` (E|n|² = sigma²) and applies `mask`.
EncodingAcquisition simulate_encoding(ImageSeries const &image, CoilSet const &coils, MaskSeries const &mask,
                                      double sigma, std::mt19937_64 &rng, bool keep_reference = true);

struct Acquisition
{
  std::array<KSpaceData, 4> undersampled;
  std::array<KSpaceData, 4> reference;
};

/// Full four-encoding simulation. `masks` holds one mask shared by all encodings or four
/// independent masks.
Acquisition simulate_acquisition(PhantomTruth const &truth, CoilSet const &coils, std::vector<MaskSeries> const &masks,
                                 double noise_snr_db, std::uint64_t seed);

} // namespace flowrecon
