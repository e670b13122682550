#pragma once

#include "encoding.hpp"
#include "types.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>

namespace flowrecon {

/// sqrt(Σ (a_i - a*_i)² / (N max_j a*_j²))
double nrmse(std::span<double const> a, std::span<double const> ref);
/// ‖a - a*‖₂ / ‖a*‖₂
double relative_error(std::span<double const> a, std::span<double const> ref);

/// Mean angle in degrees between u and v over masked voxels where both exceed `threshold`
/// (cm/s). `mask` is [z][y][x] and is repeated over t. Returns 0 when no voxel qualifies.
double angular_error_deg(VelocityField const &u, VelocityField const &v, std::span<std::uint8_t const> mask,
                         double threshold = 1.0);

/// |v| at the masked voxels of every phase, in traversal order.
std::vector<double> lumen_speeds(VelocityField const &v, std::span<std::uint8_t const> mask);

/// Magnitudes of all four encodings, concatenated.
std::vector<double> magnitudes(EncodedImages const &img);

struct ErrorMetrics
{
  double nrmse = 0.0;
  double relerr = 0.0;
  double angerr_deg = 0.0;
};

/// Image nRMSE over the magnitudes of all encodings; velocity RelErr and AngErr inside the lumen.
ErrorMetrics error_metrics(EncodedImages const &recon, EncodedImages const &ref, std::span<std::uint8_t const> lumen,
                           double venc);

/// Mean SSIM of two real volumes using a separable Gaussian window (truncated at 3.5σ and
/// renormalised at the borders) over every spatial axis longer than one voxel, frame by
/// frame. Stabilisers use the dynamic range of `b`, the reference.
double ssim(RealField const &a, RealField const &b, double sigma = 1.5);

/// A cross-section through the vessel: lumen voxels of the plane, their normal and area.
struct FlowPlane
{
  std::array<double, 3> origin{};
  std::array<double, 3> normal{0.0, 0.0, 1.0};
  std::vector<Index> voxels; ///< offsets within a [z][y][x] frame
  double voxel_area_cm2 = 1.0;

  void validate() const;

  /// Slice `index` perpendicular to `axis` (0 = x, 1 = y, 2 = z) restricted to `lumen`.
  static FlowPlane axis_slice(VolumeShape const &s, int axis, Index index, std::span<std::uint8_t const> lumen,
                              double voxel_size_cm);
};

struct FlowQuant
{
  std::vector<double> flow; ///< per phase, cm³/s
  double peak_flow = 0.0;
  double peak_velocity = 0.0;
};

FlowQuant flow_quant(VelocityField const &v, FlowPlane const &plane);

struct BlandAltmanResult
{
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<std::pair<double, double>> points; ///< (mean of pair, difference)
};

/// Differences are x - y; sd uses the n - 1 normalisation.
BlandAltmanResult bland_altman(std::span<double const> x, std::span<double const> y);

struct LinearFit
{
  double a = 0.0; ///< slope
  double b = 0.0; ///< intercept
  double r = 0.0; ///< Pearson correlation
};

/// Least-squares fit y = a x + b and the correlation coefficient.
LinearFit linreg_corr(std::span<double const> x, std::span<double const> y);

/// One evaluation row of the metrics CSV.
struct MetricsRow
{
  std::string method;
  double R = 1.0;
  double nrmse = 0.0;
  double relerr = 0.0;
  double angerr = 0.0;
  double ssim = 0.0;
  double peak_flow = 0.0;
  double peak_velocity = 0.0;
  double seconds = 0.0;
};

inline constexpr char const *kMetricsHeader = "method,R,nRMSE,RelErr,AngErr,SSIM,peak_flow,peak_velocity,seconds";

void write_metrics_rows(std::vector<MetricsRow> const &rows, std::filesystem::path const &path, bool append = false);
std::vector<MetricsRow> read_metrics_rows(std::filesystem::path const &path);

} // namespace flowrecon
