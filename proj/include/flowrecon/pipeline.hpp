#pragma once

#include "container.hpp"
#include "cs_llr.hpp"
#include "flowvn.hpp"
#include "metrics.hpp"
#include "phantom.hpp"

#include <optional>

namespace flowrecon {

enum class Method
{
  ZeroFill,
  CsLlr,
  FlowVN,
  HamVN
};

Method parse_method(std::string const &s);
char const *method_name(Method m);

struct ReconOptions
{
  Method method = Method::ZeroFill;
  LLRConfig llr;
  std::optional<NetworkParams> params; ///< untrained initial parameters of the method's configuration when empty
  std::uint64_t seed = 0;
};

/// Network parameters used by `opts`: the supplied ones, or an untrained initialisation.
NetworkParams network_for(ReconOptions const &opts);

/// Reconstructs one encoding: moves to hybrid space, normalises, runs the method and undoes
/// the normalisation.
ImageSeries reconstruct(KSpaceData b, CoilSet const &coils, ReconOptions const &opts);

/// Phantom, coils and fully sampled noisy k-space of all four encodings.
Container phantom_container(PhantomConfig const &cfg, Index nc, std::uint64_t coil_seed);

/// Adds a golden-angle mask for acceleration R (shared by the encodings) and the matching
/// undersampled k-space. R = 1 keeps every sample.
Container sample_container(Container const &src, double R, std::uint64_t seed, double angle_deg = 111.246);

/// Reconstructs every encoding of the container's k-space and stores it as "recon".
Container recon_container(Container const &src, ReconOptions const &opts, double *seconds = nullptr);

/// Reference images for evaluation: the fully sampled reconstruction, or the noise-free truth.
EncodedImages reference_images(Container const &c, bool truth);
EncodedImages recon_images(Container const &c);
VolumeShape container_shape(Container const &c);

/// Metrics of the stored reconstruction and of the reference itself (method "reference").
std::vector<MetricsRow> eval_container(Container const &c, bool against_truth = false);

/// Aggregates metrics CSVs into plot-data files in `out_dir`: error_curves.csv,
/// bland_altman.json and scatter.json.
void write_report(std::vector<std::filesystem::path> const &csvs, std::filesystem::path const &out_dir);

struct BenchmarkRow
{
  std::string method;
  double seconds = 0.0;
};

struct BenchmarkOptions
{
  PhantomConfig phantom = PhantomConfig::paper_geometry();
  Index coils = 5;
  double R = 12.0;
  Index encodings = 4;
  std::vector<Method> methods{Method::FlowVN, Method::HamVN, Method::CsLlr};
  LLRConfig llr;
  std::uint64_t seed = 0;
  bool verbose = false;
};

/// Wall time of each method summed over the encodings of one simulated acquisition.
std::vector<BenchmarkRow> run_benchmark(BenchmarkOptions const &opts);

} // namespace flowrecon
