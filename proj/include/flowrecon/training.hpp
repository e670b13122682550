#pragma once

#include "flowvn.hpp"
#include "phantom.hpp"
#include "sampling.hpp"

#include <filesystem>
#include <random>

namespace flowrecon {

struct LossValue
{
  double value = 0.0;
  std::vector<double> layer_l1; ///< ‖P⁽ᵏ⁾ - P*‖₁ for k = 1..K
  std::vector<double> weights;  ///< e^{-τ(K-k)}, or a one-hot final layer without exponential weighting
};

/// ‖P‖₁ over real and imaginary parts.
double l1_norm(std::span<Cx const> a);
double l1_distance(ImageSeries const &a, ImageSeries const &b);

/// Σ_k e^{-τ(K-k)} ‖P⁽ᵏ⁾ - P*‖₁, summed in log space. `intermediates` holds P⁽¹⁾ … P⁽ᴷ⁾.
LossValue exp_weighted_loss(std::vector<ImageSeries> const &intermediates, ImageSeries const &target, double tau);
/// Final-layer loss ‖P⁽ᴷ⁾ - P*‖₁ in the same layout.
LossValue final_layer_loss(std::vector<ImageSeries> const &intermediates, ImageSeries const &target);

struct Gradient
{
  NetworkParams grad;
  LossValue loss;
};

/// Reverse-mode gradient of the training loss through the unrolled network. The loss is
/// exponentially weighted when the exp_weighting flag is on and final-layer only otherwise.
/// Frozen parameter classes receive exactly zero gradient.
Gradient backward(KSpaceData const &b, CoilSet const &coils, NetworkParams const &theta, ImageSeries const &target, double tau);

struct AdamConfig
{
  double lr = 1e-3;
  double beta1 = 0.85;
  double beta2 = 0.98;
  double eps = 1e-8;
};

struct AdamState
{
  std::vector<double> m;
  std::vector<double> v;
  Index step = 0;
};

/// One bias-corrected ADAM update of every trainable parameter.
void adam_step(NetworkParams &theta, NetworkParams const &grad, AdamState &state, AdamConfig const &cfg);

/// Fully sampled training source: the four encoded images, coils and lumen mask of one volume.
struct TrainingVolume
{
  EncodedImages images;
  CoilSet coils;
  std::vector<std::uint8_t> segmentation; ///< [z][y][x]
  double venc = 150.0;
  double noise_sigma = 0.0; ///< complex k-space noise added to every training example

  /// Noise-free truth images of a phantom; noise follows cfg.noise_snr_db.
  static TrainingVolume from_phantom(PhantomConfig const &cfg, Index nc, std::uint64_t coil_seed);
};

struct TrainConfig
{
  Index iters = 2000;
  AdamConfig adam;
  Index batch = 3;
  double tau_rate = 1e-3;
  Index crop_x = 16;
  Index crop_t = 7;
  double r_min = 6.0;
  double r_max = 22.0;
  std::uint64_t seed = 0;
  Index checkpoint_every = 100;
  Index probe_size = 4;
  double init_reg_slope = 0.02;
  NetworkConfig network;

  void validate() const;

  /// Full hyperparameters with a lighter network and smaller crops, sized for one CPU core.
  static TrainConfig desk();
  static TrainConfig paper();
};

struct TrainingExample
{
  ImageSeries target;       ///< normalised units
  KSpaceData b;             ///< hybrid space, normalised
  CoilSet coils;
  double R = 1.0;
  double scale = 1.0;       ///< normalisation factor applied to both b and target
  Index encoding = 0;
};

/// Crops `source` to widths (crop_x, crop_t) at random offsets (circular in t), draws R
/// uniformly from [r_min, r_max], Fourier encodes the crop along (ky, kz) with a fresh mask
/// and normalises. Noise is added when `noise_sigma` > 0.
TrainingExample sample_training_example(ImageSeries const &source, CoilSet const &coils, TrainConfig const &cfg,
                                        std::mt19937_64 &rng, double noise_sigma = 0.0);

/// Same crop of all four encodings under one mask, with the lumen mask of the crop, for
/// velocity error tracking.
struct ProbeExample
{
  std::array<TrainingExample, 4> enc;
  std::vector<std::uint8_t> lumen; ///< [z][y][x] of the crop
  double venc = 150.0;
};

ProbeExample sample_probe(TrainingVolume const &vol, TrainConfig const &cfg, std::mt19937_64 &rng);

struct Checkpoint
{
  Index iter = 0;
  double tau = 0.0;
  double batch_loss = 0.0;    ///< minibatch training loss at the current τ
  double probe_loss = 0.0;    ///< training loss of a fixed probe set at the final τ of the run
  double target_l1 = 0.0;     ///< mean final-layer ℓ1 error on the probe set
  double velocity_relerr = 0.0; ///< in-lumen velocity magnitude error on the probe set
  double seconds = 0.0;
};

struct TrainResult
{
  NetworkParams theta;
  std::vector<Checkpoint> curve;
};

/// Writes params.bin and metrics.csv into `out_dir` when it is non-empty.
TrainResult train(std::vector<TrainingVolume> const &dataset, TrainConfig const &cfg,
                  std::filesystem::path const &out_dir = {}, bool verbose = false);

void write_metrics_csv(std::vector<Checkpoint> const &curve, std::filesystem::path const &path);

} // namespace flowrecon
