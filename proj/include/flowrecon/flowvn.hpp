#pragma once

#include "activation.hpp"
#include "conv.hpp"
#include "encoding.hpp"
#include "types.hpp"

#include <functional>
#include <random>
#include <string>

namespace flowrecon {

/// Switches for the ablation ladder. All on with piecewise-linear activations is FlowVN;
/// all off with RBF activations is the HamVN configuration.
struct VariantFlags
{
  bool momentum = true;
  bool modulation = true;      ///< sampling-rate dependent weights; otherwise two learned scalars per layer
  bool data_activation = true; ///< learned φ_d; otherwise the identity
  bool exp_weighting = true;   ///< layer-wise loss; otherwise final layer only
  ActivationKind activation = ActivationKind::PiecewiseLinear;

  friend bool operator==(VariantFlags const &, VariantFlags const &) = default;
};

struct NetworkConfig
{
  Index layers = 10;
  Index n_f = 8;
  Index n_c = 5;
  Index n_knots = 91;
  double omega = 0.17;
  Index n_mod_knots = 21;
  double mod_max = 0.5; ///< modulation knots span M̄ ∈ [0, mod_max]
  VariantFlags flags;

  void validate() const;

  static NetworkConfig flowvn();
  static NetworkConfig hamvn();
};

struct LayerParams
{
  FilterBank bank;           ///< D_in and φ_r,in
  ActivationKnots data_act;  ///< φ_d
  ActivationKnots mod_data;  ///< φ_ud over M̄
  ActivationKnots mod_reg;   ///< φ_ur over M̄
  double weight_data = 1.0;  ///< used instead of φ_ud when modulation is off
  double weight_reg = 1.0;   ///< used instead of φ_ur when modulation is off
  double alpha = 0.0;        ///< momentum
};

enum class ParamClass
{
  Filters,
  RegActivation,
  DataActivation,
  Modulation,
  ModulationScalar,
  Momentum,
  InitScale
};

char const *param_class_name(ParamClass c);

struct NetworkParams
{
  NetworkConfig config;
  std::vector<LayerParams> layers;
  double alpha0 = 1.0;

  /// Zero filters, identity φ_d and φ_r, unit modulation, no momentum: K steps of plain
  /// gradient descent on the data term.
  static NetworkParams identity(NetworkConfig const &cfg);
  /// Random unit-norm zero-mean filters and φ_r lines of slope `reg_slope`, otherwise as identity().
  static NetworkParams initial(NetworkConfig const &cfg, std::uint64_t seed, double reg_slope = 0.02);

  /// Same structure with every value zero, used to hold gradients.
  NetworkParams zeros_like() const;

  bool trainable(ParamClass c) const;
  /// Number of trainable scalars under the current flags.
  Index parameter_count() const;
  void validate() const;
};

/// Visits every parameter array in a fixed order. `path` names the array for messages.
void for_each_param(NetworkParams &theta, std::function<void(ParamClass, std::string const &, std::span<double>)> const &fn);
void for_each_param(NetworkParams const &theta,
                    std::function<void(ParamClass, std::string const &, std::span<double const>)> const &fn);

/// Mean of the binary mask.
double mask_mean(MaskSeries const &mask);

/// Data and regulariser weights of one layer at sampling rate mbar.
std::pair<double, double> layer_weights(LayerParams const &layer, VariantFlags const &flags, double mbar);

struct LayerState
{
  ImageSeries p;
  ImageSeries s;
};

/// One unrolled iteration: G = w_d Eᴴ(M φ_d(M(EP - B))) + w_r Σ Dᵀ φ_r(D P), S <- αS + G, P <- P - S.
/// Throws NumericalError naming `layer_index` when the result is not finite.
void layer_step(LayerState &state, KSpaceData const &b, EncodingOperator const &E, LayerParams const &layer,
                NetworkConfig const &cfg, double mbar, Index layer_index = 0);

/// Data-consistency gradient Eᴴ(M φ_d(M(EP - B))) without its weight.
void data_term(EncodingOperator const &E, KSpaceData const &b, ImageSeries const &p, ActivationKnots const &act,
               VariantFlags const &flags, ImageSeries &out);
/// Σ Dᵀ φ_r(D P) over all four banks, added to `out`.
void regularizer_term(ImageSeries const &p, FilterBank const &bank, ActivationKind kind, ImageSeries &out);

struct InferResult
{
  ImageSeries image;
  std::vector<ImageSeries> intermediates; ///< P⁽⁰⁾ … P⁽ᴷ⁾ when kept
  std::vector<ImageSeries> momenta;       ///< S⁽⁰⁾ … S⁽ᴷ⁾ when kept
};

/// Runs the network on normalised data `b`.
InferResult infer(KSpaceData const &b, CoilSet const &coils, NetworkParams const &theta, bool keep_intermediates = false);

/// Single-file parameter container: magic, JSON header, then float64 little-endian arrays.
void save_params(NetworkParams const &theta, std::string const &path);
NetworkParams load_params(std::string const &path);
inline constexpr char const *kParamsFormat = "flowrecon-params/1";

} // namespace flowrecon
