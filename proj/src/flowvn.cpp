#include "flowrecon/flowvn.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace flowrecon {

void NetworkConfig::validate() const
{
  if (layers < 0) { throw ConfigError("layer count must be >= 0"); }
  if (n_f < 1) { throw ConfigError("filter count must be >= 1"); }
  if (n_c < 1 || n_c % 2 == 0) { throw ConfigError("filter size must be odd and >= 1"); }
  if (n_knots < 2 || n_mod_knots < 2) { throw ConfigError("activations need at least 2 knots"); }
  if (!(omega > 0.0) || !(mod_max > 0.0)) { throw ConfigError("knot spacing and modulation range must be positive"); }
}

NetworkConfig NetworkConfig::flowvn() { return NetworkConfig{}; }

NetworkConfig NetworkConfig::hamvn()
{
  NetworkConfig c;
  c.flags.momentum = false;
  c.flags.modulation = false;
  c.flags.data_activation = false;
  c.flags.exp_weighting = false;
  c.flags.activation = ActivationKind::Rbf;
  return c;
}

char const *param_class_name(ParamClass c)
{
  switch (c) {
  case ParamClass::Filters: return "filters";
  case ParamClass::RegActivation: return "phi_r";
  case ParamClass::DataActivation: return "phi_d";
  case ParamClass::Modulation: return "modulation";
  case ParamClass::ModulationScalar: return "weights";
  case ParamClass::Momentum: return "alpha";
  case ParamClass::InitScale: return "alpha0";
  }
  return "?";
}

namespace {

void set_identity_line(ActivationKnots &k, ActivationKind kind, double slope)
{
  if (kind == ActivationKind::Rbf) {
    set_rbf_line(k, slope);
  } else {
    k.set_line(slope);
  }
}

} // namespace

NetworkParams NetworkParams::identity(NetworkConfig const &cfg)
{
  cfg.validate();
  NetworkParams theta;
  theta.config = cfg;
  theta.alpha0 = 1.0;
  auto const kind = cfg.flags.activation;
  ActivationKnots act = ActivationKnots::centered(cfg.n_knots, cfg.omega);
  set_identity_line(act, kind, 1.0);
  ActivationKnots mod = ActivationKnots::span_range(cfg.n_mod_knots, 0.0, cfg.mod_max);
  mod.set_constant(1.0);
  for (Index k = 0; k < cfg.layers; k++) {
    LayerParams l;
    l.bank = FilterBank(cfg.n_f, cfg.n_c, act);
    l.data_act = act;
    l.mod_data = mod;
    l.mod_reg = mod;
    theta.layers.push_back(std::move(l));
  }
  return theta;
}

NetworkParams NetworkParams::initial(NetworkConfig const &cfg, std::uint64_t seed, double reg_slope)
{
  NetworkParams theta = identity(cfg);
  std::mt19937_64 rng(seed);
  for (auto &l : theta.layers) {
    l.bank.randomize(rng);
    for (auto &acts : l.bank.activations) {
      for (auto &a : acts) { set_identity_line(a, cfg.flags.activation, reg_slope); }
    }
  }
  return theta;
}

NetworkParams NetworkParams::zeros_like() const
{
  NetworkParams z = *this;
  for_each_param(z, [](ParamClass, std::string const &, std::span<double> v) { std::fill(v.begin(), v.end(), 0.0); });
  return z;
}

bool NetworkParams::trainable(ParamClass c) const
{
  auto const &f = config.flags;
  switch (c) {
  case ParamClass::DataActivation: return f.data_activation;
  case ParamClass::Modulation: return f.modulation;
  case ParamClass::ModulationScalar: return !f.modulation;
  case ParamClass::Momentum: return f.momentum;
  default: return true;
  }
}

Index NetworkParams::parameter_count() const
{
  Index n = 0;
  for_each_param(*this, [&](ParamClass c, std::string const &, std::span<double const> v) {
    if (trainable(c)) { n += static_cast<Index>(v.size()); }
  });
  return n;
}

void NetworkParams::validate() const
{
  config.validate();
  if (static_cast<Index>(layers.size()) != config.layers) { throw DimensionError("parameter set has the wrong layer count"); }
  for (auto const &l : layers) {
    if (l.bank.n_f != config.n_f || l.bank.n_c != config.n_c) { throw DimensionError("filter bank does not match config"); }
    for (int b = 0; b < 4; b++) {
      if (static_cast<Index>(l.bank.coeffs[b].size()) != config.n_f * l.bank.taps() ||
          static_cast<Index>(l.bank.activations[b].size()) != config.n_f) {
        throw DimensionError("filter bank arrays have the wrong size");
      }
      for (auto const &a : l.bank.activations[b]) {
        if (a.size() != config.n_knots) { throw DimensionError("regulariser activation has the wrong knot count"); }
      }
    }
    if (l.data_act.size() != config.n_knots) { throw DimensionError("data activation has the wrong knot count"); }
    if (l.mod_data.size() != config.n_mod_knots || l.mod_reg.size() != config.n_mod_knots) {
      throw DimensionError("modulation has the wrong knot count");
    }
  }
  for_each_param(*this, [](ParamClass, std::string const &path, std::span<double const> v) {
    for (double x : v) {
      if (!std::isfinite(x)) { throw NumericalError("non-finite parameter in " + path); }
    }
  });
}

namespace {

template <typename Theta, typename Span, typename Fn>
void visit_params(Theta &theta, Fn const &fn)
{
  for (std::size_t k = 0; k < theta.layers.size(); k++) {
    auto &l = theta.layers[k];
    std::string const pre = "layer" + std::to_string(k) + ".";
    for (int b = 0; b < 4; b++) {
      std::string const bank = pre + bank_name(kAllBanks[b]);
      fn(ParamClass::Filters, bank + ".filters", Span(l.bank.coeffs[b]));
      for (std::size_t f = 0; f < l.bank.activations[b].size(); f++) {
        fn(ParamClass::RegActivation, bank + ".phi_r" + std::to_string(f), Span(l.bank.activations[b][f].phi));
      }
    }
    fn(ParamClass::DataActivation, pre + "phi_d", Span(l.data_act.phi));
    fn(ParamClass::Modulation, pre + "phi_ud", Span(l.mod_data.phi));
    fn(ParamClass::Modulation, pre + "phi_ur", Span(l.mod_reg.phi));
    fn(ParamClass::ModulationScalar, pre + "weight_d", Span(&l.weight_data, 1));
    fn(ParamClass::ModulationScalar, pre + "weight_r", Span(&l.weight_reg, 1));
    fn(ParamClass::Momentum, pre + "alpha", Span(&l.alpha, 1));
  }
  fn(ParamClass::InitScale, std::string("alpha0"), Span(&theta.alpha0, 1));
}

} // namespace

void for_each_param(NetworkParams &theta, std::function<void(ParamClass, std::string const &, std::span<double>)> const &fn)
{
  visit_params<NetworkParams, std::span<double>>(theta, fn);
}

void for_each_param(NetworkParams const &theta,
                    std::function<void(ParamClass, std::string const &, std::span<double const>)> const &fn)
{
  visit_params<NetworkParams const, std::span<double const>>(theta, fn);
}

double mask_mean(MaskSeries const &mask) { return double(mask.count()) / double(mask.ny * mask.nz * mask.nt); }

std::pair<double, double> layer_weights(LayerParams const &layer, VariantFlags const &flags, double mbar)
{
  if (!flags.modulation) { return {layer.weight_data, layer.weight_reg}; }
  return {pl_activation(mbar, layer.mod_data).value, pl_activation(mbar, layer.mod_reg).value};
}

void data_term(EncodingOperator const &E, KSpaceData const &b, ImageSeries const &p, ActivationKnots const &act,
               VariantFlags const &flags, ImageSeries &out)
{
  VolumeShape const &s = p.shape;
  if (!(out.shape == s)) { out = ImageSeries(s); }
  std::fill(out.data.begin(), out.data.end(), Cx{0.0, 0.0});
  std::vector<Cx> r(static_cast<std::size_t>(s.size()));
  for (Index c = 0; c < E.coils(); c++) {
    E.coil_forward(c, p.data.data(), r.data());
    Cx const *bc = b.coil(c);
    for (Index i = 0; i < s.size(); i++) { r[i] -= bc[i]; }
    if (flags.data_activation) {
      for (Index t = 0; t < s.nt; t++) {
        for (Index z = 0; z < s.nz; z++) {
          for (Index y = 0; y < s.ny; y++) {
            if (!E.mask()(y, z, t)) { continue; }
            std::span<double> row(reinterpret_cast<double *>(r.data() + s.index(0, y, z, t)), static_cast<std::size_t>(2 * s.nx));
            activation_forward(flags.activation, act, row, row);
          }
        }
      }
    }
    E.coil_adjoint_add(c, r.data(), out.data.data());
  }
}

void regularizer_term(ImageSeries const &p, FilterBank const &bank, ActivationKind kind, ImageSeries &out)
{
  for (int b = 0; b < 4; b++) {
    bank_regularizer_forward(p.shape, kAllBanks[b], bank.n_c, bank.n_f, bank.coeffs[b].data(), bank.activations[b], kind,
                             p.data.data(), out.data.data());
  }
}

void layer_step(LayerState &state, KSpaceData const &b, EncodingOperator const &E, LayerParams const &layer,
                NetworkConfig const &cfg, double mbar, Index layer_index)
{
  auto const [wd, wr] = layer_weights(layer, cfg.flags, mbar);
  ImageSeries g(state.p.shape);
  data_term(E, b, state.p, layer.data_act, cfg.flags, g);
  for (auto &v : g.data) { v *= wd; }
  if (wr != 0.0) {
    ImageSeries gr(state.p.shape);
    regularizer_term(state.p, layer.bank, cfg.flags.activation, gr);
    for (Index i = 0; i < g.size(); i++) { g.data[i] += wr * gr.data[i]; }
  }
  double const alpha = cfg.flags.momentum ? layer.alpha : 0.0;
  for (Index i = 0; i < g.size(); i++) {
    state.s.data[i] = alpha * state.s.data[i] + g.data[i];
    state.p.data[i] -= state.s.data[i];
  }
  if (!std::isfinite(norm(state.p.data))) {
    throw NumericalError("non-finite image after layer " + std::to_string(layer_index));
  }
}

InferResult infer(KSpaceData const &b, CoilSet const &coils, NetworkParams const &theta, bool keep_intermediates)
{
  b.validate();
  theta.validate();
  EncodingOperator const E(coils, b.mask, b.shape, b.hybrid);
  double const mbar = mask_mean(b.mask);
  LayerState st{ImageSeries(b.shape), ImageSeries(b.shape)};
  E.adjoint(b, st.p);
  for (auto &v : st.p.data) { v *= theta.alpha0; }
  InferResult res;
  if (keep_intermediates) {
    res.intermediates.push_back(st.p);
    res.momenta.push_back(st.s);
  }
  for (Index k = 0; k < theta.config.layers; k++) {
    layer_step(st, b, E, theta.layers[k], theta.config, mbar, k);
    if (keep_intermediates) {
      res.intermediates.push_back(st.p);
      res.momenta.push_back(st.s);
    }
  }
  res.image = std::move(st.p);
  return res;
}

namespace {

constexpr char kMagic[8] = {'F', 'V', 'N', 'P', 'A', 'R', 'M', 'S'};

nlohmann::json header_json(NetworkParams const &theta)
{
  auto const &c = theta.config;
  return {{"format", kParamsFormat},
          {"K", c.layers},
          {"n_f", c.n_f},
          {"n_c", c.n_c},
          {"n_knots", c.n_knots},
          {"omega", c.omega},
          {"n_mod_knots", c.n_mod_knots},
          {"mod_max", c.mod_max},
          {"flags",
           {{"momentum", c.flags.momentum},
            {"modulation", c.flags.modulation},
            {"data_activation", c.flags.data_activation},
            {"exp_weighting", c.flags.exp_weighting},
            {"activation", c.flags.activation == ActivationKind::Rbf ? "rbf" : "piecewise_linear"}}}};
}

static_assert(std::endian::native == std::endian::little, "parameter files are written in native little-endian order");

} // namespace

void save_params(NetworkParams const &theta, std::string const &path)
{
  theta.validate();
  std::string const header = header_json(theta).dump();
  std::string const tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) { throw Error("cannot write " + tmp); }
    f.write(kMagic, sizeof(kMagic));
    auto const len = static_cast<std::uint64_t>(header.size());
    f.write(reinterpret_cast<char const *>(&len), sizeof(len));
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for_each_param(theta, [&](ParamClass, std::string const &, std::span<double const> v) {
      f.write(reinterpret_cast<char const *>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    });
    if (!f) { throw Error("failed writing " + tmp); }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) { throw Error("cannot rename " + tmp + " to " + path); }
}

NetworkParams load_params(std::string const &path)
{
  std::ifstream f(path, std::ios::binary);
  if (!f) { throw Error("cannot open " + path); }
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) { throw Error(path + " is not a parameter file"); }
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char *>(&len), sizeof(len));
  if (!f || len > (1u << 20)) { throw Error(path + ": corrupt header"); }
  std::string header(len, '\0');
  f.read(header.data(), static_cast<std::streamsize>(len));
  auto const h = nlohmann::json::parse(header);
  if (h.at("format").get<std::string>() != kParamsFormat) { throw Error(path + ": unsupported format " + h.at("format").dump()); }
  NetworkConfig c;
  c.layers = h.at("K");
  c.n_f = h.at("n_f");
  c.n_c = h.at("n_c");
  c.n_knots = h.at("n_knots");
  c.omega = h.at("omega");
  c.n_mod_knots = h.at("n_mod_knots");
  c.mod_max = h.at("mod_max");
  auto const &fl = h.at("flags");
  c.flags.momentum = fl.at("momentum");
  c.flags.modulation = fl.at("modulation");
  c.flags.data_activation = fl.at("data_activation");
  c.flags.exp_weighting = fl.at("exp_weighting");
  c.flags.activation = fl.at("activation").get<std::string>() == "rbf" ? ActivationKind::Rbf : ActivationKind::PiecewiseLinear;
  NetworkParams theta = NetworkParams::identity(c);
  for_each_param(theta, [&](ParamClass, std::string const &p, std::span<double> v) {
    f.read(reinterpret_cast<char *>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    if (!f) { throw Error(path + ": truncated at " + p); }
  });
  theta.validate();
  return theta;
}

} // namespace flowrecon
