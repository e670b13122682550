#include "doctest.h"
#include "testutil.hpp"

#include "flowrecon/flowvn.hpp"

#include <filesystem>
#include <fstream>

#include <unistd.h>

using namespace flowrecon;
using namespace flowrecon::test;

namespace {

// Trainable scalars counted from the layer structure.
Index count_oracle(NetworkConfig const &c)
{
  Index per_layer = 4 * c.n_f * (c.n_c * c.n_c * c.n_c + c.n_knots);
  if (c.flags.data_activation) { per_layer += c.n_knots; }
  per_layer += c.flags.modulation ? 2 * c.n_mod_knots : 2;
  if (c.flags.momentum) { per_layer += 1; }
  return c.layers * per_layer + 1;
}

std::filesystem::path temp_path(std::string const &name)
{
  return std::filesystem::temp_directory_path() / ("flowrecon_test_" + std::to_string(::getpid()) + "_" + name);
}

} // namespace

TEST_SUITE("flowvn")
{
  TEST_CASE("parameter counts follow the layer structure")
  {
    auto fv = NetworkConfig::flowvn();
    auto hv = NetworkConfig::hamvn();
    CHECK(NetworkParams::identity(fv).parameter_count() == count_oracle(fv));
    CHECK(NetworkParams::identity(hv).parameter_count() == count_oracle(hv));
    double const ratio = double(count_oracle(fv)) / double(count_oracle(hv));
    CHECK(ratio > 1.0);
    CHECK(ratio <= 1.02);
    auto small = fv;
    small.layers = 3;
    small.n_f = 2;
    small.n_c = 3;
    small.flags.momentum = false;
    CHECK(NetworkParams::identity(small).parameter_count() == count_oracle(small));
  }

  TEST_CASE("trainable classes follow the flags")
  {
    auto theta = NetworkParams::identity(NetworkConfig::hamvn());
    CHECK_FALSE(theta.trainable(ParamClass::Momentum));
    CHECK_FALSE(theta.trainable(ParamClass::Modulation));
    CHECK_FALSE(theta.trainable(ParamClass::DataActivation));
    CHECK(theta.trainable(ParamClass::ModulationScalar));
    CHECK(theta.trainable(ParamClass::Filters));
    CHECK(theta.trainable(ParamClass::RegActivation));
    auto fv = NetworkParams::identity(NetworkConfig::flowvn());
    CHECK_FALSE(fv.trainable(ParamClass::ModulationScalar));
    CHECK(fv.trainable(ParamClass::Modulation));
  }

  TEST_CASE("modulated weights interpolate over the sampling rate")
  {
    auto cfg = NetworkConfig::flowvn();
    auto theta = NetworkParams::identity(cfg);
    auto &l = theta.layers[0];
    for (Index j = 0; j < l.mod_data.size(); j++) {
      l.mod_data.phi[j] = 2.0 * l.mod_data.abscissa(j);
      l.mod_reg.phi[j] = 1.0 - l.mod_reg.abscissa(j);
    }
    auto [wd, wr] = layer_weights(l, cfg.flags, 0.1);
    CHECK(wd == doctest::Approx(0.2));
    CHECK(wr == doctest::Approx(0.9));
    l.weight_data = 3.0;
    l.weight_reg = 4.0;
    auto [sd, sr] = layer_weights(l, NetworkConfig::hamvn().flags, 0.1);
    CHECK(sd == 3.0);
    CHECK(sr == 4.0);
  }

  TEST_CASE("identity network performs gradient descent on the data term")
  {
    std::mt19937_64 rng(1);
    VolumeShape const s{4, 6, 5, 3};
    auto coils = random_coils(s.nx, s.ny, s.nz, 2, rng);
    double peak = 0.0;
    for (Index v = 0; v < coils.voxels(); v++) { peak = std::max(peak, std::norm(coils.coil(0)[v]) + std::norm(coils.coil(1)[v])); }
    for (auto &c : coils.maps) { c *= std::sqrt(1.5 / peak); }
    auto x = random_image(s, rng);
    auto b = forward_encode(x, coils, MaskSeries::full(s.ny, s.nz, s.nt), true);
    auto cfg = NetworkConfig::flowvn();
    cfg.layers = 4;
    cfg.n_f = 1;
    cfg.n_c = 1;
    cfg.n_knots = 201;
    cfg.omega = 0.2;
    auto theta = NetworkParams::identity(cfg);
    theta.layers[2].alpha = 0.5;
    auto res = infer(b, coils, theta, true);
    REQUIRE(res.intermediates.size() == 5);

    // full sampling: EᴴE is pointwise Σ|c|², so each step is a per-voxel update
    Index const nv = s.voxels();
    std::vector<Cx> p(x.data.size()), mom(x.data.size(), Cx{0.0, 0.0});
    std::vector<double> sos(static_cast<std::size_t>(nv), 0.0);
    for (Index c = 0; c < 2; c++) {
      for (Index v = 0; v < nv; v++) { sos[v] += std::norm(coils.coil(c)[v]); }
    }
    for (Index i = 0; i < s.size(); i++) { p[i] = sos[i % nv] * x.data[i]; }
    CHECK(rel_diff(res.intermediates[0].data, p) < 1e-12);
    for (Index k = 0; k < 4; k++) {
      double const alpha = theta.layers[k].alpha;
      for (Index i = 0; i < s.size(); i++) {
        Cx const g = sos[i % nv] * (p[i] - x.data[i]);
        mom[i] = alpha * mom[i] + g;
        p[i] -= mom[i];
      }
      CHECK(rel_diff(res.intermediates[k + 1].data, p) < 1e-10);
      CHECK(rel_diff(res.momenta[k + 1].data, mom) < 1e-10);
    }
  }

  TEST_CASE("regulariser weight zero leaves the data step")
  {
    std::mt19937_64 rng(2);
    VolumeShape const s{4, 4, 4, 2};
    auto coils = random_coils(4, 4, 4, 1, rng);
    auto mask = random_mask(4, 4, 2, 0.5, rng);
    auto b = random_kspace(s, 1, mask, true, rng);
    auto cfg = NetworkConfig::flowvn();
    cfg.layers = 1;
    cfg.n_f = 2;
    cfg.n_c = 3;
    auto theta = NetworkParams::initial(cfg, 3);
    theta.layers[0].mod_reg.set_constant(0.0);
    auto with_reg = infer(b, coils, theta);
    for (auto &acts : theta.layers[0].bank.activations) {
      for (auto &a : acts) { a.set_constant(0.0); }
    }
    auto without = infer(b, coils, theta);
    CHECK(with_reg.image.data == without.image.data);
  }

  TEST_CASE("non-finite layers are reported")
  {
    std::mt19937_64 rng(3);
    VolumeShape const s{4, 4, 4, 2};
    auto coils = random_coils(4, 4, 4, 1, rng);
    auto b = random_kspace(s, 1, MaskSeries::full(4, 4, 2), true, rng);
    auto cfg = NetworkConfig::flowvn();
    cfg.layers = 2;
    cfg.n_f = 1;
    cfg.n_c = 1;
    auto theta = NetworkParams::identity(cfg);
    theta.layers[1].mod_data.set_constant(1e308);
    CHECK_THROWS_AS(infer(b, coils, theta), NumericalError);
    theta.layers[1].mod_data.set_constant(NAN);
    CHECK_THROWS_AS(infer(b, coils, theta), NumericalError);
  }

  TEST_CASE("parameters survive a save and load round trip")
  {
    for (auto cfg : {NetworkConfig::flowvn(), NetworkConfig::hamvn()}) {
      cfg.layers = 2;
      cfg.n_f = 2;
      cfg.n_c = 3;
      auto theta = NetworkParams::initial(cfg, 9);
      theta.layers[1].alpha = 0.25;
      theta.layers[0].weight_reg = -0.5;
      theta.alpha0 = 1.5;
      auto const path = temp_path("params.bin");
      save_params(theta, path.string());
      auto back = load_params(path.string());
      CHECK(back.config.flags == cfg.flags);
      CHECK(back.config.layers == 2);
      std::vector<double> a, b;
      for_each_param(theta, [&](ParamClass, std::string const &, std::span<double const> v) { a.insert(a.end(), v.begin(), v.end()); });
      for_each_param(back, [&](ParamClass, std::string const &, std::span<double const> v) { b.insert(b.end(), v.begin(), v.end()); });
      CHECK(a == b);
      std::filesystem::remove(path);
    }
  }

  TEST_CASE("corrupt parameter files are rejected")
  {
    auto const path = temp_path("bad.bin");
    {
      std::ofstream f(path, std::ios::binary);
      f << "NOTPARAMS";
    }
    CHECK_THROWS_AS(load_params(path.string()), Error);
    auto cfg = NetworkConfig::flowvn();
    cfg.layers = 1;
    cfg.n_f = 1;
    cfg.n_c = 1;
    save_params(NetworkParams::identity(cfg), path.string());
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    CHECK_THROWS_AS(load_params(path.string()), Error);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_params(path.string()), Error);
  }

  TEST_CASE("validation catches mismatched structures")
  {
    auto cfg = NetworkConfig::flowvn();
    cfg.layers = 2;
    auto theta = NetworkParams::identity(cfg);
    theta.layers.pop_back();
    CHECK_THROWS_AS(theta.validate(), DimensionError);
    theta = NetworkParams::identity(cfg);
    theta.layers[0].data_act.phi.pop_back();
    CHECK_THROWS_AS(theta.validate(), DimensionError);
    theta = NetworkParams::identity(cfg);
    theta.layers[1].alpha = INFINITY;
    CHECK_THROWS_AS(theta.validate(), NumericalError);
    cfg.n_c = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}
