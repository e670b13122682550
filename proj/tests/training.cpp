#include "doctest.h"
#include "gradcheck.hpp"

#include "flowrecon/training.hpp"

#include <filesystem>
#include <fstream>

#include <unistd.h>

using namespace flowrecon;
using namespace flowrecon::test;

namespace {

std::vector<ImageSeries> layer_outputs(Index K, VolumeShape s, std::mt19937_64 &rng)
{
  std::vector<ImageSeries> out;
  for (Index k = 0; k < K; k++) { out.push_back(random_image(s, rng)); }
  return out;
}

} // namespace

TEST_SUITE("training")
{
  TEST_CASE("l1 norms count real and imaginary parts")
  {
    std::vector<Cx> a{{1.0, -2.0}, {-0.5, 0.0}};
    CHECK(l1_norm(a) == 3.5);
    ImageSeries x(VolumeShape{2, 1, 1, 1}), y(VolumeShape{2, 1, 1, 1});
    x.data = a;
    CHECK(l1_distance(x, y) == 3.5);
  }

  TEST_CASE("exponential weighting of layer losses")
  {
    std::mt19937_64 rng(1);
    VolumeShape const s{3, 4, 2, 2};
    auto outs = layer_outputs(5, s, rng);
    auto target = random_image(s, rng);
    double sum = 0.0;
    for (auto const &o : outs) { sum += l1_distance(o, target); }
    CHECK(exp_weighted_loss(outs, target, 0.0).value == doctest::Approx(sum).epsilon(1e-14));

    double const tau = 0.7;
    double weighted = 0.0;
    for (Index k = 0; k < 5; k++) { weighted += std::exp(-tau * double(4 - k)) * l1_distance(outs[k], target); }
    auto L = exp_weighted_loss(outs, target, tau);
    CHECK(L.value == doctest::Approx(weighted).epsilon(1e-14));
    CHECK(L.weights.back() == 1.0);
    CHECK(L.layer_l1.size() == 5);

    double const last = l1_distance(outs.back(), target);
    CHECK(std::abs(exp_weighted_loss(outs, target, 50.0).value - last) / last < 1e-12);
    CHECK(final_layer_loss(outs, target).value == last);
    CHECK(exp_weighted_loss(outs, target, 1e6).value == doctest::Approx(last).epsilon(1e-15));
    CHECK_THROWS_AS(exp_weighted_loss(outs, target, -1.0), ConfigError);
    CHECK_THROWS_AS(exp_weighted_loss({}, target, 1.0), DimensionError);
  }

  TEST_CASE("first ADAM step moves each trainable coordinate by the learning rate")
  {
    auto cfg = NetworkConfig::hamvn();
    cfg.layers = 2;
    cfg.n_f = 1;
    cfg.n_c = 1;
    auto theta = NetworkParams::initial(cfg, 1);
    auto grad = theta.zeros_like();
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 1.0);
    for_each_param(grad, [&](ParamClass, std::string const &, std::span<double> v) {
      for (auto &x : v) { x = g(rng); }
    });
    auto const before = theta;
    AdamState st;
    AdamConfig const ac;
    adam_step(theta, grad, st, ac);
    CHECK(st.step == 1);
    std::vector<double> a, b, gv;
    std::vector<bool> tr;
    for_each_param(before, [&](ParamClass c, std::string const &, std::span<double const> v) {
      a.insert(a.end(), v.begin(), v.end());
      tr.insert(tr.end(), v.size(), before.trainable(c));
    });
    for_each_param(theta, [&](ParamClass, std::string const &, std::span<double const> v) { b.insert(b.end(), v.begin(), v.end()); });
    for_each_param(grad, [&](ParamClass, std::string const &, std::span<double const> v) { gv.insert(gv.end(), v.begin(), v.end()); });
    for (std::size_t i = 0; i < a.size(); i++) {
      if (!tr[i]) {
        CHECK(b[i] == a[i]);
        continue;
      }
      // m̂ = g, v̂ = g², so the step is lr g / (|g| + eps)
      double const expect = a[i] - ac.lr * gv[i] / (std::abs(gv[i]) + ac.eps);
      CHECK(b[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  TEST_CASE("second ADAM step follows the moment recursions")
  {
    auto cfg = NetworkConfig::flowvn();
    cfg.layers = 1;
    cfg.n_f = 1;
    cfg.n_c = 1;
    auto theta = NetworkParams::identity(cfg);
    auto g1 = theta.zeros_like();
    auto g2 = theta.zeros_like();
    g1.alpha0 = 0.4;
    g2.alpha0 = -1.2;
    AdamState st;
    AdamConfig ac;
    ac.lr = 0.01;
    adam_step(theta, g1, st, ac);
    adam_step(theta, g2, st, ac);
    double const m = (1 - ac.beta1) * (ac.beta1 * 0.4 + -1.2);
    double const v = (1 - ac.beta2) * (ac.beta2 * 0.16 + 1.44);
    double const step1 = ac.lr * 0.4 / (0.4 + ac.eps);
    double const step2 = ac.lr * (m / (1 - ac.beta1 * ac.beta1)) / (std::sqrt(v / (1 - ac.beta2 * ac.beta2)) + ac.eps);
    CHECK(theta.alpha0 == doctest::Approx(1.0 - step1 - step2).epsilon(1e-12));
  }

  TEST_CASE("reverse-mode gradient matches finite differences")
  {
    VariantFlags flowvn;
    VariantFlags hamvn{false, false, false, false, ActivationKind::Rbf};
    for (auto flags : {flowvn, hamvn}) {
      auto g = make_grad_problem(flags, 3, {6, 6, 4, 3}, 2, 2);
      for (auto const &[cls, r] : gradient_check(g, 6, 1e-6, 4)) {
        INFO(param_class_name(cls));
        CHECK(r.rel_err < 1e-4);
        if (g.theta.trainable(cls)) { CHECK(r.grad_norm > 0.0); }
      }
    }
  }

  TEST_CASE("frozen classes get zero gradient")
  {
    VariantFlags flags{false, false, false, true, ActivationKind::PiecewiseLinear};
    auto g = make_grad_problem(flags, 5, {6, 6, 4, 2}, 2, 2);
    auto grad = backward(g.b, g.coils, g.theta, g.target, g.tau).grad;
    for_each_param(grad, [&](ParamClass c, std::string const &path, std::span<double const> v) {
      if (g.theta.trainable(c)) { return; }
      for (double x : v) {
        INFO(path);
        CHECK(x == 0.0);
      }
    });
    auto empty = g.theta;
    empty.config.layers = 0;
    empty.layers.clear();
    CHECK_THROWS_AS(backward(g.b, g.coils, empty, g.target, 0.0), ConfigError);
  }

  TEST_CASE("training examples are cropped, normalised and consistent")
  {
    auto pc = PhantomConfig::desk();
    auto vol = TrainingVolume::from_phantom(pc, 3, 1);
    auto cfg = TrainConfig::desk();
    std::mt19937_64 rng(6);
    for (int i = 0; i < 4; i++) {
      auto ex = sample_training_example(vol.images[i % 4], vol.coils, cfg, rng, 0.0);
      CHECK(ex.target.shape == VolumeShape{cfg.crop_x, pc.ny, pc.nz, cfg.crop_t});
      CHECK(ex.b.hybrid);
      CHECK(ex.R >= cfg.r_min);
      CHECK(ex.R <= cfg.r_max);
      CHECK(measured_acceleration(ex.b.mask).R == doctest::Approx(ex.R).epsilon(0.05));
      CHECK(norm(ex.b.samples) == doctest::Approx(double(ex.b.mask.count())).epsilon(1e-12));
      // noise free: the scaled target explains the scaled data exactly
      auto re = forward_encode(ex.target, ex.coils, ex.b.mask, true);
      CHECK(rel_diff(re.samples, ex.b.samples) < 1e-12);
    }
    cfg.crop_x = pc.nx + 1;
    CHECK_THROWS_AS(sample_training_example(vol.images[0], vol.coils, cfg, rng), DimensionError);
  }

  TEST_CASE("probe crops intersect the lumen")
  {
    auto vol = TrainingVolume::from_phantom(PhantomConfig::desk(), 2, 1);
    auto cfg = TrainConfig::desk();
    std::mt19937_64 rng(7);
    auto p = sample_probe(vol, cfg, rng);
    Index n = 0;
    for (auto m : p.lumen) { n += m; }
    CHECK(n > 0);
    CHECK(p.enc[0].b.mask.mask == p.enc[3].b.mask.mask);
  }

  TEST_CASE("a short run writes parameters and metrics")
  {
    auto pc = PhantomConfig::desk();
    pc.ny = 16;
    pc.nz = 8;
    pc.tube_radius = 3.0;
    std::vector<TrainingVolume> data{TrainingVolume::from_phantom(pc, 2, 1)};
    auto cfg = TrainConfig::desk();
    cfg.iters = 6;
    cfg.checkpoint_every = 3;
        cfg.crop_t = 3;
    cfg.network.layers = 2;
    cfg.network.n_f = 2;
    cfg.probe_size = 2;
    auto dir = std::filesystem::temp_directory_path() / ("flowrecon_train_" + std::to_string(::getpid()));
    auto res = train(data, cfg, dir);
    CHECK(res.curve.size() == 3);
    CHECK(res.curve.front().iter == 0);
    CHECK(res.curve.back().iter == 6);
    CHECK(std::filesystem::exists(dir / "params.bin"));
    std::ifstream f(dir / "metrics.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "iter,tau,loss,probe_loss,target_l1,velocity_relerr,seconds");
    auto back = load_params((dir / "params.bin").string());
    CHECK(back.config.layers == 2);
    std::filesystem::remove_all(dir);

    cfg.iters = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}
