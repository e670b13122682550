#include "flowrecon/training.hpp"

#include "flowrecon/metrics.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace flowrecon {

double l1_norm(std::span<Cx const> a)
{
  double s = 0.0;
  for (auto const &v : a) { s += std::abs(v.real()) + std::abs(v.imag()); }
  return s;
}

double l1_distance(ImageSeries const &a, ImageSeries const &b)
{
  check_same_shape(a, b, "l1_distance");
  double s = 0.0;
  for (Index i = 0; i < a.size(); i++) {
    s += std::abs(a.data[i].real() - b.data[i].real()) + std::abs(a.data[i].imag() - b.data[i].imag());
  }
  return s;
}

LossValue exp_weighted_loss(std::vector<ImageSeries> const &intermediates, ImageSeries const &target, double tau)
{
  if (!(tau >= 0.0)) { throw ConfigError("loss: tau must be >= 0"); }
  if (intermediates.empty()) { throw DimensionError("loss: no layer outputs"); }
  auto const K = static_cast<Index>(intermediates.size());
  LossValue L;
  double lmax = -std::numeric_limits<double>::infinity();
  std::vector<double> logs(static_cast<std::size_t>(K));
  for (Index k = 0; k < K; k++) {
    double const l = l1_distance(intermediates[k], target);
    L.layer_l1.push_back(l);
    double const logw = -tau * double(K - 1 - k);
    L.weights.push_back(std::exp(logw));
    logs[k] = l > 0.0 ? logw + std::log(l) : -std::numeric_limits<double>::infinity();
    lmax = std::max(lmax, logs[k]);
  }
  if (std::isinf(lmax)) { return L; }
  double s = 0.0;
  for (double a : logs) { s += std::exp(a - lmax); }
  L.value = std::exp(lmax) * s;
  return L;
}

LossValue final_layer_loss(std::vector<ImageSeries> const &intermediates, ImageSeries const &target)
{
  if (intermediates.empty()) { throw DimensionError("loss: no layer outputs"); }
  LossValue L;
  for (auto const &p : intermediates) {
    L.layer_l1.push_back(l1_distance(p, target));
    L.weights.push_back(0.0);
  }
  L.weights.back() = 1.0;
  L.value = L.layer_l1.back();
  return L;
}

namespace {

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

template <typename F>
void for_masked_rows(MaskSeries const &m, VolumeShape const &s, F &&fn)
{
  for (Index t = 0; t < s.nt; t++) {
    for (Index z = 0; z < s.nz; z++) {
      for (Index y = 0; y < s.ny; y++) {
        if (m(y, z, t)) { fn(s.index(0, y, z, t)); }
      }
    }
  }
}

// Reverse mode of the data-consistency term gd = Eᴴ(M φ_d(M(EP - B))) for the cotangent
// w·gbar. Adds to pbar and grad_knots and returns ⟨gbar, gd⟩.
double data_term_backward(EncodingOperator const &E, KSpaceData const &b, ImageSeries const &p, ActivationKnots const &act,
                          VariantFlags const &flags, double w, ImageSeries const &gbar, ImageSeries &pbar,
                          std::span<double> grad_knots)
{
  VolumeShape const &s = p.shape;
  auto const n = static_cast<std::size_t>(s.size());
  auto const row = static_cast<std::size_t>(2 * s.nx);
  std::vector<Cx> r(n), y(n);
  std::vector<double> q(row);
  double dot = 0.0;
  for (Index c = 0; c < E.coils(); c++) {
    E.coil_forward(c, p.data.data(), r.data());
    Cx const *bc = b.coil(c);
    for (std::size_t i = 0; i < n; i++) { r[i] -= bc[i]; }
    E.coil_forward(c, gbar.data.data(), y.data());
    for_masked_rows(E.mask(), s, [&](Index o) {
      std::span<double> rr(reinterpret_cast<double *>(r.data() + o), row);
      std::span<double> yy(reinterpret_cast<double *>(y.data() + o), row);
      if (flags.data_activation) {
        activation_forward(flags.activation, act, rr, q);
        for (std::size_t i = 0; i < row; i++) {
          dot += yy[i] * q[i];
          yy[i] *= w;
        }
        activation_backward(flags.activation, act, rr, yy, yy, grad_knots);
      } else {
        for (std::size_t i = 0; i < row; i++) {
          dot += yy[i] * rr[i];
          yy[i] *= w;
        }
      }
    });
    E.coil_adjoint_add(c, y.data(), pbar.data.data());
  }
  return dot;
}

void add_modulation_grad(ActivationKnots const &k, double mbar, double g, std::vector<double> &grad)
{
  PlEval const e = pl_activation(mbar, k);
  grad[e.knot] += e.w0 * g;
  grad[e.knot + 1] += e.w1 * g;
}

} // namespace

Gradient backward(KSpaceData const &b, CoilSet const &coils, NetworkParams const &theta, ImageSeries const &target, double tau)
{
  auto const fwd = infer(b, coils, theta, true);
  check_same_shape(fwd.image, target, "backward: target");
  auto const &cfg = theta.config;
  auto const &flags = cfg.flags;
  Index const K = cfg.layers;
  VolumeShape const s = b.shape;
  EncodingOperator const E(coils, b.mask, s, b.hybrid);
  double const mbar = mask_mean(b.mask);

  Gradient out;
  out.grad = theta.zeros_like();
  if (K == 0) {
    throw ConfigError("backward: the network needs at least one layer");
  }
  std::vector<ImageSeries> outputs(fwd.intermediates.begin() + 1, fwd.intermediates.end());
  out.loss = flags.exp_weighting ? exp_weighted_loss(outputs, target, tau) : final_layer_loss(outputs, target);

  ImageSeries pbar(s), sbar(s), gbar(s), xbar(s);
  std::vector<double> kgrad(static_cast<std::size_t>(cfg.n_f * cfg.n_c * cfg.n_c * cfg.n_c));
  std::vector<std::vector<double>> knot_grad(static_cast<std::size_t>(cfg.n_f), std::vector<double>(cfg.n_knots));
  for (Index k = K; k >= 1; k--) {
    double const wk = out.loss.weights[k - 1];
    if (wk != 0.0) {
      ImageSeries const &pk = fwd.intermediates[k];
      for (Index i = 0; i < pk.size(); i++) {
        Cx const d = pk.data[i] - target.data[i];
        pbar.data[i] += wk * Cx{sgn(d.real()), sgn(d.imag())};
      }
    }
    // layer k-1 maps (P⁽ᵏ⁻¹⁾, S⁽ᵏ⁻¹⁾) to (P⁽ᵏ⁾, S⁽ᵏ⁾)
    LayerParams const &layer = theta.layers[k - 1];
    LayerParams &lg = out.grad.layers[k - 1];
    ImageSeries const &pprev = fwd.intermediates[k - 1];
    ImageSeries const &sprev = fwd.momenta[k - 1];
    for (Index i = 0; i < s.size(); i++) { gbar.data[i] = sbar.data[i] - pbar.data[i]; }
    if (flags.momentum) {
      lg.alpha += real_inner(gbar.data, sprev.data);
      for (Index i = 0; i < s.size(); i++) { sbar.data[i] = layer.alpha * gbar.data[i]; }
    } else {
      std::fill(sbar.data.begin(), sbar.data.end(), Cx{0.0, 0.0});
    }
    auto const [wd, wr] = layer_weights(layer, flags, mbar);

    double const dot_d = data_term_backward(E, b, pprev, layer.data_act, flags, wd, gbar, pbar, lg.data_act.phi);

    double dot_r = 0.0;
    std::fill(xbar.data.begin(), xbar.data.end(), Cx{0.0, 0.0});
    for (int bank = 0; bank < 4; bank++) {
      std::fill(kgrad.begin(), kgrad.end(), 0.0);
      for (auto &g : knot_grad) { std::fill(g.begin(), g.end(), 0.0); }
      dot_r += bank_regularizer_backward(s, kAllBanks[bank], cfg.n_c, cfg.n_f, layer.bank.coeffs[bank].data(),
                                         layer.bank.activations[bank], flags.activation, pprev.data.data(),
                                         gbar.data.data(), xbar.data.data(), kgrad.data(), knot_grad);
      auto &gc = lg.bank.coeffs[bank];
      for (std::size_t i = 0; i < gc.size(); i++) { gc[i] += wr * kgrad[i]; }
      for (Index f = 0; f < cfg.n_f; f++) {
        auto &ga = lg.bank.activations[bank][f].phi;
        for (std::size_t j = 0; j < ga.size(); j++) { ga[j] += wr * knot_grad[f][j]; }
      }
    }
    for (Index i = 0; i < s.size(); i++) { pbar.data[i] += wr * xbar.data[i]; }

    if (flags.modulation) {
      add_modulation_grad(layer.mod_data, mbar, dot_d, lg.mod_data.phi);
      add_modulation_grad(layer.mod_reg, mbar, dot_r, lg.mod_reg.phi);
    } else {
      lg.weight_data += dot_d;
      lg.weight_reg += dot_r;
    }
  }
  ImageSeries ehb(s);
  E.adjoint(b, ehb);
  out.grad.alpha0 = real_inner(pbar.data, ehb.data);

  for_each_param(out.grad, [&](ParamClass c, std::string const &path, std::span<double> v) {
    if (!theta.trainable(c)) {
      std::fill(v.begin(), v.end(), 0.0);
      return;
    }
    for (double x : v) {
      if (!std::isfinite(x)) { throw NumericalError("non-finite gradient in " + path); }
    }
  });
  return out;
}

void adam_step(NetworkParams &theta, NetworkParams const &grad, AdamState &state, AdamConfig const &cfg)
{
  std::vector<std::span<double const>> g;
  for_each_param(grad, [&](ParamClass, std::string const &, std::span<double const> v) { g.push_back(v); });
  std::size_t total = 0;
  for (auto const &v : g) { total += v.size(); }
  if (state.m.empty()) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
  }
  if (state.m.size() != total || state.v.size() != total) { throw DimensionError("adam: state does not match parameters"); }
  state.step++;
  double const c1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  double const c2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  std::size_t off = 0, a = 0;
  for_each_param(theta, [&](ParamClass c, std::string const &path, std::span<double> v) {
    auto const &gv = g[a++];
    if (gv.size() != v.size()) { throw DimensionError("adam: gradient shape mismatch at " + path); }
    if (theta.trainable(c)) {
      for (std::size_t i = 0; i < v.size(); i++) {
        double &m = state.m[off + i];
        double &s = state.v[off + i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * gv[i];
        s = cfg.beta2 * s + (1.0 - cfg.beta2) * gv[i] * gv[i];
        v[i] -= cfg.lr * (m / c1) / (std::sqrt(s / c2) + cfg.eps);
      }
    }
    off += v.size();
  });
}

TrainingVolume TrainingVolume::from_phantom(PhantomConfig const &cfg, Index nc, std::uint64_t coil_seed)
{
  PhantomTruth const truth = make_phantom(cfg);
  TrainingVolume vol;
  vol.images = truth_images(truth);
  vol.coils = make_coils(cfg.nx, cfg.ny, cfg.nz, nc, coil_seed);
  vol.segmentation = truth.segmentation;
  vol.venc = truth.venc;
  vol.noise_sigma = flowrecon::noise_sigma(truth.magnitude, cfg.noise_snr_db);
  return vol;
}

void TrainConfig::validate() const
{
  network.validate();
  if (iters < 0 || batch < 1 || checkpoint_every < 1 || probe_size < 1) { throw ConfigError("training counts must be positive"); }
  if (crop_x < 1 || crop_t < 1) { throw ConfigError("crop widths must be >= 1"); }
  if (!(r_min >= 1.0) || !(r_max >= r_min)) { throw ConfigError("acceleration range must satisfy 1 <= r_min <= r_max"); }
  if (!(tau_rate >= 0.0) || !(adam.lr > 0.0)) { throw ConfigError("tau rate must be >= 0 and learning rate > 0"); }
}

TrainConfig TrainConfig::desk()
{
  TrainConfig c;
  c.iters = 2000;
  c.batch = 1;
  c.crop_x = 6;
  c.crop_t = 4;
  c.checkpoint_every = 100;
  c.network.layers = 10;
  c.network.n_f = 4;
  c.network.n_c = 3;
  return c;
}

TrainConfig TrainConfig::paper()
{
  TrainConfig c;
  c.iters = 50000;
  c.batch = 3;
  c.crop_x = 16;
  c.crop_t = 7;
  c.checkpoint_every = 1000;
  return c;
}

namespace {

struct Crop
{
  Index x0 = 0, t0 = 0;
};

Crop draw_crop(VolumeShape const &s, TrainConfig const &cfg, std::mt19937_64 &rng)
{
  if (cfg.crop_x > s.nx || cfg.crop_t > s.nt) { throw DimensionError("crop is larger than the training volume"); }
  std::uniform_int_distribution<Index> dx(0, s.nx - cfg.crop_x), dt(0, s.nt - 1);
  Crop c;
  c.x0 = dx(rng);
  c.t0 = dt(rng);
  return c;
}

ImageSeries crop_image(ImageSeries const &src, Crop const &c, Index wx, Index wt)
{
  VolumeShape const &s = src.shape;
  ImageSeries out(VolumeShape{wx, s.ny, s.nz, wt});
  for (Index t = 0; t < wt; t++) {
    Index const ts = (c.t0 + t) % s.nt;
    for (Index z = 0; z < s.nz; z++) {
      for (Index y = 0; y < s.ny; y++) {
        Cx const *row = src.data.data() + s.index(c.x0, y, z, ts);
        std::copy(row, row + wx, out.data.data() + out.shape.index(0, y, z, t));
      }
    }
  }
  return out;
}

CoilSet crop_coils(CoilSet const &src, Index x0, Index wx)
{
  CoilSet out(wx, src.ny, src.nz, src.nc);
  for (Index c = 0; c < src.nc; c++) {
    for (Index z = 0; z < src.nz; z++) {
      for (Index y = 0; y < src.ny; y++) {
        Cx const *row = src.coil(c) + (z * src.ny + y) * src.nx + x0;
        std::copy(row, row + wx, out.coil(c) + (z * src.ny + y) * wx);
      }
    }
  }
  return out;
}

MaskSeries draw_mask(Index ny, Index nz, Index nt, double R, std::mt19937_64 &rng)
{
  SamplingConfig sc;
  sc.ny = ny;
  sc.nz = nz;
  sc.nt = nt;
  sc.seed = rng();
  return generate_for_acceleration(sc, R);
}

TrainingExample encode_example(ImageSeries target, CoilSet coils, MaskSeries const &mask, double R, double sigma,
                               std::mt19937_64 &rng)
{
  TrainingExample ex;
  ex.b = forward_encode(target, coils, mask, true);
  if (sigma > 0.0) {
    std::normal_distribution<double> g(0.0, sigma / std::sqrt(2.0));
    for (auto &v : ex.b.samples) { v += Cx{g(rng), g(rng)}; }
    ex.b.apply_mask();
  }
  ex.scale = normalize_kspace(ex.b);
  for (auto &v : target.data) { v *= ex.scale; }
  ex.target = std::move(target);
  ex.coils = std::move(coils);
  ex.R = R;
  return ex;
}

} // namespace

TrainingExample sample_training_example(ImageSeries const &source, CoilSet const &coils, TrainConfig const &cfg,
                                        std::mt19937_64 &rng, double noise_sigma)
{
  VolumeShape const &s = source.shape;
  if (coils.nx != s.nx || coils.ny != s.ny || coils.nz != s.nz) { throw DimensionError("coils do not match the training volume"); }
  Crop const c = draw_crop(s, cfg, rng);
  double const R = std::uniform_real_distribution<double>(cfg.r_min, cfg.r_max)(rng);
  MaskSeries const mask = draw_mask(s.ny, s.nz, cfg.crop_t, R, rng);
  return encode_example(crop_image(source, c, cfg.crop_x, cfg.crop_t), crop_coils(coils, c.x0, cfg.crop_x), mask, R,
                        noise_sigma, rng);
}

ProbeExample sample_probe(TrainingVolume const &vol, TrainConfig const &cfg, std::mt19937_64 &rng)
{
  VolumeShape const &s = vol.images[0].shape;
  ProbeExample p;
  p.venc = vol.venc;
  Crop c;
  for (int attempt = 0;; attempt++) {
    c = draw_crop(s, cfg, rng);
    p.lumen.assign(static_cast<std::size_t>(cfg.crop_x * s.ny * s.nz), 0);
    Index n = 0;
    for (Index z = 0; z < s.nz; z++) {
      for (Index y = 0; y < s.ny; y++) {
        for (Index x = 0; x < cfg.crop_x; x++) {
          auto const m = vol.segmentation[(z * s.ny + y) * s.nx + c.x0 + x];
          p.lumen[(z * s.ny + y) * cfg.crop_x + x] = m;
          n += m != 0;
        }
      }
    }
    if (n > 0) { break; }
    if (attempt > 1000) { throw ConfigError("probe crops never intersect the vessel lumen"); }
  }
  double const R = std::uniform_real_distribution<double>(cfg.r_min, cfg.r_max)(rng);
  MaskSeries const mask = draw_mask(s.ny, s.nz, cfg.crop_t, R, rng);
  CoilSet const coils = crop_coils(vol.coils, c.x0, cfg.crop_x);
  for (int e = 0; e < 4; e++) {
    p.enc[e] = encode_example(crop_image(vol.images[e], c, cfg.crop_x, cfg.crop_t), coils, mask, R, vol.noise_sigma, rng);
    p.enc[e].encoding = e;
  }
  return p;
}

void write_metrics_csv(std::vector<Checkpoint> const &curve, std::filesystem::path const &path)
{
  std::filesystem::path const tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) { throw Error("cannot write " + tmp.string()); }
    f.precision(10);
    f << "iter,tau,loss,probe_loss,target_l1,velocity_relerr,seconds\n";
    for (auto const &c : curve) {
      f << c.iter << ',' << c.tau << ',' << c.batch_loss << ',' << c.probe_loss << ',' << c.target_l1 << ','
        << c.velocity_relerr << ',' << c.seconds << '\n';
    }
  }
  std::filesystem::rename(tmp, path);
}

namespace {

LossValue network_loss(NetworkParams const &theta, InferResult const &r, ImageSeries const &target, double tau)
{
  std::vector<ImageSeries> const outs(r.intermediates.begin() + 1, r.intermediates.end());
  return theta.config.flags.exp_weighting ? exp_weighted_loss(outs, target, tau) : final_layer_loss(outs, target);
}

Checkpoint evaluate_probes(NetworkParams const &theta, std::vector<ProbeExample> const &probes, double tau_final)
{
  Checkpoint cp;
  double l1 = 0.0, l1ref = 0.0;
  std::vector<double> speeds, speeds_ref;
  for (auto const &p : probes) {
    EncodedImages rec, ref;
    for (int e = 0; e < 4; e++) {
      auto const &ex = p.enc[e];
      auto r = infer(ex.b, ex.coils, theta, true);
      cp.probe_loss += network_loss(theta, r, ex.target, tau_final).value;
      l1 += l1_distance(r.image, ex.target);
      l1ref += l1_norm(ex.target.data);
      rec[e] = std::move(r.image);
      ref[e] = ex.target;
    }
    VelocityEncoding const enc{p.venc};
    auto const a = lumen_speeds(velocity_decode(rec, enc), p.lumen);
    auto const b = lumen_speeds(velocity_decode(ref, enc), p.lumen);
    speeds.insert(speeds.end(), a.begin(), a.end());
    speeds_ref.insert(speeds_ref.end(), b.begin(), b.end());
  }
  cp.probe_loss /= double(4 * probes.size());
  cp.target_l1 = l1 / l1ref;
  cp.velocity_relerr = relative_error(speeds, speeds_ref);
  return cp;
}

} // namespace

TrainResult train(std::vector<TrainingVolume> const &dataset, TrainConfig const &cfg, std::filesystem::path const &out_dir,
                  bool verbose)
{
  cfg.validate();
  if (dataset.empty()) { throw ConfigError("train: need at least one training volume"); }
  if (!out_dir.empty()) { std::filesystem::create_directories(out_dir); }
  auto const t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count(); };

  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 probe_rng(cfg.seed ^ 0x5bd1e995ULL);
  std::vector<ProbeExample> probes;
  for (Index i = 0; i < cfg.probe_size; i++) { probes.push_back(sample_probe(dataset[i % dataset.size()], cfg, probe_rng)); }
  double const tau_final = double(cfg.iters) * cfg.tau_rate;

  TrainResult res;
  res.theta = NetworkParams::initial(cfg.network, cfg.seed, cfg.init_reg_slope);
  AdamState adam;
  double running = 0.0;
  Index running_n = 0;

  auto checkpoint = [&](Index it) {
    Checkpoint cp = evaluate_probes(res.theta, probes, tau_final);
    cp.iter = it;
    cp.tau = double(it) * cfg.tau_rate;
    cp.batch_loss = running_n > 0 ? running / double(running_n) : cp.probe_loss;
    cp.seconds = elapsed();
    running = 0.0;
    running_n = 0;
    res.curve.push_back(cp);
    if (!out_dir.empty()) {
      save_params(res.theta, (out_dir / "params.bin").string());
      write_metrics_csv(res.curve, out_dir / "metrics.csv");
    }
    if (verbose) {
      std::fprintf(stderr, "iter %6td  loss %.5g  probe %.5g  l1 %.4f  vel %.4f  %.1fs\n", it, cp.batch_loss, cp.probe_loss,
                   cp.target_l1, cp.velocity_relerr, cp.seconds);
    }
  };

  for (Index it = 0; it < cfg.iters; it++) {
    if (it % cfg.checkpoint_every == 0) { checkpoint(it); }
    double const tau = double(it) * cfg.tau_rate;
    NetworkParams grad = res.theta.zeros_like();
    double loss = 0.0;
    for (Index j = 0; j < cfg.batch; j++) {
      auto const &vol = dataset[std::uniform_int_distribution<std::size_t>(0, dataset.size() - 1)(rng)];
      int const e = std::uniform_int_distribution<int>(0, 3)(rng);
      auto const ex = sample_training_example(vol.images[e], vol.coils, cfg, rng, vol.noise_sigma);
      Gradient const g = backward(ex.b, ex.coils, res.theta, ex.target, tau);
      loss += g.loss.value;
      std::vector<std::span<double const>> src;
      for_each_param(g.grad, [&](ParamClass, std::string const &, std::span<double const> v) { src.push_back(v); });
      std::size_t a = 0;
      for_each_param(grad, [&](ParamClass, std::string const &, std::span<double> v) {
        auto const &sv = src[a++];
        for (std::size_t i = 0; i < v.size(); i++) { v[i] += sv[i] / double(cfg.batch); }
      });
    }
    loss /= double(cfg.batch);
    if (!std::isfinite(loss)) {
      if (!out_dir.empty()) { save_params(res.theta, (out_dir / "params.bin").string()); }
      throw NumericalError("training loss is not finite at iteration " + std::to_string(it));
    }
    running += loss;
    running_n++;
    adam_step(res.theta, grad, adam, cfg.adam);
  }
  checkpoint(cfg.iters);
  return res;
}

} // namespace flowrecon
