#include "gradcheck.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

#include "flowrecon/cli.hpp"
#include "flowrecon/conv.hpp"
#include "flowrecon/cs_llr.hpp"
#include "flowrecon/metrics.hpp"
#include "flowrecon/pipeline.hpp"
#include "flowrecon/sampling.hpp"
#include "flowrecon/training.hpp"

#include <Eigen/SVD>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>

using namespace flowrecon;
using namespace flowrecon::test;

namespace fs = std::filesystem;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(char const *f, auto... args)
{
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Stopwatch
{
public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

double rel(Cx a, Cx b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

// Training set shared by the training criteria; matches `flowrecon train --profile desk`.
std::vector<TrainingVolume> toy_dataset()
{
  std::vector<TrainingVolume> data;
  PhantomConfig pc = PhantomConfig::desk();
  for (Index v = 0; v < 2; v++) {
    pc.seed = 100 + static_cast<std::uint64_t>(v);
    data.push_back(TrainingVolume::from_phantom(pc, 4, 200 + static_cast<std::uint64_t>(v)));
  }
  return data;
}

// Held-out phantoms use texture, noise and coil seeds disjoint from the training set.
Container heldout_phantom(std::uint64_t k)
{
  PhantomConfig pc = PhantomConfig::desk();
  pc.seed = 500 + k;
  return phantom_container(pc, 4, 600 + k);
}

double heldout_nrmse(Container const &full, double R, std::uint64_t seed, ReconOptions const &ro)
{
  auto const rec = recon_container(sample_container(full, R, seed), ro);
  return eval_container(rec)[1].nrmse;
}

fs::path const kToyParams = fs::path("toy_training") / "params.bin";

Outcome operators()
{
  Stopwatch sw;
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<Index> small(1, 7), coils(1, 3);
  double worst_e = 0.0;
  for (int trial = 0; trial < 100; trial++) {
    VolumeShape const s{small(rng) + 1, small(rng) + 1, small(rng), small(rng) % 4 + 1};
    Index const nc = coils(rng);
    auto const mask = random_mask(s.ny, s.nz, s.nt, 0.4, rng);
    EncodingOperator const E(random_coils(s.nx, s.ny, s.nz, nc, rng), mask, s, trial % 2 == 1);
    auto const x = random_image(s, rng);
    auto y = E.make_kspace();
    std::normal_distribution<double> g(0.0, 1.0);
    for (auto &v : y.samples) { v = {g(rng), g(rng)}; }
    KSpaceData ex = E.make_kspace();
    ImageSeries ey(s);
    E.forward(x, ex);
    E.adjoint(y, ey);
    worst_e = std::max(worst_e, rel(inner(ex.samples, y.samples), inner(x.data, ey.data)));
  }
  std::array<double, 4> worst_d{};
  std::uniform_int_distribution<int> taps(0, 2);
  for (int b = 0; b < 4; b++) {
    for (int trial = 0; trial < 100; trial++) {
      VolumeShape const s{small(rng) + 1, small(rng) + 1, small(rng) + 1, small(rng) + 1};
      Index const n_c = 2 * taps(rng) + 1;
      std::normal_distribution<double> g(0.0, 1.0);
      std::vector<double> w(static_cast<std::size_t>(n_c * n_c * n_c));
      for (auto &v : w) { v = g(rng); }
      auto const x = random_image(s, rng), y = random_image(s, rng);
      ImageSeries dx(s), dty(s);
      correlate(s, kAllBanks[b], n_c, w.data(), x.data.data(), dx.data.data(), false, false);
      correlate(s, kAllBanks[b], n_c, w.data(), y.data.data(), dty.data.data(), true, false);
      worst_d[b] = std::max(worst_d[b], rel(inner(dx.data, y.data), inner(x.data, dty.data)));
    }
  }
  double const t = sw.seconds();
  double const wd = *std::max_element(worst_d.begin(), worst_d.end());
  return {worst_e < 1e-6 && wd < 1e-6 && t < 10.0,
          fmt("worst adjoint error E %.2e, banks xyz %.2e xyt %.2e xzt %.2e yzt %.2e; %.2f s", worst_e, worst_d[0],
              worst_d[1], worst_d[2], worst_d[3], t)};
}

Outcome gradients()
{
  Stopwatch sw;
  VariantFlags const flowvn;
  VariantFlags const hamvn{false, false, false, false, ActivationKind::Rbf};
  std::map<ParamClass, double> worst;
  std::set<ParamClass> nonzero;
  bool frozen_ok = true;
  for (auto flags : {flowvn, hamvn}) {
    auto const g = make_grad_problem(flags, 11);
    for (auto const &[cls, r] : gradient_check(g, Index(1) << 30, 1e-6, 12)) {
      if (!g.theta.trainable(cls)) {
        frozen_ok = frozen_ok && r.rel_err == 0.0;
        continue;
      }
      worst[cls] = std::max(worst[cls], r.rel_err);
      if (r.grad_norm > 0.0 && r.checked > 0) { nonzero.insert(cls); }
    }
  }
  double const t = sw.seconds();
  bool pass = frozen_ok && t < 60.0 && worst.size() == 7 && nonzero.size() == 7;
  std::string detail;
  for (auto const &[cls, e] : worst) {
    pass = pass && e < 1e-4;
    detail += fmt("%s %.1e, ", param_class_name(cls), e);
  }
  return {pass, detail + fmt("%zu/7 classes, frozen gradients %s; %.1f s", worst.size(), frozen_ok ? "zero" : "NONZERO", t)};
}

Outcome svt_oracle()
{
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<Index> rows(1, 16), cols(1, 8);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; trial++) {
    CxMatrix a(rows(rng), cols(rng));
    for (Index j = 0; j < a.cols(); j++) {
      for (Index i = 0; i < a.rows(); i++) { a(i, j) = {g(rng), g(rng)}; }
    }
    Eigen::JacobiSVD<CxMatrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd s = svd.singularValues();
    double const tau = std::uniform_real_distribution<double>(0.0, 1.1 * s[0])(rng);
    for (Index i = 0; i < s.size(); i++) { s[i] = std::max(s[i] - tau, 0.0); }
    CxMatrix const oracle = svd.matrixU() * s.asDiagonal() * svd.matrixV().adjoint();
    worst = std::max(worst, (svt(a, tau) - oracle).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-8, fmt("max entry deviation from dense SVD shrinkage %.2e over 1000 matrices", worst)};
}

Outcome fista()
{
  Stopwatch sw;
  bool monotone = true, beats = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; seed++) {
    PhantomConfig pc = PhantomConfig::desk();
    pc.seed = 40 + seed;
    auto const truth = make_phantom(pc);
    auto const coils = make_coils(pc.nx, pc.ny, pc.nz, 4, 50 + seed);
    SamplingConfig sc;
    sc.ny = pc.ny;
    sc.nz = pc.nz;
    sc.nt = pc.nt;
    sc.seed = seed;
    auto const mask = generate_for_acceleration(sc, 10.0);
    auto const acq = simulate_acquisition(truth, coils, {mask}, 30.0, 60 + seed);

    LLRConfig cfg;
    cfg.random_shift = false;
    cfg.track_objective = true;
    KSpaceData b = to_hybrid(acq.undersampled[0]);
    normalize_kspace(b);
    auto const run = fista_reconstruct(b, coils, cfg);
    Index rises = 0;
    double worst_rise = 0.0;
    for (std::size_t k = 3; k < run.objective.size(); k++) {
      if (run.objective[k] > run.objective[k - 1]) {
        rises++;
        worst_rise = std::max(worst_rise, run.objective[k] / run.objective[k - 1] - 1.0);
      }
    }
    monotone = monotone && rises == 0;

    EncodedImages ref, zf, cs;
    ReconOptions ro;
    for (int e = 0; e < 4; e++) {
      ro.method = Method::ZeroFill;
      ref[e] = reconstruct(acq.reference[e], coils, ro);
      zf[e] = reconstruct(acq.undersampled[e], coils, ro);
      ro.method = Method::CsLlr;
      cs[e] = reconstruct(acq.undersampled[e], coils, ro);
    }
    double const n_zf = nrmse(magnitudes(zf), magnitudes(ref));
    double const n_cs = nrmse(magnitudes(cs), magnitudes(ref));
    beats = beats && n_cs < 0.6 * n_zf;
    detail += fmt("seed %llu: %td rises (largest %.1e relative), nRMSE csllr/zerofill %.4f/%.4f = %.2f; ", (unsigned long long)seed, rises, worst_rise, n_cs,
                  n_zf, n_cs / n_zf);
  }
  return {monotone && beats, detail + fmt("%.0f s", sw.seconds())};
}

Outcome unrolled_gd()
{
  std::mt19937_64 rng(505);
  VolumeShape const s{6, 8, 8, 4};
  Index const nc = 3;
  auto coils = random_coils(s.nx, s.ny, s.nz, nc, rng);
  std::vector<double> sos(static_cast<std::size_t>(s.voxels()), 0.0);
  for (Index c = 0; c < nc; c++) {
    for (Index v = 0; v < s.voxels(); v++) { sos[v] += std::norm(coils.coil(c)[v]); }
  }
  double const peak = *std::max_element(sos.begin(), sos.end());
  for (auto &c : coils.maps) { c *= std::sqrt(1.5 / peak); }
  for (auto &v : sos) { v *= 1.5 / peak; }
  auto const x = random_image(s, rng);
  auto const b = forward_encode(x, coils, MaskSeries::full(s.ny, s.nz, s.nt), true);
  auto cfg = NetworkConfig::flowvn();
  cfg.layers = 10;
  cfg.n_knots = 201;
  cfg.omega = 0.2;
  auto const res = infer(b, coils, NetworkParams::identity(cfg), true);

  // with every k-space sample kept, EᴴE is the pointwise product with Σ|c|²
  std::vector<Cx> p(x.data.size());
  Index const nv = s.voxels();
  for (Index i = 0; i < s.size(); i++) { p[i] = sos[i % nv] * x.data[i]; }
  double worst = 0.0;
  for (Index k = 0; k < 10; k++) {
    for (Index i = 0; i < s.size(); i++) { p[i] -= sos[i % nv] * (p[i] - x.data[i]); }
    worst = std::max(worst, rel_diff(res.intermediates[k + 1].data, p));
  }
  return {worst < 1e-6, fmt("max relative deviation over 10 layers %.2e", worst)};
}

Outcome toy_training()
{
  Stopwatch sw;
  auto const data = toy_dataset();
  auto const cfg = TrainConfig::desk();
  auto const res = train(data, cfg, kToyParams.parent_path());
  double const t_train = sw.seconds();
  auto const &first = res.curve.front();
  auto const &last = res.curve.back();
  double const reduction = 1.0 - last.probe_loss / first.probe_loss;
  bool pass = reduction >= 0.5 && last.target_l1 < first.target_l1 && last.velocity_relerr < first.velocity_relerr;
  std::string detail = fmt("%td iterations in %.0f s, loss %.4g -> %.4g (%.0f%% lower), image l1 %.4f -> %.4f, velocity RelErr "
                           "%.4f -> %.4f; held-out nRMSE flowvn/zerofill",
                           cfg.iters, t_train, first.probe_loss, last.probe_loss, 100.0 * reduction, first.target_l1,
                           last.target_l1, first.velocity_relerr, last.velocity_relerr);
  auto const full = heldout_phantom(0);
  ReconOptions zf, vn;
  vn.method = Method::FlowVN;
  vn.params = res.theta;
  for (double R : {6.0, 10.0, 16.0}) {
    double const a = heldout_nrmse(full, R, 7, vn), b = heldout_nrmse(full, R, 7, zf);
    pass = pass && a < b;
    detail += fmt(" R%g %.4f/%.4f", R, a, b);
  }
  double const t = sw.seconds();
  return {pass && t < 1800.0, detail + fmt("; total %.0f s", t)};
}

// Spearman rank correlation with average ranks for ties.
double spearman(std::vector<double> const &x, std::vector<double> const &y)
{
  auto ranks = [](std::vector<double> const &v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) { j++; }
      for (std::size_t k = i; k <= j; k++) { r[idx[k]] = 0.5 * double(i + j) + 1.0; }
      i = j + 1;
    }
    return r;
  };
  return linreg_corr(ranks(x), ranks(y)).r;
}

Outcome generalization()
{
  if (!fs::exists(kToyParams)) { return {false, "no trained parameters at " + kToyParams.string() + "; run criterion 06 first"}; }
  ReconOptions vn;
  vn.method = Method::FlowVN;
  vn.params = load_params(kToyParams.string());
  std::vector<double> const Rs{6.0, 10.0, 16.0, 22.0};
  std::vector<double> xs, ys, mean(Rs.size(), 0.0);
  for (std::uint64_t k = 1; k <= 5; k++) {
    auto const full = heldout_phantom(k);
    for (std::size_t i = 0; i < Rs.size(); i++) {
      double const e = heldout_nrmse(full, Rs[i], 70 + k, vn);
      xs.push_back(Rs[i]);
      ys.push_back(e);
      mean[i] += e / 5.0;
    }
  }
  bool monotone = true;
  for (std::size_t i = 1; i < Rs.size(); i++) { monotone = monotone && mean[i] >= mean[i - 1]; }
  double const rho = spearman(xs, ys);
  return {monotone && rho > 0.8, fmt("mean nRMSE R6 %.4f, R10 %.4f, R16 %.4f, R22 %.4f; Spearman rho %.3f over 20 runs",
                                     mean[0], mean[1], mean[2], mean[3], rho)};
}

int cli(std::vector<std::string> args)
{
  args.insert(args.begin(), "flowrecon");
  std::vector<char const *> argv;
  for (auto const &a : args) { argv.push_back(a.c_str()); }
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

Outcome ablation()
{
  Stopwatch sw;
  fs::remove_all("ablation");
  bool ok = cli({"train", "--profile", "desk", "--variant", "hamvn", "--iters", "100", "--out", "ablation/hamvn"}) == 0;
  ok = ok && cli({"phantom", "--out", "ablation/full", "--seed", "900", "--coil-seed", "901"}) == 0;
  ok = ok && cli({"sample", "--in", "ablation/full", "--out", "ablation/r10", "--R", "10", "--seed", "902"}) == 0;
  ok = ok && cli({"recon", "--in", "ablation/r10", "--out", "ablation/zf", "--method", "zerofill"}) == 0;
  ok = ok && cli({"recon", "--in", "ablation/r10", "--out", "ablation/hv", "--method", "hamvn", "--weights", "ablation/hamvn/params.bin"}) == 0;
  ok = ok && cli({"eval", "--in", "ablation/zf", "--csv", "ablation/metrics.csv"}) == 0;
  ok = ok && cli({"eval", "--in", "ablation/hv", "--csv", "ablation/metrics.csv"}) == 0;
  if (!ok) { return {false, "HamVN train/recon/eval through the command line failed"}; }

  auto const theta = load_params("ablation/hamvn/params.bin");
  bool const flags_ok = theta.config.flags == NetworkConfig::hamvn().flags;
  std::ifstream f("ablation/hamvn/metrics.csv");
  std::string line, header;
  std::getline(f, header);
  std::vector<double> probe;
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (int i = 0; i < 4 && std::getline(ss, cell, ','); i++) {}
    probe.push_back(std::stod(cell));
  }
  bool const learned = probe.size() >= 2 && probe.back() < probe.front();
  double n_zf = 0.0, n_hv = 0.0;
  for (auto const &r : read_metrics_rows("ablation/metrics.csv")) {
    if (r.method == "zerofill") { n_zf = r.nrmse; }
    if (r.method == "hamvn") { n_hv = r.nrmse; }
  }
  double const fv = double(NetworkParams::identity(NetworkConfig::flowvn()).parameter_count());
  double const hv = double(NetworkParams::identity(NetworkConfig::hamvn()).parameter_count());
  double const excess = fv / hv - 1.0;
  bool const pass = flags_ok && learned && std::isfinite(n_hv) && n_hv > 0.0 && excess > 0.0 && excess <= 0.02;
  return {pass, fmt("hamvn flags %s, probe loss %.4g -> %.4g in 100 iterations, R10 nRMSE hamvn %.4f (zerofill %.4f); "
                    "parameters flowvn %.0f vs hamvn %.0f (+%.2f%%); %.0f s",
                    flags_ok ? "set" : "WRONG", probe.empty() ? 0.0 : probe.front(), probe.empty() ? 0.0 : probe.back(), n_hv,
                    n_zf, fv, hv, 100.0 * excess, sw.seconds())};
}

std::string hardware()
{
  std::ifstream f("/proc/cpuinfo");
  std::string line, model = "unknown cpu";
  while (std::getline(f, line)) {
    if (line.rfind("model name", 0) == 0) {
      model = line.substr(line.find(':') + 2);
      break;
    }
  }
  return fmt("%s, %u hardware threads", model.c_str(), std::thread::hardware_concurrency());
}

Outcome runtime_ordering()
{
  BenchmarkOptions bo;
  bo.encodings = 1;
  bo.verbose = true;
  auto const rows = run_benchmark(bo);
  double const fv = rows[0].seconds, hv = rows[1].seconds, cs = rows[2].seconds;
  return {fv < hv && hv < cs, fmt("113x113x25x25, 5 coils, R 12, one encoding: flowvn %.1f s, hamvn %.1f s, csllr (80 it) %.1f s "
                                  "on %s",
                                  fv, hv, cs, hardware().c_str())};
}

Outcome velocity_pipeline()
{
  PhantomConfig const pc = PhantomConfig::desk();
  auto const truth = make_phantom(pc);
  auto const s = truth.shape();
  auto const coils = make_coils(s.nx, s.ny, s.nz, 4, 3);
  auto const img = truth_images(truth);
  EncodedImages rec;
  for (int e = 0; e < 4; e++) { rec[e] = adjoint_encode(forward_encode(img[e], coils, MaskSeries::full(s.ny, s.nz, s.nt)), coils); }
  auto const v = velocity_decode(rec, VelocityEncoding{truth.venc});
  double worst = 0.0;
  for (Index t = 0; t < s.nt; t++) {
    for (Index i = 0; i < s.voxels(); i++) {
      if (!truth.segmentation[i]) { continue; }
      for (int c = 0; c < 3; c++) { worst = std::max(worst, std::abs(v.v[c][t * s.voxels() + i] - truth.velocity.v[c][t * s.voxels() + i])); }
    }
  }
  int const ax = static_cast<int>(truth.axis);
  std::array<Index, 3> const n{s.nx, s.ny, s.nz};
  auto const plane = FlowPlane::axis_slice(s, ax, n[ax] / 2, truth.segmentation, truth.voxel_size_cm);
  auto const q = flow_quant(v, plane);
  double const area = std::numbers::pi * std::pow(truth.radius * truth.voxel_size_cm, 2);
  double const expect = pc.peak_velocity * area / 2.0;
  double const dev = std::abs(q.flow[truth.peak_phase] - expect) / expect;
  return {worst <= 1e-3 && dev < 0.05,
          fmt("max in-lumen velocity error %.2e cm/s; peak flow %.4f vs v_max A/2 = %.4f cm3/s (%.2f%%)", worst,
              q.flow[truth.peak_phase], expect, 100.0 * dev)};
}

Outcome metrics_consistency()
{
  std::mt19937_64 rng(1111);
  std::normal_distribution<double> g(0.0, 1.0);
  auto rel_scalar = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); };
  std::map<std::string, double> worst;
  auto note = [&](char const *name, double e) { worst[name] = std::max(worst[name], e); };
  for (int trial = 0; trial < 20; trial++) {
    VolumeShape const s{7, 6, 5, 3};
    std::vector<double> a(200), b(200);
    for (std::size_t i = 0; i < a.size(); i++) {
      b[i] = g(rng);
      a[i] = b[i] + 0.3 * g(rng);
    }
    note("nRMSE", rel_scalar(nrmse(a, b), nrmse_oracle(a, b)));
    note("RelErr", rel_scalar(relative_error(a, b), relerr_oracle(a, b)));

    VelocityField u(s), v(s);
    for (int c = 0; c < 3; c++) {
      for (Index i = 0; i < s.size(); i++) {
        v.v[c][i] = 20.0 * g(rng);
        u.v[c][i] = v.v[c][i] + 5.0 * g(rng);
      }
    }
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(s.voxels()));
    for (auto &m : mask) { m = g(rng) > 0.0; }
    note("AngErr", rel_scalar(angular_error_deg(u, v, mask), angerr_oracle(u, v, mask, 1.0)));

    RealField ra(s), rb(s);
    for (Index i = 0; i < s.size(); i++) {
      rb.data[i] = 1.0 + g(rng);
      ra.data[i] = rb.data[i] + 0.2 * g(rng);
    }
    note("SSIM", rel_scalar(ssim(ra, rb), ssim_oracle(ra, rb, 1.5)));

    auto const plane = FlowPlane::axis_slice(s, trial % 3, 2, mask, 0.3);
    if (!plane.voxels.empty()) {
      auto const q = flow_quant(u, plane);
      for (Index t = 0; t < s.nt; t++) {
        double f = 0.0;
        for (Index z = 0; z < s.nz; z++) {
          for (Index y = 0; y < s.ny; y++) {
            for (Index x = 0; x < s.nx; x++) {
              std::array<Index, 3> const p{x, y, z};
              Index const o = (z * s.ny + y) * s.nx + x;
              if (p[trial % 3] == 2 && mask[o]) { f += u.v[trial % 3][t * s.voxels() + o] * 0.09; }
            }
          }
        }
        note("flow", rel_scalar(q.flow[t], f));
      }
    }

    double md = 0.0;
    for (std::size_t i = 0; i < a.size(); i++) { md += (a[i] - b[i]) / double(a.size()); }
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); i++) { ss += std::pow(a[i] - b[i] - md, 2); }
    auto const ba = bland_altman(a, b);
    note("Bland-Altman", std::max(rel_scalar(ba.mean_diff, md), rel_scalar(ba.sd_diff, std::sqrt(ss / double(a.size() - 1)))));

    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    double const n = double(a.size());
    for (std::size_t i = 0; i < a.size(); i++) {
      sx += b[i];
      sy += a[i];
      sxx += b[i] * b[i];
      syy += a[i] * a[i];
      sxy += b[i] * a[i];
    }
    double const slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    double const r = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    auto const fit = linreg_corr(b, a);
    note("linreg", std::max({rel_scalar(fit.a, slope), rel_scalar(fit.b, (sy - slope * sx) / n), rel_scalar(fit.r, r)}));
  }
  std::vector<double> x(50);
  for (auto &e : x) { e = g(rng); }
  auto const self = bland_altman(x, x);
  bool pass = self.mean_diff == 0.0 && self.sd_diff == 0.0;
  std::string detail;
  for (auto const &[name, e] : worst) {
    pass = pass && e < 1e-10;
    detail += fmt("%s %.1e, ", name.c_str(), e);
  }
  return {pass, detail + fmt("Bland-Altman self (%g, %g)", self.mean_diff, self.sd_diff)};
}

Outcome exp_loss()
{
  std::mt19937_64 rng(1212);
  VolumeShape const s{6, 5, 4, 3};
  std::vector<ImageSeries> outs;
  for (int k = 0; k < 10; k++) { outs.push_back(random_image(s, rng)); }
  auto const target = random_image(s, rng);
  double sum = 0.0;
  for (auto const &o : outs) {
    for (std::size_t i = 0; i < o.data.size(); i++) {
      sum += std::abs(o.data[i].real() - target.data[i].real()) + std::abs(o.data[i].imag() - target.data[i].imag());
    }
  }
  double const e0 = std::abs(exp_weighted_loss(outs, target, 0.0).value - sum) / sum;
  double const fin = final_layer_loss(outs, target).value;
  double const e50 = std::abs(exp_weighted_loss(outs, target, 50.0).value - fin) / fin;
  return {e0 < 1e-12 && e50 < 1e-12, fmt("tau 0 vs unweighted sum %.1e, tau 50 vs final layer %.1e", e0, e50)};
}

struct Criterion
{
  char const *name;
  std::function<Outcome()> run;
};

std::vector<Criterion> const kCriteria{
  {"operators", operators},
  {"gradients", gradients},
  {"svt", svt_oracle},
  {"fista", fista},
  {"unrolled_gd", unrolled_gd},
  {"toy_training", toy_training},
  {"generalization", generalization},
  {"ablation", ablation},
  {"runtime_ordering", runtime_ordering},
  {"velocity_pipeline", velocity_pipeline},
  {"metrics", metrics_consistency},
  {"exp_loss", exp_loss},
};

bool run_one(std::size_t i)
{
  Outcome o;
  try {
    o = kCriteria[i].run();
  } catch (std::exception const &e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("%s %02zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, kCriteria[i].name, o.detail.c_str());
  std::fflush(stdout);
  return o.pass;
}

} // namespace

int main(int argc, char **argv)
{
  bool ok = true;
  if (argc < 2) {
    for (std::size_t i = 0; i < kCriteria.size(); i++) { ok = run_one(i) && ok; }
    return ok ? 0 : 1;
  }
  for (int a = 1; a < argc; a++) {
    int const n = std::atoi(argv[a]);
    if (n < 1 || n > static_cast<int>(kCriteria.size())) {
      std::fprintf(stderr, "unknown criterion %s (1-%zu)\n", argv[a], kCriteria.size());
      return 2;
    }
    ok = run_one(static_cast<std::size_t>(n - 1)) && ok;
  }
  return ok ? 0 : 1;
}
