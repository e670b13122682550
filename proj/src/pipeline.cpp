#include "flowrecon/pipeline.hpp"

#include "flowrecon/sampling.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace flowrecon {

Method parse_method(std::string const &s)
{
  if (s == "zerofill") { return Method::ZeroFill; }
  if (s == "csllr") { return Method::CsLlr; }
  if (s == "flowvn") { return Method::FlowVN; }
  if (s == "hamvn") { return Method::HamVN; }
  throw ConfigError("unknown method '" + s + "' (expected zerofill, csllr, flowvn or hamvn)");
}

char const *method_name(Method m)
{
  switch (m) {
  case Method::ZeroFill: return "zerofill";
  case Method::CsLlr: return "csllr";
  case Method::FlowVN: return "flowvn";
  case Method::HamVN: return "hamvn";
  }
  return "?";
}

NetworkParams network_for(ReconOptions const &opts)
{
  if (opts.params) { return *opts.params; }
  auto const cfg = opts.method == Method::HamVN ? NetworkConfig::hamvn() : NetworkConfig::flowvn();
  return NetworkParams::initial(cfg, opts.seed);
}

ImageSeries reconstruct(KSpaceData b, CoilSet const &coils, ReconOptions const &opts)
{
  if (!b.hybrid) { b = to_hybrid(b); }
  double const scale = normalize_kspace(b);
  ImageSeries out;
  switch (opts.method) {
  case Method::ZeroFill: out = adjoint_encode(b, coils); break;
  case Method::CsLlr: {
    LLRConfig llr = opts.llr;
    llr.track_objective = false;
    out = fista_reconstruct(b, coils, llr).image;
    break;
  }
  case Method::FlowVN:
  case Method::HamVN: out = infer(b, coils, network_for(opts)).image; break;
  }
  for (auto &v : out.data) { v /= scale; }
  return out;
}

namespace {

std::vector<Index> dims_of(VolumeShape const &s) { return {s.nt, s.nz, s.ny, s.nx}; }

char const *axis_name(Axis a) { return a == Axis::X ? "x" : a == Axis::Y ? "y" : "z"; }

Axis parse_axis(std::string const &s)
{
  if (s == "x") { return Axis::X; }
  if (s == "y") { return Axis::Y; }
  if (s == "z") { return Axis::Z; }
  throw ConfigError("unknown axis " + s);
}

CoilSet container_coils(Container const &c)
{
  auto const &a = c.get("coils");
  CoilSet coils(a.dims[3], a.dims[2], a.dims[1], a.dims[0]);
  coils.maps = c.complex_data("coils");
  return coils;
}

MaskSeries container_mask(Container const &c)
{
  auto const &a = c.get("mask");
  MaskSeries m(a.dims[2], a.dims[1], a.dims[0]);
  m.mask = c.mask_data("mask");
  return m;
}

// Encoding e of a [enc][coil][t][z][y][x] k-space array.
KSpaceData container_kspace(Container const &c, std::string const &name, int e, MaskSeries const &mask)
{
  VolumeShape const s = container_shape(c);
  auto const &a = c.get(name);
  Index const nc = a.dims[1];
  KSpaceData k(s, nc, mask, false);
  Index const n = nc * s.size();
  for (Index i = 0; i < n; i++) {
    std::size_t const o = static_cast<std::size_t>(2 * (e * n + i));
    k.samples[i] = Cx{a.values[o], a.values[o + 1]};
  }
  return k;
}

void put_encodings(Container &c, std::string const &name, std::string const &role, VolumeShape const &s, Index nc,
                   std::array<KSpaceData, 4> const &k)
{
  std::vector<Cx> all;
  all.reserve(static_cast<std::size_t>(4 * nc * s.size()));
  for (auto const &e : k) { all.insert(all.end(), e.samples.begin(), e.samples.end()); }
  c.add_complex(name, role, {"enc", "coil", "t", "z", "y", "x"}, {4, nc, s.nt, s.nz, s.ny, s.nx}, all);
}

} // namespace

VolumeShape container_shape(Container const &c)
{
  auto const &sh = c.attributes.at("shape");
  return {sh.at("nx").get<Index>(), sh.at("ny").get<Index>(), sh.at("nz").get<Index>(), sh.at("nt").get<Index>()};
}

Container phantom_container(PhantomConfig const &cfg, Index nc, std::uint64_t coil_seed)
{
  cfg.validate();
  PhantomTruth const truth = make_phantom(cfg);
  CoilSet const coils = make_coils(cfg.nx, cfg.ny, cfg.nz, nc, coil_seed);
  VolumeShape const s = cfg.shape();
  Acquisition const acq = simulate_acquisition(truth, coils, {MaskSeries::full(s.ny, s.nz, s.nt)}, cfg.noise_snr_db, cfg.seed);

  Container c;
  c.attributes["shape"] = {{"nx", s.nx}, {"ny", s.ny}, {"nz", s.nz}, {"nt", s.nt}};
  c.attributes["coils"] = nc;
  c.attributes["venc"] = truth.venc;
  c.attributes["voxel_size_cm"] = truth.voxel_size_cm;
  c.attributes["axis"] = axis_name(truth.axis);
  c.attributes["vessel_center"] = truth.center;
  c.attributes["vessel_radius"] = truth.radius;
  c.attributes["peak_phase"] = truth.peak_phase;
  c.attributes["noise_snr_db"] = std::isfinite(cfg.noise_snr_db) ? nlohmann::json(cfg.noise_snr_db) : nlohmann::json("inf");
  c.attributes["seed"] = cfg.seed;
  c.attributes["coil_seed"] = coil_seed;
  c.attributes["R"] = 1.0;

  c.add_real("truth_magnitude", "truth_magnitude", {"t", "z", "y", "x"}, dims_of(s), truth.magnitude.data);
  std::vector<double> vel;
  for (auto const &comp : truth.velocity.v) { vel.insert(vel.end(), comp.begin(), comp.end()); }
  c.add_real("truth_velocity", "truth_velocity", {"component", "t", "z", "y", "x"}, {3, s.nt, s.nz, s.ny, s.nx}, vel);
  c.add_mask("segmentation", "segmentation", {"z", "y", "x"}, {s.nz, s.ny, s.nx}, truth.segmentation);
  c.add_complex("coils", "coils", {"coil", "z", "y", "x"}, {nc, s.nz, s.ny, s.nx}, coils.maps);
  put_encodings(c, "reference", "kspace", s, nc, acq.reference);
  put_encodings(c, "kspace", "kspace", s, nc, acq.reference);
  MaskSeries const full = MaskSeries::full(s.ny, s.nz, s.nt);
  c.add_mask("mask", "mask", {"t", "kz", "ky"}, {s.nt, s.nz, s.ny}, full.mask);
  return c;
}

Container sample_container(Container const &src, double R, std::uint64_t seed, double angle_deg)
{
  VolumeShape const s = container_shape(src);
  MaskSeries mask;
  if (R <= 1.0) {
    if (R < 1.0) { throw ConfigError("acceleration must be >= 1"); }
    mask = MaskSeries::full(s.ny, s.nz, s.nt);
  } else {
    SamplingConfig sc;
    sc.ny = s.ny;
    sc.nz = s.nz;
    sc.nt = s.nt;
    sc.seed = seed;
    sc.angle_increment_deg = angle_deg;
    sc.validate();
    mask = generate_for_acceleration(sc, R);
  }
  Container c = src;
  Index const nc = src.get("reference").dims[1];
  std::array<KSpaceData, 4> k;
  for (int e = 0; e < 4; e++) {
    k[e] = retrospective_undersample(container_kspace(src, "reference", e, MaskSeries::full(s.ny, s.nz, s.nt)), mask);
  }
  put_encodings(c, "kspace", "kspace", s, nc, k);
  c.add_mask("mask", "mask", {"t", "kz", "ky"}, {s.nt, s.nz, s.ny}, mask.mask);
  c.attributes["R"] = measured_acceleration(mask).R;
  c.attributes["target_R"] = R;
  c.attributes["sampling_seed"] = seed;
  c.attributes["angle_increment_deg"] = angle_deg;
  c.remove("recon");
  return c;
}

Container recon_container(Container const &src, ReconOptions const &opts, double *seconds)
{
  VolumeShape const s = container_shape(src);
  CoilSet const coils = container_coils(src);
  MaskSeries const mask = container_mask(src);
  auto const t0 = std::chrono::steady_clock::now();
  std::vector<Cx> all;
  all.reserve(static_cast<std::size_t>(4 * s.size()));
  for (int e = 0; e < 4; e++) {
    ImageSeries const img = reconstruct(container_kspace(src, "kspace", e, mask), coils, opts);
    all.insert(all.end(), img.data.begin(), img.data.end());
  }
  double const dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (seconds) { *seconds = dt; }
  Container c = src;
  c.add_complex("recon", "recon", {"enc", "t", "z", "y", "x"}, {4, s.nt, s.nz, s.ny, s.nx}, all);
  c.attributes["method"] = method_name(opts.method);
  c.attributes["recon_seconds"] = dt;
  if (opts.method == Method::CsLlr) {
    c.attributes["lambda"] = opts.llr.lambda;
    c.attributes["iters"] = opts.llr.max_iters;
  }
  return c;
}

EncodedImages reference_images(Container const &c, bool truth)
{
  VolumeShape const s = container_shape(c);
  if (truth) {
    RealField mag(s);
    mag.data = c.real_data("truth_magnitude");
    VelocityField v(s);
    auto const vel = c.real_data("truth_velocity");
    for (int k = 0; k < 3; k++) { std::copy(vel.begin() + k * s.size(), vel.begin() + (k + 1) * s.size(), v.v[k].begin()); }
    return velocity_encode(mag, v, VelocityEncoding{c.attributes.at("venc").get<double>()});
  }
  CoilSet const coils = container_coils(c);
  MaskSeries const full = MaskSeries::full(s.ny, s.nz, s.nt);
  EncodedImages out;
  for (int e = 0; e < 4; e++) { out[e] = adjoint_encode(container_kspace(c, "reference", e, full), coils); }
  return out;
}

EncodedImages recon_images(Container const &c)
{
  VolumeShape const s = container_shape(c);
  auto const all = c.complex_data("recon");
  EncodedImages out;
  for (int e = 0; e < 4; e++) {
    out[e] = ImageSeries(s);
    std::copy(all.begin() + e * s.size(), all.begin() + (e + 1) * s.size(), out[e].data.begin());
  }
  return out;
}

namespace {

MetricsRow metrics_row(std::string const &method, double R, EncodedImages const &rec, EncodedImages const &ref,
                       std::vector<std::uint8_t> const &lumen, FlowPlane const &plane, double venc, double seconds)
{
  ErrorMetrics const em = error_metrics(rec, ref, lumen, venc);
  MetricsRow r;
  r.method = method;
  r.R = R;
  r.nrmse = em.nrmse;
  r.relerr = em.relerr;
  r.angerr = em.angerr_deg;
  double ss = 0.0;
  for (int e = 0; e < 4; e++) {
    RealField a(rec[e].shape), b(ref[e].shape);
    for (Index i = 0; i < a.shape.size(); i++) {
      a.data[i] = std::abs(rec[e].data[i]);
      b.data[i] = std::abs(ref[e].data[i]);
    }
    ss += ssim(a, b);
  }
  r.ssim = ss / 4.0;
  auto const fq = flow_quant(velocity_decode(rec, VelocityEncoding{venc}), plane);
  r.peak_flow = fq.peak_flow;
  r.peak_velocity = fq.peak_velocity;
  r.seconds = seconds;
  return r;
}

} // namespace

std::vector<MetricsRow> eval_container(Container const &c, bool against_truth)
{
  VolumeShape const s = container_shape(c);
  double const venc = c.attributes.at("venc");
  double const R = c.attributes.value("R", 1.0);
  auto const lumen = c.mask_data("segmentation");
  int const axis = static_cast<int>(parse_axis(c.attributes.at("axis").get<std::string>()));
  std::array<Index, 3> const n{s.nx, s.ny, s.nz};
  FlowPlane const plane = FlowPlane::axis_slice(s, axis, n[axis] / 2, lumen, c.attributes.at("voxel_size_cm"));

  EncodedImages const ref = reference_images(c, against_truth);
  EncodedImages const rec = recon_images(c);
  std::vector<MetricsRow> rows;
  rows.push_back(metrics_row("reference", R, ref, ref, lumen, plane, venc, 0.0));
  rows.push_back(metrics_row(c.attributes.value("method", std::string("unknown")), R, rec, ref, lumen, plane, venc,
                             c.attributes.value("recon_seconds", 0.0)));
  return rows;
}

namespace {

nlohmann::json ba_json(BlandAltmanResult const &b)
{
  nlohmann::json pts = nlohmann::json::array();
  for (auto const &[m, d] : b.points) { pts.push_back({m, d}); }
  return {{"mean_diff", b.mean_diff}, {"sd_diff", b.sd_diff}, {"lower", b.lower}, {"upper", b.upper}, {"points", pts}};
}

void write_json(nlohmann::json const &j, std::filesystem::path const &p)
{
  std::ofstream f(p);
  f << j.dump(2) << '\n';
  if (!f) { throw Error("cannot write " + p.string()); }
}

} // namespace

void write_report(std::vector<std::filesystem::path> const &csvs, std::filesystem::path const &out_dir)
{
  if (csvs.empty()) { throw ConfigError("report: no metrics files given"); }
  std::filesystem::create_directories(out_dir);
  struct Acc
  {
    double nrmse = 0, relerr = 0, angerr = 0, ssim = 0;
    Index n = 0;
  };
  std::map<std::pair<std::string, double>, Acc> curves;
  // per method: paired (reference, method) peak flow and peak velocity
  std::map<std::string, std::array<std::vector<double>, 4>> pairs;
  for (auto const &path : csvs) {
    auto const rows = read_metrics_rows(path);
    std::map<double, MetricsRow> refs;
    for (auto const &r : rows) {
      if (r.method == "reference") { refs[r.R] = r; }
    }
    for (auto const &r : rows) {
      if (r.method == "reference") { continue; }
      auto &a = curves[{r.method, r.R}];
      a.nrmse += r.nrmse;
      a.relerr += r.relerr;
      a.angerr += r.angerr;
      a.ssim += r.ssim;
      a.n++;
      auto const it = refs.find(r.R);
      if (it != refs.end()) {
        auto &p = pairs[r.method];
        p[0].push_back(it->second.peak_flow);
        p[1].push_back(r.peak_flow);
        p[2].push_back(it->second.peak_velocity);
        p[3].push_back(r.peak_velocity);
      }
    }
  }
  {
    std::ofstream f(out_dir / "error_curves.csv");
    f.precision(10);
    f << "method,R,nRMSE,RelErr,AngErr,SSIM,n\n";
    for (auto const &[key, a] : curves) {
      double const n = double(a.n);
      f << key.first << ',' << key.second << ',' << a.nrmse / n << ',' << a.relerr / n << ',' << a.angerr / n << ','
        << a.ssim / n << ',' << a.n << '\n';
    }
  }
  nlohmann::json ba = nlohmann::json::object(), scatter = nlohmann::json::object();
  for (auto const &[method, p] : pairs) {
    ba[method] = {{"peak_flow", ba_json(bland_altman(p[1], p[0]))}, {"peak_velocity", ba_json(bland_altman(p[3], p[2]))}};
    nlohmann::json sc = {{"reference_peak_flow", p[0]}, {"peak_flow", p[1]}};
    if (p[0].size() >= 2) {
      try {
        LinearFit const fit = linreg_corr(p[0], p[1]);
        sc["fit"] = {{"a", fit.a}, {"b", fit.b}, {"r", fit.r}};
      } catch (NumericalError const &) {
        sc["fit"] = nullptr;
      }
    }
    scatter[method] = sc;
  }
  write_json(ba, out_dir / "bland_altman.json");
  write_json(scatter, out_dir / "scatter.json");
}

std::vector<BenchmarkRow> run_benchmark(BenchmarkOptions const &opts)
{
  PhantomTruth const truth = make_phantom(opts.phantom);
  VolumeShape const s = opts.phantom.shape();
  CoilSet const coils = make_coils(s.nx, s.ny, s.nz, opts.coils, opts.seed + 1);
  SamplingConfig sc;
  sc.ny = s.ny;
  sc.nz = s.nz;
  sc.nt = s.nt;
  sc.seed = opts.seed;
  MaskSeries const mask = generate_for_acceleration(sc, opts.R);
  double const sigma = noise_sigma(truth.magnitude, opts.phantom.noise_snr_db);
  std::mt19937_64 rng(opts.seed);

  std::vector<BenchmarkRow> rows;
  for (auto m : opts.methods) { rows.push_back({method_name(m), 0.0}); }
  for (Index e = 0; e < opts.encodings; e++) {
    KSpaceData b;
    {
      EncodedImages const img = truth_images(truth);
      b = to_hybrid(simulate_encoding(img[e % 4], coils, mask, sigma, rng, false).undersampled);
    }
    for (std::size_t i = 0; i < opts.methods.size(); i++) {
      ReconOptions ro;
      ro.method = opts.methods[i];
      ro.llr = opts.llr;
      ro.seed = opts.seed;
      auto const t0 = std::chrono::steady_clock::now();
      ImageSeries const out = reconstruct(b, coils, ro);
      double const dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rows[i].seconds += dt;
      if (opts.verbose) { std::fprintf(stderr, "encoding %td  %-8s %.1f s\n", e, rows[i].method.c_str(), dt); }
    }
  }
  return rows;
}

} // namespace flowrecon
