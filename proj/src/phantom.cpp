#include "flowrecon/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flowrecon {

void PhantomConfig::validate() const
{
  shape().validate();
  if (!(tube_radius >= 2.0)) { throw ConfigError("tube radius must be >= 2 voxels"); }
  if (!(venc > 0.0)) { throw ConfigError("venc must be positive"); }
  if (!(std::abs(peak_velocity) < 2.0 * venc)) { throw ConfigError("peak velocity must stay below 2 * venc"); }
  if (!(systolic_width > 0.0 && systolic_width <= 1.0)) { throw ConfigError("systolic_width must lie in (0, 1]"); }
  if (!(diastolic_level >= 0.0 && diastolic_level < 1.0)) { throw ConfigError("diastolic_level must lie in [0, 1)"); }
  if (!(background_magnitude > 0.0 && lumen_magnitude > 0.0)) { throw ConfigError("magnitudes must be positive"); }
  if (!(voxel_size_cm > 0.0)) { throw ConfigError("voxel size must be positive"); }
}

PhantomConfig PhantomConfig::desk() { return PhantomConfig{}; }

PhantomConfig PhantomConfig::paper_geometry()
{
  PhantomConfig c;
  c.nx = 113;
  c.ny = 113;
  c.nz = 25;
  c.nt = 25;
  c.tube_radius = 5.0;
  c.axis = Axis::Z;
  return c;
}

std::vector<double> pulsatile_waveform(PhantomConfig const &cfg, Index *peak_phase)
{
  Index const nt = cfg.nt;
  Index const tp = static_cast<Index>(std::llround(cfg.systolic_fraction * double(nt))) % nt;
  if (peak_phase) { *peak_phase = tp; }
  std::vector<double> w(static_cast<std::size_t>(nt));
  for (Index t = 0; t < nt; t++) {
    Index const dt = std::abs(t - tp);
    double const d = double(std::min(dt, nt - dt)) / double(nt);
    double const raised = d < 0.5 * cfg.systolic_width ? 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * d / cfg.systolic_width)) : 0.0;
    w[t] = cfg.diastolic_level + (1.0 - cfg.diastolic_level) * raised;
  }
  return w;
}

namespace {

struct Lateral
{
  int a, b; // lateral axes, axis index 0 = x, 1 = y, 2 = z
};

Lateral lateral_axes(Axis axis)
{
  switch (axis) {
  case Axis::X: return {1, 2};
  case Axis::Y: return {0, 2};
  case Axis::Z: return {0, 1};
  }
  return {0, 1};
}

} // namespace

PhantomTruth make_phantom(PhantomConfig const &cfg)
{
  cfg.validate();
  VolumeShape const s = cfg.shape();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  std::array<Index, 3> const n{s.nx, s.ny, s.nz};
  auto const [la, lb] = lateral_axes(cfg.axis);

  PhantomTruth truth;
  truth.venc = cfg.venc;
  truth.voxel_size_cm = cfg.voxel_size_cm;
  truth.axis = cfg.axis;
  truth.radius = cfg.tube_radius;
  for (int d = 0; d < 3; d++) { truth.center[d] = 0.5 * double(n[d] - 1); }
  truth.center[la] += uni(rng);
  truth.center[lb] += uni(rng);
  for (int d : {la, lb}) {
    if (truth.center[d] - cfg.tube_radius < 0.0 || truth.center[d] + cfg.tube_radius > double(n[d] - 1)) {
      throw ConfigError("vessel does not fit inside the grid");
    }
  }

  // static body: elliptic cylinder along the vessel axis with low-frequency texture and a few blobs
  struct Wave
  {
    std::array<double, 3> f;
    double phase, amp;
  };
  std::array<Wave, 3> waves{};
  for (auto &w : waves) {
    for (auto &f : w.f) { f = 1.5 * uni(rng); }
    w.phase = std::numbers::pi * uni(rng);
    w.amp = 0.12 + 0.08 * uni(rng);
  }
  struct Blob
  {
    std::array<double, 3> c, r;
    double level;
  };
  std::array<Blob, 3> blobs{};
  for (auto &b : blobs) {
    for (int d = 0; d < 3; d++) {
      b.c[d] = 0.5 * double(n[d] - 1) * (1.0 + 0.5 * uni(rng));
      b.r[d] = double(n[d]) * (0.1 + 0.04 * uni(rng));
    }
    b.level = 0.6 + 0.3 * uni(rng);
  }

  Index const nv = s.voxels();
  std::vector<double> body(static_cast<std::size_t>(nv), 0.0);
  truth.segmentation.assign(static_cast<std::size_t>(nv), 0);
  std::vector<double> radial(static_cast<std::size_t>(nv), 0.0);
  for (Index z = 0; z < s.nz; z++) {
    for (Index y = 0; y < s.ny; y++) {
      for (Index x = 0; x < s.nx; x++) {
        std::array<double, 3> const r{double(x), double(y), double(z)};
        Index const i = (z * s.ny + y) * s.nx + x;
        double const ea = (r[la] - 0.5 * double(n[la] - 1)) / (0.46 * double(n[la]));
        double const eb = (r[lb] - 0.5 * double(n[lb] - 1)) / (0.46 * double(n[lb]));
        if (ea * ea + eb * eb <= 1.0) {
          double m = 1.0;
          for (auto const &w : waves) {
            double arg = w.phase;
            for (int d = 0; d < 3; d++) { arg += 2.0 * std::numbers::pi * w.f[d] * r[d] / double(n[d]); }
            m += w.amp * std::cos(arg);
          }
          for (auto const &b : blobs) {
            double q = 0.0;
            for (int d = 0; d < 3; d++) { q += std::pow((r[d] - b.c[d]) / b.r[d], 2); }
            if (q <= 1.0) { m += b.level; }
          }
          body[i] = cfg.background_magnitude * m;
        }
        double const da = r[la] - truth.center[la];
        double const db = r[lb] - truth.center[lb];
        double const rr = std::sqrt(da * da + db * db);
        radial[i] = rr;
        if (rr <= cfg.tube_radius) { truth.segmentation[i] = 1; }
      }
    }
  }

  truth.waveform = pulsatile_waveform(cfg, &truth.peak_phase);
  truth.magnitude = RealField(s);
  truth.velocity = VelocityField(s);
  int const ax = static_cast<int>(cfg.axis);
  for (Index t = 0; t < s.nt; t++) {
    double const w = truth.waveform[t];
    for (Index i = 0; i < nv; i++) {
      Index const j = t * nv + i;
      if (truth.segmentation[i]) {
        double const q = radial[i] / cfg.tube_radius;
        truth.magnitude.data[j] = cfg.lumen_magnitude * (0.85 + 0.15 * w);
        truth.velocity.v[ax][j] = cfg.peak_velocity * w * (1.0 - q * q);
      } else {
        truth.magnitude.data[j] = body[i];
      }
    }
  }
  return truth;
}

CoilSet make_coils(Index nx, Index ny, Index nz, Index nc, std::uint64_t seed)
{
  if (nc < 1) { throw ConfigError("coil count must be >= 1"); }
  CoilSet coils(nx, ny, nz, nc);
  if (nc == 1) {
    std::fill(coils.maps.begin(), coils.maps.end(), Cx{1.0, 0.0});
    return coils;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  struct Lobe
  {
    std::array<double, 3> c, k;
    double phase;
  };
  std::vector<Lobe> lobes(static_cast<std::size_t>(nc));
  for (Index k = 0; k < nc; k++) {
    double const ang = 2.0 * std::numbers::pi * (double(k) + 0.3 * uni(rng)) / double(nc);
    auto &l = lobes[k];
    l.c = {0.6 * std::cos(ang), 0.6 * std::sin(ang), 0.3 * uni(rng)};
    l.k = {0.5 * uni(rng), 0.5 * uni(rng), 0.5 * uni(rng)};
    l.phase = std::numbers::pi * uni(rng);
  }
  double const width = 0.5;
  Index const nv = nx * ny * nz;
  for (Index z = 0; z < nz; z++) {
    for (Index y = 0; y < ny; y++) {
      for (Index x = 0; x < nx; x++) {
        std::array<double, 3> const u{(double(x) - 0.5 * double(nx - 1)) / double(nx),
                                      (double(y) - 0.5 * double(ny - 1)) / double(ny),
                                      (double(z) - 0.5 * double(nz - 1)) / double(nz)};
        Index const i = (z * ny + y) * nx + x;
        double sos = 0.0;
        for (Index k = 0; k < nc; k++) {
          auto const &l = lobes[k];
          double d2 = 0.0, ph = l.phase;
          for (int d = 0; d < 3; d++) {
            d2 += (u[d] - l.c[d]) * (u[d] - l.c[d]);
            ph += 2.0 * std::numbers::pi * l.k[d] * u[d];
          }
          Cx const v = std::polar(std::exp(-d2 / (2.0 * width * width)), ph);
          coils.maps[k * nv + i] = v;
          sos += std::norm(v);
        }
        double const inv = 1.0 / std::sqrt(sos);
        for (Index k = 0; k < nc; k++) { coils.maps[k * nv + i] *= inv; }
      }
    }
  }
  return coils;
}

EncodedImages truth_images(PhantomTruth const &truth)
{
  return velocity_encode(truth.magnitude, truth.velocity, VelocityEncoding{truth.venc});
}

double noise_sigma(RealField const &magnitude, double snr_db)
{
  if (std::isinf(snr_db) && snr_db > 0) { return 0.0; }
  double sum = 0.0;
  Index count = 0;
  for (double m : magnitude.data) {
    if (m > 0.0) {
      sum += m;
      count++;
    }
  }
  if (count == 0) { throw NumericalError("noise_sigma: empty support"); }
  return (sum / double(count)) / std::pow(10.0, snr_db / 20.0);
}

EncodingAcquisition simulate_encoding(ImageSeries const &image, CoilSet const &coils, MaskSeries const &mask, double sigma,
                                      std::mt19937_64 &rng, bool keep_reference)
{
  EncodingOperator const E(coils, MaskSeries::full(image.shape.ny, image.shape.nz, image.shape.nt), image.shape);
  KSpaceData full = E.make_kspace();
  E.forward(image, full);
  if (sigma > 0.0) {
    std::normal_distribution<double> gauss(0.0, sigma / std::numbers::sqrt2);
    for (auto &v : full.samples) {
      double const re = gauss(rng);
      double const im = gauss(rng);
      v += Cx{re, im};
    }
  }
  EncodingAcquisition out;
  if (keep_reference) {
    out.undersampled = full;
    out.reference = std::move(full);
  } else {
    out.undersampled = std::move(full);
  }
  out.undersampled.mask = mask;
  out.undersampled.validate();
  out.undersampled.apply_mask();
  return out;
}

Acquisition simulate_acquisition(PhantomTruth const &truth, CoilSet const &coils, std::vector<MaskSeries> const &masks,
                                 double noise_snr_db, std::uint64_t seed)
{
  if (masks.size() != 1 && masks.size() != 4) { throw ConfigError("simulate_acquisition needs 1 or 4 masks"); }
  EncodedImages const images = truth_images(truth);
  double const sigma = noise_sigma(truth.magnitude, noise_snr_db);
  std::mt19937_64 rng(seed);
  Acquisition acq;
  for (int e = 0; e < 4; e++) {
    auto r = simulate_encoding(images[e], coils, masks.size() == 1 ? masks[0] : masks[e], sigma, rng, true);
    acq.undersampled[e] = std::move(r.undersampled);
    acq.reference[e] = std::move(*r.reference);
  }
  return acq;
}

} // namespace flowrecon
