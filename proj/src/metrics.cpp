#include "flowrecon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace flowrecon {

namespace {

void check_pair(std::span<double const> a, std::span<double const> ref, char const *what)
{
  if (a.size() != ref.size()) { throw DimensionError(std::string(what) + ": length mismatch"); }
  if (a.empty()) { throw DimensionError(std::string(what) + ": empty input"); }
}

Index mask_count(std::span<std::uint8_t const> mask)
{
  return std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
}

void check_mask(VolumeShape const &s, std::span<std::uint8_t const> mask)
{
  if (static_cast<Index>(mask.size()) != s.voxels()) { throw DimensionError("lumen mask does not match the volume"); }
  if (mask_count(mask) == 0) { throw DimensionError("lumen mask is empty"); }
}

} // namespace

double nrmse(std::span<double const> a, std::span<double const> ref)
{
  check_pair(a, ref, "nrmse");
  double sq = 0.0, peak = 0.0;
  for (std::size_t i = 0; i < a.size(); i++) {
    sq += (a[i] - ref[i]) * (a[i] - ref[i]);
    peak = std::max(peak, ref[i] * ref[i]);
  }
  if (!(peak > 0.0)) { throw NumericalError("nrmse: reference is zero"); }
  return std::sqrt(sq / (double(a.size()) * peak));
}

double relative_error(std::span<double const> a, std::span<double const> ref)
{
  check_pair(a, ref, "relative_error");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); i++) {
    num += (a[i] - ref[i]) * (a[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  if (!(den > 0.0)) { throw NumericalError("relative_error: reference is zero"); }
  return std::sqrt(num / den);
}

double angular_error_deg(VelocityField const &u, VelocityField const &v, std::span<std::uint8_t const> mask, double threshold)
{
  if (!(u.shape == v.shape)) { throw DimensionError("angular_error: shape mismatch"); }
  check_mask(u.shape, mask);
  Index const nv = u.shape.voxels();
  double sum = 0.0;
  Index n = 0;
  for (Index t = 0; t < u.shape.nt; t++) {
    for (Index i = 0; i < nv; i++) {
      if (!mask[i]) { continue; }
      Index const o = t * nv + i;
      double dot = 0.0, uu = 0.0, vv = 0.0;
      for (int c = 0; c < 3; c++) {
        dot += u.v[c][o] * v.v[c][o];
        uu += u.v[c][o] * u.v[c][o];
        vv += v.v[c][o] * v.v[c][o];
      }
      uu = std::sqrt(uu);
      vv = std::sqrt(vv);
      if (uu <= threshold || vv <= threshold) { continue; }
      sum += std::acos(std::clamp(dot / (uu * vv), -1.0, 1.0));
      n++;
    }
  }
  return n == 0 ? 0.0 : sum / double(n) * 180.0 / std::numbers::pi;
}

std::vector<double> lumen_speeds(VelocityField const &v, std::span<std::uint8_t const> mask)
{
  check_mask(v.shape, mask);
  Index const nv = v.shape.voxels();
  std::vector<double> out;
  for (Index t = 0; t < v.shape.nt; t++) {
    for (Index i = 0; i < nv; i++) {
      if (!mask[i]) { continue; }
      Index const o = t * nv + i;
      out.push_back(std::hypot(v.v[0][o], v.v[1][o], v.v[2][o]));
    }
  }
  return out;
}

std::vector<double> magnitudes(EncodedImages const &img)
{
  std::vector<double> out;
  out.reserve(4 * img[0].data.size());
  for (auto const &e : img) {
    for (auto const &c : e.data) { out.push_back(std::abs(c)); }
  }
  return out;
}

ErrorMetrics error_metrics(EncodedImages const &recon, EncodedImages const &ref, std::span<std::uint8_t const> lumen,
                           double venc)
{
  for (int e = 0; e < 4; e++) { check_same_shape(recon[e], ref[e], "error_metrics"); }
  check_mask(ref[0].shape, lumen);
  VelocityEncoding const enc{venc};
  auto const vr = velocity_decode(recon, enc);
  auto const vt = velocity_decode(ref, enc);
  ErrorMetrics m;
  m.nrmse = nrmse(magnitudes(recon), magnitudes(ref));
  m.relerr = relative_error(lumen_speeds(vr, lumen), lumen_speeds(vt, lumen));
  m.angerr_deg = angular_error_deg(vr, vt, lumen);
  return m;
}

namespace {

// Normalised Gaussian smoothing along one axis with window weights renormalised where the
// window leaves the volume.
void smooth_axis(std::vector<double> &f, std::array<Index, 3> const &n, int axis, std::vector<double> const &w)
{
  Index const r = static_cast<Index>(w.size()) / 2;
  Index const len = n[axis];
  if (len == 1) { return; }
  Index const stride = axis == 0 ? 1 : axis == 1 ? n[0] : n[0] * n[1];
  std::vector<double> line(static_cast<std::size_t>(len)), out(static_cast<std::size_t>(len));
  Index const total = n[0] * n[1] * n[2];
  for (Index base = 0; base < total; base++) {
    if ((base / stride) % len != 0) { continue; }
    for (Index i = 0; i < len; i++) { line[i] = f[base + i * stride]; }
    for (Index i = 0; i < len; i++) {
      double acc = 0.0, ws = 0.0;
      for (Index k = -r; k <= r; k++) {
        Index const j = i + k;
        if (j < 0 || j >= len) { continue; }
        acc += w[k + r] * line[j];
        ws += w[k + r];
      }
      out[i] = acc / ws;
    }
    for (Index i = 0; i < len; i++) { f[base + i * stride] = out[i]; }
  }
}

} // namespace

double ssim(RealField const &a, RealField const &b, double sigma)
{
  if (!(a.shape == b.shape)) { throw DimensionError("ssim: shape mismatch"); }
  if (!(sigma > 0.0)) { throw ConfigError("ssim: sigma must be positive"); }
  auto const [lo, hi] = std::minmax_element(b.data.begin(), b.data.end());
  double L = *hi - *lo;
  if (!(L > 0.0)) { L = 1.0; }
  double const C1 = (0.01 * L) * (0.01 * L), C2 = (0.03 * L) * (0.03 * L);

  Index const r = static_cast<Index>(3.5 * sigma + 0.5);
  std::vector<double> w(static_cast<std::size_t>(2 * r + 1));
  for (Index k = -r; k <= r; k++) { w[k + r] = std::exp(-0.5 * double(k * k) / (sigma * sigma)); }

  VolumeShape const &s = a.shape;
  std::array<Index, 3> const n{s.nx, s.ny, s.nz};
  Index const nv = s.voxels();
  auto smooth = [&](std::vector<double> f) {
    for (int ax = 0; ax < 3; ax++) { smooth_axis(f, n, ax, w); }
    return f;
  };
  double total = 0.0;
  for (Index t = 0; t < s.nt; t++) {
    std::vector<double> fa(a.data.begin() + t * nv, a.data.begin() + (t + 1) * nv);
    std::vector<double> fb(b.data.begin() + t * nv, b.data.begin() + (t + 1) * nv);
    std::vector<double> aa(static_cast<std::size_t>(nv)), bb(aa.size()), ab(aa.size());
    for (Index i = 0; i < nv; i++) {
      aa[i] = fa[i] * fa[i];
      bb[i] = fb[i] * fb[i];
      ab[i] = fa[i] * fb[i];
    }
    auto const ma = smooth(fa), mb = smooth(fb), saa = smooth(aa), sbb = smooth(bb), sab = smooth(ab);
    for (Index i = 0; i < nv; i++) {
      double const va = saa[i] - ma[i] * ma[i];
      double const vb = sbb[i] - mb[i] * mb[i];
      double const cab = sab[i] - ma[i] * mb[i];
      total += ((2.0 * ma[i] * mb[i] + C1) * (2.0 * cab + C2)) / ((ma[i] * ma[i] + mb[i] * mb[i] + C1) * (va + vb + C2));
    }
  }
  return total / double(s.size());
}

void FlowPlane::validate() const
{
  double const n2 = normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2];
  if (std::abs(n2 - 1.0) > 1e-9) { throw ConfigError("flow plane normal must have unit length"); }
  if (!(voxel_area_cm2 > 0.0)) { throw ConfigError("flow plane voxel area must be positive"); }
}

FlowPlane FlowPlane::axis_slice(VolumeShape const &s, int axis, Index index, std::span<std::uint8_t const> lumen,
                                double voxel_size_cm)
{
  if (axis < 0 || axis > 2) { throw ConfigError("flow plane axis must be 0, 1 or 2"); }
  std::array<Index, 3> const n{s.nx, s.ny, s.nz};
  if (index < 0 || index >= n[axis]) { throw DimensionError("flow plane does not intersect the grid"); }
  if (static_cast<Index>(lumen.size()) != s.voxels()) { throw DimensionError("lumen mask does not match the volume"); }
  FlowPlane p;
  p.normal = {0.0, 0.0, 0.0};
  p.normal[axis] = 1.0;
  p.origin = {0.0, 0.0, 0.0};
  p.origin[axis] = double(index);
  p.voxel_area_cm2 = voxel_size_cm * voxel_size_cm;
  for (Index z = 0; z < s.nz; z++) {
    for (Index y = 0; y < s.ny; y++) {
      for (Index x = 0; x < s.nx; x++) {
        std::array<Index, 3> const c{x, y, z};
        Index const o = (z * s.ny + y) * s.nx + x;
        if (c[axis] == index && lumen[o]) { p.voxels.push_back(o); }
      }
    }
  }
  return p;
}

FlowQuant flow_quant(VelocityField const &v, FlowPlane const &plane)
{
  plane.validate();
  if (plane.voxels.empty()) { throw DimensionError("flow_quant: plane has no lumen voxels"); }
  Index const nv = v.shape.voxels();
  FlowQuant q;
  q.peak_velocity = -std::numeric_limits<double>::infinity();
  for (Index t = 0; t < v.shape.nt; t++) {
    double flow = 0.0;
    for (Index o : plane.voxels) {
      if (o < 0 || o >= nv) { throw DimensionError("flow_quant: plane voxel outside the grid"); }
      Index const i = t * nv + o;
      double const vn = v.v[0][i] * plane.normal[0] + v.v[1][i] * plane.normal[1] + v.v[2][i] * plane.normal[2];
      flow += vn * plane.voxel_area_cm2;
      q.peak_velocity = std::max(q.peak_velocity, vn);
    }
    q.flow.push_back(flow);
  }
  q.peak_flow = *std::max_element(q.flow.begin(), q.flow.end());
  return q;
}

BlandAltmanResult bland_altman(std::span<double const> x, std::span<double const> y)
{
  check_pair(x, y, "bland_altman");
  BlandAltmanResult r;
  double const n = double(x.size());
  for (std::size_t i = 0; i < x.size(); i++) {
    r.points.emplace_back(0.5 * (x[i] + y[i]), x[i] - y[i]);
    r.mean_diff += x[i] - y[i];
  }
  r.mean_diff /= n;
  if (x.size() > 1) {
    double ss = 0.0;
    for (auto const &p : r.points) { ss += (p.second - r.mean_diff) * (p.second - r.mean_diff); }
    r.sd_diff = std::sqrt(ss / (n - 1.0));
  }
  r.lower = r.mean_diff - 1.96 * r.sd_diff;
  r.upper = r.mean_diff + 1.96 * r.sd_diff;
  return r;
}

LinearFit linreg_corr(std::span<double const> x, std::span<double const> y)
{
  check_pair(x, y, "linreg_corr");
  if (x.size() < 2) { throw DimensionError("linreg_corr: need at least two points"); }
  double const n = double(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); i++) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); i++) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) { throw NumericalError("linreg_corr: x has zero variance"); }
  LinearFit f;
  f.a = sxy / sxx;
  f.b = my - f.a * mx;
  f.r = syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
  return f;
}

void write_metrics_rows(std::vector<MetricsRow> const &rows, std::filesystem::path const &path, bool append)
{
  bool const header = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream f(path, append ? std::ios::app : std::ios::trunc);
  if (!f) { throw Error("cannot write " + path.string()); }
  f.precision(10);
  if (header) { f << kMetricsHeader << '\n'; }
  for (auto const &r : rows) {
    f << r.method << ',' << r.R << ',' << r.nrmse << ',' << r.relerr << ',' << r.angerr << ',' << r.ssim << ','
      << r.peak_flow << ',' << r.peak_velocity << ',' << r.seconds << '\n';
  }
}

std::vector<MetricsRow> read_metrics_rows(std::filesystem::path const &path)
{
  std::ifstream f(path);
  if (!f) { throw Error("cannot read " + path.string()); }
  std::string line;
  std::getline(f, line);
  if (line != kMetricsHeader) { throw Error(path.string() + ": unexpected metrics header"); }
  std::vector<MetricsRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) { continue; }
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) { cells.push_back(cell); }
    if (cells.size() != 9) { throw Error(path.string() + ": malformed row: " + line); }
    MetricsRow r;
    r.method = cells[0];
    double *fields[] = {&r.R, &r.nrmse, &r.relerr, &r.angerr, &r.ssim, &r.peak_flow, &r.peak_velocity, &r.seconds};
    for (int i = 0; i < 8; i++) { *fields[i] = std::stod(cells[i + 1]); }
    rows.push_back(r);
  }
  return rows;
}

} // namespace flowrecon
