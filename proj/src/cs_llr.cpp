#include "flowrecon/cs_llr.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace flowrecon {

void LLRConfig::validate() const
{
  if (patch_size < 1) { throw ConfigError("LLR patch size must be >= 1"); }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) { throw ConfigError("LLR lambda must be finite and >= 0"); }
  if (max_iters < 1) { throw ConfigError("LLR iterations must be >= 1"); }
  if (power_iters < 1) { throw ConfigError("power iterations must be >= 1"); }
}

CxMatrix svt(CxMatrix const &a, double tau)
{
  if (!(tau >= 0.0)) { throw ConfigError("svt: threshold must be >= 0"); }
  if (!a.allFinite()) { throw NumericalError("svt: non-finite input"); }
  if (a.size() == 0 || tau == 0.0) { return a; }
  if (a.rows() < a.cols()) { return svt(a.adjoint(), tau).adjoint(); }
  // A = U S Vᴴ with V, S² from the small Gram matrix, so svt(A) = A V diag((s - tau)₊ / s) Vᴴ
  Eigen::SelfAdjointEigenSolver<CxMatrix> eig(a.adjoint() * a);
  Eigen::VectorXd const lam = eig.eigenvalues();
  CxMatrix const &V = eig.eigenvectors();
  Index const n = lam.size();
  Index first = n;
  Eigen::VectorXd f(n);
  for (Index i = n - 1; i >= 0; i--) {
    double const sv = std::sqrt(std::max(lam[i], 0.0));
    f[i] = sv > tau ? (sv - tau) / sv : 0.0;
    if (f[i] > 0.0) { first = i; }
  }
  if (first == n) { return CxMatrix::Zero(a.rows(), a.cols()); }
  Index const r = n - first;
  CxMatrix const Vr = V.rightCols(r);
  return (a * Vr) * f.tail(r).asDiagonal() * Vr.adjoint();
}

double nuclear_norm(CxMatrix const &a)
{
  if (!a.allFinite()) { throw NumericalError("nuclear_norm: non-finite input"); }
  if (a.size() == 0) { return 0.0; }
  Eigen::BDCSVD<CxMatrix> svd(a);
  return svd.singularValues().sum();
}

namespace {

Index blocks(Index n, Index p) { return (n + p - 1) / p; }

} // namespace

Index PatchGrid::count() const { return blocks(shape.nx, p) * blocks(shape.ny, p) * blocks(shape.nz, p); }

std::vector<Index> PatchGrid::voxels(Index i) const
{
  Index const bx = blocks(shape.nx, p), by = blocks(shape.ny, p);
  Index const ix = i % bx, iy = (i / bx) % by, iz = i / (bx * by);
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(p * p * p));
  for (Index u = iz * p; u < std::min(shape.nz, (iz + 1) * p); u++) {
    Index const z = (u + shape.nz - shift[2] % shape.nz) % shape.nz;
    for (Index v = iy * p; v < std::min(shape.ny, (iy + 1) * p); v++) {
      Index const y = (v + shape.ny - shift[1] % shape.ny) % shape.ny;
      for (Index w = ix * p; w < std::min(shape.nx, (ix + 1) * p); w++) {
        Index const x = (w + shape.nx - shift[0] % shape.nx) % shape.nx;
        out.push_back((z * shape.ny + y) * shape.nx + x);
      }
    }
  }
  return out;
}

namespace {

CxMatrix gather_patch(ImageSeries const &img, std::vector<Index> const &vox)
{
  Index const nv = img.shape.voxels();
  CxMatrix m(static_cast<Index>(vox.size()), img.shape.nt);
  for (Index t = 0; t < img.shape.nt; t++) {
    Cx const *frame = img.data.data() + t * nv;
    for (Index j = 0; j < m.rows(); j++) { m(j, t) = frame[vox[j]]; }
  }
  return m;
}

void scatter_patch(CxMatrix const &m, std::vector<Index> const &vox, ImageSeries &img)
{
  Index const nv = img.shape.voxels();
  for (Index t = 0; t < img.shape.nt; t++) {
    Cx *frame = img.data.data() + t * nv;
    for (Index j = 0; j < m.rows(); j++) { frame[vox[j]] = m(j, t); }
  }
}

PatchGrid fixed_grid(VolumeShape const &s, LLRConfig const &cfg) { return PatchGrid{s, cfg.patch_size, {0, 0, 0}}; }

} // namespace

ImageSeries llr_prox(ImageSeries const &p, double tau, PatchGrid const &grid)
{
  if (!(grid.shape == p.shape)) { throw DimensionError("llr_prox: patch grid does not match image"); }
  if (tau == 0.0) { return p; }
  ImageSeries out(p.shape);
  for (Index i = 0; i < grid.count(); i++) {
    auto const vox = grid.voxels(i);
    scatter_patch(svt(gather_patch(p, vox), tau), vox, out);
  }
  return out;
}

ImageSeries llr_prox(ImageSeries const &p, double tau, LLRConfig const &cfg, std::mt19937_64 &rng)
{
  PatchGrid grid = fixed_grid(p.shape, cfg);
  if (cfg.random_shift) {
    std::uniform_int_distribution<Index> d(0, cfg.patch_size - 1);
    for (auto &s : grid.shift) { s = d(rng); }
  }
  return llr_prox(p, tau, grid);
}

double llr_penalty(ImageSeries const &p, LLRConfig const &cfg)
{
  if (cfg.lambda == 0.0) { return 0.0; }
  PatchGrid const grid = fixed_grid(p.shape, cfg);
  double sum = 0.0;
  for (Index i = 0; i < grid.count(); i++) { sum += nuclear_norm(gather_patch(p, grid.voxels(i))); }
  return cfg.lambda * sum;
}

namespace {

double data_term(EncodingOperator const &E, ImageSeries const &p, KSpaceData const &b)
{
  std::vector<Cx> k(static_cast<std::size_t>(p.shape.size()));
  double sum = 0.0;
  for (Index c = 0; c < E.coils(); c++) {
    E.coil_forward(c, p.data.data(), k.data());
    Cx const *bc = b.coil(c);
    for (Index t = 0; t < p.shape.nt; t++) {
      for (Index z = 0; z < p.shape.nz; z++) {
        for (Index y = 0; y < p.shape.ny; y++) {
          if (!b.mask(y, z, t)) { continue; }
          Index const o = p.shape.index(0, y, z, t);
          for (Index x = 0; x < p.shape.nx; x++) { sum += std::norm(k[o + x] - bc[o + x]); }
        }
      }
    }
  }
  return 0.5 * sum;
}

} // namespace

double llr_objective(ImageSeries const &p, KSpaceData const &b, CoilSet const &coils, LLRConfig const &cfg)
{
  b.validate();
  EncodingOperator const E(coils, b.mask, b.shape, b.hybrid);
  if (!(p.shape == b.shape)) { throw DimensionError("llr_objective: image and k-space shapes differ"); }
  return data_term(E, p, b) + llr_penalty(p, cfg);
}

double power_iteration(EncodingOperator const &E, Index iters, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  ImageSeries x(E.shape()), y(E.shape());
  for (auto &v : x.data) { v = Cx{g(rng), g(rng)}; }
  double nrm = norm(x.data);
  double L = 0.0;
  for (Index i = 0; i < iters; i++) {
    for (auto &v : x.data) { v /= nrm; }
    E.normal(x, y);
    nrm = norm(y.data);
    L = nrm;
    if (!(nrm > 0.0)) { return 0.0; }
    std::swap(x, y);
  }
  return L;
}

FistaResult fista_reconstruct(KSpaceData const &b, CoilSet const &coils, LLRConfig const &cfg)
{
  cfg.validate();
  b.validate();
  EncodingOperator const E(coils, b.mask, b.shape, b.hybrid);
  FistaResult res;
  ImageSeries ehb(b.shape);
  E.adjoint(b, ehb);
  res.image = ehb;
  if (norm(ehb.data) == 0.0) { return res; }

  res.lipschitz = power_iteration(E, cfg.power_iters, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  if (!(res.lipschitz > 0.0)) { throw NumericalError("fista: encoding operator has zero norm"); }
  double const step = 1.0 / res.lipschitz;
  double const f0 = llr_objective(res.image, b, coils, cfg);

  std::mt19937_64 rng(cfg.seed);
  ImageSeries x = res.image, y = res.image, grad(b.shape);
  double t = 1.0;
  for (Index it = 0; it < cfg.max_iters; it++) {
    E.normal(y, grad);
    for (Index i = 0; i < y.size(); i++) { y.data[i] -= step * (grad.data[i] - ehb.data[i]); }
    ImageSeries xn = llr_prox(y, cfg.lambda * step, cfg, rng);
    double const tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    double const beta = (t - 1.0) / tn;
    for (Index i = 0; i < y.size(); i++) { y.data[i] = xn.data[i] + beta * (xn.data[i] - x.data[i]); }
    x = std::move(xn);
    t = tn;
    if (cfg.track_objective) {
      double const f = llr_objective(x, b, coils, cfg);
      if (!std::isfinite(f) || f > 10.0 * f0) {
        throw NumericalError("fista: diverged at iteration " + std::to_string(it + 1));
      }
      res.objective.push_back(f);
    } else if (!std::isfinite(norm(x.data))) {
      throw NumericalError("fista: non-finite iterate at iteration " + std::to_string(it + 1));
    }
  }
  res.image = std::move(x);
  return res;
}

} // namespace flowrecon
