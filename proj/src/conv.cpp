#include "flowrecon/conv.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>

namespace flowrecon {

char const *bank_name(BankAxes b)
{
  switch (b) {
  case BankAxes::XYZ: return "xyz";
  case BankAxes::XYT: return "xyt";
  case BankAxes::XZT: return "xzt";
  case BankAxes::YZT: return "yzt";
  }
  return "?";
}

FilterBank::FilterBank(Index nf, Index nc, ActivationKnots const &prototype)
  : n_f{nf}
  , n_c{nc}
{
  validate();
  for (int b = 0; b < 4; b++) {
    coeffs[b].assign(static_cast<std::size_t>(n_f * taps()), 0.0);
    activations[b].assign(static_cast<std::size_t>(n_f), prototype);
  }
}

void FilterBank::validate() const
{
  if (n_f < 1) { throw ConfigError("filter count must be >= 1"); }
  if (n_c < 1 || n_c % 2 == 0) { throw ConfigError("filter size must be odd and >= 1"); }
}

void FilterBank::randomize(std::mt19937_64 &rng)
{
  std::normal_distribution<double> gauss(0.0, 1.0);
  Index const nt = taps();
  for (int b = 0; b < 4; b++) {
    for (Index f = 0; f < n_f; f++) {
      double *w = kernel(b, f);
      double mean = 0.0;
      for (Index i = 0; i < nt; i++) {
        w[i] = gauss(rng);
        mean += w[i];
      }
      // a single tap cannot be zero mean, so it keeps its sign at unit magnitude
      mean = nt > 1 ? mean / double(nt) : 0.0;
      double nrm = 0.0;
      for (Index i = 0; i < nt; i++) {
        w[i] -= mean;
        nrm += w[i] * w[i];
      }
      nrm = std::sqrt(nrm);
      for (Index i = 0; i < nt; i++) { w[i] /= nrm; }
    }
  }
}

namespace {

std::array<int, 3> bank_axes(BankAxes b)
{
  switch (b) {
  case BankAxes::XYZ: return {0, 1, 2};
  case BankAxes::XYT: return {0, 1, 3};
  case BankAxes::XZT: return {0, 2, 3};
  case BankAxes::YZT: return {1, 2, 3};
  }
  return {0, 1, 2};
}

struct XTap
{
  Index dx;
  Index tap;
};

struct RowTap
{
  Index dy, dz, dt;
  std::vector<XTap> xs;
};

// Groups the n_c³ taps by the row they read from, so the inner loops run along contiguous x.
std::vector<RowTap> row_taps(BankAxes axes, Index n_c, bool transpose)
{
  auto const ax = bank_axes(axes);
  Index const h = n_c / 2;
  std::vector<RowTap> rows;
  for (Index a = 0; a < n_c; a++) {
    for (Index b = 0; b < n_c; b++) {
      for (Index c = 0; c < n_c; c++) {
        std::array<Index, 4> d{0, 0, 0, 0};
        d[ax[0]] = c - h;
        d[ax[1]] = b - h;
        d[ax[2]] = a - h;
        if (transpose) {
          for (auto &v : d) { v = -v; }
        }
        Index const tap = (a * n_c + b) * n_c + c;
        auto it = std::find_if(rows.begin(), rows.end(), [&](RowTap const &r) { return r.dy == d[1] && r.dz == d[2] && r.dt == d[3]; });
        if (it == rows.end()) {
          rows.push_back(RowTap{d[1], d[2], d[3], {}});
          it = std::prev(rows.end());
        }
        it->xs.push_back(XTap{d[0], tap});
      }
    }
  }
  return rows;
}

thread_local std::vector<Cx> pad_buffer;
thread_local std::vector<double> acc_buffer;

// Copies `in` into a buffer padded by h zeros on both ends of every x row.
Cx const *pad_x(VolumeShape const &s, Index h, Cx const *in)
{
  Index const nxp = s.nx + 2 * h;
  Index const rows = s.ny * s.nz * s.nt;
  pad_buffer.assign(static_cast<std::size_t>(rows * nxp), Cx{0.0, 0.0});
  for (Index r = 0; r < rows; r++) { std::copy(in + r * s.nx, in + (r + 1) * s.nx, pad_buffer.data() + r * nxp + h); }
  return pad_buffer.data();
}

} // namespace

void correlate(VolumeShape const &s, BankAxes axes, Index n_c, double const *kernel, Cx const *in, Cx *out, bool transpose,
               bool accumulate)
{
  Index const h = n_c / 2;
  Index const nxp = s.nx + 2 * h;
  auto const rows = row_taps(axes, n_c, transpose);
  Cx const *pad = pad_x(s, h, in);
  Index const len = 2 * s.nx;
  acc_buffer.resize(static_cast<std::size_t>(len));
  double *__restrict acc = acc_buffer.data();

  for (Index t = 0; t < s.nt; t++) {
    for (Index z = 0; z < s.nz; z++) {
      for (Index y = 0; y < s.ny; y++) {
        std::fill(acc, acc + len, 0.0);
        for (auto const &r : rows) {
          Index const yy = y + r.dy, zz = z + r.dz, tt = t + r.dt;
          if (yy < 0 || yy >= s.ny || zz < 0 || zz >= s.nz || tt < 0 || tt >= s.nt) { continue; }
          double const *src = reinterpret_cast<double const *>(pad + ((tt * s.nz + zz) * s.ny + yy) * nxp);
          for (auto const &xt : r.xs) {
            double const w = kernel[xt.tap];
            double const *__restrict sp = src + 2 * (h + xt.dx);
            for (Index i = 0; i < len; i++) { acc[i] += w * sp[i]; }
          }
        }
        double *dst = reinterpret_cast<double *>(out + s.index(0, y, z, t));
        if (accumulate) {
          for (Index i = 0; i < len; i++) { dst[i] += acc[i]; }
        } else {
          std::copy(acc, acc + len, dst);
        }
      }
    }
  }
}

void correlate_kernel_grad(VolumeShape const &s, BankAxes axes, Index n_c, Cx const *x, Cx const *y, double *grad)
{
  Index const h = n_c / 2;
  Index const nxp = s.nx + 2 * h;
  auto const rows = row_taps(axes, n_c, false);
  Cx const *pad = pad_x(s, h, x);
  Index const len = 2 * s.nx;

  for (Index t = 0; t < s.nt; t++) {
    for (Index z = 0; z < s.nz; z++) {
      for (Index yi = 0; yi < s.ny; yi++) {
        double const *__restrict yr = reinterpret_cast<double const *>(y + s.index(0, yi, z, t));
        for (auto const &r : rows) {
          Index const yy = yi + r.dy, zz = z + r.dz, tt = t + r.dt;
          if (yy < 0 || yy >= s.ny || zz < 0 || zz >= s.nz || tt < 0 || tt >= s.nt) { continue; }
          double const *src = reinterpret_cast<double const *>(pad + ((tt * s.nz + zz) * s.ny + yy) * nxp);
          for (auto const &xt : r.xs) {
            double const *__restrict sp = src + 2 * (h + xt.dx);
            double dot = 0.0;
            for (Index i = 0; i < len; i++) { dot += yr[i] * sp[i]; }
            grad[xt.tap] += dot;
          }
        }
      }
    }
  }
}


namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Tap
{
  Index dx, dy, dz, dt;
};

std::vector<Tap> tap_offsets(BankAxes axes, Index n_c)
{
  auto const ax = bank_axes(axes);
  Index const h = n_c / 2;
  std::vector<Tap> taps;
  taps.reserve(static_cast<std::size_t>(n_c * n_c * n_c));
  for (Index a = 0; a < n_c; a++) {
    for (Index b = 0; b < n_c; b++) {
      for (Index c = 0; c < n_c; c++) {
        std::array<Index, 4> d{0, 0, 0, 0};
        d[ax[0]] = c - h;
        d[ax[1]] = b - h;
        d[ax[2]] = a - h;
        taps.push_back({d[0], d[1], d[2], d[3]});
      }
    }
  }
  return taps;
}

// Row-blocked im2col engine. Row r of the volume is the x line at (y, z, t); a block is a
// run of consecutive rows whose columns are laid side by side.
class BlockEngine
{
public:
  BlockEngine(VolumeShape const &s, BankAxes axes, Index n_c)
    : s_{s}
    , h_{n_c / 2}
    , nxp_{s.nx + 2 * (n_c / 2)}
    , taps_{tap_offsets(axes, n_c)}
  {
    Index const target = 1024;
    rows_per_block_ = std::max<Index>(1, target / (2 * s.nx));
    rows_ = s.ny * s.nz * s.nt;
    coords_.reserve(static_cast<std::size_t>(rows_));
    for (Index t = 0; t < s.nt; t++) {
      for (Index z = 0; z < s.nz; z++) {
        for (Index y = 0; y < s.ny; y++) { coords_.push_back({y, z, t}); }
      }
    }
  }

  Index rows() const { return rows_; }
  Index rows_per_block() const { return rows_per_block_; }
  Index taps() const { return static_cast<Index>(taps_.size()); }
  Index row_len() const { return 2 * s_.nx; }

  // Zero-padded copy along x.
  std::vector<Cx> pad(Cx const *in) const
  {
    std::vector<Cx> p(static_cast<std::size_t>(rows_ * nxp_ + 8), Cx{0.0, 0.0});
    for (Index r = 0; r < rows_; r++) { std::copy(in + r * s_.nx, in + (r + 1) * s_.nx, p.data() + r * nxp_ + h_); }
    return p;
  }

  std::vector<Cx> padded_zero() const { return std::vector<Cx>(static_cast<std::size_t>(rows_ * nxp_ + 8), Cx{0.0, 0.0}); }

  void unpad_add(std::vector<Cx> const &p, Cx *out) const
  {
    for (Index r = 0; r < rows_; r++) {
      Cx const *src = p.data() + r * nxp_ + h_;
      Cx *dst = out + r * s_.nx;
      for (Index x = 0; x < s_.nx; x++) { dst[x] += src[x]; }
    }
  }

  // source row index for row r shifted by tap, or -1 when outside the volume
  Index shifted_row(Index r, Tap const &tp) const
  {
    auto const &c = coords_[r];
    Index const yy = c[0] + tp.dy, zz = c[1] + tp.dz, tt = c[2] + tp.dt;
    if (yy < 0 || yy >= s_.ny || zz < 0 || zz >= s_.nz || tt < 0 || tt >= s_.nt) { return -1; }
    return (tt * s_.nz + zz) * s_.ny + yy;
  }

  // src(τ, col) = x[row + δ_τ] for the rows [r0, r0 + nr)
  void im2col(std::vector<Cx> const &padded, Index r0, Index nr, RowMat &src) const
  {
    Index const len = row_len();
    src.resize(taps(), nr * len);
    for (Index tau = 0; tau < taps(); tau++) {
      Tap const &tp = taps_[tau];
      double *dst = src.row(tau).data();
      for (Index i = 0; i < nr; i++) {
        Index const sr = shifted_row(r0 + i, tp);
        double *d = dst + i * len;
        if (sr < 0) {
          std::fill(d, d + len, 0.0);
        } else {
          double const *p = reinterpret_cast<double const *>(padded.data() + sr * nxp_ + h_ + tp.dx);
          std::copy(p, p + len, d);
        }
      }
    }
  }

  // out[row + δ_τ] += c(τ, col), the scatter form of the transpose
  void col2im_add(RowMat const &c, Index r0, Index nr, std::vector<Cx> &padded) const
  {
    Index const len = row_len();
    for (Index tau = 0; tau < taps(); tau++) {
      Tap const &tp = taps_[tau];
      double const *srcrow = c.row(tau).data();
      for (Index i = 0; i < nr; i++) {
        Index const sr = shifted_row(r0 + i, tp);
        if (sr < 0) { continue; }
        double *d = reinterpret_cast<double *>(padded.data() + sr * nxp_ + h_ + tp.dx);
        double const *sp = srcrow + i * len;
        for (Index k = 0; k < len; k++) { d[k] += sp[k]; }
      }
    }
  }

  // Gathers rows [r0, r0 + nr) of an unpadded volume into one matrix row.
  void gather(Cx const *vol, Index r0, Index nr, double *dst) const
  {
    double const *p = reinterpret_cast<double const *>(vol + r0 * s_.nx);
    std::copy(p, p + nr * row_len(), dst);
  }

private:
  VolumeShape s_;
  Index h_, nxp_;
  std::vector<Tap> taps_;
  std::vector<std::array<Index, 3>> coords_;
  Index rows_per_block_ = 1;
  Index rows_ = 0;
};

void check_bank_args(Index n_f, std::vector<ActivationKnots> const &acts)
{
  if (n_f < 1 || static_cast<Index>(acts.size()) != n_f) { throw DimensionError("bank regulariser: one activation per filter required"); }
}

} // namespace

void bank_regularizer_forward(VolumeShape const &s, BankAxes axes, Index n_c, Index n_f, double const *kernels,
                              std::vector<ActivationKnots> const &acts, ActivationKind kind, Cx const *x, Cx *out)
{
  check_bank_args(n_f, acts);
  BlockEngine const eng(s, axes, n_c);
  Index const T = eng.taps();
  Eigen::Map<RowMat const> W(kernels, n_f, T);
  auto const xp = eng.pad(x);
  auto op = eng.padded_zero();
  RowMat src, u, c;
  for (Index r0 = 0; r0 < eng.rows(); r0 += eng.rows_per_block()) {
    Index const nr = std::min(eng.rows_per_block(), eng.rows() - r0);
    eng.im2col(xp, r0, nr, src);
    u.noalias() = W * src;
    for (Index f = 0; f < n_f; f++) {
      std::span<double> row(u.row(f).data(), static_cast<std::size_t>(u.cols()));
      activation_forward(kind, acts[f], row, row);
    }
    c.noalias() = W.transpose() * u;
    eng.col2im_add(c, r0, nr, op);
  }
  eng.unpad_add(op, out);
}

double bank_regularizer_backward(VolumeShape const &s, BankAxes axes, Index n_c, Index n_f, double const *kernels,
                                 std::vector<ActivationKnots> const &acts, ActivationKind kind, Cx const *x, Cx const *gbar,
                                 Cx *xbar, double *grad_kernels, std::vector<std::vector<double>> &grad_knots)
{
  check_bank_args(n_f, acts);
  if (static_cast<Index>(grad_knots.size()) != n_f) { throw DimensionError("bank regulariser: knot gradient count mismatch"); }
  BlockEngine const eng(s, axes, n_c);
  Index const T = eng.taps();
  Eigen::Map<RowMat const> W(kernels, n_f, T);
  Eigen::Map<RowMat> GW(grad_kernels, n_f, T);
  auto const xp = eng.pad(x);
  auto const gp = eng.pad(gbar);
  auto op = eng.padded_zero();
  RowMat src_x, src_g, u, vbar, v, c;
  double dot = 0.0;
  for (Index r0 = 0; r0 < eng.rows(); r0 += eng.rows_per_block()) {
    Index const nr = std::min(eng.rows_per_block(), eng.rows() - r0);
    eng.im2col(xp, r0, nr, src_x);
    eng.im2col(gp, r0, nr, src_g);
    u.noalias() = W * src_x;
    vbar.noalias() = W * src_g;
    v.resize(n_f, u.cols());
    for (Index f = 0; f < n_f; f++) {
      auto const n = static_cast<std::size_t>(u.cols());
      std::span<double const> uf(u.row(f).data(), n);
      std::span<double> vf(v.row(f).data(), n);
      std::span<double> vb(vbar.row(f).data(), n);
      activation_forward(kind, acts[f], uf, vf);
      for (std::size_t i = 0; i < n; i++) { dot += vf[i] * vb[i]; }
      activation_backward(kind, acts[f], uf, vb, vb, grad_knots[f]); // vbar becomes ubar
    }
    GW.noalias() += v * src_g.transpose();
    GW.noalias() += vbar * src_x.transpose();
    c.noalias() = W.transpose() * vbar;
    eng.col2im_add(c, r0, nr, op);
  }
  eng.unpad_add(op, xbar);
  return dot;
}

std::vector<ImageSeries> conv_bank_apply(ImageSeries const &p, FilterBank const &bank, bool adjoint)
{
  bank.validate();
  std::vector<ImageSeries> out;
  out.reserve(static_cast<std::size_t>(bank.filters()));
  for (int b = 0; b < 4; b++) {
    if (static_cast<Index>(bank.coeffs[b].size()) != bank.n_f * bank.taps()) {
      throw DimensionError("conv_bank_apply: coefficient count does not match bank size");
    }
    for (Index f = 0; f < bank.n_f; f++) {
      ImageSeries o(p.shape);
      correlate(p.shape, kAllBanks[b], bank.n_c, bank.kernel(b, f), p.data.data(), o.data.data(), adjoint, false);
      out.push_back(std::move(o));
    }
  }
  return out;
}

} // namespace flowrecon
