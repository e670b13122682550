#include "flowrecon/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace flowrecon {

namespace {

// FFTW's planner is not reentrant; executing an existing plan on new arrays is.
std::mutex &planner_mutex()
{
  static std::mutex m;
  return m;
}

using PlanKey = std::tuple<Index, Index, Index, int, int>;

fftw_plan get_plan(Index nx, Index ny, Index nz, FftAxes axes, int sign)
{
  static std::map<PlanKey, fftw_plan> cache;
  std::lock_guard<std::mutex> lock(planner_mutex());
  PlanKey const key{nx, ny, nz, static_cast<int>(axes), sign};
  if (auto it = cache.find(key); it != cache.end()) { return it->second; }

  Index const n = nx * ny * nz;
  auto *buf = fftw_alloc_complex(static_cast<std::size_t>(n));
  unsigned const flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  fftw_plan p = nullptr;
  switch (axes) {
  case FftAxes::XYZ: p = fftw_plan_dft_3d(int(nz), int(ny), int(nx), buf, buf, sign, flags); break;
  case FftAxes::YZ: {
    int dims[2] = {int(nz), int(ny)};
    p = fftw_plan_many_dft(2, dims, int(nx), buf, nullptr, int(nx), 1, buf, nullptr, int(nx), 1, sign, flags);
    break;
  }
  case FftAxes::X: {
    int dims[1] = {int(nx)};
    p = fftw_plan_many_dft(1, dims, int(ny * nz), buf, nullptr, 1, int(nx), buf, nullptr, 1, int(nx), sign, flags);
    break;
  }
  }
  fftw_free(buf);
  if (!p) { throw Error("FFTW failed to create a plan"); }
  cache.emplace(key, p);
  return p;
}

std::vector<Index> identity_table(Index n)
{
  std::vector<Index> t(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; i++) { t[i] = i; }
  return t;
}

// gather[k] = (k + s) mod n
std::vector<Index> roll_table(Index n, Index s)
{
  std::vector<Index> t(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; k++) { t[k] = ((k + s) % n + n) % n; }
  return t;
}

thread_local std::vector<Cx> scratch;

} // namespace

CenteredFft::CenteredFft(Index nx, Index ny, Index nz, FftAxes axes)
  : nx_{nx}
  , ny_{ny}
  , nz_{nz}
  , axes_{axes}
{
  if (nx < 1 || ny < 1 || nz < 1) { throw DimensionError("FFT extents must be >= 1"); }
  plan_fwd_ = get_plan(nx, ny, nz, axes, FFTW_FORWARD);
  plan_inv_ = get_plan(nx, ny, nz, axes, FFTW_BACKWARD);

  bool const tx = axes == FftAxes::XYZ || axes == FftAxes::X;
  bool const tyz = axes == FftAxes::XYZ || axes == FftAxes::YZ;
  Index n = 1;
  if (tx) { n *= nx; }
  if (tyz) { n *= ny * nz; }
  scale_ = 1.0 / std::sqrt(double(n));

  shift_x_ = tx ? roll_table(nx, nx / 2) : identity_table(nx);
  unshift_x_ = tx ? roll_table(nx, -(nx / 2)) : identity_table(nx);
  shift_y_ = tyz ? roll_table(ny, ny / 2) : identity_table(ny);
  unshift_y_ = tyz ? roll_table(ny, -(ny / 2)) : identity_table(ny);
  shift_z_ = tyz ? roll_table(nz, nz / 2) : identity_table(nz);
  unshift_z_ = tyz ? roll_table(nz, -(nz / 2)) : identity_table(nz);
}

void CenteredFft::forward(Cx *frame) const { run(frame, true); }
void CenteredFft::inverse(Cx *frame) const { run(frame, false); }

void CenteredFft::run(Cx *frame, bool fwd) const
{
  Index const n = frame_size();
  if (static_cast<Index>(scratch.size()) < n) { scratch.resize(static_cast<std::size_t>(n)); }
  Cx *buf = scratch.data();

  // ifftshift into scratch
  for (Index z = 0; z < nz_; z++) {
    for (Index y = 0; y < ny_; y++) {
      Cx const *src = frame + (shift_z_[z] * ny_ + shift_y_[y]) * nx_;
      Cx *dst = buf + (z * ny_ + y) * nx_;
      for (Index x = 0; x < nx_; x++) { dst[x] = src[shift_x_[x]]; }
    }
  }

  auto *fb = reinterpret_cast<fftw_complex *>(buf);
  fftw_execute_dft(static_cast<fftw_plan>(fwd ? plan_fwd_ : plan_inv_), fb, fb);

  // fftshift back into the frame with orthonormal scaling
  for (Index z = 0; z < nz_; z++) {
    for (Index y = 0; y < ny_; y++) {
      Cx const *src = buf + (unshift_z_[z] * ny_ + unshift_y_[y]) * nx_;
      Cx *dst = frame + (z * ny_ + y) * nx_;
      for (Index x = 0; x < nx_; x++) { dst[x] = src[unshift_x_[x]] * scale_; }
    }
  }
}

} // namespace flowrecon
