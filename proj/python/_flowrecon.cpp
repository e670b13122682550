#include "flowrecon/cli.hpp"
#include "flowrecon/cs_llr.hpp"
#include "flowrecon/metrics.hpp"
#include "flowrecon/phantom.hpp"
#include "flowrecon/pipeline.hpp"
#include "flowrecon/sampling.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace flowrecon;

namespace {

using CxArray = py::array_t<Cx, py::array::c_style | py::array::forcecast>;
using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

void expect_ndim(py::array const &a, py::ssize_t n, char const *what)
{
  if (a.ndim() != n) {
    throw DimensionError(std::string(what) + " must have " + std::to_string(n) + " dimensions, got " + std::to_string(a.ndim()));
  }
}

template <typename T>
py::array_t<T> to_array(std::vector<T> const &v, std::vector<py::ssize_t> shape)
{
  py::array_t<T> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// Arrays follow the in-memory layouts: images (t, z, y, x), k-space (coil, t, kz, ky, kx),
// coils (coil, z, y, x) and masks (t, kz, ky).
ImageSeries image_from(CxArray const &a)
{
  expect_ndim(a, 4, "image");
  ImageSeries p({a.shape(3), a.shape(2), a.shape(1), a.shape(0)});
  std::copy(a.data(), a.data() + a.size(), p.data.begin());
  return p;
}

CxArray image_to(ImageSeries const &p)
{
  auto const &s = p.shape;
  return to_array(p.data, {s.nt, s.nz, s.ny, s.nx});
}

CoilSet coils_from(CxArray const &a)
{
  expect_ndim(a, 4, "coils");
  CoilSet c(a.shape(3), a.shape(2), a.shape(1), a.shape(0));
  std::copy(a.data(), a.data() + a.size(), c.maps.begin());
  return c;
}

MaskSeries mask_from(MaskArray const &a)
{
  expect_ndim(a, 3, "mask");
  MaskSeries m(a.shape(2), a.shape(1), a.shape(0));
  std::copy(a.data(), a.data() + a.size(), m.mask.begin());
  return m;
}

MaskArray mask_to(MaskSeries const &m) { return to_array(m.mask, {m.nt, m.nz, m.ny}); }

KSpaceData kspace_from(CxArray const &a, MaskArray const &mask, bool hybrid)
{
  expect_ndim(a, 5, "kspace");
  KSpaceData b({a.shape(4), a.shape(3), a.shape(2), a.shape(1)}, a.shape(0), mask_from(mask), hybrid);
  std::copy(a.data(), a.data() + a.size(), b.samples.begin());
  b.validate();
  return b;
}

CxArray kspace_to(KSpaceData const &b)
{
  auto const &s = b.shape;
  return to_array(b.samples, {b.nc, s.nt, s.nz, s.ny, s.nx});
}

std::vector<double> to_vector(RealArray const &a) { return {a.data(), a.data() + a.size()}; }

RealField field_from(RealArray const &a)
{
  expect_ndim(a, 4, "field");
  RealField f({a.shape(3), a.shape(2), a.shape(1), a.shape(0)});
  std::copy(a.data(), a.data() + a.size(), f.data.begin());
  return f;
}

RealArray velocity_to(VelocityField const &v)
{
  auto const &s = v.shape;
  RealArray out({py::ssize_t(3), s.nt, s.nz, s.ny, s.nx});
  for (int c = 0; c < 3; c++) { std::copy(v.v[c].begin(), v.v[c].end(), out.mutable_data() + c * s.size()); }
  return out;
}

py::dict phantom(Index nx, Index ny, Index nz, Index nt, double radius, double peak_velocity, double venc, std::uint64_t seed)
{
  PhantomConfig cfg;
  cfg.nx = nx;
  cfg.ny = ny;
  cfg.nz = nz;
  cfg.nt = nt;
  cfg.tube_radius = radius;
  cfg.peak_velocity = peak_velocity;
  cfg.venc = venc;
  cfg.seed = seed;
  auto const t = make_phantom(cfg);
  auto const s = t.shape();
  py::dict d;
  d["magnitude"] = to_array(t.magnitude.data, {s.nt, s.nz, s.ny, s.nx});
  d["velocity"] = velocity_to(t.velocity);
  d["segmentation"] = to_array(t.segmentation, {s.nz, s.ny, s.nx});
  d["waveform"] = t.waveform;
  d["peak_phase"] = t.peak_phase;
  d["radius"] = t.radius;
  d["voxel_size_cm"] = t.voxel_size_cm;
  py::list images;
  for (auto const &img : truth_images(t)) { images.append(image_to(img)); }
  d["images"] = images;
  return d;
}

py::tuple golden_angle_mask(Index ny, Index nz, Index nt, double R, std::uint64_t seed)
{
  SamplingConfig sc;
  sc.ny = ny;
  sc.nz = nz;
  sc.nt = nt;
  sc.seed = seed;
  auto const m = generate_for_acceleration(sc, R);
  return py::make_tuple(mask_to(m), measured_acceleration(m).R);
}

CxArray reconstruct_py(CxArray const &kspace, CxArray const &coils, MaskArray const &mask, bool hybrid,
                       std::string const &method, std::optional<std::string> const &weights, double lambda, Index iters,
                       std::uint64_t seed)
{
  ReconOptions ro;
  ro.method = parse_method(method);
  ro.llr.lambda = lambda;
  ro.llr.max_iters = iters;
  ro.llr.seed = seed;
  ro.seed = seed;
  if (weights) { ro.params = load_params(*weights); }
  auto const b = kspace_from(kspace, mask, hybrid);
  auto const c = coils_from(coils);
  ImageSeries img;
  {
    py::gil_scoped_release release;
    img = reconstruct(b, c, ro);
  }
  return image_to(img);
}

int cli(std::vector<std::string> args)
{
  args.insert(args.begin(), "flowrecon");
  std::vector<char const *> argv;
  for (auto const &a : args) { argv.push_back(a.c_str()); }
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

} // namespace

PYBIND11_MODULE(_flowrecon, m)
{
  m.doc() = "4D flow MRI simulation and reconstruction";
  m.attr("__version__") = FLOWRECON_VERSION;

  auto base = py::register_exception<Error>(m, "FlowreconError", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.def("phantom", &phantom, py::arg("nx") = 16, py::arg("ny") = 32, py::arg("nz") = 32, py::arg("nt") = 8,
        py::arg("radius") = 4.0, py::arg("peak_velocity") = 100.0, py::arg("venc") = 150.0, py::arg("seed") = 1,
        "Noise-free flow phantom: magnitude, velocity, segmentation and the four encoded images.");
  m.def(
    "coils",
    [](Index nx, Index ny, Index nz, Index nc, std::uint64_t seed) {
      auto const c = make_coils(nx, ny, nz, nc, seed);
      return to_array(c.maps, {nc, nz, ny, nx});
    },
    py::arg("nx"), py::arg("ny"), py::arg("nz"), py::arg("nc"), py::arg("seed") = 0,
    "Smooth coil maps with unit root-sum-of-squares, shape (coil, z, y, x).");
  m.def("golden_angle_mask", &golden_angle_mask, py::arg("ny"), py::arg("nz"), py::arg("nt"), py::arg("R"),
        py::arg("seed") = 0, "Golden-angle mask of shape (t, kz, ky) and its measured acceleration.");
  m.def(
    "forward_encode",
    [](CxArray const &image, CxArray const &coils, MaskArray const &mask, bool hybrid) {
      return kspace_to(forward_encode(image_from(image), coils_from(coils), mask_from(mask), hybrid));
    },
    py::arg("image"), py::arg("coils"), py::arg("mask"), py::arg("hybrid") = false);
  m.def(
    "adjoint_encode",
    [](CxArray const &kspace, CxArray const &coils, MaskArray const &mask, bool hybrid) {
      return image_to(adjoint_encode(kspace_from(kspace, mask, hybrid), coils_from(coils)));
    },
    py::arg("kspace"), py::arg("coils"), py::arg("mask"), py::arg("hybrid") = false);
  m.def("reconstruct", &reconstruct_py, py::arg("kspace"), py::arg("coils"), py::arg("mask"), py::arg("hybrid") = false,
        py::arg("method") = "zerofill", py::arg("weights") = py::none(), py::arg("lam") = 2.06, py::arg("iters") = 80,
        py::arg("seed") = 0, "Reconstructs one encoding with zerofill, csllr, flowvn or hamvn.");
  m.def(
    "velocity_decode",
    [](std::vector<CxArray> const &images, double venc) {
      if (images.size() != 4) { throw DimensionError("velocity_decode needs four encoded images"); }
      EncodedImages e;
      for (int i = 0; i < 4; i++) { e[i] = image_from(images[i]); }
      return velocity_to(velocity_decode(e, VelocityEncoding{venc}));
    },
    py::arg("images"), py::arg("venc"), "Velocities (3, t, z, y, x) in cm/s from the four encodings.");
  m.def(
    "svt",
    [](Eigen::MatrixXcd const &a, double tau) { return Eigen::MatrixXcd(svt(a, tau)); }, py::arg("a"), py::arg("tau"));

  m.def(
    "nrmse", [](RealArray const &a, RealArray const &ref) { return nrmse(to_vector(a), to_vector(ref)); }, py::arg("a"),
    py::arg("ref"));
  m.def(
    "relative_error", [](RealArray const &a, RealArray const &ref) { return relative_error(to_vector(a), to_vector(ref)); },
    py::arg("a"), py::arg("ref"));
  m.def(
    "ssim", [](RealArray const &a, RealArray const &b, double sigma) { return ssim(field_from(a), field_from(b), sigma); },
    py::arg("a"), py::arg("b"), py::arg("sigma") = 1.5);
  m.def(
    "bland_altman",
    [](RealArray const &x, RealArray const &y) {
      auto const r = bland_altman(to_vector(x), to_vector(y));
      return py::dict(py::arg("mean_diff") = r.mean_diff, py::arg("sd_diff") = r.sd_diff, py::arg("lower") = r.lower,
                      py::arg("upper") = r.upper);
    },
    py::arg("x"), py::arg("y"));
  m.def(
    "linreg_corr",
    [](RealArray const &x, RealArray const &y) {
      auto const f = linreg_corr(to_vector(x), to_vector(y));
      return py::make_tuple(f.a, f.b, f.r);
    },
    py::arg("x"), py::arg("y"), "Slope, intercept and Pearson r of y = a x + b.");

  m.def(
    "parameter_count",
    [](std::string const &variant) {
      if (variant != "flowvn" && variant != "hamvn") { throw ConfigError("variant must be flowvn or hamvn"); }
      auto const cfg = variant == "flowvn" ? NetworkConfig::flowvn() : NetworkConfig::hamvn();
      return NetworkParams::identity(cfg).parameter_count();
    },
    py::arg("variant"));
  m.def("cli", &cli, py::arg("args"), "Runs the command-line driver in-process and returns its exit code.");
}
