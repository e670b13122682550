#include "flowrecon/container.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <random>
#include <set>

namespace flowrecon {

static_assert(std::endian::native == std::endian::little, "containers are written in native little-endian order");

char const *dtype_name(DType d)
{
  switch (d) {
  case DType::Complex64: return "complex64";
  case DType::Float32: return "float32";
  case DType::UInt8: return "uint8";
  }
  return "?";
}

namespace {

DType parse_dtype(std::string const &s)
{
  if (s == "complex64") { return DType::Complex64; }
  if (s == "float32") { return DType::Float32; }
  if (s == "uint8") { return DType::UInt8; }
  throw Error("unknown dtype " + s);
}

std::set<std::string> const kRoles{"kspace", "mask", "coils", "truth_magnitude", "truth_velocity", "segmentation", "recon"};

} // namespace

Index ArrayRecord::elements() const
{
  Index n = 1;
  for (Index d : dims) { n *= d; }
  return n;
}

void ArrayRecord::validate() const
{
  if (name.empty() || name.find_first_of("/\\.") != std::string::npos) { throw ConfigError("invalid array name '" + name + "'"); }
  if (!kRoles.contains(role)) { throw ConfigError("array " + name + " has unknown role '" + role + "'"); }
  if (axes.size() != dims.size()) { throw DimensionError("array " + name + ": axes and dims differ in length"); }
  for (Index d : dims) {
    if (d < 1) { throw DimensionError("array " + name + ": extents must be >= 1"); }
  }
  Index const n = elements();
  bool const ok = dtype == DType::UInt8 ? static_cast<Index>(bytes.size()) == n
                                        : static_cast<Index>(values.size()) == n * (dtype == DType::Complex64 ? 2 : 1);
  if (!ok) { throw DimensionError("array " + name + ": data length does not match dims"); }
}

void Container::add(ArrayRecord rec)
{
  rec.validate();
  remove(rec.name);
  arrays_.push_back(std::move(rec));
}

void Container::add_complex(std::string name, std::string role, std::vector<std::string> axes, std::vector<Index> dims,
                            std::span<Cx const> data)
{
  ArrayRecord r{std::move(name), std::move(role), DType::Complex64, std::move(axes), std::move(dims), {}, {}};
  r.values.reserve(2 * data.size());
  for (auto const &c : data) {
    r.values.push_back(static_cast<float>(c.real()));
    r.values.push_back(static_cast<float>(c.imag()));
  }
  add(std::move(r));
}

void Container::add_real(std::string name, std::string role, std::vector<std::string> axes, std::vector<Index> dims,
                         std::span<double const> data)
{
  ArrayRecord r{std::move(name), std::move(role), DType::Float32, std::move(axes), std::move(dims), {}, {}};
  r.values.assign(data.begin(), data.end());
  add(std::move(r));
}

void Container::add_mask(std::string name, std::string role, std::vector<std::string> axes, std::vector<Index> dims,
                         std::span<std::uint8_t const> data)
{
  ArrayRecord r{std::move(name), std::move(role), DType::UInt8, std::move(axes), std::move(dims), {}, {}};
  r.bytes.assign(data.begin(), data.end());
  add(std::move(r));
}

bool Container::has(std::string const &name) const
{
  return std::any_of(arrays_.begin(), arrays_.end(), [&](ArrayRecord const &a) { return a.name == name; });
}

ArrayRecord const &Container::get(std::string const &name) const
{
  for (auto const &a : arrays_) {
    if (a.name == name) { return a; }
  }
  throw Error("container has no array '" + name + "'");
}

void Container::remove(std::string const &name)
{
  std::erase_if(arrays_, [&](ArrayRecord const &a) { return a.name == name; });
}

std::vector<Cx> Container::complex_data(std::string const &name) const
{
  auto const &a = get(name);
  if (a.dtype != DType::Complex64) { throw Error("array '" + name + "' is not complex"); }
  std::vector<Cx> out(a.values.size() / 2);
  for (std::size_t i = 0; i < out.size(); i++) { out[i] = Cx{a.values[2 * i], a.values[2 * i + 1]}; }
  return out;
}

std::vector<double> Container::real_data(std::string const &name) const
{
  auto const &a = get(name);
  if (a.dtype != DType::Float32) { throw Error("array '" + name + "' is not real"); }
  return {a.values.begin(), a.values.end()};
}

std::vector<std::uint8_t> Container::mask_data(std::string const &name) const
{
  auto const &a = get(name);
  if (a.dtype != DType::UInt8) { throw Error("array '" + name + "' is not a mask"); }
  return a.bytes;
}

void Container::write(std::filesystem::path const &dir) const
{
  namespace fs = std::filesystem;
  fs::path const target = fs::absolute(dir).lexically_normal();
  fs::path const parent = target.parent_path();
  fs::create_directories(parent);
  std::random_device rd;
  fs::path const tmp = parent / ("." + target.filename().string() + ".tmp" + std::to_string(rd()));
  fs::create_directory(tmp);
  try {
    nlohmann::json manifest;
    manifest["format"] = kContainerFormat;
    manifest["attributes"] = attributes;
    manifest["arrays"] = nlohmann::json::array();
    for (auto const &a : arrays_) {
      a.validate();
      std::string const file = a.name + ".bin";
      manifest["arrays"].push_back(
        {{"name", a.name}, {"role", a.role}, {"dtype", dtype_name(a.dtype)}, {"axes", a.axes}, {"dims", a.dims}, {"file", file}});
      std::ofstream f(tmp / file, std::ios::binary);
      if (a.dtype == DType::UInt8) {
        f.write(reinterpret_cast<char const *>(a.bytes.data()), static_cast<std::streamsize>(a.bytes.size()));
      } else {
        f.write(reinterpret_cast<char const *>(a.values.data()), static_cast<std::streamsize>(a.values.size() * sizeof(float)));
      }
      if (!f) { throw Error("failed writing " + (tmp / file).string()); }
    }
    std::ofstream m(tmp / "manifest.json");
    m << manifest.dump(2) << '\n';
    if (!m) { throw Error("failed writing manifest"); }
    m.close();
    if (fs::exists(target)) { fs::remove_all(target); }
    fs::rename(tmp, target);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

Container Container::read(std::filesystem::path const &dir)
{
  std::ifstream m(dir / "manifest.json");
  if (!m) { throw Error("no container manifest in " + dir.string()); }
  nlohmann::json const manifest = nlohmann::json::parse(m);
  if (manifest.value("format", "") != kContainerFormat) {
    throw Error(dir.string() + ": unsupported container format " + manifest.value("format", "?"));
  }
  Container c;
  c.attributes = manifest.value("attributes", nlohmann::json::object());
  for (auto const &e : manifest.at("arrays")) {
    ArrayRecord r;
    r.name = e.at("name");
    r.role = e.at("role");
    r.dtype = parse_dtype(e.at("dtype"));
    r.axes = e.at("axes").get<std::vector<std::string>>();
    r.dims = e.at("dims").get<std::vector<Index>>();
    std::ifstream f(dir / e.at("file").get<std::string>(), std::ios::binary);
    if (!f) { throw Error("missing array file for " + r.name); }
    Index const n = r.elements();
    if (r.dtype == DType::UInt8) {
      r.bytes.resize(static_cast<std::size_t>(n));
      f.read(reinterpret_cast<char *>(r.bytes.data()), n);
    } else {
      r.values.resize(static_cast<std::size_t>(n * (r.dtype == DType::Complex64 ? 2 : 1)));
      f.read(reinterpret_cast<char *>(r.values.data()), static_cast<std::streamsize>(r.values.size() * sizeof(float)));
    }
    if (!f) { throw Error("truncated array file for " + r.name); }
    c.add(std::move(r));
  }
  return c;
}

} // namespace flowrecon
