#pragma once

#include "types.hpp"

#include "json.hpp"

#include <filesystem>
#include <span>
#include <string>

namespace flowrecon {

inline constexpr char const *kContainerFormat = "flowrecon-container/1";

enum class DType
{
  Complex64, ///< float32 (re, im) pairs
  Float32,
  UInt8
};

char const *dtype_name(DType d);

/// One array of a dataset container. Values are held in their on-disk precision.
struct ArrayRecord
{
  std::string name;
  std::string role; ///< kspace, mask, coils, truth_magnitude, truth_velocity, segmentation or recon
  DType dtype = DType::Float32;
  std::vector<std::string> axes; ///< slowest to fastest
  std::vector<Index> dims;
  std::vector<float> values;         ///< Complex64 (interleaved) and Float32
  std::vector<std::uint8_t> bytes;   ///< UInt8

  Index elements() const;
  void validate() const;
};

/// Directory with manifest.json and one little-endian binary file per array. Writes go to a
/// temporary sibling directory that is renamed into place, so a container is never partial.
class Container
{
public:
  nlohmann::json attributes = nlohmann::json::object();

  void add_complex(std::string name, std::string role, std::vector<std::string> axes, std::vector<Index> dims,
                   std::span<Cx const> data);
  void add_real(std::string name, std::string role, std::vector<std::string> axes, std::vector<Index> dims,
                std::span<double const> data);
  void add_mask(std::string name, std::string role, std::vector<std::string> axes, std::vector<Index> dims,
                std::span<std::uint8_t const> data);

  bool has(std::string const &name) const;
  ArrayRecord const &get(std::string const &name) const;
  void remove(std::string const &name);
  std::vector<ArrayRecord> const &arrays() const { return arrays_; }

  std::vector<Cx> complex_data(std::string const &name) const;
  std::vector<double> real_data(std::string const &name) const;
  std::vector<std::uint8_t> mask_data(std::string const &name) const;

  void write(std::filesystem::path const &dir) const;
  static Container read(std::filesystem::path const &dir);

private:
  void add(ArrayRecord rec);
  std::vector<ArrayRecord> arrays_;
};

} // namespace flowrecon
