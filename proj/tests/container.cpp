#include "doctest.h"
#include "testutil.hpp"

#include "flowrecon/container.hpp"

#include <filesystem>
#include <fstream>

#include <unistd.h>

using namespace flowrecon;
using namespace flowrecon::test;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(std::string const &name)
{
  return fs::temp_directory_path() / ("flowrecon_container_" + std::to_string(::getpid()) + "_" + name);
}

} // namespace

TEST_SUITE("container")
{
  TEST_CASE("arrays round trip at their stored precision")
  {
    std::mt19937_64 rng(1);
    auto img = random_image({3, 4, 2, 2}, rng);
    std::vector<double> real{0.5, -1.25, 3.0, 1e-3, 7.0, 8.0};
    std::vector<std::uint8_t> mask{1, 0, 1, 1};
    Container c;
    c.attributes["venc"] = 150.0;
    c.add_complex("kspace_0", "kspace", {"t", "z", "y", "x"}, {2, 2, 4, 3}, img.data);
    c.add_real("mag", "truth_magnitude", {"a", "b"}, {2, 3}, real);
    c.add_mask("mask", "mask", {"kz", "ky"}, {2, 2}, mask);
    auto const dir = temp_dir("rt");
    c.write(dir);
    auto back = Container::read(dir);
    CHECK(back.attributes["venc"] == 150.0);
    REQUIRE(back.arrays().size() == 3);
    auto cx = back.complex_data("kspace_0");
    REQUIRE(cx.size() == img.data.size());
    for (std::size_t i = 0; i < cx.size(); i++) {
      CHECK(cx[i].real() == double(float(img.data[i].real())));
      CHECK(cx[i].imag() == double(float(img.data[i].imag())));
    }
    auto re = back.real_data("mag");
    for (std::size_t i = 0; i < re.size(); i++) { CHECK(re[i] == double(float(real[i]))); }
    CHECK(back.mask_data("mask") == mask);
    CHECK(back.get("mag").dims == std::vector<Index>{2, 3});
    CHECK(back.get("kspace_0").axes == std::vector<std::string>{"t", "z", "y", "x"});
    CHECK_THROWS_AS(back.real_data("mask"), Error);
    CHECK_THROWS_AS(back.get("absent"), Error);

    // overwriting replaces the directory as a whole
    Container d;
    d.add_mask("only", "segmentation", {"v"}, {1}, std::vector<std::uint8_t>{1});
    d.write(dir);
    auto again = Container::read(dir);
    CHECK(again.arrays().size() == 1);
    CHECK_FALSE(fs::exists(dir / "mag.bin"));
    for (auto const &e : fs::directory_iterator(dir.parent_path())) {
      CHECK(e.path().filename().string().find(".tmp") == std::string::npos);
    }
    fs::remove_all(dir);
  }

  TEST_CASE("invalid arrays are rejected")
  {
    Container c;
    std::vector<double> v(4, 1.0);
    CHECK_THROWS_AS(c.add_real("a", "not_a_role", {"x"}, {4}, v), ConfigError);
    CHECK_THROWS_AS(c.add_real("../a", "recon", {"x"}, {4}, v), ConfigError);
    CHECK_THROWS_AS(c.add_real("a", "recon", {"x"}, {5}, v), DimensionError);
    CHECK_THROWS_AS(c.add_real("a", "recon", {"x", "y"}, {4}, v), DimensionError);
    c.add_real("a", "recon", {"x"}, {4}, v);
    c.add_real("a", "recon", {"x", "y"}, {2, 2}, v);
    CHECK(c.arrays().size() == 1);
    CHECK(c.get("a").dims.size() == 2);
  }

  TEST_CASE("damaged containers fail to load")
  {
    auto const dir = temp_dir("bad");
    CHECK_THROWS_AS(Container::read(dir), Error);
    Container c;
    c.add_real("a", "recon", {"x"}, {4}, std::vector<double>(4, 2.0));
    c.write(dir);
    fs::resize_file(dir / "a.bin", 8);
    CHECK_THROWS_AS(Container::read(dir), Error);
    fs::remove(dir / "a.bin");
    CHECK_THROWS_AS(Container::read(dir), Error);
    {
      std::ofstream m(dir / "manifest.json");
      m << R"({"format": "other/2", "arrays": []})";
    }
    CHECK_THROWS_AS(Container::read(dir), Error);
    fs::remove_all(dir);
  }
}
