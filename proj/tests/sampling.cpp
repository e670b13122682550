#include "doctest.h"
#include "testutil.hpp"

#include "flowrecon/sampling.hpp"

using namespace flowrecon;
using namespace flowrecon::test;

TEST_SUITE("sampling")
{
  TEST_CASE("measured acceleration counts entries")
  {
    auto full = MaskSeries::full(8, 6, 4);
    CHECK(measured_acceleration(full).R == 1.0);
    CHECK(measured_acceleration(full).mean_rate == 1.0);
    MaskSeries half(8, 6, 4);
    for (std::size_t i = 0; i < half.mask.size(); i += 2) { half.mask[i] = 1; }
    CHECK(measured_acceleration(half).R == 2.0);
    CHECK(mean_sampling_rate(half) == 0.5);
    CHECK_THROWS_AS(measured_acceleration(MaskSeries(4, 4, 2)), ConfigError);
  }

  TEST_CASE("every phase samples the centre")
  {
    for (std::uint64_t seed = 0; seed < 5; seed++) {
      SamplingConfig cfg{32, 24, 8, 1.5, 111.246, seed};
      auto m = generate_pattern(cfg);
      CHECK_NOTHROW(check_center_sampled(m));
    }
  }

  TEST_CASE("patterns are deterministic for a seed")
  {
    SamplingConfig cfg{32, 32, 8, 2.0, 111.246, 42};
    CHECK(generate_pattern(cfg).mask == generate_pattern(cfg).mask);
    cfg.seed = 43;
    SamplingConfig other = cfg;
    other.seed = 42;
    CHECK(generate_pattern(cfg).mask != generate_pattern(other).mask);
  }

  TEST_CASE("adding spokes never removes samples")
  {
    SamplingConfig cfg{32, 32, 8, 1.0, 111.246, 7};
    auto prev = generate_pattern(cfg);
    for (double spp : {1.5, 2.0, 3.25, 5.0, 8.0}) {
      cfg.spokes_per_phase = spp;
      auto next = generate_pattern(cfg);
      for (std::size_t i = 0; i < prev.mask.size(); i++) {
        if (prev.mask[i]) { CHECK(next.mask[i] == 1); }
      }
      prev = next;
    }
  }

  TEST_CASE("many spokes saturate the grid")
  {
    SamplingConfig cfg{16, 16, 2, 400.0, 111.246, 1};
    CHECK(measured_acceleration(generate_pattern(cfg)).R == doctest::Approx(1.0).epsilon(0.01));
  }

  TEST_CASE("halving the spoke count roughly doubles R")
  {
    SamplingConfig cfg{64, 64, 8, 4.0, 111.246, 3};
    double const r4 = measured_acceleration(generate_pattern(cfg)).R;
    cfg.spokes_per_phase = 2.0;
    double const r2 = measured_acceleration(generate_pattern(cfg)).R;
    CHECK(r2 / r4 == doctest::Approx(2.0).epsilon(0.15));
  }

  TEST_CASE("target acceleration is met within 5%")
  {
    for (double target : {6.0, 10.0, 14.0, 22.0}) {
      SamplingConfig cfg{32, 32, 8, 1.0, 111.246, 11};
      auto m = generate_for_acceleration(cfg, target);
      double const r = measured_acceleration(m).R;
      CHECK(r >= 0.95 * target);
      CHECK(r <= 1.05 * target);
      CHECK_NOTHROW(check_center_sampled(m));
    }
    CHECK_THROWS_AS(generate_for_acceleration(SamplingConfig{}, 0.5), ConfigError);
  }

  TEST_CASE("config validation")
  {
    CHECK_THROWS_AS(generate_pattern(SamplingConfig{8, 8, 2, 0.5}), ConfigError);
    CHECK_THROWS_AS(generate_pattern(SamplingConfig{8, 8, 2, 1.0, 360.0}), ConfigError);
    CHECK_THROWS_AS(generate_pattern(SamplingConfig{8, 8, 2, 1.0, 0.0}), ConfigError);
  }

  TEST_CASE("retrospective undersampling zero-fills and counts")
  {
    std::mt19937_64 rng(1);
    VolumeShape const s{6, 16, 16, 4};
    Index const nc = 3;
    auto full = random_kspace(s, nc, MaskSeries::full(16, 16, 4), false, rng);
    auto ident = retrospective_undersample(full, MaskSeries::full(16, 16, 4));
    CHECK(ident.samples == full.samples);

    auto m = generate_pattern(SamplingConfig{16, 16, 4, 2.0, 111.246, 5});
    auto u = retrospective_undersample(full, m);
    Index nonzero = 0;
    for (auto const &v : u.samples) { nonzero += v != Cx{0.0, 0.0}; }
    CHECK(nonzero == nc * s.nx * m.count());

    CHECK_THROWS_AS(retrospective_undersample(full, MaskSeries(16, 16, 4)), ConfigError);
    CHECK_THROWS_AS(retrospective_undersample(full, MaskSeries::full(16, 8, 4)), DimensionError);
  }
}
