#include <gtest/gtest.h>

#include <random>
#include <string>

#include "m2mtraffic/imaging.hpp"
#include "oracles.hpp"

using namespace m2mtraffic::imaging;

TEST(Frame, RejectsBadDimensions) {
  EXPECT_THROW(Frame(0, 4), std::invalid_argument);
  EXPECT_THROW(Frame(4, -1), std::invalid_argument);
  EXPECT_THROW(Frame(2, 2, std::vector<std::uint8_t>(3)), std::invalid_argument);
  EXPECT_EQ(Frame(3, 2).size(), 6u);
}

TEST(Grayscale, Bt601Weights) {
  RgbFrame in(3, 1);
  in.at(0, 0) = {255, 255, 255};
  in.at(1, 0) = {0, 0, 0};
  in.at(2, 0) = {255, 0, 0};
  const auto g = to_grayscale(in);
  EXPECT_EQ(g.at(0, 0), 255);
  EXPECT_EQ(g.at(1, 0), 0);
  EXPECT_EQ(g.at(2, 0), 76);
  EXPECT_EQ(g.width(), 3);
  EXPECT_EQ(g.height(), 1);
}

TEST(Pgm, CanonicalBytes) {
  Frame f(1, 1, 7);
  const auto bytes = write_pgm(f);
  const std::string expected = std::string("P5\n1 1\n255\n") + '\x07';
  EXPECT_EQ(std::string(bytes.begin(), bytes.end()), expected);
  EXPECT_EQ(write_pgm(f), write_pgm(Frame(1, 1, 7)));
}

TEST(Pgm, RoundTripRandomFrames) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 40);
  for (int i = 0; i < 200; ++i) {
    const auto f = oracle::random_frame(rng, dim(rng), dim(rng));
    const auto bytes = write_pgm(f);
    EXPECT_EQ(read_pgm(std::span<const std::uint8_t>(bytes)), f);
  }
}

TEST(Pgm, ParseErrors) {
  auto code_of = [](const std::string& s) {
    try {
      read_pgm(s);
    } catch (const PgmError& e) {
      return e.code();
    }
    ADD_FAILURE() << "accepted: " << s;
    return PgmErrorCode::MalformedHeader;
  };
  EXPECT_EQ(code_of("P6\n2 2\n255\n0000"), PgmErrorCode::UnsupportedMagic);
  EXPECT_EQ(code_of("P5\n2 2\n255\nabc"), PgmErrorCode::Truncated);
  EXPECT_EQ(code_of("P5 2 2 255\nabc"), PgmErrorCode::Truncated);
  EXPECT_EQ(code_of("P5\n2 2\n65535\nabcd"), PgmErrorCode::UnsupportedMaxval);
  EXPECT_EQ(code_of("P5\n99999999 2\n255\n"), PgmErrorCode::DimensionOverflow);
  EXPECT_EQ(code_of("P5\n2 x\n255\nabcd"), PgmErrorCode::MalformedHeader);
  EXPECT_EQ(code_of("P5\n1 1\n255\nab"), PgmErrorCode::TrailingData);
  EXPECT_STREQ(PgmError(PgmErrorCode::UnsupportedMagic).what(), "unsupported magic");
}

TEST(Pgm, AcceptsHeaderComments) {
  const std::string bytes = std::string("P5\n# made by hand\n2 1\n255\n") + "\x01\x02";
  const auto f = read_pgm(bytes);
  EXPECT_EQ(f.at(0, 0), 1);
  EXPECT_EQ(f.at(1, 0), 2);
}

TEST(Scene, UniformBackgroundBeforeSpawn) {
  SceneConfig cfg;
  cfg.width = 16;
  cfg.height = 12;
  cfg.background_level = 40;
  cfg.vehicles.push_back({10, 1.0, 2, 2, 4, 4, 200});
  const auto f = render_scene(cfg, 5);
  for (auto v : f.pixels()) EXPECT_EQ(v, 40);
}

TEST(Scene, VehicleTopFollowsSpeed) {
  SceneConfig cfg;
  cfg.width = 40;
  cfg.height = 60;
  cfg.background_level = 40;
  cfg.vehicles.push_back({0, 2.0, 5, 10, 6, 3, 220});
  const auto f = render_scene(cfg, 5);
  // Top edge at y = 10 + 2 * 5 = 20.
  EXPECT_EQ(f.at(5, 19), 40);
  EXPECT_EQ(f.at(5, 20), 220);
  EXPECT_EQ(f.at(10, 22), 220);
  EXPECT_EQ(f.at(10, 23), 40);
  EXPECT_EQ(f.at(11, 21), 40);
}

TEST(Scene, VehiclePastBottomIsNotDrawn) {
  SceneConfig cfg;
  cfg.width = 10;
  cfg.height = 10;
  cfg.vehicles.push_back({0, 5.0, 0, 0, 4, 4, 200});
  const auto f = render_scene(cfg, 3);
  for (auto v : f.pixels()) EXPECT_EQ(v, cfg.background_level);
  // Partially visible vehicles are clipped, not dropped.
  const auto partial = render_scene(cfg, 1);
  EXPECT_EQ(partial.at(0, 5), 200);
  EXPECT_EQ(partial.at(0, 8), 200);
}

TEST(Scene, DeterministicAndBoundedNoise) {
  SceneConfig cfg;
  cfg.width = 32;
  cfg.height = 24;
  cfg.background_level = 100;
  cfg.noise_amplitude = 10;
  cfg.noise_seed = 99;
  for (std::int64_t k = 0; k < 5; ++k) {
    const auto a = render_scene(cfg, k);
    EXPECT_EQ(a, render_scene(cfg, k));
    for (auto v : a.pixels()) {
      EXPECT_GE(v, 90);
      EXPECT_LE(v, 110);
    }
  }
  EXPECT_NE(render_scene(cfg, 0), render_scene(cfg, 1));
  auto other = cfg;
  other.noise_seed = 100;
  EXPECT_NE(render_scene(cfg, 0), render_scene(other, 0));
}

TEST(Scene, NoiseFreeVehicleCentroidMatchesRectangle) {
  SceneConfig cfg;
  cfg.width = 64;
  cfg.height = 64;
  cfg.background_level = 0;
  cfg.vehicles.push_back({0, 1.5, 7, 3, 10, 6, 200});
  for (std::int64_t k = 0; k < 20; ++k) {
    const auto f = render_scene(cfg, k);
    double sx = 0, sy = 0, n = 0;
    for (int y = 0; y < f.height(); ++y) {
      for (int x = 0; x < f.width(); ++x) {
        if (f.at(x, y) == 0) continue;
        sx += x + 0.5;
        sy += y + 0.5;
        ++n;
      }
    }
    const double top = std::floor(vehicle_top(cfg.vehicles[0], k) + 0.5);
    EXPECT_DOUBLE_EQ(sx / n, 7 + 5.0);
    EXPECT_DOUBLE_EQ(sy / n, top + 3.0);
  }
}

TEST(Scene, ValidationRules) {
  SceneConfig cfg;
  cfg.background_level = 40;
  cfg.vehicles.push_back({0, 1.0, 0, 0, 4, 4, 200});
  EXPECT_NO_THROW(validate(cfg));
  auto low_contrast = cfg;
  low_contrast.vehicles[0].intensity = 80;
  EXPECT_THROW(validate(low_contrast), std::invalid_argument);
  auto noisy = cfg;
  noisy.noise_amplitude = 65;
  EXPECT_THROW(validate(noisy), std::invalid_argument);
  auto thin = cfg;
  thin.vehicles[0].h = 1;
  EXPECT_THROW(validate(thin), std::invalid_argument);
  auto no_fps = cfg;
  no_fps.fps = 0;
  EXPECT_THROW(validate(no_fps), std::invalid_argument);
}
