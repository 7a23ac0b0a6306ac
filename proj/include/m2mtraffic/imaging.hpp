#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace m2mtraffic::imaging {

// 8-bit grayscale raster, row-major.
class Frame {
 public:
  Frame(int width, int height, std::uint8_t fill = 0)
      : Frame(width, height, std::vector<std::uint8_t>(checked_area(width, height), fill)) {}

  Frame(int width, int height, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (pixels_.size() != checked_area(width, height)) {
      throw std::invalid_argument("frame buffer length does not match dimensions");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }

  std::uint8_t at(int x, int y) const { return pixels_[index(x, y)]; }
  std::uint8_t& at(int x, int y) { return pixels_[index(x, y)]; }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }

  bool operator==(const Frame&) const = default;

 private:
  static std::size_t checked_area(int width, int height) {
    if (width < 1 || height < 1) {
      throw std::invalid_argument("frame dimensions must be positive");
    }
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

class RgbFrame {
 public:
  RgbFrame(int width, int height, Rgb fill = {})
      : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw std::invalid_argument("frame dimensions must be positive");
    }
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  Rgb at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  Rgb& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const Rgb> pixels() const { return pixels_; }

 private:
  int width_;
  int height_;
  std::vector<Rgb> pixels_;
};

// BT.601 luma, rounded to nearest.
inline std::uint8_t luma(Rgb p) {
  const double y = 0.299 * p.r + 0.587 * p.g + 0.114 * p.b;
  return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

inline Frame to_grayscale(const RgbFrame& in) {
  Frame out(in.width(), in.height());
  auto src = in.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = luma(src[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Binary PGM (P5, maxval 255)

enum class PgmErrorCode {
  UnsupportedMagic,
  MalformedHeader,
  UnsupportedMaxval,
  DimensionOverflow,
  Truncated,
  TrailingData,
};

inline const char* to_string(PgmErrorCode code) {
  switch (code) {
    case PgmErrorCode::UnsupportedMagic: return "unsupported magic";
    case PgmErrorCode::MalformedHeader: return "malformed header";
    case PgmErrorCode::UnsupportedMaxval: return "unsupported maxval";
    case PgmErrorCode::DimensionOverflow: return "dimension overflow";
    case PgmErrorCode::Truncated: return "truncated";
    case PgmErrorCode::TrailingData: return "trailing data";
  }
  return "unknown";
}

class PgmError : public std::runtime_error {
 public:
  explicit PgmError(PgmErrorCode code) : std::runtime_error(to_string(code)), code_(code) {}
  PgmErrorCode code() const { return code_; }

 private:
  PgmErrorCode code_;
};

// Largest accepted side length; keeps width*height well inside size_t and int.
inline constexpr std::uint64_t kMaxPgmSide = 1u << 15;

namespace detail {

inline bool is_pgm_space(std::uint8_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

class PgmHeaderReader {
 public:
  explicit PgmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_pgm_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::uint64_t read_uint() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw PgmError(PgmErrorCode::Truncated);
    if (bytes_[pos_] < '0' || bytes_[pos_] > '9') throw PgmError(PgmErrorCode::MalformedHeader);
    std::uint64_t v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1ull << 40)) throw PgmError(PgmErrorCode::DimensionOverflow);
      ++pos_;
    }
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }
  std::uint8_t peek() const { return bytes_[pos_]; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Frame read_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) throw PgmError(PgmErrorCode::Truncated);
  if (bytes[0] != 'P' || bytes[1] != '5') throw PgmError(PgmErrorCode::UnsupportedMagic);

  detail::PgmHeaderReader reader(bytes.subspan(0));
  reader.advance();
  reader.advance();
  if (!reader.at_end() && !detail::is_pgm_space(reader.peek()) && reader.peek() != '#') {
    throw PgmError(PgmErrorCode::UnsupportedMagic);
  }
  const std::uint64_t width = reader.read_uint();
  const std::uint64_t height = reader.read_uint();
  const std::uint64_t maxval = reader.read_uint();
  if (width == 0 || height == 0) throw PgmError(PgmErrorCode::MalformedHeader);
  if (width > kMaxPgmSide || height > kMaxPgmSide) throw PgmError(PgmErrorCode::DimensionOverflow);
  if (maxval != 255) throw PgmError(PgmErrorCode::UnsupportedMaxval);
  // Exactly one whitespace byte separates the header from the raster.
  if (reader.at_end()) throw PgmError(PgmErrorCode::Truncated);
  if (!detail::is_pgm_space(reader.peek())) throw PgmError(PgmErrorCode::MalformedHeader);
  reader.advance();

  const std::size_t area = static_cast<std::size_t>(width * height);
  const std::size_t available = bytes.size() - reader.pos();
  if (available < area) throw PgmError(PgmErrorCode::Truncated);
  if (available > area) throw PgmError(PgmErrorCode::TrailingData);
  auto raster = bytes.subspan(reader.pos(), area);
  return Frame(static_cast<int>(width), static_cast<int>(height),
               std::vector<std::uint8_t>(raster.begin(), raster.end()));
}

inline Frame read_pgm(std::string_view bytes) {
  return read_pgm(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

inline std::vector<std::uint8_t> write_pgm(const Frame& frame) {
  const std::string header =
      "P5\n" + std::to_string(frame.width()) + " " + std::to_string(frame.height()) + "\n255\n";
  std::vector<std::uint8_t> out;
  out.reserve(header.size() + frame.size());
  out.insert(out.end(), header.begin(), header.end());
  auto px = frame.pixels();
  out.insert(out.end(), px.begin(), px.end());
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic roadway scene

// Threshold the generator contrast rule is stated against.
inline constexpr int kDefaultThreshold = 25;
inline constexpr int kMaxNoiseAmplitude = 64;

struct VehicleSpec {
  std::int64_t spawn_frame = 0;
  double speed_px_per_frame = 0.0;  // along +y
  double x0 = 0.0;
  double y0 = 0.0;
  int w = 2;
  int h = 2;
  int intensity = 255;

  bool operator==(const VehicleSpec&) const = default;
};

struct SceneConfig {
  int width = 320;
  int height = 240;
  int fps = 25;
  int background_level = 40;
  int noise_amplitude = 0;
  std::uint64_t noise_seed = 0;
  std::vector<VehicleSpec> vehicles;

  bool operator==(const SceneConfig&) const = default;
};

// Throws std::invalid_argument naming the first violated constraint.
inline void validate(const SceneConfig& config) {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (config.width < 1 || config.height < 1) fail("scene dimensions must be positive");
  if (config.width > static_cast<int>(kMaxPgmSide) || config.height > static_cast<int>(kMaxPgmSide)) {
    fail("scene dimensions too large");
  }
  if (config.fps < 1) fail("fps must be at least 1");
  if (config.background_level < 0 || config.background_level > 255) fail("background_level out of range");
  if (config.noise_amplitude < 0 || config.noise_amplitude > kMaxNoiseAmplitude) {
    fail("noise_amplitude must be within 0..64");
  }
  for (std::size_t i = 0; i < config.vehicles.size(); ++i) {
    const auto& v = config.vehicles[i];
    const std::string tag = "vehicle " + std::to_string(i) + ": ";
    if (v.w < 2 || v.h < 2) fail(tag + "size must be at least 2x2");
    if (v.spawn_frame < 0) fail(tag + "spawn_frame must be nonnegative");
    if (!(v.speed_px_per_frame >= 0.0) || !std::isfinite(v.speed_px_per_frame)) {
      fail(tag + "speed must be a nonnegative finite number");
    }
    if (!std::isfinite(v.x0) || !std::isfinite(v.y0)) fail(tag + "position must be finite");
    if (v.intensity < 0 || v.intensity > 255) fail(tag + "intensity out of range");
    if (std::abs(v.intensity - config.background_level) < 2 * kDefaultThreshold) {
      fail(tag + "intensity too close to background");
    }
  }
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline int noise_at(std::uint64_t seed, std::int64_t frame_index, std::size_t pixel, int amplitude) {
  const std::uint64_t h = splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(frame_index))) ^ pixel);
  const auto span = static_cast<std::uint64_t>(2 * amplitude + 1);
  return static_cast<int>(h % span) - amplitude;
}

inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

}  // namespace detail

// Exact top-left of a vehicle at a frame (before rasterization rounding).
inline double vehicle_top(const VehicleSpec& v, std::int64_t frame_index) {
  return v.y0 + v.speed_px_per_frame * static_cast<double>(frame_index - v.spawn_frame);
}

inline Frame render_scene(const SceneConfig& config, std::int64_t frame_index) {
  Frame out(config.width, config.height);
  auto px = out.pixels();
  const int amp = config.noise_amplitude;
  for (std::size_t i = 0; i < px.size(); ++i) {
    int value = config.background_level;
    if (amp > 0) value += detail::noise_at(config.noise_seed, frame_index, i, amp);
    px[i] = static_cast<std::uint8_t>(std::clamp(value, 0, 255));
  }

  for (const auto& v : config.vehicles) {
    if (frame_index < v.spawn_frame) continue;
    const int top = detail::round_half_up(vehicle_top(v, frame_index));
    const int left = detail::round_half_up(v.x0);
    if (top >= config.height || top + v.h <= 0) continue;
    const int y_begin = std::max(top, 0);
    const int y_end = std::min(top + v.h, config.height);
    const int x_begin = std::max(left, 0);
    const int x_end = std::min(left + v.w, config.width);
    for (int y = y_begin; y < y_end; ++y) {
      for (int x = x_begin; x < x_end; ++x) {
        out.at(x, y) = static_cast<std::uint8_t>(v.intensity);
      }
    }
  }
  return out;
}

}  // namespace m2mtraffic::imaging
