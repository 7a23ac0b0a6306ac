#pragma once

// Brute-force reference implementations used only by tests. They share no
// code with the library beyond the Frame container.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "m2mtraffic/imaging.hpp"

namespace oracle {

using m2mtraffic::imaging::Frame;

struct Component {
  std::int64_t area = 0;
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  double cx = 0.0, cy = 0.0;
  std::set<std::pair<int, int>> pixels;
};

// Depth-first flood fill over 8-neighbours, seeded in raster order.
inline std::vector<Component> flood_fill_components(const Frame& mask) {
  const int w = mask.width();
  const int h = mask.height();
  std::vector<int> seen(static_cast<std::size_t>(w) * h, 0);
  std::vector<Component> out;
  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      if (mask.at(sx, sy) == 0 || seen[static_cast<std::size_t>(sy) * w + sx]) continue;
      Component c;
      c.min_x = c.max_x = sx;
      c.min_y = c.max_y = sy;
      std::vector<std::pair<int, int>> stack{{sx, sy}};
      seen[static_cast<std::size_t>(sy) * w + sx] = 1;
      std::int64_t sum_x = 0, sum_y = 0;
      while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        c.pixels.insert({x, y});
        ++c.area;
        sum_x += x;
        sum_y += y;
        c.min_x = std::min(c.min_x, x);
        c.max_x = std::max(c.max_x, x);
        c.min_y = std::min(c.min_y, y);
        c.max_y = std::max(c.max_y, y);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            auto& s = seen[static_cast<std::size_t>(ny) * w + nx];
            if (s || mask.at(nx, ny) == 0) continue;
            s = 1;
            stack.push_back({nx, ny});
          }
        }
      }
      // Mean of pixel centres, formed the same exact way: (2*sum + n) / 2n.
      c.cx = static_cast<double>(2 * sum_x + c.area) / (2.0 * static_cast<double>(c.area));
      c.cy = static_cast<double>(2 * sum_y + c.area) / (2.0 * static_cast<double>(c.area));
      out.push_back(std::move(c));
    }
  }
  return out;
}

// Dense 3x3 convolution with explicit kernel table and clamped reads.
inline Frame dense_blur(const Frame& in) {
  static constexpr int kernel[3][3] = {{1, 2, 1}, {2, 4, 2}, {1, 2, 1}};
  Frame out(in.width(), in.height());
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      int sum = 0;
      for (int ky = -1; ky <= 1; ++ky) {
        for (int kx = -1; kx <= 1; ++kx) {
          const int sx = std::clamp(x + kx, 0, in.width() - 1);
          const int sy = std::clamp(y + ky, 0, in.height() - 1);
          sum += kernel[ky + 1][kx + 1] * in.at(sx, sy);
        }
      }
      // Nearest integer to sum / 16, halves rounded up.
      out.at(x, y) = static_cast<std::uint8_t>(std::floor(sum / 16.0 + 0.5));
    }
  }
  return out;
}

// Per-pixel reference of the motion pipeline.
inline Frame reference_motion_mask(const Frame& prev, const Frame& curr, int t) {
  Frame diff(prev.width(), prev.height());
  for (int y = 0; y < prev.height(); ++y) {
    for (int x = 0; x < prev.width(); ++x) {
      const int d = std::abs(int(prev.at(x, y)) - int(curr.at(x, y)));
      diff.at(x, y) = d >= t ? 255 : 0;
    }
  }
  Frame blurred = dense_blur(diff);
  for (int y = 0; y < prev.height(); ++y) {
    for (int x = 0; x < prev.width(); ++x) blurred.at(x, y) = blurred.at(x, y) >= 128 ? 255 : 0;
  }
  return blurred;
}

struct Point {
  double x, y;
};

// Greedy matching by repeated global-minimum scan (no sorting).
inline double greedy_total_distance(const std::vector<Point>& tracks, const std::vector<Point>& blobs, double gate,
                                    std::size_t* matched = nullptr) {
  std::vector<bool> tu(tracks.size()), bu(blobs.size());
  double total = 0.0;
  std::size_t n = 0;
  while (true) {
    double best = INFINITY;
    std::size_t bt = 0, bb = 0;
    for (std::size_t t = 0; t < tracks.size(); ++t) {
      if (tu[t]) continue;
      for (std::size_t b = 0; b < blobs.size(); ++b) {
        if (bu[b]) continue;
        const double d = std::sqrt((tracks[t].x - blobs[b].x) * (tracks[t].x - blobs[b].x) +
                                   (tracks[t].y - blobs[b].y) * (tracks[t].y - blobs[b].y));
        if (d <= gate && d < best) {
          best = d;
          bt = t;
          bb = b;
        }
      }
    }
    if (!std::isfinite(best)) break;
    tu[bt] = bu[bb] = true;
    total += best;
    ++n;
  }
  if (matched) *matched = n;
  return total;
}

// Counts per window: floor(t / window_s), every index from 0 to the last
// closed window present.
inline std::map<std::uint64_t, std::uint64_t> histogram(const std::vector<double>& times, int window_s) {
  std::map<std::uint64_t, std::uint64_t> h;
  for (double t : times) ++h[static_cast<std::uint64_t>(t / window_s)];
  return h;
}

inline Frame random_frame(std::mt19937_64& rng, int w, int h) {
  Frame f(w, h);
  std::uniform_int_distribution<int> px(0, 255);
  for (auto& v : f.pixels()) v = static_cast<std::uint8_t>(px(rng));
  return f;
}

inline Frame random_mask(std::mt19937_64& rng, int w, int h, double density) {
  Frame f(w, h);
  std::bernoulli_distribution on(density);
  for (auto& v : f.pixels()) v = on(rng) ? 255 : 0;
  return f;
}

}  // namespace oracle
