#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "m2mtraffic/imaging.hpp"

namespace m2mtraffic::vision {

using imaging::Frame;

class VisionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::uint8_t kWhite = 255;
inline constexpr int kRebinarizeLevel = 128;

struct BoundingBox {
  int min_x = 0;
  int min_y = 0;
  int max_x = 0;
  int max_y = 0;

  int width() const { return max_x - min_x + 1; }
  int height() const { return max_y - min_y + 1; }
  bool operator==(const BoundingBox&) const = default;
};

// One connected region of the motion mask. Pixel (x, y) contributes its
// center (x + 0.5, y + 0.5) to the centroid.
struct Blob {
  std::int64_t area = 0;
  BoundingBox bbox;
  double cx = 0.0;
  double cy = 0.0;

  bool operator==(const Blob&) const = default;
};

inline void require_same_size(const Frame& a, const Frame& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw VisionError("frame dimensions differ");
  }
}

inline Frame abs_diff(const Frame& a, const Frame& b) {
  require_same_size(a, b);
  Frame out(a.width(), a.height());
  auto pa = a.pixels();
  auto pb = b.pixels();
  auto po = out.pixels();
  for (std::size_t i = 0; i < po.size(); ++i) {
    po[i] = static_cast<std::uint8_t>(pa[i] > pb[i] ? pa[i] - pb[i] : pb[i] - pa[i]);
  }
  return out;
}

// 255 where value >= t, else 0.
inline Frame threshold(const Frame& in, int t) {
  Frame out(in.width(), in.height());
  auto src = in.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= t ? kWhite : 0;
  return out;
}

// 3x3 binomial kernel [1 2 1; 2 4 2; 1 2 1] / 16 with clamped borders. The
// two separable passes accumulate exact integer sums; rounding happens once.
inline Frame gaussian_blur(const Frame& in) {
  const int w = in.width();
  const int h = in.height();
  std::vector<int> rows(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(x - 1, 0);
      const int xr = std::min(x + 1, w - 1);
      rows[static_cast<std::size_t>(y) * w + x] = in.at(xl, y) + 2 * in.at(x, y) + in.at(xr, y);
    }
  }
  Frame out(w, h);
  for (int y = 0; y < h; ++y) {
    const int yu = std::max(y - 1, 0);
    const int yd = std::min(y + 1, h - 1);
    for (int x = 0; x < w; ++x) {
      const int sum = rows[static_cast<std::size_t>(yu) * w + x] + 2 * rows[static_cast<std::size_t>(y) * w + x] +
                      rows[static_cast<std::size_t>(yd) * w + x];
      out.at(x, y) = static_cast<std::uint8_t>((sum + 8) / 16);
    }
  }
  return out;
}

// Difference, threshold, smooth, then re-binarize so the result stays a mask.
inline Frame motion_mask(const Frame& prev, const Frame& curr, int t) {
  return threshold(gaussian_blur(threshold(abs_diff(prev, curr), t)), kRebinarizeLevel);
}

namespace detail {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0u); }

  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;
  }

  std::uint32_t add() {
    parent_.push_back(static_cast<std::uint32_t>(parent_.size()));
    return parent_.back();
  }

 private:
  std::vector<std::uint32_t> parent_;
};

struct BlobAccumulator {
  std::int64_t area = 0;
  std::int64_t sum_x = 0;
  std::int64_t sum_y = 0;
  std::size_t first_pixel = 0;
  BoundingBox bbox{0, 0, -1, -1};
};

}  // namespace detail

// 8-connected components of white pixels, area >= min_area, ordered by the
// top-left of their bounding box (ties broken by first pixel in raster order).
inline std::vector<Blob> extract_blobs(const Frame& mask, std::int64_t min_area) {
  if (min_area < 1) throw VisionError("min_area must be positive");
  const int w = mask.width();
  const int h = mask.height();
  for (auto v : mask.pixels()) {
    if (v != 0 && v != kWhite) throw VisionError("mask is not binary");
  }

  // Two-pass raster labeling; label 0 is background.
  std::vector<std::uint32_t> labels(mask.size(), 0);
  detail::DisjointSet sets(1);
  auto label_at = [&](int x, int y) -> std::uint32_t {
    if (x < 0 || x >= w || y < 0) return 0;
    return labels[static_cast<std::size_t>(y) * w + x];
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask.at(x, y) == 0) continue;
      const std::uint32_t neighbours[] = {label_at(x - 1, y), label_at(x - 1, y - 1), label_at(x, y - 1),
                                          label_at(x + 1, y - 1)};
      std::uint32_t chosen = 0;
      for (auto n : neighbours) {
        if (n == 0) continue;
        if (chosen == 0) {
          chosen = n;
        } else {
          sets.unite(chosen, n);
        }
      }
      if (chosen == 0) chosen = sets.add();
      labels[static_cast<std::size_t>(y) * w + x] = chosen;
    }
  }

  std::vector<detail::BlobAccumulator> acc;
  std::vector<std::int64_t> slot_of_root;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (labels[i] == 0) continue;
      const std::uint32_t root = sets.find(labels[i]);
      if (root >= slot_of_root.size()) slot_of_root.resize(root + 1, -1);
      if (slot_of_root[root] < 0) {
        slot_of_root[root] = static_cast<std::int64_t>(acc.size());
        acc.push_back({0, 0, 0, i, BoundingBox{x, y, x, y}});
      }
      auto& a = acc[static_cast<std::size_t>(slot_of_root[root])];
      ++a.area;
      a.sum_x += x;
      a.sum_y += y;
      a.bbox.min_x = std::min(a.bbox.min_x, x);
      a.bbox.max_x = std::max(a.bbox.max_x, x);
      a.bbox.max_y = std::max(a.bbox.max_y, y);
    }
  }

  std::erase_if(acc, [&](const detail::BlobAccumulator& a) { return a.area < min_area; });
  std::sort(acc.begin(), acc.end(), [](const auto& l, const auto& r) {
    return std::tie(l.bbox.min_y, l.bbox.min_x, l.first_pixel) < std::tie(r.bbox.min_y, r.bbox.min_x, r.first_pixel);
  });

  std::vector<Blob> blobs;
  blobs.reserve(acc.size());
  for (const auto& a : acc) {
    const double denom = 2.0 * static_cast<double>(a.area);
    blobs.push_back(Blob{a.area, a.bbox, static_cast<double>(2 * a.sum_x + a.area) / denom,
                         static_cast<double>(2 * a.sum_y + a.area) / denom});
  }
  return blobs;
}

// Frame differencing of a uniform object leaves only its leading and trailing
// edges; this joins fragments that overlap horizontally and sit at most
// max_gap_px rows apart. Zero disables grouping.
inline std::vector<Blob> group_blobs(std::vector<Blob> blobs, int max_gap_px) {
  if (max_gap_px <= 0 || blobs.size() < 2) return blobs;
  detail::DisjointSet sets(blobs.size());
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    for (std::size_t j = i + 1; j < blobs.size(); ++j) {
      const auto& a = blobs[i].bbox;
      const auto& b = blobs[j].bbox;
      const bool x_overlap = a.min_x <= b.max_x && b.min_x <= a.max_x;
      const int gap = std::max(a.min_y, b.min_y) - std::min(a.max_y, b.max_y) - 1;
      if (x_overlap && gap <= max_gap_px) sets.unite(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
    }
  }
  std::vector<Blob> merged;
  std::vector<std::int64_t> slot(blobs.size(), -1);
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    const auto root = sets.find(static_cast<std::uint32_t>(i));
    const auto& b = blobs[i];
    if (slot[root] < 0) {
      slot[root] = static_cast<std::int64_t>(merged.size());
      merged.push_back(b);
      continue;
    }
    auto& m = merged[static_cast<std::size_t>(slot[root])];
    const auto total = static_cast<double>(m.area + b.area);
    m.cx = (m.cx * static_cast<double>(m.area) + b.cx * static_cast<double>(b.area)) / total;
    m.cy = (m.cy * static_cast<double>(m.area) + b.cy * static_cast<double>(b.area)) / total;
    m.area += b.area;
    m.bbox.min_x = std::min(m.bbox.min_x, b.bbox.min_x);
    m.bbox.min_y = std::min(m.bbox.min_y, b.bbox.min_y);
    m.bbox.max_x = std::max(m.bbox.max_x, b.bbox.max_x);
    m.bbox.max_y = std::max(m.bbox.max_y, b.bbox.max_y);
  }
  std::stable_sort(merged.begin(), merged.end(), [](const Blob& l, const Blob& r) {
    return std::tie(l.bbox.min_y, l.bbox.min_x) < std::tie(r.bbox.min_y, r.bbox.min_x);
  });
  return merged;
}

}  // namespace m2mtraffic::vision
