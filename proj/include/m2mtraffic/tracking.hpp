#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "m2mtraffic/vision.hpp"

namespace m2mtraffic::tracking {

using vision::Blob;

// Two virtual rows in the image, distance_m apart on the road.
struct LaneGeometry {
  double y_a = 60.0;
  double y_b = 140.0;
  double distance_m = 20.0;
  int fps = 25;
  double speed_limit_mps = 13.0;

  double meters_per_pixel() const { return distance_m / (y_b - y_a); }
  bool operator==(const LaneGeometry&) const = default;
};

inline void validate(const LaneGeometry& g) {
  if (!(g.y_b > g.y_a)) throw std::invalid_argument("line B must lie below line A");
  if (!(g.distance_m > 0.0) || !std::isfinite(g.distance_m)) throw std::invalid_argument("distance_m must be positive");
  if (g.fps < 1) throw std::invalid_argument("fps must be at least 1");
  if (!(g.speed_limit_mps > 0.0) || !std::isfinite(g.speed_limit_mps)) {
    throw std::invalid_argument("speed_limit_mps must be positive");
  }
}

struct Observation {
  std::int64_t frame_index = 0;
  double cx = 0.0;
  double cy = 0.0;
  bool operator==(const Observation&) const = default;
};

enum class Phase { BeforeA, BetweenAB, PastB };
enum class Line { A, B };

struct Track {
  std::uint64_t id = 0;
  std::vector<Observation> history;
  Phase phase = Phase::BeforeA;
  std::optional<double> t_cross_a;
  std::optional<double> t_cross_b;
  int misses = 0;
};

struct CrossingEvent {
  std::uint64_t track_id = 0;
  Line line = Line::A;
  double time_s = 0.0;
  // Average speed over A..B; only on B events whose track also crossed A.
  std::optional<double> speed_mps;

  bool operator==(const CrossingEvent&) const = default;
};

struct Association {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track index, blob index)
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_blobs;
};

// Greedy nearest-centroid matching: candidate pairs within the gate are
// taken in ascending distance order, ties by (track, blob) index.
inline Association associate(std::span<const Track> tracks, std::span<const Blob> blobs, double gate_px) {
  if (!(gate_px > 0.0)) throw std::invalid_argument("gate_px must be positive");
  struct Candidate {
    double dist;
    std::size_t track;
    std::size_t blob;
  };
  std::vector<Candidate> candidates;
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    if (tracks[t].history.empty()) continue;
    const auto& last = tracks[t].history.back();
    for (std::size_t b = 0; b < blobs.size(); ++b) {
      const double d = std::hypot(blobs[b].cx - last.cx, blobs[b].cy - last.cy);
      if (d <= gate_px) candidates.push_back({d, t, b});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& l, const Candidate& r) {
    return std::tie(l.dist, l.track, l.blob) < std::tie(r.dist, r.track, r.blob);
  });

  Association out;
  std::vector<bool> track_used(tracks.size(), false);
  std::vector<bool> blob_used(blobs.size(), false);
  for (const auto& c : candidates) {
    if (track_used[c.track] || blob_used[c.blob]) continue;
    track_used[c.track] = true;
    blob_used[c.blob] = true;
    out.matches.emplace_back(c.track, c.blob);
  }
  std::sort(out.matches.begin(), out.matches.end());
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    if (!track_used[t]) out.unmatched_tracks.push_back(t);
  }
  for (std::size_t b = 0; b < blobs.size(); ++b) {
    if (!blob_used[b]) out.unmatched_blobs.push_back(b);
  }
  return out;
}

// Time in seconds at which the centroid reached line_y moving downward,
// linearly interpolated between the two observations.
inline std::optional<double> detect_crossing(const Observation& prev, const Observation& curr, double line_y,
                                             int fps) {
  if (!(prev.cy < line_y && line_y <= curr.cy)) return std::nullopt;
  const double fraction = (line_y - prev.cy) / (curr.cy - prev.cy);
  const double frames = static_cast<double>(curr.frame_index - prev.frame_index);
  return (static_cast<double>(prev.frame_index) + fraction * frames) / static_cast<double>(fps);
}

inline double average_speed(double t_cross_a, double t_cross_b, double distance_m) {
  if (!(t_cross_b > t_cross_a)) throw std::domain_error("travel time between lines must be positive");
  return distance_m / (t_cross_b - t_cross_a);
}

inline constexpr double kSpeedSmoothing = 0.5;

// EMA of per-frame displacement speed along the lane. Advisory only.
inline std::optional<double> instantaneous_speed(const Track& track, const LaneGeometry& geometry) {
  if (track.history.size() < 2) return std::nullopt;
  const double scale = geometry.meters_per_pixel() * geometry.fps;
  std::optional<double> ema;
  for (std::size_t i = 1; i < track.history.size(); ++i) {
    const auto& p = track.history[i - 1];
    const auto& c = track.history[i];
    const double v = (c.cy - p.cy) / static_cast<double>(c.frame_index - p.frame_index) * scale;
    ema = ema ? kSpeedSmoothing * v + (1.0 - kSpeedSmoothing) * *ema : v;
  }
  return ema;
}

struct TrackerConfig {
  double gate_px = 20.0;
  int miss_limit = 3;
  bool operator==(const TrackerConfig&) const = default;
};

class Tracker {
 public:
  explicit Tracker(TrackerConfig config = {}) : config_(config) {
    if (!(config_.gate_px > 0.0)) throw std::invalid_argument("gate_px must be positive");
    if (config_.miss_limit < 0) throw std::invalid_argument("miss_limit must be nonnegative");
  }

  std::vector<CrossingEvent> step(std::span<const Blob> blobs, std::int64_t frame_index,
                                  const LaneGeometry& geometry) {
    if (last_frame_ && frame_index <= *last_frame_) {
      throw std::logic_error("tracker frame index must strictly increase");
    }
    last_frame_ = frame_index;

    const auto assoc = associate(tracks_, blobs, config_.gate_px);
    std::vector<CrossingEvent> events;
    for (auto [ti, bi] : assoc.matches) {
      auto& track = tracks_[ti];
      const Observation prev = track.history.back();
      const Observation curr{frame_index, blobs[bi].cx, blobs[bi].cy};
      track.history.push_back(curr);
      track.misses = 0;
      advance_phase(track, prev, curr, geometry, events);
    }

    std::vector<bool> retire(tracks_.size(), false);
    for (auto ti : assoc.unmatched_tracks) {
      if (++tracks_[ti].misses > config_.miss_limit) retire[ti] = true;
    }
    std::size_t keep = 0;
    for (std::size_t i = 0; i < tracks_.size(); ++i) {
      if (retire[i]) continue;
      if (keep != i) tracks_[keep] = std::move(tracks_[i]);
      ++keep;
    }
    tracks_.resize(keep);

    for (auto bi : assoc.unmatched_blobs) {
      Track track;
      track.id = next_id_++;
      track.history.push_back({frame_index, blobs[bi].cx, blobs[bi].cy});
      const double cy = blobs[bi].cy;
      track.phase = cy < geometry.y_a ? Phase::BeforeA : (cy < geometry.y_b ? Phase::BetweenAB : Phase::PastB);
      tracks_.push_back(std::move(track));
    }
    return events;
  }

  // Drops every live track; ids keep counting.
  void clear_tracks() { tracks_.clear(); }

  std::span<const Track> tracks() const { return tracks_; }
  std::uint64_t tracks_created() const { return next_id_; }
  const TrackerConfig& config() const { return config_; }

 private:
  static void advance_phase(Track& track, const Observation& prev, const Observation& curr,
                            const LaneGeometry& geometry, std::vector<CrossingEvent>& events) {
    if (track.phase == Phase::BeforeA) {
      if (auto t = detect_crossing(prev, curr, geometry.y_a, geometry.fps)) {
        track.t_cross_a = *t;
        track.phase = Phase::BetweenAB;
        events.push_back({track.id, Line::A, *t, std::nullopt});
      }
    }
    if (track.phase == Phase::BetweenAB) {
      if (auto t = detect_crossing(prev, curr, geometry.y_b, geometry.fps)) {
        track.t_cross_b = *t;
        track.phase = Phase::PastB;
        std::optional<double> speed;
        if (track.t_cross_a && *t > *track.t_cross_a) {
          speed = average_speed(*track.t_cross_a, *t, geometry.distance_m);
        }
        events.push_back({track.id, Line::B, *t, speed});
      }
    }
  }

  TrackerConfig config_;
  std::vector<Track> tracks_;
  std::uint64_t next_id_ = 0;
  std::optional<std::int64_t> last_frame_;
};

}  // namespace m2mtraffic::tracking
