#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "m2mtraffic/format.hpp"
#include "m2mtraffic/imaging.hpp"

namespace m2mtraffic::traffic {

// Vehicle counter over the half-open interval
// [window_index * window_s, (window_index + 1) * window_s).
struct FlowWindow {
  std::string road_id;
  int window_s = 60;
  std::uint64_t window_index = 0;
  std::uint64_t count = 0;

  double start_s() const { return static_cast<double>(window_index) * window_s; }
  double end_s() const { return static_cast<double>(window_index + 1) * window_s; }
  bool operator==(const FlowWindow&) const = default;
};

struct FlowSample {
  std::string road_id;
  std::uint64_t window_index = 0;
  int window_s = 60;
  std::uint64_t count = 0;
  double rate_veh_per_min = 0.0;

  bool operator==(const FlowSample&) const = default;
};

// Vehicles per minute over a window of window_s seconds.
inline double flow_rate(std::uint64_t count, int window_s) {
  return static_cast<double>(count) * 60.0 / static_cast<double>(window_s);
}

inline std::uint64_t window_index_at(double time_s, int window_s) {
  return static_cast<std::uint64_t>(std::floor(time_s / window_s));
}

inline std::pair<FlowSample, FlowWindow> close_window(const FlowWindow& window) {
  FlowSample sample{window.road_id, window.window_index, window.window_s, window.count,
                    flow_rate(window.count, window.window_s)};
  FlowWindow next = window;
  ++next.window_index;
  next.count = 0;
  return {std::move(sample), std::move(next)};
}

struct WindowUpdate {
  FlowWindow window;
  std::vector<FlowSample> samples;
};

// Closes every window that ends at or before time_s, zero-count ones included.
inline WindowUpdate advance_to(FlowWindow window, double time_s) {
  if (time_s < window.start_s()) throw std::domain_error("time precedes the current flow window");
  WindowUpdate out;
  const std::uint64_t target = window_index_at(time_s, window.window_s);
  while (window.window_index < target) {
    auto [sample, next] = close_window(window);
    out.samples.push_back(std::move(sample));
    window = std::move(next);
  }
  out.window = std::move(window);
  return out;
}

inline WindowUpdate record_passage(const FlowWindow& window, double event_time_s) {
  auto out = advance_to(window, event_time_s);
  ++out.window.count;
  return out;
}

// ---------------------------------------------------------------------------
// Speed violations

inline constexpr const char* kRegistrationUnavailable = "UNAVAILABLE";
inline constexpr const char* kViolationsCsvHeader =
    "seq,road_id,track_id,timestamp_s,speed_mps,limit_mps,snapshot,registration";

struct ViolationRecord {
  std::uint64_t record_seq = 0;
  std::string road_id;
  std::uint64_t track_id = 0;
  double timestamp_s = 0.0;
  double speed_mps = 0.0;
  double limit_mps = 0.0;
  std::string snapshot_ref;
  std::string registration = kRegistrationUnavailable;

  bool operator==(const ViolationRecord&) const = default;
};

struct ViolationContext {
  std::uint64_t record_seq = 0;
  std::string road_id;
  std::uint64_t track_id = 0;
  double timestamp_s = 0.0;
  std::string snapshot_ref;
};

inline std::string snapshot_name(std::uint64_t seq) { return "viol_" + std::to_string(seq) + ".pgm"; }

inline std::optional<ViolationRecord> check_violation(double speed_mps, double limit_mps, ViolationContext ctx) {
  if (!(speed_mps > limit_mps)) return std::nullopt;
  return ViolationRecord{ctx.record_seq,  std::move(ctx.road_id), ctx.track_id, ctx.timestamp_s, speed_mps,
                         limit_mps,       std::move(ctx.snapshot_ref)};
}

inline std::string to_csv_row(const ViolationRecord& r) {
  return std::to_string(r.record_seq) + "," + r.road_id + "," + std::to_string(r.track_id) + "," +
         fixed(r.timestamp_s, 3) + "," + fixed(r.speed_mps, 3) + "," + fixed(r.limit_mps, 3) + "," +
         r.snapshot_ref + "," + r.registration;
}

class SequenceGapError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class StorageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Append-only violation log. With an output directory, every append writes
// one violations.csv row and the snapshot PGM before returning.
class ViolationStore {
 public:
  ViolationStore() = default;

  explicit ViolationStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    csv_.open(*dir_ / "violations.csv", std::ios::binary | std::ios::trunc);
    if (!csv_) throw StorageError("cannot create " + (*dir_ / "violations.csv").string());
    csv_ << kViolationsCsvHeader << '\n';
    csv_.flush();
    if (!csv_) throw StorageError("cannot write violations.csv");
  }

  std::uint64_t size() const { return records_.size(); }
  const std::vector<ViolationRecord>& records() const { return records_; }

  void append(const ViolationRecord& record, const imaging::Frame& snapshot) {
    if (record.record_seq != records_.size()) {
      throw SequenceGapError("violation seq " + std::to_string(record.record_seq) + " does not follow " +
                             std::to_string(records_.size()));
    }
    if (record.snapshot_ref.empty()) throw std::invalid_argument("violation snapshot_ref is empty");
    if (dir_) {
      const auto bytes = imaging::write_pgm(snapshot);
      std::ofstream img(*dir_ / record.snapshot_ref, std::ios::binary | std::ios::trunc);
      img.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      if (!img) throw StorageError("cannot write snapshot " + record.snapshot_ref);
      csv_ << to_csv_row(record) << '\n';
      csv_.flush();
      if (!csv_) throw StorageError("cannot append to violations.csv");
    }
    records_.push_back(record);
  }

 private:
  std::optional<std::filesystem::path> dir_;
  std::ofstream csv_;
  std::vector<ViolationRecord> records_;
};

}  // namespace m2mtraffic::traffic
