#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "m2mtraffic/format.hpp"
#include "m2mtraffic/imaging.hpp"
#include "m2mtraffic/m2m.hpp"
#include "m2mtraffic/tracking.hpp"
#include "m2mtraffic/traffic.hpp"
#include "m2mtraffic/vision.hpp"

namespace m2mtraffic::stations {

using imaging::Frame;
using m2m::Message;

// ---------------------------------------------------------------------------
// Sub roadway station: camera pipeline, flow counting, FLOW reporting.

struct SubStationConfig {
  std::string station_id = "sub1";
  std::string road_id = "R1";
  std::string main_id = "main";
  std::string security_code;
  tracking::LaneGeometry geometry;
  int window_s = 60;
  int threshold = imaging::kDefaultThreshold;
  std::int64_t min_area = 8;
  int merge_gap_px = 0;
  tracking::TrackerConfig tracker;
};

struct SubTickOutput {
  std::vector<Message> outgoing;
  std::vector<traffic::FlowSample> samples;
  std::vector<tracking::CrossingEvent> crossings;
  std::vector<traffic::ViolationRecord> violations;
};

class SubStation {
 public:
  explicit SubStation(SubStationConfig config)
      : config_(std::move(config)), tracker_(config_.tracker) {
    tracking::validate(config_.geometry);
    if (config_.window_s < 1) throw std::invalid_argument("window_s must be positive");
    window_.road_id = config_.road_id;
    window_.window_s = config_.window_s;
  }

  // Processes the frame captured at frame_index. Over-limit vehicles are
  // appended to `violations` with this frame as their snapshot.
  SubTickOutput tick(const Frame& frame, std::int64_t frame_index, traffic::ViolationStore& violations) {
    SubTickOutput out;
    const double now_s = static_cast<double>(frame_index) / config_.geometry.fps;
    if (paused_) {
      prev_frame_ = frame;
      return out;
    }
    if (resync_window_) {
      window_.window_index = traffic::window_index_at(now_s, window_.window_s);
      window_.count = 0;
      resync_window_ = false;
    }
    if (prev_frame_) {
      const auto mask = vision::motion_mask(*prev_frame_, frame, config_.threshold);
      const auto blobs =
          vision::group_blobs(vision::extract_blobs(mask, config_.min_area), config_.merge_gap_px);
      out.crossings = tracker_.step(blobs, frame_index, config_.geometry);
    }
    prev_frame_ = frame;

    std::vector<tracking::CrossingEvent> passages;
    for (const auto& ev : out.crossings) {
      if (ev.line == tracking::Line::B) passages.push_back(ev);
    }
    std::stable_sort(passages.begin(), passages.end(),
                     [](const auto& l, const auto& r) { return l.time_s < r.time_s; });
    for (const auto& ev : passages) {
      // A track that skipped frames can interpolate into an already closed
      // window; it is counted in the open one.
      auto update = traffic::record_passage(window_, std::max(ev.time_s, window_.start_s()));
      take_samples(std::move(update), out);
      if (ev.speed_mps) {
        const auto seq = violations.size();
        auto record = traffic::check_violation(
            *ev.speed_mps, config_.geometry.speed_limit_mps,
            {seq, config_.road_id, ev.track_id, ev.time_s, traffic::snapshot_name(seq)});
        if (record) {
          violations.append(*record, frame);
          out.violations.push_back(std::move(*record));
        }
      }
    }
    take_samples(traffic::advance_to(window_, now_s), out);

    for (const auto& sample : out.samples) {
      out.outgoing.push_back(m2m::make_flow(config_.station_id, config_.main_id, now_s, next_seq_++, sample));
    }
    return out;
  }

  // Obeys authenticated PAUSE/RESUME for its road; returns whether state changed.
  bool handle(const Message& msg) {
    if (msg.to != config_.station_id || msg.road_id() != config_.road_id) return false;
    if (m2m::verify_auth(msg, config_.security_code) != m2m::AuthResult::Accepted) return false;
    switch (msg.kind()) {
      case m2m::Kind::Pause:
        paused_ = true;
        return true;
      case m2m::Kind::Resume:
        // Nothing was counted while paused; start the current window over
        // and forget vehicles seen before the pause.
        paused_ = false;
        resync_window_ = true;
        window_.count = 0;
        tracker_.clear_tracks();
        return true;
      default:
        return false;
    }
  }

  bool paused() const { return paused_; }
  const traffic::FlowWindow& window() const { return window_; }
  const tracking::Tracker& tracker() const { return tracker_; }
  std::uint64_t next_seq() const { return next_seq_; }
  const SubStationConfig& config() const { return config_; }

 private:
  void take_samples(traffic::WindowUpdate update, SubTickOutput& out) {
    window_ = std::move(update.window);
    for (auto& s : update.samples) out.samples.push_back(std::move(s));
  }

  SubStationConfig config_;
  tracking::Tracker tracker_;
  traffic::FlowWindow window_;
  std::optional<Frame> prev_frame_;
  bool paused_ = false;
  bool resync_window_ = false;
  std::uint64_t next_seq_ = 1;
};

// ---------------------------------------------------------------------------
// Main roadway station: display board and operator interrupts.

enum class SlotMode { Empty, Flow, Override };

struct DisplaySlot {
  SlotMode mode = SlotMode::Empty;
  std::optional<std::uint64_t> rate_centi;
  std::uint64_t as_of_ms = 0;
  std::optional<std::string> override_text;

  bool operator==(const DisplaySlot&) const = default;
};

struct MainStationConfig {
  std::string station_id = "main";
  std::string security_code;
  std::map<std::string, std::string> routes;  // road_id -> sub station id
};

struct MainHandleOutcome {
  bool accepted = false;
  std::vector<Message> outgoing;
};

class MainStation {
 public:
  explicit MainStation(MainStationConfig config) : config_(std::move(config)) {
    for (const auto& [road, station] : config_.routes) slots_[road] = DisplaySlot{};
  }

  MainHandleOutcome handle(const Message& msg, double now_s) {
    MainHandleOutcome out;
    if (msg.to != config_.station_id) return out;
    if (auto it = last_seq_seen_.find(msg.from); it != last_seq_seen_.end() && msg.seq <= it->second) return out;

    switch (msg.kind()) {
      case m2m::Kind::Flow: {
        const auto& flow = std::get<m2m::FlowBody>(msg.body);
        auto& slot = slots_[flow.road_id];
        slot.rate_centi = flow.rate_centi;
        slot.as_of_ms = msg.date_ms;
        // An active override keeps the board; the rate shows again on RESUME.
        if (slot.mode != SlotMode::Override) slot.mode = SlotMode::Flow;
        break;
      }
      case m2m::Kind::Interrupt: {
        const auto route = config_.routes.find(msg.road_id());
        if (route == config_.routes.end() || !authorized(msg)) return out;
        auto& slot = slots_[msg.road_id()];
        slot.mode = SlotMode::Override;
        slot.override_text = std::get<m2m::InterruptBody>(msg.body).text;
        out.outgoing.push_back(
            m2m::make_pause(config_.station_id, route->second, now_s, next_seq_++, config_.security_code, route->first));
        break;
      }
      case m2m::Kind::Resume: {
        const auto route = config_.routes.find(msg.road_id());
        if (route == config_.routes.end() || !authorized(msg)) return out;
        auto& slot = slots_[msg.road_id()];
        if (slot.mode == SlotMode::Override) slot.mode = slot.rate_centi ? SlotMode::Flow : SlotMode::Empty;
        slot.override_text.reset();
        out.outgoing.push_back(m2m::make_resume(config_.station_id, route->second, now_s, next_seq_++,
                                                config_.security_code, route->first));
        break;
      }
      case m2m::Kind::Pause:
        return out;
    }
    last_seq_seen_[msg.from] = msg.seq;
    out.accepted = true;
    return out;
  }

  const std::map<std::string, DisplaySlot>& slots() const { return slots_; }
  const MainStationConfig& config() const { return config_; }

 private:
  bool authorized(const Message& msg) const {
    return m2m::verify_auth(msg, config_.security_code) == m2m::AuthResult::Accepted;
  }

  MainStationConfig config_;
  std::map<std::string, DisplaySlot> slots_;
  std::map<std::string, std::uint64_t> last_seq_seen_;
  std::uint64_t next_seq_ = 1;
};

inline std::string render_slot(const std::string& road_id, const DisplaySlot& slot) {
  std::string line = "ROAD " + road_id + ": ";
  switch (slot.mode) {
    case SlotMode::Flow:
      line += m2m::detail::decimal(slot.rate_centi.value_or(0), 100, 2) + " veh/min (as of " +
              m2m::detail::decimal(slot.as_of_ms, 1000, 3) + " s)";
      break;
    case SlotMode::Override:
      line += slot.override_text.value_or("");
      break;
    case SlotMode::Empty:
      line += "--";
      break;
  }
  return line;
}

// One LF-terminated line per road, in road id order.
inline std::string render_board(const MainStation& main) {
  std::string out;
  for (const auto& [road, slot] : main.slots()) out += render_slot(road, slot) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Simulated store-and-forward network with fixed latency and seeded loss.

class UnknownMailboxError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SendResult {
  bool dropped = false;
  std::int64_t deliver_tick = 0;
};

class TransportSim {
 public:
  TransportSim(std::int64_t latency_ticks, double drop_probability, std::uint64_t seed)
      : latency_(latency_ticks), drop_probability_(drop_probability), rng_(seed) {
    if (latency_ticks < 0) throw std::invalid_argument("latency_ticks must be nonnegative");
    if (!(drop_probability >= 0.0 && drop_probability <= 1.0)) {
      throw std::invalid_argument("drop_probability must be within [0, 1]");
    }
  }

  void add_mailbox(const std::string& station_id) { mailboxes_.push_back(station_id); }

  bool has_mailbox(const std::string& station_id) const {
    return std::find(mailboxes_.begin(), mailboxes_.end(), station_id) != mailboxes_.end();
  }

  void advance_to(std::int64_t tick) {
    if (tick < now_) throw std::logic_error("transport tick must not go backwards");
    now_ = tick;
  }

  // Schedules delivery at now + latency unless the loss draw drops it.
  SendResult send(Message msg) {
    if (!has_mailbox(msg.to)) throw UnknownMailboxError("no mailbox for station " + msg.to);
    // 53 random bits -> uniform in [0, 1).
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    if (u < drop_probability_) return {true, now_ + latency_};
    const std::int64_t at = now_ + latency_;
    in_flight_.emplace(std::pair{at, send_counter_++}, std::move(msg));
    return {false, at};
  }

  // Everything due by `tick`, in (delivery tick, send order).
  std::vector<Message> deliver_until(std::int64_t tick) {
    advance_to(tick);
    std::vector<Message> out;
    while (!in_flight_.empty() && in_flight_.begin()->first.first <= tick) {
      out.push_back(std::move(in_flight_.begin()->second));
      in_flight_.erase(in_flight_.begin());
    }
    return out;
  }

  std::int64_t now() const { return now_; }
  std::size_t in_flight() const { return in_flight_.size(); }

 private:
  std::int64_t latency_;
  double drop_probability_;
  std::mt19937_64 rng_;
  std::vector<std::string> mailboxes_;
  std::map<std::pair<std::int64_t, std::uint64_t>, Message> in_flight_;
  std::uint64_t send_counter_ = 0;
  std::int64_t now_ = 0;
};

// ---------------------------------------------------------------------------
// Event log: "<tick> <KIND> <details>", one occurrence per line.

enum class EventKind { Send, Deliver, Drop, Board, Violation };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Send: return "SEND";
    case EventKind::Deliver: return "DELIVER";
    case EventKind::Drop: return "DROP";
    case EventKind::Board: return "BOARD";
    case EventKind::Violation: return "VIOLATION";
  }
  return "?";
}

inline std::string event_line(std::int64_t tick, EventKind kind, std::string_view details) {
  return std::to_string(tick) + " " + to_string(kind) + " " + escape_lines(details) + "\n";
}

struct LoggedEvent {
  std::int64_t tick = 0;
  EventKind kind = EventKind::Send;
  std::string details;  // unescaped
};

inline std::optional<EventKind> event_kind_from_string(std::string_view s) {
  for (auto k : {EventKind::Send, EventKind::Deliver, EventKind::Drop, EventKind::Board, EventKind::Violation}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

inline std::vector<LoggedEvent> parse_event_log(std::string_view text) {
  std::vector<LoggedEvent> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(start, nl - start);
    start = nl + 1;
    const auto s1 = line.find(' ');
    const auto s2 = s1 == std::string_view::npos ? s1 : line.find(' ', s1 + 1);
    if (s2 == std::string_view::npos) throw std::runtime_error("malformed event log line");
    const auto kind = event_kind_from_string(line.substr(s1 + 1, s2 - s1 - 1));
    if (!kind) throw std::runtime_error("unknown event kind in log");
    out.push_back({std::stoll(std::string(line.substr(0, s1))), *kind, unescape_lines(line.substr(s2 + 1))});
  }
  return out;
}

}  // namespace m2mtraffic::stations
