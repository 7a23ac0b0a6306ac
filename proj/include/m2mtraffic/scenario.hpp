#pragma once

// Scenario files are flat UTF-8 text:
//
//   # comment
//   key = value                  global keys
//   [road <id>]                  one section per sub roadway
//   vehicle = spawn_frame,speed_px_per_frame,x0,y0,w,h,intensity
//   [action]                     one scheduled operator message
//
// Unknown keys are errors; absent optional keys take the defaults below.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "m2mtraffic/format.hpp"
#include "m2mtraffic/imaging.hpp"
#include "m2mtraffic/m2m.hpp"
#include "m2mtraffic/stations.hpp"
#include "m2mtraffic/tracking.hpp"
#include "m2mtraffic/traffic.hpp"

namespace m2mtraffic::scenario {

struct RoadConfig {
  std::string road_id;
  std::string station_id;
  imaging::SceneConfig scene;  // scene.noise_seed is derived when noise_seed is absent
  std::optional<std::uint64_t> noise_seed;
  double y_a = 0.0;
  double y_b = 0.0;
  double distance_m = 0.0;
  double speed_limit_mps = 0.0;
  int window_s = 60;
  int threshold = imaging::kDefaultThreshold;
  std::int64_t min_area = 8;
  double gate_px = 20.0;
  int miss_limit = 3;
  int merge_gap_px = 0;

  tracking::LaneGeometry geometry() const { return {y_a, y_b, distance_m, scene.fps, speed_limit_mps}; }
  bool operator==(const RoadConfig&) const = default;
};

struct ActionConfig {
  double at_s = 0.0;
  m2m::Kind kind = m2m::Kind::Interrupt;
  std::string road_id;
  std::string text;
  std::optional<std::string> auth;  // defaults to the scenario security code
  std::optional<std::uint64_t> seq;  // defaults to the 1-based action position

  bool operator==(const ActionConfig&) const = default;
};

struct ScenarioConfig {
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  std::int64_t latency_ticks = 0;
  double drop_probability = 0.0;
  std::string security_code;
  std::string main_id = "main";
  std::string operator_id = "operator";
  std::vector<RoadConfig> roads;
  std::vector<ActionConfig> actions;

  bool operator==(const ScenarioConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Errors

enum class ConfigErrorCode {
  Syntax,
  UnknownSection,
  UnknownKey,
  DuplicateKey,
  DuplicateRoad,
  MissingKey,
  BadNumber,
  ConstraintViolation,
};

inline const char* to_string(ConfigErrorCode c) {
  switch (c) {
    case ConfigErrorCode::Syntax: return "syntax error";
    case ConfigErrorCode::UnknownSection: return "unknown section";
    case ConfigErrorCode::UnknownKey: return "unknown key";
    case ConfigErrorCode::DuplicateKey: return "duplicate key";
    case ConfigErrorCode::DuplicateRoad: return "duplicate road";
    case ConfigErrorCode::MissingKey: return "missing key";
    case ConfigErrorCode::BadNumber: return "bad number";
    case ConfigErrorCode::ConstraintViolation: return "constraint violation";
  }
  return "unknown";
}

class ConfigError : public std::runtime_error {
 public:
  ConfigError(ConfigErrorCode code, int line, const std::string& detail)
      : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + to_string(code) +
                           ": " + detail),
        code_(code),
        line_(line) {}

  ConfigErrorCode code() const { return code_; }
  int line() const { return line_; }

 private:
  ConfigErrorCode code_;
  int line_;
};

// ---------------------------------------------------------------------------
// Validation; failures point at the offending config line when known.

namespace detail {

struct SectionLines {
  int header = 0;
  std::map<std::string, int> keys;
  int of(const std::string& key) const {
    auto it = keys.find(key);
    return it == keys.end() ? header : it->second;
  }
};

struct LineIndex {
  SectionLines global;
  std::vector<SectionLines> roads;
  std::vector<SectionLines> actions;
};

inline std::uint64_t derived_noise_seed(std::uint64_t seed, std::size_t road_index) {
  return imaging::detail::splitmix64(seed + 0x5eedull * (road_index + 1));
}

inline void validate(const ScenarioConfig& c, const LineIndex* lines) {
  auto fail = [](int line, const std::string& what) {
    throw ConfigError(ConfigErrorCode::ConstraintViolation, line, what);
  };
  auto gl = [&](const std::string& key) { return lines ? lines->global.of(key) : 0; };
  auto rl = [&](std::size_t i, const std::string& key) {
    return lines && i < lines->roads.size() ? lines->roads[i].of(key) : 0;
  };
  auto al = [&](std::size_t i, const std::string& key) {
    return lines && i < lines->actions.size() ? lines->actions[i].of(key) : 0;
  };

  if (!(c.duration_s > 0.0) || !std::isfinite(c.duration_s)) fail(gl("duration_s"), "duration_s must be positive");
  if (c.latency_ticks < 0) fail(gl("latency_ticks"), "latency_ticks must be nonnegative");
  if (!(c.drop_probability >= 0.0 && c.drop_probability <= 1.0)) {
    fail(gl("drop_probability"), "drop_probability must be within [0, 1]");
  }
  if (!m2m::is_valid_auth(c.security_code)) {
    fail(gl("security_code"), "security_code must be 8-64 characters of [A-Za-z0-9_-]");
  }
  if (!m2m::is_valid_id(c.main_id)) fail(gl("main_id"), "invalid main_id");
  if (!m2m::is_valid_id(c.operator_id)) fail(gl("operator_id"), "invalid operator_id");
  if (c.main_id == c.operator_id) fail(gl("operator_id"), "operator_id must differ from main_id");
  if (c.roads.empty()) fail(lines ? lines->global.header : 0, "at least one [road] section is required");

  std::set<std::string> road_ids;
  std::set<std::string> station_ids{c.main_id, c.operator_id};
  for (std::size_t i = 0; i < c.roads.size(); ++i) {
    const auto& r = c.roads[i];
    const int header = lines && i < lines->roads.size() ? lines->roads[i].header : 0;
    if (!m2m::is_valid_id(r.road_id)) fail(header, "invalid road id '" + r.road_id + "'");
    if (!road_ids.insert(r.road_id).second) {
      throw ConfigError(ConfigErrorCode::DuplicateRoad, header, "road " + r.road_id + " defined twice");
    }
    if (!m2m::is_valid_id(r.station_id)) fail(rl(i, "station_id"), "invalid station_id");
    if (!station_ids.insert(r.station_id).second) fail(rl(i, "station_id"), "station id " + r.station_id + " reused");
    try {
      imaging::validate(r.scene);
    } catch (const std::invalid_argument& e) {
      fail(header, e.what());
    }
    if (r.scene.fps != c.roads[0].scene.fps) fail(rl(i, "fps"), "all roads must share one fps");
    if (!(r.y_a >= 0.0)) fail(rl(i, "y_a"), "y_a must be a row inside the frame");
    if (!(r.y_b > r.y_a)) fail(rl(i, "y_b"), "y_b must be greater than y_a");
    if (!(r.y_b < r.scene.height)) fail(rl(i, "y_b"), "y_b must be a row inside the frame");
    if (!(r.distance_m > 0.0) || !std::isfinite(r.distance_m)) fail(rl(i, "distance_m"), "distance_m must be positive");
    if (!(r.speed_limit_mps > 0.0) || !std::isfinite(r.speed_limit_mps)) {
      fail(rl(i, "speed_limit_mps"), "speed_limit_mps must be positive");
    }
    if (r.window_s < 1) fail(rl(i, "window_s"), "window_s must be positive");
    if (c.duration_s < r.window_s) fail(rl(i, "window_s"), "duration_s must be at least window_s");
    if (r.threshold < 1 || r.threshold > 255) fail(rl(i, "threshold"), "threshold must be within 1..255");
    if (r.min_area < 1) fail(rl(i, "min_area"), "min_area must be positive");
    if (!(r.gate_px > 0.0) || !std::isfinite(r.gate_px)) fail(rl(i, "gate_px"), "gate_px must be positive");
    if (r.miss_limit < 0) fail(rl(i, "miss_limit"), "miss_limit must be nonnegative");
    if (r.merge_gap_px < 0) fail(rl(i, "merge_gap_px"), "merge_gap_px must be nonnegative");
  }

  for (std::size_t i = 0; i < c.actions.size(); ++i) {
    const auto& a = c.actions[i];
    if (!(a.at_s >= 0.0) || a.at_s > c.duration_s) fail(al(i, "at_s"), "at_s must lie within the scenario");
    if (a.kind != m2m::Kind::Interrupt && a.kind != m2m::Kind::Resume) {
      fail(al(i, "kind"), "operator actions are INTERRUPT or RESUME");
    }
    if (!road_ids.contains(a.road_id)) fail(al(i, "road"), "action refers to undefined road " + a.road_id);
    if (a.auth && !m2m::is_valid_auth(*a.auth)) fail(al(i, "auth"), "auth must be 8-64 characters of [A-Za-z0-9_-]");
    if (a.kind == m2m::Kind::Interrupt) {
      if (!a.text.empty() && (a.text.front() == ' ' || a.text.back() == ' ')) {
        fail(al(i, "text"), "text must not start or end with a space");
      }
      try {
        m2m::make_interrupt(c.operator_id, c.main_id, 0.0, 0, c.security_code, a.road_id, a.text);
      } catch (const m2m::MessageError& e) {
        fail(al(i, "text"), e.what());
      }
    } else if (!a.text.empty()) {
      fail(al(i, "text"), "RESUME carries no text");
    }
  }
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view text, int line, const std::string& key) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc{} || ptr != end) {
    throw ConfigError(ConfigErrorCode::BadNumber, line, key + " = '" + std::string(text) + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ConfigError(ConfigErrorCode::BadNumber, line, key + " is not finite");
  }
  return value;
}

inline imaging::VehicleSpec parse_vehicle(std::string_view text, int line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    fields.push_back(trim(text.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (fields.size() != 7) {
    throw ConfigError(ConfigErrorCode::Syntax, line,
                      "vehicle needs 7 fields: spawn_frame,speed_px_per_frame,x0,y0,w,h,intensity");
  }
  imaging::VehicleSpec v;
  v.spawn_frame = parse_number<std::int64_t>(fields[0], line, "vehicle.spawn_frame");
  v.speed_px_per_frame = parse_number<double>(fields[1], line, "vehicle.speed_px_per_frame");
  v.x0 = parse_number<double>(fields[2], line, "vehicle.x0");
  v.y0 = parse_number<double>(fields[3], line, "vehicle.y0");
  v.w = parse_number<int>(fields[4], line, "vehicle.w");
  v.h = parse_number<int>(fields[5], line, "vehicle.h");
  v.intensity = parse_number<int>(fields[6], line, "vehicle.intensity");
  return v;
}

}  // namespace detail

inline void validate(const ScenarioConfig& config) { detail::validate(config, nullptr); }

// ---------------------------------------------------------------------------
// Parsing

inline ScenarioConfig parse_config(std::string_view text) {
  using detail::parse_number;
  enum class Section { Global, Road, Action };

  ScenarioConfig config;
  detail::LineIndex lines;
  Section section = Section::Global;
  int line_no = 0;

  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(ConfigErrorCode::Syntax, line_no, "unterminated section header");
      const auto inner = detail::trim(line.substr(1, line.size() - 2));
      if (inner == "action") {
        section = Section::Action;
        config.actions.emplace_back();
        lines.actions.push_back({line_no, {}});
      } else if (inner.substr(0, 5) == "road " || inner.substr(0, 5) == "road\t") {
        const auto id = std::string(detail::trim(inner.substr(5)));
        for (std::size_t i = 0; i < config.roads.size(); ++i) {
          if (config.roads[i].road_id == id) {
            throw ConfigError(ConfigErrorCode::DuplicateRoad, line_no,
                              "road " + id + " already defined on line " + std::to_string(lines.roads[i].header));
          }
        }
        section = Section::Road;
        RoadConfig road;
        road.road_id = id;
        config.roads.push_back(std::move(road));
        lines.roads.push_back({line_no, {}});
      } else {
        throw ConfigError(ConfigErrorCode::UnknownSection, line_no, std::string(inner));
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(ConfigErrorCode::Syntax, line_no, "expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(ConfigErrorCode::Syntax, line_no, "empty key");

    auto& keys = section == Section::Global ? lines.global.keys
                 : section == Section::Road ? lines.roads.back().keys
                                            : lines.actions.back().keys;
    if (key != "vehicle" && !keys.emplace(key, line_no).second) {
      throw ConfigError(ConfigErrorCode::DuplicateKey, line_no,
                        key + " already set on line " + std::to_string(keys.at(key)));
    }
    auto unknown = [&] { throw ConfigError(ConfigErrorCode::UnknownKey, line_no, key); };

    switch (section) {
      case Section::Global:
        if (key == "seed") config.seed = parse_number<std::uint64_t>(value, line_no, key);
        else if (key == "duration_s") config.duration_s = parse_number<double>(value, line_no, key);
        else if (key == "latency_ticks") config.latency_ticks = parse_number<std::int64_t>(value, line_no, key);
        else if (key == "drop_probability") config.drop_probability = parse_number<double>(value, line_no, key);
        else if (key == "security_code") config.security_code = std::string(value);
        else if (key == "main_id") config.main_id = std::string(value);
        else if (key == "operator_id") config.operator_id = std::string(value);
        else unknown();
        break;
      case Section::Road: {
        auto& r = config.roads.back();
        auto& s = r.scene;
        if (key == "station_id") r.station_id = std::string(value);
        else if (key == "width") s.width = parse_number<int>(value, line_no, key);
        else if (key == "height") s.height = parse_number<int>(value, line_no, key);
        else if (key == "fps") s.fps = parse_number<int>(value, line_no, key);
        else if (key == "background_level") s.background_level = parse_number<int>(value, line_no, key);
        else if (key == "noise_amplitude") s.noise_amplitude = parse_number<int>(value, line_no, key);
        else if (key == "noise_seed") r.noise_seed = parse_number<std::uint64_t>(value, line_no, key);
        else if (key == "vehicle") s.vehicles.push_back(detail::parse_vehicle(value, line_no));
        else if (key == "y_a") r.y_a = parse_number<double>(value, line_no, key);
        else if (key == "y_b") r.y_b = parse_number<double>(value, line_no, key);
        else if (key == "distance_m") r.distance_m = parse_number<double>(value, line_no, key);
        else if (key == "speed_limit_mps") r.speed_limit_mps = parse_number<double>(value, line_no, key);
        else if (key == "window_s") r.window_s = parse_number<int>(value, line_no, key);
        else if (key == "threshold") r.threshold = parse_number<int>(value, line_no, key);
        else if (key == "min_area") r.min_area = parse_number<std::int64_t>(value, line_no, key);
        else if (key == "gate_px") r.gate_px = parse_number<double>(value, line_no, key);
        else if (key == "miss_limit") r.miss_limit = parse_number<int>(value, line_no, key);
        else if (key == "merge_gap_px") r.merge_gap_px = parse_number<int>(value, line_no, key);
        else unknown();
        break;
      }
      case Section::Action: {
        auto& a = config.actions.back();
        if (key == "at_s") {
          a.at_s = parse_number<double>(value, line_no, key);
        } else if (key == "kind") {
          const auto kind = m2m::kind_from_string(value);
          if (!kind) throw ConfigError(ConfigErrorCode::ConstraintViolation, line_no, "unknown action kind");
          a.kind = *kind;
        } else if (key == "road") {
          a.road_id = std::string(value);
        } else if (key == "text") {
          a.text = std::string(value);
        } else if (key == "auth") {
          a.auth = std::string(value);
        } else if (key == "seq") {
          a.seq = parse_number<std::uint64_t>(value, line_no, key);
        } else {
          unknown();
        }
        break;
      }
    }
  }

  auto require = [](const detail::SectionLines& sec, std::initializer_list<const char*> keys, const std::string& where) {
    for (const char* k : keys) {
      if (!sec.keys.contains(k)) {
        throw ConfigError(ConfigErrorCode::MissingKey, sec.header, where + " requires " + k);
      }
    }
  };
  require(lines.global, {"duration_s", "security_code"}, "scenario");
  for (std::size_t i = 0; i < config.roads.size(); ++i) {
    require(lines.roads[i], {"y_a", "y_b", "distance_m", "speed_limit_mps", "window_s"},
            "road " + config.roads[i].road_id);
    if (!lines.roads[i].keys.contains("station_id")) config.roads[i].station_id = "sub_" + config.roads[i].road_id;
  }
  for (std::size_t i = 0; i < config.actions.size(); ++i) {
    require(lines.actions[i], {"at_s", "kind", "road"}, "action");
    if (config.actions[i].kind == m2m::Kind::Interrupt) require(lines.actions[i], {"text"}, "INTERRUPT action");
  }
  for (std::size_t i = 0; i < config.roads.size(); ++i) {
    auto& r = config.roads[i];
    r.scene.noise_seed = r.noise_seed.value_or(detail::derived_noise_seed(config.seed, i));
  }

  detail::validate(config, &lines);
  return config;
}

inline std::string emit_action(const ActionConfig& a) {
  std::string out = "[action]\nat_s = " + shortest(a.at_s) + "\nkind = " + m2m::to_string(a.kind) +
                    "\nroad = " + a.road_id + "\n";
  if (!a.text.empty()) out += "text = " + a.text + "\n";
  if (a.auth) out += "auth = " + *a.auth + "\n";
  if (a.seq) out += "seq = " + std::to_string(*a.seq) + "\n";
  return out;
}

// Canonical text for a config; parse_config(emit_config(c)) == c.
inline std::string emit_config(const ScenarioConfig& c) {
  std::ostringstream out;
  out << "seed = " << c.seed << "\n"
      << "duration_s = " << shortest(c.duration_s) << "\n"
      << "latency_ticks = " << c.latency_ticks << "\n"
      << "drop_probability = " << shortest(c.drop_probability) << "\n"
      << "security_code = " << c.security_code << "\n"
      << "main_id = " << c.main_id << "\n"
      << "operator_id = " << c.operator_id << "\n";
  for (const auto& r : c.roads) {
    const auto& s = r.scene;
    out << "\n[road " << r.road_id << "]\n"
        << "station_id = " << r.station_id << "\n"
        << "width = " << s.width << "\n"
        << "height = " << s.height << "\n"
        << "fps = " << s.fps << "\n"
        << "background_level = " << s.background_level << "\n"
        << "noise_amplitude = " << s.noise_amplitude << "\n";
    if (r.noise_seed) out << "noise_seed = " << *r.noise_seed << "\n";
    out << "y_a = " << shortest(r.y_a) << "\n"
        << "y_b = " << shortest(r.y_b) << "\n"
        << "distance_m = " << shortest(r.distance_m) << "\n"
        << "speed_limit_mps = " << shortest(r.speed_limit_mps) << "\n"
        << "window_s = " << r.window_s << "\n"
        << "threshold = " << r.threshold << "\n"
        << "min_area = " << r.min_area << "\n"
        << "gate_px = " << shortest(r.gate_px) << "\n"
        << "miss_limit = " << r.miss_limit << "\n"
        << "merge_gap_px = " << r.merge_gap_px << "\n";
    for (const auto& v : s.vehicles) {
      out << "vehicle = " << v.spawn_frame << "," << shortest(v.speed_px_per_frame) << "," << shortest(v.x0) << ","
          << shortest(v.y0) << "," << v.w << "," << v.h << "," << v.intensity << "\n";
    }
  }
  for (const auto& a : c.actions) out << "\n" << emit_action(a);
  return out.str();
}

// ---------------------------------------------------------------------------
// Running

struct RunOptions {
  std::optional<std::uint64_t> seed_override;
  bool dump_frames = false;
};

struct RoadReport {
  std::string road_id;
  std::uint64_t a_crossings = 0;
  std::uint64_t b_crossings = 0;
  std::uint64_t tracks_created = 0;
  std::vector<double> measured_speeds;  // one per B crossing that carried a speed
  std::vector<traffic::FlowSample> samples;
};

struct RunReport {
  std::int64_t last_tick = 0;
  std::vector<RoadReport> roads;
  std::vector<traffic::ViolationRecord> violations;
  std::string board;
};

inline std::int64_t tick_at(double seconds, int fps) {
  return static_cast<std::int64_t>(std::ceil(seconds * fps - 1e-9));
}

inline std::int64_t last_tick(const ScenarioConfig& c) {
  return static_cast<std::int64_t>(std::floor(c.duration_s * c.roads.front().scene.fps + 1e-9));
}

inline RunReport run_scenario(ScenarioConfig config, const std::filesystem::path& out_dir, RunOptions options = {}) {
  namespace fs = std::filesystem;
  if (options.seed_override) {
    config.seed = *options.seed_override;
    for (std::size_t i = 0; i < config.roads.size(); ++i) {
      auto& r = config.roads[i];
      r.scene.noise_seed = r.noise_seed.value_or(detail::derived_noise_seed(config.seed, i));
    }
  }
  validate(config);

  fs::create_directories(out_dir);
  if (options.dump_frames) fs::create_directories(out_dir / "frames");
  auto open = [&](const char* name) {
    std::ofstream f(out_dir / name, std::ios::binary | std::ios::trunc);
    if (!f) throw traffic::StorageError("cannot create " + (out_dir / name).string());
    return f;
  };
  std::ofstream events = open("events.log");
  std::ofstream flows = open("flows.csv");
  flows << "road_id,window_index,count,rate_veh_per_min\n";
  traffic::ViolationStore store(out_dir);

  const int fps = config.roads.front().scene.fps;
  stations::TransportSim transport(config.latency_ticks, config.drop_probability, config.seed);
  transport.add_mailbox(config.main_id);

  stations::MainStationConfig main_config{config.main_id, config.security_code, {}};
  std::vector<stations::SubStation> subs;
  RunReport report;
  for (const auto& r : config.roads) {
    main_config.routes[r.road_id] = r.station_id;
    transport.add_mailbox(r.station_id);
    subs.emplace_back(stations::SubStationConfig{r.station_id, r.road_id, config.main_id, config.security_code,
                                                 r.geometry(), r.window_s, r.threshold, r.min_area, r.merge_gap_px,
                                                 tracking::TrackerConfig{r.gate_px, r.miss_limit}});
    report.roads.push_back({r.road_id, 0, 0, 0, {}, {}});
  }
  stations::MainStation main(std::move(main_config));

  std::multimap<std::int64_t, m2m::Message> scheduled;
  for (std::size_t i = 0; i < config.actions.size(); ++i) {
    const auto& a = config.actions[i];
    const auto tick = tick_at(a.at_s, fps);
    const auto seq = a.seq.value_or(i + 1);
    const auto auth = a.auth.value_or(config.security_code);
    const double date = static_cast<double>(tick) / fps;
    scheduled.emplace(tick, a.kind == m2m::Kind::Interrupt
                                ? m2m::make_interrupt(config.operator_id, config.main_id, date, seq, auth, a.road_id,
                                                      a.text)
                                : m2m::make_resume(config.operator_id, config.main_id, date, seq, auth, a.road_id));
  }

  auto log = [&](std::int64_t tick, stations::EventKind kind, std::string_view details) {
    events << stations::event_line(tick, kind, details);
  };
  auto send = [&](std::int64_t tick, m2m::Message msg) {
    const auto wire = m2m::serialize(msg);
    log(tick, stations::EventKind::Send, wire);
    if (transport.send(std::move(msg)).dropped) log(tick, stations::EventKind::Drop, wire);
  };

  std::string board;
  report.last_tick = last_tick(config);
  for (std::int64_t tick = 0; tick <= report.last_tick; ++tick) {
    transport.advance_to(tick);
    const double now_s = static_cast<double>(tick) / fps;

    for (auto [it, end] = scheduled.equal_range(tick); it != end; ++it) send(tick, it->second);

    for (std::size_t i = 0; i < subs.size(); ++i) {
      const auto& road = config.roads[i];
      const auto frame = imaging::render_scene(road.scene, tick);
      if (options.dump_frames) {
        char name[96];
        std::snprintf(name, sizeof name, "%s_%06lld.pgm", road.road_id.c_str(), static_cast<long long>(tick));
        const auto bytes = imaging::write_pgm(frame);
        std::ofstream f(out_dir / "frames" / name, std::ios::binary);
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      }
      auto out = subs[i].tick(frame, tick, store);
      auto& rr = report.roads[i];
      for (const auto& ev : out.crossings) {
        if (ev.line == tracking::Line::A) {
          ++rr.a_crossings;
        } else {
          ++rr.b_crossings;
          if (ev.speed_mps) rr.measured_speeds.push_back(*ev.speed_mps);
        }
      }
      rr.tracks_created = subs[i].tracker().tracks_created();
      for (const auto& v : out.violations) log(tick, stations::EventKind::Violation, traffic::to_csv_row(v));
      for (const auto& s : out.samples) {
        flows << s.road_id << "," << s.window_index << "," << s.count << "," << fixed(s.rate_veh_per_min, 2) << "\n";
        rr.samples.push_back(s);
      }
      for (auto& msg : out.outgoing) send(tick, std::move(msg));
    }

    // Zero latency lets replies go out and arrive within the same tick.
    for (auto due = transport.deliver_until(tick); !due.empty(); due = transport.deliver_until(tick)) {
      for (const auto& msg : due) {
        log(tick, stations::EventKind::Deliver, m2m::serialize(msg));
        if (msg.to == config.main_id) {
          for (auto& reply : main.handle(msg, now_s).outgoing) send(tick, std::move(reply));
        } else {
          for (auto& sub : subs) {
            if (sub.config().station_id == msg.to) sub.handle(msg);
          }
        }
      }
    }

    auto rendered = stations::render_board(main);
    if (tick == 0 || rendered != board) {
      board = std::move(rendered);
      log(tick, stations::EventKind::Board, board);
    }
  }

  std::ofstream board_file = open("board.txt");
  board_file << board;
  for (auto* f : {&events, &flows, &board_file}) {
    f->flush();
    if (!*f) throw traffic::StorageError("failed writing outputs to " + out_dir.string());
  }
  report.violations = store.records();
  report.board = board;
  return report;
}

}  // namespace m2mtraffic::scenario
