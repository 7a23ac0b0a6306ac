// Command-line front end: run scenarios, schedule operator messages, preview
// synthetic frames, validate configs.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "m2mtraffic/imaging.hpp"
#include "m2mtraffic/scenario.hpp"

namespace fs = std::filesystem;
using namespace m2mtraffic;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitIoError = 3;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw traffic::StorageError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

scenario::ScenarioConfig load(const fs::path& path) { return scenario::parse_config(read_file(path)); }

int cmd_run(const fs::path& config_path, const fs::path& out, std::optional<std::uint64_t> seed, bool dump) {
  const auto config = load(config_path);
  const auto start = std::chrono::steady_clock::now();
  const auto report = scenario::run_scenario(config, out, {seed, dump});
  const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& r : report.roads) {
    std::cout << "road " << r.road_id << ": " << r.b_crossings << " vehicles counted, " << r.samples.size()
              << " flow windows\n";
  }
  std::cout << report.violations.size() << " violations, " << report.last_tick + 1 << " ticks in " << fixed(elapsed, 2)
            << " s\n"
            << report.board;
  return 0;
}

int cmd_inject(const fs::path& config_path, scenario::ActionConfig action) {
  auto text = read_file(config_path);
  const auto config = scenario::parse_config(text);
  bool known_road = false;
  for (const auto& r : config.roads) known_road = known_road || r.road_id == action.road_id;
  if (!known_road) throw scenario::ConfigError(scenario::ConfigErrorCode::ConstraintViolation, 0,
                                               "unknown road " + action.road_id);
  if (!text.empty() && text.back() != '\n') text += '\n';
  text += "\n" + scenario::emit_action(action);
  // Refuse to write anything the parser would reject.
  scenario::parse_config(text);
  std::ofstream out(config_path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw traffic::StorageError("cannot write " + config_path.string());
  std::cout << "scheduled " << m2m::to_string(action.kind) << " for road " << action.road_id << " at "
            << shortest(action.at_s) << " s\n";
  return 0;
}

int cmd_render(const fs::path& config_path, const std::string& road_id, std::int64_t frame, const fs::path& out) {
  const auto config = load(config_path);
  for (const auto& r : config.roads) {
    if (r.road_id != road_id) continue;
    const auto bytes = imaging::write_pgm(imaging::render_scene(r.scene, frame));
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw traffic::StorageError("cannot write " + out.string());
    return 0;
  }
  throw scenario::ConfigError(scenario::ConfigErrorCode::ConstraintViolation, 0, "unknown road " + road_id);
}

int cmd_check(const fs::path& config_path) {
  const auto config = load(config_path);
  std::cout << "ok: " << config.roads.size() << " road(s), " << config.actions.size() << " action(s), "
            << scenario::last_tick(config) + 1 << " ticks\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-station traffic monitoring simulator"};
  app.require_subcommand(1);

  fs::path config_path;
  fs::path out_dir;
  std::optional<std::uint64_t> seed;
  bool dump_frames = false;
  auto* run = app.add_subcommand("run", "Run a scenario end to end");
  run->add_option("--config", config_path, "Scenario file")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_flag("--dump-frames", dump_frames, "Write every rendered frame as PGM");

  scenario::ActionConfig action;
  std::string kind = "INTERRUPT";
  std::string auth;
  std::uint64_t seq = 0;
  auto* inject = app.add_subcommand("inject", "Append a scheduled operator message to a scenario file");
  inject->add_option("--config", config_path, "Scenario file")->required();
  inject->add_option("--at", action.at_s, "Scenario time in seconds")->required();
  inject->add_option("--kind", kind, "INTERRUPT or RESUME")->check(CLI::IsMember({"INTERRUPT", "RESUME"}));
  inject->add_option("--road", action.road_id, "Target road id")->required();
  inject->add_option("--text", action.text, "Display text (INTERRUPT)");
  auto* auth_opt = inject->add_option("--code", auth, "Security code (defaults to the scenario code)");
  auto* seq_opt = inject->add_option("--seq", seq, "Operator sequence number");

  std::string road_id;
  std::int64_t frame = 0;
  auto* render = app.add_subcommand("render", "Write one synthetic frame as PGM");
  render->add_option("--config", config_path, "Scenario file")->required();
  render->add_option("--road", road_id, "Road id")->required();
  render->add_option("--frame", frame, "Frame index")->required()->check(CLI::NonNegativeNumber);
  render->add_option("--out", out_dir, "Output PGM file")->required();

  auto* check = app.add_subcommand("check", "Validate a scenario file");
  check->add_option("--config", config_path, "Scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir, seed, dump_frames);
    if (*inject) {
      action.kind = *m2m::kind_from_string(kind);
      if (*auth_opt) action.auth = auth;
      if (*seq_opt) action.seq = seq;
      return cmd_inject(config_path, action);
    }
    if (*render) return cmd_render(config_path, road_id, frame, out_dir);
    if (*check) return cmd_check(config_path);
  } catch (const scenario::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const traffic::StorageError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
