// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Subcommands:
//   serve     run the authoritative server on a real datagram socket
//   simulate  run a scenario deterministically and write statistics
//   replay    print retargeted poses and fired events for a capture
//   retarget  convert a skeleton capture to bone-orientation records
//   track     convert marker observations to object-pose records
//   stats     summarize a session event log
//
// Exit codes: 0 success, 1 invalid input (the message names the offending
// flag or field), 2 runtime failure.

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <ms2/interaction.hpp>
#include <ms2/io.hpp>
#include <ms2/marker.hpp>
#include <ms2/retarget.hpp>
#include <ms2/scene.hpp>
#include <ms2/server.hpp>
#include <ms2/sim.hpp>
#include <ms2/udp.hpp>

namespace {

std::atomic<bool> g_stop{false};
static_assert(std::atomic<bool>::is_always_lock_free);

void request_stop(int) { g_stop.store(true, std::memory_order_relaxed); }

void install_stop_handlers() {
  struct sigaction sa {};
  sa.sa_handler = request_stop;
  ::sigaction(SIGINT, &sa, nullptr);
  ::sigaction(SIGTERM, &sa, nullptr);
}

// Loads one input file, folding stream and parse failures into a message
// that names the flag the path came from.
template <class Loader>
auto load_file(const std::string& flag, const std::string& path, Loader loader) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ms2::ValidationError("--" + flag + " " + path + ": cannot open file");
  try {
    return loader(in);
  } catch (const ms2::Error& e) {
    throw ms2::ValidationError("--" + flag + " " + path + ": " + e.what());
  }
}

// flag == nullptr marks a path the tool derived itself; failing to open one
// is an environment problem, not a validation error.
std::ofstream open_output(const std::string& path, const char* flag) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    if (flag) {
      throw ms2::ValidationError("--" + std::string(flag) + " " + path +
                                 ": cannot open for writing");
    }
    throw std::runtime_error("cannot open for writing: " + path);
  }
  return out;
}

void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

struct ServeOptions {
  std::string scene;
  std::string rig;
  std::string bind;
  std::uint32_t tick_rate = 60;
};

int run_serve(const ServeOptions& o) {
  ms2::SessionConfig session;
  session.tick_rate_hz = o.tick_rate;
  session.scene = load_file("scene", o.scene, [](std::istream& in) { return ms2::load_scene(in); });
  session.rig = load_file("rig", o.rig, [](std::istream& in) { return ms2::load_rig(in); });
  ms2::ServerCore server{std::move(session)};

  ms2::udp::Socket socket(o.bind);
  install_stop_handlers();
  std::cerr << "listening on " << socket.local_name() << " at " << server.config().tick_rate_hz
            << " Hz\n";

  const std::uint64_t ticks = ms2::udp::serve(server, socket, g_stop);

  const ms2::SessionStats& st = server.stats();
  std::cout << nlohmann::json{{"ticks", ticks},
                              {"datagrams_in", st.datagrams_in},
                              {"datagrams_out", st.datagrams_out},
                              {"joins", st.joins},
                              {"events_fired", st.events_fired},
                              {"expired_clients", st.expired_clients}}
                   .dump()
            << '\n';
  return 0;
}

struct SimulateOptions {
  std::string scenario;
  std::optional<std::uint64_t> seed;
};

int run_simulate(const SimulateOptions& o) {
  const std::filesystem::path scenario_path(o.scenario);
  ms2::ScenarioConfig scenario = load_file(
      "scenario", o.scenario, [](std::istream& in) { return ms2::load_scenario(in); });
  if (o.seed) scenario.seed = *o.seed;

  ms2::SimInputs inputs;
  try {
    inputs = ms2::load_sim_inputs(scenario, scenario_path.parent_path());
  } catch (const ms2::Error& e) {
    throw ms2::ValidationError("--scenario " + o.scenario + ": " + e.what());
  }

  ms2::Simulation sim(scenario, inputs);
  const ms2::SimResult result = sim.run();

  const std::string stem = scenario_path.stem().string();
  const std::string stats_path = stem + ".stats.jsonl";
  const std::string events_path = stem + ".events.jsonl";
  {
    std::ofstream out = open_output(stats_path, nullptr);
    ms2::write_sim_stats(out, result);
    finish_output(out, stats_path);
  }
  {
    std::ofstream out = open_output(events_path, nullptr);
    ms2::save_event_log(out, result.event_log);
    finish_output(out, events_path);
  }
  std::cout << "wrote " << stats_path << '\n';
  std::cout << "wrote " << events_path << '\n';

  std::size_t converged = 0;
  for (const ms2::ClientReport& c : result.clients) converged += c.converged ? 1 : 0;
  std::cerr << result.final_tick << " ticks, " << result.event_log.size() << " events, "
            << converged << "/" << result.clients.size() << " clients converged\n";
  return 0;
}

struct ReplayOptions {
  std::string capture;
  std::string rig;
  std::optional<std::uint64_t> seed;  // accepted for interface symmetry; replay has no rng
};

struct RetargetedCapture {
  std::vector<ms2::BoneOrientationSet> sets;
  std::vector<ms2::WorldEvent> events;
};

RetargetedCapture retarget_capture(const std::string& capture_flag, const std::string& path,
                                   const ms2::RigDefinition& rig, bool run_interaction) {
  const auto frames = load_file(capture_flag, path,
                                [](std::istream& in) { return ms2::load_skeleton_capture(in); });
  RetargetedCapture out;
  ms2::InteractionState interaction;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    try {
      out.sets.push_back(ms2::retarget_frame(frames[i], rig));
    } catch (const ms2::Error& e) {
      throw ms2::ValidationError("--" + capture_flag + " " + path + " frame " +
                                 std::to_string(i) + ": " + e.what());
    }
    if (!run_interaction) continue;
    const auto joints = ms2::forward_kinematics(rig, out.sets.back());
    const std::vector<ms2::HandSample> hands{
        {frames[i].user, ms2::kHandLeftIndex, joints[ms2::kHandLeft]},
        {frames[i].user, ms2::kHandRightIndex, joints[ms2::kHandRight]}};
    // A capture carries no tracked objects, so grabs cannot fire; the pass
    // still runs so malformed streaks would surface.
    const auto fired =
        ms2::grab_update(interaction, static_cast<ms2::Tick>(i + 1), hands, {});
    out.events.insert(out.events.end(), fired.begin(), fired.end());
  }
  return out;
}

int run_replay(const ReplayOptions& o) {
  const auto rig = load_file("rig", o.rig, [](std::istream& in) { return ms2::load_rig(in); });
  const RetargetedCapture result = retarget_capture("capture", o.capture, rig, true);
  ms2::save_orientation_records(std::cout, result.sets);
  ms2::save_event_log(std::cout, result.events);
  std::cerr << result.sets.size() << " frames, " << result.events.size() << " events\n";
  return 0;
}

struct RetargetOptions {
  std::string capture;
  std::string rig;
  std::string out;
};

int run_retarget(const RetargetOptions& o) {
  const auto rig = load_file("rig", o.rig, [](std::istream& in) { return ms2::load_rig(in); });
  const RetargetedCapture result = retarget_capture("capture", o.capture, rig, false);
  std::ofstream out = open_output(o.out, "out");
  ms2::save_orientation_records(out, result.sets);
  finish_output(out, o.out);
  std::cerr << result.sets.size() << " frames retargeted\n";
  return 0;
}

struct TrackOptions {
  std::string obs;
  std::string camera;
  std::string out;
};

int run_track(const TrackOptions& o) {
  const auto camera =
      load_file("camera", o.camera, [](std::istream& in) { return ms2::load_camera(in); });
  const auto observations = load_file(
      "obs", o.obs, [](std::istream& in) { return ms2::load_observation_capture(in); });

  std::vector<ms2::ObjectPose> records;
  std::size_t failures = 0;
  for (const ms2::MarkerObservation& obs : observations) {
    try {
      records.push_back(ms2::pose_from_marker(obs, camera));
    } catch (const ms2::Error&) {
      ++failures;
    }
  }
  std::ofstream out = open_output(o.out, "out");
  ms2::save_object_pose_records(out, records);
  finish_output(out, o.out);
  std::cerr << records.size() << " poses estimated, " << failures << " failures\n";
  return 0;
}

struct StatsOptions {
  std::string log;
};

int run_stats(const StatsOptions& o) {
  const auto events =
      load_file("log", o.log, [](std::istream& in) { return ms2::load_event_log(in); });
  std::map<std::string, std::size_t> counts;
  for (const ms2::WorldEvent& ev : events) ++counts[ms2::event_kind_name(ev.kind)];

  nlohmann::json summary{{"events", events.size()}, {"counts", counts}};
  if (events.empty()) {
    summary["first_tick"] = nullptr;
    summary["last_tick"] = nullptr;
  } else {
    const auto [lo, hi] = std::minmax_element(
        events.begin(), events.end(),
        [](const ms2::WorldEvent& a, const ms2::WorldEvent& b) { return a.tick < b.tick; });
    summary["first_tick"] = lo->tick;
    summary["last_tick"] = hi->tick;
  }
  std::cout << summary.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Avatar retargeting, marker tracking, and authoritative state-sync tools"};
  app.require_subcommand(1);

  ServeOptions serve_opts;
  CLI::App* serve = app.add_subcommand("serve", "Run the authoritative server on a UDP socket");
  serve->add_option("--scene", serve_opts.scene, "Scene model file")->required();
  serve->add_option("--rig", serve_opts.rig, "Rig definition file")->required();
  serve->add_option("--bind", serve_opts.bind, "ip:port to listen on")->required();
  serve->add_option("--tick-rate", serve_opts.tick_rate, "Simulation ticks per second")
      ->capture_default_str();

  SimulateOptions sim_opts;
  CLI::App* simulate =
      app.add_subcommand("simulate", "Run a scenario deterministically and write statistics");
  simulate->add_option("--scenario", sim_opts.scenario, "Scenario file")->required();
  simulate->add_option("--seed", sim_opts.seed, "Override the scenario seed");

  ReplayOptions replay_opts;
  CLI::App* replay =
      app.add_subcommand("replay", "Print retargeted poses and fired events for a capture");
  replay->add_option("--capture", replay_opts.capture, "Skeleton capture file")->required();
  replay->add_option("--rig", replay_opts.rig, "Rig definition file")->required();
  replay->add_option("--seed", replay_opts.seed, "Unused; replay is input-driven");

  RetargetOptions retarget_opts;
  CLI::App* retarget =
      app.add_subcommand("retarget", "Convert a skeleton capture to bone-orientation records");
  retarget->add_option("--capture", retarget_opts.capture, "Skeleton capture file")->required();
  retarget->add_option("--rig", retarget_opts.rig, "Rig definition file")->required();
  retarget->add_option("--out", retarget_opts.out, "Output records file")->required();

  TrackOptions track_opts;
  CLI::App* track =
      app.add_subcommand("track", "Convert marker observations to object-pose records");
  track->add_option("--obs", track_opts.obs, "Marker observation capture file")->required();
  track->add_option("--camera", track_opts.camera, "Camera intrinsics file")->required();
  track->add_option("--out", track_opts.out, "Output records file")->required();

  StatsOptions stats_opts;
  CLI::App* stats = app.add_subcommand("stats", "Summarize a session event log");
  stats->add_option("--log", stats_opts.log, "Event log file")->required();

  int rc = 0;
  serve->callback([&] { rc = run_serve(serve_opts); });
  simulate->callback([&] { rc = run_simulate(sim_opts); });
  replay->callback([&] { rc = run_replay(replay_opts); });
  retarget->callback([&] { rc = run_retarget(retarget_opts); });
  track->callback([&] { rc = run_track(track_opts); });
  stats->callback([&] { rc = run_stats(stats_opts); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ms2::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return rc;
}
