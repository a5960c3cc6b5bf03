// apfmpc: batch runner for APF + MPC scenarios.
//
//   apfmpc run      --scenario S [overrides] --out DIR
//   apfmpc compare  --scenario S [overrides] --out DIR
//   apfmpc sweep    --scenario S --gamma 0,1,2 --k 0,0.5,1 --out DIR
//   apfmpc validate --scenario S
//
// Exit codes: 0 goal reached (or success), 1 configuration error,
// 2 stalled, 3 timeout, 4 solver failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "apfmpc/apfmpc.hpp"

namespace fs = std::filesystem;
using namespace apfmpc;

namespace {

struct Invocation {
    std::string scenario_path;
    std::string mode;
    std::string gamma;
    std::string k;
    std::string krep;
    std::optional<int> horizon;
    std::optional<double> dt;
    std::optional<double> t_max;
    std::string out_dir = "out";
    std::string snapshots;
    std::string snapshot_times;
    bool strict = true;
    std::uint64_t seed = 0;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<double> parse_list(const std::string& text, const char* flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(std::string(flag) + ": '" + item + "' is not a number");
        }
    }
    return out;
}

std::optional<double> single_value(const std::string& text, const char* flag) {
    if (text.empty()) return std::nullopt;
    const auto v = parse_list(text, flag);
    if (v.size() != 1) throw ConfigError(std::string(flag) + " takes a single value for this command");
    return v.front();
}

int exit_code(Outcome o) {
    switch (o) {
        case Outcome::GoalReached: return 0;
        case Outcome::Stalled: return 2;
        case Outcome::Timeout: return 3;
        case Outcome::SolverFailure: return 4;
    }
    return 1;
}

void configure_logging() {
    auto logger = spdlog::stderr_color_mt("apfmpc");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("APFMPC_LOG_LEVEL")) {
        const std::string level = env;
        if (level == "error") spdlog::set_level(spdlog::level::err);
        else if (level == "warn") spdlog::set_level(spdlog::level::warn);
        else if (level == "info") spdlog::set_level(spdlog::level::info);
        else if (level == "debug") spdlog::set_level(spdlog::level::debug);
        else spdlog::warn("ignoring unknown APFMPC_LOG_LEVEL '{}'", level);
    }
}

Scenario load(const Invocation& inv) {
    if (inv.scenario_path.empty()) throw ConfigError("--scenario is required");
    ParsedScenario parsed = load_scenario(inv.scenario_path, ParseOptions{inv.strict});
    for (const auto& w : parsed.warnings) spdlog::warn("{}: {}", inv.scenario_path, w);
    return std::move(parsed.scenario);
}

// Overrides that take a single value (run, compare). Sweep applies the list
// flags itself.
void apply_overrides(Scenario& s, const Invocation& inv, bool lists_allowed) {
    if (!inv.mode.empty()) s.apf.mode = parse_apf_mode(inv.mode);
    if (!lists_allowed) {
        if (auto v = single_value(inv.gamma, "--gamma")) s.apf.gamma = *v;
        if (auto v = single_value(inv.k, "--k")) s.apf.k = *v;
        if (auto v = single_value(inv.krep, "--krep")) s.apf.k_rep = *v;
    }
    if (inv.horizon) s.mpc.horizon = *inv.horizon;
    if (inv.dt) s.mpc.dt = *inv.dt;
    if (inv.t_max) s.t_max = *inv.t_max;
    validate_scenario(s);
}

fs::path prepare_out(const Invocation& inv) {
    const fs::path dir = inv.out_dir;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

struct RunResult {
    TrajectoryLog log;
    RunMetrics metrics;
};

RunResult simulate(const Scenario& s) {
    RunResult r;
    r.log = run_closed_loop(s);
    r.metrics = compute_metrics(r.log, s);
    spdlog::info("{} [{}]: {} after {} steps", s.name, to_string(s.apf.mode), to_string(r.log.outcome),
                 r.log.records.size());
    return r;
}

void write_snapshots(const Invocation& inv, const TrajectoryLog& log, const fs::path& path) {
    const bool fractional = inv.snapshot_times.empty();
    const auto instants = fractional ? parse_list(inv.snapshots, "--snapshots")
                                     : parse_list(inv.snapshot_times, "--snapshot-times");
    if (instants.empty()) return;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << (fractional ? "fraction" : "time") << ",t,px,py,pz,vx,vy,vz,dist_goal\n";
    const auto recs = snapshot_records(log, instants, fractional);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        out << format_real(instants[i]) << ',' << format_real(r.t);
        for (int c = 0; c < 3; ++c) out << ',' << format_real(r.state.position[c]);
        for (int c = 0; c < 3; ++c) out << ',' << format_real(r.state.velocity[c]);
        out << ',' << format_real(r.goal_distance) << '\n';
    }
}

std::string mode_tag(ApfMode m) { return std::string(to_string(m)); }

json with_seed(json doc, const Invocation& inv) {
    doc["seed"] = inv.seed;
    return doc;
}

int cmd_run(const Invocation& inv) {
    Scenario s = load(inv);
    apply_overrides(s, inv, false);
    const fs::path dir = prepare_out(inv);
    const RunResult r = simulate(s);
    write_trajectory_csv(r.log, dir / ("trajectory_" + mode_tag(s.apf.mode) + ".csv"));
    write_json_file(with_seed(metrics_document(s.name, std::span(&r.metrics, 1)), inv), dir / "metrics.json");
    if (!inv.snapshots.empty() || !inv.snapshot_times.empty())
        write_snapshots(inv, r.log, dir / ("snapshots_" + mode_tag(s.apf.mode) + ".csv"));
    std::cout << s.name << ": " << to_string(r.log.outcome) << '\n';
    return exit_code(r.log.outcome);
}

int cmd_compare(const Invocation& inv) {
    Scenario s = load(inv);
    apply_overrides(s, inv, false);
    Scenario basic = s;
    basic.apf.mode = ApfMode::Basic;
    Scenario weighted = s;
    if (inv.mode.empty() || weighted.apf.mode == ApfMode::Basic) weighted.apf.mode = ApfMode::DirectionVelocityWeighted;

    const fs::path dir = prepare_out(inv);
    auto fut = std::async(std::launch::async, [&] { return simulate(weighted); });
    const RunResult a = simulate(basic);
    const RunResult b = fut.get();

    write_trajectory_csv(a.log, dir / ("trajectory_" + mode_tag(basic.apf.mode) + ".csv"));
    write_trajectory_csv(b.log, dir / ("trajectory_" + mode_tag(weighted.apf.mode) + ".csv"));
    const std::vector<RunMetrics> runs = {a.metrics, b.metrics};
    write_json_file(with_seed(metrics_document(s.name, runs), inv), dir / "metrics.json");
    if (!inv.snapshots.empty() || !inv.snapshot_times.empty()) {
        write_snapshots(inv, a.log, dir / ("snapshots_" + mode_tag(basic.apf.mode) + ".csv"));
        write_snapshots(inv, b.log, dir / ("snapshots_" + mode_tag(weighted.apf.mode) + ".csv"));
    }
    std::cout << s.name << ": " << mode_tag(basic.apf.mode) << "=" << to_string(a.log.outcome) << ", "
              << mode_tag(weighted.apf.mode) << "=" << to_string(b.log.outcome) << '\n';
    return 0;
}

struct GridPoint {
    double gamma;
    double k;
    double k_rep;
};

int cmd_sweep(const Invocation& inv) {
    Scenario s = load(inv);
    apply_overrides(s, inv, true);
    if (inv.gamma.empty() && inv.k.empty() && inv.krep.empty())
        throw ConfigError("sweep needs at least one of --gamma, --k, --krep");
    auto axis = [](const std::string& text, const char* flag, double fallback) {
        auto v = parse_list(text, flag);
        if (text.empty()) v = {fallback};
        return v;
    };
    const auto gammas = axis(inv.gamma, "--gamma", s.apf.gamma);
    const auto ks = axis(inv.k, "--k", s.apf.k);
    const auto kreps = axis(inv.krep, "--krep", s.apf.k_rep);
    std::vector<GridPoint> grid;
    for (double g : gammas)
        for (double k : ks)
            for (double kr : kreps) grid.push_back({g, k, kr});
    if (grid.empty()) throw ConfigError("sweep grid is empty");

    struct Row {
        GridPoint point;
        std::optional<RunMetrics> metrics;
        std::string error;
    };
    std::vector<std::future<Row>> jobs;
    for (const GridPoint& gp : grid) {
        jobs.push_back(std::async(std::launch::async, [gp, s] {
            Row row{gp, std::nullopt, {}};
            Scenario local = s;
            local.apf.gamma = gp.gamma;
            local.apf.k = gp.k;
            local.apf.k_rep = gp.k_rep;
            try {
                local.apf.validate();
                row.metrics = simulate(local).metrics;
            } catch (const Error& e) {
                row.error = e.what();
            }
            return row;
        }));
    }
    std::vector<Row> rows;
    for (auto& j : jobs) rows.push_back(j.get());

    const fs::path dir = prepare_out(inv);
    json doc;
    doc["scenario"] = s.name;
    doc["mode"] = mode_tag(s.apf.mode);
    doc["seed"] = inv.seed;
    doc["rows"] = json::array();
    std::ofstream csv(dir / "sweep.csv", std::ios::binary);
    if (!csv) throw IoError("cannot write sweep.csv");
    csv << "index,gamma,k,k_rep,valid,outcome,stalled,time_to_goal,min_clearance,path_length,control_effort\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& r = rows[i];
        json jr = {{"index", i}, {"gamma", r.point.gamma}, {"k", r.point.k}, {"k_rep", r.point.k_rep},
                   {"valid", r.metrics.has_value()}};
        csv << i << ',' << format_real(r.point.gamma) << ',' << format_real(r.point.k) << ','
            << format_real(r.point.k_rep) << ',';
        if (!r.metrics) {
            jr["error"] = r.error;
            csv << "false,invalid,,,,,\n";
            spdlog::warn("grid point {} rejected: {}", i, r.error);
        } else {
            const RunMetrics& m = *r.metrics;
            const bool stalled = !m.stall_events.empty();
            jr["metrics"] = metrics_to_json(m);
            jr["stalled"] = stalled;
            csv << "true," << to_string(m.outcome) << ',' << (stalled ? "true" : "false") << ','
                << (m.time_to_goal ? format_real(*m.time_to_goal) : "") << ','
                << format_real(m.min_clearance_overall()) << ',' << format_real(m.path_length) << ','
                << format_real(m.control_effort) << '\n';
        }
        doc["rows"].push_back(jr);
    }
    write_json_file(doc, dir / "sweep.json");
    std::cout << s.name << ": " << rows.size() << " grid points\n";
    return 0;
}

int cmd_validate(const Invocation& inv) {
    Scenario s = load(inv);
    apply_overrides(s, inv, false);
    std::cout << s.name << ": valid (" << s.obstacles.size() << " obstacles, mode " << to_string(s.apf.mode)
              << ")\n";
    return 0;
}

void add_common(CLI::App* cmd, Invocation& inv, bool sweep) {
    cmd->add_option("--scenario", inv.scenario_path, "Scenario JSON file")->required();
    cmd->add_option("--mode", inv.mode, "APF mode: basic|direction|direction-velocity");
    const char* list_hint = sweep ? " (comma-separated list)" : "";
    cmd->add_option("--gamma", inv.gamma, std::string("Direction gain gamma") + list_hint);
    cmd->add_option("--k", inv.k, std::string("Relative-velocity gain k in [0,1]") + list_hint);
    cmd->add_option("--krep", inv.krep, std::string("Repulsive gain k_rep") + list_hint);
    cmd->add_option("--horizon", inv.horizon, "MPC horizon N");
    cmd->add_option("--dt", inv.dt, "Control period (s)");
    cmd->add_option("--tmax", inv.t_max, "Simulated time limit (s)");
    cmd->add_option("--out", inv.out_dir, "Output directory");
    cmd->add_option("--snapshots", inv.snapshots, "Snapshot fractions of completion time, e.g. 0.25,0.5,0.75,1");
    cmd->add_option("--snapshot-times", inv.snapshot_times, "Snapshot absolute times (s); overrides --snapshots");
    cmd->add_flag("--strict,!--lenient", inv.strict, "Reject unknown scenario fields (default) or only warn");
    cmd->add_option("--seed", inv.seed, "Recorded in outputs; the simulation itself is deterministic");
}

}  // namespace

int main(int argc, char** argv) {
    configure_logging();
    CLI::App app{"APF + MPC collision-avoidance simulator"};
    app.require_subcommand(1);
    Invocation inv;
    auto* run = app.add_subcommand("run", "Simulate one scenario");
    auto* compare = app.add_subcommand("compare", "Simulate basic and weighted APF side by side");
    auto* sweep = app.add_subcommand("sweep", "Grid over gamma, k and k_rep");
    auto* validate = app.add_subcommand("validate", "Parse and validate a scenario");
    add_common(run, inv, false);
    add_common(compare, inv, false);
    add_common(sweep, inv, true);
    add_common(validate, inv, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*run) return cmd_run(inv);
        if (*compare) return cmd_compare(inv);
        if (*sweep) return cmd_sweep(inv);
        if (*validate) return cmd_validate(inv);
    } catch (const ParseError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 1;
}
