#pragma once

// Scenario JSON parsing/validation, trajectory CSV and metrics JSON writers.
// The schemas are documented in docs/formats.md.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "apfmpc/simulation.hpp"

namespace apfmpc {

using nlohmann::json;

struct ParseOptions {
    /// Reject unknown fields; when false they are reported as warnings.
    bool strict = true;
};

struct ParsedScenario {
    Scenario scenario;
    std::vector<std::string> warnings;
};

namespace io_detail {

inline std::size_t line_of(std::string_view text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

// Walks one JSON object, remembering which keys were read so leftovers can
// be reported with their full path.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path, const ParseOptions& opts, std::vector<std::string>& warnings)
        : j_(j), path_(std::move(path)), opts_(opts), warnings_(warnings) {
        if (!j_.is_object()) throw ParseError(where() + ": expected an object", path_);
    }

    ~ObjectReader() noexcept(false) {
        if (std::uncaught_exceptions() == 0) finish();
    }

    ObjectReader(const ObjectReader&) = delete;
    ObjectReader& operator=(const ObjectReader&) = delete;

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& at(const std::string& key) {
        if (!j_.contains(key)) throw ParseError(child(key) + ": required field missing", child(key));
        seen_.insert(key);
        return j_.at(key);
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    double number(const std::string& key) {
        const json& v = at(key);
        if (!v.is_number()) throw ParseError(child(key) + ": expected a number", child(key));
        return v.get<double>();
    }

    double number_or(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

    int integer_or(const std::string& key, int fallback) {
        if (!has(key)) return fallback;
        const json& v = at(key);
        if (!v.is_number_integer()) throw ParseError(child(key) + ": expected an integer", child(key));
        return v.get<int>();
    }

    bool boolean_or(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const json& v = at(key);
        if (!v.is_boolean()) throw ParseError(child(key) + ": expected true or false", child(key));
        return v.get<bool>();
    }

    std::string string_or(const std::string& key, std::string fallback) {
        if (!has(key)) return fallback;
        const json& v = at(key);
        if (!v.is_string()) throw ParseError(child(key) + ": expected a string", child(key));
        return v.get<std::string>();
    }

    std::vector<double> numbers(const std::string& key) {
        const json& v = at(key);
        if (!v.is_array()) throw ParseError(child(key) + ": expected an array of numbers", child(key));
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number())
                throw ParseError(child(key) + "[" + std::to_string(i) + "]: expected a number", child(key));
            out.push_back(v[i].get<double>());
        }
        return out;
    }

    Vec3 vec3(const std::string& key) {
        const auto v = numbers(key);
        if (v.size() != 3) throw ParseError(child(key) + ": expected 3 components", child(key));
        return {v[0], v[1], v[2]};
    }

    Vec3 vec3_or(const std::string& key, const Vec3& fallback) { return has(key) ? vec3(key) : fallback; }

    /// Square matrix given either as a diagonal list or as nested rows.
    template <int N>
    Eigen::Matrix<double, N, N> square_or(const std::string& key, const Eigen::Matrix<double, N, N>& fallback) {
        if (!has(key)) return fallback;
        const json& v = at(key);
        const std::string p = child(key);
        if (!v.is_array()) throw ParseError(p + ": expected an array", p);
        Eigen::Matrix<double, N, N> m = Eigen::Matrix<double, N, N>::Zero();
        if (v.size() == static_cast<std::size_t>(N) && v[0].is_number()) {
            for (int i = 0; i < N; ++i) {
                if (!v[static_cast<std::size_t>(i)].is_number()) throw ParseError(p + ": expected numbers", p);
                m(i, i) = v[static_cast<std::size_t>(i)].template get<double>();
            }
            return m;
        }
        if (v.size() != static_cast<std::size_t>(N))
            throw ParseError(p + ": expected " + std::to_string(N) + " diagonal entries or rows", p);
        for (int i = 0; i < N; ++i) {
            const json& row = v[static_cast<std::size_t>(i)];
            if (!row.is_array() || row.size() != static_cast<std::size_t>(N))
                throw ParseError(p + "[" + std::to_string(i) + "]: expected a row of " + std::to_string(N), p);
            for (int c = 0; c < N; ++c) {
                if (!row[static_cast<std::size_t>(c)].is_number()) throw ParseError(p + ": expected numbers", p);
                m(i, c) = row[static_cast<std::size_t>(c)].template get<double>();
            }
        }
        return m;
    }

    std::string where() const { return path_.empty() ? "<root>" : path_; }

private:
    void finish() {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (seen_.count(it.key())) continue;
            const std::string p = child(it.key());
            if (opts_.strict) throw ParseError(p + ": unknown field", p);
            warnings_.push_back(p + ": unknown field ignored");
        }
    }

    const json& j_;
    std::string path_;
    const ParseOptions& opts_;
    std::vector<std::string>& warnings_;
    std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& message) {
    if (!ok) throw ValidationError(message);
}

}  // namespace io_detail

/// Checks every scenario invariant, throwing ValidationError on the first
/// violation.
inline void validate_scenario(const Scenario& s) {
    using io_detail::require;
    require(s.t_max > 0.0, "t_max must be > 0");
    require(s.goal.capture_radius > 0.0, "goal.capture_radius must be > 0");
    require(s.reference_step > 0.0, "reference.step_size must be > 0");
    require(s.stall.window > 0.0 && s.stall.eps_v >= 0.0 && s.stall.eps_goal >= 0.0,
            "stall: window must be > 0 and eps_v, eps_goal >= 0");
    require(is_finite(s.start.position) && is_finite(s.start.velocity) && is_finite(s.goal.position),
            "start and goal must be finite");
    for (std::size_t i = 0; i < s.obstacles.size(); ++i) {
        const Obstacle& o = s.obstacles[i];
        const std::string tag = "obstacles[" + std::to_string(i) + "]: ";
        require(is_finite(o.center) && is_finite(o.velocity), tag + "center and velocity must be finite");
        require(o.hard_radius > 0.0, tag + "hard_radius must be > 0");
        require(o.influence_radius > o.hard_radius, tag + "influence_radius must exceed hard_radius");
        require(obstacle_distance(o, s.start.position) > o.hard_radius, tag + "start lies inside hard_radius");
        require(obstacle_distance(o, s.goal.position) > o.hard_radius, tag + "goal lies inside hard_radius");
        if (o.motion == ObstacleMotion::Bounce) require(s.bounds.has_value(), tag + "bounce motion needs world_bounds");
    }
    if (s.bounds) require((s.bounds->min.array() < s.bounds->max.array()).all(), "world_bounds: min must be < max");
    try {
        s.apf.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("apf: ") + e.what() + (s.apf.k > 1.0 ? " (k > 1 breaks the weight lower bound)" : ""));
    }
    s.mpc.validate();
}

inline ParsedScenario parse_scenario(std::string_view text, const ParseOptions& opts = {}) {
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        const std::size_t line = io_detail::line_of(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ParseError("line " + std::to_string(line) + ": " + e.what(), {}, line);
    }

    ParsedScenario out;
    Scenario& s = out.scenario;
    auto& warn = out.warnings;
    {
        io_detail::ObjectReader r(root, "", opts, warn);
        s.name = r.string_or("name", s.name);
        s.t_max = r.number_or("t_max", s.t_max);

        const std::string axis = r.string_or("axis_convention", "z-up");
        if (axis == "z-up") s.axis = AxisConvention::ZUp;
        else if (axis == "z-down") s.axis = AxisConvention::ZDown;
        else throw ParseError("axis_convention: expected z-up or z-down", "axis_convention");

        {
            io_detail::ObjectReader st(r.at("start"), "start", opts, warn);
            s.start.position = st.vec3("position");
            s.start.velocity = st.vec3_or("velocity", Vec3::Zero());
        }
        {
            io_detail::ObjectReader g(r.at("goal"), "goal", opts, warn);
            s.goal.position = g.vec3("position");
            s.goal.capture_radius = g.number_or("capture_radius", s.goal.capture_radius);
        }
        if (r.has("obstacles")) {
            const json& arr = r.at("obstacles");
            if (!arr.is_array()) throw ParseError("obstacles: expected an array", "obstacles");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                io_detail::ObjectReader o(arr[i], "obstacles[" + std::to_string(i) + "]", opts, warn);
                Obstacle ob;
                ob.center = o.vec3("center");
                ob.velocity = o.vec3_or("velocity", Vec3::Zero());
                ob.influence_radius = o.number("influence_radius");
                ob.hard_radius = o.number("hard_radius");
                ob.vertical_cylinder = o.boolean_or("vertical_cylinder", false);
                const std::string motion = o.string_or("motion", "constant");
                if (motion == "constant") ob.motion = ObstacleMotion::ConstantVelocity;
                else if (motion == "bounce") ob.motion = ObstacleMotion::Bounce;
                else throw ParseError(o.child("motion") + ": expected constant or bounce", o.child("motion"));
                s.obstacles.push_back(ob);
            }
        }
        if (r.has("world_bounds")) {
            io_detail::ObjectReader b(r.at("world_bounds"), "world_bounds", opts, warn);
            s.bounds = WorldBounds{b.vec3("min"), b.vec3("max")};
        }
        if (r.has("apf")) {
            io_detail::ObjectReader a(r.at("apf"), "apf", opts, warn);
            s.apf.k_rep = a.number_or("k_rep", s.apf.k_rep);
            s.apf.k_att = a.number_or("k_att", s.apf.k_att);
            s.apf.gamma = a.number_or("gamma", s.apf.gamma);
            s.apf.k = a.number_or("k", s.apf.k);
            s.apf.att_saturation_radius = a.number_or("att_saturation_radius", s.apf.att_saturation_radius);
            if (a.has("mode")) {
                try {
                    s.apf.mode = parse_apf_mode(a.string_or("mode", ""));
                } catch (const ValidationError& e) {
                    throw ParseError(std::string("apf.mode: ") + e.what(), "apf.mode");
                }
            }
            if (a.has("approach_sign")) {
                try {
                    s.apf.approach_sign = parse_approach_sign(a.string_or("approach_sign", ""));
                } catch (const ValidationError& e) {
                    throw ParseError(std::string("apf.approach_sign: ") + e.what(), "apf.approach_sign");
                }
            }
        }
        if (r.has("mpc")) {
            io_detail::ObjectReader m(r.at("mpc"), "mpc", opts, warn);
            s.mpc.horizon = m.integer_or("horizon", s.mpc.horizon);
            s.mpc.dt = m.number_or("dt", s.mpc.dt);
            s.mpc.Q = m.square_or<6>("Q", s.mpc.Q);
            s.mpc.F_term = m.square_or<6>("F", s.mpc.F_term);
            s.mpc.R = m.square_or<3>("R", s.mpc.R);
            s.mpc.v_max = m.number_or("v_max", s.mpc.v_max);
            s.mpc.a_max = m.number_or("a_max", s.mpc.a_max);
            if (m.has("A_eq") || m.has("b_eq")) {
                const json& a = m.at("A_eq");
                const auto b = m.numbers("b_eq");
                if (!a.is_array() || a.size() != b.size()) throw ParseError("mpc.A_eq: must have one row per b_eq entry", "mpc.A_eq");
                const Eigen::Index cols = a.empty() ? 0 : static_cast<Eigen::Index>(a[0].size());
                s.mpc.A_eq.resize(static_cast<Eigen::Index>(a.size()), cols);
                s.mpc.b_eq.resize(static_cast<Eigen::Index>(b.size()));
                for (std::size_t i = 0; i < a.size(); ++i) {
                    if (!a[i].is_array() || static_cast<Eigen::Index>(a[i].size()) != cols)
                        throw ParseError("mpc.A_eq: ragged rows", "mpc.A_eq");
                    for (Eigen::Index c = 0; c < cols; ++c) {
                        if (!a[i][static_cast<std::size_t>(c)].is_number()) throw ParseError("mpc.A_eq: expected numbers", "mpc.A_eq");
                        s.mpc.A_eq(static_cast<Eigen::Index>(i), c) = a[i][static_cast<std::size_t>(c)].get<double>();
                    }
                    s.mpc.b_eq[static_cast<Eigen::Index>(i)] = b[i];
                }
            }
        }
        if (r.has("reference")) {
            io_detail::ObjectReader ref(r.at("reference"), "reference", opts, warn);
            s.reference_step = ref.number_or("step_size", s.reference_step);
        }
        if (r.has("stall")) {
            io_detail::ObjectReader st(r.at("stall"), "stall", opts, warn);
            s.stall.window = st.number_or("window", s.stall.window);
            s.stall.eps_v = st.number_or("eps_v", s.stall.eps_v);
            s.stall.eps_goal = st.number_or("eps_goal", s.stall.eps_goal);
        }
    }
    validate_scenario(s);
    return out;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline ParsedScenario load_scenario(const std::filesystem::path& path, const ParseOptions& opts = {}) {
    return parse_scenario(read_text_file(path), opts);
}

namespace io_detail {

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

template <int N>
json square_json(const Eigen::Matrix<double, N, N>& m) {
    const Eigen::Matrix<double, N, N> off = m - Eigen::Matrix<double, N, N>(m.diagonal().asDiagonal());
    json out = json::array();
    if (off.isZero(0.0)) {
        for (int i = 0; i < N; ++i) out.push_back(m(i, i));
        return out;
    }
    for (int i = 0; i < N; ++i) {
        json row = json::array();
        for (int c = 0; c < N; ++c) row.push_back(m(i, c));
        out.push_back(row);
    }
    return out;
}

}  // namespace io_detail

/// Canonical JSON form of a scenario; parse(to_json(s)) reproduces s.
inline json scenario_to_json(const Scenario& s) {
    using io_detail::vec_json;
    json j;
    j["name"] = s.name;
    j["axis_convention"] = s.axis == AxisConvention::ZUp ? "z-up" : "z-down";
    j["t_max"] = s.t_max;
    j["start"] = {{"position", vec_json(s.start.position)}, {"velocity", vec_json(s.start.velocity)}};
    j["goal"] = {{"position", vec_json(s.goal.position)}, {"capture_radius", s.goal.capture_radius}};
    j["obstacles"] = json::array();
    for (const Obstacle& o : s.obstacles) {
        j["obstacles"].push_back({{"center", vec_json(o.center)},
                                  {"velocity", vec_json(o.velocity)},
                                  {"influence_radius", o.influence_radius},
                                  {"hard_radius", o.hard_radius},
                                  {"vertical_cylinder", o.vertical_cylinder},
                                  {"motion", o.motion == ObstacleMotion::Bounce ? "bounce" : "constant"}});
    }
    if (s.bounds) j["world_bounds"] = {{"min", vec_json(s.bounds->min)}, {"max", vec_json(s.bounds->max)}};
    j["apf"] = {{"k_rep", s.apf.k_rep},
                {"k_att", s.apf.k_att},
                {"gamma", s.apf.gamma},
                {"k", s.apf.k},
                {"mode", std::string(to_string(s.apf.mode))},
                {"approach_sign", std::string(to_string(s.apf.approach_sign))},
                {"att_saturation_radius", s.apf.att_saturation_radius}};
    j["mpc"] = {{"horizon", s.mpc.horizon},
                {"dt", s.mpc.dt},
                {"Q", io_detail::square_json<6>(s.mpc.Q)},
                {"F", io_detail::square_json<6>(s.mpc.F_term)},
                {"R", io_detail::square_json<3>(s.mpc.R)},
                {"v_max", s.mpc.v_max},
                {"a_max", s.mpc.a_max}};
    if (s.mpc.A_eq.size() != 0) {
        json a = json::array();
        for (Eigen::Index i = 0; i < s.mpc.A_eq.rows(); ++i) {
            json row = json::array();
            for (Eigen::Index c = 0; c < s.mpc.A_eq.cols(); ++c) row.push_back(s.mpc.A_eq(i, c));
            a.push_back(row);
        }
        j["mpc"]["A_eq"] = a;
        j["mpc"]["b_eq"] = std::vector<double>(s.mpc.b_eq.data(), s.mpc.b_eq.data() + s.mpc.b_eq.size());
    }
    j["reference"] = {{"step_size", s.reference_step}};
    j["stall"] = {{"window", s.stall.window}, {"eps_v", s.stall.eps_v}, {"eps_goal", s.stall.eps_goal}};
    return j;
}

// --- trajectory CSV -------------------------------------------------------

inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline std::vector<std::string> trajectory_columns(std::size_t n_obstacles) {
    std::vector<std::string> cols = {"t", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az", "dist_goal"};
    for (std::size_t i = 1; i <= n_obstacles; ++i) cols.push_back("dist_obs_" + std::to_string(i));
    for (std::size_t i = 1; i <= n_obstacles; ++i) cols.push_back("weight_obs_" + std::to_string(i));
    cols.push_back("solver_status");
    return cols;
}

/// Parsed trajectory CSV: numeric columns plus the trailing status column.
struct TrajectoryTable {
    std::vector<std::string> columns;  // includes "solver_status" last
    std::vector<std::vector<double>> rows;
    std::vector<std::string> status;
};

inline void write_trajectory_table(std::ostream& os, const TrajectoryTable& table) {
    for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << table.columns[i];
    os << '\n';
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (double v : table.rows[r]) os << format_real(v) << ',';
        os << table.status[r] << '\n';
    }
}

inline TrajectoryTable trajectory_table(const TrajectoryLog& log) {
    const std::size_t n_obs = log.records.empty() ? 0 : log.records.front().obstacle_distances.size();
    TrajectoryTable t;
    t.columns = trajectory_columns(n_obs);
    for (const StepRecord& r : log.records) {
        std::vector<double> row = {r.t,
                                   r.state.position.x(), r.state.position.y(), r.state.position.z(),
                                   r.state.velocity.x(), r.state.velocity.y(), r.state.velocity.z(),
                                   r.control.x(), r.control.y(), r.control.z(),
                                   r.goal_distance};
        row.insert(row.end(), r.obstacle_distances.begin(), r.obstacle_distances.end());
        row.insert(row.end(), r.weights.begin(), r.weights.end());
        t.rows.push_back(std::move(row));
        t.status.emplace_back(r.solver_status ? std::string(to_string(*r.solver_status)) : "none");
    }
    return t;
}

inline void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log) {
    write_trajectory_table(os, trajectory_table(log));
}

inline void write_trajectory_csv(const TrajectoryLog& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_trajectory_csv(out, log);
    if (!out) throw IoError("write failed: " + path.string());
}

inline TrajectoryTable read_trajectory_csv(std::istream& is) {
    TrajectoryTable t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        return out;
    };
    if (!std::getline(is, line)) throw ParseError("trajectory CSV: missing header");
    t.columns = split(line);
    if (t.columns.empty() || t.columns.back() != "solver_status")
        throw ParseError("trajectory CSV: header must end with solver_status");
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        const auto cells = split(line);
        if (cells.size() != t.columns.size())
            throw ParseError("trajectory CSV: wrong column count", {}, lineno);
        std::vector<double> row;
        for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
            try {
                row.push_back(std::stod(cells[i]));
            } catch (const std::exception&) {
                throw ParseError("trajectory CSV: bad number in column " + t.columns[i], t.columns[i], lineno);
            }
        }
        t.rows.push_back(std::move(row));
        t.status.push_back(cells.back());
    }
    return t;
}

// --- metrics JSON ---------------------------------------------------------

namespace io_detail {

inline json real_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace io_detail

inline json metrics_to_json(const RunMetrics& m) {
    json j;
    j["mode"] = std::string(to_string(m.mode));
    j["outcome"] = std::string(to_string(m.outcome));
    j["time_to_goal"] = m.time_to_goal ? json(*m.time_to_goal) : json(nullptr);
    j["path_length"] = m.path_length;
    j["control_effort"] = m.control_effort;
    j["final_goal_distance"] = m.final_goal_distance;
    j["steps"] = m.steps;
    j["min_clearance"] = json::array();
    for (double c : m.min_clearance) j["min_clearance"].push_back(io_detail::real_or_null(c));
    j["min_clearance_overall"] = io_detail::real_or_null(m.min_clearance_overall());
    j["stall_events"] = json::array();
    for (const StallEvent& e : m.stall_events) j["stall_events"].push_back({{"t_start", e.t_start}, {"t_end", e.t_end}});
    return j;
}

/// `runs` holds one entry for a single run, or two for a comparison, in
/// which case a "delta" block (second minus first) is added.
inline json metrics_document(std::string_view scenario_name, std::span<const RunMetrics> runs) {
    json doc;
    doc["scenario"] = std::string(scenario_name);
    doc["runs"] = json::array();
    for (const RunMetrics& m : runs) doc["runs"].push_back(metrics_to_json(m));
    if (runs.size() == 2) {
        const RunMetrics& a = runs[0];
        const RunMetrics& b = runs[1];
        json d;
        d["from_mode"] = std::string(to_string(a.mode));
        d["to_mode"] = std::string(to_string(b.mode));
        d["path_length"] = b.path_length - a.path_length;
        d["control_effort"] = b.control_effort - a.control_effort;
        d["min_clearance_overall"] = io_detail::real_or_null(b.min_clearance_overall() - a.min_clearance_overall());
        d["time_to_goal"] = (a.time_to_goal && b.time_to_goal) ? json(*b.time_to_goal - *a.time_to_goal) : json(nullptr);
        d["stall_events"] = static_cast<long long>(b.stall_events.size()) - static_cast<long long>(a.stall_events.size());
        doc["delta"] = d;
    }
    return doc;
}

inline void write_json_file(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

inline void write_metrics_json(std::span<const RunMetrics> runs, std::string_view scenario_name,
                               const std::filesystem::path& path) {
    write_json_file(metrics_document(scenario_name, runs), path);
}

}  // namespace apfmpc
