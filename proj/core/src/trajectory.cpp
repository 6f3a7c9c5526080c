#include "chillerlab/trajectory.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace chillerlab {

namespace {

constexpr const char* kSchemaComment = "# trajectory-log v1";

std::string format_double(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_cell(const std::string& s) {
    if (s.empty()) return std::nan("");
    return std::stod(s);
}

} // namespace

std::string_view to_string(ControllerId c) { return c == ControllerId::Ai ? "AI" : "SOO"; }

ControllerId controller_from_string(std::string_view s) {
    if (s == "AI") return ControllerId::Ai;
    if (s == "SOO") return ControllerId::Soo;
    throw IoError("unknown controller id '" + std::string(s) + "'");
}

std::string_view to_string(GuardOutcome g) {
    switch (g) {
    case GuardOutcome::None: return "none";
    case GuardOutcome::Accept: return "accept";
    case GuardOutcome::Modify: return "modify";
    case GuardOutcome::KickOut: return "kick_out";
    }
    return "?";
}

GuardOutcome guard_from_string(std::string_view s) {
    if (s == "none") return GuardOutcome::None;
    if (s == "accept") return GuardOutcome::Accept;
    if (s == "modify") return GuardOutcome::Modify;
    if (s == "kick_out") return GuardOutcome::KickOut;
    throw IoError("unknown guard outcome '" + std::string(s) + "'");
}

void write_trajectory_csv(std::ostream& out, const FacilityConfig& cfg, const Trajectory& traj) {
    out << kSchemaComment << "\n";
    out << "timestamp_min";
    for (const auto& s : cfg.sensors) out << "," << s.name;
    for (const auto& d : cfg.action_dims) out << "," << d.name;
    out << ",reward_kwh,controller,guard,excluded\n";
    for (const auto& r : traj.rows) {
        out << r.state.timestamp_min;
        for (double v : r.state.sensors) out << "," << format_double(v);
        for (double v : r.action.values) out << "," << format_double(v);
        out << "," << format_double(r.reward_kwh) << "," << to_string(r.controller) << "," << to_string(r.guard)
            << "," << (r.excluded ? 1 : 0) << "\n";
    }
}

void write_trajectory_csv(const std::string& path, const FacilityConfig& cfg, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_trajectory_csv(out, cfg, traj);
}

Trajectory read_trajectory_csv(std::istream& in, const FacilityConfig& cfg) {
    Trajectory traj;
    std::string line;
    bool header_seen = false;
    const std::size_t n_sensors = cfg.sensors.size();
    const std::size_t n_actions = cfg.action_dims.size();
    const std::size_t expected_min = 1 + n_sensors + n_actions + 3;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true; // column names; order is fixed by the config
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() < expected_min)
            throw IoError("trajectory CSV line " + std::to_string(lineno) + ": expected at least " +
                          std::to_string(expected_min) + " columns, got " + std::to_string(cells.size()));
        TrajectoryRow r;
        r.state.timestamp_min = std::stoll(cells[0]);
        r.state.sensors.resize(n_sensors);
        std::size_t c = 1;
        for (std::size_t i = 0; i < n_sensors; ++i) r.state.sensors[i] = parse_cell(cells[c++]);
        r.action.values.resize(n_actions);
        for (std::size_t i = 0; i < n_actions; ++i) r.action.values[i] = parse_cell(cells[c++]);
        r.reward_kwh = parse_cell(cells[c++]);
        r.controller = controller_from_string(cells[c++]);
        r.guard = guard_from_string(cells[c++]);
        if (c < cells.size()) r.excluded = cells[c] == "1";
        traj.rows.push_back(std::move(r));
    }
    return traj;
}

Trajectory read_trajectory_csv(const std::string& path, const FacilityConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    return read_trajectory_csv(in, cfg);
}

} // namespace chillerlab
