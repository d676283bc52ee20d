#include "rview/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include "rview/errors.hpp"

namespace rview {

using nlohmann::json;

namespace {

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }

Vec2 vec_from(const json& j) {
    if (!j.is_array() || j.size() != 2) throw ParseError("expected [x, y]", 0);
    return {j.at(0).get<double>(), j.at(1).get<double>()};
}

json header_json(const DatasetMeta& meta) {
    json h;
    h["schema"] = meta.schema;
    h["mode"] = std::string(to_string(meta.mode));
    h["angle_convention"] = meta.angle_convention;
    h["h"] = meta.h;
    if (meta.sensor) {
        h["sensor"] = {{"r_obs", meta.sensor->r_obs()},
                       {"theta_obs", meta.sensor->theta_obs()},
                       {"p_obs", meta.sensor->p_obs()}};
    } else {
        h["sensor"] = nullptr;
    }
    h["seed"] = meta.seed ? json(*meta.seed) : json(nullptr);
    return h;
}

json trajectory_json(const Trajectory& tr, DynamicsMode mode) {
    json j;
    j["scenario"] = scenario_to_json(tr.scenario, mode);
    json steps = json::array();
    for (const auto& st : tr.steps) {
        const auto& s = st.state;
        steps.push_back({{"t", st.t},
                         {"s", json::array({s.p, s.q, s.phi, s.psi, s.delta})},
                         {"u", control_vector(st.control, mode)},
                         {"z", st.detections.ids}});
    }
    j["steps"] = std::move(steps);
    j["outcome"] = std::string(to_string(tr.outcome));
    if (tr.scenario_id) j["scenario_id"] = *tr.scenario_id;
    return j;
}

DatasetMeta parse_header(const json& h) {
    DatasetMeta meta;
    if (!h.is_object() || !h.contains("schema")) throw ParseError("header object with 'schema' expected", 0);
    meta.schema = h.at("schema").get<int>();
    if (meta.schema != kDatasetSchema) {
        throw VersionError("dataset schema version " + std::to_string(meta.schema) + " is not supported (expected " +
                           std::to_string(kDatasetSchema) + ")");
    }
    meta.mode = parse_dynamics_mode(h.at("mode").get<std::string>());
    meta.angle_convention = h.value("angle_convention", std::string("half"));
    if (meta.angle_convention != "half" && meta.angle_convention != "full") {
        throw ParseError("unknown angle_convention '" + meta.angle_convention + "'", 0);
    }
    meta.h = h.at("h").get<double>();
    if (!(meta.h > 0)) throw ParseError("header h must be > 0", 0);
    if (h.contains("sensor") && !h.at("sensor").is_null()) {
        const auto& s = h.at("sensor");
        double theta = s.at("theta_obs").get<double>();
        if (meta.angle_convention == "full") theta *= 0.5;
        meta.sensor = SensorParams(s.at("r_obs").get<double>(), theta, s.at("p_obs").get<double>());
    }
    meta.angle_convention = "half";
    if (h.contains("seed") && !h.at("seed").is_null()) meta.seed = h.at("seed").get<std::uint64_t>();
    return meta;
}

Trajectory parse_trajectory(const json& j, const DatasetMeta& meta) {
    Trajectory tr;
    const auto& steps = j.at("steps");
    if (!steps.is_array() || steps.empty()) throw ParseError("trajectory has no steps", 0);
    long expected_t = 0;
    for (const auto& sj : steps) {
        TrajectoryStep st;
        st.t = sj.at("t").get<long>();
        if (st.t != expected_t++) throw ParseError("steps must be consecutive from t = 0", 0);
        const auto s = sj.at("s").get<std::vector<double>>();
        if (s.size() != 5) throw ParseError("state vector must have 5 entries", 0);
        st.state = AgentState{s[0], s[1], s[2], s[3], s[4]};
        const auto u = sj.at("u").get<std::vector<double>>();
        st.control = control_from_vector(u, meta.mode);
        st.detections.ids = sj.at("z").get<std::vector<int>>();
        std::sort(st.detections.ids.begin(), st.detections.ids.end());
        tr.steps.push_back(std::move(st));
    }
    tr.scenario = scenario_from_json(j.at("scenario"), meta.h, tr.steps.front().state);
    tr.outcome = parse_outcome(j.at("outcome").get<std::string>());
    if (j.contains("scenario_id") && !j.at("scenario_id").is_null()) tr.scenario_id = j.at("scenario_id").get<long>();
    return tr;
}

}  // namespace

json scenario_to_json(const Scenario& sc, DynamicsMode mode) {
    json obstacles = json::array();
    for (const auto& ob : sc.obstacles) {
        json track = json::array();
        for (const auto& p : ob.positions) track.push_back(vec_json(p));
        obstacles.push_back({{"id", ob.id}, {"radius", ob.radius}, {"track", std::move(track)}});
    }
    json j;
    j["goal"] = vec_json(sc.goal);
    j["bounds"] = json::array({sc.bounds.xmin, sc.bounds.ymin, sc.bounds.xmax, sc.bounds.ymax});
    j["obstacles"] = std::move(obstacles);
    j["L"] = mode == DynamicsMode::bicycle ? json(sc.wheelbase) : json(nullptr);
    return j;
}

Scenario scenario_from_json(const json& j, double h, const AgentState& start) {
    Scenario sc;
    if (!j.is_object() || !j.contains("goal")) throw ParseError("scenario is missing 'goal'", 0);
    sc.goal = vec_from(j.at("goal"));
    const auto b = j.at("bounds").get<std::vector<double>>();
    if (b.size() != 4) throw ParseError("bounds must be [xmin, ymin, xmax, ymax]", 0);
    sc.bounds = Bounds{b[0], b[1], b[2], b[3]};
    for (const auto& oj : j.at("obstacles")) {
        ObstacleTrack ob;
        ob.id = oj.at("id").get<int>();
        ob.radius = oj.at("radius").get<double>();
        if (!(ob.radius >= 0)) throw ParseError("obstacle radius must be >= 0", 0);
        for (const auto& pj : oj.at("track")) ob.positions.push_back(vec_from(pj));
        if (ob.positions.empty()) throw ParseError("obstacle track is empty", 0);
        sc.obstacles.push_back(std::move(ob));
    }
    if (j.contains("L") && !j.at("L").is_null()) sc.wheelbase = j.at("L").get<double>();
    sc.h = h;
    sc.start = start;
    return sc;
}

void write_dataset(const Dataset& d, std::ostream& out) {
    out << header_json(d.meta).dump() << '\n';
    for (const auto& tr : d.trajectories) out << trajectory_json(tr, d.meta.mode).dump() << '\n';
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open '" + tmp.string() + "' for writing");
        f << contents;
        if (!f.flush()) throw Error("failed writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
    std::ostringstream buf;
    write_dataset(d, buf);
    write_file_atomic(path, buf.str());
}

Dataset read_dataset(std::istream& in) {
    Dataset d;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            if (!have_header) {
                d.meta = parse_header(j);
                have_header = true;
            } else {
                d.trajectories.push_back(parse_trajectory(j, d.meta));
            }
        } catch (const VersionError&) {
            throw;
        } catch (const ParseError& e) {
            throw ParseError(e.what(), lineno);
        } catch (const std::exception& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    if (!have_header) throw ParseError("dataset is empty (missing header line)", 0);
    return d;
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open dataset '" + path.string() + "'");
    return read_dataset(f);
}

}  // namespace rview
