#include "rview/sim.hpp"

#include <algorithm>
#include <cmath>

#include "rview/errors.hpp"
#include "rview/parallel.hpp"
#include "rview/random.hpp"

namespace rview {

std::string_view to_string(Outcome outcome) {
    switch (outcome) {
        case Outcome::reached_goal: return "reached_goal";
        case Outcome::timeout: return "timeout";
        case Outcome::collision: return "collision";
        case Outcome::aborted: return "aborted";
    }
    return "unknown";
}

Outcome parse_outcome(std::string_view name) {
    if (name == "reached_goal") return Outcome::reached_goal;
    if (name == "timeout") return Outcome::timeout;
    if (name == "collision") return Outcome::collision;
    if (name == "aborted") return Outcome::aborted;
    throw ParseError("unknown outcome '" + std::string(name) + "'", 0);
}

std::vector<Vec2> Trajectory::path() const {
    std::vector<Vec2> pts;
    pts.reserve(steps.size());
    for (const auto& st : steps) pts.push_back(st.state.position());
    return pts;
}

std::size_t Dataset::total_transitions() const {
    std::size_t n = 0;
    for (const auto& tr : trajectories) n += tr.transitions();
    return n;
}

void ScenarioConfig::validate() const {
    if (n_obstacles_min < 0 || n_obstacles_max < n_obstacles_min) {
        throw PreconditionError("obstacle count range is empty");
    }
    if (obstacle_radius.lo < 0 || obstacle_radius.hi < obstacle_radius.lo) {
        throw PreconditionError("obstacle radius range is empty");
    }
    if (obstacle_speed.lo < 0 || obstacle_speed.hi < obstacle_speed.lo) {
        throw PreconditionError("obstacle speed range is empty");
    }
    if (!(bounds.xmax > bounds.xmin && bounds.ymax > bounds.ymin)) throw PreconditionError("bounds are empty");
    for (const Bounds* r : {&start_region, &goal_region}) {
        if (!(r->xmax >= r->xmin && r->ymax >= r->ymin) || !bounds.contains({r->xmin, r->ymin}) ||
            !bounds.contains({r->xmax, r->ymax})) {
            throw PreconditionError("start/goal region must be a non-empty rectangle inside the bounds");
        }
    }
    if (!(h > 0)) throw PreconditionError("h must be > 0");
    if (T_max < 1) throw PreconditionError("T_max must be >= 1");
}

namespace {

Vec2 uniform_in(const Bounds& b, Rng& rng) {
    const double x = uniform(rng, b.xmin, b.xmax);
    const double y = uniform(rng, b.ymin, b.ymax);
    return {x, y};
}

// Constant-velocity track with elastic reflection at the bounds (inset by the radius).
std::vector<Vec2> reflecting_track(Vec2 pos, Vec2 vel, double radius, const Bounds& b, double h, long steps) {
    const double lo_x = b.xmin + radius, hi_x = b.xmax - radius;
    const double lo_y = b.ymin + radius, hi_y = b.ymax - radius;
    std::vector<Vec2> track;
    track.reserve(static_cast<std::size_t>(steps) + 1);
    track.push_back(pos);
    for (long t = 0; t < steps; ++t) {
        pos += h * vel;
        if (pos.x < lo_x) {
            pos.x = 2 * lo_x - pos.x;
            vel.x = -vel.x;
        } else if (pos.x > hi_x) {
            pos.x = 2 * hi_x - pos.x;
            vel.x = -vel.x;
        }
        if (pos.y < lo_y) {
            pos.y = 2 * lo_y - pos.y;
            vel.y = -vel.y;
        } else if (pos.y > hi_y) {
            pos.y = 2 * hi_y - pos.y;
            vel.y = -vel.y;
        }
        track.push_back(pos);
    }
    return track;
}

}  // namespace

Scenario sample_scenario(const ScenarioConfig& cfg, Rng& rng) {
    cfg.validate();
    Scenario sc;
    sc.bounds = cfg.bounds;
    sc.h = cfg.h;
    sc.wheelbase = cfg.wheelbase;

    const Vec2 start = uniform_in(cfg.start_region, rng);
    sc.goal = uniform_in(cfg.goal_region, rng);
    const Vec2 to_goal = sc.goal - start;
    const double heading =
        wrap_angle(std::atan2(to_goal.y, to_goal.x) + uniform(rng, -cfg.heading_jitter, cfg.heading_jitter));
    sc.start = AgentState{start.x, start.y, heading, heading, 0.0};

    const int span = cfg.n_obstacles_max - cfg.n_obstacles_min + 1;
    const int n = cfg.n_obstacles_min +
                  std::min(span - 1, static_cast<int>(uniform01(rng) * static_cast<double>(span)));
    for (int i = 0; i < n; ++i) {
        ObstacleTrack ob;
        ob.id = i;
        ob.radius = uniform(rng, cfg.obstacle_radius.lo, cfg.obstacle_radius.hi);
        const double clearance = cfg.clearance_factor * ob.radius + cfg.agent_radius;
        const Bounds inner{cfg.bounds.xmin + ob.radius, cfg.bounds.ymin + ob.radius, cfg.bounds.xmax - ob.radius,
                           cfg.bounds.ymax - ob.radius};
        bool placed = false;
        Vec2 pos;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            pos = uniform_in(inner, rng);
            placed = distance(pos, start) >= clearance && distance(pos, sc.goal) >= clearance;
        }
        if (!placed) {
            throw ScenarioGenerationError("could not place obstacle " + std::to_string(i) +
                                          " with start/goal clearance after 1000 samples");
        }
        const double speed = uniform(rng, cfg.obstacle_speed.lo, cfg.obstacle_speed.hi);
        const double dir = uniform(rng, -kPi, kPi);
        if (speed > 0.0) {
            ob.positions = reflecting_track(pos, Vec2{speed * std::cos(dir), speed * std::sin(dir)}, ob.radius,
                                            cfg.bounds, cfg.h, cfg.T_max);
        } else {
            ob.positions = {pos};
        }
        sc.obstacles.push_back(std::move(ob));
    }
    return sc;
}

Policy make_expert_policy(const ExpertGains& gains, BeliefMemory memory) {
    gains.validate();
    return [gains, memory](const PolicyInput& in) {
        if (memory == BeliefMemory::memoryless) {
            return nominal_action(in.state, in.detections, in.scenario, in.t, gains);
        }
        return potential_field_control(in.state, in.scenario.goal, in.belief, gains);
    };
}

PolicyFactory expert_policy_factory(const ExpertGains& gains, BeliefMemory memory) {
    Policy policy = make_expert_policy(gains, memory);
    return [policy](std::uint64_t) { return policy; };
}

bool in_collision(const AgentState& s, const Scenario& scenario, long t, double agent_radius) {
    for (const auto& ob : scenario.obstacles) {
        if (distance(s.position(), obstacle_position(ob, t)) < ob.radius + agent_radius) return true;
    }
    return false;
}

Trajectory rollout(const Scenario& scenario, const SensorParams& sensor, const Policy& policy, Rng& rng,
                   const RolloutConfig& cfg) {
    if (cfg.T_max < 1) throw PreconditionError("T_max must be >= 1");
    scenario.validate();
    Trajectory traj;
    traj.scenario = scenario;
    traj.steps.reserve(static_cast<std::size_t>(std::min<long>(cfg.T_max, 4096)) + 1);

    // One draw per obstacle per step, visible or not: runs with different sensors on the same seed
    // then share their detection randomness.
    std::vector<int> ids;
    for (const auto& ob : scenario.obstacles) ids.push_back(ob.id);
    std::sort(ids.begin(), ids.end());

    Belief belief;
    AgentState s = scenario.start;
    for (long t = 0;; ++t) {
        const auto visible = visible_ids(s, scenario, t, sensor);
        DetectionSet z;
        for (int id : ids) {
            const double u = uniform01(rng);
            if (u < sensor.p_obs() && std::binary_search(visible.begin(), visible.end(), id)) z.ids.push_back(id);
        }
        belief = update_belief(std::move(belief), z, scenario, t);

        std::optional<Outcome> terminal;
        if (distance(s.position(), scenario.goal) <= cfg.goal_radius) {
            terminal = Outcome::reached_goal;
        } else if (in_collision(s, scenario, t, cfg.agent_radius)) {
            terminal = Outcome::collision;
        } else if (t >= cfg.T_max) {
            terminal = Outcome::timeout;
        }
        if (terminal) {
            traj.steps.push_back({t, s, Control{}, std::move(z)});
            traj.outcome = *terminal;
            return traj;
        }

        const Control u = policy(PolicyInput{s, scenario, t, z, belief});
        if (!u.finite()) {
            traj.steps.push_back({t, s, Control{}, std::move(z)});
            traj.outcome = Outcome::aborted;
            return traj;
        }
        AgentState next;
        try {
            next = cfg.dynamics.step(s, u);
        } catch (const SteeringSingularityError&) {
            traj.steps.push_back({t, s, Control{}, std::move(z)});
            traj.outcome = Outcome::aborted;
            return traj;
        }
        traj.steps.push_back({t, s, u, std::move(z)});
        s = next;
    }
}

Dataset generate_dataset(const ScenarioConfig& cfg, const SensorParams& sensor, const PolicyFactory& policy,
                         const RolloutConfig& rollout_cfg, long n, std::uint64_t seed, unsigned jobs) {
    if (n < 1) throw PreconditionError("dataset size N must be >= 1");
    cfg.validate();
    Dataset ds;
    ds.meta.mode = rollout_cfg.dynamics.mode;
    ds.meta.sensor = sensor;
    ds.meta.seed = seed;
    ds.meta.h = cfg.h;
    ds.trajectories.resize(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t i) {
        const std::uint64_t traj_seed = mix_seed(seed, i);
        Rng scenario_rng(traj_seed);
        const Scenario sc = sample_scenario(cfg, scenario_rng);
        Rng rng(mix_seed(traj_seed, 1));
        ds.trajectories[i] = rollout(sc, sensor, policy(traj_seed), rng, rollout_cfg);
        ds.trajectories[i].scenario_id = static_cast<long>(i);
    });
    return ds;
}

Dataset rollout_scenarios(const Dataset& source, const SensorParams& sensor, const PolicyFactory& policy,
                          const RolloutConfig& rollout_cfg, std::uint64_t seed, unsigned jobs) {
    if (source.trajectories.empty()) throw PreconditionError("no scenarios to roll out");
    Dataset ds;
    ds.meta.mode = rollout_cfg.dynamics.mode;
    ds.meta.sensor = sensor;
    ds.meta.seed = seed;
    ds.meta.h = rollout_cfg.dynamics.h;
    ds.trajectories.resize(source.trajectories.size());
    parallel_for(ds.trajectories.size(), jobs, [&](std::size_t i) {
        const auto& src = source.trajectories[i];
        const long id = src.scenario_id.value_or(static_cast<long>(i));
        const std::uint64_t traj_seed = mix_seed(seed, static_cast<std::uint64_t>(id));
        Rng rng(mix_seed(traj_seed, 1));
        Scenario sc = src.scenario;
        sc.start = src.steps.empty() ? sc.start : src.steps.front().state;
        ds.trajectories[i] = rollout(sc, sensor, policy(traj_seed), rng, rollout_cfg);
        ds.trajectories[i].scenario_id = id;
    });
    return ds;
}

RolloutConfig rollout_config_for(const ScenarioConfig& cfg, DynamicsMode mode, double v_max) {
    RolloutConfig rc;
    rc.dynamics = Dynamics{mode, cfg.h, cfg.wheelbase, v_max};
    rc.agent_radius = cfg.agent_radius;
    rc.T_max = cfg.T_max;
    return rc;
}

double replay_error(const Trajectory& traj, const Dynamics& dynamics) {
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < traj.steps.size(); ++i) {
        const AgentState pred = dynamics.step(traj.steps[i].state, traj.steps[i].control);
        const AgentState& rec = traj.steps[i + 1].state;
        worst = std::max({worst, std::abs(pred.p - rec.p), std::abs(pred.q - rec.q),
                          std::abs(wrap_angle(pred.psi - rec.psi))});
        if (dynamics.mode != DynamicsMode::pointmass) {
            worst = std::max({worst, std::abs(wrap_angle(pred.phi - rec.phi)), std::abs(pred.delta - rec.delta)});
        }
    }
    return worst;
}

bool detections_legal(const Trajectory& traj, const SensorParams& sensor) {
    for (const auto& st : traj.steps) {
        const auto visible = visible_ids(st.state, traj.scenario, st.t, sensor);
        if (!std::includes(visible.begin(), visible.end(), st.detections.ids.begin(), st.detections.ids.end())) {
            return false;
        }
    }
    return true;
}

}  // namespace rview
