#include "rview/world.hpp"

#include <algorithm>

#include "rview/errors.hpp"
#include "rview/random.hpp"

namespace rview {

std::string_view to_string(DynamicsMode mode) {
    switch (mode) {
        case DynamicsMode::unicycle: return "unicycle";
        case DynamicsMode::bicycle: return "bicycle";
        case DynamicsMode::pointmass: return "pointmass";
    }
    return "unknown";
}

DynamicsMode parse_dynamics_mode(std::string_view name) {
    if (name == "unicycle") return DynamicsMode::unicycle;
    if (name == "bicycle") return DynamicsMode::bicycle;
    if (name == "pointmass") return DynamicsMode::pointmass;
    throw ParseError("unknown dynamics mode '" + std::string(name) + "'", 0);
}

std::size_t control_dims(DynamicsMode mode) { return mode == DynamicsMode::unicycle ? 2 : 3; }

std::vector<double> control_vector(const Control& u, DynamicsMode mode) {
    switch (mode) {
        case DynamicsMode::unicycle: return {u.v, u.omega};
        case DynamicsMode::bicycle: return {u.v, u.omega, u.dpsi};
        case DynamicsMode::pointmass: return {u.dx, u.dy, u.dpsi};
    }
    return {};
}

Control control_from_vector(std::span<const double> values, DynamicsMode mode) {
    if (values.size() != control_dims(mode)) {
        throw ParseError("control vector has " + std::to_string(values.size()) + " entries, " +
                             std::string(to_string(mode)) + " expects " + std::to_string(control_dims(mode)),
                         0);
    }
    Control u;
    switch (mode) {
        case DynamicsMode::unicycle:
            u.v = values[0];
            u.omega = values[1];
            break;
        case DynamicsMode::bicycle:
            u.v = values[0];
            u.omega = values[1];
            u.dpsi = values[2];
            break;
        case DynamicsMode::pointmass:
            u.dx = values[0];
            u.dy = values[1];
            u.dpsi = values[2];
            break;
    }
    return u;
}

SensorParams::SensorParams(double r_obs, double theta_obs, double p_obs)
    : r_obs_(r_obs), theta_obs_(theta_obs), p_obs_(p_obs) {
    if (!(r_obs > 0.0) || !std::isfinite(r_obs)) throw PreconditionError("r_obs must be finite and > 0");
    if (!(theta_obs > 0.0 && theta_obs <= kPi)) throw PreconditionError("theta_obs must lie in (0, pi]");
    if (!(p_obs >= 0.0 && p_obs <= 1.0)) throw PreconditionError("p_obs must lie in [0, 1]");
}

void Scenario::validate() const {
    if (!(h > 0.0)) throw PreconditionError("scenario timestep h must be > 0");
    if (!(wheelbase > 0.0)) throw PreconditionError("scenario wheelbase must be > 0");
    if (!bounds.contains(start.position())) throw PreconditionError("scenario start lies outside the bounds");
    if (!bounds.contains(goal)) throw PreconditionError("scenario goal lies outside the bounds");
    for (const auto& ob : obstacles) {
        if (ob.positions.empty()) {
            throw PreconditionError("obstacle " + std::to_string(ob.id) + " has an empty track");
        }
    }
}

bool DetectionSet::contains(int id) const { return std::binary_search(ids.begin(), ids.end(), id); }

AgentState step_unicycle(const AgentState& s, const Control& u, double h) {
    if (!(h > 0.0)) throw PreconditionError("timestep h must be > 0");
    if (!s.finite() || !std::isfinite(u.v) || !std::isfinite(u.omega)) {
        throw InvalidStateError("non-finite state or control in unicycle step");
    }
    AgentState next = s;
    next.p = s.p + h * u.v * std::cos(s.phi);
    next.q = s.q + h * u.v * std::sin(s.phi);
    next.phi = wrap_angle(s.phi + h * u.omega);
    next.psi = next.phi;  // sensor locked to heading
    next.delta = 0.0;
    return next;
}

AgentState step_bicycle(const AgentState& s, const Control& u, double h, double wheelbase) {
    if (!(h > 0.0)) throw PreconditionError("timestep h must be > 0");
    if (!(wheelbase > 0.0)) throw PreconditionError("wheelbase must be > 0");
    if (!s.finite() || !u.finite()) throw InvalidStateError("non-finite state or control in bicycle step");
    if (std::abs(s.delta) >= kPi / 2) throw SteeringSingularityError("steering angle |delta| >= pi/2");
    AgentState next = s;
    next.p = s.p + h * u.v * std::cos(s.phi);
    next.q = s.q + h * u.v * std::sin(s.phi);
    next.phi = wrap_angle(s.phi + h * (u.v / wheelbase) * std::tan(s.delta));
    next.delta = s.delta + h * u.omega;
    next.psi = wrap_angle(s.psi + u.dpsi);
    return next;
}

AgentState step_pointmass(const AgentState& s, const Control& u, double v_max, double h) {
    if (!(v_max > 0.0)) throw PreconditionError("v_max must be > 0");
    if (!(h > 0.0)) throw PreconditionError("timestep h must be > 0");
    if (!s.finite() || !u.finite()) throw InvalidStateError("non-finite state or control in point-mass step");
    Vec2 disp{u.dx, u.dy};
    const double limit = v_max * h;
    const double n = disp.norm();
    if (n > limit) disp = (limit / n) * disp;
    AgentState next = s;
    next.p = s.p + disp.x;
    next.q = s.q + disp.y;
    // phi does not drive point-mass motion; it records the last direction of travel.
    if (n > 0.0) next.phi = std::atan2(disp.y, disp.x);
    next.psi = wrap_angle(s.psi + u.dpsi);
    return next;
}

AgentState Dynamics::step(const AgentState& s, const Control& u) const {
    switch (mode) {
        case DynamicsMode::unicycle: return step_unicycle(s, u, h);
        case DynamicsMode::bicycle: return step_bicycle(s, u, h, wheelbase);
        case DynamicsMode::pointmass: return step_pointmass(s, u, v_max, h);
    }
    throw InvalidStateError("unknown dynamics mode");
}

bool in_cone(Vec2 sensor_pos, double sensor_psi, Vec2 target, double r_obs, double theta_obs) {
    const Vec2 d = target - sensor_pos;
    const double dist = d.norm();
    if (dist > r_obs) return false;
    if (dist == 0.0) return true;
    return std::abs(wrap_angle(std::atan2(d.y, d.x) - sensor_psi)) <= theta_obs;
}

Vec2 obstacle_position(const ObstacleTrack& track, long t) {
    if (track.positions.empty()) {
        throw PreconditionError("obstacle " + std::to_string(track.id) + " has an empty track");
    }
    if (t < 0) throw PreconditionError("timestep must be >= 0");
    const auto last = static_cast<long>(track.positions.size()) - 1;
    return track.positions[static_cast<std::size_t>(std::min(t, last))];
}

std::vector<int> visible_ids(const AgentState& s, const Scenario& scenario, long t, const SensorParams& sensor) {
    std::vector<int> ids;
    for (const auto& ob : scenario.obstacles) {
        if (in_cone(s.position(), s.psi, obstacle_position(ob, t), sensor.r_obs(), sensor.theta_obs())) {
            ids.push_back(ob.id);
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

DetectionSet sample_detections(std::span<const int> visible, double p_obs, Rng& rng) {
    DetectionSet out;
    for (int id : visible) {
        // one draw per visible id regardless of p, so the stream position never depends on p
        if (uniform01(rng) < p_obs) out.ids.push_back(id);
    }
    std::sort(out.ids.begin(), out.ids.end());
    return out;
}

}  // namespace rview
