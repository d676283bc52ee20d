#include "rview/expert.hpp"

#include <cmath>

#include "rview/errors.hpp"

namespace rview {

Belief update_belief(Belief belief, const DetectionSet& detections, const std::map<int, Vec2>& positions, long t) {
    for (int id : detections.ids) {
        auto it = positions.find(id);
        if (it == positions.end()) {
            throw MissingObstacleError("detected obstacle " + std::to_string(id) + " has no position");
        }
        belief.known_obstacles[id] = it->second;
        belief.last_seen_step[id] = t;
    }
    return belief;
}

Belief update_belief(Belief belief, const DetectionSet& detections, const Scenario& scenario, long t) {
    for (int id : detections.ids) {
        const ObstacleTrack* track = nullptr;
        for (const auto& ob : scenario.obstacles) {
            if (ob.id == id) {
                track = &ob;
                break;
            }
        }
        if (!track) throw MissingObstacleError("detected obstacle " + std::to_string(id) + " has no position");
        belief.known_obstacles[id] = obstacle_position(*track, t);
        belief.last_seen_step[id] = t;
    }
    return belief;
}

void ExpertGains::validate() const {
    if (!(k_att > 0 && k_rep > 0 && d0 > 0 && v_max > 0 && k_heading > 0 && goal_radius > 0 && rep_max > 0)) {
        throw PreconditionError("expert gains must all be strictly positive");
    }
}

Vec2 attraction_force(Vec2 pos, Vec2 goal, const ExpertGains& g) {
    const Vec2 d = goal - pos;
    const double n = d.norm();
    if (n < 1e-9) return {};
    return (g.k_att / n) * d;
}

Vec2 repulsion_force(Vec2 pos, Vec2 obstacle, Vec2 goal, const ExpertGains& g) {
    const Vec2 away = pos - obstacle;
    const double d = away.norm();
    if (d >= g.d0) return {};
    if (d < 1e-9) {
        // coincident with the obstacle: push straight back from the goal at the cap
        Vec2 back = pos - goal;
        const double n = back.norm();
        if (n < 1e-9) return {};
        return (g.rep_max / n) * back;
    }
    const double mag = std::min(g.rep_max, g.k_rep * (1.0 / d - 1.0 / g.d0) / (d * d));
    return (mag / d) * away;
}

Control control_from_forces(const AgentState& s, Vec2 goal, Vec2 net_repulsion, const ExpertGains& g) {
    const Vec2 pos = s.position();
    if (distance(pos, goal) <= g.goal_radius) return {};
    const Vec2 att = attraction_force(pos, goal, g);
    Vec2 force = att + net_repulsion;
    const double rep_norm = net_repulsion.norm();
    if (rep_norm > 0.0 && std::abs(att.cross(net_repulsion)) <= 1e-12 * att.norm() * rep_norm &&
        att.dot(net_repulsion) < 0.0) {
        // attraction and repulsion are antiparallel: sidestep to the left of the repulsion
        force += (1e-3 * g.k_rep / rep_norm) * net_repulsion.rotated(kPi / 2);
    }
    Control u;
    u.v = std::min(g.v_max, force.norm() * g.v_max);
    u.omega = g.k_heading * wrap_angle(std::atan2(force.y, force.x) - s.phi);
    return u;
}

Control potential_field_control(const AgentState& s, Vec2 goal, const Belief& belief, const ExpertGains& g) {
    Vec2 rep;
    for (const auto& [id, obst] : belief.known_obstacles) rep += repulsion_force(s.position(), obst, goal, g);
    return control_from_forces(s, goal, rep, g);
}

Control nominal_action(const AgentState& s, const DetectionSet& z, const Scenario& scenario, long t,
                       const ExpertGains& g) {
    return potential_field_control(s, scenario.goal, update_belief(Belief{}, z, scenario, t), g);
}

void LikelihoodKernel::validate(std::size_t dims) const {
    if (!(sigma_u > 0.0)) throw PreconditionError("kernel bandwidth sigma_u must be > 0");
    if (!scale.empty() && scale.size() != dims) {
        throw PreconditionError("kernel scale has " + std::to_string(scale.size()) + " entries, expected " +
                                std::to_string(dims));
    }
    for (double s : scale) {
        if (!(s > 0.0)) throw PreconditionError("kernel scales must be > 0");
    }
}

double log_kernel_density(std::span<const double> u_observed, std::span<const double> u_nominal,
                          const LikelihoodKernel& k) {
    if (u_observed.size() != u_nominal.size()) {
        throw PreconditionError("kernel_density: control dimension mismatch");
    }
    k.validate(u_observed.size());
    const auto m = static_cast<double>(u_observed.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < u_observed.size(); ++i) {
        double diff = u_observed[i] - u_nominal[i];
        if (!k.scale.empty()) diff /= k.scale[i];
        sq += diff * diff;
    }
    const double var = k.sigma_u * k.sigma_u;
    return -0.5 * m * std::log(2.0 * kPi * var) - sq / (2.0 * var);
}

double kernel_density(std::span<const double> u_observed, std::span<const double> u_nominal,
                      const LikelihoodKernel& k) {
    return std::exp(log_kernel_density(u_observed, u_nominal, k));
}

double kernel_density(const Control& u_observed, const Control& u_nominal, DynamicsMode mode,
                      const LikelihoodKernel& k) {
    const auto a = control_vector(u_observed, mode);
    const auto b = control_vector(u_nominal, mode);
    return kernel_density(a, b, k);
}

LikelihoodKernel unicycle_kernel(const ExpertGains& g, double sigma_u) {
    return LikelihoodKernel{sigma_u, {g.v_max, g.k_heading}};
}

}  // namespace rview
