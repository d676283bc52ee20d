#pragma once

#include <map>
#include <span>
#include <vector>

#include "rview/world.hpp"

namespace rview {

/// Obstacles the agent has detected so far, at the position where each was last seen.
struct Belief {
    std::map<int, Vec2> known_obstacles;
    std::map<int, long> last_seen_step;

    bool empty() const { return known_obstacles.empty(); }
    friend bool operator==(const Belief&, const Belief&) = default;
};

/// Detected ids are inserted or refreshed with their position at step t; nothing is evicted.
/// Throws MissingObstacleError when a detected id has no entry in `positions`.
Belief update_belief(Belief belief, const DetectionSet& detections, const std::map<int, Vec2>& positions, long t);

/// Same as above, reading positions from the scenario tracks.
Belief update_belief(Belief belief, const DetectionSet& detections, const Scenario& scenario, long t);

/// Gains of the attractor-repulsor demonstrator.
struct ExpertGains {
    double k_att = 1.0;
    double k_rep = 3000.0;
    double d0 = 80.0;          // repulsion cutoff distance
    double v_max = 10.0;
    double k_heading = 2.0;
    double goal_radius = 2.0;  // inside this radius the controller stops
    double rep_max = 1.0e3;    // cap on the magnitude of a single repulsion term

    /// Throws PreconditionError unless every gain is strictly positive.
    void validate() const;
};

/// Attraction toward the goal: k_att * unit(goal - pos).
Vec2 attraction_force(Vec2 pos, Vec2 goal, const ExpertGains& g);

/// Repulsion from one obstacle center; exactly zero at d >= d0.
Vec2 repulsion_force(Vec2 pos, Vec2 obstacle, Vec2 goal, const ExpertGains& g);

/// Turns the net force into (v, omega), applying the collinear tie-break and goal stop.
Control control_from_forces(const AgentState& s, Vec2 goal, Vec2 net_repulsion, const ExpertGains& g);

Control potential_field_control(const AgentState& s, Vec2 goal, const Belief& belief, const ExpertGains& g);

/// Deterministic mean action given only the current detections (memoryless belief).
Control nominal_action(const AgentState& s, const DetectionSet& z, const Scenario& scenario, long t,
                       const ExpertGains& g);

/// Isotropic Gaussian action kernel. `scale` divides each control dimension before the
/// kernel is applied (empty = unit scale), so sigma_u is in normalized control units.
struct LikelihoodKernel {
    double sigma_u = 0.05;
    std::vector<double> scale;

    void validate(std::size_t dims) const;
};

double kernel_density(std::span<const double> u_observed, std::span<const double> u_nominal,
                      const LikelihoodKernel& k);

double kernel_density(const Control& u_observed, const Control& u_nominal, DynamicsMode mode,
                      const LikelihoodKernel& k);

/// Log of kernel_density; keeps precision far into the tails.
double log_kernel_density(std::span<const double> u_observed, std::span<const double> u_nominal,
                          const LikelihoodKernel& k);

/// Normalization that makes sigma_u comparable across unicycle control dimensions.
LikelihoodKernel unicycle_kernel(const ExpertGains& g, double sigma_u);

}  // namespace rview
