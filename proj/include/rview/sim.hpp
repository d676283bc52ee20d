#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rview/expert.hpp"
#include "rview/world.hpp"

namespace rview {

enum class Outcome { reached_goal, timeout, collision, aborted };

std::string_view to_string(Outcome outcome);
Outcome parse_outcome(std::string_view name);

struct TrajectoryStep {
    long t = 0;
    AgentState state;
    Control control;  // zero on the terminal step
    DetectionSet detections;

    friend bool operator==(const TrajectoryStep&, const TrajectoryStep&) = default;
};

/// States x_0..x_T with the controls that connect them. The final step is the terminal
/// state; its control is undefined and stored as zeros.
struct Trajectory {
    Scenario scenario;
    std::vector<TrajectoryStep> steps;
    Outcome outcome = Outcome::timeout;
    std::optional<long> scenario_id;  // index of the source scenario when replayed/induced

    std::size_t transitions() const { return steps.empty() ? 0 : steps.size() - 1; }
    std::vector<Vec2> path() const;
    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct DatasetMeta {
    DynamicsMode mode = DynamicsMode::unicycle;
    std::optional<SensorParams> sensor;
    std::string angle_convention = "half";
    std::optional<std::uint64_t> seed;
    int schema = 1;
    double h = 0.1;

    friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

struct Dataset {
    std::vector<Trajectory> trajectories;
    DatasetMeta meta;

    std::size_t total_transitions() const;
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Random scenario family; start and goal are drawn inside their own rectangles.
struct ScenarioConfig {
    Bounds bounds{0.0, 0.0, 200.0, 200.0};
    int n_obstacles_min = 10;
    int n_obstacles_max = 16;
    Range obstacle_radius{3.0, 6.0};
    Range obstacle_speed{0.0, 0.0};  // static by default
    Bounds start_region{10.0, 10.0, 50.0, 50.0};
    Bounds goal_region{150.0, 150.0, 190.0, 190.0};
    double heading_jitter = 0.3;  // start heading = bearing to goal +/- this
    double agent_radius = 5.0;
    double clearance_factor = 1.5;  // start/goal clearance = factor * obstacle radius + agent radius
    double h = 0.1;
    double wheelbase = 1.0;
    long T_max = 600;

    void validate() const;
};

/// Throws ScenarioGenerationError when an obstacle cannot be placed with clearance in 1000 draws.
Scenario sample_scenario(const ScenarioConfig& cfg, Rng& rng);

/// What a policy sees at step t. `belief` is the persistent memory maintained by the engine.
struct PolicyInput {
    const AgentState& state;
    const Scenario& scenario;
    long t;
    const DetectionSet& detections;
    const Belief& belief;
};

using Policy = std::function<Control(const PolicyInput&)>;
/// Builds a fresh (possibly stateful) policy for each trajectory.
using PolicyFactory = std::function<Policy(std::uint64_t trajectory_seed)>;

enum class BeliefMemory { persistent, memoryless };

/// Attractor-repulsor demonstrator in unicycle controls.
Policy make_expert_policy(const ExpertGains& gains, BeliefMemory memory = BeliefMemory::persistent);
PolicyFactory expert_policy_factory(const ExpertGains& gains, BeliefMemory memory = BeliefMemory::persistent);

struct RolloutConfig {
    Dynamics dynamics;
    double goal_radius = 10.0;
    double agent_radius = 5.0;
    long T_max = 600;
};

bool in_collision(const AgentState& s, const Scenario& scenario, long t, double agent_radius);

/// Runs one episode. Each step consumes one uniform draw per obstacle in ascending id order; a
/// visible obstacle is detected when its draw is below p_obs.
Trajectory rollout(const Scenario& scenario, const SensorParams& sensor, const Policy& policy, Rng& rng,
                   const RolloutConfig& cfg);

/// N independent scenario + rollout pairs. Trajectory i (scenario_id i) draws its scenario from
/// mix_seed(seed, i) and its detections from mix_seed(mix_seed(seed, i), 1).
/// `jobs` = 0 uses every hardware thread. Results are in index order for any job count.
Dataset generate_dataset(const ScenarioConfig& cfg, const SensorParams& sensor, const PolicyFactory& policy,
                         const RolloutConfig& rollout_cfg, long n, std::uint64_t seed, unsigned jobs = 0);

/// Re-runs the scenarios of `source` with another sensor or policy. Each trajectory reuses the
/// detection stream generate_dataset(seed) gave its scenario id, so with the source's own sensor,
/// policy and seed the source is reproduced, and changing only the sensor isolates its effect.
Dataset rollout_scenarios(const Dataset& source, const SensorParams& sensor, const PolicyFactory& policy,
                          const RolloutConfig& rollout_cfg, std::uint64_t seed, unsigned jobs = 0);

/// Rollout config matching a scenario family and dynamics mode.
RolloutConfig rollout_config_for(const ScenarioConfig& cfg, DynamicsMode mode, double v_max);

/// Largest per-component deviation between recorded states and the dynamics replayed from the
/// recorded controls (p, q, psi always; phi and delta for unicycle/bicycle).
double replay_error(const Trajectory& traj, const Dynamics& dynamics);

/// True when every recorded detection set is a subset of the geometrically visible set.
bool detections_legal(const Trajectory& traj, const SensorParams& sensor);

}  // namespace rview
