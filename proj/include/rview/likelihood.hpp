#pragma once

#include <cstdint>
#include <vector>

#include "rview/expert.hpp"
#include "rview/sim.hpp"
#include "rview/world.hpp"

namespace rview {

enum class McScheme { stratified, bernoulli };

/// How the demonstrator's obstacle memory is modeled when scoring a trajectory.
/// memoryless: the belief at step t is built from z_t alone, so steps factorize.
/// tracked: the belief persists across steps (as in rollouts); the likelihood is a forward
/// filter over belief hypotheses, merged when identical and pruned to `beam_width`.
enum class BeliefModel { tracked, memoryless };

struct LikelihoodConfig {
    int max_exact_visible = 12;  // exact subset enumeration up to this many relevant obstacles
    int mc_samples = 512;
    double log_floor = -30.0;    // per-step log-probability floor
    LikelihoodKernel kernel;
    ExpertGains gains;           // the known demonstrator policy
    DynamicsMode mode = DynamicsMode::unicycle;
    McScheme mc_scheme = McScheme::stratified;
    std::uint64_t mc_seed = 0;
    BeliefModel belief = BeliefModel::tracked;
    int beam_width = 32;

    void validate() const;
};

/// Default configuration for unicycle data produced by the expert with `gains`.
LikelihoodConfig unicycle_likelihood(const ExpertGains& gains, double sigma_u = 0.05);

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Probability density of u_t at x_t, marginalized over the detection subsets of the visible set.
/// Visible obstacles outside the repulsion cutoff cannot change the nominal action and are summed out
/// analytically; the remaining subsets are enumerated exactly or sampled (seeded by `stream`).
double step_marginal(const AgentState& x, const Control& u, const Scenario& scenario, long t,
                     const SensorParams& sensor, const LikelihoodConfig& cfg, std::uint64_t stream = 0);

/// Natural log of step_marginal (no floor applied).
double log_step_marginal(const AgentState& x, const Control& u, const Scenario& scenario, long t,
                         const SensorParams& sensor, const LikelihoodConfig& cfg, std::uint64_t stream = 0);

double step_marginal_exact(const AgentState& x, const Control& u, const Scenario& scenario, long t,
                           const SensorParams& sensor, const LikelihoodConfig& cfg);

/// Monte-Carlo estimate over `samples` detection sets, with its standard error.
McEstimate step_marginal_mc(const AgentState& x, const Control& u, const Scenario& scenario, long t,
                            const SensorParams& sensor, const LikelihoodConfig& cfg, int samples, McScheme scheme,
                            Rng& rng);

/// Sum over pre-terminal steps of the floored per-step log predictive probability. With the
/// memoryless belief model the per-step term is log step_marginal.
double trajectory_loglik(const Trajectory& traj, const SensorParams& sensor, const LikelihoodConfig& cfg);

/// Sum of trajectory log-likelihoods, reduced in index order.
double dataset_loglik(const Dataset& d, const SensorParams& sensor, const LikelihoodConfig& cfg, unsigned jobs = 1);

/// Sensor-independent geometry of a dataset, precomputed once so repeated likelihood
/// evaluations (one per optimizer sample) only filter by the candidate sensor.
class PreparedDataset {
public:
    PreparedDataset(const Dataset& d, const LikelihoodConfig& cfg);

    double loglik(const SensorParams& sensor, unsigned jobs = 1) const;
    double trajectory_loglik(std::size_t index, const SensorParams& sensor) const;

    std::size_t size() const { return trajectories_.size(); }
    std::size_t total_steps() const { return total_steps_; }
    const LikelihoodConfig& config() const { return cfg_; }

    struct Candidate {
        int id;
        double dist;
        double bearing;  // relative to the sensor axis
        Vec2 repulsion;  // zero beyond the cutoff
    };
    struct Step {
        long t;
        AgentState state;
        std::vector<double> u_obs;
        std::vector<Candidate> candidates;  // memoryless: inside the cutoff; tracked: every obstacle
        double log_k_empty;                 // log kernel at the nominal action with no detections
        std::uint64_t stream;
    };
    struct Track {
        Scenario scenario;
        std::vector<Step> steps;
        // tracked model only, indexed like Step::candidates (ascending id)
        std::vector<std::size_t> obstacle_index;      // into scenario.obstacles
        std::vector<std::vector<long>> last_relevant;  // per remembered step (one entry if static): last
                                                       // step whose action that memory can affect, -1 if none
    };

    static Track prepare(const Trajectory& traj, const LikelihoodConfig& cfg);
    static double track_loglik(const Track& track, const SensorParams& sensor, const LikelihoodConfig& cfg);

private:
    LikelihoodConfig cfg_;
    std::vector<Track> trajectories_;
    std::size_t total_steps_ = 0;
};

/// Seed of the Monte-Carlo stream of one trajectory step; derived from trajectory content so a
/// dataset permutation does not change the draws.
std::uint64_t step_stream(const Trajectory& traj, long t, std::uint64_t mc_seed);

}  // namespace rview
