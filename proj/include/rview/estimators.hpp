#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "rview/likelihood.hpp"
#include "rview/sim.hpp"
#include "rview/world.hpp"

namespace rview {

using Objective = std::function<double(const std::vector<double>&)>;

struct ParamBounds {
    double lo = 0.0;
    double hi = 1.0;
};

struct CemConfig {
    int population = 64;
    double elite_frac = 0.125;
    int iterations = 30;
    std::vector<double> init_mean;  // empty: box center
    std::vector<double> init_std;   // empty: box width / 4
    double std_floor = 1e-3;
    double smoothing = 0.7;  // weight of the refit distribution; 1 - smoothing stays on the old one
    std::vector<ParamBounds> bounds;

    void validate() const;
    int elite_count() const;
};

struct BoConfig {
    int init_points = 8;
    int iterations = 40;
    double kernel_lengthscale = 0.08;
    double kernel_variance = 1.0;
    double noise = 1e-6;
    int acquisition_grid = 2001;

    void validate() const;
};

struct HistoryEntry {
    std::vector<double> center;  // CEM: sampling mean after the refit; BO: point evaluated this round
    std::vector<double> spread;  // CEM: sampling std after the refit; BO: empty
    double incumbent_value = 0.0;
    double round_value = 0.0;    // CEM: best in this generation; BO: value at the evaluated point
};

struct EstimationReport {
    std::string method;
    std::vector<double> best_params;
    double best_value = 0.0;
    std::vector<HistoryEntry> history;
    long evaluations = 0;
    double objective_variance = 0.0;  // variance of every finite objective value seen
    bool flat_objective = false;      // objective_variance < 1e-6: parameters not identifiable from the data
};

/// Diagonal-Gaussian cross-entropy maximization over a box. Samples are clipped to the box; NaN
/// scores count as -inf. Evaluations within one generation run on up to `jobs` threads.
EstimationReport cem_maximize(const Objective& objective, const CemConfig& cfg, Rng& rng, unsigned jobs = 1);

struct GpPrediction {
    std::vector<double> mean;
    std::vector<double> variance;
};

/// Exact GP posterior with a squared-exponential kernel and zero prior mean.
/// Throws NumericalError when the Cholesky factorization fails even with 1e-2 jitter.
GpPrediction gp_posterior(const std::vector<double>& train_x, const std::vector<double>& train_y, const BoConfig& cfg,
                          const std::vector<double>& query_x);

double expected_improvement(double mean, double variance, double best_so_far);

/// GP/EI maximization of a scalar function on [0, 1]: init_points on a uniform grid, then
/// `iterations` rounds of posterior fit and EI argmax on the acquisition grid.
EstimationReport bo_maximize(const std::function<double(double)>& objective, const BoConfig& cfg);

/// Observation-space estimate (r_obs, theta_obs) with p_obs known; objective is the mean
/// per-step log-likelihood.
EstimationReport estimate_observation_params(const Dataset& d, double p_obs_known, const CemConfig& cfg,
                                             const LikelihoodConfig& lik, std::uint64_t seed, unsigned jobs = 1);

/// Detection-probability estimate with (r_obs, theta_obs) known.
EstimationReport estimate_p_obs(const Dataset& d, double r_obs, double theta_obs, const BoConfig& cfg,
                                const LikelihoodConfig& lik, unsigned jobs = 1);

/// Default search box for (r_obs, theta_obs).
CemConfig default_observation_cem();

void write_report(const EstimationReport& report, std::ostream& out);
EstimationReport read_report(std::istream& in);

}  // namespace rview
