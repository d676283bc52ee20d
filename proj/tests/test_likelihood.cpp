#include <algorithm>
#include <cmath>
#include <map>

#include "doctest.h"
#include "rview/errors.hpp"
#include "rview/likelihood.hpp"
#include "rview/random.hpp"

using namespace rview;
using doctest::Approx;

namespace {

const ExpertGains kGains;

// Obstacles scattered ahead of an agent driving east; `speed` moves them south.
Scenario corridor(double speed) {
    Scenario sc;
    sc.goal = {190, 100};
    sc.bounds = {0, 0, 200, 200};
    sc.start = {10, 100, 0, 0, 0};
    const std::vector<Vec2> at{{40, 108}, {55, 92}, {70, 104}};
    for (int i = 0; i < 3; ++i) {
        ObstacleTrack ob{i, 4.0, {}};
        for (int t = 0; t < (speed == 0.0 ? 1 : 40); ++t) ob.positions.push_back(at[i] + Vec2{0, -speed * t});
        sc.obstacles.push_back(ob);
    }
    return sc;
}

Trajectory demo(const Scenario& sc, double p, long steps, std::uint64_t seed) {
    RolloutConfig rc;
    rc.T_max = steps;
    Rng rng(seed);
    return rollout(sc, SensorParams(55, 0.6, p), make_expert_policy(kGains), rng, rc);
}

LikelihoodConfig exact_config() {
    auto cfg = unicycle_likelihood(kGains, 0.05);
    cfg.beam_width = 1 << 20;
    cfg.log_floor = -1e9;
    return cfg;
}

// Direct sum over detection histories with a persistent belief, cached on (step, belief).
double brute_force_loglik(const Trajectory& traj, const SensorParams& sensor, const LikelihoodConfig& cfg) {
    const long n = static_cast<long>(traj.transitions());
    std::map<std::pair<long, std::map<int, long>>, double> memo;
    auto rec = [&](auto&& self, long t, const std::map<int, long>& seen) -> double {
        if (t == n) return 1.0;
        auto key = std::make_pair(t, seen);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        const auto& st = traj.steps[static_cast<std::size_t>(t)];
        const auto vis = visible_ids(st.state, traj.scenario, t, sensor);
        const auto u = control_vector(st.control, cfg.mode);
        double total = 0.0;
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << vis.size()); ++mask) {
            double prior = 1.0;
            auto next = seen;
            for (std::size_t i = 0; i < vis.size(); ++i) {
                const bool hit = mask & (std::uint64_t{1} << i);
                prior *= hit ? sensor.p_obs() : 1.0 - sensor.p_obs();
                if (hit) next[vis[i]] = t;
            }
            if (prior == 0.0) continue;
            Belief b;
            for (const auto& [id, when] : next) {
                for (const auto& ob : traj.scenario.obstacles) {
                    if (ob.id == id) b.known_obstacles[id] = obstacle_position(ob, when);
                }
            }
            const auto nominal = control_vector(potential_field_control(st.state, traj.scenario.goal, b, cfg.gains), cfg.mode);
            total += prior * std::exp(log_kernel_density(u, nominal, cfg.kernel)) * self(self, t + 1, next);
        }
        return memo[key] = total;
    };
    return std::log(rec(rec, 0, {}));
}

}  // namespace

TEST_CASE("step_marginal: empty visible set is the plain kernel") {
    const auto cfg = unicycle_likelihood(kGains, 0.05);
    const Scenario sc = corridor(0.0);
    const AgentState x{10, 100, kPi, kPi, 0};  // looking away from every obstacle
    Control u;
    u.v = 3.0;
    const auto nom = nominal_action(x, {}, sc, 0, kGains);
    const double k = kernel_density(u, nom, DynamicsMode::unicycle, cfg.kernel);
    CHECK(step_marginal(x, u, sc, 0, SensorParams(55, 0.4, 0.3), cfg) == Approx(k));
    CHECK(step_marginal(x, u, sc, 0, SensorParams(55, 0.4, 0.9), cfg) == Approx(k));
}

TEST_CASE("step_marginal: one relevant obstacle mixes two outcomes") {
    const auto cfg = unicycle_likelihood(kGains, 0.05);
    Scenario sc = corridor(0.0);
    sc.obstacles.resize(1);
    const AgentState x{10, 100, 0, 0, 0};
    const auto with = nominal_action(x, DetectionSet{{0}}, sc, 0, kGains);
    const auto without = nominal_action(x, {}, sc, 0, kGains);
    const double expect = 0.6 * kernel_density(with, with, DynamicsMode::unicycle, cfg.kernel) +
                          0.4 * kernel_density(with, without, DynamicsMode::unicycle, cfg.kernel);
    CHECK(step_marginal(x, with, sc, 0, SensorParams(55, 0.6, 0.6), cfg) == Approx(expect));

    const auto all = nominal_action(x, DetectionSet{{0}}, sc, 0, kGains);
    Control u = all;
    u.omega += 0.05;
    CHECK(step_marginal(x, u, sc, 0, SensorParams(55, 0.6, 1.0), cfg) ==
          Approx(kernel_density(u, all, DynamicsMode::unicycle, cfg.kernel)));
}

TEST_CASE("exact and Monte-Carlo marginals agree") {
    auto cfg = unicycle_likelihood(kGains, 0.05);
    Rng rng(17);
    int within = 0, cases = 0;
    for (int i = 0; i < 40; ++i) {
        Scenario sc;
        sc.goal = {150, 0};
        sc.bounds = {-200, -200, 200, 200};
        const int n = 1 + static_cast<int>(rng() % 6);
        for (int k = 0; k < n; ++k) sc.obstacles.push_back({k, 3.0, {{uniform(rng, 10, 45), uniform(rng, -15, 15)}}});
        const AgentState x{0, 0, 0, 0, 0};
        const SensorParams sensor(60, 0.8, uniform(rng, 0.05, 0.95));
        Control u = nominal_action(x, {}, sc, 0, kGains);
        u.omega += uniform(rng, -0.1, 0.1);
        const double exact = step_marginal_exact(x, u, sc, 0, sensor, cfg);
        const auto mc = step_marginal_mc(x, u, sc, 0, sensor, cfg, 20000, McScheme::bernoulli, rng);
        ++cases;
        within += std::abs(mc.value - exact) <= 3.0 * mc.std_error + 1e-12;
    }
    CHECK(within >= 36);

    // degenerate probabilities have one subset and agree bit for bit
    Scenario sc = corridor(0.0);
    const AgentState x{10, 100, 0, 0, 0};
    Control u;
    u.v = 4.0;
    for (double p : {0.0, 1.0}) {
        const SensorParams s(55, 0.6, p);
        const double exact = step_marginal_exact(x, u, sc, 0, s, cfg);
        CHECK(step_marginal_mc(x, u, sc, 0, s, cfg, 100, McScheme::stratified, rng).value == exact);
        CHECK(step_marginal_mc(x, u, sc, 0, s, cfg, 100, McScheme::bernoulli, rng).value == exact);
    }
}

TEST_CASE("step_marginal is bounded by the kernel peak") {
    const auto cfg = unicycle_likelihood(kGains, 0.05);
    const Scenario sc = corridor(0.0);
    const std::vector<double> zero{0, 0};
    const double peak = kernel_density(zero, zero, cfg.kernel);
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        const AgentState x{uniform(rng, 5, 30), uniform(rng, 90, 110), uniform(rng, -1, 1), 0, 0};
        AgentState xs = x;
        xs.psi = x.phi;
        Control u;
        u.v = uniform(rng, 0, 10);
        u.omega = uniform(rng, -2, 2);
        const double v = step_marginal(xs, u, sc, 0, SensorParams(55, 0.6, 0.5), cfg);
        CHECK(v >= 0.0);
        CHECK(v <= peak * (1 + 1e-12));
    }
}

TEST_CASE("tracked filter equals the brute-force history sum") {
    const auto cfg = exact_config();
    for (double speed : {0.0, 0.8}) {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const Scenario sc = corridor(speed);
            const auto traj = demo(sc, 0.5, 9, seed);
            REQUIRE(traj.transitions() == 9);
            std::vector<double> values;
            for (double p : {0.2, 0.5, 0.9}) {
                const SensorParams s(55, 0.6, p);
                values.push_back(trajectory_loglik(traj, s, cfg));
                CHECK(values.back() == Approx(brute_force_loglik(traj, s, cfg)).epsilon(1e-9));
            }
            CHECK(std::abs(values[0] - values[2]) > 1e-3);  // detections matter on this track
        }
    }
}

TEST_CASE("tracked filter with certain detection keeps one hypothesis") {
    auto cfg = exact_config();
    const auto traj = demo(corridor(0.0), 1.0, 12, 5);
    const SensorParams s(55, 0.6, 1.0);
    const double full = trajectory_loglik(traj, s, cfg);
    cfg.beam_width = 1;
    CHECK(trajectory_loglik(traj, s, cfg) == full);
    CHECK(full == Approx(brute_force_loglik(traj, s, exact_config())));
}

TEST_CASE("trajectory and dataset log-likelihood") {
    ScenarioConfig c;
    c.T_max = 300;
    const SensorParams truth(55, 0.392, 0.8);
    const auto rcfg = rollout_config_for(c, DynamicsMode::unicycle, kGains.v_max);
    const auto d = generate_dataset(c, truth, expert_policy_factory(kGains), rcfg, 50, 11, 1);
    const auto cfg = unicycle_likelihood(kGains, 0.05);

    for (const auto& t : d.trajectories) {
        const double l = trajectory_loglik(t, truth, cfg);
        CHECK(std::isfinite(l));
        CHECK(l >= static_cast<double>(t.transitions()) * cfg.log_floor);
    }

    const PreparedDataset prep(d, cfg);
    const double total = dataset_loglik(d, truth, cfg);
    CHECK(prep.loglik(truth) == total);
    CHECK(prep.loglik(truth, 3) == total);

    Dataset one = d;
    one.trajectories.resize(1);
    CHECK(dataset_loglik(one, truth, cfg) == trajectory_loglik(d.trajectories[0], truth, cfg));

    Dataset perm = d;
    std::reverse(perm.trajectories.begin(), perm.trajectories.end());
    CHECK(dataset_loglik(perm, truth, cfg) == Approx(total).epsilon(1e-12));

    Dataset a = d, b = d;
    a.trajectories.resize(20);
    b.trajectories.erase(b.trajectories.begin(), b.trajectories.begin() + 20);
    CHECK(dataset_loglik(a, truth, cfg) + dataset_loglik(b, truth, cfg) == Approx(total).epsilon(1e-12));

    CHECK(total > dataset_loglik(d, SensorParams(27.5, 0.392, 0.8), cfg));
    CHECK(total > dataset_loglik(d, SensorParams(82.5, 0.392, 0.8), cfg));

    // the memoryless model is still available
    auto ml = cfg;
    ml.belief = BeliefModel::memoryless;
    CHECK(std::isfinite(dataset_loglik(d, truth, ml)));
    CHECK(PreparedDataset(d, ml).loglik(truth) == doctest::Approx(dataset_loglik(d, truth, ml)).epsilon(1e-12));
}

TEST_CASE("likelihood preconditions") {
    auto cfg = unicycle_likelihood(kGains, 0.05);
    Dataset empty;
    CHECK_THROWS_AS(dataset_loglik(empty, SensorParams(55, 0.4, 0.5), cfg), PreconditionError);
    cfg.log_floor = 0.0;
    CHECK_THROWS_AS(cfg.validate(), PreconditionError);
    cfg = unicycle_likelihood(kGains, 0.05);
    cfg.beam_width = 0;
    CHECK_THROWS_AS(cfg.validate(), PreconditionError);
    Dataset pm;
    pm.meta.mode = DynamicsMode::pointmass;
    pm.trajectories.resize(1);
    CHECK_THROWS_AS(PreparedDataset(pm, unicycle_likelihood(kGains, 0.05)), PreconditionError);
}
