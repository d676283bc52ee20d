#include "rview/estimators.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "rview/errors.hpp"
#include "rview/parallel.hpp"

namespace rview {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void add_variance_stats(EstimationReport& rep, const std::vector<double>& values) {
    std::vector<double> finite;
    for (double v : values) {
        if (std::isfinite(v)) finite.push_back(v);
    }
    if (finite.empty()) {
        rep.objective_variance = 0.0;
    } else {
        const double mean = std::accumulate(finite.begin(), finite.end(), 0.0) / static_cast<double>(finite.size());
        double ss = 0.0;
        for (double v : finite) ss += (v - mean) * (v - mean);
        rep.objective_variance = ss / static_cast<double>(finite.size());
    }
    rep.flat_objective = rep.objective_variance < 1e-6;
}

}  // namespace

void CemConfig::validate() const {
    if (population < 1) throw PreconditionError("CEM population must be >= 1");
    if (!(elite_frac > 0.0 && elite_frac <= 1.0)) throw PreconditionError("CEM elite_frac must lie in (0, 1]");
    if (population * elite_frac < 1.0) throw PreconditionError("CEM population * elite_frac must be >= 1");
    if (iterations < 1) throw PreconditionError("CEM iterations must be >= 1");
    if (!(smoothing >= 0.0 && smoothing <= 1.0)) throw PreconditionError("CEM smoothing must lie in [0, 1]");
    if (!(std_floor >= 0.0)) throw PreconditionError("CEM std_floor must be >= 0");
    if (bounds.empty()) throw PreconditionError("CEM needs at least one bounded parameter");
    for (const auto& b : bounds) {
        if (!(std::isfinite(b.lo) && std::isfinite(b.hi) && b.lo < b.hi)) {
            throw PreconditionError("CEM bounds must be finite with lo < hi");
        }
    }
    if (!init_mean.empty() && init_mean.size() != bounds.size()) throw PreconditionError("init_mean size mismatch");
    if (!init_std.empty() && init_std.size() != bounds.size()) throw PreconditionError("init_std size mismatch");
}

int CemConfig::elite_count() const {
    return std::max(1, static_cast<int>(std::ceil(population * elite_frac - 1e-12)));
}

EstimationReport cem_maximize(const Objective& objective, const CemConfig& cfg, Rng& rng, unsigned jobs) {
    cfg.validate();
    const std::size_t dim = cfg.bounds.size();
    std::vector<double> mean(dim), sd(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        const auto& b = cfg.bounds[j];
        mean[j] = cfg.init_mean.empty() ? 0.5 * (b.lo + b.hi) : cfg.init_mean[j];
        sd[j] = std::max(cfg.std_floor, cfg.init_std.empty() ? 0.25 * (b.hi - b.lo) : cfg.init_std[j]);
    }

    EstimationReport rep;
    rep.method = "cem";
    rep.best_value = kNegInf;
    std::vector<double> all_values;
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto pop = static_cast<std::size_t>(cfg.population);
    const auto n_elite = static_cast<std::size_t>(cfg.elite_count());

    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<std::vector<double>> samples(pop, std::vector<double>(dim));
        for (auto& x : samples) {
            for (std::size_t j = 0; j < dim; ++j) {
                x[j] = std::clamp(mean[j] + sd[j] * normal(rng), cfg.bounds[j].lo, cfg.bounds[j].hi);
            }
        }
        std::vector<double> scores(pop);
        parallel_for(pop, jobs, [&](std::size_t i) {
            const double v = objective(samples[i]);
            scores[i] = std::isnan(v) ? kNegInf : v;
        });
        rep.evaluations += static_cast<long>(pop);
        all_values.insert(all_values.end(), scores.begin(), scores.end());

        std::vector<std::size_t> order(pop);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
        if (rep.best_params.empty() || scores[order[0]] > rep.best_value) {
            rep.best_value = scores[order[0]];
            rep.best_params = samples[order[0]];
        }

        for (std::size_t j = 0; j < dim; ++j) {
            double m = 0.0;
            for (std::size_t e = 0; e < n_elite; ++e) m += samples[order[e]][j];
            m /= static_cast<double>(n_elite);
            double v = 0.0;
            for (std::size_t e = 0; e < n_elite; ++e) v += (samples[order[e]][j] - m) * (samples[order[e]][j] - m);
            const double s = std::sqrt(v / static_cast<double>(n_elite));
            mean[j] = cfg.smoothing * m + (1.0 - cfg.smoothing) * mean[j];
            sd[j] = std::max(cfg.std_floor, cfg.smoothing * s + (1.0 - cfg.smoothing) * sd[j]);
        }
        rep.history.push_back({mean, sd, rep.best_value, scores[order[0]]});
    }
    add_variance_stats(rep, all_values);
    return rep;
}

void BoConfig::validate() const {
    if (init_points < 1 || iterations < 1 || acquisition_grid < 2) {
        throw PreconditionError("BO init_points, iterations must be >= 1 and acquisition_grid >= 2");
    }
    if (!(kernel_lengthscale > 0 && kernel_variance > 0 && noise > 0)) {
        throw PreconditionError("BO kernel lengthscale, variance and noise must be > 0");
    }
}

GpPrediction gp_posterior(const std::vector<double>& train_x, const std::vector<double>& train_y, const BoConfig& cfg,
                          const std::vector<double>& query_x) {
    if (train_x.size() != train_y.size()) throw PreconditionError("gp_posterior: x/y size mismatch");
    const auto n = static_cast<Eigen::Index>(train_x.size());
    const auto m = static_cast<Eigen::Index>(query_x.size());
    const double inv2l2 = 1.0 / (2.0 * cfg.kernel_lengthscale * cfg.kernel_lengthscale);
    auto k = [&](double a, double b) { return cfg.kernel_variance * std::exp(-(a - b) * (a - b) * inv2l2); };

    GpPrediction out;
    out.mean.assign(query_x.size(), 0.0);
    out.variance.assign(query_x.size(), cfg.kernel_variance);
    if (n == 0) return out;

    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) K(i, j) = k(train_x[i], train_x[j]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;
    for (;;) {
        Eigen::MatrixXd Kn = K;
        Kn.diagonal().array() += cfg.noise + jitter;
        llt.compute(Kn);
        if (llt.info() == Eigen::Success) break;
        jitter = jitter == 0.0 ? std::max(cfg.noise, 1e-12) * 10.0 : jitter * 10.0;
        if (jitter > 1e-2) throw NumericalError("gp_posterior: Cholesky failed even with 1e-2 jitter");
    }
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(train_y.data(), n);
    const Eigen::VectorXd alpha = llt.solve(y);

    Eigen::MatrixXd Ks(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) Ks(i, j) = k(train_x[i], query_x[j]);
    }
    const Eigen::VectorXd mu = Ks.transpose() * alpha;
    const Eigen::MatrixXd v = llt.matrixL().solve(Ks);
    for (Eigen::Index j = 0; j < m; ++j) {
        out.mean[j] = mu(j);
        out.variance[j] = std::max(0.0, cfg.kernel_variance - v.col(j).squaredNorm());
    }
    return out;
}

double expected_improvement(double mean, double variance, double best_so_far) {
    if (variance < 0.0) throw PreconditionError("expected_improvement: negative variance");
    const double sigma = std::sqrt(variance);
    const double gain = mean - best_so_far;
    if (sigma == 0.0) return std::max(0.0, gain);
    const double z = gain / sigma;
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
    return std::max(0.0, gain * cdf + sigma * pdf);
}

EstimationReport bo_maximize(const std::function<double(double)>& objective, const BoConfig& cfg) {
    cfg.validate();
    EstimationReport rep;
    rep.method = "bo";
    std::vector<double> xs, ys;
    auto evaluate = [&](double x) {
        double y = objective(x);
        if (!std::isfinite(y)) y = std::numeric_limits<double>::lowest();
        xs.push_back(x);
        ys.push_back(y);
        ++rep.evaluations;
        if (rep.best_params.empty() || y > rep.best_value) {
            rep.best_value = y;
            rep.best_params = {x};
        }
        return y;
    };
    for (int i = 0; i < cfg.init_points; ++i) {
        evaluate(cfg.init_points == 1 ? 0.5 : static_cast<double>(i) / (cfg.init_points - 1));
    }

    std::vector<double> grid(static_cast<std::size_t>(cfg.acquisition_grid));
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<double>(i) / static_cast<double>(grid.size() - 1);

    for (int round = 0; round < cfg.iterations; ++round) {
        // standardize targets so the unit-variance prior fits any objective scale
        const double mean_y = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
        double ss = 0.0;
        for (double y : ys) ss += (y - mean_y) * (y - mean_y);
        const double sd_y = ys.size() > 1 && ss > 0.0 ? std::sqrt(ss / static_cast<double>(ys.size())) : 1.0;
        std::vector<double> zs(ys.size());
        for (std::size_t i = 0; i < ys.size(); ++i) zs[i] = (ys[i] - mean_y) / sd_y;
        const double best_z = (rep.best_value - mean_y) / sd_y;

        const auto post = gp_posterior(xs, zs, cfg, grid);
        std::size_t pick = grid.size();
        double best_ei = -1.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const bool seen = std::any_of(xs.begin(), xs.end(), [&](double x) { return std::abs(x - grid[i]) < 1e-12; });
            if (seen) continue;
            const double ei = expected_improvement(post.mean[i], post.variance[i], best_z);
            if (ei > best_ei) {
                best_ei = ei;
                pick = i;
            }
        }
        if (pick == grid.size()) break;  // every grid point has been evaluated
        const double y = evaluate(grid[pick]);
        rep.history.push_back({{grid[pick]}, {}, rep.best_value, y});
    }
    add_variance_stats(rep, ys);
    return rep;
}

CemConfig default_observation_cem() {
    CemConfig cfg;
    cfg.bounds = {{5.0, 150.0}, {0.05, 1.5}};
    return cfg;
}

EstimationReport estimate_observation_params(const Dataset& d, double p_obs_known, const CemConfig& cfg,
                                             const LikelihoodConfig& lik, std::uint64_t seed, unsigned jobs) {
    if (d.trajectories.empty()) throw PreconditionError("estimate_observation_params: empty dataset");
    if (!(p_obs_known >= 0.0 && p_obs_known <= 1.0)) throw PreconditionError("p_obs must lie in [0, 1]");
    if (cfg.bounds.size() != 2) throw PreconditionError("observation estimation needs bounds for (r_obs, theta_obs)");
    const PreparedDataset prepared(d, lik);
    const double steps = std::max<double>(1.0, static_cast<double>(prepared.total_steps()));
    Objective objective = [&](const std::vector<double>& v) {
        return prepared.loglik(SensorParams(v[0], v[1], p_obs_known)) / steps;
    };
    Rng rng(seed);
    auto rep = cem_maximize(objective, cfg, rng, jobs);
    rep.method = "cem-observation";
    return rep;
}

EstimationReport estimate_p_obs(const Dataset& d, double r_obs, double theta_obs, const BoConfig& cfg,
                                const LikelihoodConfig& lik, unsigned jobs) {
    if (d.trajectories.empty()) throw PreconditionError("estimate_p_obs: empty dataset");
    const PreparedDataset prepared(d, lik);
    const double steps = std::max<double>(1.0, static_cast<double>(prepared.total_steps()));
    auto rep = bo_maximize([&](double p) { return prepared.loglik(SensorParams(r_obs, theta_obs, p), jobs) / steps; },
                           cfg);
    rep.method = "bo-p_obs";
    return rep;
}

void write_report(const EstimationReport& report, std::ostream& out) {
    nlohmann::json head{{"schema", 1},
                        {"method", report.method},
                        {"best_params", report.best_params},
                        {"best_value", report.best_value},
                        {"evaluations", report.evaluations},
                        {"iterations", report.history.size()},
                        {"objective_variance", report.objective_variance},
                        {"flat_objective", report.flat_objective}};
    out << head.dump() << '\n';
    for (std::size_t i = 0; i < report.history.size(); ++i) {
        const auto& h = report.history[i];
        nlohmann::json row{{"iteration", i},
                           {"center", h.center},
                           {"spread", h.spread},
                           {"incumbent", h.incumbent_value},
                           {"round_value", h.round_value}};
        out << row.dump() << '\n';
    }
}

EstimationReport read_report(std::istream& in) {
    EstimationReport rep;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (lineno == 1) {
                if (j.at("schema").get<int>() != 1) throw VersionError("unsupported report schema");
                rep.method = j.at("method").get<std::string>();
                rep.best_params = j.at("best_params").get<std::vector<double>>();
                rep.best_value = j.at("best_value").get<double>();
                rep.evaluations = j.at("evaluations").get<long>();
                rep.objective_variance = j.at("objective_variance").get<double>();
                rep.flat_objective = j.at("flat_objective").get<bool>();
            } else {
                rep.history.push_back({j.at("center").get<std::vector<double>>(), j.at("spread").get<std::vector<double>>(),
                                       j.at("incumbent").get<double>(), j.at("round_value").get<double>()});
            }
        } catch (const VersionError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    return rep;
}

}  // namespace rview
