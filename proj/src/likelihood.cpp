#include "rview/likelihood.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "rview/errors.hpp"
#include "rview/parallel.hpp"
#include "rview/random.hpp"

namespace rview {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr long kNegInfLong = std::numeric_limits<long>::min();

double log_sum_exp(std::span<const double> terms) {
    double mx = kNegInf;
    for (double v : terms) mx = std::max(mx, v);
    if (mx == kNegInf) return kNegInf;
    double s = 0.0;
    for (double v : terms) s += std::exp(v - mx);
    return mx + std::log(s);
}

// Everything the marginal needs about one step once the relevant obstacles are known.
struct StepProblem {
    const AgentState& x;
    Vec2 goal;
    std::span<const Vec2> reps;  // repulsion of each relevant visible obstacle, ascending id
    std::span<const double> u_obs;
    const LikelihoodConfig& cfg;
};

double log_kernel_for(const StepProblem& pb, Vec2 net_rep) {
    const Control nom = control_from_forces(pb.x, pb.goal, net_rep, pb.cfg.gains);
    const auto u_nom = control_vector(nom, pb.cfg.mode);
    return log_kernel_density(pb.u_obs, u_nom, pb.cfg.kernel);
}

// Net repulsion of the subset encoded by `chosen` (indices into reps, ascending).
Vec2 subset_repulsion(std::span<const Vec2> reps, std::span<const std::size_t> chosen) {
    Vec2 r;
    for (std::size_t i : chosen) r += reps[i];
    return r;
}

// With p in {0, 1} exactly one subset carries mass; both routes evaluate it through here.
bool degenerate_p(double p) { return p == 0.0 || p == 1.0; }

double log_degenerate(const StepProblem& pb, double p) {
    Vec2 r;
    if (p == 1.0) {
        for (const auto& v : pb.reps) r += v;
    }
    return log_kernel_for(pb, r);
}

double log_marginal_exact(const StepProblem& pb, double p) {
    const std::size_t m = pb.reps.size();
    if (m == 0 || degenerate_p(p)) return log_degenerate(pb, p);
    if (m > 30) throw PreconditionError("exact enumeration over more than 30 obstacles requested");
    const double lp = std::log(p), lq = std::log1p(-p);
    std::vector<double> terms;
    terms.reserve(std::size_t{1} << m);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
        Vec2 r;
        for (std::size_t i = 0; i < m; ++i) {
            if (mask & (std::uint64_t{1} << i)) r += pb.reps[i];
        }
        const auto k = static_cast<double>(std::popcount(mask));
        terms.push_back(k * lp + (static_cast<double>(m) - k) * lq + log_kernel_for(pb, r));
    }
    return log_sum_exp(terms);
}

struct LogMcEstimate {
    double log_value;
    double std_error;  // linear scale
};

LogMcEstimate log_marginal_mc(const StepProblem& pb, double p, int samples, McScheme scheme, Rng& rng) {
    const std::size_t m = pb.reps.size();
    if (m == 0 || degenerate_p(p)) return {log_degenerate(pb, p), 0.0};
    if (samples < 1) throw PreconditionError("mc_samples must be >= 1");

    std::vector<std::size_t> chosen;
    chosen.reserve(m);
    if (scheme == McScheme::bernoulli) {
        std::vector<double> logs(static_cast<std::size_t>(samples));
        for (auto& l : logs) {
            chosen.clear();
            for (std::size_t i = 0; i < m; ++i) {
                if (uniform01(rng) < p) chosen.push_back(i);
            }
            l = log_kernel_for(pb, subset_repulsion(pb.reps, chosen));
        }
        const double mx = *std::max_element(logs.begin(), logs.end());
        double s = 0.0, s2 = 0.0;
        for (double l : logs) {
            const double v = std::exp(l - mx);
            s += v;
            s2 += v * v;
        }
        const double n = samples;
        const double mean = s / n;
        const double var = std::max(0.0, s2 / n - mean * mean) * (n > 1 ? n / (n - 1) : 0.0);
        return {mx + std::log(mean), std::exp(mx) * std::sqrt(var / n)};
    }

    // Stratified by subset size: P(|S| = k) is binomial, subsets of a given size are equally likely.
    const double lp = std::log(p), lq = std::log1p(-p);
    std::vector<std::size_t> idx(m);
    struct Stratum {
        double log_pmf;
        std::vector<double> logs;
    };
    std::vector<Stratum> strata;
    for (std::size_t k = 0; k <= m; ++k) {
        const double log_pmf = std::lgamma(static_cast<double>(m) + 1) - std::lgamma(static_cast<double>(k) + 1) -
                               std::lgamma(static_cast<double>(m - k) + 1) + static_cast<double>(k) * lp +
                               static_cast<double>(m - k) * lq;
        const double pmf = std::exp(log_pmf);
        if (pmf <= 0.0) continue;
        const int nk = std::max(1, static_cast<int>(std::lround(samples * pmf)));
        Stratum st{log_pmf, std::vector<double>(static_cast<std::size_t>(nk))};
        for (auto& l : st.logs) {
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            for (std::size_t i = 0; i < k; ++i) {
                const auto j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(m - i));
                std::swap(idx[i], idx[std::min(j, m - 1)]);
            }
            chosen.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
            std::sort(chosen.begin(), chosen.end());
            l = log_kernel_for(pb, subset_repulsion(pb.reps, chosen));
        }
        strata.push_back(std::move(st));
    }
    double mx = kNegInf;
    for (const auto& st : strata) {
        for (double l : st.logs) mx = std::max(mx, l);
    }
    double est = 0.0, var = 0.0;
    for (const auto& st : strata) {
        const double n = static_cast<double>(st.logs.size());
        double s = 0.0, s2 = 0.0;
        for (double l : st.logs) {
            const double v = std::exp(l - mx);
            s += v;
            s2 += v * v;
        }
        const double mean = s / n;
        const double sv = n > 1 ? std::max(0.0, s2 / n - mean * mean) * n / (n - 1) : 0.0;
        const double w = std::exp(st.log_pmf);
        est += w * mean;
        var += w * w * sv / n;
    }
    return {mx + std::log(est), std::exp(mx) * std::sqrt(var)};
}

double log_marginal(const StepProblem& pb, double p, std::uint64_t stream) {
    const auto m = static_cast<int>(pb.reps.size());
    if (m <= pb.cfg.max_exact_visible) return log_marginal_exact(pb, p);
    Rng rng(stream);
    return log_marginal_mc(pb, p, pb.cfg.mc_samples, pb.cfg.mc_scheme, rng).log_value;
}

// Repulsions of the visible obstacles that can influence the nominal action.
std::vector<Vec2> relevant_repulsions(const AgentState& x, const Scenario& scenario, long t,
                                      const SensorParams& sensor, const ExpertGains& g) {
    std::vector<std::pair<int, Vec2>> found;
    for (const auto& ob : scenario.obstacles) {
        const Vec2 pos = obstacle_position(ob, t);
        if (!in_cone(x.position(), x.psi, pos, sensor.r_obs(), sensor.theta_obs())) continue;
        const Vec2 rep = repulsion_force(x.position(), pos, scenario.goal, g);
        if (rep.x != 0.0 || rep.y != 0.0) found.emplace_back(ob.id, rep);
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Vec2> reps;
    reps.reserve(found.size());
    for (const auto& [id, rep] : found) reps.push_back(rep);
    return reps;
}

}  // namespace

void LikelihoodConfig::validate() const {
    if (max_exact_visible < 0) throw PreconditionError("max_exact_visible must be >= 0");
    if (mc_samples < 1) throw PreconditionError("mc_samples must be >= 1");
    if (!(log_floor < 0.0)) throw PreconditionError("log_floor must be < 0");
    if (beam_width < 1) throw PreconditionError("beam_width must be >= 1");
    kernel.validate(control_dims(mode));
    gains.validate();
}

LikelihoodConfig unicycle_likelihood(const ExpertGains& gains, double sigma_u) {
    LikelihoodConfig cfg;
    cfg.gains = gains;
    cfg.kernel = unicycle_kernel(gains, sigma_u);
    cfg.mode = DynamicsMode::unicycle;
    return cfg;
}

double log_step_marginal(const AgentState& x, const Control& u, const Scenario& scenario, long t,
                         const SensorParams& sensor, const LikelihoodConfig& cfg, std::uint64_t stream) {
    const auto reps = relevant_repulsions(x, scenario, t, sensor, cfg.gains);
    const auto u_obs = control_vector(u, cfg.mode);
    return log_marginal(StepProblem{x, scenario.goal, reps, u_obs, cfg}, sensor.p_obs(), stream);
}

double step_marginal(const AgentState& x, const Control& u, const Scenario& scenario, long t,
                     const SensorParams& sensor, const LikelihoodConfig& cfg, std::uint64_t stream) {
    return std::exp(log_step_marginal(x, u, scenario, t, sensor, cfg, stream));
}

double step_marginal_exact(const AgentState& x, const Control& u, const Scenario& scenario, long t,
                           const SensorParams& sensor, const LikelihoodConfig& cfg) {
    const auto reps = relevant_repulsions(x, scenario, t, sensor, cfg.gains);
    const auto u_obs = control_vector(u, cfg.mode);
    return std::exp(log_marginal_exact(StepProblem{x, scenario.goal, reps, u_obs, cfg}, sensor.p_obs()));
}

McEstimate step_marginal_mc(const AgentState& x, const Control& u, const Scenario& scenario, long t,
                            const SensorParams& sensor, const LikelihoodConfig& cfg, int samples, McScheme scheme,
                            Rng& rng) {
    const auto reps = relevant_repulsions(x, scenario, t, sensor, cfg.gains);
    const auto u_obs = control_vector(u, cfg.mode);
    const auto est = log_marginal_mc(StepProblem{x, scenario.goal, reps, u_obs, cfg}, sensor.p_obs(), samples,
                                     scheme, rng);
    return {std::exp(est.log_value), est.std_error};
}

std::uint64_t step_stream(const Trajectory& traj, long t, std::uint64_t mc_seed) {
    std::uint64_t h = mix_seed(mc_seed, std::bit_cast<std::uint64_t>(traj.scenario.goal.x));
    h = mix_seed(h, std::bit_cast<std::uint64_t>(traj.scenario.goal.y));
    if (!traj.steps.empty()) {
        h = mix_seed(h, std::bit_cast<std::uint64_t>(traj.steps.front().state.p));
        h = mix_seed(h, std::bit_cast<std::uint64_t>(traj.steps.front().state.q));
    }
    return mix_seed(h, static_cast<std::uint64_t>(t));
}

namespace {

// Belief hypothesis: remembered obstacles as (candidate index, step of last detection), ascending.
// Static obstacles store -1 since their remembered position does not depend on when they were seen.
// Memories that can no longer affect any later action are dropped, so equivalent beliefs share a key.
struct Hypothesis {
    std::vector<std::pair<int, long>> seen;
    double logw;
};

struct Branch {
    int k;
    long stamp;     // entry written on detection, -2 when the detection is forgotten at once
    double log_yes;
    double log_no;
};

bool is_static(const PreparedDataset::Track& tr, int k) { return tr.last_relevant[static_cast<std::size_t>(k)].size() == 1; }

const ObstacleTrack& obstacle_at(const PreparedDataset::Track& tr, int k) {
    return tr.scenario.obstacles[tr.obstacle_index[static_cast<std::size_t>(k)]];
}

long relevant_until(const PreparedDataset::Track& tr, int k, long stamp) {
    const auto& lr = tr.last_relevant[static_cast<std::size_t>(k)];
    return stamp < 0 ? lr.front() : lr[static_cast<std::size_t>(stamp)];
}

double hypothesis_log_kernel(const PreparedDataset::Track& tr, const PreparedDataset::Step& st,
                             const std::vector<std::pair<int, long>>& seen, const LikelihoodConfig& cfg) {
    Vec2 rep;
    for (const auto& [k, stamp] : seen) {
        if (stamp < 0) {
            rep += st.candidates[static_cast<std::size_t>(k)].repulsion;
        } else {
            rep += repulsion_force(st.state.position(), obstacle_position(obstacle_at(tr, k), stamp),
                                   tr.scenario.goal, cfg.gains);
        }
    }
    return log_kernel_for(StepProblem{st.state, tr.scenario.goal, {}, st.u_obs, cfg}, rep);
}

// Applies the detected branches of `mask` to `seen`.
std::vector<std::pair<int, long>> apply_detections(const std::vector<std::pair<int, long>>& seen,
                                                   const std::vector<Branch>& branches, std::uint64_t mask) {
    std::vector<std::pair<int, long>> out;
    out.reserve(seen.size() + branches.size());
    auto a = seen.begin();
    for (std::size_t i = 0; i < branches.size(); ++i) {
        const auto& br = branches[i];
        while (a != seen.end() && a->first < br.k) out.push_back(*a++);
        const bool have = a != seen.end() && a->first == br.k;
        if (mask & (std::uint64_t{1} << i)) {
            if (br.stamp != -2) out.emplace_back(br.k, br.stamp);
        } else if (have) {
            out.push_back(*a);
        }
        if (have) ++a;
    }
    out.insert(out.end(), a, seen.end());
    return out;
}

std::pair<double, double> bernoulli_logs(double p, long trials) {
    // probability that at least one of `trials` draws succeeds
    if (trials <= 0 || p == 0.0) return {kNegInf, 0.0};
    if (p == 1.0) return {0.0, kNegInf};
    const double log_miss = static_cast<double>(trials) * std::log1p(-p);
    return {std::log(-std::expm1(log_miss)), log_miss};
}

double tracked_loglik(const PreparedDataset::Track& tr, const SensorParams& sensor, const LikelihoodConfig& cfg) {
    const double p = sensor.p_obs();
    const auto beam_width = static_cast<std::size_t>(cfg.beam_width);
    const std::size_t n_obs = tr.obstacle_index.size();

    std::vector<Hypothesis> beam{{{}, 0.0}};
    std::vector<Hypothesis> children, merged;
    std::vector<long> pending(n_obs, 0);  // visible steps of a static obstacle since it last mattered
    std::vector<char> visible(n_obs);
    std::vector<Branch> branches;
    std::vector<double> logs;
    double total = 0.0;

    for (const auto& st : tr.steps) {
        const long t = st.t;
        for (std::size_t k = 0; k < n_obs; ++k) {
            const auto& c = st.candidates[k];
            visible[k] = c.dist <= sensor.r_obs() && (c.dist == 0.0 || std::abs(c.bearing) <= sensor.theta_obs());
        }
        // Static obstacles: an undetected one only matters while it repels, so its detection draws
        // are pooled until then and resolved in one branch.
        std::vector<std::pair<int, std::pair<double, double>>> static_branch;
        for (std::size_t k = 0; k < n_obs; ++k) {
            if (!is_static(tr, static_cast<int>(k))) continue;
            const auto& c = st.candidates[k];
            if (c.repulsion.x != 0.0 || c.repulsion.y != 0.0) {
                static_branch.emplace_back(static_cast<int>(k), bernoulli_logs(p, pending[k] + visible[k]));
                pending[k] = 0;
            } else {
                pending[k] += visible[k];
            }
        }

        children.clear();
        for (std::size_t hi = 0; hi < beam.size(); ++hi) {
            auto& h = beam[hi];
            std::erase_if(h.seen, [&](const auto& e) { return relevant_until(tr, e.first, e.second) < t; });

            branches.clear();
            auto sb = static_branch.begin();
            auto known = h.seen.begin();
            for (std::size_t k = 0; k < n_obs; ++k) {
                const int ki = static_cast<int>(k);
                while (known != h.seen.end() && known->first < ki) ++known;
                const bool have = known != h.seen.end() && known->first == ki;
                if (is_static(tr, ki)) {
                    if (sb != static_branch.end() && sb->first == ki) {
                        if (!have) branches.push_back({ki, -1, sb->second.first, sb->second.second});
                        ++sb;
                    }
                    continue;
                }
                if (!visible[k]) continue;
                const long stamp = relevant_until(tr, ki, t) >= t ? t : -2;
                if (stamp == -2 && !have) continue;  // same belief either way
                branches.push_back({ki, stamp, p > 0.0 ? std::log(p) : kNegInf, p < 1.0 ? std::log1p(-p) : kNegInf});
            }
            // settle branches whose outcome is certain
            std::erase_if(branches, [](const Branch& b) { return b.log_yes == kNegInf; });
            std::vector<Branch> sure;
            std::erase_if(branches, [&](const Branch& b) {
                if (b.log_no != kNegInf) return false;
                sure.push_back(b);
                return true;
            });
            if (!sure.empty()) {
                h.seen = apply_detections(h.seen, sure, (std::uint64_t{1} << sure.size()) - 1);
            }

            const std::size_t m = branches.size();
            auto emit = [&](std::uint64_t mask, double log_prior) {
                Hypothesis child{apply_detections(h.seen, branches, mask), 0.0};
                child.logw = h.logw + log_prior + hypothesis_log_kernel(tr, st, child.seen, cfg);
                children.push_back(std::move(child));
            };
            if (static_cast<int>(m) <= cfg.max_exact_visible) {
                for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
                    double lp = 0.0;
                    for (std::size_t i = 0; i < m; ++i) {
                        lp += (mask & (std::uint64_t{1} << i)) ? branches[i].log_yes : branches[i].log_no;
                    }
                    emit(mask, lp);
                }
            } else {
                Rng rng(mix_seed(st.stream, hi));
                const double share = -std::log(static_cast<double>(cfg.mc_samples));
                for (int s = 0; s < cfg.mc_samples; ++s) {
                    std::uint64_t mask = 0;
                    for (std::size_t i = 0; i < m && i < 64; ++i) {
                        if (std::log(uniform01(rng)) < branches[i].log_yes) mask |= std::uint64_t{1} << i;
                    }
                    emit(mask, share);
                }
            }
        }

        // merge identical beliefs
        std::sort(children.begin(), children.end(), [](const Hypothesis& a, const Hypothesis& b) { return a.seen < b.seen; });
        merged.clear();
        for (auto& c : children) {
            if (!merged.empty() && merged.back().seen == c.seen) {
                auto& m = merged.back();
                const double hi = std::max(m.logw, c.logw), lo = std::min(m.logw, c.logw);
                m.logw = hi == kNegInf ? kNegInf : hi + std::log1p(std::exp(lo - hi));
            } else {
                merged.push_back(std::move(c));
            }
        }
        logs.clear();
        for (const auto& h : merged) logs.push_back(h.logw);
        const double norm = log_sum_exp(logs);  // parents carry total mass 1
        total += std::max(norm, cfg.log_floor);

        std::stable_sort(merged.begin(), merged.end(),
                         [](const Hypothesis& a, const Hypothesis& b) { return a.logw > b.logw; });
        if (merged.size() > beam_width) merged.resize(beam_width);
        logs.clear();
        for (const auto& h : merged) logs.push_back(h.logw);
        const double kept = log_sum_exp(logs);
        for (auto& h : merged) {
            h.logw = kept == kNegInf ? -std::log(static_cast<double>(merged.size())) : h.logw - kept;
        }
        std::swap(beam, merged);
    }
    return total;
}

}  // namespace

PreparedDataset::Track PreparedDataset::prepare(const Trajectory& traj, const LikelihoodConfig& cfg) {
    if (traj.steps.empty()) throw PreconditionError("cannot score an empty trajectory");
    Track tr{traj.scenario, {}, {}, {}};
    tr.steps.reserve(traj.transitions());
    for (std::size_t i = 0; i + 1 < traj.steps.size(); ++i) {
        const auto& rec = traj.steps[i];
        if (rec.t != static_cast<long>(i)) throw PreconditionError("trajectory steps must be numbered from 0");
        Step st{rec.t, rec.state, control_vector(rec.control, cfg.mode), {}, 0.0, step_stream(traj, rec.t, cfg.mc_seed)};
        for (const auto& ob : traj.scenario.obstacles) {
            const Vec2 pos = obstacle_position(ob, rec.t);
            const Vec2 d = pos - rec.state.position();
            const double dist = d.norm();
            const Vec2 rep = repulsion_force(rec.state.position(), pos, traj.scenario.goal, cfg.gains);
            if (cfg.belief == BeliefModel::memoryless && rep.x == 0.0 && rep.y == 0.0) continue;
            const double bearing = dist == 0.0 ? 0.0 : wrap_angle(std::atan2(d.y, d.x) - rec.state.psi);
            st.candidates.push_back({ob.id, dist, bearing, rep});
        }
        std::sort(st.candidates.begin(), st.candidates.end(),
                  [](const Candidate& a, const Candidate& b) { return a.id < b.id; });
        st.log_k_empty = log_kernel_for(StepProblem{st.state, traj.scenario.goal, {}, st.u_obs, cfg}, Vec2{});
        tr.steps.push_back(std::move(st));
    }
    if (cfg.belief == BeliefModel::tracked) {
        const auto& obs = traj.scenario.obstacles;
        tr.obstacle_index.resize(obs.size());
        std::iota(tr.obstacle_index.begin(), tr.obstacle_index.end(), std::size_t{0});
        std::sort(tr.obstacle_index.begin(), tr.obstacle_index.end(),
                  [&](std::size_t a, std::size_t b) { return obs[a].id < obs[b].id; });
        const long n = static_cast<long>(tr.steps.size());
        auto last_hit = [&](Vec2 pos) {
            for (long s = n - 1; s >= 0; --s) {
                const Vec2 rep = repulsion_force(tr.steps[static_cast<std::size_t>(s)].state.position(), pos,
                                                 traj.scenario.goal, cfg.gains);
                if (rep.x != 0.0 || rep.y != 0.0) return s;
            }
            return -1L;
        };
        for (std::size_t idx : tr.obstacle_index) {
            const auto& ob = obs[idx];
            std::vector<long> lr;
            if (ob.positions.size() == 1) {
                lr.push_back(last_hit(ob.positions.front()));
            } else {
                lr.resize(static_cast<std::size_t>(n));
                for (long s = 0; s < n; ++s) lr[static_cast<std::size_t>(s)] = last_hit(obstacle_position(ob, s));
            }
            tr.last_relevant.push_back(std::move(lr));
        }
    }
    return tr;
}

double PreparedDataset::track_loglik(const Track& track, const SensorParams& sensor, const LikelihoodConfig& cfg) {
    if (cfg.belief == BeliefModel::tracked) return tracked_loglik(track, sensor, cfg);
    double total = 0.0;
    std::vector<Vec2> reps;
    for (const auto& st : track.steps) {
        reps.clear();
        for (const auto& c : st.candidates) {
            if (c.dist <= sensor.r_obs() && (c.dist == 0.0 || std::abs(c.bearing) <= sensor.theta_obs())) {
                reps.push_back(c.repulsion);
            }
        }
        const double l = reps.empty() ? st.log_k_empty
                                      : log_marginal(StepProblem{st.state, track.scenario.goal, reps, st.u_obs, cfg},
                                                     sensor.p_obs(), st.stream);
        total += std::max(l, cfg.log_floor);
    }
    return total;
}

double trajectory_loglik(const Trajectory& traj, const SensorParams& sensor, const LikelihoodConfig& cfg) {
    if (traj.steps.empty()) throw PreconditionError("trajectory_loglik: empty trajectory");
    cfg.validate();
    if (cfg.belief == BeliefModel::tracked) {
        return PreparedDataset::track_loglik(PreparedDataset::prepare(traj, cfg), sensor, cfg);
    }
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < traj.steps.size(); ++i) {
        const auto& st = traj.steps[i];
        const double l = log_step_marginal(st.state, st.control, traj.scenario, st.t, sensor, cfg,
                                           step_stream(traj, st.t, cfg.mc_seed));
        total += std::max(l, cfg.log_floor);
    }
    return total;
}

double dataset_loglik(const Dataset& d, const SensorParams& sensor, const LikelihoodConfig& cfg, unsigned jobs) {
    if (d.trajectories.empty()) throw PreconditionError("dataset_loglik: empty dataset");
    cfg.validate();
    std::vector<double> per(d.trajectories.size());
    parallel_for(per.size(), jobs, [&](std::size_t i) { per[i] = trajectory_loglik(d.trajectories[i], sensor, cfg); });
    return std::accumulate(per.begin(), per.end(), 0.0);
}

PreparedDataset::PreparedDataset(const Dataset& d, const LikelihoodConfig& cfg) : cfg_(cfg) {
    if (d.trajectories.empty()) throw PreconditionError("cannot prepare an empty dataset");
    if (d.meta.mode != cfg.mode) {
        throw PreconditionError("dataset dynamics mode '" + std::string(to_string(d.meta.mode)) +
                                "' does not match the likelihood mode '" + std::string(to_string(cfg.mode)) + "'");
    }
    cfg_.validate();
    trajectories_.reserve(d.trajectories.size());
    for (const auto& tr : d.trajectories) {
        trajectories_.push_back(prepare(tr, cfg_));
        total_steps_ += trajectories_.back().steps.size();
    }
}

double PreparedDataset::trajectory_loglik(std::size_t index, const SensorParams& sensor) const {
    return track_loglik(trajectories_.at(index), sensor, cfg_);
}

double PreparedDataset::loglik(const SensorParams& sensor, unsigned jobs) const {
    std::vector<double> per(trajectories_.size());
    parallel_for(per.size(), jobs, [&](std::size_t i) { per[i] = trajectory_loglik(i, sensor); });
    return std::accumulate(per.begin(), per.end(), 0.0);
}

}  // namespace rview
