// rview: command-line front end for dataset generation, estimation, behavior cloning and metrics.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rview/bcdiffusion.hpp"
#include "rview/dataset_io.hpp"
#include "rview/errors.hpp"
#include "rview/estimators.hpp"
#include "rview/likelihood.hpp"
#include "rview/metrics.hpp"
#include "rview/parallel.hpp"
#include "rview/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rview;

namespace {

std::uint64_t fnv1a_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char s[17];
    std::snprintf(s, sizeof s, "%016llx", static_cast<unsigned long long>(v));
    return s;
}

// Everything a manifest records about one invocation.
struct Run {
    std::string command;
    CLI::App* app = nullptr;
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
    std::optional<std::uint64_t> seed;
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

    void write_manifests() const {
        json flags = json::object();
        for (const CLI::Option* opt : app->get_options()) {
            if (opt->get_single_name() == "help" || opt->count() == 0) continue;
            const auto res = opt->results();
            flags[opt->get_single_name()] = res.size() == 1 ? json(res.front()) : json(res);
        }
        json m{{"command", command},
               {"flags", flags},
               {"seed", seed ? json(*seed) : json(nullptr)},
               {"inputs", json::array()},
               {"outputs", json::array()},
               {"duration_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()}};
        for (const auto& p : inputs) m["inputs"].push_back(p.string());
        json sums = json::object();
        for (const auto& p : outputs) {
            m["outputs"].push_back(p.string());
            sums[p.string()] = "fnv1a64:" + hex64(fnv1a_file(p));
        }
        m["checksums"] = sums;
        for (const auto& p : outputs) write_file_atomic(fs::path(p.string() + ".manifest.json"), m.dump(2) + "\n");
    }
};

Dataset load_dataset(const fs::path& path) {
    if (!fs::exists(path)) throw Error("dataset file not found: " + path.string());
    return read_dataset(path);
}

void write_lines(const fs::path& path, const std::vector<json>& lines) {
    std::string s;
    for (const auto& l : lines) s += l.dump() + "\n";
    write_file_atomic(path, s);
}

json summary_json(const MetricSummary& s) {
    return {{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}, {"n", s.n}};
}

struct ScenarioFlags {
    int obstacles_min = 10;
    int obstacles_max = 16;
    double speed_max = 0.0;
    long T_max = 600;

    void add(CLI::App* c) {
        c->add_option("--obstacles-min", obstacles_min, "Fewest obstacles per scenario")->check(CLI::NonNegativeNumber);
        c->add_option("--obstacles-max", obstacles_max, "Most obstacles per scenario")->check(CLI::NonNegativeNumber);
        c->add_option("--obstacle-speed-max", speed_max, "Largest obstacle speed (0 = static)")
            ->check(CLI::NonNegativeNumber);
        c->add_option("--t-max", T_max, "Episode step limit")->check(CLI::PositiveNumber);
    }
    ScenarioConfig config() const {
        ScenarioConfig sc;
        sc.n_obstacles_min = obstacles_min;
        sc.n_obstacles_max = obstacles_max;
        sc.obstacle_speed = {0.0, speed_max};
        sc.T_max = T_max;
        return sc;
    }
};

struct LikelihoodFlags {
    std::string belief = "tracked";
    double sigma = 0.05;
    int beam = 32;

    void add(CLI::App* c) {
        c->add_option("--belief", belief, "Demonstrator memory model in the likelihood")
            ->check(CLI::IsMember({"tracked", "memoryless"}));
        c->add_option("--sigma", sigma, "Action kernel bandwidth (scaled units)")->check(CLI::PositiveNumber);
        c->add_option("--beam", beam, "Belief hypotheses kept per step")->check(CLI::PositiveNumber);
    }
    LikelihoodConfig config(const Dataset& d) const {
        if (d.meta.mode != DynamicsMode::unicycle) {
            throw PreconditionError("the likelihood scores unicycle expert data; dataset mode is '" +
                                    std::string(to_string(d.meta.mode)) + "'");
        }
        LikelihoodConfig lik = unicycle_likelihood(ExpertGains{}, sigma);
        lik.belief = belief == "memoryless" ? BeliefModel::memoryless : BeliefModel::tracked;
        lik.beam_width = beam;
        return lik;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Observation-model estimation and behavior cloning for cone-sensing agents"};
    app.require_subcommand(1);
    unsigned jobs = 0;
    app.add_option("--jobs", jobs, "Worker threads (0 = all cores)");
    Run run;
    run.app = &app;

    // generate
    auto* gen = app.add_subcommand("generate", "Roll out the potential-field expert on random scenarios");
    long g_n = 0;
    double g_r = 55, g_theta = 0.392, g_p = 0.8;
    std::uint64_t g_seed = 0;
    std::string g_out, g_memory = "persistent";
    ScenarioFlags g_sc;
    gen->add_option("--n", g_n, "Number of trajectories")->required()->check(CLI::PositiveNumber);
    gen->add_option("--r-obs", g_r, "Sensor range")->check(CLI::PositiveNumber);
    gen->add_option("--theta-obs", g_theta, "Sensor half-angle (rad)")->check(CLI::Range(0.0, M_PI));
    gen->add_option("--p-obs", g_p, "Per-step detection probability")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--seed", g_seed, "Root seed");
    gen->add_option("--out", g_out, "Output dataset (.jsonl)")->required();
    gen->add_option("--memory", g_memory, "Expert obstacle memory")->check(CLI::IsMember({"persistent", "memoryless"}));
    g_sc.add(gen);

    // estimate-obs
    auto* eo = app.add_subcommand("estimate-obs", "Estimate (r_obs, theta_obs) by cross-entropy search");
    std::string eo_data, eo_out;
    double eo_p = 0.8;
    std::uint64_t eo_seed = 0;
    int eo_pop = 64, eo_iters = 30;
    LikelihoodFlags eo_lik;
    eo->add_option("--data", eo_data, "Dataset (.jsonl)")->required();
    eo->add_option("--p-obs", eo_p, "Known detection probability")->check(CLI::Range(0.0, 1.0));
    eo->add_option("--seed", eo_seed, "Search seed");
    eo->add_option("--population", eo_pop, "Samples per generation")->check(CLI::PositiveNumber);
    eo->add_option("--iterations", eo_iters, "Generations")->check(CLI::PositiveNumber);
    eo->add_option("--out", eo_out, "Report file (.jsonl)");
    eo_lik.add(eo);

    // estimate-pobs
    auto* ep = app.add_subcommand("estimate-pobs", "Estimate p_obs by Bayesian optimization");
    std::string ep_data, ep_out;
    double ep_r = 55, ep_theta = 0.392;
    int ep_init = 8, ep_rounds = 40;
    LikelihoodFlags ep_lik;
    ep->add_option("--data", ep_data, "Dataset (.jsonl)")->required();
    ep->add_option("--r-obs", ep_r, "Known sensor range")->check(CLI::PositiveNumber);
    ep->add_option("--theta-obs", ep_theta, "Known sensor half-angle")->check(CLI::Range(0.0, M_PI));
    ep->add_option("--init-points", ep_init, "Initial design size")->check(CLI::PositiveNumber);
    ep->add_option("--rounds", ep_rounds, "Acquisition rounds")->check(CLI::NonNegativeNumber);
    ep->add_option("--out", ep_out, "Report file (.jsonl)");
    ep_lik.add(ep);

    // rollout (expert under other sensor parameters, same scenarios and seeds)
    auto* ro = app.add_subcommand("rollout", "Re-run the expert on a dataset's scenarios with other sensor parameters");
    std::string ro_data, ro_out;
    double ro_r = 55, ro_theta = 0.392, ro_p = 0.8;
    std::uint64_t ro_seed = 0;
    ro->add_option("--data", ro_data, "Source dataset (.jsonl)")->required();
    ro->add_option("--r-obs", ro_r, "Sensor range")->check(CLI::PositiveNumber);
    ro->add_option("--theta-obs", ro_theta, "Sensor half-angle")->check(CLI::Range(0.0, M_PI));
    ro->add_option("--p-obs", ro_p, "Detection probability")->check(CLI::Range(0.0, 1.0));
    ro->add_option("--seed", ro_seed, "Seed the source was generated with");
    ro->add_option("--out", ro_out, "Output dataset (.jsonl)")->required();

    // train-bc
    auto* tb = app.add_subcommand("train-bc", "Train the diffusion policy on a dataset");
    std::string tb_data, tb_out;
    std::uint64_t tb_seed = 0;
    DiffusionConfig tb_cfg;
    tb->add_option("--data", tb_data, "Training dataset (.jsonl)")->required();
    tb->add_option("--out", tb_out, "Model file")->required();
    tb->add_option("--seed", tb_seed, "Training seed");
    tb->add_option("--epochs", tb_cfg.epochs, "Epochs")->check(CLI::PositiveNumber);
    tb->add_option("--max-seconds", tb_cfg.max_train_seconds, "Stop after this much wall time (0 = off)")
        ->check(CLI::NonNegativeNumber);
    tb->add_option("--horizon", tb_cfg.horizon, "Chunk length H")->check(CLI::PositiveNumber);
    tb->add_option("--k", tb_cfg.K, "Obstacle slots in the encoding")->check(CLI::NonNegativeNumber);
    tb->add_option("--hidden", tb_cfg.hidden, "Hidden units per layer")->check(CLI::PositiveNumber);
    tb->add_option("--batch", tb_cfg.batch, "Batch size")->check(CLI::PositiveNumber);
    tb->add_option("--lr", tb_cfg.lr, "Adam step size")->check(CLI::PositiveNumber);
    tb->add_option("--t-diff", tb_cfg.T_diff, "Diffusion steps")->check(CLI::PositiveNumber);
    tb->add_option("--ddim-steps", tb_cfg.ddim_steps, "DDIM steps when sampling")->check(CLI::NonNegativeNumber);
    tb->add_option("--ddpm-steps", tb_cfg.ddpm_tail_steps, "Final DDPM steps when sampling")
        ->check(CLI::NonNegativeNumber);
    tb->add_option("--offset-copies", tb_cfg.sensor_offset_copies, "Sensor-offset augmentation copies per step")
        ->check(CLI::NonNegativeNumber);
    tb->add_option("--offset-max", tb_cfg.sensor_offset_max, "Largest sensor offset in augmentation (rad)")
        ->check(CLI::Range(0.0, M_PI));

    // rollout-bc
    auto* rb = app.add_subcommand("rollout-bc", "Roll out a trained policy on a dataset's scenarios");
    std::string rb_model, rb_data, rb_out, rb_mode = "pointmass", rb_psi = "learned";
    std::uint64_t rb_seed = 0;
    std::optional<double> rb_r, rb_theta, rb_p;
    BcRolloutConfig rb_cfg;
    rb->add_option("--model", rb_model, "Model file")->required();
    rb->add_option("--data", rb_data, "Dataset whose scenarios are used (.jsonl)")->required();
    rb->add_option("--out", rb_out, "Output dataset (.jsonl)")->required();
    rb->add_option("--seed", rb_seed, "Seed");
    rb->add_option("--mode", rb_mode, "Vehicle model")->check(CLI::IsMember({"pointmass", "bicycle"}));
    rb->add_option("--psi-mode", rb_psi, "Sensor heading source")->check(CLI::IsMember({"learned", "fixed"}));
    rb->add_option("--psi-rate", rb_cfg.psi_rate, "Sensor turn per step with --psi-mode fixed (rad)");
    rb->add_option("--execute", rb_cfg.execute_steps, "Actions executed per sampled chunk")->check(CLI::PositiveNumber);
    rb->add_option("--k-omega", rb_cfg.K_omega, "Heading gain in bicycle mode")->check(CLI::PositiveNumber);
    rb->add_option("--r-obs", rb_r, "Sensor range (default: the dataset's)")->check(CLI::PositiveNumber);
    rb->add_option("--theta-obs", rb_theta, "Sensor half-angle (default: the dataset's)");
    rb->add_option("--p-obs", rb_p, "Detection probability (default: the dataset's)");

    // eval
    auto* ev = app.add_subcommand("eval", "Normalized Frechet distance between paired datasets");
    std::string ev_actual, ev_pred, ev_out;
    ev->add_option("--actual", ev_actual, "Reference dataset")->required();
    ev->add_option("--predicted", ev_pred, "Compared dataset")->required();
    ev->add_option("--out", ev_out, "Metric file (.jsonl)");

    // safety
    auto* sf = app.add_subcommand("safety", "Proximity rate to the nearest obstacle");
    std::string sf_data, sf_out;
    double sf_threshold = 20.0;
    sf->add_option("--data", sf_data, "Dataset (.jsonl)")->required();
    sf->add_option("--threshold", sf_threshold, "Distance threshold")->check(CLI::PositiveNumber);
    sf->add_option("--out", sf_out, "Metric file (.jsonl)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        const ExpertGains gains;
        if (gen->parsed()) {
            run.command = "generate";
            run.app = gen;
            run.seed = g_seed;
            const ScenarioConfig sc = g_sc.config();
            if (sc.n_obstacles_min > sc.n_obstacles_max) {
                std::cerr << "error: --obstacles-min exceeds --obstacles-max\n";
                return 2;
            }
            const auto memory = g_memory == "memoryless" ? BeliefMemory::memoryless : BeliefMemory::persistent;
            const auto d = generate_dataset(sc, SensorParams(g_r, g_theta, g_p), expert_policy_factory(gains, memory),
                                            rollout_config_for(sc, DynamicsMode::unicycle, gains.v_max), g_n, g_seed,
                                            jobs);
            write_dataset(d, fs::path(g_out));
            run.outputs.push_back(g_out);
            std::map<std::string, int> outcomes;
            for (const auto& t : d.trajectories) ++outcomes[std::string(to_string(t.outcome))];
            std::cout << "wrote " << d.trajectories.size() << " trajectories to " << g_out;
            for (const auto& [k, v] : outcomes) std::cout << "  " << k << "=" << v;
            std::cout << "\n";
        } else if (eo->parsed()) {
            run.command = "estimate-obs";
            run.app = eo;
            run.seed = eo_seed;
            run.inputs.push_back(eo_data);
            const auto d = load_dataset(eo_data);
            CemConfig cem = default_observation_cem();
            cem.population = eo_pop;
            cem.iterations = eo_iters;
            const auto rep = estimate_observation_params(d, eo_p, cem, eo_lik.config(d), eo_seed, jobs);
            std::printf("r_obs* = %.4f  theta_obs* = %.5f  (mean log-lik per step %.5f, %ld evaluations)\n",
                        rep.best_params[0], rep.best_params[1], rep.best_value, rep.evaluations);
            if (rep.flat_objective) std::printf("warning: objective is flat; parameters are not identifiable\n");
            if (!eo_out.empty()) {
                std::ostringstream buf;
                write_report(rep, buf);
                write_file_atomic(eo_out, buf.str());
                run.outputs.push_back(eo_out);
            }
        } else if (ep->parsed()) {
            run.command = "estimate-pobs";
            run.app = ep;
            run.inputs.push_back(ep_data);
            const auto d = load_dataset(ep_data);
            BoConfig bo;
            bo.init_points = ep_init;
            bo.iterations = ep_rounds;
            const auto rep = estimate_p_obs(d, ep_r, ep_theta, bo, ep_lik.config(d), jobs);
            std::printf("p_obs* = %.4f  (mean log-lik per step %.5f, %ld evaluations)\n", rep.best_params[0],
                        rep.best_value, rep.evaluations);
            if (rep.flat_objective) std::printf("warning: objective is flat; p_obs is not identifiable\n");
            if (!ep_out.empty()) {
                std::ostringstream buf;
                write_report(rep, buf);
                write_file_atomic(ep_out, buf.str());
                run.outputs.push_back(ep_out);
            }
        } else if (ro->parsed()) {
            run.command = "rollout";
            run.app = ro;
            run.seed = ro_seed;
            run.inputs.push_back(ro_data);
            const auto src = load_dataset(ro_data);
            ScenarioConfig sc;
            sc.h = src.meta.h;
            auto rc = rollout_config_for(sc, DynamicsMode::unicycle, gains.v_max);
            const auto d = rollout_scenarios(src, SensorParams(ro_r, ro_theta, ro_p), expert_policy_factory(gains), rc,
                                             ro_seed, jobs);
            write_dataset(d, fs::path(ro_out));
            run.outputs.push_back(ro_out);
            std::cout << "wrote " << d.trajectories.size() << " trajectories to " << ro_out << "\n";
        } else if (tb->parsed()) {
            run.command = "train-bc";
            run.app = tb;
            run.seed = tb_seed;
            run.inputs.push_back(tb_data);
            const auto d = load_dataset(tb_data);
            Rng rng(tb_seed);
            const auto m = ddpm_train(d, tb_cfg, rng);
            write_model(fs::path(tb_out), m);
            run.outputs.push_back(tb_out);
            std::printf("trained %ld iterations over %zu epochs; loss %.4f -> %.4f\n", m.iterations,
                        m.loss_trace.size(), m.initial_loss, m.loss_trace.empty() ? 0.0 : m.loss_trace.back());
            if (m.padded_trajectories > 0) {
                std::printf("note: %ld trajectories were shorter than one chunk and were padded\n",
                            m.padded_trajectories);
            }
        } else if (rb->parsed()) {
            run.command = "rollout-bc";
            run.app = rb;
            run.seed = rb_seed;
            run.inputs = {rb_model, rb_data};
            if (!fs::exists(rb_model)) throw Error("model file not found: " + rb_model);
            const auto m = read_model(fs::path(rb_model));
            const auto src = load_dataset(rb_data);
            const auto base = src.meta.sensor.value_or(SensorParams(55, 0.392, 0.8));
            const SensorParams sensor(rb_r.value_or(base.r_obs()), rb_theta.value_or(base.theta_obs()),
                                      rb_p.value_or(base.p_obs()));
            ScenarioConfig sc;
            sc.h = src.meta.h;
            const auto mode = parse_dynamics_mode(rb_mode);
            BcRolloutConfig cfg = bc_rollout_config(sc, mode, gains.v_max);
            cfg.psi_mode = rb_psi == "fixed" ? PsiMode::fixed : PsiMode::learned;
            cfg.psi_rate = rb_cfg.psi_rate;
            cfg.execute_steps = rb_cfg.execute_steps;
            cfg.K_omega = rb_cfg.K_omega;
            const auto d = rollout_scenarios(src, sensor, bc_policy_factory(m, cfg), cfg.rollout, rb_seed, jobs);
            write_dataset(d, fs::path(rb_out));
            run.outputs.push_back(rb_out);
            int goals = 0;
            for (const auto& t : d.trajectories) goals += t.outcome == Outcome::reached_goal;
            std::printf("wrote %zu rollouts to %s; reached goal in %d\n", d.trajectories.size(), rb_out.c_str(), goals);
        } else if (ev->parsed()) {
            run.command = "eval";
            run.app = ev;
            run.inputs = {ev_actual, ev_pred};
            const auto a = load_dataset(ev_actual);
            const auto p = load_dataset(ev_pred);
            std::map<long, const Trajectory*> by_id;
            for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
                by_id[a.trajectories[i].scenario_id.value_or(static_cast<long>(i))] = &a.trajectories[i];
            }
            std::vector<double> values;
            std::vector<json> lines;
            for (std::size_t i = 0; i < p.trajectories.size(); ++i) {
                const auto& tp = p.trajectories[i];
                const long id = tp.scenario_id.value_or(static_cast<long>(i));
                const auto it = by_id.find(id);
                if (it == by_id.end()) continue;
                const auto& ta = *it->second;
                const double v = normalized_frechet(ta.path(), tp.path(), ta.scenario.start.position(), ta.scenario.goal);
                values.push_back(v);
                lines.push_back({{"scenario_id", id}, {"normalized_frechet", v}});
            }
            if (values.empty()) throw Error("no trajectories could be paired by scenario id");
            const auto s = summarize(values);
            std::printf("normalized Frechet: mean %.4f  std %.4f  min %.4f  max %.4f  (n = %ld)\n", s.mean, s.std,
                        s.min, s.max, s.n);
            if (!ev_out.empty()) {
                json head = summary_json(s);
                head["metric"] = "normalized_frechet";
                lines.insert(lines.begin(), head);
                write_lines(ev_out, lines);
                run.outputs.push_back(ev_out);
            }
        } else if (sf->parsed()) {
            run.command = "safety";
            run.app = sf;
            run.inputs.push_back(sf_data);
            const auto d = load_dataset(sf_data);
            std::vector<double> values;
            std::vector<json> lines;
            for (std::size_t i = 0; i < d.trajectories.size(); ++i) {
                const auto& t = d.trajectories[i];
                values.push_back(proximity_rate(t, sf_threshold));
                lines.push_back({{"scenario_id", t.scenario_id.value_or(static_cast<long>(i))},
                                 {"proximity_rate", values.back()}});
            }
            const auto s = summarize(values);
            std::printf("proximity rate (< %.3g): mean %.4f  std %.4f  min %.4f  max %.4f  (n = %ld)\n", sf_threshold,
                        s.mean, s.std, s.min, s.max, s.n);
            if (!sf_out.empty()) {
                json head = summary_json(s);
                head["metric"] = "proximity_rate";
                head["threshold"] = sf_threshold;
                lines.insert(lines.begin(), head);
                write_lines(sf_out, lines);
                run.outputs.push_back(sf_out);
            }
        }
        if (!run.outputs.empty()) run.write_manifests();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
