#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rview/bcdiffusion.hpp"
#include "rview/dataset_io.hpp"
#include "rview/errors.hpp"
#include "rview/estimators.hpp"
#include "rview/likelihood.hpp"
#include "rview/metrics.hpp"
#include "rview/sim.hpp"

namespace py = pybind11;
using namespace rview;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Vec2> to_points(const Points& a) {
    if (a.ndim() != 2 || a.shape(1) != 2) throw PreconditionError("expected an (n, 2) array of points");
    std::vector<Vec2> out(static_cast<std::size_t>(a.shape(0)));
    auto r = a.unchecked<2>();
    for (py::ssize_t i = 0; i < a.shape(0); ++i) out[static_cast<std::size_t>(i)] = {r(i, 0), r(i, 1)};
    return out;
}

py::array_t<double> from_points(const std::vector<Vec2>& pts) {
    py::array_t<double> a({static_cast<py::ssize_t>(pts.size()), py::ssize_t{2}});
    auto w = a.mutable_unchecked<2>();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        w(static_cast<py::ssize_t>(i), 0) = pts[i].x;
        w(static_cast<py::ssize_t>(i), 1) = pts[i].y;
    }
    return a;
}

py::dict report_dict(const EstimationReport& r) {
    py::dict d;
    d["method"] = r.method;
    d["best_params"] = r.best_params;
    d["best_value"] = r.best_value;
    d["evaluations"] = r.evaluations;
    d["objective_variance"] = r.objective_variance;
    d["flat_objective"] = r.flat_objective;
    py::list hist;
    for (const auto& h : r.history) {
        py::dict e;
        e["center"] = h.center;
        e["spread"] = h.spread;
        e["incumbent_value"] = h.incumbent_value;
        e["round_value"] = h.round_value;
        hist.append(e);
    }
    d["history"] = hist;
    return d;
}

Dynamics dynamics_for(const Trajectory& t, DynamicsMode mode, double v_max) {
    return Dynamics{mode, t.scenario.h, t.scenario.wheelbase, v_max};
}

}  // namespace

PYBIND11_MODULE(_rview, m) {
    m.doc() = "Sensor-aware navigation demonstrations: simulation, observation-model estimation, "
              "diffusion behavior cloning and trajectory metrics.";

    auto error = py::register_exception<Error>(m, "RviewError", PyExc_RuntimeError);
    py::register_exception<PreconditionError>(m, "PreconditionError", error.ptr());
    py::register_exception<ParseError>(m, "ParseError", error.ptr());
    py::register_exception<VersionError>(m, "VersionError", error.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", error.ptr());
    py::register_exception<ScenarioGenerationError>(m, "ScenarioGenerationError", error.ptr());

    py::enum_<DynamicsMode>(m, "DynamicsMode")
        .value("unicycle", DynamicsMode::unicycle)
        .value("bicycle", DynamicsMode::bicycle)
        .value("pointmass", DynamicsMode::pointmass);
    py::enum_<Outcome>(m, "Outcome")
        .value("reached_goal", Outcome::reached_goal)
        .value("timeout", Outcome::timeout)
        .value("collision", Outcome::collision)
        .value("aborted", Outcome::aborted);
    py::enum_<PsiMode>(m, "PsiMode").value("learned", PsiMode::learned).value("fixed", PsiMode::fixed);

    py::class_<SensorParams>(m, "SensorParams")
        .def(py::init<double, double, double>(), py::arg("r_obs"), py::arg("theta_obs"), py::arg("p_obs"))
        .def_property_readonly("r_obs", &SensorParams::r_obs)
        .def_property_readonly("theta_obs", &SensorParams::theta_obs)
        .def_property_readonly("p_obs", &SensorParams::p_obs)
        .def("__repr__", [](const SensorParams& s) {
            return "SensorParams(r_obs=" + std::to_string(s.r_obs()) + ", theta_obs=" + std::to_string(s.theta_obs()) +
                   ", p_obs=" + std::to_string(s.p_obs()) + ")";
        });

    py::class_<ExpertGains>(m, "ExpertGains")
        .def(py::init<>())
        .def_readwrite("k_att", &ExpertGains::k_att)
        .def_readwrite("k_rep", &ExpertGains::k_rep)
        .def_readwrite("d0", &ExpertGains::d0)
        .def_readwrite("v_max", &ExpertGains::v_max)
        .def_readwrite("k_heading", &ExpertGains::k_heading)
        .def_readwrite("goal_radius", &ExpertGains::goal_radius)
        .def_readwrite("rep_max", &ExpertGains::rep_max);

    py::class_<ScenarioConfig>(m, "ScenarioConfig")
        .def(py::init<>())
        .def_readwrite("n_obstacles_min", &ScenarioConfig::n_obstacles_min)
        .def_readwrite("n_obstacles_max", &ScenarioConfig::n_obstacles_max)
        .def_readwrite("agent_radius", &ScenarioConfig::agent_radius)
        .def_readwrite("heading_jitter", &ScenarioConfig::heading_jitter)
        .def_readwrite("h", &ScenarioConfig::h)
        .def_readwrite("T_max", &ScenarioConfig::T_max)
        .def_property(
            "obstacle_speed", [](const ScenarioConfig& c) { return std::pair{c.obstacle_speed.lo, c.obstacle_speed.hi}; },
            [](ScenarioConfig& c, std::pair<double, double> v) { c.obstacle_speed = {v.first, v.second}; });

    py::class_<Trajectory>(m, "Trajectory")
        .def_readonly("outcome", &Trajectory::outcome)
        .def_readonly("scenario_id", &Trajectory::scenario_id)
        .def("__len__", [](const Trajectory& t) { return t.steps.size(); })
        .def("path", [](const Trajectory& t) { return from_points(t.path()); }, "(n, 2) array of positions")
        .def(
            "states",
            [](const Trajectory& t) {
                py::array_t<double> a({static_cast<py::ssize_t>(t.steps.size()), py::ssize_t{5}});
                auto w = a.mutable_unchecked<2>();
                for (std::size_t i = 0; i < t.steps.size(); ++i) {
                    const auto& s = t.steps[i].state;
                    const double row[] = {s.p, s.q, s.phi, s.psi, s.delta};
                    for (py::ssize_t k = 0; k < 5; ++k) w(static_cast<py::ssize_t>(i), k) = row[k];
                }
                return a;
            },
            "(n, 5) array of p, q, phi, psi, delta")
        .def("detections", [](const Trajectory& t) {
            std::vector<std::vector<int>> out;
            for (const auto& s : t.steps) out.push_back(s.detections.ids);
            return out;
        })
        .def_property_readonly("goal", [](const Trajectory& t) { return std::pair{t.scenario.goal.x, t.scenario.goal.y}; })
        .def_property_readonly("start", [](const Trajectory& t) {
            return std::pair{t.scenario.start.p, t.scenario.start.q};
        })
        .def("obstacle_positions", [](const Trajectory& t, long step) {
            std::vector<Vec2> pts;
            for (const auto& ob : t.scenario.obstacles) pts.push_back(obstacle_position(ob, step));
            return from_points(pts);
        }, py::arg("t") = 0);

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("trajectories", &Dataset::trajectories)
        .def("__len__", [](const Dataset& d) { return d.trajectories.size(); })
        .def("__getitem__", [](const Dataset& d, long i) {
            const long n = static_cast<long>(d.trajectories.size());
            if (i < 0) i += n;
            if (i < 0 || i >= n) throw py::index_error();
            return d.trajectories[static_cast<std::size_t>(i)];
        })
        .def_property_readonly("mode", [](const Dataset& d) { return d.meta.mode; })
        .def_property_readonly("sensor", [](const Dataset& d) { return d.meta.sensor; })
        .def_property_readonly("seed", [](const Dataset& d) { return d.meta.seed; })
        .def_property_readonly("h", [](const Dataset& d) { return d.meta.h; })
        .def("total_transitions", &Dataset::total_transitions);

    m.def(
        "generate_dataset",
        [](const SensorParams& sensor, long n, std::uint64_t seed, const ExpertGains& gains, const ScenarioConfig& sc,
           unsigned jobs) {
            py::gil_scoped_release release;
            return generate_dataset(sc, sensor, expert_policy_factory(gains),
                                    rollout_config_for(sc, DynamicsMode::unicycle, gains.v_max), n, seed, jobs);
        },
        py::arg("sensor"), py::arg("n"), py::arg("seed"), py::arg("gains") = ExpertGains{},
        py::arg("scenario") = ScenarioConfig{}, py::arg("jobs") = 0u,
        "Expert demonstrations in unicycle mode; identical for any job count.");

    m.def("read_dataset", py::overload_cast<const std::filesystem::path&>(&read_dataset), py::arg("path"));
    m.def("write_dataset", py::overload_cast<const Dataset&, const std::filesystem::path&>(&write_dataset),
          py::arg("dataset"), py::arg("path"));
    m.def(
        "replay_error",
        [](const Trajectory& t, DynamicsMode mode, double v_max) { return replay_error(t, dynamics_for(t, mode, v_max)); },
        py::arg("trajectory"), py::arg("mode") = DynamicsMode::unicycle, py::arg("v_max") = 10.0);

    m.def(
        "discrete_frechet", [](const Points& p, const Points& q) { return discrete_frechet(to_points(p), to_points(q)); },
        py::arg("p"), py::arg("q"));
    m.def(
        "normalized_frechet",
        [](const Points& p, const Points& q, std::pair<double, double> start, std::pair<double, double> goal) {
            return normalized_frechet(to_points(p), to_points(q), {start.first, start.second}, {goal.first, goal.second});
        },
        py::arg("p"), py::arg("q"), py::arg("start"), py::arg("goal"));
    m.def("proximity_rate", &proximity_rate, py::arg("trajectory"), py::arg("threshold") = 20.0);
    m.def(
        "summarize",
        [](const std::vector<double>& v) {
            const auto s = summarize(v);
            py::dict d;
            d["mean"] = s.mean;
            d["std"] = s.std;
            d["min"] = s.min;
            d["max"] = s.max;
            d["n"] = s.n;
            return d;
        },
        py::arg("values"));

    m.def(
        "dataset_loglik",
        [](const Dataset& d, const SensorParams& s, double sigma_u, const ExpertGains& gains, unsigned jobs) {
            py::gil_scoped_release release;
            return dataset_loglik(d, s, unicycle_likelihood(gains, sigma_u), jobs);
        },
        py::arg("dataset"), py::arg("sensor"), py::arg("sigma_u") = 0.05, py::arg("gains") = ExpertGains{},
        py::arg("jobs") = 0u);
    m.def(
        "estimate_observation_params",
        [](const Dataset& d, double p_obs, std::uint64_t seed, const ExpertGains& gains, unsigned jobs) {
            EstimationReport r;
            {
                py::gil_scoped_release release;
                r = estimate_observation_params(d, p_obs, default_observation_cem(), unicycle_likelihood(gains), seed,
                                                jobs);
            }
            return report_dict(r);
        },
        py::arg("dataset"), py::arg("p_obs"), py::arg("seed") = 0, py::arg("gains") = ExpertGains{},
        py::arg("jobs") = 0u, "CEM over (r_obs, theta_obs) with p_obs known.");
    m.def(
        "estimate_p_obs",
        [](const Dataset& d, double r_obs, double theta_obs, const ExpertGains& gains, unsigned jobs) {
            EstimationReport r;
            {
                py::gil_scoped_release release;
                r = estimate_p_obs(d, r_obs, theta_obs, BoConfig{}, unicycle_likelihood(gains), jobs);
            }
            return report_dict(r);
        },
        py::arg("dataset"), py::arg("r_obs"), py::arg("theta_obs"), py::arg("gains") = ExpertGains{},
        py::arg("jobs") = 0u, "Bayesian optimization of p_obs with the sensor geometry known.");
    m.def(
        "cem_maximize",
        [](const std::function<double(const std::vector<double>&)>& f, const std::vector<std::pair<double, double>>& bounds,
           std::uint64_t seed, int population, int iterations) {
            CemConfig cfg;
            for (auto [lo, hi] : bounds) cfg.bounds.push_back({lo, hi});
            cfg.population = population;
            cfg.iterations = iterations;
            Rng rng(seed);
            return report_dict(cem_maximize(f, cfg, rng, 1));
        },
        py::arg("objective"), py::arg("bounds"), py::arg("seed") = 0, py::arg("population") = 64,
        py::arg("iterations") = 30);
    m.def(
        "bo_maximize",
        [](const std::function<double(double)>& f, int iterations, int init_points) {
            BoConfig cfg;
            cfg.iterations = iterations;
            cfg.init_points = init_points;
            return report_dict(bo_maximize(f, cfg));
        },
        py::arg("objective"), py::arg("iterations") = 40, py::arg("init_points") = 8, "Maximizes f over [0, 1].");

    py::class_<DiffusionConfig>(m, "DiffusionConfig")
        .def(py::init<>())
        .def_readwrite("T_diff", &DiffusionConfig::T_diff)
        .def_readwrite("horizon", &DiffusionConfig::horizon)
        .def_readwrite("K", &DiffusionConfig::K)
        .def_readwrite("hidden", &DiffusionConfig::hidden)
        .def_readwrite("hidden_layers", &DiffusionConfig::hidden_layers)
        .def_readwrite("time_embed", &DiffusionConfig::time_embed)
        .def_readwrite("lr", &DiffusionConfig::lr)
        .def_readwrite("batch", &DiffusionConfig::batch)
        .def_readwrite("epochs", &DiffusionConfig::epochs)
        .def_readwrite("max_train_seconds", &DiffusionConfig::max_train_seconds)
        .def_readwrite("ddim_steps", &DiffusionConfig::ddim_steps)
        .def_readwrite("ddpm_tail_steps", &DiffusionConfig::ddpm_tail_steps)
        .def_readwrite("sensor_offset_copies", &DiffusionConfig::sensor_offset_copies)
        .def_readwrite("sensor_offset_max", &DiffusionConfig::sensor_offset_max);

    py::class_<DiffusionModel>(m, "DiffusionModel")
        .def_readonly("config", &DiffusionModel::config)
        .def_readonly("loss_trace", &DiffusionModel::loss_trace)
        .def_readonly("initial_loss", &DiffusionModel::initial_loss)
        .def_readonly("iterations", &DiffusionModel::iterations)
        .def("save", [](const DiffusionModel& mdl, const std::filesystem::path& p) { write_model(p, mdl); })
        .def_static("load", [](const std::filesystem::path& p) { return read_model(p); })
        .def(
            "sample_chunk",
            [](const DiffusionModel& mdl, const std::vector<double>& encoding, std::uint64_t seed) {
                Rng rng(seed);
                const auto c = sample_chunk(mdl, encoding, rng);
                py::array_t<double> a({static_cast<py::ssize_t>(mdl.config.horizon), py::ssize_t{kActionDim}});
                std::copy(c.begin(), c.end(), a.mutable_data());
                return a;
            },
            py::arg("encoding"), py::arg("seed") = 0, "(H, 3) chunk of dx, dy, dpsi in the heading frame");

    m.def("encoding_dim", &encoding_dim, py::arg("K"));
    m.def(
        "train_bc",
        [](const Dataset& d, const DiffusionConfig& cfg, std::uint64_t seed) {
            py::gil_scoped_release release;
            Rng rng(seed);
            return ddpm_train(d, cfg, rng);
        },
        py::arg("dataset"), py::arg("config") = DiffusionConfig{}, py::arg("seed") = 0);
    m.def(
        "bc_rollout",
        [](const DiffusionModel& mdl, const Trajectory& source, const SensorParams& sensor, DynamicsMode mode,
           PsiMode psi_mode, int execute_steps, std::uint64_t seed) {
            py::gil_scoped_release release;
            ScenarioConfig sc;
            sc.h = source.scenario.h;
            auto cfg = bc_rollout_config(sc, mode, ExpertGains{}.v_max);
            cfg.psi_mode = psi_mode;
            cfg.execute_steps = execute_steps;
            Rng rng(seed);
            return bc_rollout(mdl, source.scenario, sensor, cfg, rng);
        },
        py::arg("model"), py::arg("source"), py::arg("sensor"), py::arg("mode") = DynamicsMode::pointmass,
        py::arg("psi_mode") = PsiMode::learned, py::arg("execute_steps") = 4, py::arg("seed") = 0,
        "Runs the policy on the scenario of `source`.");
}
