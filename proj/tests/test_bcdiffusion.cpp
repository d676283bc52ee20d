#include <cmath>
#include <sstream>

#include "doctest.h"
#include "rview/bcdiffusion.hpp"
#include "rview/errors.hpp"
#include "rview/random.hpp"

using namespace rview;
using doctest::Approx;

namespace {

const Bounds kBox{0, 0, 200, 200};

DiffusionConfig tiny_config() {
    DiffusionConfig c;
    c.T_diff = 50;
    c.horizon = 4;
    c.K = 2;
    c.sensor_offset_copies = 0;
    c.hidden = 24;
    c.hidden_layers = 2;
    c.time_embed = 8;
    c.batch = 32;
    c.epochs = 3;
    c.ddim_steps = 5;
    c.ddpm_tail_steps = 5;
    return c;
}

Dataset pointmass_demos(long n) {
    ScenarioConfig sc;
    sc.n_obstacles_min = 2;
    sc.n_obstacles_max = 4;
    sc.T_max = 80;
    const auto rcfg = rollout_config_for(sc, DynamicsMode::pointmass, 10.0);
    // head for the goal with the sensor slowly panning
    PolicyFactory f = [](std::uint64_t) {
        return Policy([](const PolicyInput& in) {
            const Vec2 d = in.scenario.goal - in.state.position();
            Control u;
            u.dx = 0.9 * d.x / d.norm();
            u.dy = 0.9 * d.y / d.norm();
            u.dpsi = 0.02;
            return u;
        });
    };
    auto d = generate_dataset(sc, SensorParams(55, 0.392, 0.8), f, rcfg, n, 3, 1);
    d.meta.mode = DynamicsMode::pointmass;
    return d;
}

AgentState rotate_about_center(AgentState s, double a) {
    const Vec2 c{100, 100};
    const Vec2 p = (s.position() - c).rotated(a) + c;
    s.p = p.x;
    s.q = p.y;
    s.phi = wrap_angle(s.phi + a);
    s.psi = wrap_angle(s.psi + a);
    return s;
}

}  // namespace

TEST_CASE("encode_observation layout") {
    const AgentState s{50, 60, 0.0, 0.3, 0};
    const auto e = encode_observation(s, {150, 60}, {}, kBox, 5);
    REQUIRE(e.size() == encoding_dim(5));
    CHECK(e[0] == Approx(100));
    CHECK(e[1] == Approx(0).epsilon(1e-12));
    CHECK(e[2] == Approx(std::cos(0.3)));
    CHECK(e[3] == Approx(std::sin(0.3)));
    for (int k = 0; k < 5; ++k) CHECK(e[4 + 3 * k + 2] == 0.0);  // empty belief: no valid slots
    CHECK(e[19] == Approx(150));  // ahead
    CHECK(e[20] == Approx(140));  // left
    CHECK(e[21] == Approx(50));   // behind
    CHECK(e[22] == Approx(60));   // right

    const auto at_goal = encode_observation(s, {50, 60}, {}, kBox, 5);
    CHECK(at_goal[0] == 0.0);
    CHECK(at_goal[1] == 0.0);

    Belief b;
    b.known_obstacles = {{7, {80, 60}}, {2, {50, 40}}, {9, {50, 80}}};
    const auto with = encode_observation(s, {150, 60}, b, kBox, 2);
    // nearest first, ties broken by id: (50,40) and (50,80) are both 20 away
    CHECK(with[4] == Approx(0).epsilon(1e-12));
    CHECK(with[5] == Approx(-20));
    CHECK(with[6] == 1.0);
    CHECK(with[8] == Approx(20));
}

TEST_CASE("encode_observation is invariant to quarter turns of the square arena") {
    Rng rng(4);
    for (int i = 0; i < 30; ++i) {
        const AgentState s{uniform(rng, 10, 190), uniform(rng, 10, 190), uniform(rng, -kPi, kPi), uniform(rng, -kPi, kPi), 0};
        const Vec2 goal{uniform(rng, 10, 190), uniform(rng, 10, 190)};
        Belief b;
        for (int k = 0; k < 4; ++k) b.known_obstacles[k] = {uniform(rng, 10, 190), uniform(rng, 10, 190)};
        const auto e = encode_observation(s, goal, b, kBox);
        for (int q = 1; q < 4; ++q) {
            const double a = q * kPi / 2;
            Belief br;
            for (const auto& [id, p] : b.known_obstacles) br.known_obstacles[id] = (p - Vec2{100, 100}).rotated(a) + Vec2{100, 100};
            const auto er = encode_observation(rotate_about_center(s, a), (goal - Vec2{100, 100}).rotated(a) + Vec2{100, 100}, br, kBox);
            for (std::size_t j = 0; j < e.size(); ++j) CHECK(er[j] == Approx(e[j]).epsilon(1e-9).scale(1.0));
        }
    }
}

TEST_CASE("MLP gradients match central differences") {
    Rng rng(8);
    for (const auto& sizes : {std::vector<int>{1, 3, 1}, std::vector<int>{4, 6, 5, 2}}) {
        Mlp net(sizes, rng);
        // push the output layer away from its small init so every term matters
        auto p = net.params();
        for (auto& v : p) v += uniform(rng, -0.5, 0.5);
        net.set_params(p);
        Eigen::MatrixXd x = Eigen::MatrixXd::Random(sizes.front(), 7), y = Eigen::MatrixXd::Random(sizes.back(), 7);
        std::vector<double> g;
        net.loss_and_gradient(x, y, g);
        REQUIRE(g.size() == net.parameter_count());
        double worst = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double h = 1e-5;
            auto plus = p, minus = p;
            plus[k] += h;
            minus[k] -= h;
            std::vector<double> unused;
            net.set_params(plus);
            const double lp = net.loss_and_gradient(x, y, unused);
            net.set_params(minus);
            const double lm = net.loss_and_gradient(x, y, unused);
            const double numeric = (lp - lm) / (2 * h);
            worst = std::max(worst, std::abs(numeric - g[k]) / std::max(1e-8, std::abs(numeric) + std::abs(g[k])));
        }
        net.set_params(p);
        CHECK(worst <= 1e-4);
    }
    CHECK(Mlp({1, 3, 1}, rng).parameter_count() == 10);
}

TEST_CASE("noise schedule reaches unit variance at T") {
    const NoiseSchedule s(100, 1e-4, 0.02);
    CHECK(s.T() == 100);
    CHECK(s.alpha_bar[0] == 1.0);
    for (int t = 1; t <= 100; ++t) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    CHECK(s.alpha_bar[100] < 1e-3);

    Rng rng(6);
    std::normal_distribution<double> normal(0.0, 1.0);
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd x0(1), eps(1);
        x0(0) = uniform(rng, -3, 3);
        eps(0) = normal(rng);
        const double v = forward_noise(s, x0, 100, eps)(0);
        sum += v;
        sq += v * v;
    }
    const double var = sq / n - (sum / n) * (sum / n);
    CHECK(std::abs(var - 1.0) <= 0.05);
    CHECK_THROWS_AS(NoiseSchedule(0, 1e-4, 0.02), PreconditionError);
}

TEST_CASE("DDIM ladder") {
    const auto l = ddim_ladder(100, 10, 10);
    CHECK(l.front() == 100);
    CHECK(l.back() == 10);
    CHECK(l.size() == 11);
    for (std::size_t i = 1; i < l.size(); ++i) CHECK(l[i] < l[i - 1]);
    CHECK(ddim_ladder(20, 0, 20) == std::vector<int>{20});
    CHECK_THROWS_AS(ddim_ladder(10, 8, 8), PreconditionError);
}

TEST_CASE("training, sampling and the model file") {
    const auto d = pointmass_demos(6);
    const auto cfg = tiny_config();
    const auto chunks = extract_chunks(d, cfg.horizon, cfg.K);
    CHECK(chunks.chunks.size() == d.total_transitions());
    Rng rng(1);
    const auto m = ddpm_train(chunks, cfg, rng);
    CHECK(m.iterations > 0);
    CHECK(m.loss_trace.size() == 3);
    CHECK(std::isfinite(m.initial_loss));

    // normalization round-trip
    const auto& c0 = chunks.chunks[0];
    const auto back = m.denormalize_chunk(m.normalize_chunk(c0));
    for (std::size_t i = 0; i < c0.size(); ++i) CHECK(back[i] == Approx(c0[i]).epsilon(1e-12));

    // bit-reproducible sampling
    Rng a(42), b(42);
    const auto s1 = sample_chunk(m, chunks.encodings[0], a);
    const auto s2 = sample_chunk(m, chunks.encodings[0], b);
    CHECK(s1 == s2);
    CHECK(s1.size() == m.chunk_size());
    auto det = m;
    det.config.ddpm_tail_steps = 0;
    det.config.ddim_steps = 10;
    Rng c(1), e(2);
    const Eigen::VectorXd xT = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m.chunk_size()), 0.3);
    CHECK(sample_chunk_from(det, chunks.encodings[0], xT, c) == sample_chunk_from(det, chunks.encodings[0], xT, e));

    std::stringstream buf;
    write_model(buf, m);
    const auto m2 = read_model(buf);
    CHECK(m2.net.params() == m.net.params());
    CHECK(m2.action_mean == m.action_mean);
    CHECK(m2.enc_scale == m.enc_scale);
    CHECK(m2.loss_trace == m.loss_trace);
    CHECK(m2.iterations == m.iterations);
    Rng f(42);
    CHECK(sample_chunk(m2, chunks.encodings[0], f) == s1);

    std::string bytes = buf.str();
    std::stringstream magic("NOPE" + bytes.substr(4));
    CHECK_THROWS_AS(read_model(magic), ParseError);
    std::string bumped = bytes;
    bumped[4] = 9;
    std::stringstream ver(bumped);
    CHECK_THROWS_AS(read_model(ver), VersionError);
    std::stringstream cut(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(read_model(cut), ParseError);

    // receding-horizon rollout stays consistent with the dynamics
    auto rc = bc_rollout_config(ScenarioConfig{}, DynamicsMode::pointmass, 10.0);
    rc.rollout.T_max = 40;
    Rng r(5);
    const auto traj = bc_rollout(m, d.trajectories[0].scenario, SensorParams(55, 0.392, 0.8), rc, r);
    CHECK(traj.transitions() >= 1);
    CHECK(replay_error(traj, rc.rollout.dynamics) <= 1e-9);
    rc.psi_mode = PsiMode::fixed;
    Rng r2(5);
    const auto fixed = bc_rollout(m, d.trajectories[0].scenario, SensorParams(55, 0.392, 0.8), rc, r2);
    for (std::size_t i = 0; i + 1 < fixed.steps.size(); ++i) {
        CHECK(wrap_angle(fixed.steps[i + 1].state.psi - fixed.steps[i].state.psi) == Approx(rc.psi_rate));
    }
}

TEST_CASE("chunks are expressed in the heading frame and padded at the end") {
    Dataset d = pointmass_demos(1);
    auto& t = d.trajectories[0];
    t.steps.resize(4);  // three transitions, shorter than the horizon
    const auto cs = extract_chunks(d, 5, 1);
    CHECK(cs.padded_trajectories == 1);
    REQUIRE(cs.chunks.size() == 3);
    const auto acts = trajectory_actions(t);
    const double phi = t.steps[2].state.phi;
    const auto& last = cs.chunks[2];
    for (int j = 0; j < 5; ++j) {
        const Vec2 world = Vec2{last[3 * j], last[3 * j + 1]}.rotated(phi);
        CHECK(world.x == Approx(acts[2][0]));
        CHECK(world.y == Approx(acts[2][1]));
        CHECK(last[3 * j + 2] == Approx(acts[2][2]));
    }
    const auto aug = extract_chunks(d, 5, 1, 2, 0.5, 7);
    REQUIRE(aug.chunks.size() == 9);
    // copies: the encoded sensor offset is undone by the first dpsi, the rest of the chunk is unchanged
    const std::size_t psi_rel = 2;  // cos(psi - phi), sin(psi - phi)
    for (std::size_t k = 0; k < 9; ++k) {
        const auto& e = aug.encodings[k];
        const auto& e0 = cs.encodings[k / 3];
        const double offset =
            wrap_angle(std::atan2(e[psi_rel + 1], e[psi_rel]) - std::atan2(e0[psi_rel + 1], e0[psi_rel]));
        const auto& base = cs.chunks[k / 3];
        CHECK(std::abs(offset) <= 0.5 + 1e-12);
        CHECK(aug.chunks[k][2] == Approx(base[2] - offset));
        for (std::size_t j = 3; j < base.size(); ++j) CHECK(aug.chunks[k][j] == Approx(base[j]));
        if (k % 3 == 0) CHECK(std::abs(offset) < 1e-12);
    }
}

TEST_CASE("action_to_bicycle_control") {
    const AgentState s{0, 0, 0, 0, 0};
    const auto ahead = action_to_bicycle_control({1, 0}, s, 10, 2);
    CHECK(ahead.v == Approx(10));
    CHECK(ahead.omega == 0.0);
    const auto left = action_to_bicycle_control({0, 1}, s, 10, 2);
    CHECK(left.v == Approx(10));
    CHECK(left.omega == Approx(kPi));
    const AgentState tilted{0, 0, 0.5, 0, 0};
    const auto stay = action_to_bicycle_control({0, 0}, tilted, 10, 2);
    CHECK(stay.v == 0.0);
    CHECK(stay.omega == Approx(-1.0));
    CHECK_THROWS_AS(action_to_bicycle_control({1, 0}, s, 0, 2), PreconditionError);

    const auto slow = action_to_bicycle_control({0, 3}, s, 1, 0.5);
    CHECK(slow.v == Approx(3));
    CHECK(slow.omega == Approx(kPi / 4));
    // heading error is wrapped: from pi - 0.1 to -pi + 0.1 is a +0.2 turn
    const AgentState back{0, 0, kPi - 0.1, 0, 0};
    const auto wrapped = action_to_bicycle_control(Vec2{1, 0}.rotated(-kPi + 0.1), back, 1, 1);
    CHECK(wrapped.omega == Approx(0.2));
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const AgentState r{0, 0, uniform(rng, -kPi, kPi), 0, 0};
        const auto c = action_to_bicycle_control({uniform(rng, -2, 2), uniform(rng, -2, 2)}, r, 1, 1.5);
        CHECK(std::abs(c.omega) <= 1.5 * kPi);
    }
}

TEST_CASE("constant chunks are learned and recovered") {
    ChunkSet cs;
    Rng rng(12);
    const std::vector<double> row{0.8, -0.3, 0.05};
    for (int i = 0; i < 256; ++i) {
        std::vector<double> enc(encoding_dim(2));
        for (auto& v : enc) v = uniform(rng, -1, 1);
        std::vector<double> chunk;
        for (int j = 0; j < 4; ++j) chunk.insert(chunk.end(), row.begin(), row.end());
        cs.encodings.push_back(enc);
        cs.chunks.push_back(chunk);
    }
    auto cfg = tiny_config();
    cfg.epochs = 3000;
    cfg.batch = 64;
    cfg.hidden = 64;
    const auto m = ddpm_train(cs, cfg, rng);
    CHECK(m.initial_loss == Approx(1.0).epsilon(0.3));  // near-zero output against unit noise
    CHECK(m.loss_trace[199] < 0.1 * m.initial_loss);
    // constant dimensions keep unit scale, so normalized and raw errors coincide
    for (int k = 0; k < 10; ++k) {
        const auto s = sample_chunk(m, cs.encodings[static_cast<std::size_t>(k)], rng);
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s[i] - row[i % 3]) <= 0.2);
    }

    Rng a(1), b(1);
    CHECK(ddpm_train(cs, tiny_config(), a).net.params() == ddpm_train(cs, tiny_config(), b).net.params());
}

TEST_CASE("config validation") {
    DiffusionConfig c;
    CHECK_NOTHROW(c.validate());
    c.time_embed = 7;
    CHECK_THROWS_AS(c.validate(), PreconditionError);
    c = DiffusionConfig{};
    c.ddim_steps = 95;
    CHECK_THROWS_AS(c.validate(), PreconditionError);
    BcRolloutConfig r;
    r.mode = DynamicsMode::unicycle;
    CHECK_THROWS_AS(r.validate(), PreconditionError);
}
