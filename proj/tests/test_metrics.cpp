#include <algorithm>
#include <cmath>
#include <functional>

#include "doctest.h"
#include "rview/errors.hpp"
#include "rview/metrics.hpp"
#include "rview/random.hpp"

using namespace rview;
using doctest::Approx;

namespace {

// Recursive definition with memoization, written independently of the DP.
double frechet_oracle(const std::vector<Vec2>& p, const std::vector<Vec2>& q) {
    std::vector<std::vector<double>> memo(p.size(), std::vector<double>(q.size(), -1.0));
    std::function<double(std::size_t, std::size_t)> c = [&](std::size_t i, std::size_t j) -> double {
        double& m = memo[i][j];
        if (m >= 0.0) return m;
        const double d = distance(p[i], q[j]);
        if (i == 0 && j == 0) return m = d;
        if (i == 0) return m = std::max(c(0, j - 1), d);
        if (j == 0) return m = std::max(c(i - 1, 0), d);
        return m = std::max(std::min({c(i - 1, j), c(i - 1, j - 1), c(i, j - 1)}), d);
    };
    return c(p.size() - 1, q.size() - 1);
}

std::vector<Vec2> random_polyline(Rng& rng, int max_len) {
    const int n = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_len));
    std::vector<Vec2> out(n);
    for (auto& v : out) v = {uniform(rng, -10, 10), uniform(rng, -10, 10)};
    return out;
}

}  // namespace

TEST_CASE("discrete_frechet examples") {
    const std::vector<Vec2> p{{0, 0}, {4, 0}}, q{{0, 3}, {4, 3}};
    CHECK(discrete_frechet(p, q) == Approx(3.0));
    CHECK(discrete_frechet(p, p) == 0.0);
    const std::vector<Vec2> empty;
    CHECK_THROWS_AS(discrete_frechet(empty, q), PreconditionError);
}

TEST_CASE("discrete_frechet matches the memoized oracle") {
    Rng rng(1234);
    for (int i = 0; i < 500; ++i) {
        const auto p = random_polyline(rng, 12), q = random_polyline(rng, 12);
        const double d = discrete_frechet(p, q);
        CHECK(d == frechet_oracle(p, q));
        CHECK(d == discrete_frechet(q, p));
        CHECK(d >= std::max(distance(p.front(), q.front()), distance(p.back(), q.back())));
    }
}

TEST_CASE("discrete_frechet is rigid-motion invariant") {
    Rng rng(99);
    for (int i = 0; i < 50; ++i) {
        const auto p = random_polyline(rng, 10), q = random_polyline(rng, 10);
        const double rot = uniform(rng, -kPi, kPi);
        const Vec2 shift{uniform(rng, -5, 5), uniform(rng, -5, 5)};
        auto move = [&](std::vector<Vec2> v) {
            for (auto& x : v) x = x.rotated(rot) + shift;
            return v;
        };
        CHECK(std::abs(discrete_frechet(move(p), move(q)) - discrete_frechet(p, q)) < 1e-9);
    }
}

TEST_CASE("refining a segment never raises the distance by more than its length") {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        auto p = random_polyline(rng, 10);
        const auto q = random_polyline(rng, 10);
        if (p.size() < 2) continue;
        const std::size_t k = rng() % (p.size() - 1);
        const double s = uniform01(rng);
        const Vec2 mid = p[k] + s * (p[k + 1] - p[k]);
        const double len = distance(p[k], p[k + 1]);
        const double before = frechet_oracle(p, q);
        p.insert(p.begin() + static_cast<long>(k) + 1, mid);
        CHECK(frechet_oracle(p, q) <= before + len + 1e-12);
        CHECK(discrete_frechet(p, q) == frechet_oracle(p, q));
    }
}

TEST_CASE("normalized_frechet") {
    const std::vector<Vec2> p{{0, 0}, {100, 0}}, q{{0, 2.8}, {100, 2.8}};
    CHECK(normalized_frechet(p, q, {0, 0}, {100, 0}) == Approx(2.8));
    CHECK(normalized_frechet(p, p, {0, 0}, {3, 0}) == 0.0);
    const std::vector<Vec2> p2{{0, 0}, {200, 0}}, q2{{0, 5.6}, {200, 5.6}};
    CHECK(normalized_frechet(p2, q2, {0, 0}, {200, 0}) == Approx(2.8));
    CHECK_THROWS_AS(normalized_frechet(p, q, {1, 1}, {1, 1}), PreconditionError);
}

TEST_CASE("proximity_rate") {
    Trajectory t;
    t.scenario.obstacles = {{1, 3.0, {{0, 0}}}};
    for (double x : {10.0, 30.0, 40.0, 50.0}) {
        TrajectoryStep s;
        s.state.p = x;
        t.steps.push_back(s);
    }
    CHECK(proximity_rate(t, 20) == Approx(0.25));
    CHECK(proximity_rate(t, 5) == 0.0);
    t.scenario.obstacles.clear();
    CHECK(proximity_rate(t, 20) == 0.0);
}

TEST_CASE("summarize uses the population convention") {
    const std::vector<double> a{3, 3, 3}, b{0, 10}, c{4.5};
    CHECK(summarize(a).mean == 3);
    CHECK(summarize(a).std == 0);
    CHECK(summarize(b).mean == 5);
    CHECK(summarize(b).std == 5);
    const auto s = summarize(c);
    CHECK(s.std == 0);
    CHECK(s.min == 4.5);
    CHECK(s.max == 4.5);
    CHECK(s.n == 1);
}
