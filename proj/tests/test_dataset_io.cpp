#include <sstream>

#include "doctest.h"
#include "rview/dataset_io.hpp"
#include "rview/errors.hpp"
#include "rview/sim.hpp"

using namespace rview;

namespace {

Dataset roundtrip(const Dataset& d) {
    std::stringstream buf;
    write_dataset(d, buf);
    return read_dataset(buf);
}

Dataset sample(long n, double speed) {
    ScenarioConfig c;
    c.n_obstacles_min = 3;
    c.n_obstacles_max = 5;
    c.obstacle_speed = {speed, speed};
    c.T_max = 150;
    const ExpertGains g;
    return generate_dataset(c, SensorParams(55, 0.392, 0.8), expert_policy_factory(g),
                            rollout_config_for(c, DynamicsMode::unicycle, g.v_max), n, 9, 1);
}

}  // namespace

TEST_CASE("datasets round-trip exactly") {
    const auto d = sample(3, 0.0);
    CHECK(roundtrip(d) == d);
    const auto moving = sample(2, 2.0);
    CHECK(roundtrip(moving) == moving);

    ScenarioConfig empty;
    empty.n_obstacles_min = empty.n_obstacles_max = 0;
    empty.T_max = 50;
    const auto e = generate_dataset(empty, SensorParams(20, 0.5, 0.5), expert_policy_factory({}),
                                    rollout_config_for(empty, DynamicsMode::unicycle, 10), 2, 1, 1);
    CHECK(roundtrip(e) == e);
}

TEST_CASE("unknown schema versions are rejected") {
    std::stringstream bad(R"({"schema": 999, "mode": "unicycle", "angle_convention": "half", "h": 0.1, "sensor": null, "seed": null})"
                          "\n");
    CHECK_THROWS_AS(read_dataset(bad), VersionError);
}

TEST_CASE("malformed lines report their line number") {
    std::stringstream buf;
    write_dataset(sample(2, 0.0), buf);
    std::string text = buf.str() + "{\"scenario\": oops}\n";
    std::stringstream in(text);
    try {
        read_dataset(in);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
    }
    std::stringstream nothing;
    CHECK_THROWS_AS(read_dataset(nothing), ParseError);
}

TEST_CASE("full-angle headers are normalized to half angles") {
    std::stringstream in(R"({"schema": 1, "mode": "unicycle", "angle_convention": "full", "h": 0.1, "sensor": {"r_obs": 55, "theta_obs": 0.784, "p_obs": 0.8}, "seed": 3})"
                         "\n");
    const auto d = read_dataset(in);
    REQUIRE(d.meta.sensor);
    CHECK(d.meta.sensor->theta_obs() == doctest::Approx(0.392));
    CHECK(d.meta.angle_convention == "half");
}

TEST_CASE("the checked-in game export parses as point-mass data") {
    const auto d = read_dataset(std::filesystem::path(RVIEW_FIXTURE_DIR) / "pointmass_game.jsonl");
    CHECK(d.meta.mode == DynamicsMode::pointmass);
    CHECK_FALSE(d.meta.sensor.has_value());
    CHECK_FALSE(d.meta.seed.has_value());
    REQUIRE(d.trajectories.size() == 3);
    Dynamics dyn;
    dyn.mode = DynamicsMode::pointmass;
    dyn.h = d.meta.h;
    dyn.v_max = 10.0;
    for (const auto& t : d.trajectories) {
        CHECK(replay_error(t, dyn) <= 1e-9);
        CHECK(detections_legal(t, SensorParams(55, 0.392, 0.8)));
    }
    CHECK(roundtrip(d) == d);
}
