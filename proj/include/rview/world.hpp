#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rview {

using Rng = std::mt19937_64;

inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2 a, Vec2 b) = default;
    Vec2& operator+=(Vec2 b) {
        x += b.x;
        y += b.y;
        return *this;
    }

    double norm() const { return std::hypot(x, y); }
    double dot(Vec2 b) const { return x * b.x + y * b.y; }
    double cross(Vec2 b) const { return x * b.y - y * b.x; }
    Vec2 rotated(double angle) const {
        const double c = std::cos(angle), s = std::sin(angle);
        return {c * x - s * y, s * x + c * y};
    }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
    double w = std::atan2(std::sin(a), std::cos(a));
    // atan2 returns -pi for sin == -0.0; keep the half-open convention.
    if (w <= -kPi) w = kPi;
    return w;
}

/// Pose of the navigating agent. `delta` is only meaningful for bicycle dynamics.
struct AgentState {
    double p = 0.0;      // x position
    double q = 0.0;      // y position
    double phi = 0.0;    // heading
    double psi = 0.0;    // sensor axis
    double delta = 0.0;  // steering angle

    Vec2 position() const { return {p, q}; }
    bool finite() const {
        return std::isfinite(p) && std::isfinite(q) && std::isfinite(phi) && std::isfinite(psi) &&
               std::isfinite(delta);
    }
    friend bool operator==(const AgentState&, const AgentState&) = default;
};

/// Union of the control inputs of all dynamics modes; each mode reads only its own fields.
struct Control {
    double v = 0.0;
    double omega = 0.0;
    double dpsi = 0.0;
    double dx = 0.0;
    double dy = 0.0;

    bool finite() const {
        return std::isfinite(v) && std::isfinite(omega) && std::isfinite(dpsi) && std::isfinite(dx) &&
               std::isfinite(dy);
    }
    friend bool operator==(const Control&, const Control&) = default;
};

enum class DynamicsMode { unicycle, bicycle, pointmass };

std::string_view to_string(DynamicsMode mode);
DynamicsMode parse_dynamics_mode(std::string_view name);

/// Packs the mode-specific control fields in file/kernel order:
/// unicycle [v, omega], bicycle [v, omega, dpsi], pointmass [dx, dy, dpsi].
std::vector<double> control_vector(const Control& u, DynamicsMode mode);
Control control_from_vector(std::span<const double> values, DynamicsMode mode);
std::size_t control_dims(DynamicsMode mode);

/// Conical sensor: range, half-angle (axis to edge) and per-step detection probability.
class SensorParams {
public:
    SensorParams(double r_obs, double theta_obs, double p_obs);

    double r_obs() const noexcept { return r_obs_; }
    double theta_obs() const noexcept { return theta_obs_; }
    double p_obs() const noexcept { return p_obs_; }

    SensorParams with_p_obs(double p) const { return {r_obs_, theta_obs_, p}; }
    friend bool operator==(const SensorParams&, const SensorParams&) = default;

private:
    double r_obs_;
    double theta_obs_;
    double p_obs_;
};

struct ObstacleTrack {
    int id = 0;
    double radius = 0.0;
    std::vector<Vec2> positions;  // one entry per timestep, held at the last entry afterwards

    friend bool operator==(const ObstacleTrack&, const ObstacleTrack&) = default;
};

struct Bounds {
    double xmin = 0.0;
    double ymin = 0.0;
    double xmax = 0.0;
    double ymax = 0.0;

    bool contains(Vec2 pt) const { return pt.x >= xmin && pt.x <= xmax && pt.y >= ymin && pt.y <= ymax; }
    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
    friend bool operator==(const Bounds&, const Bounds&) = default;
};

struct Scenario {
    Vec2 goal;
    AgentState start;
    Bounds bounds;
    std::vector<ObstacleTrack> obstacles;
    double h = 0.1;
    double wheelbase = 1.0;

    /// Throws PreconditionError when start/goal fall outside the bounds or h <= 0.
    void validate() const;
    friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Sorted, duplicate-free obstacle ids.
struct DetectionSet {
    std::vector<int> ids;

    bool contains(int id) const;
    bool empty() const { return ids.empty(); }
    std::size_t size() const { return ids.size(); }
    friend bool operator==(const DetectionSet&, const DetectionSet&) = default;
};

AgentState step_unicycle(const AgentState& s, const Control& u, double h);
AgentState step_bicycle(const AgentState& s, const Control& u, double h, double wheelbase);
AgentState step_pointmass(const AgentState& s, const Control& u, double v_max, double h);

/// Dynamics model bound to its constants.
struct Dynamics {
    DynamicsMode mode = DynamicsMode::unicycle;
    double h = 0.1;
    double wheelbase = 1.0;
    double v_max = 10.0;

    AgentState step(const AgentState& s, const Control& u) const;
};

bool in_cone(Vec2 sensor_pos, double sensor_psi, Vec2 target, double r_obs, double theta_obs);

Vec2 obstacle_position(const ObstacleTrack& track, long t);

/// Ids (ascending) of the obstacles whose centers lie inside the cone at step t.
std::vector<int> visible_ids(const AgentState& s, const Scenario& scenario, long t, const SensorParams& sensor);

/// Independent Bernoulli(p_obs) draw per visible id, consumed in the order given.
DetectionSet sample_detections(std::span<const int> visible, double p_obs, Rng& rng);

}  // namespace rview
