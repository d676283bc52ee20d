#include "rview/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rview/errors.hpp"

namespace rview {

double discrete_frechet(std::span<const Vec2> p, std::span<const Vec2> q) {
    if (p.empty() || q.empty()) throw PreconditionError("discrete_frechet: empty polyline");
    const std::size_t m = q.size();
    // rolling rows of the coupling table
    std::vector<double> prev(m), cur(m);
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double d = distance(p[i], q[j]);
            if (i == 0 && j == 0) {
                cur[j] = d;
            } else if (i == 0) {
                cur[j] = std::max(cur[j - 1], d);
            } else if (j == 0) {
                cur[j] = std::max(prev[0], d);
            } else {
                cur[j] = std::max(std::min({prev[j], prev[j - 1], cur[j - 1]}), d);
            }
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

double normalized_frechet(std::span<const Vec2> p, std::span<const Vec2> q, Vec2 start, Vec2 goal) {
    const double norm = distance(start, goal);
    if (!(norm > 0.0)) throw PreconditionError("normalized_frechet: start and goal coincide");
    return 100.0 * discrete_frechet(p, q) / norm;
}

double proximity_rate(const Trajectory& traj, double threshold) {
    if (!(threshold > 0.0)) throw PreconditionError("proximity_rate: threshold must be > 0");
    if (traj.steps.empty() || traj.scenario.obstacles.empty()) return 0.0;
    std::size_t close = 0;
    for (const auto& st : traj.steps) {
        double nearest = std::numeric_limits<double>::infinity();
        for (const auto& ob : traj.scenario.obstacles) {
            nearest = std::min(nearest, distance(st.state.position(), obstacle_position(ob, st.t)));
        }
        if (nearest < threshold) ++close;
    }
    return static_cast<double>(close) / static_cast<double>(traj.steps.size());
}

MetricSummary summarize(std::span<const double> values) {
    if (values.empty()) throw PreconditionError("summarize: no values");
    MetricSummary s;
    s.n = static_cast<long>(values.size());
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n));
    // keep min <= mean <= max under rounding
    s.mean = std::clamp(s.mean, s.min, s.max);
    return s;
}

}  // namespace rview
