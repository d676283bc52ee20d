#pragma once

#include <span>
#include <vector>

#include "rview/sim.hpp"
#include "rview/world.hpp"

namespace rview {

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
    double min = 0.0;
    double max = 0.0;
    long n = 0;
};

/// Discrete Frechet distance (Euclidean ground metric). Throws PreconditionError on an empty polyline.
double discrete_frechet(std::span<const Vec2> p, std::span<const Vec2> q);

/// 100 * discrete_frechet / |goal - start|, i.e. percent of the start-goal distance.
double normalized_frechet(std::span<const Vec2> p, std::span<const Vec2> q, Vec2 start, Vec2 goal);

/// Fraction of recorded states whose nearest obstacle center is closer than `threshold`.
double proximity_rate(const Trajectory& traj, double threshold);

MetricSummary summarize(std::span<const double> values);

}  // namespace rview
