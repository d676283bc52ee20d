#include "rview/bcdiffusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <tuple>

#include "rview/errors.hpp"
#include "rview/random.hpp"

namespace rview {

namespace {

double ray_to_box(Vec2 from, Vec2 dir, const Bounds& b) {
    constexpr double eps = 1e-12;
    double t = std::numeric_limits<double>::infinity();
    if (dir.x > eps) t = std::min(t, (b.xmax - from.x) / dir.x);
    if (dir.x < -eps) t = std::min(t, (b.xmin - from.x) / dir.x);
    if (dir.y > eps) t = std::min(t, (b.ymax - from.y) / dir.y);
    if (dir.y < -eps) t = std::min(t, (b.ymin - from.y) / dir.y);
    return std::max(t, 0.0);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::vector<double> encode_observation(const AgentState& s, Vec2 goal, const Belief& belief, const Bounds& bounds,
                                       int K) {
    if (K < 0) throw PreconditionError("K must be >= 0");
    std::vector<double> enc;
    enc.reserve(encoding_dim(K));
    const Vec2 pos = s.position();
    const Vec2 g = (goal - pos).rotated(-s.phi);
    enc.push_back(g.x);
    enc.push_back(g.y);
    enc.push_back(std::cos(s.psi - s.phi));
    enc.push_back(std::sin(s.psi - s.phi));

    std::vector<std::tuple<double, int, Vec2>> near;
    for (const auto& [id, p] : belief.known_obstacles) near.emplace_back(distance(pos, p), id, p);
    std::sort(near.begin(), near.end(), [](const auto& a, const auto& b) {
        return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) < std::get<0>(b) : std::get<1>(a) < std::get<1>(b);
    });
    for (int k = 0; k < K; ++k) {
        if (static_cast<std::size_t>(k) < near.size()) {
            const Vec2 rel = (std::get<2>(near[static_cast<std::size_t>(k)]) - pos).rotated(-s.phi);
            enc.insert(enc.end(), {rel.x, rel.y, 1.0});
        } else {
            enc.insert(enc.end(), {0.0, 0.0, 0.0});
        }
    }

    const Vec2 ahead{std::cos(s.phi), std::sin(s.phi)};
    const Vec2 left{-ahead.y, ahead.x};
    for (Vec2 dir : {ahead, left, -1.0 * ahead, -1.0 * left}) enc.push_back(ray_to_box(pos, dir, bounds));
    return enc;
}

void DiffusionConfig::validate() const {
    if (T_diff < 1) throw PreconditionError("T_diff must be >= 1");
    if (!(beta_start > 0.0) || !(beta_end > beta_start)) throw PreconditionError("need 0 < beta_start < beta_end");
    if (beta_end * 1000.0 / T_diff >= 1.0) throw PreconditionError("beta schedule reaches 1; increase T_diff");
    if (horizon < 1) throw PreconditionError("horizon must be >= 1");
    if (K < 0) throw PreconditionError("K must be >= 0");
    if (sensor_offset_copies < 0) throw PreconditionError("sensor_offset_copies must be >= 0");
    if (!(sensor_offset_max >= 0.0) || sensor_offset_max > kPi) {
        throw PreconditionError("sensor_offset_max must be in [0, pi]");
    }
    if (hidden < 1 || hidden_layers < 1) throw PreconditionError("denoiser needs at least one hidden layer");
    if (time_embed < 2 || time_embed % 2 != 0) throw PreconditionError("time_embed must be even and >= 2");
    if (!(lr > 0.0)) throw PreconditionError("lr must be > 0");
    if (batch < 1 || epochs < 1) throw PreconditionError("batch and epochs must be >= 1");
    if (ddim_steps < 0 || ddpm_tail_steps < 0) throw PreconditionError("step counts must be >= 0");
    if (ddim_steps + ddpm_tail_steps > T_diff) throw PreconditionError("ddim_steps + ddpm_tail_steps exceeds T_diff");
    if (ddim_steps == 0 && ddpm_tail_steps != T_diff) {
        throw PreconditionError("without DDIM steps the DDPM tail must cover all T_diff steps");
    }
    if (clip_x0 < 0.0) throw PreconditionError("clip_x0 must be >= 0");
}

// ---- MLP ----

Mlp::Mlp(std::vector<int> sizes, Rng& rng) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw PreconditionError("an MLP needs input and output sizes");
    for (int s : sizes_) {
        if (s < 1) throw PreconditionError("layer sizes must be >= 1");
    }
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const bool last = l + 2 == sizes_.size();
        const double a = std::sqrt(3.0 / sizes_[l]) * (last ? 0.1 : 1.0);
        Eigen::MatrixXd W(sizes_[l + 1], sizes_[l]);
        for (Eigen::Index i = 0; i < W.rows(); ++i) {
            for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = uniform(rng, -a, a);
        }
        W_.push_back(std::move(W));
        b_.push_back(Eigen::VectorXd::Zero(sizes_[l + 1]));
    }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < W_.size(); ++l) {
        Eigen::MatrixXd z = W_[l] * a;
        z.colwise() += b_[l];
        if (l + 1 < W_.size()) {
            a = z.unaryExpr([](double v) { return v * sigmoid(v); });
        } else {
            a = std::move(z);
        }
    }
    return a;
}

double Mlp::loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& target,
                              std::vector<double>& grads) const {
    const std::size_t L = W_.size();
    std::vector<Eigen::MatrixXd> acts{x}, pre;
    acts.reserve(L + 1);
    pre.reserve(L);
    for (std::size_t l = 0; l < L; ++l) {
        Eigen::MatrixXd z = W_[l] * acts.back();
        z.colwise() += b_[l];
        pre.push_back(z);
        if (l + 1 < L) {
            acts.push_back(z.unaryExpr([](double v) { return v * sigmoid(v); }));
        } else {
            acts.push_back(std::move(z));
        }
    }
    const Eigen::MatrixXd diff = acts.back() - target;
    const double n = static_cast<double>(diff.size());
    const double loss = diff.squaredNorm() / n;

    grads.assign(parameter_count(), 0.0);
    std::vector<std::size_t> offset(L);
    for (std::size_t l = 0, o = 0; l < L; ++l) {
        offset[l] = o;
        o += static_cast<std::size_t>(W_[l].size() + b_[l].size());
    }
    Eigen::MatrixXd delta = (2.0 / n) * diff;
    for (std::size_t l = L; l-- > 0;) {
        // Eigen-owned (aligned) temporaries: vectorized kernels on a Map into the flat vector would
        // pick their summation order from its runtime address and break bit-reproducibility
        using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        const RowMajor gW = delta * acts[l].transpose();
        const Eigen::VectorXd gb = delta.rowwise().sum();
        std::copy(gW.data(), gW.data() + gW.size(), grads.begin() + static_cast<std::ptrdiff_t>(offset[l]));
        std::copy(gb.data(), gb.data() + gb.size(), grads.begin() + static_cast<std::ptrdiff_t>(offset[l] + W_[l].size()));
        if (l > 0) {
            Eigen::MatrixXd back = W_[l].transpose() * delta;
            delta = back.cwiseProduct(pre[l - 1].unaryExpr([](double v) {
                const double s = sigmoid(v);
                return s * (1.0 + v * (1.0 - s));
            }));
        }
    }
    return loss;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) n += static_cast<std::size_t>(W_[l].size() + b_[l].size());
    return n;
}

std::vector<double> Mlp::params() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (std::size_t l = 0; l < W_.size(); ++l) {
        for (Eigen::Index i = 0; i < W_[l].rows(); ++i) {
            for (Eigen::Index j = 0; j < W_[l].cols(); ++j) out.push_back(W_[l](i, j));
        }
        for (Eigen::Index i = 0; i < b_[l].size(); ++i) out.push_back(b_[l](i));
    }
    return out;
}

void Mlp::set_params(std::span<const double> flat) {
    if (flat.size() != parameter_count()) {
        throw PreconditionError("expected " + std::to_string(parameter_count()) + " parameters, got " +
                                std::to_string(flat.size()));
    }
    std::size_t k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
        for (Eigen::Index i = 0; i < W_[l].rows(); ++i) {
            for (Eigen::Index j = 0; j < W_[l].cols(); ++j) W_[l](i, j) = flat[k++];
        }
        for (Eigen::Index i = 0; i < b_[l].size(); ++i) b_[l](i) = flat[k++];
    }
}

// ---- schedule ----

NoiseSchedule::NoiseSchedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw PreconditionError("T must be >= 1");
    // endpoints refer to a 1000-step chain; shorter chains scale them so alpha_bar_T stays near 0
    const double scale = 1000.0 / T;
    beta.assign(static_cast<std::size_t>(T) + 1, 0.0);
    alpha_bar.assign(static_cast<std::size_t>(T) + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        beta[static_cast<std::size_t>(t)] = scale * (beta_start + (beta_end - beta_start) * frac);
        alpha_bar[static_cast<std::size_t>(t)] = alpha_bar[static_cast<std::size_t>(t) - 1] * (1.0 - beta[static_cast<std::size_t>(t)]);
    }
    if (!(beta.back() < 1.0)) throw PreconditionError("beta schedule reaches 1");
}

Eigen::VectorXd forward_noise(const NoiseSchedule& sched, const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& eps) {
    if (t < 0 || t > sched.T()) throw PreconditionError("timestep out of range");
    const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

std::vector<double> timestep_embedding(int t, int dim) {
    const int half = dim / 2;
    std::vector<double> e(static_cast<std::size_t>(dim));
    for (int i = 0; i < half; ++i) {
        const double f = std::exp(-std::log(10000.0) * i / half);
        e[static_cast<std::size_t>(i)] = std::sin(t * f);
        e[static_cast<std::size_t>(i + half)] = std::cos(t * f);
    }
    return e;
}

// ---- model ----

Eigen::VectorXd DiffusionModel::normalize_chunk(std::span<const double> chunk) const {
    if (chunk.size() != chunk_size()) throw PreconditionError("chunk has the wrong size");
    Eigen::VectorXd z(static_cast<Eigen::Index>(chunk.size()));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
        const std::size_t d = i % kActionDim;
        z(static_cast<Eigen::Index>(i)) = (chunk[i] - action_mean[d]) / action_std[d];
    }
    return z;
}

std::vector<double> DiffusionModel::denormalize_chunk(const Eigen::VectorXd& z) const {
    std::vector<double> out(static_cast<std::size_t>(z.size()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t d = i % kActionDim;
        out[i] = z(static_cast<Eigen::Index>(i)) * action_std[d] + action_mean[d];
    }
    return out;
}

Eigen::VectorXd DiffusionModel::normalize_encoding(std::span<const double> enc) const {
    if (enc.size() != encoding_size()) {
        throw PreconditionError("encoding has " + std::to_string(enc.size()) + " entries, model expects " +
                                std::to_string(encoding_size()));
    }
    Eigen::VectorXd z(static_cast<Eigen::Index>(enc.size()));
    for (std::size_t i = 0; i < enc.size(); ++i) z(static_cast<Eigen::Index>(i)) = (enc[i] - enc_mean[i]) * enc_scale[i];
    return z;
}

namespace {

Eigen::MatrixXd net_input(const DiffusionModel& m, const Eigen::MatrixXd& xt, const Eigen::MatrixXd& enc,
                          std::span<const int> t) {
    const auto C = xt.rows(), E = enc.rows(), D = static_cast<Eigen::Index>(m.config.time_embed);
    Eigen::MatrixXd in(C + E + D, xt.cols());
    in.topRows(C) = xt;
    in.middleRows(C, E) = enc;
    for (Eigen::Index j = 0; j < xt.cols(); ++j) {
        const auto emb = timestep_embedding(t[static_cast<std::size_t>(j)], m.config.time_embed);
        for (Eigen::Index i = 0; i < D; ++i) in(C + E + i, j) = emb[static_cast<std::size_t>(i)];
    }
    return in;
}

}  // namespace

Eigen::MatrixXd DiffusionModel::predict_noise(const Eigen::MatrixXd& xt, const Eigen::MatrixXd& enc,
                                              std::span<const int> t) const {
    return net.forward(net_input(*this, xt, enc, t));
}

double noise_prediction_loss(const DiffusionModel& m, const Eigen::MatrixXd& x0, const Eigen::MatrixXd& enc,
                             std::span<const int> t, const Eigen::MatrixXd& eps) {
    Eigen::MatrixXd xt(x0.rows(), x0.cols());
    for (Eigen::Index j = 0; j < x0.cols(); ++j) {
        xt.col(j) = forward_noise(m.schedule, x0.col(j), t[static_cast<std::size_t>(j)], eps.col(j));
    }
    return (m.predict_noise(xt, enc, t) - eps).squaredNorm() / static_cast<double>(eps.size());
}

// ---- data ----

std::vector<std::array<double, 3>> trajectory_actions(const Trajectory& traj) {
    std::vector<std::array<double, 3>> out;
    for (std::size_t i = 0; i + 1 < traj.steps.size(); ++i) {
        const auto& a = traj.steps[i].state;
        const auto& b = traj.steps[i + 1].state;
        out.push_back({b.p - a.p, b.q - a.q, wrap_angle(b.psi - a.psi)});
    }
    return out;
}

ChunkSet extract_chunks(const Dataset& d, int horizon, int K, int offset_copies, double offset_max, std::uint64_t seed) {
    if (horizon < 1) throw PreconditionError("horizon must be >= 1");
    if (offset_copies < 0) throw PreconditionError("offset_copies must be >= 0");
    Rng rng(seed);
    ChunkSet out;
    for (const auto& traj : d.trajectories) {
        const auto actions = trajectory_actions(traj);
        if (actions.empty()) continue;
        if (actions.size() < static_cast<std::size_t>(horizon)) ++out.padded_trajectories;
        Belief belief;
        for (std::size_t i = 0; i < actions.size(); ++i) {
            const auto& step = traj.steps[i];
            // replay what the agent had detected, not what the geometry would allow
            belief = update_belief(std::move(belief), step.detections, traj.scenario, step.t);
            for (int copy = 0; copy <= offset_copies; ++copy) {
                AgentState s = step.state;
                const double offset = copy > 0 ? uniform(rng, -offset_max, offset_max) : 0.0;
                s.psi = wrap_angle(s.psi + offset);
                out.encodings.push_back(encode_observation(s, traj.scenario.goal, belief, traj.scenario.bounds, K));
                std::vector<double> chunk;
                chunk.reserve(static_cast<std::size_t>(horizon * kActionDim));
                for (int j = 0; j < horizon; ++j) {
                    const auto& a = actions[std::min(i + static_cast<std::size_t>(j), actions.size() - 1)];
                    const Vec2 local = Vec2{a[0], a[1]}.rotated(-s.phi);
                    // the first increment undoes the offset
                    chunk.insert(chunk.end(), {local.x, local.y, j == 0 ? a[2] - offset : a[2]});
                }
                out.chunks.push_back(std::move(chunk));
            }
        }
    }
    return out;
}

DiffusionModel ddpm_train(const Dataset& d, const DiffusionConfig& cfg, Rng& rng) {
    cfg.validate();
    return ddpm_train(extract_chunks(d, cfg.horizon, cfg.K, cfg.sensor_offset_copies, cfg.sensor_offset_max, rng()), cfg, rng);
}

DiffusionModel ddpm_train(const ChunkSet& data, const DiffusionConfig& cfg, Rng& rng) {
    cfg.validate();
    if (data.chunks.empty()) throw PreconditionError("no training chunks");
    const std::size_t N = data.chunks.size();
    DiffusionModel m;
    m.config = cfg;
    m.schedule = NoiseSchedule(cfg.T_diff, cfg.beta_start, cfg.beta_end);
    m.padded_trajectories = data.padded_trajectories;
    const std::size_t C = m.chunk_size(), E = m.encoding_size();
    for (std::size_t i = 0; i < N; ++i) {
        if (data.chunks[i].size() != C || data.encodings[i].size() != E) {
            throw PreconditionError("training pair " + std::to_string(i) + " does not match the configured sizes");
        }
    }

    // per-dimension statistics over every chunk row
    m.action_mean.assign(kActionDim, 0.0);
    m.action_std.assign(kActionDim, 0.0);
    const double rows = static_cast<double>(N) * cfg.horizon;
    for (const auto& c : data.chunks) {
        for (std::size_t i = 0; i < C; ++i) m.action_mean[i % kActionDim] += c[i];
    }
    for (auto& v : m.action_mean) v /= rows;
    for (const auto& c : data.chunks) {
        for (std::size_t i = 0; i < C; ++i) {
            const double e = c[i] - m.action_mean[i % kActionDim];
            m.action_std[i % kActionDim] += e * e;
        }
    }
    for (auto& v : m.action_std) {
        v = std::sqrt(v / rows);
        if (!(v > 1e-12)) v = 1.0;
    }
    m.enc_mean.assign(E, 0.0);
    m.enc_scale.assign(E, 0.0);
    for (const auto& e : data.encodings) {
        for (std::size_t i = 0; i < E; ++i) m.enc_mean[i] += e[i];
    }
    for (auto& v : m.enc_mean) v /= static_cast<double>(N);
    std::vector<double> var(E, 0.0);
    for (const auto& e : data.encodings) {
        for (std::size_t i = 0; i < E; ++i) var[i] += (e[i] - m.enc_mean[i]) * (e[i] - m.enc_mean[i]);
    }
    for (std::size_t i = 0; i < E; ++i) {
        const double sd = std::sqrt(var[i] / static_cast<double>(N));
        m.enc_scale[i] = sd > 1e-9 ? 1.0 / sd : 0.0;
    }

    Eigen::MatrixXd X0(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(N));
    Eigen::MatrixXd ENC(static_cast<Eigen::Index>(E), static_cast<Eigen::Index>(N));
    for (std::size_t i = 0; i < N; ++i) {
        X0.col(static_cast<Eigen::Index>(i)) = m.normalize_chunk(data.chunks[i]);
        ENC.col(static_cast<Eigen::Index>(i)) = m.normalize_encoding(data.encodings[i]);
    }

    std::vector<int> sizes{static_cast<int>(C + E) + cfg.time_embed};
    for (int l = 0; l < cfg.hidden_layers; ++l) sizes.push_back(cfg.hidden);
    sizes.push_back(static_cast<int>(C));
    m.net = Mlp(sizes, rng);

    const auto B = static_cast<Eigen::Index>(cfg.batch);
    const long per_epoch = static_cast<long>((N + static_cast<std::size_t>(cfg.batch) - 1) / static_cast<std::size_t>(cfg.batch));
    std::vector<double> theta = m.net.params(), grad, adam_m(theta.size(), 0.0), adam_v(theta.size(), 0.0);
    constexpr double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<int> ts(static_cast<std::size_t>(B));
    Eigen::MatrixXd xt(static_cast<Eigen::Index>(C), B), eps(static_cast<Eigen::Index>(C), B),
        enc(static_cast<Eigen::Index>(E), B);
    const auto started = std::chrono::steady_clock::now();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (long it = 0; it < per_epoch; ++it) {
            for (Eigen::Index j = 0; j < B; ++j) {
                const auto idx = static_cast<Eigen::Index>(rng() % N);
                const int t = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.T_diff));
                ts[static_cast<std::size_t>(j)] = t;
                for (Eigen::Index i = 0; i < eps.rows(); ++i) eps(i, j) = normal(rng);
                const double ab = m.schedule.alpha_bar[static_cast<std::size_t>(t)];
                xt.col(j) = std::sqrt(ab) * X0.col(idx) + std::sqrt(1.0 - ab) * eps.col(j);
                enc.col(j) = ENC.col(idx);
            }
            const double loss = m.net.loss_and_gradient(net_input(m, xt, enc, ts), eps, grad);
            if (!std::isfinite(loss)) throw NumericalError("training loss became non-finite");
            if (m.iterations == 0) m.initial_loss = loss;
            epoch_loss += loss;
            ++m.iterations;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(m.iterations));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(m.iterations));
            for (std::size_t k = 0; k < theta.size(); ++k) {
                adam_m[k] = b1 * adam_m[k] + (1.0 - b1) * grad[k];
                adam_v[k] = b2 * adam_v[k] + (1.0 - b2) * grad[k] * grad[k];
                theta[k] -= cfg.lr * (adam_m[k] / c1) / (std::sqrt(adam_v[k] / c2) + adam_eps);
            }
            m.net.set_params(theta);
        }
        m.loss_trace.push_back(epoch_loss / static_cast<double>(per_epoch));
        if (cfg.max_train_seconds > 0.0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count() > cfg.max_train_seconds) {
            break;
        }
    }
    return m;
}

// ---- sampling ----

std::vector<int> ddim_ladder(int T_diff, int ddim_steps, int ddpm_tail_steps) {
    if (ddim_steps < 0 || ddpm_tail_steps < 0 || ddim_steps + ddpm_tail_steps > T_diff) {
        throw PreconditionError("invalid DDIM/DDPM step split");
    }
    std::vector<int> ladder;
    const int span = T_diff - ddpm_tail_steps;
    for (int i = 0; i <= ddim_steps; ++i) {
        const int t = ddim_steps == 0
                          ? T_diff
                          : ddpm_tail_steps + static_cast<int>(std::lround(static_cast<double>(span) * (ddim_steps - i) / ddim_steps));
        ladder.push_back(t);
    }
    return ladder;
}

std::vector<double> sample_chunk(const DiffusionModel& m, std::span<const double> encoding, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd x(static_cast<Eigen::Index>(m.chunk_size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = normal(rng);
    return sample_chunk_from(m, encoding, x, rng);
}

std::vector<double> sample_chunk_from(const DiffusionModel& m, std::span<const double> encoding,
                                      const Eigen::VectorXd& x_T, Rng& rng) {
    const auto& cfg = m.config;
    if (x_T.size() != static_cast<Eigen::Index>(m.chunk_size())) throw PreconditionError("initial noise has the wrong size");
    const Eigen::MatrixXd enc = m.normalize_encoding(encoding);
    const auto& ab = m.schedule.alpha_bar;
    Eigen::VectorXd x = x_T;
    int t_arr[1];

    // predicted clean chunk and the noise consistent with it after clipping
    auto denoise = [&](int t, Eigen::VectorXd& x0, Eigen::VectorXd& eps) {
        t_arr[0] = t;
        eps = m.predict_noise(x, enc, std::span<const int>(t_arr, 1)).col(0);
        const double a = ab[static_cast<std::size_t>(t)];
        x0 = (x - std::sqrt(1.0 - a) * eps) / std::sqrt(a);
        if (cfg.clip_x0 > 0.0) {
            x0 = x0.cwiseMax(-cfg.clip_x0).cwiseMin(cfg.clip_x0);
            eps = (x - std::sqrt(a) * x0) / std::sqrt(1.0 - a);
        }
    };

    Eigen::VectorXd x0, eps;
    const auto ladder = ddim_ladder(cfg.T_diff, cfg.ddim_steps, cfg.ddpm_tail_steps);
    for (std::size_t i = 0; i + 1 < ladder.size(); ++i) {
        denoise(ladder[i], x0, eps);
        const double a_next = ab[static_cast<std::size_t>(ladder[i + 1])];
        x = std::sqrt(a_next) * x0 + std::sqrt(1.0 - a_next) * eps;
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int t = ladder.back(); t >= 1; --t) {
        denoise(t, x0, eps);
        const double a_t = ab[static_cast<std::size_t>(t)], a_prev = ab[static_cast<std::size_t>(t) - 1];
        const double beta = m.schedule.beta[static_cast<std::size_t>(t)];
        const Eigen::VectorXd mean = (beta * std::sqrt(a_prev) / (1.0 - a_t)) * x0 +
                                     ((1.0 - a_prev) * std::sqrt(1.0 - beta) / (1.0 - a_t)) * x;
        x = mean;
        if (t > 1) {
            const double sd = std::sqrt(beta * (1.0 - a_prev) / (1.0 - a_t));
            for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += sd * normal(rng);
        }
    }
    return m.denormalize_chunk(x);
}

// ---- execution ----

BicycleCommand action_to_bicycle_control(Vec2 dx, const AgentState& s, double K_v, double K_omega) {
    if (!(K_v > 0.0) || !(K_omega > 0.0)) throw PreconditionError("K_v and K_omega must be > 0");
    const double phi_d = std::atan2(dx.y, dx.x);  // atan2(0, 0) = 0
    return {K_v * dx.norm(), K_omega * wrap_angle(phi_d - s.phi)};
}

void BcRolloutConfig::validate() const {
    if (mode != DynamicsMode::pointmass && mode != DynamicsMode::bicycle) {
        throw PreconditionError("BC rollouts run in pointmass or bicycle mode");
    }
    if (execute_steps < 1) throw PreconditionError("execute_steps must be >= 1");
    if (!(K_v > 0.0) || !(K_omega > 0.0)) throw PreconditionError("K_v and K_omega must be > 0");
    if (!std::isfinite(psi_rate)) throw PreconditionError("psi_rate must be finite");
}

BcRolloutConfig bc_rollout_config(const ScenarioConfig& sc, DynamicsMode mode, double v_max) {
    BcRolloutConfig cfg;
    cfg.mode = mode;
    cfg.rollout = rollout_config_for(sc, mode, v_max);
    cfg.K_v = 1.0 / sc.h;
    return cfg;
}

Policy make_bc_policy(const DiffusionModel& m, const BcRolloutConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (cfg.execute_steps > m.config.horizon) {
        throw PreconditionError("execute_steps exceeds the model horizon " + std::to_string(m.config.horizon));
    }
    struct State {
        Rng rng;
        std::vector<double> chunk;
        int next;
        double phi0 = 0.0;
    };
    auto st = std::make_shared<State>(State{Rng(seed), {}, cfg.execute_steps});
    return [&m, cfg, st](const PolicyInput& in) -> Control {
        if (st->next >= cfg.execute_steps) {
            const auto enc = encode_observation(in.state, in.scenario.goal, in.belief, in.scenario.bounds, m.config.K);
            st->chunk = sample_chunk(m, enc, st->rng);
            st->next = 0;
            st->phi0 = in.state.phi;
        }
        const auto row = static_cast<std::size_t>(st->next++) * kActionDim;
        const Vec2 disp = Vec2{st->chunk[row], st->chunk[row + 1]}.rotated(st->phi0);
        const double dpsi = cfg.psi_mode == PsiMode::learned ? st->chunk[row + 2] : cfg.psi_rate;
        Control u;
        u.dpsi = dpsi;
        if (cfg.mode == DynamicsMode::pointmass) {
            u.dx = disp.x;
            u.dy = disp.y;
        } else {
            const auto cmd = action_to_bicycle_control(disp, in.state, cfg.K_v, cfg.K_omega);
            u.v = cmd.v;
            u.omega = cmd.omega;
        }
        return u;
    };
}

PolicyFactory bc_policy_factory(const DiffusionModel& m, const BcRolloutConfig& cfg) {
    return [&m, cfg](std::uint64_t seed) { return make_bc_policy(m, cfg, seed); };
}

Trajectory bc_rollout(const DiffusionModel& m, const Scenario& scenario, const SensorParams& sensor,
                      const BcRolloutConfig& cfg, Rng& rng) {
    const std::uint64_t policy_seed = rng();
    auto policy = make_bc_policy(m, cfg, policy_seed);
    return rollout(scenario, sensor, policy, rng, cfg.rollout);
}

}  // namespace rview
