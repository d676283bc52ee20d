#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rview/expert.hpp"
#include "rview/sim.hpp"
#include "rview/world.hpp"

namespace rview {

constexpr int kActionDim = 3;  // (dx, dy, dpsi)

/// Length of encode_observation's output for K obstacle slots.
constexpr std::size_t encoding_dim(int K) { return static_cast<std::size_t>(2 + 2 + 3 * K + 4); }

/// Policy conditioning vector, all in the agent's heading frame (rotated by -phi):
///   goal offset (2), cos/sin of the sensor axis relative to the heading (2),
///   K nearest believed obstacles as (offset x, offset y, valid flag), nearest first,
///   distances to the arena boundary looking ahead, left, behind and right (4).
std::vector<double> encode_observation(const AgentState& s, Vec2 goal, const Belief& belief, const Bounds& bounds,
                                       int K = 5);

struct DiffusionConfig {
    int T_diff = 100;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int horizon = 8;  // H, rows of an action chunk
    int K = 5;
    int sensor_offset_copies = 1;     // augmentation, see extract_chunks
    double sensor_offset_max = std::numbers::pi;  // rad
    int hidden = 256;
    int hidden_layers = 3;
    int time_embed = 32;
    double lr = 1e-3;
    int batch = 256;
    int epochs = 100;
    double max_train_seconds = 0.0;  // stop early once exceeded; 0 = no limit
    int ddim_steps = 10;
    int ddpm_tail_steps = 10;
    double clip_x0 = 5.0;  // clamp on the predicted clean chunk while sampling (normalized units); 0 = off

    void validate() const;
};

/// Fully connected network with SiLU hidden activations and a linear output layer.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::vector<int> sizes, Rng& rng);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;  // columns are samples

    /// Mean squared error against `target` over all entries; fills `grads` (same layout as params()).
    double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& target, std::vector<double>& grads) const;

    std::size_t parameter_count() const;
    std::vector<double> params() const;  // per layer: W row-major, then b
    void set_params(std::span<const double> flat);

    const std::vector<int>& sizes() const { return sizes_; }
    std::vector<Eigen::MatrixXd>& weights() { return W_; }
    std::vector<Eigen::VectorXd>& biases() { return b_; }

private:
    std::vector<int> sizes_;
    std::vector<Eigen::MatrixXd> W_;
    std::vector<Eigen::VectorXd> b_;
};

/// Cumulative noise schedule; index 0 is the clean signal (alpha_bar = 1).
struct NoiseSchedule {
    std::vector<double> beta;       // beta[t], t = 1..T (beta[0] unused)
    std::vector<double> alpha_bar;  // alpha_bar[t], t = 0..T

    NoiseSchedule() = default;
    NoiseSchedule(int T, double beta_start, double beta_end);
    int T() const { return static_cast<int>(beta.size()) - 1; }
};

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Eigen::VectorXd forward_noise(const NoiseSchedule& sched, const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& eps);

std::vector<double> timestep_embedding(int t, int dim);

struct DiffusionModel {
    DiffusionConfig config;
    NoiseSchedule schedule;
    Mlp net;
    std::vector<double> action_mean, action_std;  // per action dimension
    std::vector<double> enc_mean, enc_scale;      // per encoding entry; scale 0 mutes a constant input
    std::vector<double> loss_trace;               // mean loss per epoch
    double initial_loss = 0.0;                    // loss of the first batch
    long padded_trajectories = 0;                 // trajectories shorter than one chunk
    long iterations = 0;

    std::size_t encoding_size() const { return encoding_dim(config.K); }
    std::size_t chunk_size() const { return static_cast<std::size_t>(config.horizon * kActionDim); }

    Eigen::VectorXd normalize_chunk(std::span<const double> chunk) const;
    std::vector<double> denormalize_chunk(const Eigen::VectorXd& z) const;
    Eigen::VectorXd normalize_encoding(std::span<const double> enc) const;

    /// Noise prediction for a batch: columns of `xt` are noisy normalized chunks, `enc` normalized encodings.
    Eigen::MatrixXd predict_noise(const Eigen::MatrixXd& xt, const Eigen::MatrixXd& enc, std::span<const int> t) const;
};

/// Training pairs cut from a dataset: chunk i starts at a step and holds the next H actions in the
/// heading frame of that step, padded with the last action near the end of a trajectory.
struct ChunkSet {
    std::vector<std::vector<double>> encodings;
    std::vector<std::vector<double>> chunks;  // H x 3, row-major
    long padded_trajectories = 0;
};

/// Per-step actions (dx, dy, dpsi) of a trajectory, world frame.
std::vector<std::array<double, 3>> trajectory_actions(const Trajectory& traj);

/// `offset_copies` extra pairs per step repeat the step with the sensor turned by a uniform offset in
/// [-offset_max, offset_max] and a first dpsi that turns it back. Demonstrations keep the sensor on the
/// heading, so without these the policy never learns to correct drift in the integrated sensor angle.
ChunkSet extract_chunks(const Dataset& d, int horizon, int K, int offset_copies = 0, double offset_max = 0.0,
                        std::uint64_t seed = 0);

/// Noise-prediction training with Adam. Deterministic for a given rng state.
DiffusionModel ddpm_train(const Dataset& d, const DiffusionConfig& cfg, Rng& rng);
DiffusionModel ddpm_train(const ChunkSet& data, const DiffusionConfig& cfg, Rng& rng);

/// Loss of one batch at given timesteps and noise, for tests and diagnostics.
double noise_prediction_loss(const DiffusionModel& m, const Eigen::MatrixXd& x0, const Eigen::MatrixXd& enc,
                             std::span<const int> t, const Eigen::MatrixXd& eps);

/// DDIM (eta = 0) over a strided ladder from T_diff down to ddpm_tail_steps, then ancestral DDPM
/// steps down to 0. Returns an H x 3 chunk in world units (heading frame), row-major.
std::vector<double> sample_chunk(const DiffusionModel& m, std::span<const double> encoding, Rng& rng);

/// Same, starting from a given normalized noise vector.
std::vector<double> sample_chunk_from(const DiffusionModel& m, std::span<const double> encoding,
                                      const Eigen::VectorXd& x_T, Rng& rng);

/// DDIM ladder (descending, first entry T_diff, last entry ddpm_tail_steps).
std::vector<int> ddim_ladder(int T_diff, int ddim_steps, int ddpm_tail_steps);

struct BicycleCommand {
    double v;
    double omega;
};

/// v = K_v |dx|, omega = K_w wrap(atan2(dx) - phi). A zero displacement has heading 0.
BicycleCommand action_to_bicycle_control(Vec2 dx, const AgentState& s, double K_v, double K_omega);

enum class PsiMode { learned, fixed };

struct BcRolloutConfig {
    DynamicsMode mode = DynamicsMode::pointmass;
    int execute_steps = 4;  // E
    PsiMode psi_mode = PsiMode::learned;
    double psi_rate = 0.05;  // rad per step when psi_mode is fixed
    double K_v = 10.0;       // 1/h turns a per-step displacement into a speed
    double K_omega = 2.0;
    RolloutConfig rollout;

    void validate() const;
};

BcRolloutConfig bc_rollout_config(const ScenarioConfig& sc, DynamicsMode mode, double v_max);

/// Receding-horizon policy: sample a chunk, execute its first E actions, re-encode.
Policy make_bc_policy(const DiffusionModel& m, const BcRolloutConfig& cfg, std::uint64_t seed);
PolicyFactory bc_policy_factory(const DiffusionModel& m, const BcRolloutConfig& cfg);

Trajectory bc_rollout(const DiffusionModel& m, const Scenario& scenario, const SensorParams& sensor,
                      const BcRolloutConfig& cfg, Rng& rng);

// Model artifact: magic "PDIF", version, sizes and schedule, normalization statistics, loss trace,
// then each layer's weights (row-major) and biases as little-endian float64.
void write_model(std::ostream& out, const DiffusionModel& m);
void write_model(const std::filesystem::path& path, const DiffusionModel& m);
DiffusionModel read_model(std::istream& in);
DiffusionModel read_model(const std::filesystem::path& path);

}  // namespace rview
