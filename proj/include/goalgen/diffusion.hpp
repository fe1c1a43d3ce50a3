#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <vector>

#include "goalgen/dataset.hpp"
#include "goalgen/embedding.hpp"
#include "goalgen/registration.hpp"
#include "goalgen/rng.hpp"
#include "goalgen/tape.hpp"

namespace goalgen {

// --- noise schedule -----------------------------------------------------------
struct NoiseSchedule {
  int T = 0;
  Eigen::VectorXd beta;       // beta[t-1] is the step-t value, t in [1, T]
  Eigen::VectorXd alpha;      // 1 - beta
  Eigen::VectorXd alpha_bar;  // running products, strictly decreasing

  // t in [0, T]; t = 0 is the clean state (product over an empty prefix = 1).
  double alpha_bar_at(int t) const;
};

NoiseSchedule make_schedule(int T = 100, double beta_start = 1e-4, double beta_end = 0.02);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, and its exact inverse given the
// same (or a predicted) noise matrix.
MatX3 forward_noise(const MatX3& x0, int t, const MatX3& eps, const NoiseSchedule& schedule);
MatX3 one_shot_denoise(const MatX3& xt, int t, const MatX3& eps_hat,
                       const NoiseSchedule& schedule);

// Standard-normal draws, rows filled in order (deterministic given the stream).
MatX3 standard_normal_rows(Rng& rng, int n);

// --- conditioning -------------------------------------------------------------
// Everything the noise predictor sees besides the noisy goal cloud itself.
// object/background carry world coordinates plus name-embedding feature rows.
struct ConditionBundle {
  PointCloud object;               // N_o x 3 coords, N_o x d_n features
  PointCloud background;           // N_b x 3 coords, N_b x d_n features
  Eigen::RowVectorXd instruction;  // 1 x d_c
  int timestep = 1;
};

// Sinusoidal position code: [sin(t w_0), cos(t w_0), sin(t w_1), ...],
// w_i = 10000^(-2i/dim). dim must be even.
Eigen::RowVectorXd sinusoidal_encoding(double t, int dim);

// Mean-pools [coords | features] rows into occupied voxel cells of a uniform
// grid sized for roughly rows/reduction cells; output rows are ordered by grid
// index, so the pooled set does not depend on input point order.
Eigen::MatrixXd voxel_pool(const MatX3& coords, const Eigen::MatrixXd& features,
                           double reduction);

// --- noise predictor ------------------------------------------------------------
struct PredictorConfig {
  int width = 64;      // token feature size
  int name_dim = 32;   // d_n, name-embedding width
  int instr_dim = 32;  // d_c, instruction-embedding width
  int time_dim = 32;   // sinusoidal encoding width, even
  int ff_mult = 2;     // feed-forward expansion inside attention blocks
  double voxel_reduction = 4.0;
  std::uint64_t vocab_seed = 0x70c4b5ULL;  // frozen embedding table identity
};

// Conditional noise model. Object branch fuses name embeddings with the cloud,
// runs self-attention, and adds coordinate + noisy-goal lifts; the background
// is voxel-pooled into tokens; fusion is cross-attention with object tokens as
// queries against background (+) timestep (+) instruction tokens; a per-point
// head emits 3 values per object point. Defaults land near 1e5 parameters.
class NoisePredictor {
 public:
  NoisePredictor() = default;
  NoisePredictor(const PredictorConfig& config, std::uint64_t init_seed);

  const PredictorConfig& config() const { return config_; }
  const std::vector<Eigen::MatrixXd>& parameters() const { return params_; }
  std::vector<Eigen::MatrixXd>& parameters() { return params_; }
  int parameter_count() const;  // total scalar count

  MatX3 forward(const MatX3& noisy_goal, const ConditionBundle& cond) const;

  // Builds the forward graph; fills param_nodes (canonical parameter order)
  // when non-null and returns the N_o x 3 output node.
  int forward_on_tape(Tape& tape, const MatX3& noisy_goal, const ConditionBundle& cond,
                      std::vector<int>* param_nodes) const;

  // FFM1 container: magic, JSON descriptor, little-endian f32 parameters.
  void save(const std::filesystem::path& path) const;
  static NoisePredictor load(const std::filesystem::path& path);

 private:
  PredictorConfig config_;
  std::vector<Eigen::MatrixXd> params_;
};

// Matrix shapes in canonical parameter order for a given configuration.
std::vector<std::pair<int, int>> parameter_shapes(const PredictorConfig& config);

MatX3 predictor_forward(const NoisePredictor& model, const MatX3& noisy_goal,
                        const ConditionBundle& cond);

// Builds the conditioning view of a sample: the moving object's world cloud
// (with its category embedding), every other object pooled into the
// background, and the embedded instruction. timestep is left at 1.
ConditionBundle condition_from_sample(const TaskSample& sample, const PredictorConfig& config);

// --- loss -----------------------------------------------------------------------
struct LossValue {
  double total = 0.0;           // noise_term + omega * structure_term
  double noise_term = 0.0;      // mean squared noise error over N_o x 3 entries
  double structure_term = 0.0;  // unweighted structural-consistency residual
  std::vector<Eigen::MatrixXd> gradients;  // d total / d parameter, canonical order
};

// Mean over all ordered index pairs (diagonal included) of the squared
// difference between the self-squared-distance matrices of a and b.
double structure_residual(const MatX3& a, const MatX3& b);

// Loss at an explicit draw: cond.timestep is t, eps the forward-noise draw.
// x0 is the supervision goal cloud; the structural reference is the
// conditioning object cloud's self-distance matrix.
LossValue loss_terms(const NoisePredictor& model, const ConditionBundle& cond, const MatX3& x0,
                     const MatX3& eps, double omega, const NoiseSchedule& schedule);

// Draws t uniformly in [1, T] and eps ~ N(0, I) from rng, then evaluates.
LossValue draw_and_loss(const NoisePredictor& model, const ConditionBundle& cond,
                        const MatX3& x0, double omega, const NoiseSchedule& schedule, Rng& rng);
LossValue total_loss(const NoisePredictor& model, const TaskSample& sample, double omega,
                     const NoiseSchedule& schedule, Rng& rng);

// --- training ---------------------------------------------------------------------
struct TrainConfig {
  int steps = 2000;
  int batch = 16;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;  // decoupled
  double omega = 0.1;
  std::uint64_t seed = 0;
  int log_every = 100;
};

struct LossCurvePoint {
  int step = 0;
  double total = 0.0, noise_term = 0.0, structure_term = 0.0;  // batch means
};

struct TrainResult {
  std::vector<LossCurvePoint> curve;  // step 0, every log_every, final step
};

// Adam moments with decoupled weight decay; per-(step, batch slot) RNG
// substreams, so results never depend on thread count. NonFiniteLoss aborts.
TrainResult train(NoisePredictor& model, const std::vector<TaskSample>& dataset,
                  const NoiseSchedule& schedule, const TrainConfig& config);

void save_loss_curve(const std::filesystem::path& csv_path,
                     const std::vector<LossCurvePoint>& curve);

// --- sampling ----------------------------------------------------------------------
struct DiffusionSample {
  std::vector<MatX3> trajectory;  // intermediates, latest last; empty unless kept
  PointCloud final_cloud;         // N_o x 3
};

using NoiseFn = std::function<MatX3(const MatX3& x_t, int t)>;

// DDIM over a stride-uniform ascending subsequence of [1, T] walked backwards;
// eta = 0 is deterministic, eta = 1 at steps = T is ancestral DDPM sampling.
DiffusionSample ddim_sample(const NoiseFn& predict, int n_points, const NoiseSchedule& schedule,
                            int steps, double eta, std::uint64_t seed,
                            bool keep_trajectory = false);
DiffusionSample ddim_sample(const NoisePredictor& model, const ConditionBundle& cond,
                            const NoiseSchedule& schedule, int steps, double eta,
                            std::uint64_t seed, bool keep_trajectory = false);

// The manipulation command: dominant rigid motion from the initial object
// cloud to the generated goal cloud (Huber-robust, returns the inlier mask).
RobustFitResult extract_goal_transform(const PointCloud& initial_object,
                                       const DiffusionSample& generated,
                                       double huber_delta = 0.01);

}  // namespace goalgen
