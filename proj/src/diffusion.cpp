#include "goalgen/diffusion.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "goalgen/io.hpp"
#include "goalgen/kernels.hpp"

namespace goalgen {

// ---------------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------------

double NoiseSchedule::alpha_bar_at(int t) const {
  if (t < 0 || t > T) throw RangeError("schedule: timestep outside [0, T]");
  return t == 0 ? 1.0 : alpha_bar[t - 1];
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw RangeError("make_schedule: T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw RangeError("make_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    s.beta[i] = T == 1 ? beta_start
                       : beta_start + (beta_end - beta_start) * i / static_cast<double>(T - 1);
    s.alpha[i] = 1.0 - s.beta[i];
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  if (!(s.alpha_bar[T - 1] > 0.0))
    throw RangeError("make_schedule: alpha_bar underflowed to zero");
  return s;
}

static void check_step(int t, const NoiseSchedule& s) {
  if (t < 1 || t > s.T) throw RangeError("diffusion: timestep outside [1, T]");
}

static void check_eps_shape(const MatX3& x, const MatX3& eps, const char* what) {
  if (eps.rows() != x.rows())
    throw ShapeMismatch(std::string(what) + ": noise shape does not match the cloud");
}

MatX3 forward_noise(const MatX3& x0, int t, const MatX3& eps, const NoiseSchedule& schedule) {
  check_step(t, schedule);
  check_eps_shape(x0, eps, "forward_noise");
  const double ab = schedule.alpha_bar_at(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

MatX3 one_shot_denoise(const MatX3& xt, int t, const MatX3& eps_hat,
                       const NoiseSchedule& schedule) {
  check_step(t, schedule);
  check_eps_shape(xt, eps_hat, "one_shot_denoise");
  const double ab = schedule.alpha_bar_at(t);
  return (xt - std::sqrt(1.0 - ab) * eps_hat) * (1.0 / std::sqrt(ab));
}

MatX3 standard_normal_rows(Rng& rng, int n) {
  MatX3 out(n, 3);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) out(i, d) = rng.normal();
  return out;
}

// ---------------------------------------------------------------------------
// conditioning pieces
// ---------------------------------------------------------------------------

Eigen::RowVectorXd sinusoidal_encoding(double t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw RangeError("sinusoidal_encoding: dim must be even, >= 2");
  const int m = dim / 2;
  Eigen::RowVectorXd enc(dim);
  for (int i = 0; i < m; ++i) {
    const double w = std::pow(10000.0, -static_cast<double>(i) / m);
    enc[2 * i] = std::sin(t * w);
    enc[2 * i + 1] = std::cos(t * w);
  }
  return enc;
}

Eigen::MatrixXd voxel_pool(const MatX3& coords, const Eigen::MatrixXd& features,
                           double reduction) {
  const int n = static_cast<int>(coords.rows());
  const int f = features.size() == 0 ? 0 : static_cast<int>(features.cols());
  if (f > 0 && features.rows() != n)
    throw ShapeMismatch("voxel_pool: feature rows do not match coordinates");
  if (n == 0) return Eigen::MatrixXd(0, 3 + f);
  if (reduction < 1.0) reduction = 1.0;

  const long target = std::max(1L, std::lround(n / reduction));
  const Aabb box = aabb_of(coords);
  const Eigen::Vector3d ext = box.extents();
  double vol = 1.0;
  int active = 0;
  for (int d = 0; d < 3; ++d)
    if (ext[d] > 1e-12) {
      vol *= ext[d];
      ++active;
    }
  // Cubic cells sized so the occupied count lands near the target; degenerate
  // (flat or linear) extents simply drop out of the volume estimate.
  const double edge =
      active == 0 ? 1.0 : std::max(std::pow(vol / target, 1.0 / active), 1e-12);

  std::map<std::array<long, 3>, std::pair<Eigen::RowVectorXd, int>> cells;
  for (int i = 0; i < n; ++i) {
    std::array<long, 3> key{0, 0, 0};
    for (int d = 0; d < 3; ++d)
      if (ext[d] > 1e-12)
        key[d] = static_cast<long>(std::floor((coords(i, d) - box.min[d]) / edge));
    Eigen::RowVectorXd row(3 + f);
    row.head(3) = coords.row(i);
    if (f > 0) row.tail(f) = features.row(i);
    auto [it, fresh] = cells.try_emplace(key, row, 1);
    if (!fresh) {
      it->second.first += row;
      it->second.second += 1;
    }
  }
  Eigen::MatrixXd pooled(static_cast<int>(cells.size()), 3 + f);
  int r = 0;
  for (const auto& [key, acc] : cells)
    pooled.row(r++) = acc.first / static_cast<double>(acc.second);
  return pooled;
}

// ---------------------------------------------------------------------------
// noise predictor
// ---------------------------------------------------------------------------

namespace {

enum class PKind { Weight, Bias, Gain };
struct PDef {
  int rows = 0, cols = 0;
  PKind kind = PKind::Weight;
};

// Single source of truth for the parameter walk: the constructor, the shape
// report, and forward_on_tape all traverse this list in order.
std::vector<PDef> param_defs(const PredictorConfig& c) {
  std::vector<PDef> defs;
  auto linear = [&defs](int in, int out) {
    defs.push_back({in, out, PKind::Weight});
    defs.push_back({1, out, PKind::Bias});
  };
  auto block = [&](int h, int f) {
    linear(h, h);  // queries
    linear(h, h);  // keys
    linear(h, h);  // values
    linear(h, h);  // attention output
    defs.push_back({1, h, PKind::Gain});
    defs.push_back({1, h, PKind::Bias});
    linear(h, f);
    linear(f, h);
    defs.push_back({1, h, PKind::Gain});
    defs.push_back({1, h, PKind::Bias});
  };
  const int h = c.width, f = c.width * c.ff_mult, din = 3 + c.name_dim;
  linear(din, h);          // object tokens (coords + name embedding)
  block(h, f);             // object self-attention
  linear(3, h);            // object coordinate lift
  linear(3, h);            // noisy-goal lift
  linear(din, h);          // background tokens (pooled)
  linear(3, h);            // background centroid lift
  linear(c.time_dim, h);   // timestep MLP, first layer
  linear(h, h);            // timestep MLP, second layer
  linear(c.instr_dim, h);  // instruction lift
  block(h, f);             // cross-attention fusion
  linear(h, h);            // head hidden
  linear(h, 3);            // head output
  return defs;
}

void check_config(const PredictorConfig& c) {
  if (c.width < 1 || c.name_dim < 1 || c.instr_dim < 1 || c.ff_mult < 1)
    throw RangeError("predictor config: widths must be positive");
  if (c.time_dim < 2 || c.time_dim % 2 != 0)
    throw RangeError("predictor config: time_dim must be even, >= 2");
  if (c.voxel_reduction < 1.0)
    throw RangeError("predictor config: voxel_reduction must be >= 1");
}

}  // namespace

std::vector<std::pair<int, int>> parameter_shapes(const PredictorConfig& config) {
  std::vector<std::pair<int, int>> shapes;
  for (const PDef& d : param_defs(config)) shapes.emplace_back(d.rows, d.cols);
  return shapes;
}

NoisePredictor::NoisePredictor(const PredictorConfig& config, std::uint64_t init_seed)
    : config_(config) {
  check_config(config);
  Rng rng(substream(init_seed, "predictor_init"));
  for (const PDef& d : param_defs(config)) {
    Eigen::MatrixXd m(d.rows, d.cols);
    switch (d.kind) {
      case PKind::Weight: {
        const double scale = 1.0 / std::sqrt(static_cast<double>(d.rows));
        for (int i = 0; i < d.rows; ++i)
          for (int j = 0; j < d.cols; ++j) m(i, j) = rng.normal() * scale;
        break;
      }
      case PKind::Bias:
        m.setZero();
        break;
      case PKind::Gain:
        m.setOnes();
        break;
    }
    params_.push_back(std::move(m));
  }
}

int NoisePredictor::parameter_count() const {
  long n = 0;
  for (const auto& p : params_) n += p.size();
  return static_cast<int>(n);
}

int NoisePredictor::forward_on_tape(Tape& tape, const MatX3& noisy_goal,
                                    const ConditionBundle& cond,
                                    std::vector<int>* param_nodes) const {
  const PredictorConfig& c = config_;
  const int n_o = cond.object.size();
  if (params_.empty()) throw UsageError("predictor: uninitialized model");
  if (n_o < 1) throw SizeError("predictor: object cloud is empty");
  if (cond.object.feature_dim() != c.name_dim)
    throw WidthMismatch("predictor: object name-embedding width does not match the model");
  if (cond.background.size() > 0 && cond.background.feature_dim() != c.name_dim)
    throw WidthMismatch("predictor: background name-embedding width does not match the model");
  if (static_cast<int>(cond.instruction.size()) != c.instr_dim)
    throw WidthMismatch("predictor: instruction embedding width does not match the model");
  if (noisy_goal.rows() != n_o)
    throw ShapeMismatch("predictor: noisy goal rows do not match the object cloud");
  if (cond.timestep < 1) throw RangeError("predictor: timestep must be >= 1");

  // One leaf per parameter, in canonical order. Inference passes skip the
  // gradient bookkeeping entirely.
  std::vector<int> pn;
  pn.reserve(params_.size());
  for (const auto& p : params_)
    pn.push_back(param_nodes ? tape.param(p) : tape.constant(p));
  if (param_nodes) *param_nodes = pn;
  std::size_t k = 0;
  auto next = [&]() { return pn[k++]; };
  auto linear = [&](int x) {
    const int w = next();
    const int b = next();
    return tape.add_rowvec(tape.matmul(x, w), b);
  };
  auto attention = [&](int q_src, int kv_src) {
    const int q = linear(q_src);
    const int key = linear(kv_src);
    const int v = linear(kv_src);
    const int scores = tape.scale(tape.matmul_bt(q, key), 1.0 / std::sqrt(double(c.width)));
    const int mixed = tape.matmul(tape.softmax_rows(scores), v);
    const int att = linear(mixed);
    const int g1 = next(), b1 = next();
    const int x1 = tape.layer_norm(tape.add(q_src, att), g1, b1);
    const int ff = linear(tape.gelu(linear(x1)));
    const int g2 = next(), b2 = next();
    return tape.layer_norm(tape.add(x1, ff), g2, b2);
  };

  // object branch: name-fused tokens through self-attention, plus coordinate
  // and noisy-goal lifts
  Eigen::MatrixXd obj_in(n_o, 3 + c.name_dim);
  obj_in << cond.object.coords, cond.object.features;
  const int obj_tok = linear(tape.constant(std::move(obj_in)));
  const int obj_sa = attention(obj_tok, obj_tok);
  const int obj_lift = linear(tape.constant(cond.object.coords));
  const int noise_lift = linear(tape.constant(noisy_goal));
  const int queries = tape.add(tape.add(obj_sa, obj_lift), noise_lift);

  // background branch: voxel-pooled cells as tokens
  Eigen::MatrixXd pooled;
  if (cond.background.size() > 0)
    pooled = voxel_pool(cond.background.coords, cond.background.features, c.voxel_reduction);
  else
    pooled = Eigen::MatrixXd(0, 3 + c.name_dim);
  const Eigen::MatrixXd pooled_coords = pooled.leftCols(3);
  int bg_tok = linear(tape.constant(std::move(pooled)));
  bg_tok = tape.add(bg_tok, linear(tape.constant(pooled_coords)));

  // timestep and instruction tokens
  const Eigen::MatrixXd t_code =
      sinusoidal_encoding(static_cast<double>(cond.timestep), c.time_dim);
  const int t_tok = linear(tape.gelu(linear(tape.constant(t_code))));
  const int i_tok = linear(tape.constant(Eigen::MatrixXd(cond.instruction)));

  // fusion: object queries against background + timestep + instruction
  const int kv = tape.concat_rows(bg_tok, tape.concat_rows(t_tok, i_tok));
  const int fused = attention(queries, kv);

  const int out = linear(tape.gelu(linear(fused)));
  if (k != pn.size()) throw Error("predictor: internal parameter walk mismatch");
  return out;
}

MatX3 NoisePredictor::forward(const MatX3& noisy_goal, const ConditionBundle& cond) const {
  Tape tape;
  const int out = forward_on_tape(tape, noisy_goal, cond, nullptr);
  return tape.value(out);
}

MatX3 predictor_forward(const NoisePredictor& model, const MatX3& noisy_goal,
                        const ConditionBundle& cond) {
  return model.forward(noisy_goal, cond);
}

ConditionBundle condition_from_sample(const TaskSample& sample, const PredictorConfig& config) {
  const SceneObject& mover = sample.initial.by_id(sample.moving_id);
  const Vocabulary names{config.name_dim, config.vocab_seed};
  const Vocabulary instr{config.instr_dim, config.vocab_seed};

  ConditionBundle cond;
  cond.object.coords = mover.world_points();
  cond.object.features = names.embed(mover.category).replicate(cond.object.size(), 1);

  int bg_rows = 0;
  for (const SceneObject& obj : sample.initial.objects)
    if (obj.id != sample.moving_id) bg_rows += static_cast<int>(obj.geometry.surface.size());
  cond.background.coords.resize(bg_rows, 3);
  cond.background.features.resize(bg_rows, config.name_dim);
  int at = 0;
  for (const SceneObject& obj : sample.initial.objects) {
    if (obj.id == sample.moving_id) continue;
    const MatX3 pts = obj.world_points();
    const int n = static_cast<int>(pts.rows());
    cond.background.coords.middleRows(at, n) = pts;
    cond.background.features.middleRows(at, n) = names.embed(obj.category).replicate(n, 1);
    at += n;
  }
  cond.instruction = instr.embed(sample.instruction);
  cond.timestep = 1;
  return cond;
}

// ---------------------------------------------------------------------------
// loss
// ---------------------------------------------------------------------------

double structure_residual(const MatX3& a, const MatX3& b) {
  if (a.rows() != b.rows()) throw SizeMismatch("structure_residual: clouds differ in size");
  const Eigen::MatrixXd da = kernels::self_sqdist(a);
  const Eigen::MatrixXd db = kernels::self_sqdist(b);
  return (da - db).squaredNorm() / static_cast<double>(da.size());
}

LossValue loss_terms(const NoisePredictor& model, const ConditionBundle& cond, const MatX3& x0,
                     const MatX3& eps, double omega, const NoiseSchedule& schedule) {
  if (omega < 0.0) throw RangeError("loss: omega must be >= 0");
  const int t = cond.timestep;
  const MatX3 xt = forward_noise(x0, t, eps, schedule);

  Tape tape;
  std::vector<int> pn;
  const int eps_hat = model.forward_on_tape(tape, xt, cond, &pn);
  const int noise_node = tape.mean_sq_error(eps_hat, eps);

  // x0_hat via the one-shot inversion, then its self-distance matrix against
  // the conditioning object cloud's (coordinates only).
  const double ab = schedule.alpha_bar_at(t);
  const int x0_hat = tape.scale(
      tape.sub(tape.constant(xt), tape.scale(eps_hat, std::sqrt(1.0 - ab))),
      1.0 / std::sqrt(ab));
  const int struct_node =
      tape.mean_sq_error(tape.sqdist_matrix(x0_hat), kernels::self_sqdist(cond.object.coords));

  const int total = tape.add(noise_node, tape.scale(struct_node, omega));
  tape.backward(total);

  LossValue lv;
  lv.total = tape.value(total)(0, 0);
  lv.noise_term = tape.value(noise_node)(0, 0);
  lv.structure_term = tape.value(struct_node)(0, 0);
  lv.gradients.reserve(pn.size());
  for (int id : pn) lv.gradients.push_back(tape.grad(id));
  return lv;
}

LossValue draw_and_loss(const NoisePredictor& model, const ConditionBundle& cond,
                        const MatX3& x0, double omega, const NoiseSchedule& schedule, Rng& rng) {
  ConditionBundle drawn = cond;
  drawn.timestep = rng.uniform_int(1, schedule.T);
  const MatX3 eps = standard_normal_rows(rng, static_cast<int>(x0.rows()));
  return loss_terms(model, drawn, x0, eps, omega, schedule);
}

LossValue total_loss(const NoisePredictor& model, const TaskSample& sample, double omega,
                     const NoiseSchedule& schedule, Rng& rng) {
  const ConditionBundle cond = condition_from_sample(sample, model.config());
  return draw_and_loss(model, cond, sample.goal_cloud.coords, omega, schedule, rng);
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

TrainResult train(NoisePredictor& model, const std::vector<TaskSample>& dataset,
                  const NoiseSchedule& schedule, const TrainConfig& config) {
  if (dataset.empty()) throw SizeError("train: dataset is empty");
  if (config.steps < 1 || config.batch < 1 || config.log_every < 1)
    throw RangeError("train: steps, batch and log_every must be positive");

  // Conditions are a pure function of the sample; build them once.
  struct Prepared {
    ConditionBundle cond;
    MatX3 x0;
  };
  std::vector<Prepared> prep;
  prep.reserve(dataset.size());
  for (const TaskSample& s : dataset)
    prep.push_back({condition_from_sample(s, model.config()), s.goal_cloud.coords});

  std::vector<Eigen::MatrixXd>& params = model.parameters();
  const std::size_t np = params.size();
  std::vector<Eigen::MatrixXd> m(np), v(np), gsum(np);
  for (std::size_t k = 0; k < np; ++k) {
    m[k] = Eigen::MatrixXd::Zero(params[k].rows(), params[k].cols());
    v[k] = m[k];
    gsum[k] = m[k];
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  TrainResult result;
  std::vector<LossValue> batch(config.batch);
  for (int step = 0; step < config.steps; ++step) {
    // Each batch slot owns an RNG substream keyed by (step, slot): parallel
    // and serial assembly draw identical samples and noise.
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < config.batch; ++b) {
      Rng rng(substream(config.seed, "train", static_cast<std::uint64_t>(step),
                        static_cast<std::uint64_t>(b)));
      const auto idx = rng.uniform_index(prep.size());
      batch[b] =
          draw_and_loss(model, prep[idx].cond, prep[idx].x0, config.omega, schedule, rng);
    }

    LossCurvePoint pt;
    pt.step = step;
    for (std::size_t k = 0; k < np; ++k) gsum[k].setZero();
    const double inv_b = 1.0 / config.batch;
    for (int b = 0; b < config.batch; ++b) {  // fixed-order reduction
      pt.total += batch[b].total * inv_b;
      pt.noise_term += batch[b].noise_term * inv_b;
      pt.structure_term += batch[b].structure_term * inv_b;
      for (std::size_t k = 0; k < np; ++k) gsum[k] += batch[b].gradients[k];
    }
    if (!std::isfinite(pt.total)) {
      std::ostringstream msg;
      msg << "train: non-finite loss at step " << step << " (noise " << pt.noise_term
          << ", structure " << pt.structure_term << ")";
      throw NonFiniteLoss(msg.str());
    }
    if (step % config.log_every == 0 || step == config.steps - 1)
      if (result.curve.empty() || result.curve.back().step != step)
        result.curve.push_back(pt);

    // Adam moments with decoupled weight decay.
    const double bc1 = 1.0 - std::pow(kBeta1, step + 1);
    const double bc2 = 1.0 - std::pow(kBeta2, step + 1);
    for (std::size_t k = 0; k < np; ++k) {
      const Eigen::ArrayXXd g = gsum[k].array() * inv_b;
      m[k].array() = kBeta1 * m[k].array() + (1.0 - kBeta1) * g;
      v[k].array() = kBeta2 * v[k].array() + (1.0 - kBeta2) * g.square();
      params[k].array() -=
          config.learning_rate * ((m[k].array() / bc1) / ((v[k].array() / bc2).sqrt() + kEps) +
                                  config.weight_decay * params[k].array());
    }
  }
  return result;
}

void save_loss_curve(const std::filesystem::path& csv_path,
                     const std::vector<LossCurvePoint>& curve) {
  std::ostringstream out;
  out << "step,total,noise_term,structure_term\n";
  out.precision(17);
  for (const LossCurvePoint& p : curve)
    out << p.step << ',' << p.total << ',' << p.noise_term << ',' << p.structure_term << '\n';
  write_text_file(csv_path, out.str());
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

DiffusionSample ddim_sample(const NoiseFn& predict, int n_points, const NoiseSchedule& schedule,
                            int steps, double eta, std::uint64_t seed, bool keep_trajectory) {
  if (schedule.T < 1) throw RangeError("ddim_sample: empty schedule");
  if (steps < 1) throw StepError("ddim_sample: steps must be >= 1");
  if (steps > schedule.T) throw StepError("ddim_sample: steps exceed the schedule length");
  if (eta < 0.0 || eta > 1.0) throw RangeError("ddim_sample: eta outside [0, 1]");
  if (n_points < 1) throw SizeError("ddim_sample: need at least one point");

  // Stride-uniform ascending subsequence ending at T; walked backwards below.
  std::vector<int> tau(steps);
  for (int i = 0; i < steps; ++i)
    tau[i] = static_cast<int>(
        std::lround(static_cast<double>(i + 1) * schedule.T / steps));

  Rng rng(substream(seed, "ddim"));
  MatX3 x = standard_normal_rows(rng, n_points);
  DiffusionSample out;
  if (keep_trajectory) out.trajectory.push_back(x);
  for (int i = steps - 1; i >= 0; --i) {
    const int t = tau[i];
    const int prev = i > 0 ? tau[i - 1] : 0;
    const MatX3 eps_hat = predict(x, t);
    if (eps_hat.rows() != n_points)
      throw ShapeMismatch("ddim_sample: predictor returned a wrong row count");
    const MatX3 x0_hat = one_shot_denoise(x, t, eps_hat, schedule);
    const double ab_t = schedule.alpha_bar_at(t);
    const double ab_p = schedule.alpha_bar_at(prev);
    const double sigma =
        eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_p);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_p - sigma * sigma));
    x = std::sqrt(ab_p) * x0_hat + dir * eps_hat;
    if (sigma > 0.0) x += sigma * standard_normal_rows(rng, n_points);
    if (keep_trajectory) out.trajectory.push_back(x);
  }
  out.final_cloud.coords = x;
  return out;
}

DiffusionSample ddim_sample(const NoisePredictor& model, const ConditionBundle& cond,
                            const NoiseSchedule& schedule, int steps, double eta,
                            std::uint64_t seed, bool keep_trajectory) {
  ConditionBundle c = cond;
  const NoiseFn fn = [&model, &c](const MatX3& xt, int t) {
    c.timestep = t;
    return model.forward(xt, c);
  };
  return ddim_sample(fn, cond.object.size(), schedule, steps, eta, seed, keep_trajectory);
}

RobustFitResult extract_goal_transform(const PointCloud& initial_object,
                                       const DiffusionSample& generated, double huber_delta) {
  RobustParams params;
  params.huber_delta = huber_delta;
  return robust_rigid_register(initial_object, generated.final_cloud, params);
}

// ---------------------------------------------------------------------------
// checkpoint (FFM1)
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t& off) {
  if (off + 4 > b.size()) throw DataError("checkpoint: truncated header");
  std::uint32_t v = 0;
  for (int s = 0; s < 32; s += 8) v |= static_cast<std::uint32_t>(b[off++]) << s;
  return v;
}

}  // namespace

void NoisePredictor::save(const std::filesystem::path& path) const {
  Json desc;
  desc["width"] = config_.width;
  desc["name_dim"] = config_.name_dim;
  desc["instr_dim"] = config_.instr_dim;
  desc["time_dim"] = config_.time_dim;
  desc["ff_mult"] = config_.ff_mult;
  desc["voxel_reduction"] = config_.voxel_reduction;
  desc["vocab_seed"] = config_.vocab_seed;
  desc["parameters"] = parameter_count();
  const std::string dj = desc.dump();

  std::vector<std::uint8_t> bytes = {'F', 'F', 'M', '1'};
  put_u32(bytes, static_cast<std::uint32_t>(dj.size()));
  bytes.insert(bytes.end(), dj.begin(), dj.end());
  for (const Eigen::MatrixXd& p : params_)
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        const float f = static_cast<float>(p(i, j));
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        put_u32(bytes, u);
      }
  write_binary_file(path, bytes);
}

NoisePredictor NoisePredictor::load(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_binary_file(path);
  if (bytes.size() < 8 || bytes[0] != 'F' || bytes[1] != 'F' || bytes[2] != 'M' ||
      bytes[3] != '1')
    throw DataError("checkpoint: not an FFM1 file: " + path.string());
  std::size_t off = 4;
  const std::uint32_t dj_len = get_u32(bytes, off);
  if (off + dj_len > bytes.size()) throw DataError("checkpoint: truncated descriptor");
  Json desc;
  try {
    desc = Json::parse(bytes.begin() + static_cast<long>(off),
                       bytes.begin() + static_cast<long>(off + dj_len));
  } catch (const Json::exception& e) {
    throw DataError(std::string("checkpoint: bad descriptor: ") + e.what());
  }
  off += dj_len;

  NoisePredictor model;
  try {
    model.config_.width = desc.at("width").get<int>();
    model.config_.name_dim = desc.at("name_dim").get<int>();
    model.config_.instr_dim = desc.at("instr_dim").get<int>();
    model.config_.time_dim = desc.at("time_dim").get<int>();
    model.config_.ff_mult = desc.at("ff_mult").get<int>();
    model.config_.voxel_reduction = desc.at("voxel_reduction").get<double>();
    model.config_.vocab_seed = desc.at("vocab_seed").get<std::uint64_t>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("checkpoint: missing descriptor field: ") + e.what());
  }
  check_config(model.config_);

  long count = 0;
  for (const PDef& d : param_defs(model.config_)) {
    model.params_.emplace_back(d.rows, d.cols);
    count += static_cast<long>(d.rows) * d.cols;
  }
  if (desc.at("parameters").get<long>() != count)
    throw DataError("checkpoint: descriptor parameter count disagrees with the architecture");
  if (bytes.size() - off != static_cast<std::size_t>(count) * 4)
    throw DataError("checkpoint: parameter payload has the wrong length");
  for (Eigen::MatrixXd& p : model.params_)
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        const std::uint32_t u = get_u32(bytes, off);
        float f;
        std::memcpy(&f, &u, 4);
        p(i, j) = static_cast<double>(f);
      }
  return model;
}

}  // namespace goalgen
