#pragma once

#include "ghoi/diffusion.hpp"
#include "ghoi/gaze_condition.hpp"
#include "ghoi/stage_losses.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

namespace ghoi {

inline constexpr int kGeometryDescriptorDim = 6;
inline constexpr int kStage1StaticDim = kObjectDim + kGeometryDescriptorDim;                // 15
inline constexpr int kStage2CondDim = kObjectDim + kGeometryDescriptorDim + 2 * kHandParamDim;  // 137

/// Pooled shape summary: object-frame box extents, then mean/max/std of centroid distance.
inline Eigen::Matrix<double, 1, kGeometryDescriptorDim> geometry_descriptor(const PointCloud& geom) {
  if (geom.empty()) throw Error("empty geometry");
  Vec3 lo = geom.points[0], hi = geom.points[0];
  for (const auto& p : geom.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 c = geom.centroid();
  double sum = 0.0, sq = 0.0, mx = 0.0;
  for (const auto& p : geom.points) {
    const double d = (p - c).norm();
    sum += d;
    sq += d * d;
    mx = std::max(mx, d);
  }
  const double n = static_cast<double>(geom.size());
  const double mean = sum / n;
  Eigen::Matrix<double, 1, kGeometryDescriptorDim> out;
  out << (hi - lo).transpose(), mean, mx, std::sqrt(std::max(0.0, sq / n - mean * mean));
  return out;
}

inline Eigen::Matrix<double, 1, kObjectDim> object_row(const RigidTransform& t) {
  Eigen::Matrix<double, 1, kObjectDim> r;
  const auto a = t.rotation.to_6d();
  for (int k = 0; k < 6; ++k) r[k] = a[static_cast<std::size_t>(k)];
  r.tail<3>() = t.translation.transpose();
  return r;
}

/// What a generation request provides: gaze track, initial poses, object points.
struct GenerationInput {
  GazeSequence gaze;
  HandShape left_shape{{1, 1, 1, 1, 1, 1, 1, 1, 1, 1}, true};
  HandShape right_shape{};
  HandPose left_first;
  HandPose right_first;
  RigidTransform object_first;
  PointCloud geometry;
  double fps = 30.0;

  std::size_t length() const { return gaze.size(); }

  static GenerationInput from_sequence(const InteractionSequence& s) {
    s.validate();
    GenerationInput in;
    in.gaze = s.gaze;
    in.left_shape = s.hands.left_shape;
    in.right_shape = s.hands.right_shape;
    in.left_first = s.hands.left[0];
    in.right_first = s.hands.right[0];
    in.object_first = s.object.pose(0);
    in.geometry = s.geometry;
    in.fps = s.fps;
    return in;
  }

  void validate() const {
    if (gaze.size() < 2) throw Error("generation input needs at least 2 gaze samples");
    if (geometry.empty()) throw Error("empty geometry");
    geometry.validate();
    left_shape.validate();
    right_shape.validate();
    if (!object_first.rotation.is_valid()) throw Error("invalid initial object rotation");
  }
};

inline json generation_input_json(const GenerationInput& in) {
  return {{"version", kSequenceFormatVersion},
          {"fps", in.fps},
          {"gaze", point_list_json(in.gaze)},
          {"left_first", to_params(in.left_first, in.left_shape)},
          {"right_first", to_params(in.right_first, in.right_shape)},
          {"object_first", {{"rot6d", in.object_first.rotation.to_6d()}, {"trans", vec3_json(in.object_first.translation)}}},
          {"geometry", geometry_json(in.geometry)}};
}

inline GenerationInput generation_input_from(const json& j) {
  if (j.at("version").get<int>() != kSequenceFormatVersion) throw Error("unsupported input format version");
  GenerationInput in;
  in.fps = j.at("fps").get<double>();
  in.gaze = point_list_from(j.at("gaze"));
  const auto l = j.at("left_first").get<std::array<double, kHandParamDim>>();
  const auto r = j.at("right_first").get<std::array<double, kHandParamDim>>();
  in.left_first = pose_from_params(l);
  in.left_shape.beta = beta_from_params(l);
  in.left_shape.left = true;
  in.right_first = pose_from_params(r);
  in.right_shape.beta = beta_from_params(r);
  in.right_shape.left = false;
  in.object_first = RigidTransform(Rotation::from_6d(j.at("object_first").at("rot6d").get<std::array<double, 6>>()),
                                   vec3_from(j.at("object_first").at("trans")));
  in.geometry = geometry_from(j.at("geometry"));
  in.validate();
  return in;
}

// ------------------------------------------------------------- conditions

/// Stage-1 static rows: initial object pose and geometry descriptor, broadcast.
inline MatrixXd stage1_static_cond(const GenerationInput& in) {
  Eigen::Matrix<double, 1, kStage1StaticDim> row;
  row << object_row(in.object_first), geometry_descriptor(in.geometry);
  return row.replicate(static_cast<Eigen::Index>(in.length()), 1);
}

/// Per-frame fixed features of the gaze-matched point scaled by inverse distance.
/// The object is held at its initial pose: later poses are what stage 1 predicts.
inline MatrixXd stage1_gaze_rows(const GenerationInput& in) {
  const auto matches = match_gaze(in.gaze, ObjectMotion::constant(in.object_first, in.length()), in.geometry);
  const MatrixXd fixed = fixed_point_features(in.geometry);
  MatrixXd a(static_cast<Eigen::Index>(matches.size()), kFixedFeatureDim);
  for (std::size_t i = 0; i < matches.size(); ++i)
    a.row(static_cast<Eigen::Index>(i)) = matches[i].weight * fixed.row(static_cast<Eigen::Index>(matches[i].index));
  return a;
}

inline MatrixXd stage2_cond(const GenerationInput& in, const ObjectMotion& object) {
  if (object.size() != in.length()) throw Error("object motion length differs from input");
  const auto geo = geometry_descriptor(in.geometry);
  const auto hl = to_params(in.left_first, in.left_shape);
  const auto hr = to_params(in.right_first, in.right_shape);
  MatrixXd c(static_cast<Eigen::Index>(in.length()), kStage2CondDim);
  for (std::size_t i = 0; i < in.length(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    c.block<1, kObjectDim>(r, 0) = object_row(object.pose(i));
    c.block<1, kGeometryDescriptorDim>(r, kObjectDim) = geo;
    for (int k = 0; k < kHandParamDim; ++k) {
      c(r, kObjectDim + kGeometryDescriptorDim + k) = hl[static_cast<std::size_t>(k)];
      c(r, kObjectDim + kGeometryDescriptorDim + kHandParamDim + k) = hr[static_cast<std::size_t>(k)];
    }
  }
  return c;
}

// ------------------------------------------------------------------ model

struct StageConfig {
  int stage = 1;
  Stage1Weights w1;
  Stage2Weights w2;
  int width = 64;
  int blocks = 2;
  int time_dim = 32;
  ScheduleConfig schedule;
  AdamConfig adam;
  int batch = 8;
  int steps = 2000;
  int val_draws = 4;
  double clip = 3.0;
  bool cosine_lr = false;  // decay lr to 0 over `steps`
  double ema = 0.0;        // weight averaging decay; 0 keeps raw weights
  bool skip = false;       // x_hat_0 = sqrt(ab) x_t + sqrt(1 - ab) * net

  int x_dim() const { return stage == 1 ? kObjectDim : layout::kFrameDim; }
  int cond_dim() const { return stage == 1 ? kFeatureDim + kStage1StaticDim : kStage2CondDim; }

  void validate() const {
    if (stage != 1 && stage != 2) throw Error("stage must be 1 or 2");
    for (double w : {w1.simple, w1.trans, w1.verts, w1.smooth, w2.simple, w2.bone})
      if (w < 0.0) throw Error("loss weights must be non-negative");
    if (batch < 1 || steps < 0 || val_draws < 1) throw Error("invalid training sizes");
    if (adam.lr < 0.0) throw Error("learning rate must be non-negative");
    if (ema < 0.0 || ema >= 1.0) throw Error("ema decay must lie in [0, 1)");
    DenoiserConfig{x_dim(), cond_dim(), width, time_dim, blocks, 2}.validate();
    NoiseSchedule::make(schedule);
  }
};

inline json stage_config_json(const StageConfig& c) {
  return {{"stage", c.stage},
          {"weights", c.stage == 1 ? json{{"simple", c.w1.simple}, {"trans", c.w1.trans}, {"verts", c.w1.verts},
                                          {"smooth", c.w1.smooth}}
                                   : json{{"simple", c.w2.simple}, {"bone", c.w2.bone}}},
          {"width", c.width},
          {"blocks", c.blocks},
          {"time_dim", c.time_dim},
          {"schedule", schedule_json(c.schedule)},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"batch", c.batch},
          {"steps", c.steps},
          {"val_draws", c.val_draws},
          {"clip", c.clip},
          {"cosine_lr", c.cosine_lr},
          {"ema", c.ema},
          {"skip", c.skip}};
}

inline StageConfig stage_config_from(const json& j, StageConfig c) {
  c.stage = j.value("stage", c.stage);
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    if (c.stage == 1) {
      c.w1.simple = w.value("simple", c.w1.simple);
      c.w1.trans = w.value("trans", c.w1.trans);
      c.w1.verts = w.value("verts", c.w1.verts);
      c.w1.smooth = w.value("smooth", c.w1.smooth);
    } else {
      c.w2.simple = w.value("simple", c.w2.simple);
      c.w2.bone = w.value("bone", c.w2.bone);
    }
  }
  c.width = j.value("width", c.width);
  c.blocks = j.value("blocks", c.blocks);
  c.time_dim = j.value("time_dim", c.time_dim);
  if (j.contains("schedule")) {
    json merged = schedule_json(c.schedule);
    merged.update(j["schedule"]);
    c.schedule = schedule_from(merged);
  }
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.batch = j.value("batch", c.batch);
  c.steps = j.value("steps", c.steps);
  c.val_draws = j.value("val_draws", c.val_draws);
  c.clip = j.value("clip", c.clip);
  c.cosine_lr = j.value("cosine_lr", c.cosine_lr);
  c.ema = j.value("ema", c.ema);
  c.skip = j.value("skip", c.skip);
  c.validate();
  return c;
}

/// One trained stage: denoiser, schedule, normalization and (stage 1) the gaze encoder.
struct StageModel {
  StageConfig config;
  NoiseSchedule schedule;
  Normalizer x_norm;
  Normalizer cond_norm;  // stage 1: static rows only; stage 2: all condition rows
  Denoiser net;
  PointEmbedding embed;
  ConditionEncoder encoder;
  double gaze_scale = 1.0;

  static StageModel init(const StageConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    StageModel m;
    m.config = cfg;
    m.schedule = NoiseSchedule::make(cfg.schedule);
    m.net = Denoiser::init({cfg.x_dim(), cfg.cond_dim(), cfg.width, cfg.time_dim, cfg.blocks, 2}, rng);
    m.apply_skip();
    if (cfg.stage == 1) {
      m.embed = PointEmbedding::random(rng);
      m.encoder = ConditionEncoder::random(rng);
    }
    return m;
  }

  void apply_skip() {
    if (!config.skip) return;
    auto [a, b] = skip_coefficients(schedule);
    net.set_skip(std::move(a), std::move(b));
  }

  std::vector<MatrixXd*> trainables() {
    std::vector<MatrixXd*> out;
    for (auto& p : net.params()) out.push_back(&p);
    if (config.stage == 1)
      for (auto* p : {&embed.weights, &encoder.wq, &encoder.wk, &encoder.wv}) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : trainables()) n += static_cast<std::size_t>(p->size());
    return n;
  }

  /// Normalized condition rows for inference (stage 1 runs the attention encoder).
  MatrixXd stage1_condition(const GenerationInput& in) const {
    const MatrixXd a = stage1_gaze_rows(in) * gaze_scale;
    MatrixXd f(a.rows(), kFeatureDim);
    f << a, a * embed.weights;
    MatrixXd c(a.rows(), config.cond_dim());
    c << self_attention(f, encoder), cond_norm.normalize(stage1_static_cond(in));
    return c;
  }

  MatrixXd stage2_condition(const GenerationInput& in, const ObjectMotion& object) const {
    return cond_norm.normalize(stage2_cond(in, object));
  }
};

// --------------------------------------------------------------- examples

struct StageExample {
  MatrixXd x;      // physical target rows
  MatrixXd cond;   // stage 1: static rows (physical); stage 2: condition rows (physical)
  MatrixXd gaze;   // stage 1 only: l x 10 inverse-distance weighted fixed features
  PointCloud geometry;
};

inline StageExample stage1_example(const InteractionSequence& s) {
  const auto in = GenerationInput::from_sequence(s);
  return {object_rows(s.object), stage1_static_cond(in), stage1_gaze_rows(in), s.geometry};
}

/// Stage-2 target is the canonical HOI; the object condition is the GT motion
/// (teacher mode) unless an explicit motion is supplied (pipeline mode).
inline StageExample stage2_example(const InteractionSequence& s, const ObjectMotion* object = nullptr) {
  const auto in = GenerationInput::from_sequence(s);
  return {canonicalize(s).frames, stage2_cond(in, object ? *object : s.object), MatrixXd(), s.geometry};
}

/// Fit normalizers (and the stage-1 gaze scale) on the training set.
inline void fit_statistics(StageModel& m, const std::vector<StageExample>& train) {
  if (train.empty()) throw Error("empty training set");
  std::vector<MatrixXd> xs, cs;
  for (const auto& e : train) {
    xs.push_back(e.x);
    cs.push_back(e.cond);
  }
  m.x_norm = Normalizer::fit(xs);
  m.cond_norm = Normalizer::fit(cs);
  if (m.config.stage == 1) {
    std::vector<double> mags;
    for (const auto& e : train)
      for (Eigen::Index r = 0; r < e.gaze.rows(); ++r) mags.push_back(e.gaze.row(r).norm());
    std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2), mags.end());
    const double med = mags[mags.size() / 2];
    m.gaze_scale = med > 0.0 ? 1.0 / med : 1.0;
  }
}

struct ExampleLoss {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> terms;
};

/// Loss for one example at step t with noise eps; accumulates parameter
/// gradients (in trainables() order) when `grads` is given.
inline ExampleLoss example_loss(StageModel& m, const StageExample& e, int t, const MatrixXd& eps,
                                std::vector<MatrixXd>* grads) {
  const bool train = grads != nullptr;
  const auto& cfg = m.config;
  const MatrixXd x0n = m.x_norm.normalize(e.x);
  const MatrixXd xt = forward_diffuse(x0n, t, eps, m.schedule);
  ad::Tape tape;
  const auto p = m.net.bind(tape, train);
  ad::Var cond;
  std::vector<ad::Var> extra;
  if (cfg.stage == 1) {
    const ad::Var a = tape.constant(e.gaze * m.gaze_scale);
    for (auto* w : {&m.embed.weights, &m.encoder.wq, &m.encoder.wk, &m.encoder.wv})
      extra.push_back(train ? tape.variable(*w) : tape.constant(*w));
    const ad::Var f = tape.concat_cols({a, tape.matmul(a, extra[0])});
    const ad::Var cg = self_attention(tape, f, extra[1], extra[2], extra[3]);
    cond = tape.concat_cols({cg, tape.constant(m.cond_norm.normalize(e.cond))});
  } else {
    cond = tape.constant(m.cond_norm.normalize(e.cond));
  }
  const ad::Var out = m.net.forward(tape, p, tape.constant(xt), cond, t);
  const MatrixXd& x0n_hat = tape.value(out);
  const MatrixXd x0_hat = m.x_norm.denormalize(x0n_hat);
  const double n = static_cast<double>(x0n.size());
  const double simple = (x0n_hat - x0n).squaredNorm() / n;
  MatrixXd seed;
  ExampleLoss out_loss;
  if (cfg.stage == 1) {
    const auto s = stage1_terms(x0_hat, e.x, e.geometry);
    out_loss.total = cfg.w1.simple * simple + cfg.w1.trans * s.trans + cfg.w1.verts * s.verts + cfg.w1.smooth * s.smooth;
    out_loss.terms = {{"simple", simple}, {"trans", s.trans}, {"verts", s.verts}, {"smooth", s.smooth}};
    if (train)
      seed = (2.0 * cfg.w1.simple / n) * (x0n_hat - x0n) +
             m.x_norm.grad_to_normalized(cfg.w1.trans * s.grad_trans + cfg.w1.verts * s.grad_verts +
                                         cfg.w1.smooth * s.grad_smooth);
  } else {
    const auto b = bone_term(x0_hat, e.x);
    out_loss.total = cfg.w2.simple * simple + cfg.w2.bone * b.value;
    out_loss.terms = {{"simple", simple}, {"bone", b.value}};
    if (train) seed = (2.0 * cfg.w2.simple / n) * (x0n_hat - x0n) + m.x_norm.grad_to_normalized(cfg.w2.bone * b.grad);
  }
  if (!std::isfinite(out_loss.total)) {
    std::string msg = "non-finite stage-" + std::to_string(cfg.stage) + " loss at t=" + std::to_string(t) + ":";
    for (const auto& [k, v] : out_loss.terms) msg += " " + k + "=" + std::to_string(v);
    throw Error(msg);
  }
  if (train) {
    tape.backward(out, seed);
    std::size_t k = 0;
    for (auto v : p) (*grads)[k++] += tape.grad(v);
    for (auto v : extra) (*grads)[k++] += tape.grad(v);
  }
  return out_loss;
}

struct TrainResult {
  std::vector<double> step_loss;
  std::vector<double> epoch_train;
  std::vector<double> epoch_val;
};

struct TrainHooks {
  std::function<void(int epoch, double train_loss, double val_loss)> on_epoch;
};

/// Validation draws are fixed up front so epochs compare on common noise.
struct ValidationSet {
  std::vector<std::size_t> example;
  std::vector<int> step;
  std::vector<MatrixXd> eps;
};

inline ValidationSet make_validation_set(const StageModel& m, const std::vector<StageExample>& val, std::uint64_t seed) {
  ValidationSet v;
  std::mt19937_64 rng(seed ^ 0x5eedf00dULL);
  std::uniform_int_distribution<int> pick_t(1, m.schedule.steps());
  for (std::size_t i = 0; i < val.size(); ++i)
    for (int d = 0; d < m.config.val_draws; ++d) {
      v.example.push_back(i);
      v.step.push_back(pick_t(rng));
      v.eps.push_back(gaussian(val[i].x.rows(), val[i].x.cols(), rng));
    }
  return v;
}

inline double validation_loss(StageModel& m, const std::vector<StageExample>& val, const ValidationSet& v) {
  if (v.example.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (std::size_t k = 0; k < v.example.size(); ++k)
    sum += example_loss(m, val[v.example[k]], v.step[k], v.eps[k], nullptr).total;
  return sum / static_cast<double>(v.example.size());
}

/// Minibatch Adam on the stage loss with t ~ U[1, T]. Statistics are fitted
/// on `train`; deterministic for a fixed seed.
inline TrainResult train_stage(StageModel& m, const std::vector<StageExample>& train,
                               const std::vector<StageExample>& val, std::uint64_t seed, const TrainHooks& hooks = {}) {
  if (train.empty()) throw Error("empty training set");
  fit_statistics(m, train);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_t(1, m.schedule.steps());
  Adam opt(m.config.adam);
  const auto vset = make_validation_set(m, val, seed);
  TrainResult res;
  const int batch = std::min<int>(m.config.batch, static_cast<int>(train.size()));
  const int per_epoch = static_cast<int>((train.size() + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  auto params = m.trainables();
  const double base_lr = m.config.adam.lr;
  const double decay = m.config.ema;
  std::vector<MatrixXd> averaged;
  if (decay > 0.0)
    for (auto* p : params) averaged.push_back(*p);
  auto swap_averaged = [&] {
    for (std::size_t i = 0; i < averaged.size(); ++i) params[i]->swap(averaged[i]);
  };
  int step = 0, epoch = 0;
  while (step < m.config.steps) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    int epoch_steps = 0;
    for (int b = 0; b < per_epoch && step < m.config.steps; ++b, ++step) {
      std::vector<MatrixXd> grads;
      for (auto* p : params) grads.push_back(MatrixXd::Zero(p->rows(), p->cols()));
      double loss = 0.0;
      int used = 0;
      for (int k = 0; k < batch; ++k) {
        const std::size_t idx = static_cast<std::size_t>(b * batch + k);
        if (idx >= order.size()) break;
        const auto& e = train[order[idx]];
        const int t = pick_t(rng);
        const MatrixXd eps = gaussian(e.x.rows(), e.x.cols(), rng);
        loss += example_loss(m, e, t, eps, &grads).total;
        ++used;
      }
      for (auto& g : grads) g /= used;
      if (m.config.cosine_lr)
        opt.set_lr(0.5 * base_lr * (1.0 + std::cos(M_PI * step / static_cast<double>(m.config.steps))));
      opt.step(params, grads);
      for (std::size_t i = 0; i < averaged.size(); ++i) averaged[i] = decay * averaged[i] + (1.0 - decay) * *params[i];
      res.step_loss.push_back(loss / used);
      epoch_sum += loss / used;
      ++epoch_steps;
    }
    res.epoch_train.push_back(epoch_sum / epoch_steps);
    swap_averaged();
    res.epoch_val.push_back(validation_loss(m, val, vset));
    swap_averaged();
    if (hooks.on_epoch) hooks.on_epoch(epoch, res.epoch_train.back(), res.epoch_val.back());
    ++epoch;
  }
  // the averaged weights are the trained model
  swap_averaged();
  return res;
}

// -------------------------------------------------------------- sampling

inline ObjectMotion sample_stage1(const StageModel& m, const GenerationInput& in, std::uint64_t seed) {
  if (m.config.stage != 1) throw Error("expected a stage-1 model");
  in.validate();
  const DenoiserPredictor pred(m.net, m.stage1_condition(in));
  const MatrixXd z = sample(pred, m.schedule, static_cast<Eigen::Index>(in.length()), kObjectDim, seed,
                            SampleOptions{m.config.clip});
  return object_from_rows(m.x_norm.denormalize(z));
}

// ------------------------------------------------------------ checkpoints

inline constexpr int kCheckpointVersion = 1;

inline json checkpoint_json(const StageModel& m) {
  json j{{"format", "ghoi-checkpoint"},
         {"version", kCheckpointVersion},
         {"stage", m.config.stage},
         {"config", stage_config_json(m.config)},
         {"schedule", schedule_json(m.schedule.config)},
         {"denoiser", denoiser_config_json(m.net.config())},
         {"normalization", {{"x", normalizer_json(m.x_norm)}, {"cond", normalizer_json(m.cond_norm)}}},
         {"parameter_count", m.net.parameter_count()},
         {"parameters", m.net.flat()}};
  if (m.config.stage == 1)
    j["gaze"] = {{"scale", m.gaze_scale},
                 {"embedding", matrix_json(m.embed.weights)},
                 {"wq", matrix_json(m.encoder.wq)},
                 {"wk", matrix_json(m.encoder.wk)},
                 {"wv", matrix_json(m.encoder.wv)}};
  return j;
}

inline StageModel checkpoint_from(const json& j) {
  if (j.value("format", std::string()) != "ghoi-checkpoint") throw Error("not a checkpoint file");
  if (j.at("version").get<int>() != kCheckpointVersion) throw Error("unsupported checkpoint version");
  StageModel m;
  m.config = stage_config_from(j.at("config"), StageConfig{});
  m.schedule = NoiseSchedule::make(schedule_from(j.at("schedule")));
  m.net = Denoiser(denoiser_config_from(j.at("denoiser")));
  m.net.set_flat(j.at("parameters").get<std::vector<double>>());
  m.apply_skip();
  m.x_norm = normalizer_from(j.at("normalization").at("x"));
  m.cond_norm = normalizer_from(j.at("normalization").at("cond"));
  if (m.config.stage == 1) {
    const auto& g = j.at("gaze");
    m.gaze_scale = g.at("scale").get<double>();
    m.embed.weights = matrix_from(g.at("embedding"));
    m.encoder.wq = matrix_from(g.at("wq"));
    m.encoder.wk = matrix_from(g.at("wk"));
    m.encoder.wv = matrix_from(g.at("wv"));
    m.encoder.validate();
  }
  return m;
}

inline void write_checkpoint(const std::filesystem::path& path, const StageModel& m) {
  write_text_atomic(path, checkpoint_json(m).dump());
}

inline StageModel read_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from(json::parse(read_text(path)));
}

}  // namespace ghoi
