#pragma once

#include "ghoi/guidance.hpp"
#include "ghoi/io.hpp"
#include "ghoi/metrics.hpp"
#include "ghoi/selection.hpp"
#include "ghoi/synth_data.hpp"
#include "ghoi/training.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ghoi {

namespace fs = std::filesystem;

/// Bad configuration or missing prerequisites (exit code 2 in the CLI).
class ValidationError : public Error {
 public:
  using Error::Error;
};

enum class Stage2Mode { Teacher, Pipeline };

struct RunConfig {
  std::uint64_t data_seed = 7;
  std::uint64_t train_seed = 11;
  std::uint64_t sample_seed = 13;
  int count = 200;
  SceneConfig scene;
  StageConfig stage1;
  StageConfig stage2;
  Stage2Mode stage2_mode = Stage2Mode::Teacher;
  bool guidance_enabled = true;
  GuidanceSpec guidance;
  SelectionParams selection;
  int n_cand = 16;
  int eval_inputs = 4;  // validation sequences sampled by run-all
  int fit_iterations = 50;
  double contact_tau = 0.01;
  int diversity_pairs = 20;

  void validate() const {
    try {
      scene.validate();
      stage1.validate();
      stage2.validate();
      guidance.validate();
      selection.validate();
    } catch (const ValidationError&) {
      throw;
    } catch (const Error& e) {
      throw ValidationError(e.what());
    }
    if (stage1.stage != 1 || stage2.stage != 2) throw ValidationError("stage configs must be stage 1 and stage 2");
    if (count < 2) throw ValidationError("dataset count must be at least 2");
    if (n_cand < 1) throw ValidationError("n_cand must be >= 1");
    if (eval_inputs < 1) throw ValidationError("eval_inputs must be >= 1");
    if (fit_iterations < 1) throw ValidationError("fit_iterations must be >= 1");
    if (!(contact_tau > 0.0)) throw ValidationError("contact_tau must be positive");
    if (diversity_pairs < 1) throw ValidationError("diversity_pairs must be >= 1");
  }

  /// Re-derive every seed from one master seed.
  void reseed(std::uint64_t seed) {
    data_seed = seed;
    train_seed = splitmix64(seed ^ 0x7261696eULL);
    sample_seed = splitmix64(seed ^ 0x73616d70ULL);
  }
};

/// Reduced desk-scale defaults.
inline RunConfig toy_profile() {
  RunConfig c;
  c.stage1.stage = 1;
  c.stage1.width = 64;
  c.stage1.schedule.steps = 200;
  c.stage1.adam.lr = 3e-4;
  c.stage1.cosine_lr = true;
  c.stage1.ema = 0.995;
  c.stage1.steps = 2000;
  c.stage2.stage = 2;
  c.stage2.width = 96;
  c.stage2.schedule.steps = 200;
  c.stage2.adam.lr = 1e-3;
  c.stage2.steps = 2000;
  c.stage2.skip = true;
  return c;
}

inline RunConfig paper_profile() {
  RunConfig c = toy_profile();
  for (auto* s : {&c.stage1, &c.stage2}) {
    s->schedule.steps = 1000;
    s->adam.lr = 1e-5;
    s->steps = 100000;
    s->cosine_lr = false;
    s->ema = 0.0;
  }
  c.stage1.width = 128;
  c.stage2.width = 256;
  return c;
}

inline json run_config_json(const RunConfig& c) {
  return {{"seeds", {{"data", c.data_seed}, {"train", c.train_seed}, {"sample", c.sample_seed}}},
          {"count", c.count},
          {"scene", scene_config_json(c.scene)},
          {"stage1", stage_config_json(c.stage1)},
          {"stage2", stage_config_json(c.stage2)},
          {"stage2_mode", c.stage2_mode == Stage2Mode::Teacher ? "teacher" : "pipeline"},
          {"guidance_enabled", c.guidance_enabled},
          {"guidance", guidance_json(c.guidance)},
          {"selection", selection_json(c.selection)},
          {"n_cand", c.n_cand},
          {"eval_inputs", c.eval_inputs},
          {"fit_iterations", c.fit_iterations},
          {"metrics", {{"contact_tau", c.contact_tau}, {"diversity_pairs", c.diversity_pairs}}}};
}

/// Missing keys keep the values of `base`.
inline RunConfig run_config_from(const json& j, RunConfig base = toy_profile()) {
  try {
    RunConfig c = base;
    if (j.contains("seeds")) {
      const auto& s = j["seeds"];
      c.data_seed = s.value("data", c.data_seed);
      c.train_seed = s.value("train", c.train_seed);
      c.sample_seed = s.value("sample", c.sample_seed);
    }
    c.count = j.value("count", c.count);
    if (j.contains("scene")) c.scene = scene_config_from(j["scene"]);
    if (j.contains("stage1")) c.stage1 = stage_config_from(j["stage1"], c.stage1);
    if (j.contains("stage2")) c.stage2 = stage_config_from(j["stage2"], c.stage2);
    const auto mode = j.value("stage2_mode", std::string(c.stage2_mode == Stage2Mode::Teacher ? "teacher" : "pipeline"));
    if (mode == "teacher")
      c.stage2_mode = Stage2Mode::Teacher;
    else if (mode == "pipeline")
      c.stage2_mode = Stage2Mode::Pipeline;
    else
      throw ValidationError("stage2_mode must be teacher or pipeline");
    c.guidance_enabled = j.value("guidance_enabled", c.guidance_enabled);
    if (j.contains("guidance")) c.guidance = guidance_from(j["guidance"]);
    if (j.contains("selection")) c.selection = selection_from(j["selection"]);
    c.n_cand = j.value("n_cand", c.n_cand);
    c.eval_inputs = j.value("eval_inputs", c.eval_inputs);
    c.fit_iterations = j.value("fit_iterations", c.fit_iterations);
    if (j.contains("metrics")) {
      c.contact_tau = j["metrics"].value("contact_tau", c.contact_tau);
      c.diversity_pairs = j["metrics"].value("diversity_pairs", c.diversity_pairs);
    }
    c.validate();
    return c;
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError(std::string("invalid config: ") + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

// ------------------------------------------------------------ dataset io

struct DataFiles {
  std::vector<fs::path> train, val;
};

inline std::vector<fs::path> json_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline DataFiles dataset_files(const fs::path& data_dir) {
  DataFiles f{json_files(data_dir / "train"), json_files(data_dir / "val")};
  if (f.train.empty()) throw ValidationError("no training sequences under " + (data_dir / "train").string());
  return f;
}

inline std::vector<InteractionSequence> read_sequences(const std::vector<fs::path>& files) {
  std::vector<InteractionSequence> out;
  for (const auto& p : files) {
    try {
      out.push_back(read_sequence(p));
    } catch (const std::exception& e) {
      throw Error(p.string() + ": " + e.what());
    }
  }
  return out;
}

struct GenDataSummary {
  int train = 0, val = 0;
};

inline GenDataSummary cmd_gen_data(const RunConfig& cfg, const fs::path& data_dir) {
  cfg.validate();
  const auto d = generate_dataset(cfg.scene, cfg.count, cfg.data_seed);
  std::size_t ti = 0, vi = 0;
  for (const auto& e : d.manifest) {
    const auto& seq = e.train ? d.train[ti++] : d.val[vi++];
    write_sequence(data_dir / (e.train ? "train" : "val") / (e.name + ".json"), seq);
  }
  write_json(data_dir / "manifest.json", manifest_json(d, cfg.scene));
  return {static_cast<int>(d.train.size()), static_cast<int>(d.val.size())};
}

// -------------------------------------------------------------- training

struct TrainSummary {
  fs::path checkpoint;
  TrainResult result;
};

inline json loss_curve_json(const TrainResult& r) {
  return {{"step_loss", r.step_loss}, {"epoch_train", r.epoch_train}, {"epoch_val", r.epoch_val}};
}

inline std::uint64_t stage_seed(const RunConfig& cfg, int stage) { return splitmix64(cfg.train_seed + static_cast<std::uint64_t>(stage)); }

/// Trains one stage on data_dir and writes ckpt_dir/stage{N}.json plus its loss curve.
inline TrainSummary cmd_train(const RunConfig& cfg, int stage, const fs::path& data_dir, const fs::path& ckpt_dir,
                              const std::optional<fs::path>& stage1_ckpt = std::nullopt,
                              const TrainHooks& hooks = {}) {
  cfg.validate();
  if (stage != 1 && stage != 2) throw ValidationError("stage must be 1 or 2");
  const auto files = dataset_files(data_dir);
  std::optional<StageModel> s1;
  if (stage == 2 && cfg.stage2_mode == Stage2Mode::Pipeline) {
    if (!stage1_ckpt || !fs::exists(*stage1_ckpt))
      throw ValidationError("pipeline-mode stage-2 training requires a stage-1 checkpoint");
    s1 = read_checkpoint(*stage1_ckpt);
    if (s1->config.stage != 1) throw ValidationError("checkpoint is not a stage-1 model");
  }
  const auto train_seqs = read_sequences(files.train);
  const auto val_seqs = read_sequences(files.val);
  const std::uint64_t seed = stage_seed(cfg, stage);
  auto examples = [&](const std::vector<InteractionSequence>& seqs, std::uint64_t salt) {
    std::vector<StageExample> out;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      if (stage == 1) {
        out.push_back(stage1_example(seqs[i]));
      } else if (s1) {
        const auto obj = sample_stage1(*s1, GenerationInput::from_sequence(seqs[i]), splitmix64(seed ^ salt ^ i));
        out.push_back(stage2_example(seqs[i], &obj));
      } else {
        out.push_back(stage2_example(seqs[i]));
      }
    }
    return out;
  };
  const auto train = examples(train_seqs, 0x1111);
  const auto val = examples(val_seqs, 0x2222);
  std::mt19937_64 rng(seed);
  StageModel m = StageModel::init(stage == 1 ? cfg.stage1 : cfg.stage2, rng);
  TrainSummary s;
  s.result = train_stage(m, train, val, seed, hooks);
  const std::string name = "stage" + std::to_string(stage);
  s.checkpoint = ckpt_dir / (name + ".json");
  write_checkpoint(s.checkpoint, m);
  write_json(ckpt_dir / (name + "_loss.json"), loss_curve_json(s.result));
  return s;
}

// -------------------------------------------------------------- sampling

struct Stage2Trace {
  std::vector<double> guidance_loss;  // per guided step, in step order
};

/// Stage-2 canonical HOI (physical units) for a given object motion.
inline CanonicalHOI sample_stage2(const StageModel& m, const GenerationInput& in, const ObjectMotion& object,
                                  std::uint64_t seed, const GuidanceSpec* guide = nullptr,
                                  Stage2Trace* trace = nullptr) {
  if (m.config.stage != 2) throw Error("expected a stage-2 model");
  in.validate();
  const DenoiserPredictor pred(m.net, m.stage2_condition(in, object));
  const auto l = static_cast<Eigen::Index>(in.length());
  MatrixXd z;
  if (guide) {
    const Normalizer& xn = m.x_norm;
    LossClosure closure = [&](const MatrixXd& x0n) {
      const auto b = total_guidance_loss(xn.denormalize(x0n), object, in.geometry, in.fps, *guide);
      if (!std::isfinite(b.total)) throw Error("non-finite guidance loss: " + b.describe());
      return GuidanceValue{b.total, xn.grad_to_normalized(b.grad)};
    };
    auto on_loss = [trace](int, double v) {
      if (trace) trace->guidance_loss.push_back(v);
    };
    const auto step = make_step_guidance(*guide, closure, on_loss);
    z = sample(pred, m.schedule, l, layout::kFrameDim, seed, SampleOptions{m.config.clip}, &step);
  } else {
    z = sample(pred, m.schedule, l, layout::kFrameDim, seed, SampleOptions{m.config.clip});
  }
  return {m.x_norm.denormalize(z)};
}

/// Per-frame pose fit of both hands to generated joints, warm-started from the
/// previous frame (the first frame starts from the input pose).
inline HandMotion hands_from_joints(const MatrixXd& joints, const GenerationInput& in, int iterations = 50) {
  HandMotion h;
  h.left_shape = in.left_shape;
  h.right_shape = in.right_shape;
  FitOptions opt;
  opt.iterations = iterations;
  for (int side = 0; side < 2; ++side) {
    const HandShape& shape = side == 0 ? in.left_shape : in.right_shape;
    auto& out = side == 0 ? h.left : h.right;
    HandPose prev = side == 0 ? in.left_first : in.right_first;
    for (Eigen::Index i = 0; i < joints.rows(); ++i) {
      Joints21 target;
      for (int k = 0; k < kNumJoints; ++k)
        target[static_cast<std::size_t>(k)] = joints.block<1, 3>(i, 3 * (side * kNumJoints + k)).transpose();
      try {
        prev = fit_pose_to_joints(target, shape, prev, opt).pose;
      } catch (const FitDivergence& d) {
        prev = d.best_pose;
      } catch (const Error&) {
        // degenerate MCP set: hold the previous pose
      }
      out.push_back(prev);
    }
  }
  return h;
}

struct CandidateSeeds {
  std::uint64_t stage1, stage2;
};

inline CandidateSeeds candidate_seeds(std::uint64_t seed, int k) {
  const auto base = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(k)));
  return {splitmix64(base ^ 1), splitmix64(base ^ 2)};
}

/// One full generation: stage 1, stage 2 (optionally guided), pose fitting.
inline InteractionSequence generate_candidate(const StageModel& s1, const StageModel& s2, const GenerationInput& in,
                                              const CandidateSeeds& seeds, const GuidanceSpec* guide,
                                              int fit_iterations = 50, Stage2Trace* trace = nullptr) {
  const auto object = sample_stage1(s1, in, seeds.stage1);
  const auto hoi = sample_stage2(s2, in, object, seeds.stage2, guide, trace);
  InteractionSequence seq;
  seq.gaze = in.gaze;
  seq.hands = hands_from_joints(hoi.frames.leftCols(layout::kJDim), in, fit_iterations);
  seq.object = object;
  seq.geometry = in.geometry;
  seq.fps = in.fps;
  seq.validate();
  return seq;
}

/// Input files may be generation inputs or full sequences (whose first frame is used).
inline GenerationInput read_generation_input(const fs::path& path) {
  const auto j = json::parse(read_text(path));
  try {
    if (j.contains("left") && j.contains("object")) return GenerationInput::from_sequence(sequence_from_json(j));
    return generation_input_from(j);
  } catch (const std::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline std::string trajectory_csv(const InteractionSequence& s) {
  std::string out = "frame,gaze_x,gaze_y,gaze_z,lw_x,lw_y,lw_z,rw_x,rw_y,rw_z,obj_x,obj_y,obj_z\n";
  char line[512];
  for (std::size_t i = 0; i < s.length(); ++i) {
    const auto j = frame_joints(s.hands, i);
    const Vec3 &g = s.gaze[i], &lw = j[layout::kLeftWrist], &rw = j[layout::kRightWrist], &o = s.object.trans[i];
    std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", i, g.x(),
                  g.y(), g.z(), lw.x(), lw.y(), lw.z(), rw.x(), rw.y(), rw.z(), o.x(), o.y(), o.z());
    out += line;
  }
  return out;
}

inline std::string candidate_name(int k) {
  char b[32];
  std::snprintf(b, sizeof(b), "cand_%02d", k);
  return b;
}

/// Writes n_cand candidate sequences (and optional CSV trajectories) to out_dir.
inline std::vector<fs::path> cmd_sample(const RunConfig& cfg, const fs::path& stage1_ckpt, const fs::path& stage2_ckpt,
                                        const fs::path& input, const fs::path& out_dir, bool csv = false) {
  cfg.validate();
  for (const auto& p : {stage1_ckpt, stage2_ckpt, input})
    if (!fs::exists(p)) throw ValidationError("missing file " + p.string());
  const auto s1 = read_checkpoint(stage1_ckpt);
  const auto s2 = read_checkpoint(stage2_ckpt);
  if (s1.config.stage != 1 || s2.config.stage != 2) throw ValidationError("checkpoints must be stage 1 and stage 2");
  const auto in = read_generation_input(input);
  const GuidanceSpec* guide = cfg.guidance_enabled ? &cfg.guidance : nullptr;
  std::vector<fs::path> out;
  for (int k = 0; k < cfg.n_cand; ++k) {
    InteractionSequence seq;
    try {
      seq = generate_candidate(s1, s2, in, candidate_seeds(cfg.sample_seed, k), guide, cfg.fit_iterations);
    } catch (const std::exception& e) {
      throw Error("candidate " + std::to_string(k) + ": " + e.what());
    }
    const auto path = out_dir / (candidate_name(k) + ".json");
    write_sequence(path, seq);
    if (csv) write_text_atomic(out_dir / (candidate_name(k) + ".csv"), trajectory_csv(seq));
    out.push_back(path);
  }
  return out;
}

// ------------------------------------------------------------- ranking

/// Ranks candidate sequence files against the gaze and geometry they carry.
inline json cmd_rank(const RunConfig& cfg, const std::vector<fs::path>& files, int k, const fs::path& report) {
  cfg.validate();
  if (files.empty()) throw ValidationError("no candidates to rank");
  if (k < 1) throw ValidationError("k must be >= 1");
  const auto seqs = read_sequences(files);
  std::vector<Candidate> cands;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (seqs[i].gaze != seqs[0].gaze) throw ValidationError("candidates disagree on the gaze input");
    cands.push_back({seqs[i].hands, seqs[i].object});
    names.push_back(files[i].filename().string());
  }
  const auto r = rank_candidates(cands, seqs[0].gaze, seqs[0].geometry, cfg.selection, k);
  json j = ranking_json(r, names);
  j["params"] = selection_json(cfg.selection);
  j["k"] = k;
  write_json(report, j);
  return j;
}

// ----------------------------------------------------------- evaluation

/// Evaluates generated/ground-truth pairs; per-pair failures become error entries.
inline json cmd_evaluate(const RunConfig& cfg, const std::vector<fs::path>& generated,
                         const std::vector<fs::path>& ground_truth, const fs::path& out_dir) {
  cfg.validate();
  if (generated.empty() || generated.size() != ground_truth.size())
    throw ValidationError("evaluate needs equally many generated and ground-truth files");
  json pairs = json::array();
  std::vector<PairMetrics> ok;
  std::vector<MatrixXd> real, gen;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    json entry = {{"generated", generated[i].filename().string()}, {"ground_truth", ground_truth[i].filename().string()}};
    try {
      const auto g = read_sequence(generated[i]);
      const auto t = read_sequence(ground_truth[i]);
      const auto m = evaluate_pair(g, t, cfg.contact_tau);
      entry["metrics"] = pair_json(m);
      ok.push_back(m);
      gen.push_back(canonicalize(g, cfg.contact_tau).frames);
      real.push_back(canonicalize(t, cfg.contact_tau).frames);
    } catch (const std::exception& e) {
      entry["error"] = e.what();
    }
    pairs.push_back(entry);
  }
  if (ok.empty()) throw Error("every evaluation pair failed");
  const auto agg = aggregate(ok);
  json fid_value = nullptr, div_value = nullptr;
  if (real.size() >= 2) fid_value = motion_fid(real, gen);
  if (gen.size() >= 2) div_value = diversity(feature_matrix(gen), cfg.diversity_pairs, cfg.sample_seed);
  json mean, sd;
  for (std::size_t k = 0; k < agg.mean.size(); ++k) {
    mean[pair_metric_names()[k]] = agg.mean[k];
    sd[pair_metric_names()[k]] = agg.std[k];
  }
  json report = {{"pairs", pairs}, {"evaluated", ok.size()}, {"failed", generated.size() - ok.size()},
                 {"mean", mean},   {"std", sd},               {"fid", fid_value},
                 {"diversity", div_value}};
  write_json(out_dir / "evaluation.json", report);
  const MetricsReport r = report_from(agg, fid_value.is_null() ? 0.0 : fid_value.get<double>(),
                                      div_value.is_null() ? 0.0 : div_value.get<double>());
  write_text_atomic(out_dir / "evaluation.txt", report_table(r, &agg));
  return report;
}

// --------------------------------------------------------------- run-all

using Progress = std::function<void(const std::string&)>;

/// gen-data, train x2, sample, rank, evaluate; writes out/report.json.
inline json cmd_run_all(const RunConfig& cfg, const fs::path& out, const Progress& progress = {}) {
  cfg.validate();
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  write_json(out / "run_config.json", run_config_json(cfg));
  const auto data = out / "data";
  const auto ckpt = out / "checkpoints";
  const auto counts = cmd_gen_data(cfg, data);
  say("data: " + std::to_string(counts.train) + " train / " + std::to_string(counts.val) + " val");
  const auto t1 = cmd_train(cfg, 1, data, ckpt);
  say("stage 1 trained");
  const auto t2 = cmd_train(cfg, 2, data, ckpt, t1.checkpoint);
  say("stage 2 trained");

  const auto val = json_files(data / "val");
  const auto inputs = val.empty() ? json_files(data / "train") : val;
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.eval_inputs), inputs.size());
  std::vector<fs::path> chosen, truth;
  json ranks = json::object();
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = inputs[i].stem().string();
    const auto cands = cmd_sample(cfg, t1.checkpoint, t2.checkpoint, inputs[i], out / "samples" / name);
    const auto r = cmd_rank(cfg, cands, cfg.selection.top_k, out / "rank" / (name + ".json"));
    ranks[name] = r["top"];
    chosen.push_back(cands[r["top"][0].get<std::size_t>()]);
    truth.push_back(inputs[i]);
    say("sampled and ranked " + name);
  }
  const auto eval = cmd_evaluate(cfg, chosen, truth, out);
  json report = {{"data", {{"train", counts.train}, {"val", counts.val}}},
                 {"training",
                  {{"stage1", {{"final_val", t1.result.epoch_val.empty() ? 0.0 : t1.result.epoch_val.back()},
                               {"epochs", t1.result.epoch_val.size()}}},
                   {"stage2", {{"final_val", t2.result.epoch_val.empty() ? 0.0 : t2.result.epoch_val.back()},
                               {"epochs", t2.result.epoch_val.size()}}}}},
                 {"top", ranks},
                 {"evaluation", {{"mean", eval["mean"]}, {"std", eval["std"]}, {"fid", eval["fid"]},
                                 {"diversity", eval["diversity"]}}}};
  write_json(out / "report.json", report);
  return report;
}

}  // namespace ghoi
