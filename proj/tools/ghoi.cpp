// ghoi: data generation, two-stage training, guided sampling, ranking and evaluation.
#include "ghoi/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;
using namespace ghoi;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "out";
  bool paper_scale = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "run config JSON");
  app->add_option_function<std::uint64_t>(
      "--seed", [&c](const std::uint64_t& s) { c.seed = s, c.seed_set = true; }, "master seed");
  app->add_option("--out", c.out, "output directory");
  app->add_flag("--paper-scale", c.paper_scale, "full-size defaults (T=1000, widths 128/256)");
}

RunConfig load_config(const Common& c) {
  RunConfig base = c.paper_scale ? paper_profile() : toy_profile();
  RunConfig cfg = base;
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw ValidationError("config not found: " + c.config);
    json j;
    try {
      j = json::parse(read_text(c.config));
    } catch (const json::exception& e) {
      throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    cfg = run_config_from(j, base);
  }
  if (c.seed_set) cfg.reseed(c.seed);
  cfg.validate();
  return cfg;
}

std::vector<fs::path> expand(const std::vector<std::string>& items) {
  std::vector<fs::path> out;
  for (const auto& s : items) {
    if (fs::is_directory(s)) {
      const auto files = json_files(s);
      out.insert(out.end(), files.begin(), files.end());
    } else {
      out.emplace_back(s);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gaze-guided hand-object interaction synthesis"};
  app.require_subcommand(1);

  Common common;
  int count = -1;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen, common);
  gen->add_option("--count", count, "number of sequences");

  int stage = 1;
  std::string data_dir, stage1_path, mode;
  auto* train = app.add_subcommand("train", "train one stage");
  add_common(train, common);
  train->add_option("--stage", stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--data", data_dir, "dataset directory (default <out>/data)");
  train->add_option("--stage1", stage1_path, "stage-1 checkpoint (pipeline mode)");
  train->add_option("--mode", mode, "stage-2 condition: teacher or pipeline")
      ->check(CLI::IsMember({"teacher", "pipeline"}));

  std::string ckpt1, ckpt2, input;
  int n_cand = -1;
  bool no_guidance = false, csv = false;
  auto* samp = app.add_subcommand("sample", "generate candidates for one input");
  add_common(samp, common);
  samp->add_option("--stage1", ckpt1, "stage-1 checkpoint")->required();
  samp->add_option("--stage2", ckpt2, "stage-2 checkpoint")->required();
  samp->add_option("--input", input, "generation input or sequence JSON")->required();
  samp->add_option("--n-cand", n_cand, "number of candidates");
  samp->add_flag("--no-guidance", no_guidance, "disable stage-2 guidance");
  samp->add_flag("--csv", csv, "also write trajectory CSV files");

  std::vector<std::string> cand_items;
  int k = -1;
  auto* rank = app.add_subcommand("rank", "rank candidate sequences");
  add_common(rank, common);
  rank->add_option("--candidates", cand_items, "candidate files or directories")->required();
  rank->add_option("--k", k, "top-k");

  std::vector<std::string> gen_items, gt_items;
  auto* eval = app.add_subcommand("evaluate", "metrics over generated/ground-truth pairs");
  add_common(eval, common);
  eval->add_option("--generated", gen_items, "generated files or directories")->required();
  eval->add_option("--ground-truth", gt_items, "ground-truth files or directories")->required();

  auto* all = app.add_subcommand("run-all", "gen-data, train x2, sample, rank, evaluate");
  add_common(all, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  RunConfig cfg;
  try {
    cfg = load_config(common);
    if (count >= 0) cfg.count = count;
    if (!mode.empty()) cfg.stage2_mode = mode == "teacher" ? Stage2Mode::Teacher : Stage2Mode::Pipeline;
    if (n_cand >= 0) cfg.n_cand = n_cand;
    if (no_guidance) cfg.guidance_enabled = false;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  const fs::path out = common.out;
  try {
    if (*gen) {
      const auto s = cmd_gen_data(cfg, out);
      std::cout << "wrote " << s.train << " train / " << s.val << " val sequences to " << out << "\n";
    } else if (*train) {
      const fs::path data = data_dir.empty() ? out / "data" : fs::path(data_dir);
      std::optional<fs::path> s1;
      if (!stage1_path.empty()) s1 = stage1_path;
      TrainHooks hooks;
      hooks.on_epoch = [](int epoch, double tr, double va) {
        std::cout << "epoch " << epoch << " train " << tr << " val " << va << "\n";
      };
      const auto s = cmd_train(cfg, stage, data, out, s1, hooks);
      std::cout << "checkpoint " << s.checkpoint.string() << "\n";
    } else if (*samp) {
      const auto files = cmd_sample(cfg, ckpt1, ckpt2, input, out, csv);
      std::cout << "wrote " << files.size() << " candidates to " << out << "\n";
    } else if (*rank) {
      const auto r = cmd_rank(cfg, expand(cand_items), k > 0 ? k : cfg.selection.top_k, out / "rank.json");
      std::cout << "top: " << r["top"].dump() << "\n";
    } else if (*eval) {
      const auto r = cmd_evaluate(cfg, expand(gen_items), expand(gt_items), out);
      std::cout << read_text(out / "evaluation.txt");
      if (r["failed"].get<int>() > 0) std::cout << r["failed"].get<int>() << " pair(s) failed\n";
    } else if (*all) {
      cmd_run_all(cfg, out, [](const std::string& s) { std::cout << s << "\n"; });
      std::cout << read_text(out / "evaluation.txt");
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
