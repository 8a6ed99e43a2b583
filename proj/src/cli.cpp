#include "gaitbridge/cli.hpp"

#include <fstream>
#include <ostream>

#include <CLI11.hpp>

#include "gaitbridge/checkpoint.hpp"
#include "gaitbridge/config.hpp"
#include "gaitbridge/error.hpp"
#include "gaitbridge/metrics.hpp"
#include "gaitbridge/motion.hpp"
#include "gaitbridge/trainer.hpp"
#include "gaitbridge/trajectory.hpp"

namespace gaitbridge {

namespace fs = std::filesystem;

namespace {

struct GenDataArgs {
  std::string out;
  std::vector<std::string> presets{"walk", "run", "hop", "sway", "stand"};
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string config;
  std::string resume;
};

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  int sd = metrics::kDefaultSubsetSize;
  std::uint64_t seed = 0;
  std::string out;
};

struct RetargetArgs {
  std::string checkpoint;
  std::string clip;
  std::string out;
};

struct AblateArgs {
  std::string config;
  std::vector<std::string> modes{"full", "task_only", "r2h_only"};
  int sd = metrics::kDefaultSubsetSize;
  std::uint64_t seed = 0;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  std::vector<motion::Preset> presets;
  for (const std::string& name : a.presets) {
    try {
      presets.push_back(motion::preset_from_string(name));
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("--presets: ") + e.what());
    }
  }
  const auto clips = motion::generate_default_clips(presets, a.seed);
  const fs::path manifest = motion::write_dataset(a.out, clips);
  out << "wrote " << clips.size() << " clips and " << manifest.string() << "\n";
  return kExitOk;
}

int train_cmd(const TrainArgs& a, std::ostream& out) {
  const TrainConfig cfg = load_config(a.config);
  std::optional<fs::path> resume;
  if (!a.resume.empty()) resume = a.resume;
  const fs::path dir = train(cfg, resume);
  out << "run directory " << dir.string() << "\n";
  return kExitOk;
}

void write_eval(const fs::path& dir, const metrics::ReportRow& row, const std::vector<metrics::EvalRollout>& rollouts) {
  fs::create_directories(dir / "rollouts");
  for (const metrics::EvalRollout& r : rollouts) write_trajectory_csv(dir / "rollouts" / (r.clip + ".csv"), r.steps, false);
  metrics::write_report(dir, {row});
}

int eval_cmd(const EvalArgs& a, std::ostream& out) {
  const RunState rs = load_checkpoint(a.checkpoint);
  const metrics::PolicyBundle bundle = metrics::bundle_from_checkpoint(rs);
  const motion::MotionDataset data = motion::load_dataset(a.dataset);
  std::vector<metrics::EvalRollout> rollouts;
  const metrics::ReportRow row = metrics::eval_report(bundle, data, a.checkpoint, a.sd, a.seed, &rollouts);
  const fs::path dir = a.out.empty() ? fs::path(a.checkpoint).parent_path() / "eval" : fs::path(a.out);
  write_eval(dir, row, rollouts);
  out << "ACR " << row.acr << "  DIV " << row.div << "  RTR " << row.rtr << "  fall_rate " << row.fall_rate << "\n"
      << "report written to " << (dir / "report.csv").string() << "\n";
  return kExitOk;
}

int retarget_cmd(const RetargetArgs& a, std::ostream& out) {
  const RunState rs = load_checkpoint(a.checkpoint);
  const metrics::PolicyBundle bundle = metrics::bundle_from_checkpoint(rs);
  const motion::MotionClip clip = motion::load_clip(a.clip);
  const metrics::EvalRollout r = metrics::evaluate_clip(bundle, clip, true);
  write_trajectory_csv(a.out, r.steps, true);
  out << "wrote " << r.steps.size() << " steps" << (r.fell ? " (robot fell)" : "") << " to " << a.out << "\n";
  return kExitOk;
}

int ablate_cmd(const AblateArgs& a, std::ostream& out) {
  const TrainConfig base = load_config(a.config);
  std::vector<reward::RewardMode> modes;
  for (const std::string& m : a.modes) {
    try {
      modes.push_back(reward::mode_from_string(m));
    } catch (const ConfigError& e) {
      throw ConfigError("--modes: " + e.items().front());
    }
  }
  const motion::MotionDataset data = motion::load_dataset(base.dataset);
  const std::string manifest = motion::manifest_hash(base.dataset);
  std::vector<metrics::ReportRow> rows;
  for (reward::RewardMode mode : modes) {
    TrainConfig cfg = base;
    cfg.mode = mode;
    cfg.output_dir = (fs::path(base.output_dir) / reward::to_string(mode)).string();
    out << "training " << reward::to_string(mode) << " into " << cfg.output_dir << "\n";
    const fs::path dir = train(cfg);
    if (motion::manifest_hash(cfg.dataset) != manifest)
      throw std::runtime_error("dataset manifest changed during the ablation sweep");
    std::ofstream(dir / "events.log", std::ios::app) << "dataset manifest " << manifest << "\n";

    const fs::path ckpt = dir / "final.ckpt";
    const metrics::PolicyBundle bundle = metrics::bundle_from_checkpoint(load_checkpoint(ckpt));
    std::vector<metrics::EvalRollout> rollouts;
    rows.push_back(metrics::eval_report(bundle, data, ckpt.string(), a.sd, a.seed, &rollouts));
    write_eval(dir / "eval", rows.back(), rollouts);
  }
  metrics::write_report(base.output_dir, rows);
  std::ifstream txt(fs::path(base.output_dir) / "report.txt");
  out << txt.rdbuf();
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Planar human-to-quadruped motion retargeting via correspondence-rewarded RL", "gaitbridge"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the procedural human motion dataset");
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_option("--presets", gen.presets, "Comma-separated presets (walk, run, hop, sway, stand)")
      ->delimiter(',')
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "Train a policy from a JSON config");
  train_sub->add_option("--config", tr.config, "Training config (JSON)")->required();
  train_sub->add_option("--resume", tr.resume, "Checkpoint to resume from")->capture_default_str();

  EvalArgs ev;
  auto* eval_sub = app.add_subcommand("eval", "Evaluate a checkpoint on every clip of a dataset");
  eval_sub->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_sub->add_option("--dataset", ev.dataset, "Dataset directory")->required();
  eval_sub->add_option("--sd", ev.sd, "DIV subset size S_d")->capture_default_str()->check(CLI::PositiveNumber);
  eval_sub->add_option("--seed", ev.seed, "Metric seed")->capture_default_str();
  eval_sub->add_option("--out", ev.out, "Report directory (default: <checkpoint dir>/eval)")->capture_default_str();

  RetargetArgs rt;
  auto* retarget_sub = app.add_subcommand("retarget", "Play one clip through a trained policy and export the motion");
  retarget_sub->add_option("--checkpoint", rt.checkpoint, "Checkpoint file")->required();
  retarget_sub->add_option("--clip", rt.clip, "Clip file (JSON)")->required();
  retarget_sub->add_option("--out", rt.out, "Output trajectory CSV")->required();

  AblateArgs ab;
  auto* ablate_sub = app.add_subcommand("ablate", "Train and evaluate one run per reward mode");
  ablate_sub->add_option("--config", ab.config, "Base training config (JSON)")->required();
  ablate_sub->add_option("--modes", ab.modes, "Comma-separated modes")->delimiter(',')->capture_default_str();
  ablate_sub->add_option("--sd", ab.sd, "DIV subset size S_d")->capture_default_str()->check(CLI::PositiveNumber);
  ablate_sub->add_option("--seed", ab.seed, "Metric seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return gen_data(gen, out);
    if (*train_sub) return train_cmd(tr, out);
    if (*eval_sub) return eval_cmd(ev, out);
    if (*retarget_sub) return retarget_cmd(rt, out);
    if (*ablate_sub) return ablate_cmd(ab, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace gaitbridge
