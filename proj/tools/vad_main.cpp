// Command-line front end: dataset generation, training, evaluation, mode and
// branch ablations, and the attention diagnostics, all on top of libvad.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "vad/diag.hpp"
#include "vad/harness.hpp"
#include "vad/model.hpp"
#include "vad/synth.hpp"
#include "vad/train.hpp"

namespace fs = std::filesystem;
using Scalar = float;

namespace {

struct GenArgs {
  std::string out;
  std::size_t units = 200;
  vad::SynthConfig cfg;
};

struct TrainArgs {
  std::string data;
  std::string out;
  std::string log;
  vad::ModelConfig model;
  vad::TrainConfig tc;
  std::string mode = "cycle";
  std::uint64_t init_seed = 1;
  bool no_local = false;
  bool no_global = false;
};

struct EvalArgs {
  std::string data;
  std::string model;
  std::string report;
  vad::EvalOptions opt;
};

struct AblateArgs {
  std::string data;
  std::size_t seeds = 3;
  vad::TrainConfig tc;
};

struct DiagArgs {
  std::string data;
  std::string model;
  std::size_t index = 0;
  std::string out;
};

void add_synth_options(CLI::App& app, vad::SynthConfig& cfg) {
  app.add_option("--grid", cfg.grid_h, "square scene grid size")->check(CLI::PositiveNumber);
  app.add_option("--frames", cfg.frames, "frames per clip");
  app.add_option("--raw-channels", cfg.raw_channels, "input feature channels");
  app.add_option("--tokens", cfg.n_tokens, "context token vocabulary size");
  app.add_option("--token-presence", cfg.token_presence_prob, "per-token appearance probability");
  app.add_option("--max-actors", cfg.max_actors, "actors per scene, upper bound");
  app.add_option("--noise", cfg.noise_std, "background noise level");
  app.add_option("--seed", cfg.seed, "generator seed");
  app.add_flag("--cross-clip", cfg.cross_clip, "group clips into videos with a persistent cue");
  app.add_option("--clips-per-video", cfg.clips_per_video, "clips per video in cross-clip mode");
}

void add_train_options(CLI::App& app, TrainArgs& a) {
  app.add_option("--steps", a.tc.steps, "optimizer steps");
  app.add_option("--batch", a.tc.batch_clips, "clips per batch");
  app.add_option("--lr", a.tc.optim.lr, "base learning rate");
  app.add_option("--warmup", a.tc.optim.warmup_steps, "linear warmup steps");
  app.add_option("--milestones", a.tc.optim.milestones, "steps after which lr decays");
  app.add_option("--seed", a.tc.seed, "batch/dropout seed");
  app.add_option("--init-seed", a.init_seed, "parameter init seed");
  app.add_flag("--bank-training", a.tc.bank_training, "refresh a neighbor bank each epoch");
  app.add_option("--mode", a.mode, "relation mode: cycle | c2a | a2c");
  app.add_flag("--no-local", a.no_local, "disable the per-frame branch");
  app.add_flag("--no-global", a.no_global, "disable the summary branch");
  app.add_option("--layers", a.model.cycle.n_layers, "attention layers per stack");
  app.add_option("--channels", a.model.cycle.channels, "working feature width");
  app.add_option("--attn-dim", a.model.cycle.attn_dim, "attention projection width");
  app.add_option("--depth", a.model.interact_depth, "instance refinement depth");
  app.add_option("--roi", a.model.roi_size, "actor crop resolution");
}

vad::ModelConfig resolve_model_config(const TrainArgs& a, const vad::SynthConfig& data_cfg) {
  vad::ModelConfig m = a.model;
  m.raw_channels = data_cfg.raw_channels;
  m.frames = data_cfg.frames;
  m.n_labels = vad::kSynthLabels;
  m.cycle.mode = vad::parse_interaction_mode(a.mode);
  m.cycle.use_local = !a.no_local;
  m.cycle.use_global = !a.no_global;
  vad::validate_model_config(m);
  return m;
}

void print_report(const vad::EvalReport& rep) {
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "instances: " << rep.n_instances << "\n";
  std::cout << "mAP: " << rep.map;
  if (rep.skipped_classes > 0) std::cout << "  (skipped " << rep.skipped_classes << " empty classes)";
  std::cout << "\n";
  for (const auto& [cat, ap] : rep.per_category) std::cout << "  " << cat << ": " << ap << "\n";
  for (std::size_t c = 0; c < rep.per_class.size(); ++c) {
    std::cout << "  class " << c << " (" << rep.class_category[c] << "): ";
    if (rep.per_class[c].defined)
      std::cout << rep.per_class[c].ap << "  [" << rep.per_class[c].positives << " pos]\n";
    else
      std::cout << "no positives\n";
  }
}

int run_gen(const GenArgs& a) {
  auto ds = vad::generate_dataset<Scalar>(a.cfg, a.units);
  vad::save_dataset(ds, a.out);
  std::cout << "wrote " << ds.scenes.size() << " clips (" << ds.train_indices.size()
            << " train / " << ds.val_indices.size() << " val) to " << a.out << "\n";
  return 0;
}

int run_train(const TrainArgs& a) {
  auto ds = vad::load_dataset<Scalar>(a.data);
  vad::ModelConfig mc = resolve_model_config(a, ds.cfg);
  vad::Rng init(a.init_seed);
  vad::HeadModel<Scalar> model(mc, init);
  std::cout << "model: " << model.parameter_count() << " parameters, mode "
            << vad::to_string(mc.cycle.mode) << ", " << ds.train_indices.size()
            << " training clips\n";

  std::ofstream log_file;
  std::ostream* log = nullptr;
  if (!a.log.empty()) {
    log_file.open(a.log);
    if (!log_file) throw vad::ConfigError("cannot open log file " + a.log);
    log = &log_file;
  }
  vad::MemoryBank<Scalar> bank(mc.cycle.channels);
  vad::MemoryBank<Scalar>* bank_ptr = a.tc.bank_training ? &bank : nullptr;
  auto res = vad::train_model(model, ds, a.tc, bank_ptr, log);
  std::cout << "final loss " << res.final_loss << " after " << res.steps << " steps\n";
  if (!a.out.empty()) {
    model.save(a.out);
    if (bank_ptr) bank.save(fs::path(a.out) / "bank");
    std::cout << "saved checkpoint to " << a.out << "\n";
  }
  return 0;
}

int run_eval(const EvalArgs& a) {
  auto ds = vad::load_dataset<Scalar>(a.data);
  auto model = vad::HeadModel<Scalar>::load(a.model);
  auto rep = vad::evaluate_model(model, ds, ds.val_indices, a.opt);
  print_report(rep);
  if (!a.report.empty()) {
    vad::write_report_json(rep, a.report);
    std::cout << "report written to " << a.report << "\n";
  }
  return 0;
}

int run_ablate(const AblateArgs& a) {
  auto ds = vad::load_dataset<Scalar>(a.data);
  struct Variant {
    const char* name;
    vad::InteractionMode mode;
    bool local, global;
  };
  const Variant variants[] = {
      {"cycle", vad::InteractionMode::Cycle, true, true},
      {"c2a", vad::InteractionMode::C2A, true, true},
      {"a2c", vad::InteractionMode::A2C, true, true},
      {"cycle/local-only", vad::InteractionMode::Cycle, true, false},
      {"cycle/global-only", vad::InteractionMode::Cycle, false, true},
  };
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& v : variants) {
    double sum = 0.0;
    for (std::size_t s = 0; s < a.seeds; ++s) {
      vad::ModelConfig mc;
      mc.raw_channels = ds.cfg.raw_channels;
      mc.frames = ds.cfg.frames;
      mc.cycle.mode = v.mode;
      mc.cycle.use_local = v.local;
      mc.cycle.use_global = v.global;
      vad::Rng init(100 + s);
      vad::HeadModel<Scalar> model(mc, init);
      vad::TrainConfig tc = a.tc;
      tc.seed = a.tc.seed + s;
      vad::train_model(model, ds, tc);
      vad::EvalOptions opt;
      auto rep = vad::evaluate_model(model, ds, ds.val_indices, opt);
      std::cout << v.name << " seed " << s << ": mAP " << rep.map << "\n";
      sum += rep.map;
    }
    std::cout << v.name << " mean mAP: " << sum / static_cast<double>(a.seeds) << "\n";
  }
  return 0;
}

int run_similarity(const DiagArgs& a) {
  auto ds = vad::load_dataset<Scalar>(a.data);
  auto model = vad::HeadModel<Scalar>::load(a.model);
  if (a.index >= ds.scenes.size()) throw vad::ParameterError("clip index out of range");
  auto rep = vad::similarity_diagnostic(model, ds.scenes[a.index].clip);
  std::cout << std::fixed << std::setprecision(6);
  std::cout << "actors: " << rep.actors << "\n";
  for (std::size_t l = 0; l < rep.mean_cosine.size(); ++l)
    std::cout << "layer " << l << ": context cosine " << rep.mean_cosine[l] << "\n";
  for (std::size_t l = 0; l < rep.actor_cosine.size(); ++l)
    std::cout << "layer " << l << ": actor cosine " << rep.actor_cosine[l] << "\n";
  return 0;
}

int run_dump(const DiagArgs& a) {
  auto ds = vad::load_dataset<Scalar>(a.data);
  auto model = vad::HeadModel<Scalar>::load(a.model);
  if (a.index >= ds.scenes.size()) throw vad::ParameterError("clip index out of range");
  if (a.out.empty()) {
    vad::dump_attention_csv(model, ds.scenes[a.index].clip, std::cout);
  } else {
    std::ofstream os(a.out);
    if (!os) throw vad::ConfigError("cannot open " + a.out);
    vad::dump_attention_csv(model, ds.scenes[a.index].clip, os);
    std::cout << "attention written to " << a.out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"actor-context relation head for video action detection"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--units", gen.units, "clips (or videos in cross-clip mode)");
  add_synth_options(*gen_cmd, gen.cfg);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  train_cmd->add_option("--data", train.data, "dataset directory")->required();
  train_cmd->add_option("--out", train.out, "checkpoint output directory");
  train_cmd->add_option("--log", train.log, "CSV loss log path");
  add_train_options(*train_cmd, train);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
  eval_cmd->add_option("--data", eval.data, "dataset directory")->required();
  eval_cmd->add_option("--model", eval.model, "checkpoint directory")->required();
  eval_cmd->add_option("--report", eval.report, "JSON report output path");
  eval_cmd->add_flag("--two-pass-bank", eval.opt.two_pass_bank,
                     "fill a neighbor bank first, then score with it");
  eval_cmd->add_flag("--jitter", eval.opt.detector_jitter, "perturb boxes like a detector");
  eval_cmd->add_option("--conf-threshold", eval.opt.conf_threshold,
                       "drop jittered boxes below this confidence");
  eval_cmd->add_option("--eval-seed", eval.opt.seed, "jitter seed");

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "compare relation modes and branches");
  ablate_cmd->add_option("--data", ablate.data, "dataset directory")->required();
  ablate_cmd->add_option("--seeds", ablate.seeds, "independent runs per variant");
  ablate_cmd->add_option("--steps", ablate.tc.steps, "optimizer steps per run");
  ablate_cmd->add_option("--batch", ablate.tc.batch_clips, "clips per batch");
  ablate_cmd->add_option("--lr", ablate.tc.optim.lr, "base learning rate");
  ablate_cmd->add_option("--seed", ablate.tc.seed, "base batch/dropout seed");

  DiagArgs sim;
  auto* sim_cmd = app.add_subcommand("diagnose-similarity",
                                     "per-layer cosine similarity of the summary branch");
  sim_cmd->add_option("--data", sim.data, "dataset directory")->required();
  sim_cmd->add_option("--model", sim.model, "checkpoint directory")->required();
  sim_cmd->add_option("--index", sim.index, "clip index into the dataset");

  DiagArgs dump;
  auto* dump_cmd = app.add_subcommand("dump-attention", "write one clip's attention as CSV");
  dump_cmd->add_option("--data", dump.data, "dataset directory")->required();
  dump_cmd->add_option("--model", dump.model, "checkpoint directory")->required();
  dump_cmd->add_option("--index", dump.index, "clip index into the dataset");
  dump_cmd->add_option("--out", dump.out, "CSV output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) return run_gen(gen);
    if (train_cmd->parsed()) return run_train(train);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (ablate_cmd->parsed()) return run_ablate(ablate);
    if (sim_cmd->parsed()) return run_similarity(sim);
    if (dump_cmd->parsed()) return run_dump(dump);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
