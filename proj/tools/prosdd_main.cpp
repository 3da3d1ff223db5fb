// prosdd: corpus generation, target extraction, two-stage training,
// evaluation, and gradient verification in one binary.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "prosdd/config.hpp"
#include "prosdd/eval.hpp"
#include "prosdd/gradcheck.hpp"
#include "prosdd/pipeline.hpp"
#include "prosdd/trainer.hpp"

namespace fs = std::filesystem;
using namespace prosdd;

namespace {

void apply_thread_cap() {
  if (const char* env = std::getenv("PROSDD_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) Eigen::setNbThreads(n);
  }
}

RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides) {
  RunConfig cfg = config_path.empty() ? desk_run_config() : load_run_config(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw DataError("override must be key=value: " + kv);
    apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

int run_gen_corpus(const RunConfig& cfg_in, const std::string& out,
                   std::optional<std::uint64_t> seed, std::optional<int> speakers) {
  RunConfig cfg = cfg_in;
  if (seed) cfg.corpus_seed = *seed;
  if (speakers) cfg.corpus.n_speakers = *speakers;
  cfg.corpus.validate();
  const Manifest m = gen_corpus(cfg.corpus, cfg.corpus_seed, out);
  save_run_config(cfg, fs::path(out) / "run_config.json");
  std::printf("wrote %zu utterances to %s\n", m.entries.size(), out.c_str());
  return 0;
}

int run_extract_targets(const RunConfig& cfg, const std::string& corpus_dir,
                        const std::string& out) {
  const Manifest m = read_manifest(fs::path(corpus_dir) / "manifest.tsv");
  extract_targets(m, corpus_dir, out, cfg.speaker, cfg.prosody);
  save_run_config(cfg, fs::path(out) / "run_config.json");
  std::printf("wrote %zu target caches to %s\n", m.entries.size(), out.c_str());
  return 0;
}

int run_train(const RunConfig& cfg_in, int stage, const std::string& mode_name,
              const std::string& corpus_dir, const std::string& target_dir,
              const std::string& init_path, const std::string& out,
              std::optional<std::uint64_t> seed) {
  RunConfig cfg = cfg_in;
  if (seed) cfg.train_seed = *seed;
  const Manifest m = read_manifest(fs::path(corpus_dir) / "manifest.tsv");
  m.validate();
  const TrainConfig tc = cfg.to_train_config();
  fs::create_directories(out);
  save_run_config(cfg, fs::path(out) / "run_config.json");

  if (stage == 1) {
    Manifest stage1;
    stage1.entries = m.split(Split::stage1_real);
    const Dataset data = load_dataset(stage1, Split::stage1_real, corpus_dir, target_dir);
    const Stage1Result result = train_stage1(data, tc, cfg.train_seed, out);
    // selection by training loss; per-epoch checkpoints are already on disk
    std::vector<EpochRecord> history;
    for (size_t e = 0; e < result.epoch_mean_loss.size(); ++e) {
      history.push_back({int(e) + 1, result.epoch_mean_loss[e], 0.0});
    }
    const int sel = select_checkpoint(history, SelectionMode::train_loss);
    char name[32];
    std::snprintf(name, sizeof(name), "stage1_epoch%03d.psdm", sel);
    fs::copy_file(fs::path(out) / name, fs::path(out) / "stage1_selected.psdm",
                  fs::copy_options::overwrite_existing);
    std::printf("stage 1 done: selected epoch %d (train loss %.6f)\n", sel,
                history[size_t(sel) - 1].train_loss);
    return 0;
  }

  Stage2Mode mode;
  if (mode_name == "full") mode = Stage2Mode::full;
  else if (mode_name == "no_stage1") mode = Stage2Mode::no_stage1;
  else if (mode_name == "no_mp") mode = Stage2Mode::no_mp;
  else throw CLI::ValidationError("--mode", "expected full, no_stage1, or no_mp");

  std::optional<Model> init;
  if (!init_path.empty()) {
    if (mode == Stage2Mode::full) {
      init = load_checkpoint(init_path);
    } else {
      std::cerr << "warning: --init " << init_path << " ignored in mode " << mode_name
                << " (fresh init)\n";
    }
  } else if (mode == Stage2Mode::full) {
    throw DataError("--stage 2 --mode full requires --init with a Stage I checkpoint");
  }

  Manifest train_m, dev_m;
  train_m.entries = m.split(Split::stage2_train);
  dev_m.entries = m.split(Split::stage2_dev);
  const Dataset train = load_dataset(train_m, Split::stage2_train, corpus_dir, target_dir);
  const Dataset dev = load_dataset(dev_m, Split::stage2_dev, corpus_dir, target_dir);
  const Stage2Result result = train_stage2(train, dev, init, mode, tc, cfg.train_seed,
                                           SelectionMode::val_accuracy, out);
  std::printf("stage 2 done: selected epoch %d (dev accuracy %.4f)\n", result.selected_epoch,
              result.history[size_t(result.selected_epoch) - 1].dev_accuracy);
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& corpus_dir,
             const std::string& split_name, const std::string& out) {
  if (!fs::exists(checkpoint)) throw DataError("missing checkpoint: " + checkpoint);
  const Model model = load_checkpoint(checkpoint);
  const Manifest m = read_manifest(fs::path(corpus_dir) / "manifest.tsv");
  const Split split = split_from_string(split_name);
  const auto scores = score_trials(model, m, split, corpus_dir);
  if (!out.empty()) {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_scores(scores, out);
  }
  std::printf("EER %.2f%%\n", 100.0 * compute_eer(scores));
  for (const auto& [attack, eer] : per_attack_report(scores)) {
    std::printf("EER[%s] %.2f%%\n", to_string(attack).c_str(), 100.0 * eer);
  }
  return 0;
}

int run_gradcheck() {
  const GradCheckSummary summary = run_gradcheck_harness();
  std::printf("stage1 loss: max relative error %.3e over %d coordinates\n",
              summary.stage1.max_rel_error, summary.stage1.coords_checked);
  std::printf("stage2 joint loss: max relative error %.3e over %d coordinates\n",
              summary.stage2_joint.max_rel_error, summary.stage2_joint.coords_checked);
  if (!summary.passed()) {
    throw VerificationError("gradient check failed (tolerance 1e-4)");
  }
  std::printf("gradcheck passed\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();

  CLI::App app{"ProSDD: prosody-aware speech deepfake detection"};
  app.require_subcommand(1);
  app.fallthrough();  // allow --config / --set after the subcommand name
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "override a config value, e.g. --set optimizer.base_lr=2e-6");

  auto* gen = app.add_subcommand("gen-corpus", "synthesize the corpus and manifest");
  std::string gen_out;
  std::optional<std::uint64_t> gen_seed;
  std::optional<int> gen_speakers;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "corpus seed");
  gen->add_option("--speakers", gen_speakers, "number of speakers");

  auto* ext = app.add_subcommand("extract-targets", "build PSDT target caches");
  std::string ext_corpus, ext_out;
  ext->add_option("--corpus", ext_corpus, "corpus directory")->required();
  ext->add_option("--out", ext_out, "target cache directory")->required();

  auto* train = app.add_subcommand("train", "run one training stage");
  int train_stage = 0;
  std::string train_mode = "full", train_corpus, train_targets, train_init, train_out;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--stage", train_stage, "1 or 2")->required()->check(CLI::Range(1, 2));
  train->add_option("--mode", train_mode, "stage 2 mode: full, no_stage1, no_mp");
  train->add_option("--corpus", train_corpus, "corpus directory")->required();
  train->add_option("--targets", train_targets, "target cache directory")->required();
  train->add_option("--init", train_init, "Stage I checkpoint for --stage 2 --mode full");
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--seed", train_seed, "train seed");

  auto* ev = app.add_subcommand("eval", "score a split and report EER");
  std::string ev_ckpt, ev_corpus, ev_split = "eval_seen", ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "PSDM checkpoint")->required();
  ev->add_option("--corpus", ev_corpus, "corpus directory")->required();
  ev->add_option("--split", ev_split, "manifest split to score");
  ev->add_option("--out", ev_out, "score file path");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");

  try {
    app.parse(argc, argv);
    const RunConfig cfg = resolve_config(config_path, overrides);
    if (gen->parsed()) return run_gen_corpus(cfg, gen_out, gen_seed, gen_speakers);
    if (ext->parsed()) return run_extract_targets(cfg, ext_corpus, ext_out);
    if (train->parsed())
      return run_train(cfg, train_stage, train_mode, train_corpus, train_targets, train_init,
                       train_out, train_seed);
    if (ev->parsed()) return run_eval(ev_ckpt, ev_corpus, ev_split, ev_out);
    if (gc->parsed()) return run_gradcheck();
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const VerificationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
