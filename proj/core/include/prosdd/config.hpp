#pragma once

#include <filesystem>

#include "prosdd/corpus.hpp"
#include "prosdd/prosody.hpp"
#include "prosdd/speaker.hpp"
#include "prosdd/trainer.hpp"

namespace prosdd {

// Everything a run needs, loadable from a JSON config file with dotted
// command-line overrides. Unknown keys are rejected; every run persists
// its fully resolved config next to its outputs.
struct RunConfig {
  CorpusConfig corpus;
  ModelConfig model;
  OptimizerConfig opt;
  MaskingConfig masking;
  ObjectiveConfig objective;
  LossWeights weights;
  ProsodyConfig prosody;
  SpeakerEncoderConfig speaker;
  std::string augmentation = "none";  // placeholder hook, only "none" accepted
  double mask_fraction_stage1 = 0.25;
  double mask_fraction_stage2 = 0.15;
  std::uint64_t corpus_seed = 1;
  std::uint64_t train_seed = 1;
  std::uint64_t init_seed = 1;

  TrainConfig to_train_config() const;
};

RunConfig default_run_config();

// Desk-scale preset: small epochs/batch so the full two-stage pipeline
// runs in minutes on one CPU core.
RunConfig desk_run_config();

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

// key is dotted, e.g. "optimizer.base_lr" or "corpus.speakers"
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace prosdd
