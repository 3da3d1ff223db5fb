#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "prosdd/corpus.hpp"
#include "prosdd/masking.hpp"
#include "prosdd/model.hpp"
#include "prosdd/objective.hpp"

namespace prosdd {

struct OptimizerConfig {
  // paper-scale rates; the global multiplier rescales them for the small
  // from-scratch model while preserving the 1:100:10 ratios
  double base_lr = 1e-6;
  double ratio_backbone = 1.0;
  double ratio_projection = 100.0;
  double ratio_classifier = 10.0;
  double global_lr_multiplier = 100.0;
  double weight_decay = 1e-4;
  // global gradient-norm clip applied before the update; scales every group
  // uniformly so the layer-wise ratios are preserved; 0 disables
  double max_grad_norm = 1.0;
  int epochs_stage1 = 50;
  int epochs_stage2 = 50;
  int batch_size = 64;

  double lr_for(ParamGroup g) const {
    if (g == ParamGroup::stats) return 0.0;
    const double ratio = g == ParamGroup::backbone     ? ratio_backbone
                         : g == ParamGroup::projection ? ratio_projection
                                                       : ratio_classifier;
    return base_lr * ratio * global_lr_multiplier;
  }
};

struct TrainConfig {
  ModelConfig model;
  OptimizerConfig opt;
  MaskingConfig masking;
  ObjectiveConfig objective;
  LossWeights weights;
  double mask_fraction_stage1 = 0.25;
  double mask_fraction_stage2 = 0.15;
  std::uint64_t init_seed = 1;
};

// decoupled weight decay + per-group SGD step on accumulated gradients
void sgd_step(Model& model, const OptimizerConfig& opt);

struct DatasetItem {
  ManifestEntry entry;
  std::vector<float> samples;
  ProsodicTargetSequence targets;
};

struct Dataset {
  std::vector<DatasetItem> items;
};

Dataset load_dataset(const Manifest& manifest, Split split,
                     const std::filesystem::path& audio_dir,
                     const std::filesystem::path& target_dir);

// Round-robin speaker interleaving; every batch holds >= 2 distinct
// speakers (tail batches merge backward if needed).
std::vector<std::vector<int>> make_batches(const Dataset& data, int batch_size, Rng& rng);

Vec inverse_frequency_class_weights(const Dataset& train);

struct TrainLogEntry {
  int epoch = 0;
  int step = 0;
  double l_ssl = 0.0, l_cls = 0.0, l_total = 0.0;
};

struct StageIIStepReport {
  double l_ssl = 0.0, l_cls = 0.0, l_total = 0.0;
  int masked_frame_count = 0;
};

// One masked-prediction step on a bona fide batch (Stage I objective).
double stage1_step(Model& model, const Dataset& data, const std::vector<int>& batch,
                   const TrainConfig& cfg, Rng& rng);

// Two forward passes (masked prosodic + unmasked classification), one
// update. `beta` == 0 skips the masked pass entirely.
StageIIStepReport stage2_step(Model& model, const Dataset& data, const std::vector<int>& batch,
                              const TrainConfig& cfg, double beta, Rng& rng);

struct Stage1Result {
  Model model;
  std::vector<TrainLogEntry> log;
  std::vector<double> epoch_mean_loss;
};

Stage1Result train_stage1(const Dataset& stage1_real, const TrainConfig& cfg, std::uint64_t seed,
                          const std::filesystem::path& out_dir = {});

enum class Stage2Mode { full, no_stage1, no_mp };

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
};

struct Stage2Result {
  Model model;  // selected checkpoint
  std::vector<TrainLogEntry> log;
  std::vector<EpochRecord> history;
  int selected_epoch = 0;
};

enum class SelectionMode { train_loss, val_accuracy };

// argmin train loss or argmax dev accuracy; ties resolve to the earliest
// epoch; returns a 1-based epoch index
int select_checkpoint(const std::vector<EpochRecord>& history, SelectionMode mode);

Stage2Result train_stage2(const Dataset& train, const Dataset& dev,
                          const std::optional<Model>& stage1_init, Stage2Mode mode,
                          const TrainConfig& cfg, std::uint64_t seed,
                          SelectionMode selection = SelectionMode::val_accuracy,
                          const std::filesystem::path& out_dir = {});

void write_train_log(const std::vector<TrainLogEntry>& log, const std::filesystem::path& path);

}  // namespace prosdd
