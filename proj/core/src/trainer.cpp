#include "prosdd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "prosdd/audio_io.hpp"

namespace prosdd {

void sgd_step(Model& model, const OptimizerConfig& opt) {
  double scale = 1.0;
  if (opt.max_grad_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : model.params()) sq += p.grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > opt.max_grad_norm) scale = opt.max_grad_norm / norm;
  }
  for (auto& p : model.params()) {
    const double lr = opt.lr_for(p.group);
    p.value = p.value * (1.0 - lr * opt.weight_decay) - (lr * scale) * p.grad;
  }
}

Dataset load_dataset(const Manifest& manifest, Split split,
                     const std::filesystem::path& audio_dir,
                     const std::filesystem::path& target_dir) {
  Dataset data;
  for (const auto& e : manifest.split(split)) {
    DatasetItem item;
    item.entry = e;
    item.samples = read_f32(audio_dir / (e.utterance_id + ".f32"));
    if (int(item.samples.size()) != kUtteranceSamples) {
      throw DataError("utterance " + e.utterance_id + " has wrong length");
    }
    item.targets = read_cache(target_dir / (e.utterance_id + ".psdt"));
    data.items.push_back(std::move(item));
  }
  return data;
}

std::vector<std::vector<int>> make_batches(const Dataset& data, int batch_size, Rng& rng) {
  if (batch_size < 2) throw DataError("batch_size must be >= 2");
  // group by speaker, preserving manifest order of first appearance
  std::vector<std::string> speaker_order;
  std::map<std::string, std::vector<int>> groups;
  for (int i = 0; i < int(data.items.size()); ++i) {
    const auto& spk = data.items[i].entry.speaker_id;
    if (!groups.count(spk)) speaker_order.push_back(spk);
    groups[spk].push_back(i);
  }
  for (auto& spk : speaker_order) {
    auto& g = groups[spk];
    for (int i = int(g.size()) - 1; i > 0; --i) std::swap(g[i], g[rng.below(i + 1)]);
  }
  // round-robin interleave
  std::vector<int> order;
  std::vector<size_t> cursor(speaker_order.size(), 0);
  bool any = true;
  while (any) {
    any = false;
    for (size_t s = 0; s < speaker_order.size(); ++s) {
      auto& g = groups[speaker_order[s]];
      if (cursor[s] < g.size()) {
        order.push_back(g[cursor[s]++]);
        any = true;
      }
    }
  }
  std::vector<std::vector<int>> batches;
  for (size_t i = 0; i < order.size(); i += batch_size) {
    batches.emplace_back(order.begin() + i,
                         order.begin() + std::min(order.size(), i + batch_size));
  }
  // a tail batch with a single speaker merges backward
  auto distinct_speakers = [&](const std::vector<int>& b) {
    std::set<std::string> s;
    for (int i : b) s.insert(data.items[i].entry.speaker_id);
    return s.size();
  };
  if (!batches.empty() && distinct_speakers(batches.back()) < 2) {
    if (batches.size() >= 2) {
      auto tail = batches.back();
      batches.pop_back();
      batches.back().insert(batches.back().end(), tail.begin(), tail.end());
    } else {
      throw DataError("cannot form a batch with >= 2 speakers");
    }
  }
  return batches;
}

Vec inverse_frequency_class_weights(const Dataset& train) {
  double n_bona = 0, n_spoof = 0;
  for (const auto& it : train.items) {
    (it.entry.label == Label::bonafide ? n_bona : n_spoof) += 1.0;
  }
  if (n_bona == 0 || n_spoof == 0) return Vec::Ones(2);
  const double n = n_bona + n_spoof;
  Vec w(2);
  w[0] = n / (2.0 * n_bona);
  w[1] = n / (2.0 * n_spoof);
  return w;
}

namespace {

int label_index(Label l) { return l == Label::bonafide ? 0 : 1; }

std::vector<BatchTargets> batch_targets_view(const Dataset& data, const std::vector<int>& batch) {
  std::vector<BatchTargets> view;
  view.reserve(batch.size());
  for (int i : batch) {
    view.push_back({&data.items[i].targets, data.items[i].entry.speaker_id});
  }
  return view;
}

void require_two_speakers(const Dataset& data, const std::vector<int>& batch) {
  std::set<std::string> speakers;
  for (int i : batch) speakers.insert(data.items[i].entry.speaker_id);
  if (speakers.size() < 2) throw DataError("inter-speaker negatives unavailable: single-speaker batch");
}

// Masked pass for one utterance: InfoNCE over masked frames, gradients
// scaled by `grad_scale`, accumulated into model grads. Returns the
// per-utterance mean masked loss and the gradient w.r.t. the conv latents.
double masked_pass(Model& model, const DatasetItem& item, int index_in_batch,
                   const std::vector<BatchTargets>& batch_view, const Mat& z,
                   ForwardCache& cache, double mask_fraction, double tau, int K,
                   double grad_scale, const MaskingConfig& mcfg, Rng& rng, Mat* d_z_out,
                   int* masked_count) {
  const int T = int(z.rows());
  MaskPlan plan = sample_spans(T, mcfg.span_length, mask_fraction, rng,
                               mcfg.probability_is_fraction);
  *masked_count = int(plan.masked.size());
  if (plan.masked.empty()) {
    d_z_out->setZero(z.rows(), z.cols());
    return 0.0;
  }
  const Mat z_masked = apply_mask(z, plan, model.mask_vector());
  const Mat h = model.contextualize(z_masked, cache, true, &rng);
  const Mat y = model.project(h);

  Mat d_y = Mat::Zero(y.rows(), y.cols());
  double loss = 0.0;
  for (int t : plan.masked) {
    const NegativeSet neg = sample_negatives(index_in_batch, t, batch_view, K, rng);
    Vec d_pred;
    loss += infonce_loss(y.row(t).transpose(), item.targets.rows.row(t).transpose(), neg.vectors,
                         tau, &d_pred);
    d_y.row(t) = d_pred.transpose();
  }
  const double inv_n = 1.0 / double(plan.masked.size());
  loss *= inv_n;
  d_y *= inv_n * grad_scale;

  Mat d_h = model.project_backward(d_y, h);
  Mat d_zm = model.contextualize_backward(d_h, cache);
  // masked rows feed the shared mask embedding, not the conv stack
  auto& mask_grad = model.param("mask_vector").grad;
  for (int t : plan.masked) {
    mask_grad.row(0) += d_zm.row(t);
    d_zm.row(t).setZero();
  }
  *d_z_out = std::move(d_zm);
  return loss;
}

}  // namespace

double stage1_step(Model& model, const Dataset& data, const std::vector<int>& batch,
                   const TrainConfig& cfg, Rng& rng) {
  require_two_speakers(data, batch);
  model.zero_grad();
  const auto view = batch_targets_view(data, batch);
  const double inv_b = 1.0 / double(batch.size());
  double batch_loss = 0.0;
  for (size_t bi = 0; bi < batch.size(); ++bi) {
    const auto& item = data.items[batch[bi]];
    ForwardCache cache;
    const Mat z = model.encode_latents(item.samples, cache);
    Mat d_z;
    int masked_count = 0;
    batch_loss += masked_pass(model, item, int(bi), view, z, cache, cfg.mask_fraction_stage1,
                              cfg.objective.tau_stage1, cfg.objective.K, inv_b, cfg.masking, rng,
                              &d_z, &masked_count);
    if (masked_count > 0) model.encode_backward(d_z, cache);
  }
  sgd_step(model, cfg.opt);
  return batch_loss * inv_b;
}

StageIIStepReport stage2_step(Model& model, const Dataset& data, const std::vector<int>& batch,
                              const TrainConfig& cfg, double beta, Rng& rng) {
  require_two_speakers(data, batch);
  model.zero_grad();
  const auto view = batch_targets_view(data, batch);
  const double inv_b = 1.0 / double(batch.size());
  const Vec& cw = cfg.weights.class_weights;

  double sum_w = 0.0;
  for (int i : batch) sum_w += cw[label_index(data.items[i].entry.label)];

  StageIIStepReport report;
  for (size_t bi = 0; bi < batch.size(); ++bi) {
    const auto& item = data.items[batch[bi]];
    ForwardCache conv_cache;
    const Mat z = model.encode_latents(item.samples, conv_cache);
    Mat d_z_total = Mat::Zero(z.rows(), z.cols());
    bool have_grad = false;

    const bool run_ssl =
        beta > 0.0 &&
        (!cfg.objective.ssl_on_bonafide_only || item.entry.label == Label::bonafide);
    if (run_ssl) {
      ForwardCache masked_cache;
      Mat d_z;
      int masked_count = 0;
      report.l_ssl += masked_pass(model, item, int(bi), view, z, masked_cache,
                                  cfg.mask_fraction_stage2, cfg.objective.tau_stage2,
                                  cfg.objective.K, beta * inv_b, cfg.masking, rng, &d_z,
                                  &masked_count);
      report.masked_frame_count += masked_count;
      if (masked_count > 0) {
        d_z_total += d_z;
        have_grad = true;
      }
    }

    // classification pass on the unmasked latents
    ForwardCache cls_cache;
    const Mat h = model.contextualize(z, cls_cache, true, &rng);
    const Vec logits = model.classify(h, cls_cache, true, &rng);
    model.observe_pool(cls_cache);
    const int label = label_index(item.entry.label);
    Vec d_logits;
    report.l_cls += weighted_cross_entropy(logits, label, cw, &d_logits);
    d_logits *= cfg.weights.alpha / sum_w;
    const Mat d_h = model.classify_backward(d_logits, cls_cache);
    d_z_total += model.contextualize_backward(d_h, cls_cache);
    have_grad = true;

    if (have_grad) model.encode_backward(d_z_total, conv_cache);
  }
  report.l_ssl *= inv_b;
  report.l_cls /= sum_w;
  report.l_total = joint_loss(report.l_cls, report.l_ssl, cfg.weights.alpha, beta);
  sgd_step(model, cfg.opt);
  return report;
}

Stage1Result train_stage1(const Dataset& stage1_real, const TrainConfig& cfg, std::uint64_t seed,
                          const std::filesystem::path& out_dir) {
  for (const auto& it : stage1_real.items) {
    if (it.entry.label != Label::bonafide) {
      throw DataError("Stage I requires real speech only (found spoof utterance " +
                      it.entry.utterance_id + ")");
    }
  }
  if (stage1_real.items.empty()) throw DataError("empty Stage I split");

  Stage1Result result{Model(cfg.model, cfg.init_seed), {}, {}};
  Rng rng(seed);
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  for (int epoch = 1; epoch <= cfg.opt.epochs_stage1; ++epoch) {
    const auto batches = make_batches(stage1_real, cfg.opt.batch_size, rng);
    double epoch_loss = 0.0;
    int step = 0;
    for (const auto& batch : batches) {
      const double loss = stage1_step(result.model, stage1_real, batch, cfg, rng);
      epoch_loss += loss;
      result.log.push_back({epoch, ++step, loss, 0.0, loss});
    }
    result.epoch_mean_loss.push_back(epoch_loss / double(batches.size()));
    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "stage1_epoch%03d.psdm", epoch);
      save_checkpoint(result.model, out_dir / name);
    }
  }
  if (!out_dir.empty()) write_train_log(result.log, out_dir / "stage1_loss.tsv");
  return result;
}

int select_checkpoint(const std::vector<EpochRecord>& history, SelectionMode mode) {
  if (history.empty()) throw DataError("select_checkpoint: empty history");
  int best = 0;
  for (int i = 1; i < int(history.size()); ++i) {
    if (mode == SelectionMode::train_loss) {
      if (history[i].train_loss < history[best].train_loss) best = i;
    } else {
      if (history[i].dev_accuracy > history[best].dev_accuracy) best = i;
    }
  }
  return history[best].epoch;
}

namespace {

double dev_accuracy(const Model& model, const Dataset& dev) {
  if (dev.items.empty()) return 0.0;
  int correct = 0;
  for (const auto& it : dev.items) {
    ForwardCache cache;
    const Mat z = model.encode_latents(it.samples, cache);
    const Mat h = model.contextualize(z, cache, false, nullptr);
    const Vec logits = model.classify(h, cache, false, nullptr);
    const int pred = logits[0] >= logits[1] ? 0 : 1;
    if (pred == label_index(it.entry.label)) ++correct;
  }
  return double(correct) / double(dev.items.size());
}

}  // namespace

Stage2Result train_stage2(const Dataset& train, const Dataset& dev,
                          const std::optional<Model>& stage1_init, Stage2Mode mode,
                          const TrainConfig& cfg, std::uint64_t seed, SelectionMode selection,
                          const std::filesystem::path& out_dir) {
  if (train.items.empty()) throw DataError("empty Stage II train split");
  if (mode == Stage2Mode::full && !stage1_init.has_value()) {
    throw DataError("full mode requires a Stage I checkpoint");
  }

  TrainConfig local = cfg;
  local.weights.class_weights = inverse_frequency_class_weights(train);

  Model model = (mode == Stage2Mode::full) ? *stage1_init : Model(local.model, local.init_seed);

  Stage2Result result{std::move(model), {}, {}, 0};
  Rng rng(seed);
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  std::vector<std::vector<Mat>> snapshots;
  for (int epoch = 1; epoch <= local.opt.epochs_stage2; ++epoch) {
    const double beta =
        (mode == Stage2Mode::no_mp) ? 0.0 : local.weights.beta_for_epoch(epoch);
    const auto batches = make_batches(train, local.opt.batch_size, rng);
    double epoch_loss = 0.0;
    int step = 0;
    for (const auto& batch : batches) {
      const auto report = stage2_step(result.model, train, batch, local, beta, rng);
      epoch_loss += report.l_total;
      result.log.push_back({epoch, ++step, report.l_ssl, report.l_cls, report.l_total});
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / double(batches.size());
    rec.dev_accuracy = dev_accuracy(result.model, dev);
    result.history.push_back(rec);

    std::vector<Mat> snap;
    snap.reserve(result.model.params().size());
    for (const auto& p : result.model.params()) snap.push_back(p.value);
    snapshots.push_back(std::move(snap));
    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "stage2_epoch%03d.psdm", epoch);
      save_checkpoint(result.model, out_dir / name);
    }
  }

  result.selected_epoch = select_checkpoint(result.history, selection);
  const auto& snap = snapshots[result.selected_epoch - 1];
  for (size_t i = 0; i < result.model.params().size(); ++i) {
    result.model.params()[i].value = snap[i];
  }
  if (!out_dir.empty()) {
    save_checkpoint(result.model, out_dir / "stage2_selected.psdm");
    write_train_log(result.log, out_dir / "stage2_loss.tsv");
  }
  return result;
}

void write_train_log(const std::vector<TrainLogEntry>& log, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write train log: " + path.string());
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%d\t%d\t%.9g\t%.9g\t%.9g\n", e.epoch, e.step, e.l_ssl,
                  e.l_cls, e.l_total);
    f << buf;
  }
}

}  // namespace prosdd
