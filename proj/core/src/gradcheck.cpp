#include "prosdd/gradcheck.hpp"

#include "prosdd/masking.hpp"
#include "prosdd/objective.hpp"
#include "prosdd/trainer.hpp"

namespace prosdd {

namespace {

constexpr int kTinyT = 20;
constexpr int kTinySamples = kTinyT * kFrameHop;  // 6400
constexpr int kTinyK = 10;

Dataset make_tiny_dataset() {
  Rng rng(2024);
  Dataset data;
  for (int i = 0; i < 2; ++i) {
    DatasetItem item;
    char spk[16];
    std::snprintf(spk, sizeof(spk), "spk%03d", i);
    item.entry = {std::string("utt") + std::to_string(i), spk,
                  i == 0 ? Label::bonafide : Label::spoof,
                  i == 0 ? AttackFamily::none : AttackFamily::A_flat_pitch, Split::stage2_train};
    item.samples.resize(kTinySamples);
    for (auto& s : item.samples) s = float(rng.uniform(-1.0, 1.0));

    Vec spk_emb(kSpeakerDim);
    for (int d = 0; d < kSpeakerDim; ++d) spk_emb[d] = rng.normal();
    spk_emb.normalize();
    item.targets.utterance_id = item.entry.utterance_id;
    item.targets.speaker_id = spk;
    item.targets.rows.resize(kTinyT, kTargetDim);
    for (int t = 0; t < kTinyT; ++t) {
      item.targets.rows.row(t).head(kSpeakerDim) = spk_emb.transpose();
      for (int d = kSpeakerDim; d < kTargetDim; ++d) item.targets.rows(t, d) = 0.5 * rng.normal();
    }
    data.items.push_back(std::move(item));
  }
  return data;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.model.hidden_dim = 16;
  cfg.model.n_layers = 1;
  cfg.model.n_heads = 2;
  cfg.model.dropout_rate = 0.1;
  cfg.masking.span_length = 4;
  cfg.objective.K = kTinyK;
  cfg.init_seed = 7;
  return cfg;
}

}  // namespace

GradCheckSummary run_gradcheck_harness(int coords_per_group) {
  const Dataset data = make_tiny_dataset();
  const TrainConfig cfg = tiny_config();
  std::vector<BatchTargets> view;
  for (const auto& it : data.items) view.push_back({&it.targets, it.entry.speaker_id});

  GradCheckSummary summary;

  // Stage I: masked InfoNCE only. The dropout rng is reseeded per
  // evaluation so the sampled masks/negatives/dropout are identical across
  // finite-difference probes.
  {
    Model model(cfg.model, cfg.init_seed);
    auto loss_fn = [&](bool) {
      Rng rng(777);
      double total = 0.0;
      const double inv_b = 1.0 / double(data.items.size());
      for (size_t i = 0; i < data.items.size(); ++i) {
        const auto& item = data.items[i];
        ForwardCache cache;
        const Mat z = model.encode_latents(item.samples, cache);
        MaskPlan plan = sample_spans(kTinyT, cfg.masking.span_length, 0.25, rng, true);
        if (plan.masked.empty()) continue;
        const Mat zm = apply_mask(z, plan, model.mask_vector());
        const Mat h = model.contextualize(zm, cache, true, &rng);
        const Mat y = model.project(h);
        Mat d_y = Mat::Zero(y.rows(), y.cols());
        double loss = 0.0;
        for (int t : plan.masked) {
          const NegativeSet neg = sample_negatives(int(i), t, view, cfg.objective.K, rng);
          Vec d_pred;
          loss += infonce_loss(y.row(t).transpose(), item.targets.rows.row(t).transpose(),
                               neg.vectors, cfg.objective.tau_stage1, &d_pred);
          d_y.row(t) = d_pred.transpose();
        }
        const double inv_n = 1.0 / double(plan.masked.size());
        total += loss * inv_n;
        d_y *= inv_n * inv_b;
        Mat d_h = model.project_backward(d_y, h);
        Mat d_zm = model.contextualize_backward(d_h, cache);
        auto& mg = model.param("mask_vector").grad;
        for (int t : plan.masked) {
          mg.row(0) += d_zm.row(t);
          d_zm.row(t).setZero();
        }
        model.encode_backward(d_zm, cache);
      }
      return total * inv_b;
    };
    summary.stage1 = grad_check(model, loss_fn, 1e-4, coords_per_group, 11);
  }

  // Stage II joint loss: masked pass + classification pass.
  {
    Model model(cfg.model, cfg.init_seed + 1);
    const double alpha = 1.0, beta = 0.2;
    const Vec cw = (Vec(2) << 1.3, 0.8).finished();
    auto loss_fn = [&](bool) {
      Rng rng(778);
      const double inv_b = 1.0 / double(data.items.size());
      double sum_w = 0.0;
      for (const auto& it : data.items) {
        sum_w += cw[it.entry.label == Label::bonafide ? 0 : 1];
      }
      double l_ssl = 0.0, l_cls = 0.0;
      for (size_t i = 0; i < data.items.size(); ++i) {
        const auto& item = data.items[i];
        ForwardCache conv_cache;
        const Mat z = model.encode_latents(item.samples, conv_cache);
        Mat d_z_total = Mat::Zero(z.rows(), z.cols());

        MaskPlan plan = sample_spans(kTinyT, cfg.masking.span_length, 0.15, rng, true);
        if (!plan.masked.empty()) {
          ForwardCache mc;
          const Mat zm = apply_mask(z, plan, model.mask_vector());
          const Mat h = model.contextualize(zm, mc, true, &rng);
          const Mat y = model.project(h);
          Mat d_y = Mat::Zero(y.rows(), y.cols());
          double loss = 0.0;
          for (int t : plan.masked) {
            const NegativeSet neg = sample_negatives(int(i), t, view, cfg.objective.K, rng);
            Vec d_pred;
            loss += infonce_loss(y.row(t).transpose(), item.targets.rows.row(t).transpose(),
                                 neg.vectors, cfg.objective.tau_stage2, &d_pred);
            d_y.row(t) = d_pred.transpose();
          }
          const double inv_n = 1.0 / double(plan.masked.size());
          l_ssl += loss * inv_n;
          d_y *= inv_n * beta * inv_b;
          Mat d_h = model.project_backward(d_y, h);
          Mat d_zm = model.contextualize_backward(d_h, mc);
          auto& mg = model.param("mask_vector").grad;
          for (int t : plan.masked) {
            mg.row(0) += d_zm.row(t);
            d_zm.row(t).setZero();
          }
          d_z_total += d_zm;
        }

        ForwardCache cc;
        const Mat h2 = model.contextualize(z, cc, true, &rng);
        const Vec logits = model.classify(h2, cc, true, &rng);
        const int label = item.entry.label == Label::bonafide ? 0 : 1;
        Vec d_logits;
        l_cls += weighted_cross_entropy(logits, label, cw, &d_logits);
        d_logits *= alpha / sum_w;
        const Mat d_h2 = model.classify_backward(d_logits, cc);
        d_z_total += model.contextualize_backward(d_h2, cc);
        model.encode_backward(d_z_total, conv_cache);
      }
      return joint_loss(l_cls / sum_w, l_ssl * inv_b, alpha, beta);
    };
    summary.stage2_joint = grad_check(model, loss_fn, 1e-4, coords_per_group, 13);
  }
  return summary;
}

}  // namespace prosdd
