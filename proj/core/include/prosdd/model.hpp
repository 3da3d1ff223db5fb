#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "prosdd/common.hpp"
#include "prosdd/rng.hpp"

namespace prosdd {

// `stats` tensors are running normalization statistics: saved with the
// model but never touched by the optimizer or the gradient check
enum class ParamGroup { backbone, projection, classifier, stats };

struct ModelConfig {
  int hidden_dim = 64;  // 1024 at paper scale
  int n_layers = 2;
  int n_heads = 4;
  int ffn_dim = 0;  // 0 -> 4 * hidden_dim
  // product must be 320; large strides first so later (wider) layers run at
  // low frame rates, which keeps the encoder cheap on a single core
  std::vector<int> conv_strides = {10, 4, 4, 2, 1};
  int target_dim = kTargetDim;
  int n_classes = 2;
  double dropout_rate = 0.1;

  int ffn() const { return ffn_dim > 0 ? ffn_dim : 4 * hidden_dim; }
  int stride_product() const;
  void validate() const;
};

struct ParamTensor {
  std::string name;
  ParamGroup group;
  Mat value;
  Mat grad;
};

// Per-utterance activation cache for one forward pass; consumed by the
// matching backward call.
struct ForwardCache {
  // conv encoder: im2col input of each layer and pre-activation sign masks
  std::vector<Mat> conv_inputs;
  std::vector<Mat> conv_relu_mask;
  // transformer, per layer
  struct Layer {
    Mat x_in;        // residual stream input
    Mat u;           // ln1 output
    Vec ln1_inv_std;
    Mat q, k, v;     // full (T x H), head-partitioned by column blocks
    std::vector<Mat> attn;  // per-head softmax probs (T x T)
    Mat attn_out;    // concatenated head outputs before Wo
    Mat x_mid;       // after attention residual
    Mat w;           // ln2 output
    Vec ln2_inv_std;
    Mat f_pre;       // FFN hidden pre-ReLU
    Mat f_drop;      // FFN hidden post-ReLU-and-dropout
    Mat ffn_drop_mask;
  };
  std::vector<Layer> layers;
  Mat in_hat;        // layer-normalized latents (pre positional encodings)
  Vec in_inv_std;
  Mat trans_in;      // transformer input (normalized latents + positional encodings)
  Mat h_pre_ln;      // residual stream before the final layer norm
  Vec lnf_inv_std;
  Mat h;             // final contextual embeddings
  // classifier
  Vec pool;      // normalized [mean; std] pooled vector (2H)
  Vec pool_raw;  // pooled vector before running-stat normalization
  Vec pool_inv_std;
  Vec cls_colmean, cls_colstd;
  Vec cls_a1, cls_drop_mask, cls_relu;
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<ParamTensor>& params() { return params_; }
  const std::vector<ParamTensor>& params() const { return params_; }
  ParamTensor& param(const std::string& name);
  const ParamTensor& param(const std::string& name) const;
  void zero_grad();

  Vec mask_vector() const;

  // samples.size() must be a multiple of the conv stride product; 64000
  // yields 200 latent frames
  Mat encode_latents(const std::vector<float>& samples, ForwardCache& cache) const;
  // pre-norm transformer over the latent (or masked-latent) sequence;
  // dropout active only in train mode, drawn from `dropout_rng`
  Mat contextualize(const Mat& z, ForwardCache& cache, bool train_mode = false,
                    Rng* dropout_rng = nullptr) const;
  Mat project(const Mat& h) const;
  Vec classify(const Mat& h, ForwardCache& cache, bool train_mode = false,
               Rng* dropout_rng = nullptr) const;
  // fold the cached raw pooled vector into the running normalization stats;
  // called explicitly by the trainer after a classification forward pass so
  // that loss evaluations stay side-effect free
  void observe_pool(const ForwardCache& cache);

  // Backward passes accumulate into param grads and return the gradient
  // w.r.t. their input.
  Mat project_backward(const Mat& d_out, const Mat& h);
  Mat classify_backward(const Vec& d_logits, const ForwardCache& cache);
  Mat contextualize_backward(const Mat& d_h, const ForwardCache& cache);
  void encode_backward(const Mat& d_z, const ForwardCache& cache);

 private:
  ModelConfig cfg_;
  std::vector<ParamTensor> params_;
  std::unordered_map<std::string, int> index_;

  ParamTensor& add_param(const std::string& name, ParamGroup group, int rows, int cols);
  const Mat& positional(int T) const;
  mutable Mat pos_cache_;
};

// `PSDM` checkpoint: magic, version, config, named binary32 blobs with
// group tags.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

struct GradCheckReport {
  double max_rel_error = 0.0;
  int coords_checked = 0;
};

// Central finite differences (4th order, evaluated at epsilon and epsilon/10)
// on a sampled subset of coordinates per parameter group. `loss_fn` must
// recompute the loss from scratch and, when `with_grad`, leave analytic
// gradients in the model params.
GradCheckReport grad_check(Model& model, const std::function<double(bool with_grad)>& loss_fn,
                           double epsilon = 1e-4, int coords_per_group = 200,
                           std::uint64_t seed = 42);

}  // namespace prosdd
