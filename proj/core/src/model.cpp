#include "prosdd/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

namespace prosdd {

namespace {
constexpr double kLnEps = 1e-5;
}

int ModelConfig::stride_product() const {
  int p = 1;
  for (int s : conv_strides) p *= s;
  return p;
}

void ModelConfig::validate() const {
  if (stride_product() != kFrameHop) {
    throw DataError("conv_strides product must be 320, got " + std::to_string(stride_product()));
  }
  if (hidden_dim <= 0 || n_layers <= 0 || n_heads <= 0) throw DataError("bad model dims");
  if (hidden_dim % n_heads != 0) throw DataError("hidden_dim must be divisible by n_heads");
  if (target_dim != kTargetDim) throw DataError("target_dim must be 448");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw DataError("bad dropout rate");
}

ParamTensor& Model::add_param(const std::string& name, ParamGroup group, int rows, int cols) {
  index_[name] = int(params_.size());
  params_.push_back({name, group, Mat::Zero(rows, cols), Mat::Zero(rows, cols)});
  return params_.back();
}

Model::Model(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  const int H = cfg_.hidden_dim;
  const int F = cfg_.ffn();

  auto init_affine = [&](ParamTensor& w) {
    const double bound = 1.0 / std::sqrt(double(w.value.cols()));
    for (int i = 0; i < w.value.rows(); ++i)
      for (int j = 0; j < w.value.cols(); ++j) w.value(i, j) = rng.uniform(-bound, bound);
  };

  int c_in = 1;
  for (size_t l = 0; l < cfg_.conv_strides.size(); ++l) {
    const int k = cfg_.conv_strides[l];
    init_affine(add_param("conv" + std::to_string(l) + ".w", ParamGroup::backbone, H, c_in * k));
    add_param("conv" + std::to_string(l) + ".b", ParamGroup::backbone, 1, H);
    c_in = H;
  }

  auto& mask = add_param("mask_vector", ParamGroup::backbone, 1, H);
  for (int j = 0; j < H; ++j) mask.value(0, j) = rng.uniform(-0.1, 0.1);

  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add_param(p + "ln1.g", ParamGroup::backbone, 1, H).value.setOnes();
    add_param(p + "ln1.b", ParamGroup::backbone, 1, H);
    init_affine(add_param(p + "attn.wq", ParamGroup::backbone, H, H));
    add_param(p + "attn.bq", ParamGroup::backbone, 1, H);
    // keys carry no bias: a constant added to every key shifts each row of
    // attention scores uniformly, which softmax ignores
    init_affine(add_param(p + "attn.wk", ParamGroup::backbone, H, H));
    init_affine(add_param(p + "attn.wv", ParamGroup::backbone, H, H));
    add_param(p + "attn.bv", ParamGroup::backbone, 1, H);
    init_affine(add_param(p + "attn.wo", ParamGroup::backbone, H, H));
    add_param(p + "attn.bo", ParamGroup::backbone, 1, H);
    add_param(p + "ln2.g", ParamGroup::backbone, 1, H).value.setOnes();
    add_param(p + "ln2.b", ParamGroup::backbone, 1, H);
    init_affine(add_param(p + "ffn.w1", ParamGroup::backbone, F, H));
    add_param(p + "ffn.b1", ParamGroup::backbone, 1, F);
    init_affine(add_param(p + "ffn.w2", ParamGroup::backbone, H, F));
    add_param(p + "ffn.b2", ParamGroup::backbone, 1, H);
  }
  add_param("lnf.g", ParamGroup::backbone, 1, H).value.setOnes();
  add_param("lnf.b", ParamGroup::backbone, 1, H);

  init_affine(add_param("proj.w", ParamGroup::projection, cfg_.target_dim, H));
  add_param("proj.b", ParamGroup::projection, 1, cfg_.target_dim);

  init_affine(add_param("cls.w1", ParamGroup::classifier, H, 2 * H));
  add_param("cls.b1", ParamGroup::classifier, 1, H);
  init_affine(add_param("cls.w2", ParamGroup::classifier, cfg_.n_classes, H));
  add_param("cls.b2", ParamGroup::classifier, 1, cfg_.n_classes);

  // running normalization stats for the pooled classifier input; without a
  // dataset-level reference the pooled vectors are nearly identical across
  // utterances and the head cannot pick up the small class signal
  add_param("pool_stats.mu", ParamGroup::stats, 1, 2 * H);
  add_param("pool_stats.var", ParamGroup::stats, 1, 2 * H).value.setOnes();
}

ParamTensor& Model::param(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("no such parameter: " + name);
  return params_[it->second];
}

const ParamTensor& Model::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("no such parameter: " + name);
  return params_[it->second];
}

void Model::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

Vec Model::mask_vector() const { return param("mask_vector").value.row(0).transpose(); }

const Mat& Model::positional(int T) const {
  if (pos_cache_.rows() != T || pos_cache_.cols() != cfg_.hidden_dim) {
    const int H = cfg_.hidden_dim;
    pos_cache_.resize(T, H);
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < H / 2; ++i) {
        const double w = std::pow(10000.0, -2.0 * i / H);
        pos_cache_(t, 2 * i) = std::sin(t * w);
        pos_cache_(t, 2 * i + 1) = std::cos(t * w);
      }
    }
  }
  return pos_cache_;
}

Mat Model::encode_latents(const std::vector<float>& samples, ForwardCache& cache) const {
  const int stride = cfg_.stride_product();
  const int n = int(samples.size());
  if (n <= 0 || n % stride != 0) {
    throw DataError("encode_latents: input length must be a positive multiple of " +
                    std::to_string(stride) + ", got " + std::to_string(n));
  }
  cache.conv_inputs.clear();
  cache.conv_relu_mask.clear();

  Mat x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = samples[i];

  for (size_t l = 0; l < cfg_.conv_strides.size(); ++l) {
    const int k = cfg_.conv_strides[l];
    const int t_out = int(x.rows()) / k;
    const int c_in = int(x.cols());
    // kernel == stride, so im2col is a plain row-major reshape
    Eigen::Map<const Mat> xc(x.data(), t_out, c_in * k);
    const auto& w = param("conv" + std::to_string(l) + ".w").value;
    const auto& b = param("conv" + std::to_string(l) + ".b").value;
    Mat y = xc * w.transpose();
    y.rowwise() += b.row(0);
    Mat mask = (y.array() > 0.0).cast<double>().matrix();
    y = y.cwiseProduct(mask);
    cache.conv_inputs.push_back(Mat(xc));
    cache.conv_relu_mask.push_back(std::move(mask));
    x = std::move(y);
  }
  return x;
}

namespace {

// y = x_hat * g + b rowwise; returns x_hat, fills inv_std
Mat layer_norm(const Mat& x, Vec& inv_std) {
  const int T = int(x.rows());
  Mat x_hat(x.rows(), x.cols());
  inv_std.resize(T);
  for (int t = 0; t < T; ++t) {
    const double mu = x.row(t).mean();
    const double var = (x.row(t).array() - mu).square().mean();
    inv_std[t] = 1.0 / std::sqrt(var + kLnEps);
    x_hat.row(t) = (x.row(t).array() - mu) * inv_std[t];
  }
  return x_hat;
}

Mat layer_norm_backward(const Mat& d_y, const Mat& x_hat, const Vec& inv_std, const Mat& g,
                        Mat& d_g, Mat& d_b) {
  // d_y is the gradient at the LN output; g is the (1,H) gain
  const int T = int(x_hat.rows());
  const int H = int(x_hat.cols());
  for (int t = 0; t < T; ++t) {
    d_g.row(0) += d_y.row(t).cwiseProduct(x_hat.row(t));
    d_b.row(0) += d_y.row(t);
  }
  Mat d_x(T, H);
  for (int t = 0; t < T; ++t) {
    const Eigen::RowVectorXd d_hat = d_y.row(t).cwiseProduct(g.row(0));
    const double m1 = d_hat.mean();
    const double m2 = d_hat.cwiseProduct(x_hat.row(t)).mean();
    d_x.row(t) = (inv_std[t] * (d_hat.array() - m1 - x_hat.row(t).array() * m2)).matrix();
  }
  return d_x;
}

Mat dropout(const Mat& x, double rate, bool train, Rng* rng, Mat& mask_out) {
  if (!train || rate <= 0.0 || rng == nullptr) {
    mask_out = Mat::Ones(x.rows(), x.cols());
    return x;
  }
  mask_out.resize(x.rows(), x.cols());
  const double scale = 1.0 / (1.0 - rate);
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) mask_out(i, j) = rng->uniform() < rate ? 0.0 : scale;
  return x.cwiseProduct(mask_out);
}

}  // namespace

Mat Model::contextualize(const Mat& z, ForwardCache& cache, bool train_mode,
                         Rng* dropout_rng) const {
  const int T = int(z.rows());
  const int H = cfg_.hidden_dim;
  const int heads = cfg_.n_heads;
  const int dh = H / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(double(dh));
  if (int(z.cols()) != H) throw DataError("contextualize: bad input width");

  // normalize the latents before mixing in positional encodings; raw conv
  // outputs start orders of magnitude smaller than the encodings and the
  // transformer would otherwise be nearly input-blind at init
  cache.in_hat = layer_norm(z, cache.in_inv_std);
  cache.trans_in = cache.in_hat + positional(T);
  cache.layers.assign(cfg_.n_layers, {});
  Mat x = cache.trans_in;

  for (int l = 0; l < cfg_.n_layers; ++l) {
    auto& c = cache.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    c.x_in = x;

    c.u = layer_norm(x, c.ln1_inv_std);
    Mat a = c.u;
    a.array().rowwise() *= param(p + "ln1.g").value.row(0).array();
    a.rowwise() += param(p + "ln1.b").value.row(0);

    c.q = a * param(p + "attn.wq").value.transpose();
    c.q.rowwise() += param(p + "attn.bq").value.row(0);
    c.k = a * param(p + "attn.wk").value.transpose();
    c.v = a * param(p + "attn.wv").value.transpose();
    c.v.rowwise() += param(p + "attn.bv").value.row(0);

    c.attn.resize(heads);
    c.attn_out.resize(T, H);
    for (int h = 0; h < heads; ++h) {
      const auto qh = c.q.middleCols(h * dh, dh);
      const auto kh = c.k.middleCols(h * dh, dh);
      const auto vh = c.v.middleCols(h * dh, dh);
      Mat s = qh * kh.transpose() * inv_sqrt_dh;
      for (int t = 0; t < T; ++t) {
        const double mx = s.row(t).maxCoeff();
        s.row(t) = (s.row(t).array() - mx).exp();
        s.row(t) /= s.row(t).sum();
      }
      c.attn[h] = std::move(s);
      c.attn_out.middleCols(h * dh, dh) = c.attn[h] * vh;
    }
    Mat y = c.attn_out * param(p + "attn.wo").value.transpose();
    y.rowwise() += param(p + "attn.bo").value.row(0);
    c.x_mid = x + y;

    c.w = layer_norm(c.x_mid, c.ln2_inv_std);
    Mat b2 = c.w;
    b2.array().rowwise() *= param(p + "ln2.g").value.row(0).array();
    b2.rowwise() += param(p + "ln2.b").value.row(0);

    c.f_pre = b2 * param(p + "ffn.w1").value.transpose();
    c.f_pre.rowwise() += param(p + "ffn.b1").value.row(0);
    Mat f = c.f_pre.cwiseMax(0.0);
    c.f_drop = dropout(f, cfg_.dropout_rate, train_mode, dropout_rng, c.ffn_drop_mask);
    Mat out = c.f_drop * param(p + "ffn.w2").value.transpose();
    out.rowwise() += param(p + "ffn.b2").value.row(0);
    x = c.x_mid + out;
  }

  cache.h_pre_ln = x;
  Mat x_hat = layer_norm(x, cache.lnf_inv_std);
  Mat h = x_hat;
  h.array().rowwise() *= param("lnf.g").value.row(0).array();
  h.rowwise() += param("lnf.b").value.row(0);
  cache.h = h;
  return h;
}

Mat Model::project(const Mat& h) const {
  Mat y = h * param("proj.w").value.transpose();
  y.rowwise() += param("proj.b").value.row(0);
  return y;
}

Vec Model::classify(const Mat& h, ForwardCache& cache, bool train_mode, Rng* dropout_rng) const {
  // mean+std pooling over time: the temporal spread of each channel carries
  // most of the utterance-level signal, which a plain mean would average out
  const int T = int(h.rows());
  const int H = int(h.cols());
  cache.cls_colmean = h.colwise().mean().transpose();
  cache.cls_colstd.resize(H);
  Vec raw(2 * H);
  for (int c = 0; c < H; ++c) {
    const double var = (h.col(c).array() - cache.cls_colmean[c]).square().sum() / double(T);
    cache.cls_colstd[c] = std::sqrt(var + kLnEps);
    raw[c] = cache.cls_colmean[c];
    raw[H + c] = cache.cls_colstd[c];
  }
  // normalize against the running dataset stats; the raw pooled vector is
  // dominated by channel offsets shared by every utterance, and only after
  // removing them is the class signal O(1) for the head
  const auto& mu = param("pool_stats.mu").value;
  const auto& var = param("pool_stats.var").value;
  cache.pool_raw = raw;
  cache.pool_inv_std.resize(2 * H);
  cache.pool.resize(2 * H);
  for (int d = 0; d < 2 * H; ++d) {
    cache.pool_inv_std[d] = 1.0 / std::sqrt(var(0, d) + kLnEps);
    cache.pool[d] = (raw[d] - mu(0, d)) * cache.pool_inv_std[d];
  }
  Vec a1 = param("cls.w1").value * cache.pool + param("cls.b1").value.row(0).transpose();
  cache.cls_a1 = a1;
  Mat mask;
  Mat a1m = dropout(a1.transpose(), cfg_.dropout_rate, train_mode, dropout_rng, mask);
  cache.cls_drop_mask = mask.row(0).transpose();
  Vec dropped = a1m.row(0).transpose();
  cache.cls_relu = dropped.cwiseMax(0.0);
  return param("cls.w2").value * cache.cls_relu + param("cls.b2").value.row(0).transpose();
}

void Model::observe_pool(const ForwardCache& cache) {
  constexpr double kMomentum = 0.1;
  auto& mu = param("pool_stats.mu").value;
  auto& var = param("pool_stats.var").value;
  for (int d = 0; d < int(cache.pool_raw.size()); ++d) {
    const double dev = cache.pool_raw[d] - mu(0, d);
    mu(0, d) += kMomentum * dev;
    var(0, d) = (1.0 - kMomentum) * var(0, d) + kMomentum * dev * dev;
  }
}

Mat Model::project_backward(const Mat& d_out, const Mat& h) {
  param("proj.w").grad += d_out.transpose() * h;
  param("proj.b").grad.row(0) += d_out.colwise().sum();
  return d_out * param("proj.w").value;
}

Mat Model::classify_backward(const Vec& d_logits, const ForwardCache& cache) {
  param("cls.w2").grad += d_logits * cache.cls_relu.transpose();
  param("cls.b2").grad.row(0) += d_logits.transpose();
  Vec d_relu = param("cls.w2").value.transpose() * d_logits;
  Vec dropped = cache.cls_a1.cwiseProduct(cache.cls_drop_mask);
  Vec d_dropped = (dropped.array() > 0.0).select(d_relu.array(), 0.0).matrix();
  Vec d_a1 = d_dropped.cwiseProduct(cache.cls_drop_mask);
  param("cls.w1").grad += d_a1 * cache.pool.transpose();
  param("cls.b1").grad.row(0) += d_a1.transpose();
  Vec d_pool = param("cls.w1").value.transpose() * d_a1;

  // the running stats are constants for the backward pass
  const int D = int(d_pool.size());
  Vec d_raw = d_pool.cwiseProduct(cache.pool_inv_std);

  const int T = int(cache.h.rows());
  const int H = D / 2;
  Mat d_h(T, H);
  for (int c = 0; c < H; ++c) {
    // mean part spreads evenly; std part follows each frame's deviation
    const double d_mean = d_raw[c] / double(T);
    const double d_std = d_raw[H + c] / (double(T) * cache.cls_colstd[c]);
    for (int t = 0; t < T; ++t) {
      d_h(t, c) = d_mean + d_std * (cache.h(t, c) - cache.cls_colmean[c]);
    }
  }
  return d_h;
}

Mat Model::contextualize_backward(const Mat& d_h, const ForwardCache& cache) {
  const int T = int(d_h.rows());
  const int H = cfg_.hidden_dim;
  const int heads = cfg_.n_heads;
  const int dh = H / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(double(dh));

  // reconstruct the final-LN normalized activations from the cached pre-LN
  // stream (the gain may pass through zero during training)
  Mat lnf_hat(cache.h_pre_ln.rows(), cache.h_pre_ln.cols());
  for (int t = 0; t < lnf_hat.rows(); ++t) {
    const double mu = cache.h_pre_ln.row(t).mean();
    lnf_hat.row(t) = ((cache.h_pre_ln.row(t).array() - mu) * cache.lnf_inv_std[t]).matrix();
  }
  Mat d_x = layer_norm_backward(d_h, lnf_hat, cache.lnf_inv_std, param("lnf.g").value,
                                param("lnf.g").grad, param("lnf.b").grad);

  for (int l = cfg_.n_layers - 1; l >= 0; --l) {
    const auto& c = cache.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";

    // FFN branch
    Mat d_fdrop = d_x * param(p + "ffn.w2").value;
    param(p + "ffn.w2").grad += d_x.transpose() * c.f_drop;
    param(p + "ffn.b2").grad.row(0) += d_x.colwise().sum();
    Mat d_fpre = d_fdrop.cwiseProduct(c.ffn_drop_mask)
                     .cwiseProduct((c.f_pre.array() > 0.0).cast<double>().matrix());
    Mat ln2_out = c.w;
    ln2_out.array().rowwise() *= param(p + "ln2.g").value.row(0).array();
    ln2_out.rowwise() += param(p + "ln2.b").value.row(0);
    param(p + "ffn.w1").grad += d_fpre.transpose() * ln2_out;
    param(p + "ffn.b1").grad.row(0) += d_fpre.colwise().sum();
    Mat d_ln2out = d_fpre * param(p + "ffn.w1").value;
    Mat d_xmid = d_x + layer_norm_backward(d_ln2out, c.w, c.ln2_inv_std, param(p + "ln2.g").value,
                                           param(p + "ln2.g").grad, param(p + "ln2.b").grad);

    // attention branch
    Mat d_attn_out = d_xmid * param(p + "attn.wo").value;
    param(p + "attn.wo").grad += d_xmid.transpose() * c.attn_out;
    param(p + "attn.bo").grad.row(0) += d_xmid.colwise().sum();

    Mat d_q = Mat::Zero(T, H), d_k = Mat::Zero(T, H), d_v = Mat::Zero(T, H);
    for (int h = 0; h < heads; ++h) {
      const auto qh = c.q.middleCols(h * dh, dh);
      const auto kh = c.k.middleCols(h * dh, dh);
      const auto vh = c.v.middleCols(h * dh, dh);
      const auto d_oh = d_attn_out.middleCols(h * dh, dh);
      const Mat& a = c.attn[h];
      Mat d_a = d_oh * vh.transpose();
      d_v.middleCols(h * dh, dh) = a.transpose() * d_oh;
      // softmax rows backward
      Mat d_s(T, T);
      for (int t = 0; t < T; ++t) {
        const double dot = d_a.row(t).dot(a.row(t));
        d_s.row(t) = (a.row(t).array() * (d_a.row(t).array() - dot)).matrix();
      }
      d_s *= inv_sqrt_dh;
      d_q.middleCols(h * dh, dh) = d_s * kh;
      d_k.middleCols(h * dh, dh) = d_s.transpose() * qh;
    }

    Mat ln1_out = c.u;
    ln1_out.array().rowwise() *= param(p + "ln1.g").value.row(0).array();
    ln1_out.rowwise() += param(p + "ln1.b").value.row(0);

    param(p + "attn.wq").grad += d_q.transpose() * ln1_out;
    param(p + "attn.bq").grad.row(0) += d_q.colwise().sum();
    param(p + "attn.wk").grad += d_k.transpose() * ln1_out;
    param(p + "attn.wv").grad += d_v.transpose() * ln1_out;
    param(p + "attn.bv").grad.row(0) += d_v.colwise().sum();

    Mat d_ln1out = d_q * param(p + "attn.wq").value + d_k * param(p + "attn.wk").value +
                   d_v * param(p + "attn.wv").value;
    d_x = d_xmid + layer_norm_backward(d_ln1out, c.u, c.ln1_inv_std, param(p + "ln1.g").value,
                                       param(p + "ln1.g").grad, param(p + "ln1.b").grad);
  }
  // positional encodings are constants; undo the parameter-free input norm
  Mat d_z(T, H);
  for (int t = 0; t < T; ++t) {
    const double m1 = d_x.row(t).mean();
    const double m2 = d_x.row(t).cwiseProduct(cache.in_hat.row(t)).mean();
    d_z.row(t) =
        (cache.in_inv_std[t] * (d_x.row(t).array() - m1 - cache.in_hat.row(t).array() * m2))
            .matrix();
  }
  return d_z;
}

void Model::encode_backward(const Mat& d_z, const ForwardCache& cache) {
  Mat d_cur = d_z;
  for (int l = int(cfg_.conv_strides.size()) - 1; l >= 0; --l) {
    const int k = cfg_.conv_strides[l];
    const std::string p = "conv" + std::to_string(l);
    Mat d_y = d_cur.cwiseProduct(cache.conv_relu_mask[l]);
    param(p + ".w").grad += d_y.transpose() * cache.conv_inputs[l];
    param(p + ".b").grad.row(0) += d_y.colwise().sum();
    if (l == 0) break;  // no gradient needed w.r.t. the waveform
    Mat d_xc = d_y * param(p + ".w").value;  // (t_out, c_in * k)
    const int t_in = int(d_xc.rows()) * k;
    const int c_in = int(d_xc.cols()) / k;
    d_cur = Eigen::Map<const Mat>(d_xc.data(), t_in, c_in);
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw DataError("cannot open checkpoint for write: " + path.string());
  const char magic[4] = {'P', 'S', 'D', 'M'};
  std::fwrite(magic, 1, 4, f);
  const std::uint16_t version = 1;
  std::fwrite(&version, 2, 1, f);

  const auto& cfg = model.config();
  auto wi32 = [&](std::int32_t v) { std::fwrite(&v, 4, 1, f); };
  wi32(cfg.hidden_dim);
  wi32(cfg.n_layers);
  wi32(cfg.n_heads);
  wi32(cfg.ffn_dim);
  wi32(std::int32_t(cfg.conv_strides.size()));
  for (int s : cfg.conv_strides) wi32(s);
  wi32(cfg.target_dim);
  wi32(cfg.n_classes);
  std::fwrite(&cfg.dropout_rate, 8, 1, f);

  wi32(std::int32_t(model.params().size()));
  for (const auto& p : model.params()) {
    wi32(std::int32_t(p.name.size()));
    std::fwrite(p.name.data(), 1, p.name.size(), f);
    const std::uint8_t group = std::uint8_t(p.group);
    std::fwrite(&group, 1, 1, f);
    wi32(std::int32_t(p.value.rows()));
    wi32(std::int32_t(p.value.cols()));
    std::vector<float> buf(p.value.size());
    for (int i = 0; i < p.value.rows(); ++i)
      for (int j = 0; j < p.value.cols(); ++j) buf[i * p.value.cols() + j] = float(p.value(i, j));
    std::fwrite(buf.data(), 4, buf.size(), f);
  }
  std::fclose(f);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw DataError("cannot open checkpoint: " + path.string());
  auto fail = [&](const std::string& msg) {
    std::fclose(f);
    throw DataError(msg + ": " + path.string());
  };
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "PSDM", 4) != 0) fail("bad magic");
  std::uint16_t version;
  if (std::fread(&version, 2, 1, f) != 1 || version != 1) fail("unsupported version");

  auto ri32 = [&]() {
    std::int32_t v;
    if (std::fread(&v, 4, 1, f) != 1) throw DataError("truncated checkpoint: " + path.string());
    return v;
  };
  ModelConfig cfg;
  cfg.hidden_dim = ri32();
  cfg.n_layers = ri32();
  cfg.n_heads = ri32();
  cfg.ffn_dim = ri32();
  const int n_strides = ri32();
  cfg.conv_strides.resize(n_strides);
  for (int i = 0; i < n_strides; ++i) cfg.conv_strides[i] = ri32();
  cfg.target_dim = ri32();
  cfg.n_classes = ri32();
  if (std::fread(&cfg.dropout_rate, 8, 1, f) != 1) fail("truncated");

  Model model(cfg, 0);
  const int n_params = ri32();
  if (n_params != int(model.params().size())) fail("parameter count mismatch");
  for (int i = 0; i < n_params; ++i) {
    const int name_len = ri32();
    std::string name(name_len, '\0');
    if (std::fread(name.data(), 1, name_len, f) != size_t(name_len)) fail("truncated");
    std::uint8_t group;
    if (std::fread(&group, 1, 1, f) != 1) fail("truncated");
    const int rows = ri32(), cols = ri32();
    auto& p = model.param(name);
    if (p.value.rows() != rows || p.value.cols() != cols) fail("shape mismatch for " + name);
    if (ParamGroup(group) != p.group) fail("group mismatch for " + name);
    std::vector<float> buf(size_t(rows) * cols);
    if (std::fread(buf.data(), 4, buf.size(), f) != buf.size()) fail("truncated");
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) p.value(r, c) = buf[size_t(r) * cols + c];
  }
  std::fclose(f);
  return model;
}

GradCheckReport grad_check(Model& model, const std::function<double(bool)>& loss_fn,
                           double epsilon, int coords_per_group, std::uint64_t seed) {
  model.zero_grad();
  loss_fn(true);
  std::vector<Mat> analytic;
  analytic.reserve(model.params().size());
  for (const auto& p : model.params()) analytic.push_back(p.grad);

  Rng rng(seed);
  GradCheckReport report;
  for (ParamGroup group : {ParamGroup::backbone, ParamGroup::projection, ParamGroup::classifier}) {
    // flat coordinate space over all tensors of this group
    std::vector<std::pair<int, int>> coords;  // (param index, flat offset)
    long total = 0;
    for (size_t pi = 0; pi < model.params().size(); ++pi) {
      if (model.params()[pi].group == group) total += model.params()[pi].value.size();
    }
    const int n_check = int(std::min<long>(coords_per_group, total));
    for (int c = 0; c < n_check; ++c) {
      long flat = long(rng.below(std::uint64_t(total)));
      for (size_t pi = 0; pi < model.params().size(); ++pi) {
        if (model.params()[pi].group != group) continue;
        if (flat < model.params()[pi].value.size()) {
          coords.emplace_back(int(pi), int(flat));
          break;
        }
        flat -= model.params()[pi].value.size();
      }
    }

    for (auto [pi, off] : coords) {
      double* theta = model.params()[pi].value.data() + off;
      const double saved = *theta;
      auto eval_at = [&](double delta) {
        *theta = saved + delta;
        const double v = loss_fn(false);
        *theta = saved;
        return v;
      };
      // 4th-order central difference at three step sizes: large steps keep
      // roundoff small, small steps avoid straddling ReLU kinks. A wrong
      // analytic gradient disagrees with all of them.
      auto central = [&](double eps) {
        return (8.0 * (eval_at(eps) - eval_at(-eps)) -
                (eval_at(2.0 * eps) - eval_at(-2.0 * eps))) /
               (12.0 * eps);
      };
      const double a = analytic[pi].data()[off];
      auto rel_to = [&](double numeric) {
        return std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      };
      double rel = rel_to(central(epsilon));
      for (double eps : {epsilon / 10.0, epsilon / 100.0}) {
        if (rel > 1e-6) rel = std::min(rel, rel_to(central(eps)));
      }
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.coords_checked;
    }
  }

  // restore analytic gradients for the caller
  model.zero_grad();
  for (size_t pi = 0; pi < model.params().size(); ++pi) model.params()[pi].grad = analytic[pi];
  return report;
}

}  // namespace prosdd
