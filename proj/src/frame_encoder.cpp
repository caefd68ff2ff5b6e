#include "evcrab/frame_encoder.hpp"

#include <cmath>

#include "evcrab/errors.hpp"
#include "evcrab/ops.hpp"

namespace evcrab {

using ad::Tensor;

namespace {
std::size_t sz(int v) { return static_cast<std::size_t>(v); }
}  // namespace

void validate(const FrameEncoderConfig& cfg) {
  if (cfg.dim < 1 || cfg.depth < 0 || cfg.heads < 1 || cfg.mlp_ratio < 1 || cfg.patch < 1 ||
      cfg.frames < 1 || cfg.height < 1 || cfg.width < 1) {
    throw ConfigError("frame encoder sizes must be positive");
  }
  if (cfg.dim % cfg.heads != 0) {
    throw ConfigError("frame encoder width " + std::to_string(cfg.dim) +
                      " is not divisible by heads " + std::to_string(cfg.heads));
  }
}

template <class T>
FrameEncoder<T>::FrameEncoder(ad::ParameterStore<T>& store, const std::string& prefix,
                              const FrameEncoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  validate(cfg);
  grid_h_ = sz((cfg.height + cfg.patch - 1) / cfg.patch);
  grid_w_ = sz((cfg.width + cfg.patch - 1) / cfg.patch);
  patches_ = grid_h_ * grid_w_;
  const std::size_t d = sz(cfg.dim), p = sz(cfg.patch), hidden = sz(cfg.mlp_ratio * cfg.dim);
  const std::size_t fan_in = 3 * p * p;
  patch_w = store.add(prefix + "patch_w", {d, 3, p, p}, fan_in_values<T>(rng, d * fan_in, fan_in));
  patch_b = store.add(prefix + "patch_b", {d}, std::vector<T>(d, T(0)));
  pos = store.add(prefix + "pos", {patches_, d}, normal_values<T>(rng, patches_ * d, 0.02));
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string bp = prefix + "block" + std::to_string(i) + ".";
    AttentionBlock<T> b;
    b.ln1_g = store.add(bp + "ln1_g", {d}, std::vector<T>(d, T(1)));
    b.ln1_b = store.add(bp + "ln1_b", {d}, std::vector<T>(d, T(0)));
    b.qkv_w = store.add(bp + "qkv_w", {d, 3 * d}, fan_in_values<T>(rng, d * 3 * d, d));
    b.q_b = store.add(bp + "q_b", {d}, std::vector<T>(d, T(0)));
    b.v_b = store.add(bp + "v_b", {d}, std::vector<T>(d, T(0)));
    b.proj_w = store.add(bp + "proj_w", {d, d}, fan_in_values<T>(rng, d * d, d));
    b.proj_b = store.add(bp + "proj_b", {d}, std::vector<T>(d, T(0)));
    b.ln2_g = store.add(bp + "ln2_g", {d}, std::vector<T>(d, T(1)));
    b.ln2_b = store.add(bp + "ln2_b", {d}, std::vector<T>(d, T(0)));
    b.fc1_w = store.add(bp + "fc1_w", {d, hidden}, fan_in_values<T>(rng, d * hidden, d));
    b.fc1_b = store.add(bp + "fc1_b", {hidden}, std::vector<T>(hidden, T(0)));
    b.fc2_w = store.add(bp + "fc2_w", {hidden, d}, fan_in_values<T>(rng, hidden * d, hidden));
    b.fc2_b = store.add(bp + "fc2_b", {d}, std::vector<T>(d, T(0)));
    blocks.push_back(std::move(b));
  }
  head_w = store.add(prefix + "head_w", {d, d}, fan_in_values<T>(rng, d * d, d));
  head_b = store.add(prefix + "head_b", {d}, std::vector<T>(d, T(0)));
}

template <class T>
Tensor<T> FrameEncoder<T>::patchify(const FrameStack& stack) const {
  if (stack.height != cfg_.height || stack.width != cfg_.width || stack.frames != cfg_.frames) {
    throw ShapeError("encode_frames: stack " + std::to_string(stack.height) + "x" +
                     std::to_string(stack.width) + "x" + std::to_string(stack.frames) +
                     " does not match encoder " + std::to_string(cfg_.height) + "x" +
                     std::to_string(cfg_.width) + "x" + std::to_string(cfg_.frames));
  }
  const std::size_t p = sz(cfg_.patch), d = sz(cfg_.dim);
  const std::size_t h = grid_h_ * p, w = grid_w_ * p;
  ad::Conv2dOptions opt;
  opt.stride_h = opt.stride_w = p;
  std::vector<Tensor<T>> frames;
  for (int f = 0; f < cfg_.frames; ++f) {
    std::vector<T> img(3 * h * w, T(0));
    for (int y = 0; y < stack.height; ++y) {
      for (int x = 0; x < stack.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          img[(sz(c) * h + sz(y)) * w + sz(x)] = static_cast<T>(stack.at(y, x, f, c));
        }
      }
    }
    auto conv = ad::conv2d(Tensor<T>::from({3, h, w}, std::move(img)), patch_w, opt);
    auto tokens = ad::permute(ad::reshape(conv, {d, patches_}), {1, 0});
    frames.push_back(ad::add(ad::add(tokens, patch_b), pos));
  }
  return ad::concat(frames, 0);
}

template <class T>
Tensor<T> FrameEncoder<T>::block(const Tensor<T>& x, const AttentionBlock<T>& b) const {
  const std::size_t d = sz(cfg_.dim), heads = sz(cfg_.heads), dh = d / heads;
  const std::size_t n = patches_;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  // no key bias: softmax over keys is invariant to it
  auto qkv_b = ad::concat(std::vector<Tensor<T>>{b.q_b, Tensor<T>::zeros({d}), b.v_b}, 0);
  auto qkv = ad::linear(ad::layer_norm(x, b.ln1_g, b.ln1_b), b.qkv_w, qkv_b);
  std::vector<Tensor<T>> frames;
  for (std::size_t f = 0; f < sz(cfg_.frames); ++f) {
    auto rows = ad::slice(qkv, 0, f * n, (f + 1) * n);
    std::vector<Tensor<T>> outs;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      auto q = ad::slice(rows, 1, hd * dh, (hd + 1) * dh);
      auto k = ad::slice(rows, 1, d + hd * dh, d + (hd + 1) * dh);
      auto v = ad::slice(rows, 1, 2 * d + hd * dh, 2 * d + (hd + 1) * dh);
      auto attn = ad::softmax(ad::scale(ad::matmul_nt(q, k), inv_sqrt));
      outs.push_back(ad::matmul(attn, v));
    }
    frames.push_back(ad::concat(outs, 1));
  }
  auto h = ad::add(x, ad::linear(ad::concat(frames, 0), b.proj_w, b.proj_b));
  auto mlp = ad::linear(ad::silu(ad::linear(ad::layer_norm(h, b.ln2_g, b.ln2_b), b.fc1_w, b.fc1_b)),
                        b.fc2_w, b.fc2_b);
  return ad::add(h, mlp);
}

template <class T>
Tensor<T> FrameEncoder<T>::encode(const FrameStack& stack) const {
  auto x = patchify(stack);
  for (const auto& b : blocks) x = block(x, b);
  const std::size_t d = sz(cfg_.dim);
  auto per_frame = ad::mean_axis(ad::reshape(x, {sz(cfg_.frames), patches_, d}), 1);
  auto pooled = ad::reshape(ad::mean_axis(per_frame, 0), {1, d});
  return ad::reshape(ad::l2_normalize(ad::linear(pooled, head_w, head_b)), {d});
}

template class FrameEncoder<float>;
template class FrameEncoder<double>;

}  // namespace evcrab
