#include "evcrab/point_encoder.hpp"

#include <cmath>

#include "evcrab/errors.hpp"

namespace evcrab {

using ad::Tensor;

namespace {

// Layers fed by binary spike maps need wider weights to reach the firing threshold.
template <class T>
std::vector<T> spike_fed(Rng& rng, std::size_t n, std::size_t fan_in) {
  return normal_values<T>(rng, n, 2.0 / std::sqrt(static_cast<double>(fan_in)));
}

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

template <class T>
Tensor<T> zero_pad_axis(const Tensor<T>& x, std::size_t axis, std::size_t target) {
  if (x.dim(axis) == target) return x;
  ad::Shape s = x.shape();
  s[axis] = target - x.dim(axis);
  return ad::concat<T>({x, Tensor<T>::zeros(s)}, axis);
}

}  // namespace

void validate(const PointEncoderConfig& cfg) {
  if (cfg.dim < 1 || cfg.blocks < 0 || cfg.patch < 1 || cfg.channels < 1 || cfg.state < 1 ||
      cfg.expand < 1 || cfg.conv_width < 1 || cfg.spgc_ratio < 1 || cfg.groups < 1) {
    throw ConfigError("point encoder sizes must be positive");
  }
  if ((cfg.spgc_ratio * cfg.dim) % cfg.groups != 0) {
    throw ConfigError("SPGC width " + std::to_string(cfg.spgc_ratio * cfg.dim) +
                      " is not divisible by groups " + std::to_string(cfg.groups));
  }
  if (!(cfg.spike_width > 0)) throw ConfigError("spike surrogate width must be positive");
}

template <class T>
MambaParams<T> make_mamba(ad::ParameterStore<T>& store, const std::string& prefix,
                          const PointEncoderConfig& cfg, Rng& rng) {
  const std::size_t d = sz(cfg.dim), e = sz(cfg.expand * cfg.dim), n = sz(cfg.state);
  const std::size_t k = sz(cfg.conv_width);
  const std::size_t r = (d + 15) / 16;
  MambaParams<T> p;
  p.dt_rank = r;
  p.state = n;
  p.in_w = store.add(prefix + "in_w", {d, 2 * e}, spike_fed<T>(rng, d * 2 * e, d));
  p.in_b = store.add(prefix + "in_b", {2 * e}, std::vector<T>(2 * e, T(0)));
  p.conv_w = store.add(prefix + "conv_w", {e, 1, k}, fan_in_values<T>(rng, e * k, k));
  p.conv_b = store.add(prefix + "conv_b", {e}, std::vector<T>(e, T(0)));
  p.x_w = store.add(prefix + "x_w", {e, r + 2 * n}, fan_in_values<T>(rng, e * (r + 2 * n), e));
  p.dt_w = store.add(prefix + "dt_w", {r, e}, fan_in_values<T>(rng, r * e, r));
  // softplus(dt_b) = 0.1
  p.dt_b = store.add(prefix + "dt_b", {e}, std::vector<T>(e, static_cast<T>(std::log(std::expm1(0.1)))));
  std::vector<T> a_log(e * n);
  for (std::size_t i = 0; i < e; ++i) {
    for (std::size_t j = 0; j < n; ++j) a_log[i * n + j] = static_cast<T>(std::log(double(j + 1)));
  }
  p.a_log = store.add(prefix + "a_log", {e, n}, std::move(a_log));
  p.d_skip = store.add(prefix + "d_skip", {e}, std::vector<T>(e, T(1)));
  p.out_w = store.add(prefix + "out_w", {e, d}, spike_fed<T>(rng, e * d, e));
  p.out_b = store.add(prefix + "out_b", {d}, std::vector<T>(d, T(0)));
  return p;
}

template <class T>
SPGCParams<T> make_spgc(ad::ParameterStore<T>& store, const std::string& prefix,
                        const PointEncoderConfig& cfg, Rng& rng) {
  const std::size_t d = sz(cfg.dim), rd = sz(cfg.spgc_ratio * cfg.dim), g = sz(cfg.groups);
  SPGCParams<T> p;
  p.groups = g;
  p.spc1_w = store.add(prefix + "spc1_w", {rd, d, 1}, spike_fed<T>(rng, rd * d, d));
  p.spc1_b = store.add(prefix + "spc1_b", {rd}, std::vector<T>(rd, T(0)));
  p.sgc_w = store.add(prefix + "sgc_w", {rd, rd / g, 3}, spike_fed<T>(rng, rd * (rd / g) * 3, (rd / g) * 3));
  p.sgc_b = store.add(prefix + "sgc_b", {rd}, std::vector<T>(rd, T(0)));
  p.spc2_w = store.add(prefix + "spc2_w", {d, rd, 1}, spike_fed<T>(rng, d * rd, rd));
  p.spc2_b = store.add(prefix + "spc2_b", {d}, std::vector<T>(d, T(0)));
  return p;
}

template <class T>
Tensor<T> selective_ssm_scan(const Tensor<T>& x, const Tensor<T>& dt_low, const Tensor<T>& b,
                             const Tensor<T>& c, const MambaParams<T>& p, ad::ScanMode mode) {
  auto delta = ad::softplus(ad::linear(dt_low, p.dt_w, p.dt_b));
  auto a = ad::scale(ad::exp(p.a_log), T(-1));
  return ad::selective_scan(x, delta, a, b, c, p.d_skip, mode);
}

template <class T>
Tensor<T> mamba_mix(const Tensor<T>& x, const MambaParams<T>& p, ad::ScanMode mode) {
  const std::size_t e = p.d_skip.dim(0);
  const std::size_t r = p.dt_rank, n = p.state;
  auto xz = ad::linear(x, p.in_w, p.in_b);
  auto value = ad::slice(xz, 1, 0, e);
  auto gate = ad::silu(ad::slice(xz, 1, e, 2 * e));
  auto conv = ad::conv1d(value, p.conv_w, e, ad::Padding::Causal);
  auto xc = ad::silu(ad::add(conv, p.conv_b));
  auto proj = ad::matmul(xc, p.x_w);
  auto y = selective_ssm_scan(xc, ad::slice(proj, 1, 0, r), ad::slice(proj, 1, r, r + n),
                              ad::slice(proj, 1, r + n, r + 2 * n), p, mode);
  return ad::linear(ad::mul(y, gate), p.out_w, p.out_b);
}

template <class T>
Tensor<T> smamba(const Tensor<T>& f, const MambaParams<T>& p, const SurrogateSpike& sg,
                 ad::ScanMode mode) {
  return spike_sn(mamba_mix(spike_sn(f, sg), p, mode), sg);
}

template <class T>
Tensor<T> spgc(const Tensor<T>& f, const SPGCParams<T>& p, const SurrogateSpike& sg) {
  auto spc = [&](const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    return ad::add(ad::conv1d(spike_sn(x, sg), w, 1, ad::Padding::Same), bias);
  };
  auto h = spc(f, p.spc1_w, p.spc1_b);
  auto sgc = ad::add(ad::add(ad::conv1d(spike_sn(h, sg), p.sgc_w, p.groups, ad::Padding::Same),
                             p.sgc_b),
                     h);
  return spc(sgc, p.spc2_w, p.spc2_b);
}

template <class T>
Tensor<T> spiking_mamba_block(const Tensor<T>& f, const BlockParams<T>& p, const SurrogateSpike& sg,
                              ad::ScanMode mode) {
  auto f_hat = ad::add(smamba(f, p.mamba, sg, mode), f);
  return spgc(f_hat, p.spgc, sg);
}

template <class T>
PointEncoder<T>::PointEncoder(ad::ParameterStore<T>& store, const std::string& prefix,
                              const PointEncoderConfig& cfg, int height, int width, int slices,
                              Rng& rng)
    : cfg_(cfg), height_(height), width_(width), slices_(slices) {
  validate(cfg);
  if (height < 1 || width < 1 || slices < 1) throw ConfigError("context grid must be non-empty");
  const std::size_t d = sz(cfg.dim), c = sz(cfg.channels), p = sz(cfg.patch);
  grid_ = {(width + cfg.patch - 1) / cfg.patch, (height + cfg.patch - 1) / cfg.patch, slices};
  const std::size_t l = sz(grid_.nx * grid_.ny);
  const std::size_t fan_in = c * p * p;
  patch_w = store.add(prefix + "patch_w", {d, c, p, p, 1},
                      normal_values<T>(rng, d * fan_in, 4.0 / std::sqrt(double(fan_in))));
  patch_b = store.add(prefix + "patch_b", {d}, std::vector<T>(d, T(0)));
  pos_s = store.add(prefix + "pos_s", {l, d}, normal_values<T>(rng, l * d, 0.02));
  pos_t = store.add(prefix + "pos_t", {sz(slices), d}, normal_values<T>(rng, sz(slices) * d, 0.02));
  for (int i = 0; i < cfg.blocks; ++i) {
    const std::string bp = prefix + "block" + std::to_string(i) + ".";
    BlockParams<T> b;
    b.mamba = make_mamba(store, bp + "mamba.", cfg, rng);
    b.spgc = make_spgc(store, bp + "spgc.", cfg, rng);
    blocks.push_back(std::move(b));
  }
  head_w = store.add(prefix + "head_w", {d, d}, fan_in_values<T>(rng, d * d, d));
  // a silent spike stack pools to zero; a nonzero bias keeps the feature normalizable
  head_b = store.add(prefix + "head_b", {d}, fan_in_values<T>(rng, d, d));

  forward_ = build_scan_order(grid_);
  fwd_tokens_ = token_permutation(forward_);
  bwd_tokens_ = token_permutation(reverse_order(forward_));
  for (int y = 0; y < grid_.ny; ++y) {
    for (int x = 0; x < grid_.nx; ++x) {
      for (int t = 0; t < grid_.nt; ++t) {
        l_index_.push_back(sz(y * grid_.nx + x));
        t_index_.push_back(sz(t));
      }
    }
  }
}

template <class T>
Tensor<T> PointEncoder<T>::patch_embed(const Tensor<T>& context) const {
  const ad::Shape expect{sz(cfg_.channels), sz(height_), sz(width_), sz(slices_)};
  if (context.shape() != expect) {
    throw ShapeError("patch_embed: context " + ad::to_string(context.shape()) +
                     " does not match " + ad::to_string(expect));
  }
  const auto p = sz(cfg_.patch);
  auto padded = zero_pad_axis(zero_pad_axis(context, 1, sz(grid_.ny) * p), 2, sz(grid_.nx) * p);
  auto conv = ad::conv3d(padded, patch_w, p, p, 1);  // [D, ny, nx, T']
  auto tokens = ad::reshape(ad::permute(conv, {1, 2, 3, 0}), {grid_.cells(), sz(cfg_.dim)});
  return ad::add(tokens, patch_b);
}

template <class T>
Tensor<T> PointEncoder<T>::add_positional(const Tensor<T>& tokens) const {
  return ad::add(ad::add(tokens, ad::take_rows(pos_s, l_index_)), ad::take_rows(pos_t, t_index_));
}

template <class T>
Tensor<T> PointEncoder<T>::run_blocks(const Tensor<T>& seq) const {
  const SurrogateSpike sg{cfg_.spike_threshold, cfg_.spike_width};
  Tensor<T> f = seq;
  for (const auto& b : blocks) f = spiking_mamba_block(f, b, sg, cfg_.scan);
  return f;
}

template <class T>
Tensor<T> PointEncoder<T>::encode_with_orders(const Tensor<T>& context,
                                              const std::vector<std::size_t>& forward,
                                              const std::vector<std::size_t>& backward) const {
  auto f_s = add_positional(patch_embed(context));
  auto out_f = ad::mean_axis(run_blocks(ad::take_rows(f_s, forward)), 0);
  auto out_b = ad::mean_axis(run_blocks(ad::take_rows(f_s, backward)), 0);
  auto pooled = ad::reshape(ad::scale(ad::add(out_f, out_b), T(0.5)), {1, sz(cfg_.dim)});
  auto feature = ad::l2_normalize(ad::linear(pooled, head_w, head_b));
  return ad::reshape(feature, {sz(cfg_.dim)});
}

template <class T>
Tensor<T> PointEncoder<T>::encode(const Tensor<T>& context) const {
  return encode_with_orders(context, fwd_tokens_, bwd_tokens_);
}

#define EVCRAB_INSTANTIATE(T)                                                                    \
  template MambaParams<T> make_mamba<T>(ad::ParameterStore<T>&, const std::string&,              \
                                        const PointEncoderConfig&, Rng&);                        \
  template SPGCParams<T> make_spgc<T>(ad::ParameterStore<T>&, const std::string&,                \
                                      const PointEncoderConfig&, Rng&);                          \
  template Tensor<T> selective_ssm_scan<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                           const Tensor<T>&, const MambaParams<T>&,              \
                                           ad::ScanMode);                                        \
  template Tensor<T> mamba_mix<T>(const Tensor<T>&, const MambaParams<T>&, ad::ScanMode);        \
  template Tensor<T> smamba<T>(const Tensor<T>&, const MambaParams<T>&, const SurrogateSpike&,   \
                               ad::ScanMode);                                                    \
  template Tensor<T> spgc<T>(const Tensor<T>&, const SPGCParams<T>&, const SurrogateSpike&);     \
  template Tensor<T> spiking_mamba_block<T>(const Tensor<T>&, const BlockParams<T>&,             \
                                            const SurrogateSpike&, ad::ScanMode);                \
  template class PointEncoder<T>;

EVCRAB_INSTANTIATE(float)
EVCRAB_INSTANTIATE(double)

#undef EVCRAB_INSTANTIATE

}  // namespace evcrab
