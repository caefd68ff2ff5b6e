#include "evcrab/model.hpp"

#include "evcrab/errors.hpp"
#include "evcrab/ops.hpp"

namespace evcrab {

using ad::Tensor;

void validate(const ModelConfig& cfg) {
  validate(cfg.srrnn);
  validate(cfg.point);
  validate(cfg.frame);
  validate(cfg.head);
  if (cfg.t_prime < 1) throw ConfigError("T' must be >= 1");
  if (cfg.t_prime > cfg.t_raw) throw ConfigError("T' must not exceed T_raw");
  if (cfg.point.dim != cfg.frame.dim) {
    throw ConfigError("point and frame encoders must share the feature width");
  }
}

template <class T>
Model<T>::Model(const ModelConfig& cfg, int classes, std::uint64_t seed)
    : cfg_(cfg), classes_(classes) {
  validate(cfg);
  if (classes < 1) throw ConfigError("model needs at least one class");
  Rng rng(seed);
  cell = make_srrnn_cell(store, "scl.", cfg.srrnn, rng);
  point = PointEncoder<T>(store, "point.", cfg.point, cfg.srrnn.grid_h, cfg.srrnn.grid_w,
                          cfg.t_prime, rng);
  frame = FrameEncoder<T>(store, "frame.", cfg.frame, rng);
  prompts = load_or_make_prompts<T>(cfg.prompts, static_cast<std::size_t>(classes),
                                    static_cast<std::size_t>(cfg.point.dim), seed ^ 0x9e3779b97f4a7c15ull,
                                    &store, cfg.prompt_frame_file, cfg.prompt_point_file);
  if (cfg.freeze_sampler) store.set_trainable("scl.", false);
}

template <class T>
bool Model<T>::point_only(const std::string& name) const {
  return name.starts_with("scl.") || name.starts_with("point.") || name == "prompt.point";
}

template <class T>
SampleResult Model<T>::sample_slices(const PreparedSample& s,
                                     std::vector<Tensor<T>>* spikes) const {
  switch (cfg_.sampler) {
    case SamplerKind::Sliding:
      return sliding_window_sample(*s.stream, cfg_.t_prime);
    case SamplerKind::Snn:
      return vanilla_snn_sample(*s.stream, cfg_.srrnn.lif, cfg_.t_prime, cfg_.t_raw,
                                cfg_.srrnn.grid_h, cfg_.srrnn.grid_w, cfg_.snn_gain);
    case SamplerKind::Scl:
      return scl_sample_binned(*s.stream, s.bins, cell, cfg_.t_prime, spikes);
  }
  throw ConfigError("unknown sampler");
}

template <class T>
PreparedSample Model<T>::prepare(const EventStream& stream, int label) const {
  PreparedSample s;
  s.stream = &stream;
  s.label = label;
  s.frames = stack_frames(stream, cfg_.frame.frames, cfg_.frame.height, cfg_.frame.width);
  if (cfg_.sampler == SamplerKind::Scl) {
    s.bins = rasterize_bins(stream, cfg_.t_raw, cfg_.srrnn.grid_h, cfg_.srrnn.grid_w);
  }
  if (cfg_.sampler != SamplerKind::Scl || cfg_.freeze_sampler) {
    ad::NoGradGuard guard;
    s.fixed = sample_slices(s, nullptr);
    s.fixed_grid = aggregate_context(s.fixed->slices, cfg_.srrnn.grid_h, cfg_.srrnn.grid_w,
                                     cfg_.slice_norm);
  }
  return s;
}

template <class T>
ForwardResult<T> Model<T>::forward(const PreparedSample& s) const {
  ForwardResult<T> out;
  Tensor<T> context;
  if (s.fixed) {
    out.trace = s.fixed->trace;
    out.retained = s.fixed->retained;
    context = context_tensor<T>(*s.fixed_grid);
  } else {
    std::vector<Tensor<T>> spikes;
    const bool track = ad::grad_enabled() && cell.w_ie.requires_grad();
    auto r = sample_slices(s, track ? &spikes : nullptr);
    context = context_tensor<T>(
        aggregate_context(r.slices, cfg_.srrnn.grid_h, cfg_.srrnn.grid_w, cfg_.slice_norm));
    if (track) {
      context = ad::mul(context, spike_gate(spikes, r.slice_bins, cfg_.srrnn.grid_h,
                                            cfg_.srrnn.grid_w));
    }
    out.trace = std::move(r.trace);
    out.retained = std::move(r.retained);
  }
  out.f_o = point.encode(context);
  if (s.frame_feature) {
    const auto& f = *s.frame_feature;
    out.f_a = Tensor<T>::from({f.size()}, std::vector<T>(f.begin(), f.end()));
  } else {
    out.f_a = frame.encode(s.frames);
  }
  out.fused = residual_fuse(out.f_a, out.f_o);
  return out;
}

template <class T>
LossParts<T> Model<T>::loss(const ForwardResult<T>& fwd, int label) const {
  LossParts<T> parts;
  const auto& h = cfg_.head;
  parts.loss_o = contrastive_loss(fwd.f_o, prompts.point(), label, h.tau, h.variant);
  auto frame_side = cfg_.raw_frame_loss ? fwd.f_a
                                        : residual_fuse(fwd.f_a, ad::stop_gradient(fwd.f_o));
  parts.loss_a = contrastive_loss(frame_side, prompts.frame(), label, h.tau, h.variant);
  parts.total = total_loss(parts.loss_a, parts.loss_o, h.lambda);
  return parts;
}

template class Model<float>;
template class Model<double>;

}  // namespace evcrab
