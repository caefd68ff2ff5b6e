#include "evcrab/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "evcrab/errors.hpp"
#include "evcrab/ops.hpp"

namespace evcrab {

using ad::Tensor;

void validate(const LIFParams& p) {
  if (!(p.tau_m > 1.0)) throw ConfigError("LIF tau_m must be > 1");
  if (!(p.u_th > p.u_reset)) throw ConfigError("LIF u_th must exceed u_reset");
}

template <class T>
void lif_step(const LIFParams& p, LIFState<T>& state, std::span<const T> input) {
  if (input.size() != state.v.size()) {
    throw ShapeError("lif_step: input has " + std::to_string(input.size()) + " cells, state has " +
                     std::to_string(state.v.size()));
  }
  const T keep = T(1) - T(1) / static_cast<T>(p.tau_m);
  const T gain = T(1) / static_cast<T>(p.tau_m);
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T u = keep * state.v[i] + gain * input[i];
    const T s = u >= static_cast<T>(p.u_th) ? T(1) : T(0);
    state.u[i] = u;
    state.s[i] = s;
    state.v[i] = u * (T(1) - s) + static_cast<T>(p.u_reset) * s;
  }
}

BinnedMaps rasterize_bins(const EventStream& stream, int t_raw, int grid_h, int grid_w) {
  if (t_raw < 1) throw ConfigError("T_raw must be >= 1");
  if (grid_h < 1 || grid_w < 1 || grid_h > stream.height || grid_w > stream.width) {
    throw ConfigError("sampler grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                      " must fit the " + std::to_string(stream.height) + "x" +
                      std::to_string(stream.width) + " sensor");
  }
  BinnedMaps m;
  m.bins = t_raw;
  m.height = grid_h;
  m.width = grid_w;
  m.data.assign(m.bin_size() * t_raw, 0.0f);
  m.counts.assign(t_raw, 0);
  for (const Event& e : stream.events) {
    const int j = window_index(e.t, stream.duration, t_raw);
    const int c = e.p > 0 ? 0 : 1;
    const int y = grid_coord(e.y, stream.height, grid_h);
    const int x = grid_coord(e.x, stream.width, grid_w);
    m.data[j * m.bin_size() + (static_cast<std::size_t>(c) * grid_h + y) * grid_w + x] += 1.0f;
    ++m.counts[j];
  }
  for (int j = 0; j < t_raw; ++j) {
    float* b = m.data.data() + j * m.bin_size();
    const float peak = *std::max_element(b, b + m.bin_size());
    if (peak > 0) {
      for (std::size_t i = 0; i < m.bin_size(); ++i) b[i] /= peak;
    }
  }
  return m;
}

void validate(const SRRNNConfig& cfg) {
  validate(cfg.lif);
  if (cfg.kernel < 1 || cfg.kernel % 2 == 0) throw ConfigError("SRRNN kernel must be odd and >= 1");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
  if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) throw ConfigError("rho must lie in (0,1)");
  if (!(cfg.surrogate_width > 0.0)) throw ConfigError("surrogate width must be positive");
  if (cfg.grid_h < 1 || cfg.grid_w < 1) throw ConfigError("sampler grid must be non-empty");
}

template <class T>
SRRNNCell<T> make_srrnn_cell(ad::ParameterStore<T>& store, const std::string& prefix,
                             const SRRNNConfig& cfg, Rng& rng) {
  validate(cfg);
  const auto k = static_cast<std::size_t>(cfg.kernel);
  const std::size_t kk = k * k;
  const std::size_t centre = (k / 2) * k + k / 2;
  // event current: local 3x3 pooling of both polarities; spikes and the
  // carried current start as weak self-excitation
  auto w_ie = normal_values<T>(rng, 2 * kk, 0.05, 0.5);
  auto w_is = normal_values<T>(rng, kk, 0.02);
  w_is[centre] += T(0.2);
  auto w_ui = normal_values<T>(rng, kk, 0.02);
  w_ui[centre] += T(0.5);
  auto w_ge = normal_values<T>(rng, 2 * kk, 0.02);
  auto w_gs = normal_values<T>(rng, kk, 0.02);
  SRRNNCell<T> cell;
  cell.cfg = cfg;
  cell.w_ie = store.add(prefix + "w_ie", {1, 2, k, k}, std::move(w_ie));
  cell.w_is = store.add(prefix + "w_is", {1, 1, k, k}, std::move(w_is));
  cell.w_ui = store.add(prefix + "w_ui", {1, 1, k, k}, std::move(w_ui));
  cell.w_ge = store.add(prefix + "w_ge", {1, 2, k, k}, std::move(w_ge));
  cell.w_gs = store.add(prefix + "w_gs", {1, 1, k, k}, std::move(w_gs));
  return cell;
}

template <class T>
SRRNNCell<T> zero_srrnn_cell(const SRRNNConfig& cfg) {
  validate(cfg);
  const auto k = static_cast<std::size_t>(cfg.kernel);
  SRRNNCell<T> cell;
  cell.cfg = cfg;
  cell.w_ie = Tensor<T>::zeros({1, 2, k, k});
  cell.w_is = Tensor<T>::zeros({1, 1, k, k});
  cell.w_ui = Tensor<T>::zeros({1, 1, k, k});
  cell.w_ge = Tensor<T>::zeros({1, 2, k, k});
  cell.w_gs = Tensor<T>::zeros({1, 1, k, k});
  return cell;
}

template <class T>
SRRNNState<T> srrnn_initial_state(const SRRNNConfig& cfg) {
  const ad::Shape shape{1, static_cast<std::size_t>(cfg.grid_h), static_cast<std::size_t>(cfg.grid_w)};
  return {Tensor<T>::zeros(shape), Tensor<T>::zeros(shape), Tensor<T>::zeros(shape),
          Tensor<T>::zeros(shape)};
}

template <class T>
SRRNNState<T> srrnn_step(const SRRNNCell<T>& cell, const SRRNNState<T>& state,
                         const Tensor<T>& event_map) {
  const auto& cfg = cell.cfg;
  const ad::Shape expect{2, static_cast<std::size_t>(cfg.grid_h), static_cast<std::size_t>(cfg.grid_w)};
  if (event_map.shape() != expect) {
    throw ShapeError("srrnn_step: event map " + ad::to_string(event_map.shape()) +
                     " does not match grid " + ad::to_string(expect));
  }
  ad::Conv2dOptions same;
  same.pad_h = same.pad_w = static_cast<std::size_t>(cfg.kernel / 2);
  auto conv = [&](const Tensor<T>& x, const Tensor<T>& w) { return ad::conv2d(x, w, same); };

  auto current = ad::add(conv(event_map, cell.w_ie), conv(state.s, cell.w_is));
  auto gamma = ad::sigmoid(ad::add(conv(event_map, cell.w_ge), conv(state.s, cell.w_gs)));
  const T alpha = static_cast<T>(cfg.alpha);
  auto u = ad::add(ad::add(ad::mul(gamma, state.v), ad::scale(current, alpha)),
                   ad::scale(conv(state.current, cell.w_ui), T(1) - alpha));
  auto s = ad::spike(u, static_cast<T>(cfg.lif.u_th), static_cast<T>(cfg.surrogate_width));
  // v = u - s (u - u_reset)
  auto v = ad::sub(u, ad::mul(s, ad::add_scalar(u, -static_cast<T>(cfg.lif.u_reset))));
  return {u, v, s, current};
}

std::string sampler_name(SamplerKind k) {
  switch (k) {
    case SamplerKind::Sliding: return "sliding";
    case SamplerKind::Snn: return "snn";
    case SamplerKind::Scl: return "scl";
  }
  return "?";
}

SamplerKind parse_sampler(const std::string& name) {
  if (name == "sliding") return SamplerKind::Sliding;
  if (name == "snn") return SamplerKind::Snn;
  if (name == "scl") return SamplerKind::Scl;
  throw ConfigError("unknown sampler \"" + name + "\" (expected sliding, snn or scl)");
}

namespace {

void check_slices(int t_prime, int t_raw, std::int64_t duration) {
  if (t_prime < 1) throw ConfigError("T' must be >= 1");
  if (t_raw >= 1 && t_prime > t_raw) {
    throw ConfigError("T' (" + std::to_string(t_prime) + ") exceeds T_raw (" +
                      std::to_string(t_raw) + ")");
  }
  if (duration < t_prime) {
    throw ConfigError("stream duration " + std::to_string(duration) + "us is shorter than T' = " +
                      std::to_string(t_prime) + " slices");
  }
}

SampleResult finish(const EventStream& stream, std::vector<std::int64_t> boundaries) {
  SampleResult r;
  r.trace.boundaries = std::move(boundaries);
  r.slices = partition_stream(stream, r.trace.boundaries);
  for (const auto& s : r.slices) r.trace.slice_counts.push_back(s.events.size());
  r.retained.assign(stream.events.size(), 1);
  r.trace.retained_fraction = 1.0;
  return r;
}

// Slice index of each micro-bin, by the position of the bin's end time.
std::vector<std::vector<int>> bins_per_slice(std::span<const std::int64_t> boundaries,
                                             std::int64_t duration, int t_raw) {
  const int slices = static_cast<int>(boundaries.size()) - 1;
  std::vector<std::vector<int>> out(slices);
  int k = 0;
  for (int j = 0; j < t_raw; ++j) {
    const std::int64_t end = window_edge(j + 1, duration, t_raw);
    while (k + 1 < slices && end > boundaries[k + 1]) ++k;
    out[k].push_back(j);
  }
  return out;
}

}  // namespace

std::vector<std::int64_t> boundaries_from_spikes(std::span<const int> spike_bins,
                                                 std::int64_t duration, int t_prime, int t_raw,
                                                 bool* used_fallback) {
  check_slices(t_prime, t_raw, duration);
  std::vector<std::int64_t> b{0};
  for (int j : spike_bins) {
    if (static_cast<int>(b.size()) == t_prime) break;
    if (j < 0 || j + 1 >= t_raw) continue;
    const std::int64_t edge = window_edge(j + 1, duration, t_raw);
    if (edge > b.back() && edge < duration) b.push_back(edge);
  }
  b.push_back(duration);
  const int missing = t_prime + 1 - static_cast<int>(b.size());
  if (used_fallback) *used_fallback = missing > 0;
  if (missing > 0) {
    std::size_t widest = 0;
    for (std::size_t i = 1; i + 1 < b.size(); ++i) {
      if (b[i + 1] - b[i] > b[widest + 1] - b[widest]) widest = i;
    }
    const std::int64_t lo = b[widest];
    const std::int64_t len = b[widest + 1] - lo;
    const int parts = missing + 1;
    if (len < parts) {
      throw ConfigError("cannot place " + std::to_string(missing) +
                        " more boundaries: widest gap is " + std::to_string(len) + "us");
    }
    std::vector<std::int64_t> fill;
    for (int i = 1; i <= missing; ++i) fill.push_back(lo + len * i / parts);
    b.insert(b.begin() + static_cast<std::ptrdiff_t>(widest) + 1, fill.begin(), fill.end());
  }
  return b;
}

SampleResult sliding_window_sample(const EventStream& stream, int t_prime) {
  check_slices(t_prime, 0, stream.duration);
  std::vector<std::int64_t> b;
  for (int k = 0; k <= t_prime; ++k) b.push_back(window_edge(k, stream.duration, t_prime));
  return finish(stream, std::move(b));
}

SampleResult vanilla_snn_sample(const EventStream& stream, const LIFParams& lif, int t_prime,
                                int t_raw, int grid_h, int grid_w, double gain) {
  validate(lif);
  check_slices(t_prime, t_raw, stream.duration);
  const auto maps = rasterize_bins(stream, t_raw, grid_h, grid_w);
  std::vector<double> m(t_raw, 0.0);
  double total = 0;
  for (int j = 0; j < t_raw; ++j) {
    double s = 0;
    for (float v : maps.bin(j)) s += v;
    m[j] = s / static_cast<double>(maps.bin_size());
    total += m[j];
  }
  const double mean = total / t_raw;
  LIFState<double> state(1);
  std::vector<int> spikes;
  for (int j = 0; j < t_raw; ++j) {
    const double drive = mean > 0 ? gain * m[j] / mean : 0.0;
    lif_step<double>(lif, state, std::span<const double>(&drive, 1));
    if (state.s[0] > 0) spikes.push_back(j);
  }
  bool fell_back = false;
  auto r = finish(stream, boundaries_from_spikes(spikes, stream.duration, t_prime, t_raw, &fell_back));
  r.trace.spike_bins = std::move(spikes);
  r.trace.fallback = fell_back;
  return r;
}

template <class T>
SampleResult scl_sample_binned(const EventStream& stream, const BinnedMaps& maps,
                               const SRRNNCell<T>& cell, int t_prime,
                               std::vector<Tensor<T>>* spikes) {
  const auto& cfg = cell.cfg;
  check_slices(t_prime, maps.bins, stream.duration);
  if (maps.height != cfg.grid_h || maps.width != cfg.grid_w) {
    throw ShapeError("scl_sample: binned maps do not match the cell grid");
  }
  const std::size_t cells = static_cast<std::size_t>(cfg.grid_h) * cfg.grid_w;
  auto state = srrnn_initial_state<T>(cfg);
  std::vector<int> spike_bins;
  std::vector<std::vector<std::uint8_t>> fired(maps.bins);
  if (spikes) spikes->clear();
  for (int j = 0; j < maps.bins; ++j) {
    auto bin = maps.bin(j);
    auto map = Tensor<T>::from({2, static_cast<std::size_t>(cfg.grid_h), static_cast<std::size_t>(cfg.grid_w)},
                               std::vector<T>(bin.begin(), bin.end()));
    state = srrnn_step(cell, state, map);
    const auto s = state.s.data();
    std::size_t active = 0;
    fired[j].resize(cells);
    for (std::size_t i = 0; i < cells; ++i) {
      fired[j][i] = s[i] > T(0.5);
      active += fired[j][i];
    }
    if (static_cast<double>(active) / static_cast<double>(cells) >= cfg.rho) spike_bins.push_back(j);
    if (spikes) spikes->push_back(state.s);
  }
  // a spike in the last bin proposes no boundary
  const bool any_spike =
      std::any_of(spike_bins.begin(), spike_bins.end(), [&](int j) { return j + 1 < maps.bins; });
  bool fell_back = false;
  auto r = finish(stream,
                  boundaries_from_spikes(spike_bins, stream.duration, t_prime, maps.bins, &fell_back));
  r.trace.spike_bins = std::move(spike_bins);
  r.trace.fallback = fell_back;
  r.slice_bins = bins_per_slice(r.trace.boundaries, stream.duration, maps.bins);

  if (any_spike && !stream.events.empty()) {
    // an event is kept when its grid cell spiked during its slice
    std::vector<std::uint8_t> keep(stream.events.size(), 0);
    std::size_t kept = 0;
    std::size_t offset = 0;
    for (std::size_t k = 0; k < r.slices.size(); ++k) {
      std::vector<std::uint8_t> active(cells, 0);
      for (int j : r.slice_bins[k]) {
        for (std::size_t i = 0; i < cells; ++i) active[i] |= fired[j][i];
      }
      for (std::size_t e = 0; e < r.slices[k].events.size(); ++e) {
        const Event& ev = r.slices[k].events[e];
        const auto cell_index =
            static_cast<std::size_t>(grid_coord(ev.y, stream.height, cfg.grid_h)) * cfg.grid_w +
            grid_coord(ev.x, stream.width, cfg.grid_w);
        keep[offset + e] = active[cell_index];
        kept += active[cell_index];
      }
      offset += r.slices[k].events.size();
    }
    if (kept > 0) {
      r.retained = std::move(keep);
      r.trace.retained_fraction =
          static_cast<double>(kept) / static_cast<double>(stream.events.size());
    }
  }
  return r;
}

template <class T>
SampleResult scl_sample(const EventStream& stream, const SRRNNCell<T>& cell, int t_prime,
                        int t_raw, std::vector<Tensor<T>>* spikes) {
  check_slices(t_prime, t_raw, stream.duration);
  const auto maps = rasterize_bins(stream, t_raw, cell.cfg.grid_h, cell.cfg.grid_w);
  return scl_sample_binned(stream, maps, cell, t_prime, spikes);
}

ContextVoxelGrid aggregate_context(std::span<const EventStream> slices, int height, int width,
                                   SliceNorm norm) {
  if (slices.empty()) throw ConfigError("aggregate_context needs at least one slice");
  ContextVoxelGrid g;
  g.height = height;
  g.width = width;
  g.slices = static_cast<int>(slices.size());
  g.channels = 2;
  g.data.assign(static_cast<std::size_t>(height) * width * g.slices * 2, 0.0f);
  auto index = [&](int y, int x, int k, int c) {
    return ((static_cast<std::size_t>(y) * width + x) * g.slices + k) * 2 + c;
  };
  for (int k = 0; k < g.slices; ++k) {
    const auto& s = slices[k];
    if (height > s.height || width > s.width) {
      throw ConfigError("context grid larger than the sensor");
    }
    for (const Event& e : s.events) {
      const int y = grid_coord(e.y, s.height, height);
      const int x = grid_coord(e.x, s.width, width);
      g.data[index(y, x, k, e.p > 0 ? 0 : 1)] += 1.0f;
    }
  }
  std::vector<float> peak(g.slices, 0.0f);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const int k = static_cast<int>((i / 2) % g.slices);
    peak[k] = std::max(peak[k], g.data[i]);
  }
  if (norm == SliceNorm::PerStream) {
    const float all = *std::max_element(peak.begin(), peak.end());
    std::fill(peak.begin(), peak.end(), all);
  }
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const int k = static_cast<int>((i / 2) % g.slices);
    if (peak[k] > 0) g.data[i] /= peak[k];
  }
  return g;
}

template <class T>
Tensor<T> context_tensor(const ContextVoxelGrid& grid) {
  const auto h = static_cast<std::size_t>(grid.height);
  const auto w = static_cast<std::size_t>(grid.width);
  const auto n = static_cast<std::size_t>(grid.slices);
  const auto c = static_cast<std::size_t>(grid.channels);
  std::vector<T> out(c * h * w * n);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t k = 0; k < n; ++k) {
          out[((ci * h + y) * w + x) * n + k] = static_cast<T>(grid.data[((y * w + x) * n + k) * c + ci]);
        }
      }
    }
  }
  return Tensor<T>::from({c, h, w, n}, std::move(out));
}

template <class T>
Tensor<T> spike_gate(const std::vector<Tensor<T>>& spikes,
                     const std::vector<std::vector<int>>& slice_bins, int height, int width) {
  const auto h = static_cast<std::size_t>(height);
  const auto w = static_cast<std::size_t>(width);
  if (spikes.empty()) throw ShapeError("spike_gate: no spike maps");
  auto all = ad::concat(spikes, 0);  // [T_raw, H, W]
  std::vector<Tensor<T>> columns;
  for (const auto& bins : slice_bins) {
    Tensor<T> g;
    if (bins.empty()) {
      g = Tensor<T>::zeros({h, w});
    } else {
      std::vector<std::size_t> idx(bins.begin(), bins.end());
      g = ad::mean_axis(ad::take_rows(all, idx), 0);
    }
    columns.push_back(ad::reshape(g, {h, w, 1}));
  }
  auto g = ad::concat(columns, 2);
  return ad::add_scalar(ad::sub(g, ad::stop_gradient(g)), T(1));
}

#define EVCRAB_INSTANTIATE(T)                                                                    \
  template void lif_step<T>(const LIFParams&, LIFState<T>&, std::span<const T>);                 \
  template SRRNNCell<T> make_srrnn_cell<T>(ad::ParameterStore<T>&, const std::string&,           \
                                           const SRRNNConfig&, Rng&);                            \
  template SRRNNCell<T> zero_srrnn_cell<T>(const SRRNNConfig&);                                  \
  template SRRNNState<T> srrnn_initial_state<T>(const SRRNNConfig&);                             \
  template SRRNNState<T> srrnn_step<T>(const SRRNNCell<T>&, const SRRNNState<T>&,                \
                                       const Tensor<T>&);                                        \
  template SampleResult scl_sample<T>(const EventStream&, const SRRNNCell<T>&, int, int,         \
                                      std::vector<Tensor<T>>*);                                  \
  template SampleResult scl_sample_binned<T>(const EventStream&, const BinnedMaps&,              \
                                             const SRRNNCell<T>&, int, std::vector<Tensor<T>>*); \
  template Tensor<T> context_tensor<T>(const ContextVoxelGrid&);                                 \
  template Tensor<T> spike_gate<T>(const std::vector<Tensor<T>>&,                                \
                                   const std::vector<std::vector<int>>&, int, int);

EVCRAB_INSTANTIATE(float)
EVCRAB_INSTANTIATE(double)

#undef EVCRAB_INSTANTIATE

}  // namespace evcrab
