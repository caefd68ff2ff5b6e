#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evcrab/events.hpp"
#include "evcrab/init.hpp"
#include "evcrab/tensor.hpp"

namespace evcrab {

struct LIFParams {
  double tau_m = 2.0;
  double u_th = 1.0;
  double u_reset = 0.0;
};

void validate(const LIFParams& p);

/// Per-pixel LIF state: pre-reset potential u, post-reset v, last spikes s.
template <class T>
struct LIFState {
  std::vector<T> u, v, s;
  explicit LIFState(std::size_t n = 0) : u(n, T(0)), v(n, T(0)), s(n, T(0)) {}
};

/// u = (1 - 1/tau) v_prev + I / tau; s = [u >= u_th]; v = u (1 - s) + u_reset s.
template <class T>
void lif_step(const LIFParams& p, LIFState<T>& state, std::span<const T> input);

/// T_raw micro-bin count maps on the sampler grid, layout [bin][channel][y][x]
/// with channel 0 positive and 1 negative events. Each bin is divided by its
/// own maximum over both channels.
struct BinnedMaps {
  int bins = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;
  std::vector<std::int64_t> counts;  // raw events per bin

  std::size_t bin_size() const { return 2 * static_cast<std::size_t>(height) * width; }
  std::span<const float> bin(int j) const { return {data.data() + j * bin_size(), bin_size()}; }
  float at(int j, int c, int y, int x) const {
    return data[j * bin_size() + (static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

BinnedMaps rasterize_bins(const EventStream& stream, int t_raw, int grid_h, int grid_w);

/// Nearest-pixel map from sensor to grid coordinates.
inline int grid_coord(int v, int sensor, int grid) {
  return static_cast<int>(static_cast<std::int64_t>(v) * grid / sensor);
}

struct SRRNNConfig {
  int kernel = 3;
  double alpha = 0.5;
  double rho = 0.1;
  double surrogate_width = 1.0;
  LIFParams lif;
  int grid_h = 32;
  int grid_w = 32;
};

void validate(const SRRNNConfig& cfg);

/// Recurrent spiking cell. Kernels are 2D convolutions over the sampler grid
/// (zero padding, no bias): w_ie, w_ge read the 2-channel event map; w_is,
/// w_gs read the previous spike map; w_ui reads the previous input current.
template <class T>
struct SRRNNCell {
  SRRNNConfig cfg;
  ad::Tensor<T> w_ie, w_is, w_ui, w_ge, w_gs;
};

/// Registers the five kernels under `prefix` (e.g. "scl.w_ie").
template <class T>
SRRNNCell<T> make_srrnn_cell(ad::ParameterStore<T>& store, const std::string& prefix,
                             const SRRNNConfig& cfg, Rng& rng);

/// Cell with every kernel zero (for oracles); kernels are plain leaves.
template <class T>
SRRNNCell<T> zero_srrnn_cell(const SRRNNConfig& cfg);

/// Maps are [1,H,W]; zeros at t = 0.
template <class T>
struct SRRNNState {
  ad::Tensor<T> u, v, s, current;
};

template <class T>
SRRNNState<T> srrnn_initial_state(const SRRNNConfig& cfg);

/// One recurrence step on a [2,H,W] event map:
///   I = w_ie * E + w_is * s_prev
///   gamma = sigmoid(w_ge * E + w_gs * s_prev)
///   u = gamma v_prev + alpha I + (1 - alpha) w_ui * I_prev
///   s = [u >= u_th], v = u (1 - s) + u_reset s
template <class T>
SRRNNState<T> srrnn_step(const SRRNNCell<T>& cell, const SRRNNState<T>& state,
                         const ad::Tensor<T>& event_map);

enum class SamplerKind { Sliding, Snn, Scl };
std::string sampler_name(SamplerKind k);
SamplerKind parse_sampler(const std::string& name);

struct SampleTrace {
  std::vector<std::int64_t> boundaries;  // t^0 .. t^{T'}
  std::vector<std::size_t> slice_counts;
  std::vector<int> spike_bins;           // micro-bins with a global spike
  double retained_fraction = 1.0;
  bool fallback = false;                 // at least one boundary was filled in
};

struct SampleResult {
  SampleTrace trace;
  std::vector<EventStream> slices;
  std::vector<std::uint8_t> retained;  // per input event, 1 if kept
  /// Micro-bins whose end falls in each slice (SCL only; empty otherwise).
  std::vector<std::vector<int>> slice_bins;
};

/// Interior boundaries from global-spike micro-bins: a spike in bin j proposes
/// the bin end e_{j+1}; the first T'-1 usable proposals are kept and the rest
/// are filled by splitting the largest gap into equal integer parts.
std::vector<std::int64_t> boundaries_from_spikes(std::span<const int> spike_bins,
                                                 std::int64_t duration, int t_prime, int t_raw,
                                                 bool* used_fallback = nullptr);

/// Uniform partition of [0, duration] into T' windows.
SampleResult sliding_window_sample(const EventStream& stream, int t_prime);

/// Boundaries from one scalar LIF neuron fed gain * m[t] / mean(m), m[t] the
/// spatial mean of micro-bin t (zero drive for an empty stream).
SampleResult vanilla_snn_sample(const EventStream& stream, const LIFParams& lif, int t_prime,
                                int t_raw, int grid_h = 32, int grid_w = 32, double gain = 1.0);

/// SCL sampling. `spikes` receives the per-bin spike maps ([1,H,W], graph
/// attached when the cell's kernels require gradients).
template <class T>
SampleResult scl_sample(const EventStream& stream, const SRRNNCell<T>& cell, int t_prime,
                        int t_raw, std::vector<ad::Tensor<T>>* spikes = nullptr);

/// Same as scl_sample on precomputed micro-bin maps.
template <class T>
SampleResult scl_sample_binned(const EventStream& stream, const BinnedMaps& maps,
                               const SRRNNCell<T>& cell, int t_prime,
                               std::vector<ad::Tensor<T>>* spikes = nullptr);

enum class SliceNorm { PerSlice, PerStream };

/// Dense H x W x T' x C grid of polarity-split counts (channel 0 positive,
/// 1 negative), nearest-pixel resampled from the sensor.
struct ContextVoxelGrid {
  int height = 0, width = 0, slices = 0, channels = 2;
  std::vector<float> data;

  float at(int y, int x, int k, int c) const {
    return data[((static_cast<std::size_t>(y) * width + x) * slices + k) * channels + c];
  }
};

ContextVoxelGrid aggregate_context(std::span<const EventStream> slices, int height, int width,
                                   SliceNorm norm = SliceNorm::PerSlice);

/// Grid as a [C,H,W,T'] tensor (the patch-embedding layout).
template <class T>
ad::Tensor<T> context_tensor(const ContextVoxelGrid& grid);

/// Straight-through gate 1 + g - stopgrad(g), g[k,y,x] the mean spike of cell
/// (y,x) over the micro-bins of slice k; returned as [H,W,T'] (value exactly 1).
template <class T>
ad::Tensor<T> spike_gate(const std::vector<ad::Tensor<T>>& spikes,
                         const std::vector<std::vector<int>>& slice_bins, int height, int width);

}  // namespace evcrab
