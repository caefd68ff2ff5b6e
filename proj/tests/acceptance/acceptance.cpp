// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any fails.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "evcrab/commands.hpp"
#include "evcrab/frame_encoder.hpp"
#include "evcrab/gradcheck.hpp"
#include "evcrab/head.hpp"
#include "evcrab/hilbert.hpp"
#include "evcrab/kernels.hpp"
#include "evcrab/ops.hpp"
#include "evcrab/point_encoder.hpp"
#include "evcrab/sampler.hpp"
#include "evcrab/serialize.hpp"
#include "evcrab/synth.hpp"
#include "evcrab/trainer.hpp"
#include "properties.hpp"
#include "sampler_fixtures.hpp"
#include "support.hpp"
#include "toy_model.hpp"

namespace fs = std::filesystem;
using namespace evcrab;
using T = ad::Tensor<double>;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string summary;
};

// Accumulates named sub-checks; the first failures are kept for the report.
struct Ledger {
  int checks = 0;
  int failed = 0;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    ++checks;
    if (ok) return;
    if (failed++ < 5) notes.push_back(what);
  }
  std::string failures() const {
    std::string s;
    for (const auto& n : notes) s += "; " + n;
    return s;
  }
};

int manhattan(const GridCell& a, const GridCell& b) {
  return std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.t - b.t);
}

// ---------------------------------------------------------------- 1

Outcome hilbert_correctness() {
  const auto start = Clock::now();
  Ledger l;
  for (int bits = 0; bits <= 4; ++bits) {
    const std::uint64_t cells = std::uint64_t{1} << (3 * bits);
    std::vector<bool> hit(cells, false);
    const int side = 1 << bits;
    for (int x = 0; x < side; ++x)
      for (int y = 0; y < side; ++y)
        for (int t = 0; t < side; ++t) {
          const auto i = hilbert_encode({x, y, t}, bits);
          l.expect(i < cells && !hit[i], "encode collision at order " + std::to_string(bits));
          if (i < cells) hit[i] = true;
          l.expect(hilbert_decode(i, bits) == GridCell{x, y, t}, "decode mismatch at order " + std::to_string(bits));
        }
    for (std::uint64_t i = 0; i + 1 < cells; ++i) {
      l.expect(manhattan(hilbert_decode(i, bits), hilbert_decode(i + 1, bits)) == 1,
               "non-unit step at order " + std::to_string(bits) + " index " + std::to_string(i));
    }
  }
  std::size_t orders = 0;
  for (int nx = 1; nx <= 16; ++nx)
    for (int ny = 1; ny <= 16; ++ny)
      for (int nt = 1; nt <= 16; ++nt) {
        const GridDims d{nx, ny, nt};
        const auto order = build_scan_order(d);
        const int bits = hilbert_bits(d);
        ++orders;
        const std::size_t n = static_cast<std::size_t>(nx) * ny * nt;
        std::vector<bool> seen(n, false);
        bool ok = order.cells.size() == n;
        for (const auto& c : order.cells) {
          if (c.x < 0 || c.x >= nx || c.y < 0 || c.y >= ny || c.t < 0 || c.t >= nt) {
            ok = false;
            continue;
          }
          const auto k = token_index(c, d);
          ok = ok && !seen[k];
          seen[k] = true;
        }
        l.expect(ok, "not a bijection for " + std::to_string(nx) + "x" + std::to_string(ny) + "x" + std::to_string(nt));
        // cells adjacent on the padded curve must stay adjacent after filtering
        for (std::size_t i = 0; i + 1 < order.cells.size(); ++i) {
          const auto a = hilbert_encode(order.cells[i], bits);
          const auto b = hilbert_encode(order.cells[i + 1], bits);
          l.expect(a < b, "order not increasing along the curve");
          if (b == a + 1) l.expect(manhattan(order.cells[i], order.cells[i + 1]) == 1, "retained neighbours not adjacent");
        }
        const auto back = reverse_order(order);
        l.expect(reverse_order(back).cells == order.cells, "reverse is not an involution");
      }
  const double secs = seconds_since(start);
  l.expect(secs < 10.0, "runtime " + std::to_string(secs) + " s");
  std::ostringstream s;
  s << "orders 0..4 exhaustive, " << orders << " grid shapes up to 16x16x16, " << l.checks << " checks, "
    << l.failed << " violations, " << secs << " s" << l.failures();
  return {l.failed == 0, s.str()};
}

// ---------------------------------------------------------------- 2

Outcome scan_equivalence() {
  const auto start = Clock::now();
  PointEncoderConfig cfg;
  cfg.dim = 8;
  cfg.expand = 2;  // E = 16 channels
  cfg.state = 8;
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    ad::ParameterStore<double> store;
    Rng rng(1000 + static_cast<std::uint64_t>(i));
    const auto p = make_mamba<double>(store, "m.", cfg, rng);
    test::Gen g(2, static_cast<std::uint64_t>(i));
    test::randomize_params(store, g);
    const std::size_t len = 256, e = p.d_skip.dim(0), n = 8, r = p.dt_rank;
    const T x = T::from({len, e}, g.reals(len * e, -2, 2));
    const T dt = T::from({len, r}, g.reals(len * r, -1, 1));
    const T b = T::from({len, n}, g.reals(len * n, -1, 1));
    const T c = T::from({len, n}, g.reals(len * n, -1, 1));
    ad::NoGradGuard guard;
    const T seq = selective_ssm_scan(x, dt, b, c, p, ad::ScanMode::Sequential);
    const T par = selective_ssm_scan(x, dt, b, c, p, ad::ScanMode::Parallel);
    for (std::size_t k = 0; k < seq.numel(); ++k) worst = std::max(worst, std::abs(seq[k] - par[k]));
  }
  const double secs = seconds_since(start);
  std::ostringstream s;
  s << "100 instances L=256 D=16 N=8, max |seq - par| = " << worst << ", " << secs << " s";
  return {worst < 1e-10 && secs < 30.0, s.str()};
}

// ---------------------------------------------------------------- 3

T readout(const T& y, std::uint64_t seed = 99) {
  test::Gen g(seed);
  return ad::sum(ad::mul(y, T::from(y.shape(), g.reals(y.numel(), -1, 1))));
}

using Inputs = std::vector<std::pair<std::string, T>>;

Inputs store_inputs(const ad::ParameterStore<double>& store) {
  Inputs out;
  for (const auto& p : store.params()) out.emplace_back(p.name, p.tensor);
  return out;
}

struct GradCase {
  std::string name;
  std::function<ad::GradCheckResult()> run;
};

std::vector<GradCase> gradient_cases() {
  using namespace ad;
  std::vector<GradCase> cases;
  auto check = [](Inputs in, std::function<T()> f) { return finite_diff_check<double>(in, f); };

  cases.push_back({"add/sub/mul broadcast", [=] {
                     test::Gen g(21);
                     const T a = test::leaf({3, 4}, g), b = test::leaf({3, 4}, g), row = test::leaf({4}, g);
                     return check({{"a", a}, {"b", b}, {"row", row}},
                                  [=] { return readout(add(sub(mul(a, b), row), mul(a, row))); });
                   }});
  cases.push_back({"scale/add_scalar", [=] {
                     test::Gen g(22);
                     const T a = test::leaf({3, 4}, g);
                     return check({{"a", a}}, [=] { return readout(add_scalar(scale(a, 1.7), -0.4)); });
                   }});
  cases.push_back({"exp/log/softplus/sigmoid/silu", [=] {
                     test::Gen g(23);
                     const T a = test::leaf({3, 4}, g), pos = test::leaf({3, 4}, g, 0.2, 2.0);
                     return check({{"a", a}, {"pos", pos}}, [=] {
                       return readout(add(add(exp(a), log(pos)), add(softplus(a), mul(sigmoid(a), silu(pos)))));
                     });
                   }});
  cases.push_back({"matmul/matmul_nt/linear", [=] {
                     test::Gen g(24);
                     const T a = test::leaf({3, 4}, g), m = test::leaf({4, 2}, g), n = test::leaf({5, 4}, g),
                             bias = test::leaf({2}, g);
                     return check({{"a", a}, {"m", m}, {"n", n}, {"bias", bias}}, [=] {
                       return add(readout(matmul(a, m)), add(readout(matmul_nt(a, n), 3), readout(linear(a, m, bias), 4)));
                     });
                   }});
  cases.push_back({"conv2d strided/padded/grouped", [=] {
                     test::Gen g(25);
                     const T x = test::leaf({4, 5, 6}, g), w = test::leaf({2, 2, 3, 2}, g);
                     Conv2dOptions opt;
                     opt.stride_h = 2;
                     opt.pad_h = opt.pad_w = 1;
                     opt.groups = 2;
                     return check({{"x", x}, {"w", w}}, [=] { return readout(conv2d(x, w, opt)); });
                   }});
  cases.push_back({"conv3d strided", [=] {
                     test::Gen g(26);
                     const T x = test::leaf({2, 4, 4, 2}, g), w = test::leaf({3, 2, 2, 2, 1}, g);
                     return check({{"x", x}, {"w", w}}, [=] { return readout(conv3d(x, w, 2, 2, 1)); });
                   }});
  cases.push_back({"conv1d causal depthwise/grouped", [=] {
                     test::Gen g(27);
                     const T x = test::leaf({6, 4}, g), wd = test::leaf({4, 1, 3}, g), wg = test::leaf({6, 2, 3}, g);
                     return check({{"x", x}, {"wd", wd}, {"wg", wg}}, [=] {
                       return add(readout(conv1d(x, wd, 4, Padding::Causal)), readout(conv1d(x, wg, 2, Padding::Same), 5));
                     });
                   }});
  cases.push_back({"softmax/log_softmax", [=] {
                     test::Gen g(28);
                     const T a = test::leaf({3, 4}, g);
                     return check({{"a", a}}, [=] { return add(readout(softmax(a)), readout(log_softmax(a), 7)); });
                   }});
  cases.push_back({"layer_norm", [=] {
                     test::Gen g(29);
                     const T a = test::leaf({3, 4}, g), gamma = test::leaf({4}, g), beta = test::leaf({4}, g);
                     return check({{"a", a}, {"gamma", gamma}, {"beta", beta}},
                                  [=] { return readout(layer_norm(a, gamma, beta)); });
                   }});
  cases.push_back({"l2_normalize", [=] {
                     test::Gen g(30);
                     const T a = test::leaf({3, 4}, g);
                     return check({{"a", a}}, [=] { return readout(l2_normalize(a)); });
                   }});
  cases.push_back({"sum/mean/mean_axis", [=] {
                     test::Gen g(31);
                     const T a = test::leaf({3, 4}, g);
                     return check({{"a", a}}, [=] {
                       return add(add(scale(sum(mul(a, a)), 0.3), mean(exp(a))),
                                  add(readout(mean_axis(a, 0)), readout(mean_axis(a, 1), 2)));
                     });
                   }});
  cases.push_back({"reshape/permute/concat/slice/take_rows", [=] {
                     test::Gen g(32);
                     const T a = test::leaf({3, 4}, g), b = test::leaf({3, 4}, g), c3 = test::leaf({2, 3, 2}, g);
                     return check({{"a", a}, {"b", b}, {"c3", c3}}, [=] {
                       const std::vector<std::size_t> idx = {2, 0, 2, 1};
                       const T sl = slice(concat<double>({a, b}, 1), 1, 2, 7);
                       return add(add(readout(sl), readout(reshape(permute(c3, {2, 0, 1}), {3, 4}), 2)),
                                  readout(take_rows(a, idx), 3));
                     });
                   }});
  cases.push_back({"surrogate spike (primitive)", [=] {
                     test::Gen g(33);
                     const T x = test::leaf({12}, g, -1.0, 3.0);
                     SurrogatePrimitiveScope scope;
                     return check({{"x", x}}, [=] { return readout(spike(x, 1.0, 0.8)); });
                   }});
  for (auto mode : {ScanMode::Sequential, ScanMode::Parallel}) {
    cases.push_back({mode == ScanMode::Sequential ? "selective_scan sequential" : "selective_scan parallel", [=] {
                       test::Gen g(34);
                       const std::size_t l = 6, e = 3, n = 2;
                       const T x = test::leaf({l, e}, g), delta = test::leaf({l, e}, g, 0.1, 1.0),
                               a = test::leaf({e, n}, g, -2.0, -0.2), b = test::leaf({l, n}, g),
                               c = test::leaf({l, n}, g), d = test::leaf({e}, g);
                       return check({{"x", x}, {"delta", delta}, {"a", a}, {"b", b}, {"c", c}, {"d", d}},
                                    [=] { return readout(selective_scan(x, delta, a, b, c, d, mode)); });
                     }});
  }

  cases.push_back({"srrnn_step 5-step rollout", [=] {
                     SRRNNConfig cfg = test::small_grid(5);
                     cfg.alpha = 0.6;
                     cfg.surrogate_width = 1.5;
                     ad::ParameterStore<double> store;
                     Rng rng(4);
                     const auto cell = make_srrnn_cell<double>(store, "scl.", cfg, rng);
                     test::Gen g(5);
                     std::vector<T> maps;
                     for (int t = 0; t < 5; ++t) maps.push_back(T::from({2, 5, 5}, g.reals(50, 0, 2)));
                     const T w = T::from({1, 5, 5}, g.reals(25, -1, 1));
                     SurrogatePrimitiveScope scope;
                     return check(store_inputs(store), [=] {
                       auto state = srrnn_initial_state<double>(cfg);
                       T acc = T::scalar(0.0);
                       for (const auto& m : maps) {
                         state = srrnn_step(cell, state, m);
                         acc = add(acc, sum(mul(add(state.u, state.s), w)));
                       }
                       return acc;
                     });
                   }});

  PointEncoderConfig pc;
  pc.dim = 8;
  pc.blocks = 1;
  pc.patch = 4;
  pc.state = 4;
  pc.expand = 2;
  pc.groups = 4;
  pc.spike_width = 1.5;
  cases.push_back({"spiking_mamba_block", [=] {
                     ad::ParameterStore<double> store;
                     Rng rng(7);
                     const BlockParams<double> block{make_mamba<double>(store, "m.", pc, rng),
                                                     make_spgc<double>(store, "s.", pc, rng)};
                     test::Gen g(8);
                     test::randomize_params(store, g);
                     const T x = test::leaf({8, 8}, g, -1.5, 2.5);
                     auto in = store_inputs(store);
                     in.emplace_back("x", x);
                     SurrogatePrimitiveScope scope;
                     return check(in, [=] {
                       return readout(spiking_mamba_block(x, block, SurrogateSpike{1.0, 1.5}, ScanMode::Sequential));
                     });
                   }});
  cases.push_back({"encode_points 8x8x2 D=8", [=] {
                     ad::ParameterStore<double> store;
                     Rng rng(9);
                     auto enc = std::make_shared<PointEncoder<double>>(store, "point.", pc, 8, 8, 2, rng);
                     test::Gen g(10);
                     test::randomize_params(store, g);
                     const T ctx = T::from({2, 8, 8, 2}, g.reals(256, 0, 1), true);
                     auto in = store_inputs(store);
                     in.emplace_back("context", ctx);
                     SurrogatePrimitiveScope scope;
                     return check(in, [=] { return readout(enc->encode(ctx)); });
                   }});
  cases.push_back({"encode_frames 16x16 N_t=2 D=8", [=] {
                     FrameEncoderConfig fc;
                     fc.dim = 8;
                     fc.depth = 1;
                     fc.heads = 2;
                     fc.patch = 8;
                     fc.frames = 2;
                     fc.height = fc.width = 16;
                     ad::ParameterStore<double> store;
                     Rng rng(11);
                     auto enc = std::make_shared<FrameEncoder<double>>(store, "frame.", fc, rng);
                     test::Gen g(12);
                     test::randomize_params(store, g);
                     FrameStack stack{16, 16, 2, {}};
                     for (int i = 0; i < 16 * 16 * 2 * 3; ++i) {
                       stack.data.push_back(g.coin(0.3) ? static_cast<float>(g.real(0, 1)) : 0.0f);
                     }
                     return check(store_inputs(store), [=] { return readout(enc->encode(stack)); });
                   }});
  for (auto v : {LossVariant::LabelConditioned, LossVariant::PrintedMean}) {
    cases.push_back({"contrastive_loss " + loss_variant_name(v), [=] {
                       test::Gen g(13);
                       const T f = test::leaf({6}, g), table = test::leaf({4, 6}, g);
                       return check({{"f", f}, {"table", table}},
                                    [=] { return contrastive_loss(l2_normalize(f), l2_normalize(table), 1, 0.3, v); });
                     }});
  }
  // The frame-side loss sees f_o through stop_gradient, so the objective being
  // differentiated holds that operand fixed. The check does the same, pinning it
  // to its value at the evaluation point. The sampler cell only reaches the loss
  // through a straight-through gate whose value is identically 1, so its
  // parameters have no finite-difference oracle and are left out.
  cases.push_back({"total loss through the toy model", [=] {
                     auto cfg = test::toy_model_config(SamplerKind::Scl);
                     cfg.point.spike_width = 1.5;
                     cfg.srrnn.surrogate_width = 1.5;
                     auto model = std::make_shared<Model<double>>(cfg, 3, 7);
                     test::Gen g(14);
                     test::randomize_params(model->store, g);
                     const auto data = synthetic_dataset(test::toy_synth(3, 2));
                     const auto sample = std::make_shared<PreparedSample>(model->prepare(data[1].stream, data[1].label));
                     SurrogatePrimitiveScope scope;
                     T pinned;
                     {
                       NoGradGuard guard;
                       const auto f_o = model->forward(*sample).f_o;
                       pinned = T::from(f_o.shape(), std::vector<double>(f_o.data().begin(), f_o.data().end()));
                     }
                     auto pinned_total = [=] {
                       const auto fwd = model->forward(*sample);
                       const auto& head = cfg.head;
                       const int label = sample->label;
                       const auto loss_o = contrastive_loss(fwd.f_o, model->prompts.point(), label, head.tau, head.variant);
                       const auto loss_a = contrastive_loss(residual_fuse(fwd.f_a, pinned), model->prompts.frame(), label,
                                                            head.tau, head.variant);
                       return total_loss(loss_a, loss_o, head.lambda);
                     };
                     // the pinned objective must agree with the model's loss in value and gradient
                     auto grads_of = [&](const T& loss) {
                       model->store.zero_grad();
                       backward(loss);
                       return model->store.gradients();
                     };
                     const T own = model->loss(model->forward(*sample), sample->label).total;
                     const T mine = pinned_total();
                     if (own.item() != mine.item() || grads_of(own) != grads_of(mine)) {
                       throw std::runtime_error("pinned objective differs from the model loss");
                     }
                     model->store.zero_grad();
                     Inputs in;
                     for (const auto& p : model->store.params()) {
                       if (!p.name.starts_with("scl.")) in.emplace_back(p.name, p.tensor);
                     }
                     return check(in, pinned_total);
                   }});
  return cases;
}

Outcome gradient_suite() {
  int failed = 0;
  std::size_t coords = 0, violations = 0, straddled = 0;
  double largest = 0;
  for (const auto& c : gradient_cases()) {
    const auto r = c.run();
    coords += r.checked;
    violations += r.violations;
    straddled += r.straddled;
    largest = std::max(largest, r.largest_violating_gradient);
    failed += !r.pass;
    std::printf("    %-40s %s  max rel %.3g over %zu", c.name.c_str(), r.pass ? "ok  " : "FAIL", r.max_rel_error,
                r.checked);
    if (r.violations) std::printf(", %zu above 1e-5 (largest |g| %.3g)", r.violations, r.largest_violating_gradient);
    if (r.straddled) std::printf(", %zu straddled a breakpoint", r.straddled);
    if (!r.pass) {
      std::printf("; worst %s[%zu] analytic %.6g numeric %.6g", r.worst_input.c_str(), r.worst_index, r.analytic,
                  r.numeric);
    }
    std::printf("\n");
  }
  std::ostringstream s;
  s << failed << " of " << gradient_cases().size() << " checks failed, " << coords
    << " coordinates, h=1e-5, rel tol 1e-5, " << violations << " coordinates above tolerance";
  if (violations) s << " (all with |g| <= " << largest << ")";
  s << ", " << straddled << " straddled";
  return {failed == 0, s.str()};
}

// ---------------------------------------------------------------- 4

Outcome sampler_oracles() {
  Ledger l;
  {
    const LIFParams p{2.0, 1.0, 0.0};
    LIFState<double> s(1);
    const double zero = 0.0, two = 2.0, one = 1.0;
    lif_step<double>(p, s, {&zero, 1});
    l.expect(s.u[0] == 0.0 && s.s[0] == 0.0 && s.v[0] == 0.0, "LIF zero input");
    lif_step<double>(p, s, {&two, 1});
    l.expect(s.u[0] == 1.0 && s.s[0] == 1.0 && s.v[0] == 0.0, "LIF fires at threshold");
    LIFState<double> c(1);
    for (double e : {0.5, 0.75, 0.875}) {
      lif_step<double>(p, c, {&one, 1});
      l.expect(c.u[0] == e && c.s[0] == 0.0, "LIF constant drive");
    }
  }
  {
    SRRNNConfig cfg = test::small_grid(4);
    cfg.alpha = 0.5;
    const auto cell = zero_srrnn_cell<double>(cfg);
    auto state = srrnn_initial_state<double>(cfg);
    test::Gen g(3);
    for (int t = 0; t < 6; ++t) {
      const std::vector<double> prev(state.v.data().begin(), state.v.data().end());
      state = srrnn_step(cell, state, T::from({2, 4, 4}, g.reals(32, 0, 3)));
      for (std::size_t i = 0; i < 16; ++i) {
        l.expect(state.u[i] == 0.5 * prev[i] && state.s[i] == 0.0, "zero-kernel SRRNN");
      }
    }
  }
  {
    const SRRNNConfig cfg = test::small_grid(4);
    const auto cell = test::delta_cell(cfg);
    auto state = srrnn_initial_state<double>(cfg);
    for (int t = 0; t < 5; ++t) {
      state = srrnn_step(cell, state, T::full({2, 4, 4}, 2.0));
      for (std::size_t i = 0; i < 16; ++i) {
        l.expect(state.u[i] == 2.0 && state.s[i] == 1.0 && state.v[i] == 0.0, "identity-kernel SRRNN");
      }
    }
  }
  {
    // delta cell on arbitrary uniform drive: per-pixel LIF with leak sigmoid(0)
    const SRRNNConfig cfg = test::small_grid(3);
    const auto cell = test::delta_cell(cfg);
    auto state = srrnn_initial_state<double>(cfg);
    test::Gen g(4);
    double v = 0.0;
    for (int t = 0; t < 20; ++t) {
      const double drive = g.real(0, 1.5);
      state = srrnn_step(cell, state, T::full({2, 3, 3}, drive));
      const double u = 0.5 * v + drive;
      const double s = u >= 1.0 ? 1.0 : 0.0;
      v = u - s * u;
      for (std::size_t i = 0; i < 9; ++i) {
        l.expect(state.u[i] == u && state.s[i] == s && state.v[i] == v, "SRRNN reduces to scalar LIF");
      }
    }
  }
  {
    const auto s = make_stream({{0, 0, 0, 1}, {250, 0, 0, 1}, {251, 0, 0, 1}, {1000, 0, 0, 1}}, 1, 1, 1000);
    l.expect(sliding_window_sample(s, 4).trace.boundaries == std::vector<std::int64_t>{0, 250, 500, 750, 1000},
             "sliding window boundaries");
  }
  {
    std::vector<std::int64_t> times;
    for (int j = 0; j < 16; ++j) times.push_back(j * 100 + 50);
    const auto s = test::full_frames(4, 4, 1600, times);
    const auto snn = vanilla_snn_sample(s, LIFParams{2, 1, 0}, 4, 16, 4, 4, 2.0);
    l.expect(snn.trace.boundaries == std::vector<std::int64_t>{0, 100, 200, 300, 1600}, "SNN constant drive");
    const auto zero = vanilla_snn_sample(make_stream({}, 4, 4, 1600), LIFParams{}, 4, 16, 4, 4);
    l.expect(zero.trace.boundaries == std::vector<std::int64_t>{0, 400, 800, 1200, 1600}, "SNN zero stream");
    const auto scl = scl_sample(s, test::delta_cell(test::small_grid(4)), 4, 16);
    l.expect(scl.trace.boundaries == snn.trace.boundaries, "SCL with the identity cell equals SNN");
  }
  {
    const int t_raw = 32;
    const std::int64_t duration = 3200;
    const auto s = test::full_frames(8, 8, duration, {850, 950});
    const auto r = scl_sample(s, test::delta_cell(test::small_grid(8)), 4, t_raw);
    const auto maps = rasterize_bins(s, t_raw, 8, 8);
    double v = 0;
    int first = -1;
    for (int j = 0; j < t_raw && first < 0; ++j) {
      const double u = 0.5 * v + maps.at(j, 0, 0, 0);
      if (u >= 1.0) first = j;
      v = u >= 1.0 ? 0.0 : u;
    }
    l.expect(first >= 0 && !r.trace.spike_bins.empty() && r.trace.spike_bins.front() == first,
             "SCL first spike bin matches the scalar oracle");
    l.expect(r.trace.boundaries[1] > 800 && r.trace.boundaries[1] <= 1000, "SCL boundary inside the burst");
  }
  {
    SRRNNConfig cfg = test::small_grid(4);
    cfg.rho = 0.99;
    const auto s = test::full_frames(4, 4, 1600, {10, 700, 1500});
    const auto quiet = scl_sample(s, zero_srrnn_cell<double>(cfg), 4, 16);
    l.expect(quiet.trace.fallback && quiet.trace.boundaries == sliding_window_sample(s, 4).trace.boundaries &&
                 quiet.trace.retained_fraction == 1.0,
             "SCL degenerate fallback");
  }
  std::ostringstream s;
  s << l.checks << " exact comparisons, " << l.failed << " mismatches" << l.failures();
  return {l.failed == 0, s.str()};
}

// ---------------------------------------------------------------- 5

Outcome invariants() {
  const int cases = 1000;
  const std::vector<test::PropertyTally> tallies = {
      test::partition_property(cases, 101), test::spikes_binary_property(cases, 202),
      test::voxel_range_property(cases, 303), test::unit_norm_property(cases, 404)};
  bool ok = true;
  std::ostringstream s;
  for (const auto& t : tallies) {
    ok = ok && t.failures == 0 && t.cases >= cases;
    s << (s.tellp() > 0 ? "; " : "") << t.name << " " << t.cases - t.failures << "/" << t.cases;
    if (t.failures) s << " (" << t.first_failure << ")";
  }
  return {ok, s.str()};
}

// ---------------------------------------------------------------- 6

Outcome benchmark(const fs::path& out) {
  RunConfig cfg = benchmark_run_config();
  cfg.threads = 1;
  kernels::set_threads(1);
  auto run = [&](const std::string& name, double& secs) {
    const auto start = Clock::now();
    const auto summary = cmd::train(cfg, out / name, cmd::Precision::F32);
    secs = seconds_since(start);
    return summary;
  };
  double t1 = 0, t2 = 0;
  const auto a = run("run_a", t1);
  const auto b = run("run_b", t2);
  const double top1 = a.at("final").at("top1").get<double>();
  const bool same = a.at("final") == b.at("final") &&
                    read_bytes(out / "run_a" / "metrics.jsonl") == read_bytes(out / "run_b" / "metrics.jsonl") &&
                    read_bytes(out / "run_a" / "checkpoint.evck") == read_bytes(out / "run_b" / "checkpoint.evck");
  std::ostringstream s;
  s << "test Top-1 " << top1 << " after " << cfg.train.epochs << " epochs (need >= 0.9), wall " << t1 << " s and "
    << t2 << " s on 1 thread (limit 1800 s), rerun " << (same ? "bit-identical" : "DIFFERS");
  return {top1 >= 0.9 && t1 < 1800 && t2 < 1800 && same, s.str()};
}

// ---------------------------------------------------------------- 7

Outcome ablation(const fs::path& out, int epochs) {
  RunConfig cfg = benchmark_run_config();
  cfg.train.epochs = epochs;
  const auto r = cmd::ablate(cfg, out, cmd::Precision::F32, {"scl", "sliding", "snn"}, {7, 8, 9});
  for (const auto& row : r.at("runs")) {
    std::printf("    seed %-3d %-8s top1 %.4f  retained %.4f\n", row.at("seed").get<int>(),
                row.at("sampler").get<std::string>().c_str(), row.at("top1").get<double>(),
                row.at("retained_fraction").get<double>());
  }
  double scl = 0, sliding = 0, snn = 0;
  std::ostringstream s;
  for (const auto& m : r.at("means")) {
    const auto name = m.at("sampler").get<std::string>();
    const double top1 = m.at("top1").get<double>();
    (name == "scl" ? scl : name == "sliding" ? sliding : snn) = top1;
    s << name << " " << top1 << " (retained " << m.at("retained_fraction").get<double>() << "), ";
  }
  s << "mean Top-1 over seeds 7,8,9 at " << epochs << " epochs; SCL >= sliding "
    << (scl >= sliding ? "holds" : "does not hold") << "; full order SCL >= SNN >= sliding "
    << (scl >= snn && snn >= sliding ? "holds" : "does not hold") << " (reported only)";
  return {scl >= sliding, s.str()};
}

// ---------------------------------------------------------------- 8

Outcome identities() {
  Ledger l;
  {
    const auto data = synthetic_dataset(test::toy_synth(3, 2));
    auto cfg = test::toy_model_config();
    cfg.head.lambda = 0.0;
    Model<double> model(cfg, 3, 7);
    const auto sample = model.prepare(data[1].stream, data[1].label);
    ad::backward(model.loss(model.forward(sample), sample.label).total);
    double point_mass = 0;
    for (const auto& [name, g] : model.store.gradients()) {
      if (!model.point_only(name)) continue;
      for (double v : g) point_mass += std::abs(v);
    }
    l.expect(point_mass == 0.0, "lambda = 0 leaves point-branch gradient mass " + std::to_string(point_mass));
  }
  test::Gen g(15);
  for (int i = 0; i < 200; ++i) {
    const std::size_t d = static_cast<std::size_t>(g.integer(1, 64));
    const auto av = g.reals(d, -1, 1);
    const T fused = residual_fuse(T::from({d}, av), T::zeros({d}));
    double dot = 0, na = 0, nf = 0;
    for (std::size_t k = 0; k < d; ++k) {
      dot += av[k] * fused[k];
      na += av[k] * av[k];
      nf += fused[k] * fused[k];
    }
    l.expect(std::abs(dot / std::sqrt(na * nf) - 1.0) < 1e-12, "zero point feature changed the frame direction");
  }
  for (int i = 0; i < 200; ++i) {
    const std::size_t q = static_cast<std::size_t>(g.integer(1, 64)), d = static_cast<std::size_t>(g.integer(1, 32));
    const auto row = g.reals(d, -1, 1);
    std::vector<double> table;
    for (std::size_t k = 0; k < q; ++k) table.insert(table.end(), row.begin(), row.end());
    for (double p : classify(g.reals(d, -1, 1), table, q)) {
      l.expect(p == 1.0 / static_cast<double>(q), "identical prompt rows are not uniform");
    }
  }
  for (std::int64_t total : {1, 2, 7, 100, 1000, 123457}) {
    l.expect(cosine_lr(0, total, 1e-5, 1e-6) == 1e-5, "cosine_lr start");
    l.expect(cosine_lr(total, total, 1e-5, 1e-6) == 1e-6, "cosine_lr end");
  }
  std::ostringstream s;
  s << l.checks << " checks (lambda=0 gradients, 200 zero-point fusions, 200 uniform prompt tables, "
    << "cosine endpoints), " << l.failed << " failures" << l.failures();
  return {l.failed == 0, s.str()};
}

// ---------------------------------------------------------------- 9

Outcome round_trips() {
  const int cases = 1000;
  const auto evst = test::binary_roundtrip_property(cases, 505);
  int evck_bad = 0, feat_bad = 0;
  for (int i = 0; i < cases; ++i) {
    test::Gen g(606, static_cast<std::uint64_t>(i));
    std::vector<CheckpointEntry> entries(static_cast<std::size_t>(g.integer(0, 6)));
    for (auto& e : entries) {
      const int len = g.integer(1, 24);
      for (int c = 0; c < len; ++c) e.name.push_back(static_cast<char>(g.integer(33, 126)));
      std::size_t n = 1;
      for (int r = g.integer(0, 4); r > 0; --r) {
        e.dims.push_back(static_cast<std::uint32_t>(g.integer(1, 5)));
        n *= e.dims.back();
      }
      for (double v : g.reals(n, -1e3, 1e3)) e.data.push_back(static_cast<float>(v));
    }
    const auto bytes = write_checkpoint(entries);
    const auto parsed = parse_checkpoint(bytes);
    evck_bad += !(parsed == entries && write_checkpoint(parsed) == bytes);

    FeatureTable t{static_cast<std::uint32_t>(g.integer(0, 20)), static_cast<std::uint32_t>(g.integer(1, 16)), {}};
    for (double v : g.reals(static_cast<std::size_t>(t.rows) * t.dim, -1, 1)) t.data.push_back(static_cast<float>(v));
    const auto fb = write_features(t);
    const auto ft = parse_features(fb);
    feat_bad += !(ft == t && write_features(ft) == fb);
  }
  std::ostringstream s;
  s << "EVST " << evst.cases - evst.failures << "/" << evst.cases << ", EVCK " << cases - evck_bad << "/" << cases
    << ", FEAT " << cases - feat_bad << "/" << cases << " byte-identical";
  return {evst.failures == 0 && evck_bad == 0 && feat_bad == 0, s.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evcrab acceptance suite"};
  int only = 0;
  std::string out = "acceptance_out";
  int ablation_epochs = 4;
  app.add_option("--criterion", only, "run a single criterion (1-9); 0 runs all")->check(CLI::Range(0, 9));
  app.add_option("--out", out, "directory for training artifacts of criteria 6 and 7");
  app.add_option("--ablation-epochs", ablation_epochs, "epochs per ablation run")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"Hilbert bijection and adjacency", hilbert_correctness},
      {"parallel vs sequential scan", scan_equivalence},
      {"finite-difference gradient suite", gradient_suite},
      {"LIF/SRRNN recurrence oracles", sampler_oracles},
      {"conservation and shape invariants", invariants},
      {"synthetic benchmark", [&] { return benchmark(fs::path(out) / "benchmark"); }},
      {"sampler ablation direction", [&] { return ablation(fs::path(out) / "ablation", ablation_epochs); }},
      {"fusion, loss and schedule identities", identities},
      {"container round trips", round_trips},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.summary.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
