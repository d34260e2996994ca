#pragma once

// Small convolutional scorer with hand-written backpropagation, the MIL
// losses (focal loss on negatives, gated cross entropy on positive bags),
// Adam, the alternating training loop and a versioned binary checkpoint.

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slsmil/error.hpp"

namespace slsmil {

struct InputGeometry {
  int height = 32;
  int width = 32;
  int channels = 3;

  std::size_t size() const { return static_cast<std::size_t>(height) * width * channels; }
  friend bool operator==(const InputGeometry&, const InputGeometry&) = default;
};

struct ConvSpec {
  int out_channels = 8;
  int kernel = 3;
  int stride = 2;
};

struct NetworkSpec {
  InputGeometry input;
  std::vector<ConvSpec> convs = {{8, 3, 2}, {16, 3, 2}, {32, 3, 2}};
  std::vector<int> dense = {64};
};

enum class LayerKind : std::uint8_t { Conv = 1, Dense = 2 };

/// One layer. Conv weights are [out][in][k][k], dense weights [out][in].
/// Every layer except the last (the 1-logit head) is followed by a ReLU.
struct Layer {
  LayerKind kind = LayerKind::Dense;
  int in_channels = 0, out_channels = 0, kernel = 1, stride = 1;
  int in_h = 1, in_w = 1, out_h = 1, out_w = 1;
  std::size_t weight_offset = 0, bias_offset = 0;

  int pad() const { return kernel / 2; }
  std::size_t in_size() const { return static_cast<std::size_t>(in_channels) * in_h * in_w; }
  std::size_t out_size() const { return static_cast<std::size_t>(out_channels) * out_h * out_w; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
};

inline constexpr double kLogitClamp = 30.0;
inline constexpr double kLogClamp = 1e-12;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Activations recorded by a forward pass for backpropagation.
struct Tape {
  std::vector<std::vector<double>> acts;  // acts[0] = input, acts[i+1] = output of layer i
  double logit = 0.0;
  double p = 0.5;
};

class ScorerModel {
 public:
  ScorerModel() = default;

  /// Build the architecture; weights are zero until init() is called.
  explicit ScorerModel(const NetworkSpec& spec) : input_(spec.input) {
    if (spec.input.height <= 0 || spec.input.width <= 0 || spec.input.channels <= 0)
      throw Error(ErrorCode::InvalidArgument, "input geometry must be positive");
    int c = spec.input.channels, h = spec.input.height, w = spec.input.width;
    std::size_t offset = 0;
    for (const ConvSpec& cs : spec.convs) {
      Layer l;
      l.kind = LayerKind::Conv;
      l.in_channels = c;
      l.out_channels = cs.out_channels;
      l.kernel = cs.kernel;
      l.stride = cs.stride;
      l.in_h = h;
      l.in_w = w;
      l.out_h = (h + 2 * l.pad() - l.kernel) / l.stride + 1;
      l.out_w = (w + 2 * l.pad() - l.kernel) / l.stride + 1;
      if (cs.out_channels <= 0 || cs.kernel <= 0 || cs.stride <= 0 || l.out_h <= 0 || l.out_w <= 0)
        throw Error(ErrorCode::InvalidArgument, "invalid convolution layer");
      add_layer(l, offset);
      c = l.out_channels;
      h = l.out_h;
      w = l.out_w;
    }
    int in = c * h * w;
    std::vector<int> widths = spec.dense;
    widths.push_back(1);
    for (int width : widths) {
      if (width <= 0) throw Error(ErrorCode::InvalidArgument, "invalid dense width");
      add_dense(in, width, offset);
      in = width;
    }
    params_.assign(offset, 0.0);
  }

  /// He-normal hidden layers, small normal head, zero biases.
  void init(std::uint64_t seed, bool zero_head = false) {
    std::mt19937_64 rng(seed);
    std::fill(params_.begin(), params_.end(), 0.0);
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const Layer& l = layers_[li];
      const bool head = li + 1 == layers_.size();
      const double fan_in = static_cast<double>(l.in_channels) * l.kernel * l.kernel;
      const double sd = head ? 0.1 / std::sqrt(fan_in) : std::sqrt(2.0 / fan_in);
      std::normal_distribution<double> nd(0.0, sd);
      for (std::size_t i = 0; i < l.weight_count(); ++i) {
        const double v = nd(rng);
        params_[l.weight_offset + i] = (head && zero_head) ? 0.0 : v;
      }
    }
  }

  const InputGeometry& input() const { return input_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  double forward(std::span<const double> x) const {
    Tape t;
    return forward(x, t);
  }

  /// Probability of the airplane class, recording activations in `tape`.
  double forward(std::span<const double> x, Tape& tape) const {
    if (x.size() != input_.size())
      throw Error(ErrorCode::ShapeMismatch, "input size does not match the model geometry");
    tape.acts.resize(layers_.size() + 1);
    tape.acts[0].assign(x.begin(), x.end());
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const Layer& l = layers_[li];
      auto& out = tape.acts[li + 1];
      out.assign(l.out_size(), 0.0);
      if (l.kind == LayerKind::Conv)
        conv_forward(l, tape.acts[li], out);
      else
        dense_forward(l, tape.acts[li], out);
      if (li + 1 < layers_.size())
        for (double& v : out) v = v > 0.0 ? v : 0.0;
    }
    tape.logit = tape.acts.back()[0];
    tape.p = sigmoid(std::clamp(tape.logit, -kLogitClamp, kLogitClamp));
    return tape.p;
  }

  /// Accumulate d(loss)/d(params) into `grad` given d(loss)/d(logit).
  void backward(const Tape& tape, double dlogit, std::vector<double>& grad) const {
    if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);
    if (std::abs(tape.logit) >= kLogitClamp) return;  // clamp has zero slope
    std::vector<double> dout{dlogit};
    std::vector<double> din;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const Layer& l = layers_[li];
      const auto& in = tape.acts[li];
      din.assign(l.in_size(), 0.0);
      if (l.kind == LayerKind::Conv)
        conv_backward(l, in, dout, din, grad);
      else
        dense_backward(l, in, dout, din, grad);
      if (li > 0)
        for (std::size_t i = 0; i < din.size(); ++i)
          if (!(in[i] > 0.0)) din[i] = 0.0;  // ReLU of the previous layer
      dout.swap(din);
    }
  }

 private:
  void add_layer(Layer l, std::size_t& offset) {
    l.weight_offset = offset;
    offset += l.weight_count();
    l.bias_offset = offset;
    offset += static_cast<std::size_t>(l.out_channels);
    layers_.push_back(l);
  }

  void add_dense(int in, int out, std::size_t& offset) {
    Layer l;
    l.kind = LayerKind::Dense;
    l.in_channels = in;
    l.out_channels = out;
    add_layer(l, offset);
  }

  void conv_forward(const Layer& l, const std::vector<double>& in, std::vector<double>& out) const {
    const double* w = params_.data() + l.weight_offset;
    const double* b = params_.data() + l.bias_offset;
    const int k = l.kernel, p = l.pad();
    for (int oc = 0; oc < l.out_channels; ++oc)
      for (int oy = 0; oy < l.out_h; ++oy)
        for (int ox = 0; ox < l.out_w; ++ox) {
          double acc = b[oc];
          for (int ic = 0; ic < l.in_channels; ++ic) {
            const double* wk = w + (static_cast<std::size_t>(oc) * l.in_channels + ic) * k * k;
            const double* xc = in.data() + static_cast<std::size_t>(ic) * l.in_h * l.in_w;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * l.stride - p + ky;
              if (iy < 0 || iy >= l.in_h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * l.stride - p + kx;
                if (ix < 0 || ix >= l.in_w) continue;
                acc += wk[ky * k + kx] * xc[iy * l.in_w + ix];
              }
            }
          }
          out[(static_cast<std::size_t>(oc) * l.out_h + oy) * l.out_w + ox] = acc;
        }
  }

  void conv_backward(const Layer& l, const std::vector<double>& in, const std::vector<double>& dout,
                     std::vector<double>& din, std::vector<double>& grad) const {
    const double* w = params_.data() + l.weight_offset;
    double* gw = grad.data() + l.weight_offset;
    double* gb = grad.data() + l.bias_offset;
    const int k = l.kernel, p = l.pad();
    for (int oc = 0; oc < l.out_channels; ++oc)
      for (int oy = 0; oy < l.out_h; ++oy)
        for (int ox = 0; ox < l.out_w; ++ox) {
          const double g = dout[(static_cast<std::size_t>(oc) * l.out_h + oy) * l.out_w + ox];
          if (g == 0.0) continue;
          gb[oc] += g;
          for (int ic = 0; ic < l.in_channels; ++ic) {
            const std::size_t wbase = (static_cast<std::size_t>(oc) * l.in_channels + ic) * k * k;
            const std::size_t xbase = static_cast<std::size_t>(ic) * l.in_h * l.in_w;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * l.stride - p + ky;
              if (iy < 0 || iy >= l.in_h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * l.stride - p + kx;
                if (ix < 0 || ix >= l.in_w) continue;
                const std::size_t xi = xbase + static_cast<std::size_t>(iy) * l.in_w + ix;
                gw[wbase + ky * k + kx] += g * in[xi];
                din[xi] += g * w[wbase + ky * k + kx];
              }
            }
          }
        }
  }

  void dense_forward(const Layer& l, const std::vector<double>& in, std::vector<double>& out) const {
    const double* w = params_.data() + l.weight_offset;
    const double* b = params_.data() + l.bias_offset;
    for (int o = 0; o < l.out_channels; ++o) {
      const double* row = w + static_cast<std::size_t>(o) * l.in_channels;
      double acc = b[o];
      for (int i = 0; i < l.in_channels; ++i) acc += row[i] * in[i];
      out[o] = acc;
    }
  }

  void dense_backward(const Layer& l, const std::vector<double>& in, const std::vector<double>& dout,
                      std::vector<double>& din, std::vector<double>& grad) const {
    const double* w = params_.data() + l.weight_offset;
    double* gw = grad.data() + l.weight_offset;
    double* gb = grad.data() + l.bias_offset;
    for (int o = 0; o < l.out_channels; ++o) {
      const double g = dout[o];
      if (g == 0.0) continue;
      gb[o] += g;
      const double* row = w + static_cast<std::size_t>(o) * l.in_channels;
      double* grow = gw + static_cast<std::size_t>(o) * l.in_channels;
      for (int i = 0; i < l.in_channels; ++i) {
        grow[i] += g * in[i];
        din[i] += g * row[i];
      }
    }
  }

  InputGeometry input_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// Losses. Both are written in terms of the airplane probability p; the
// *_dlogit variants give the derivative with respect to the pre-sigmoid logit.

/// Focal loss for negatives with exponent 4: -p^4 log(1 - p).
inline double loss_negative(double p) {
  return -std::pow(p, 4) * std::log(std::max(1.0 - p, kLogClamp));
}

inline double loss_negative_dlogit(double p) {
  const double q = 1.0 - p;
  const double p4 = std::pow(p, 4);
  if (q < kLogClamp) return -4.0 * p4 * q * std::log(kLogClamp);
  return -4.0 * p4 * q * std::log(q) + p4 * p;
}

/// Modulated cross entropy for positives: -(1 - p) log(p).
inline double ce_pos(double p) { return -(1.0 - p) * std::log(std::max(p, kLogClamp)); }

inline double ce_pos_dlogit(double p) {
  const double q = 1.0 - p;
  if (p < kLogClamp) return p * q * std::log(kLogClamp);
  return p * q * std::log(p) - q * q;
}

struct BagLoss {
  double total = 0.0;
  std::vector<bool> active;
  std::vector<double> ce;
};

/// Positive-bag loss: instance i contributes ce_pos(p_i) iff it is below
/// twice the bag minimum. The minimiser always contributes.
inline BagLoss bag_loss_from_ce(std::span<const double> ce) {
  if (ce.empty()) throw Error(ErrorCode::EmptyBag, "positive bag has no instances");
  BagLoss r;
  r.ce.assign(ce.begin(), ce.end());
  r.active.assign(ce.size(), false);
  const std::size_t argmin =
      static_cast<std::size_t>(std::min_element(ce.begin(), ce.end()) - ce.begin());
  const double gate = 2.0 * ce[argmin];
  for (std::size_t i = 0; i < ce.size(); ++i) {
    if (ce[i] < gate || i == argmin) {
      r.active[i] = true;
      r.total += ce[i];
    }
  }
  return r;
}

inline BagLoss bag_loss(std::span<const double> ps) {
  std::vector<double> ce(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) ce[i] = ce_pos(ps[i]);
  return bag_loss_from_ce(ce);
}

// ---------------------------------------------------------------------------

struct OptimizerState {
  std::vector<double> m, v;
  std::uint64_t step = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void reset(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

/// One Adam update of `params` with gradient `grad`.
inline void adam_step(std::vector<double>& params, const std::vector<double>& grad, OptimizerState& st) {
  if (st.m.size() != params.size()) st.reset(params.size());
  if (grad.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "gradient size mismatch");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    const double mh = st.m[i] / c1;
    const double vh = st.v[i] / c2;
    params[i] -= st.learning_rate * mh / (std::sqrt(vh) + st.epsilon);
  }
}

// ---------------------------------------------------------------------------

struct TrainSchedule {
  int negative_batch_size = 32;
  int max_steps = 2000;
  std::uint64_t seed = 1;
  double learning_rate = 1e-4;
};

/// Model inputs plus the MIL structure over them: `bags[b]` and `negatives`
/// index into `inputs`.
struct TrainingSet {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<std::size_t>> bags;
  std::vector<std::size_t> negatives;
};

enum class StepKind : std::uint8_t { Negative = 0, Positive = 1 };

struct StepRecord {
  StepKind kind = StepKind::Negative;
  double loss = 0.0;
  std::size_t bag = 0;          // positive steps only
  std::size_t bag_size = 0;     // positive steps only
  std::size_t active_count = 0; // positive steps only
  double mean_p = 0.0;          // mean probability over the batch / bag
};

struct TrainHistory {
  std::vector<StepRecord> steps;
};

namespace detail {

class SeededCycle {
 public:
  SeededCycle(std::size_t n, std::mt19937_64& rng) : order_(n), rng_(rng) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    shuffle();
  }

  std::size_t next() {
    if (pos_ == order_.size()) {
      shuffle();
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  void shuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_() % i]);
  }

  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::mt19937_64& rng_;
};

}  // namespace detail

/// Alternate one negative iteration (a batch of negatives, mean focal loss)
/// with one positive iteration (one bag, gated bag loss), one Adam step each.
inline TrainHistory train(ScorerModel& model, OptimizerState& opt, const TrainingSet& data,
                          const TrainSchedule& schedule) {
  if (schedule.negative_batch_size <= 0 || schedule.max_steps < 0)
    throw Error(ErrorCode::InvalidArgument, "invalid training schedule");
  if (data.bags.empty() || data.negatives.size() < static_cast<std::size_t>(schedule.negative_batch_size))
    throw Error(ErrorCode::InsufficientData,
                "training needs >= 1 positive bag and >= " + std::to_string(schedule.negative_batch_size) +
                    " negatives (have " + std::to_string(data.bags.size()) + " bags, " +
                    std::to_string(data.negatives.size()) + " negatives)");
  for (const auto& b : data.bags)
    if (b.empty()) throw Error(ErrorCode::EmptyBag, "positive bag has no instances");

  opt.learning_rate = schedule.learning_rate;
  if (opt.m.size() != model.parameter_count()) opt.reset(model.parameter_count());

  std::mt19937_64 rng(schedule.seed);
  detail::SeededCycle neg_cycle(data.negatives.size(), rng);
  detail::SeededCycle bag_cycle(data.bags.size(), rng);

  TrainHistory history;
  history.steps.reserve(static_cast<std::size_t>(schedule.max_steps));
  std::vector<double> grad(model.parameter_count());
  Tape tape;
  std::vector<Tape> bag_tapes;

  for (int step = 0; step < schedule.max_steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    StepRecord rec;
    if (step % 2 == 0) {
      rec.kind = StepKind::Negative;
      const int n = schedule.negative_batch_size;
      for (int i = 0; i < n; ++i) {
        const double p = model.forward(data.inputs[data.negatives[neg_cycle.next()]], tape);
        rec.loss += loss_negative(p) / n;
        rec.mean_p += p / n;
        model.backward(tape, loss_negative_dlogit(p) / n, grad);
      }
    } else {
      rec.kind = StepKind::Positive;
      rec.bag = bag_cycle.next();
      const auto& members = data.bags[rec.bag];
      bag_tapes.resize(members.size());
      std::vector<double> ps(members.size());
      for (std::size_t i = 0; i < members.size(); ++i) {
        ps[i] = model.forward(data.inputs[members[i]], bag_tapes[i]);
        rec.mean_p += ps[i] / static_cast<double>(members.size());
      }
      const BagLoss bl = bag_loss(ps);
      rec.loss = bl.total;
      rec.bag_size = members.size();
      for (std::size_t i = 0; i < members.size(); ++i) {
        if (!bl.active[i]) continue;
        ++rec.active_count;
        model.backward(bag_tapes[i], ce_pos_dlogit(ps[i]), grad);
      }
    }
    adam_step(model.params(), grad, opt);
    history.steps.push_back(rec);
  }
  return history;
}

// ---------------------------------------------------------------------------
// Checkpoint format (all integers little endian):
//   "SLSMIL01" | version u32 | input H, W, C u32 | layer count u32 |
//   per layer: kind u8, dims u32... (conv: in, out, kernel, stride;
//   dense: in, out), weights f64..., biases f64... |
//   optimizer flag u8 [| step u64, lr, beta1, beta2, eps f64, m f64..., v f64...] |
//   CRC32 u32 over every byte after the magic and before the CRC.

inline constexpr char kCheckpointMagic[8] = {'S', 'L', 'S', 'M', 'I', 'L', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, sizeof v);
    u64(v);
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const std::string& buf, std::size_t pos, std::size_t end) : buf_(buf), pos_(pos), end_(end) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t v = u64();
    double d;
    std::memcpy(&d, &v, sizeof d);
    return d;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw Error(ErrorCode::IoFailure, "checkpoint truncated");
  }
  const std::string& buf_;
  std::size_t pos_, end_;
};

inline std::uint32_t crc32_of(const char* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

/// Serialise to bytes; `opt` may be null to omit the optimizer section.
inline std::string encode_checkpoint(const ScorerModel& model, const OptimizerState* opt) {
  detail::ByteWriter w;
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.input().height));
  w.u32(static_cast<std::uint32_t>(model.input().width));
  w.u32(static_cast<std::uint32_t>(model.input().channels));
  w.u32(static_cast<std::uint32_t>(model.layers().size()));
  const auto& p = model.params();
  for (const Layer& l : model.layers()) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u32(static_cast<std::uint32_t>(l.in_channels));
    w.u32(static_cast<std::uint32_t>(l.out_channels));
    if (l.kind == LayerKind::Conv) {
      w.u32(static_cast<std::uint32_t>(l.kernel));
      w.u32(static_cast<std::uint32_t>(l.stride));
    }
    for (std::size_t i = 0; i < l.weight_count(); ++i) w.f64(p[l.weight_offset + i]);
    for (int i = 0; i < l.out_channels; ++i) w.f64(p[l.bias_offset + i]);
  }
  const bool has_opt = opt != nullptr && opt->m.size() == p.size();
  w.u8(has_opt ? 1 : 0);
  if (has_opt) {
    w.u64(opt->step);
    w.f64(opt->learning_rate);
    w.f64(opt->beta1);
    w.f64(opt->beta2);
    w.f64(opt->epsilon);
    for (double v : opt->m) w.f64(v);
    for (double v : opt->v) w.f64(v);
  }
  std::string& bytes = w.bytes();
  const std::uint32_t crc = detail::crc32_of(bytes.data() + 8, bytes.size() - 8);
  w.u32(crc);
  return bytes;
}

struct Checkpoint {
  ScorerModel model;
  OptimizerState optimizer;
  bool has_optimizer = false;
};

/// Parse checkpoint bytes. `expected` (when given) must match the stored
/// input geometry.
inline Checkpoint decode_checkpoint(const std::string& bytes, const InputGeometry* expected = nullptr) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw Error(ErrorCode::BadMagic, "not a scorer checkpoint");
  if (bytes.size() < 8 + 4 + 4) throw Error(ErrorCode::IoFailure, "checkpoint truncated");
  const std::size_t body_end = bytes.size() - 4;
  detail::ByteReader crc_reader(bytes, body_end, bytes.size());
  const std::uint32_t stored_crc = crc_reader.u32();

  detail::ByteReader r(bytes, 8, body_end);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) +
                                                " is not supported (expected " +
                                                std::to_string(kCheckpointVersion) + ")");
  if (detail::crc32_of(bytes.data() + 8, body_end - 8) != stored_crc)
    throw Error(ErrorCode::IoFailure, "checkpoint checksum mismatch (truncated or corrupt)");

  NetworkSpec spec;
  spec.input.height = static_cast<int>(r.u32());
  spec.input.width = static_cast<int>(r.u32());
  spec.input.channels = static_cast<int>(r.u32());
  if (expected && !(*expected == spec.input))
    throw Error(ErrorCode::ShapeMismatch, "checkpoint input geometry differs from the configured one");
  const std::uint32_t layer_count = r.u32();
  if (layer_count == 0 || layer_count > 64) throw Error(ErrorCode::IoFailure, "implausible layer count");
  spec.convs.clear();
  spec.dense.clear();
  struct Raw {
    LayerKind kind;
    std::uint32_t in, out;
    std::vector<double> w, b;
  };
  std::vector<Raw> raws;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    Raw raw;
    const std::uint8_t kind = r.u8();
    if (kind != static_cast<std::uint8_t>(LayerKind::Conv) && kind != static_cast<std::uint8_t>(LayerKind::Dense))
      throw Error(ErrorCode::IoFailure, "unknown layer kind in checkpoint");
    raw.kind = static_cast<LayerKind>(kind);
    raw.in = r.u32();
    raw.out = r.u32();
    std::size_t wcount = static_cast<std::size_t>(raw.in) * raw.out;
    if (raw.kind == LayerKind::Conv) {
      ConvSpec cs;
      cs.out_channels = static_cast<int>(raw.out);
      cs.kernel = static_cast<int>(r.u32());
      cs.stride = static_cast<int>(r.u32());
      if (cs.kernel <= 0 || cs.kernel > 15 || cs.stride <= 0) throw Error(ErrorCode::IoFailure, "bad conv dims");
      wcount *= static_cast<std::size_t>(cs.kernel) * cs.kernel;
      spec.convs.push_back(cs);
    } else if (i + 1 < layer_count) {
      spec.dense.push_back(static_cast<int>(raw.out));
    }
    if (raw.in == 0 || raw.out == 0 || wcount > (std::size_t{1} << 28))
      throw Error(ErrorCode::IoFailure, "implausible layer dimensions");
    raw.w.resize(wcount);
    for (double& v : raw.w) v = r.f64();
    raw.b.resize(raw.out);
    for (double& v : raw.b) v = r.f64();
    raws.push_back(std::move(raw));
  }
  if (raws.back().kind != LayerKind::Dense || raws.back().out != 1)
    throw Error(ErrorCode::IoFailure, "checkpoint lacks a 1-logit head");

  Checkpoint ck;
  ck.model = ScorerModel(spec);
  const auto& layers = ck.model.layers();
  if (layers.size() != raws.size()) throw Error(ErrorCode::IoFailure, "layer layout mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (static_cast<std::uint32_t>(l.in_channels) != raws[i].in || l.weight_count() != raws[i].w.size())
      throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(i) + " dimensions are inconsistent");
    std::copy(raws[i].w.begin(), raws[i].w.end(), ck.model.params().begin() + static_cast<std::ptrdiff_t>(l.weight_offset));
    std::copy(raws[i].b.begin(), raws[i].b.end(), ck.model.params().begin() + static_cast<std::ptrdiff_t>(l.bias_offset));
  }
  const std::uint8_t has_opt = r.u8();
  if (has_opt > 1) throw Error(ErrorCode::IoFailure, "bad optimizer flag");
  if (has_opt) {
    const std::size_t n = ck.model.parameter_count();
    ck.has_optimizer = true;
    ck.optimizer.step = r.u64();
    ck.optimizer.learning_rate = r.f64();
    ck.optimizer.beta1 = r.f64();
    ck.optimizer.beta2 = r.f64();
    ck.optimizer.epsilon = r.f64();
    ck.optimizer.m.resize(n);
    ck.optimizer.v.resize(n);
    for (double& v : ck.optimizer.m) v = r.f64();
    for (double& v : ck.optimizer.v) v = r.f64();
  }
  if (!r.done()) throw Error(ErrorCode::IoFailure, "trailing bytes in checkpoint");
  return ck;
}

/// Write atomically: the bytes go to a temporary sibling which is renamed
/// over `path`.
inline void save_checkpoint(const ScorerModel& model, const OptimizerState* opt,
                            const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(model, opt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot move checkpoint into place: " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, const InputGeometry* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  return decode_checkpoint(bytes, expected);
}

}  // namespace slsmil
