#include "mergeq/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "mergeq/errors.hpp"
#include "mergeq/rng.hpp"

namespace mergeq {

void Topology::validate() const {
  if (layer_widths.size() < 2)
    throw ConfigError("layer_widths: need at least input and output widths");
  for (int w : layer_widths)
    if (w < 1) throw ConfigError("layer_widths: widths must be positive");
}

int param_count(const Topology& t) {
  t.validate();
  int total = 0;
  for (std::size_t i = 1; i < t.layer_widths.size(); ++i)
    total += t.layer_widths[i - 1] * t.layer_widths[i] + t.layer_widths[i];
  return total;
}

Topology Weights::topology() const {
  Topology t;
  t.layer_widths.clear();
  for (const auto& l : layers) {
    if (t.layer_widths.empty()) t.layer_widths.push_back(l.in);
    t.layer_widths.push_back(l.out);
  }
  return t;
}

Weights init_network(const Topology& topology, std::uint64_t seed) {
  topology.validate();
  Rng rng(seed);
  Weights w;
  for (std::size_t i = 1; i < topology.layer_widths.size(); ++i) {
    Layer l;
    l.in = topology.layer_widths[i - 1];
    l.out = topology.layer_widths[i];
    const double bound = std::sqrt(6.0 / (l.in + l.out));
    l.w.resize(static_cast<std::size_t>(l.in) * l.out);
    for (auto& x : l.w) x = rng.uniform(-bound, bound);
    l.b.assign(l.out, 0.0);
    w.layers.push_back(std::move(l));
  }
  return w;
}

namespace {

void check_input(const Weights& w, std::span<const double> input) {
  if (w.layers.empty()) throw std::invalid_argument("empty network");
  if (static_cast<int>(input.size()) != w.layers.front().in)
    throw std::invalid_argument(
        "input width " + std::to_string(input.size()) + ", network expects " +
        std::to_string(w.layers.front().in));
  for (double x : input)
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite input");
}

struct Trace {
  std::vector<std::vector<double>> act;  // act[0] = input, act[i] = layer i output
  std::vector<std::vector<double>> pre;  // pre-activations per layer
};

Trace forward_trace(const Weights& w, std::span<const double> input) {
  Trace t;
  t.act.emplace_back(input.begin(), input.end());
  for (std::size_t li = 0; li < w.layers.size(); ++li) {
    const Layer& l = w.layers[li];
    std::vector<double> z(l.out);
    const auto& x = t.act.back();
    for (int o = 0; o < l.out; ++o) {
      double s = l.b[o];
      const double* row = &l.w[static_cast<std::size_t>(o) * l.in];
      for (int i = 0; i < l.in; ++i) s += row[i] * x[i];
      z[o] = s;
    }
    t.pre.push_back(z);
    const bool hidden = li + 1 < w.layers.size();
    if (hidden)
      for (auto& v : z) v = std::max(0.0, v);
    t.act.push_back(std::move(z));
  }
  return t;
}

}  // namespace

std::vector<double> forward(const Weights& w, std::span<const double> input) {
  check_input(w, input);
  return forward_trace(w, input).act.back();
}

Weights gradients(const Weights& w, std::span<const double> input, int action,
                  double target) {
  check_input(w, input);
  if (!std::isfinite(target)) throw std::invalid_argument("non-finite target");
  if (action < 0 || action >= w.layers.back().out)
    throw std::invalid_argument("action index out of range");

  const Trace t = forward_trace(w, input);

  Weights g;
  g.layers.resize(w.layers.size());
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    g.layers[i].in = w.layers[i].in;
    g.layers[i].out = w.layers[i].out;
    g.layers[i].w.assign(w.layers[i].w.size(), 0.0);
    g.layers[i].b.assign(w.layers[i].b.size(), 0.0);
  }

  // dL/dq is nonzero only at the chosen action's output unit.
  std::vector<double> delta(w.layers.back().out, 0.0);
  delta[action] = 2.0 * (t.act.back()[action] - target);

  for (int li = static_cast<int>(w.layers.size()) - 1; li >= 0; --li) {
    const Layer& l = w.layers[li];
    const auto& x = t.act[li];
    Layer& gl = g.layers[li];
    for (int o = 0; o < l.out; ++o) {
      if (delta[o] == 0.0) continue;
      gl.b[o] = delta[o];
      double* grow = &gl.w[static_cast<std::size_t>(o) * l.in];
      for (int i = 0; i < l.in; ++i) grow[i] = delta[o] * x[i];
    }
    if (li == 0) break;
    std::vector<double> prev(l.in, 0.0);
    for (int o = 0; o < l.out; ++o) {
      if (delta[o] == 0.0) continue;
      const double* row = &l.w[static_cast<std::size_t>(o) * l.in];
      for (int i = 0; i < l.in; ++i) prev[i] += delta[o] * row[i];
    }
    // ReLU kink: zero gradient where the pre-activation was non-positive.
    const auto& z = t.pre[li - 1];
    for (int i = 0; i < l.in; ++i)
      if (z[i] <= 0.0) prev[i] = 0.0;
    delta = std::move(prev);
  }
  return g;
}

void sgd_step(Weights& w, std::span<const double> input, int action,
              double target, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  const Weights g = gradients(w, input, action, target);
  for (std::size_t li = 0; li < w.layers.size(); ++li) {
    Layer& l = w.layers[li];
    const Layer& gl = g.layers[li];
    for (std::size_t i = 0; i < l.w.size(); ++i) l.w[i] -= lr * gl.w[i];
    for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] -= lr * gl.b[i];
  }
}

namespace {

constexpr char kMagic[4] = {'M', 'R', 'W', '1'};
constexpr std::uint32_t kMaxLayers = 1024;
constexpr std::uint32_t kMaxWidth = 1u << 20;

void put_u32(std::string& buf, std::uint32_t v) {
  char b[4];
  b[0] = static_cast<char>(v & 0xFF);
  b[1] = static_cast<char>((v >> 8) & 0xFF);
  b[2] = static_cast<char>((v >> 16) & 0xFF);
  b[3] = static_cast<char>((v >> 24) & 0xFF);
  buf.append(b, 4);
}

void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

struct Reader {
  const std::string& data;
  std::size_t off = 0;

  std::uint32_t u32() {
    if (off + 4 > data.size()) throw FormatError("truncated weight file");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<unsigned char>(data[off + i]);
    off += 4;
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

}  // namespace

void save_weights(const Weights& w, const std::filesystem::path& path) {
  if (w.layers.empty()) throw FormatError("refusing to save an empty network");
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, static_cast<std::uint32_t>(w.layers.size()));
  for (const auto& l : w.layers) {
    put_u32(buf, static_cast<std::uint32_t>(l.in));
    put_u32(buf, static_cast<std::uint32_t>(l.out));
    for (double v : l.w) put_f32(buf, static_cast<float>(v));
    for (double v : l.b) put_f32(buf, static_cast<float>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw FormatError("short write to " + path.string());
}

Weights load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());

  if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0)
    throw FormatError("bad magic '" + data.substr(0, std::min<std::size_t>(4, data.size())) +
                      "', expected 'MRW1'");
  Reader r{data, 4};
  const std::uint32_t layer_count = r.u32();
  if (layer_count == 0 || layer_count > kMaxLayers)
    throw FormatError("implausible layer count " + std::to_string(layer_count));

  Weights w;
  int prev_out = -1;
  for (std::uint32_t li = 0; li < layer_count; ++li) {
    Layer l;
    const std::uint32_t in = r.u32();
    const std::uint32_t out = r.u32();
    if (in == 0 || out == 0 || in > kMaxWidth || out > kMaxWidth)
      throw FormatError("implausible layer shape " + std::to_string(in) + "x" +
                        std::to_string(out));
    if (prev_out >= 0 && static_cast<int>(in) != prev_out)
      throw FormatError("layer " + std::to_string(li) + " input width " +
                        std::to_string(in) + " does not match previous output " +
                        std::to_string(prev_out));
    prev_out = static_cast<int>(out);
    l.in = static_cast<int>(in);
    l.out = static_cast<int>(out);
    l.w.resize(static_cast<std::size_t>(in) * out);
    for (auto& v : l.w) v = r.f32();
    l.b.resize(out);
    for (auto& v : l.b) v = r.f32();
    w.layers.push_back(std::move(l));
  }
  if (r.off != data.size())
    throw FormatError("trailing bytes after weight data");
  return w;
}

}  // namespace mergeq
