#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mergeq {

// Fully-connected topology: ReLU hidden layers, identity output.
struct Topology {
  std::vector<int> layer_widths = {1, 24, 24, 12};

  void validate() const;  // throws ConfigError

  bool operator==(const Topology&) const = default;
};

int param_count(const Topology& topology);

struct Layer {
  int in = 0;
  int out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out

  bool operator==(const Layer&) const = default;
};

struct Weights {
  std::vector<Layer> layers;

  Topology topology() const;

  bool operator==(const Weights&) const = default;
};

// Per-layer uniform Glorot init in +-sqrt(6/(fan_in+fan_out)), zero biases.
Weights init_network(const Topology& topology, std::uint64_t seed);

std::vector<double> forward(const Weights& w, std::span<const double> input);

// Gradient of L = (target - q[action])^2 with respect to every parameter,
// in the same shape as the weights.
Weights gradients(const Weights& w, std::span<const double> input, int action,
                  double target);

// One SGD step on L = (target - q[action])^2.
void sgd_step(Weights& w, std::span<const double> input, int action,
              double target, double lr);

// Weight file, little-endian: magic "MRW1", u32 layer_count, then per layer
// u32 in, u32 out, out*in f32 row-major weights, out f32 biases. No padding.
// Values are stored as f32; the bit-exact round trip applies to those.
void save_weights(const Weights& w, const std::filesystem::path& path);
Weights load_weights(const std::filesystem::path& path);  // throws FormatError

}  // namespace mergeq
