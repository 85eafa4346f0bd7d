#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deepen/complex_image.hpp"
#include "deepen/tensor_io.hpp"

namespace deepen {

// Scalar energy E(x) of a complex image together with its input gradient.
// Gradients use the steepest-descent convention for a real function of a
// complex argument: dE/d(re) + i dE/d(im), i.e. 2 dE/d(conj x).
class EnergyModel {
 public:
  virtual ~EnergyModel() = default;
  virtual double energy(const ComplexImage& x) const = 0;
  virtual ComplexImage grad_x(const ComplexImage& x) const = 0;
  virtual std::pair<double, ComplexImage> energy_and_grad(const ComplexImage& x) const {
    return {energy(x), grad_x(x)};
  }
};

class ZeroEnergy final : public EnergyModel {
 public:
  double energy(const ComplexImage&) const override { return 0.0; }
  ComplexImage grad_x(const ComplexImage& x) const override {
    return ComplexImage(x.height(), x.width());
  }
};

// E(x) = weight/2 ||x||²
class QuadraticEnergy final : public EnergyModel {
 public:
  explicit QuadraticEnergy(double weight = 1.0) : weight_(weight) {}
  double energy(const ComplexImage& x) const override { return 0.5 * weight_ * norm_sq(x); }
  ComplexImage grad_x(const ComplexImage& x) const override { return weight_ * x; }
  double weight() const noexcept { return weight_; }

 private:
  double weight_;
};

struct NetConfig {
  static constexpr std::size_t kInputChannels = 2;  // real and imaginary parts
  static constexpr std::size_t kKernel = 3;

  std::size_t layers = 5;
  std::size_t channels = 64;
  double slope = 0.01;  // hidden leaky-ReLU slope; 0 is a plain ReLU

  void validate() const;
  std::size_t in_channels(std::size_t layer) const {
    return layer == 0 ? kInputChannels : channels;
  }
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

struct ConvParams {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::vector<double> weight;  // [out][in][3][3]
  std::vector<double> bias;    // [out]
};

// All trainable tensors. Also used for parameter gradients and optimizer
// moments, which share the layout.
struct NetParams {
  std::vector<ConvParams> conv;
  std::vector<double> head_weight;  // [channels]
  std::vector<double> head_bias;    // [1]

  static NetParams zeros(const NetConfig& cfg);

  // Visits every tensor as (name, shape, values) in a fixed order.
  template <class F>
  void for_each(F&& f) {
    for (std::size_t l = 0; l < conv.size(); ++l) {
      auto& c = conv[l];
      const std::string p = "conv" + std::to_string(l);
      f(p + ".weight", std::vector<std::uint32_t>{static_cast<std::uint32_t>(c.out_channels),
                                                  static_cast<std::uint32_t>(c.in_channels), 3, 3},
        std::span<double>(c.weight));
      f(p + ".bias", std::vector<std::uint32_t>{static_cast<std::uint32_t>(c.out_channels)},
        std::span<double>(c.bias));
    }
    f(std::string("head.weight"),
      std::vector<std::uint32_t>{static_cast<std::uint32_t>(head_weight.size())},
      std::span<double>(head_weight));
    f(std::string("head.bias"), std::vector<std::uint32_t>{1}, std::span<double>(head_bias));
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<NetParams*>(this)->for_each(
        [&](const std::string& name, const std::vector<std::uint32_t>& shape, std::span<double> v) {
          f(name, shape, std::span<const double>(v));
        });
  }

  std::size_t size() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> values);
  bool all_finite() const;
  double norm() const;
  // this += alpha * other
  void axpy(double alpha, const NetParams& other);
  void scale(double alpha);

  friend bool operator==(const NetParams&, const NetParams&);
};

// Feature map of one layer: channels x (height*width), row-major.
struct FeatureMap {
  std::size_t channels = 0;
  std::vector<double> data;
  BufferToken token;
};

// Activations recorded by a forward pass: entry 0 is the 2-channel input,
// entry l+1 the output of hidden layer l.
struct Tape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<FeatureMap> activations;
  std::vector<double> pooled;  // spatial sum of the last activation
  double head_pre = 0.0;       // linear head output before the final ReLU
  double energy = 0.0;
};

// E(x) = ReLU(w · Σ_p a_L(p) + b), a_l = leaky(conv_l(a_{l-1})), a_0 = [Re x, Im x].
// 3x3 convolutions with zero padding 1; the head consumes the global spatial
// sum of the last feature map, so any image size is accepted.
class EnergyNetwork final : public EnergyModel {
 public:
  EnergyNetwork(NetConfig cfg, NetParams params);
  static EnergyNetwork zeros(const NetConfig& cfg);

  const NetConfig& config() const noexcept { return cfg_; }
  const NetParams& params() const noexcept { return params_; }
  NetParams& mutable_params() noexcept { return params_; }

  Tape forward(const ComplexImage& x) const;

  double energy(const ComplexImage& x) const override;
  ComplexImage grad_x(const ComplexImage& x) const override;
  std::pair<double, ComplexImage> energy_and_grad(const ComplexImage& x) const override;
  NetParams grad_theta(const ComplexImage& x) const;

  // Reverse pass over a recorded tape. Either output may be skipped.
  void backward(const Tape& tape, ComplexImage* input_grad, NetParams* param_grad) const;

 private:
  void check_params() const;

  NetConfig cfg_;
  NetParams params_;
};

// Head initialization. The head sees a spatial sum, so at unit gain the
// energy gradient is O(1) per pixel and a unit-step Langevin chain jumps far
// off the image manifold. The output ReLU floor is absorbing: once fakes
// reach zero energy their gradient vanishes and training stalls. A large
// positive bias keeps both sample sets well above it; its loss gradient
// cancels between them.
struct InitScale {
  double head_gain = 0.03;  // head std = head_gain / sqrt(channels)
  double head_bias = 100.0;

  void validate() const;
};

// Kernels N(0, sqrt(2/fan_in)), zero conv biases, head as InitScale.
EnergyNetwork init_params(const NetConfig& cfg, std::uint64_t seed, const InitScale& scale = {});

// Named-tensor archive form (hyperparameters in the header).
TensorArchive to_archive(const EnergyNetwork& net, const std::string& prefix = "");
EnergyNetwork from_archive(const TensorArchive& archive, const std::string& prefix = "");
void add_params(TensorArchive& archive, const NetParams& params, const std::string& prefix);
NetParams read_params(const TensorArchive& archive, const NetConfig& cfg, const std::string& prefix);

void save_params(const EnergyNetwork& net, const std::filesystem::path& path);
// Throws CheckpointIncompatible on a corrupt file or mismatched shapes.
EnergyNetwork load_params(const std::filesystem::path& path);

}  // namespace deepen
