#include "deepen/energy_net.hpp"

#include <Eigen/Core>

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "deepen/errors.hpp"

namespace deepen {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

constexpr std::size_t kTaps = NetConfig::kKernel * NetConfig::kKernel;

// cols[(c*9 + ky*3 + kx), y*W + x] = in[c, y+ky-1, x+kx-1] (zero outside).
void im2col(const double* in, std::size_t channels, std::size_t h, std::size_t w, RowMat& cols) {
  const std::size_t hw = h * w;
  cols.resize(static_cast<Eigen::Index>(channels * kTaps), static_cast<Eigen::Index>(hw));
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = in + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* dst = cols.data() + (c * kTaps + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y + ky) - 1;
          double* row = dst + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(row, row + w, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(sy) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x + kx) - 1;
            row[x] = (sx < 0 || sx >= static_cast<long>(w)) ? 0.0 : srow[sx];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
void col2im(const RowMat& cols, std::size_t channels, std::size_t h, std::size_t w, double* out) {
  const std::size_t hw = h * w;
  std::fill(out, out + channels * hw, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double* dst = out + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* src = cols.data() + (c * kTaps + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          double* drow = dst + static_cast<std::size_t>(sy) * w;
          const double* srow = src + y * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x + kx) - 1;
            if (sx >= 0 && sx < static_cast<long>(w)) drow[sx] += srow[x];
          }
        }
      }
    }
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void NetConfig::validate() const {
  if (layers < 1) throw InvalidArgument("NetConfig: need at least one conv layer");
  if (channels < 1) throw InvalidArgument("NetConfig: need at least one channel");
  if (!(slope >= 0.0 && slope < 1.0)) throw InvalidArgument("NetConfig: slope must be in [0, 1)");
}

NetParams NetParams::zeros(const NetConfig& cfg) {
  cfg.validate();
  NetParams p;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    ConvParams c;
    c.in_channels = cfg.in_channels(l);
    c.out_channels = cfg.channels;
    c.weight.assign(c.out_channels * c.in_channels * kTaps, 0.0);
    c.bias.assign(c.out_channels, 0.0);
    p.conv.push_back(std::move(c));
  }
  p.head_weight.assign(cfg.channels, 0.0);
  p.head_bias.assign(1, 0.0);
  return p;
}

std::size_t NetParams::size() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const auto&, std::span<const double> v) { n += v.size(); });
  return n;
}

std::vector<double> NetParams::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  for_each([&](const std::string&, const auto&, std::span<const double> v) {
    out.insert(out.end(), v.begin(), v.end());
  });
  return out;
}

void NetParams::unflatten(std::span<const double> values) {
  if (values.size() != size()) throw InvalidArgument("NetParams::unflatten: size mismatch");
  std::size_t k = 0;
  for_each([&](const std::string&, const auto&, std::span<double> v) {
    for (auto& x : v) x = values[k++];
  });
}

bool NetParams::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const auto&, std::span<const double> v) {
    for (double x : v) ok = ok && std::isfinite(x);
  });
  return ok;
}

double NetParams::norm() const {
  double acc = 0.0;
  for_each([&](const std::string&, const auto&, std::span<const double> v) {
    for (double x : v) acc += x * x;
  });
  return std::sqrt(acc);
}

void NetParams::axpy(double alpha, const NetParams& other) {
  const auto src = other.flatten();
  if (src.size() != size()) throw InvalidArgument("NetParams::axpy: layout mismatch");
  std::size_t k = 0;
  for_each([&](const std::string&, const auto&, std::span<double> v) {
    for (auto& x : v) x += alpha * src[k++];
  });
}

void NetParams::scale(double alpha) {
  for_each([&](const std::string&, const auto&, std::span<double> v) {
    for (auto& x : v) x *= alpha;
  });
}

bool operator==(const NetParams& a, const NetParams& b) {
  if (a.conv.size() != b.conv.size()) return false;
  for (std::size_t l = 0; l < a.conv.size(); ++l) {
    if (a.conv[l].in_channels != b.conv[l].in_channels ||
        a.conv[l].out_channels != b.conv[l].out_channels || a.conv[l].weight != b.conv[l].weight ||
        a.conv[l].bias != b.conv[l].bias) {
      return false;
    }
  }
  return a.head_weight == b.head_weight && a.head_bias == b.head_bias;
}

EnergyNetwork::EnergyNetwork(NetConfig cfg, NetParams params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  check_params();
}

EnergyNetwork EnergyNetwork::zeros(const NetConfig& cfg) {
  return EnergyNetwork(cfg, NetParams::zeros(cfg));
}

void EnergyNetwork::check_params() const {
  const NetParams ref = NetParams::zeros(cfg_);
  bool ok = params_.conv.size() == ref.conv.size() &&
            params_.head_weight.size() == ref.head_weight.size() &&
            params_.head_bias.size() == 1;
  for (std::size_t l = 0; ok && l < ref.conv.size(); ++l) {
    ok = params_.conv[l].in_channels == ref.conv[l].in_channels &&
         params_.conv[l].out_channels == ref.conv[l].out_channels &&
         params_.conv[l].weight.size() == ref.conv[l].weight.size() &&
         params_.conv[l].bias.size() == ref.conv[l].bias.size();
  }
  if (!ok) throw InvalidArgument("EnergyNetwork: parameters do not match the layer plan");
}

Tape EnergyNetwork::forward(const ComplexImage& x) const {
  if (x.height() < 1 || x.width() < 1) throw InvalidArgument("EnergyNetwork::forward: empty image");
  const std::size_t h = x.height();
  const std::size_t w = x.width();
  const std::size_t hw = h * w;

  Tape tape;
  tape.height = h;
  tape.width = w;
  tape.activations.resize(cfg_.layers + 1);
  FeatureMap& in = tape.activations[0];
  in.channels = 2;
  in.data.resize(2 * hw);
  for (std::size_t i = 0; i < hw; ++i) {
    in.data[i] = x[i].real();
    in.data[hw + i] = x[i].imag();
  }

  RowMat cols;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const ConvParams& conv = params_.conv[l];
    const FeatureMap& prev = tape.activations[l];
    im2col(prev.data.data(), conv.in_channels, h, w, cols);
    ConstMap weight(conv.weight.data(), static_cast<Eigen::Index>(conv.out_channels),
                    static_cast<Eigen::Index>(conv.in_channels * kTaps));
    FeatureMap& out = tape.activations[l + 1];
    out.channels = conv.out_channels;
    out.data.resize(conv.out_channels * hw);
    MutMap z(out.data.data(), static_cast<Eigen::Index>(conv.out_channels),
             static_cast<Eigen::Index>(hw));
    z.noalias() = weight * cols;
    for (std::size_t c = 0; c < conv.out_channels; ++c) {
      double* row = out.data.data() + c * hw;
      const double b = conv.bias[c];
      for (std::size_t p = 0; p < hw; ++p) {
        const double v = row[p] + b;
        row[p] = v > 0.0 ? v : cfg_.slope * v;
      }
    }
  }

  const FeatureMap& last = tape.activations.back();
  tape.pooled.assign(last.channels, 0.0);
  double s = params_.head_bias[0];
  for (std::size_t c = 0; c < last.channels; ++c) {
    double acc = 0.0;
    const double* row = last.data.data() + c * hw;
    for (std::size_t p = 0; p < hw; ++p) acc += row[p];
    tape.pooled[c] = acc;
    s += params_.head_weight[c] * acc;
  }
  tape.head_pre = s;
  tape.energy = s > 0.0 ? s : 0.0;
  return tape;
}

void EnergyNetwork::backward(const Tape& tape, ComplexImage* input_grad,
                             NetParams* param_grad) const {
  const std::size_t h = tape.height;
  const std::size_t w = tape.width;
  const std::size_t hw = h * w;
  if (param_grad) *param_grad = NetParams::zeros(cfg_);
  if (input_grad) *input_grad = ComplexImage(h, w);
  if (!(tape.head_pre > 0.0)) return;  // output ReLU inactive: every gradient is zero

  if (param_grad) {
    param_grad->head_bias[0] = 1.0;
    param_grad->head_weight = tape.pooled;
  }

  // dE/da_L is constant over pixels (sum pooling).
  const std::size_t top = cfg_.layers;
  RowMat grad(static_cast<Eigen::Index>(tape.activations[top].channels),
              static_cast<Eigen::Index>(hw));
  for (std::size_t c = 0; c < tape.activations[top].channels; ++c) {
    grad.row(static_cast<Eigen::Index>(c)).setConstant(params_.head_weight[c]);
  }

  RowMat cols;
  RowMat dcols;
  for (std::size_t l = cfg_.layers; l-- > 0;) {
    const ConvParams& conv = params_.conv[l];
    const FeatureMap& out = tape.activations[l + 1];
    // τ'(z) from the stored activation: a > 0 iff z > 0.
    for (std::size_t i = 0; i < conv.out_channels * hw; ++i) {
      if (!(out.data[i] > 0.0)) grad.data()[i] *= cfg_.slope;
    }
    if (param_grad) {
      ConvParams& g = param_grad->conv[l];
      im2col(tape.activations[l].data.data(), conv.in_channels, h, w, cols);
      MutMap gw(g.weight.data(), static_cast<Eigen::Index>(conv.out_channels),
                static_cast<Eigen::Index>(conv.in_channels * kTaps));
      gw.noalias() = grad * cols.transpose();
      for (std::size_t c = 0; c < conv.out_channels; ++c) {
        g.bias[c] = grad.row(static_cast<Eigen::Index>(c)).sum();
      }
    }
    if (l == 0 && !input_grad) break;
    ConstMap weight(conv.weight.data(), static_cast<Eigen::Index>(conv.out_channels),
                    static_cast<Eigen::Index>(conv.in_channels * kTaps));
    dcols.noalias() = weight.transpose() * grad;
    RowMat next(static_cast<Eigen::Index>(conv.in_channels), static_cast<Eigen::Index>(hw));
    col2im(dcols, conv.in_channels, h, w, next.data());
    grad.swap(next);
  }

  if (input_grad) {
    for (std::size_t i = 0; i < hw; ++i) (*input_grad)[i] = cplx{grad.data()[i], grad.data()[hw + i]};
  }
}

double EnergyNetwork::energy(const ComplexImage& x) const { return forward(x).energy; }

ComplexImage EnergyNetwork::grad_x(const ComplexImage& x) const {
  ComplexImage g;
  backward(forward(x), &g, nullptr);
  return g;
}

std::pair<double, ComplexImage> EnergyNetwork::energy_and_grad(const ComplexImage& x) const {
  const Tape tape = forward(x);
  ComplexImage g;
  backward(tape, &g, nullptr);
  return {tape.energy, std::move(g)};
}

NetParams EnergyNetwork::grad_theta(const ComplexImage& x) const {
  NetParams g;
  backward(forward(x), nullptr, &g);
  return g;
}

void InitScale::validate() const {
  if (!(head_gain > 0.0 && std::isfinite(head_gain))) throw InvalidArgument("InitScale: head_gain must be > 0");
  if (!std::isfinite(head_bias)) throw InvalidArgument("InitScale: head_bias must be finite");
}

EnergyNetwork init_params(const NetConfig& cfg, std::uint64_t seed, const InitScale& scale) {
  scale.validate();
  NetParams p = NetParams::zeros(cfg);
  std::mt19937_64 rng(seed);
  for (auto& conv : p.conv) {
    const double std = std::sqrt(2.0 / static_cast<double>(conv.in_channels * kTaps));
    std::normal_distribution<double> normal(0.0, std);
    for (auto& v : conv.weight) v = normal(rng);
  }
  std::normal_distribution<double> head(0.0, scale.head_gain / std::sqrt(static_cast<double>(cfg.channels)));
  for (auto& v : p.head_weight) v = head(rng);
  p.head_bias[0] = scale.head_bias;
  return EnergyNetwork(cfg, std::move(p));
}

void add_params(TensorArchive& archive, const NetParams& params, const std::string& prefix) {
  params.for_each([&](const std::string& name, const std::vector<std::uint32_t>& shape,
                      std::span<const double> values) {
    Tensor t;
    t.dtype = DType::F64;
    t.dims = shape;
    t.values.assign(values.begin(), values.end());
    archive.tensors.emplace_back(prefix + name, std::move(t));
  });
}

NetParams read_params(const TensorArchive& archive, const NetConfig& cfg, const std::string& prefix) {
  NetParams p = NetParams::zeros(cfg);
  p.for_each([&](const std::string& name, const std::vector<std::uint32_t>& shape,
                 std::span<double> values) {
    const Tensor& t = archive.at(prefix + name);
    if (t.dims != shape || t.values.size() != values.size()) {
      throw CheckpointIncompatible("tensor '" + prefix + name + "' has an unexpected shape");
    }
    std::copy(t.values.begin(), t.values.end(), values.begin());
  });
  return p;
}

TensorArchive to_archive(const EnergyNetwork& net, const std::string& prefix) {
  TensorArchive archive;
  const NetConfig& cfg = net.config();
  archive.header["format"] = "deepen-net-1";
  archive.header["layers"] = std::to_string(cfg.layers);
  archive.header["channels"] = std::to_string(cfg.channels);
  archive.header["in_channels"] = std::to_string(NetConfig::kInputChannels);
  archive.header["kernel"] = std::to_string(NetConfig::kKernel);
  archive.header["slope"] = format_double(cfg.slope);
  add_params(archive, net.params(), prefix);
  return archive;
}

EnergyNetwork from_archive(const TensorArchive& archive, const std::string& prefix) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = archive.header.find(key);
    if (it == archive.header.end()) throw CheckpointIncompatible("checkpoint header lacks '" + key + "'");
    return it->second;
  };
  if (get("format") != "deepen-net-1") {
    throw CheckpointIncompatible("unsupported checkpoint format '" + get("format") + "'");
  }
  NetConfig cfg;
  try {
    cfg.layers = std::stoul(get("layers"));
    cfg.channels = std::stoul(get("channels"));
    cfg.slope = std::stod(get("slope"));
    if (std::stoul(get("in_channels")) != NetConfig::kInputChannels ||
        std::stoul(get("kernel")) != NetConfig::kKernel) {
      throw CheckpointIncompatible("checkpoint uses an unsupported layer plan");
    }
  } catch (const std::logic_error&) {
    throw CheckpointIncompatible("checkpoint header has malformed hyperparameters");
  }
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw CheckpointIncompatible(std::string("checkpoint hyperparameters invalid: ") + e.what());
  }
  return EnergyNetwork(cfg, read_params(archive, cfg, prefix));
}

void save_params(const EnergyNetwork& net, const std::filesystem::path& path) {
  write_archive(path, to_archive(net));
}

EnergyNetwork load_params(const std::filesystem::path& path) { return from_archive(read_archive(path)); }

}  // namespace deepen
