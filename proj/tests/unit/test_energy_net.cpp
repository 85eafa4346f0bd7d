#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "deepen/energy_net.hpp"
#include "deepen/errors.hpp"
#include "deepen/tensor_io.hpp"
#include "test_support.hpp"

using namespace deepen;
using deepen::test::random_image;

namespace {

EnergyNetwork random_net(std::size_t layers, std::size_t channels, std::uint64_t seed) {
  NetConfig cfg;
  cfg.layers = layers;
  cfg.channels = channels;
  EnergyNetwork net = init_params(cfg, seed, InitScale{1.0, 0.0});
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> n(0.0, 0.1);
  net.mutable_params().for_each([&](const std::string& name, const auto&, std::span<double> v) {
    if (name.find("bias") != std::string::npos) {
      for (auto& b : v) b = n(rng);
    }
  });
  // Keep the output unit comfortably active.
  net.mutable_params().head_bias[0] = 50.0;
  return net;
}

// Smallest |pre-activation| over all hidden units; central differences are
// exact for a piecewise-linear map as long as no unit crosses zero.
double kink_margin(const EnergyNetwork& net, const ComplexImage& x) {
  const Tape tape = net.forward(x);
  double margin = std::abs(tape.head_pre);
  const double slope = net.config().slope;
  for (std::size_t l = 1; l < tape.activations.size(); ++l) {
    for (double a : tape.activations[l].data) margin = std::min(margin, a > 0 ? a : std::abs(a) / slope);
  }
  return margin;
}

}  // namespace

TEST_CASE("zero network: zero energy and gradients") {
  NetConfig cfg;
  cfg.channels = 8;
  const EnergyNetwork net = EnergyNetwork::zeros(cfg);
  std::mt19937_64 rng(1);
  const ComplexImage x = random_image(8, 8, rng);
  CHECK(net.energy(x) == 0.0);
  CHECK(norm(net.grad_x(x)) == 0.0);
  CHECK(net.grad_theta(x).norm() == 0.0);
}

TEST_CASE("energy is nonnegative") {
  NetConfig cfg;
  cfg.channels = 4;
  cfg.layers = 2;
  std::mt19937_64 rng(2);
  for (int seed = 0; seed < 10; ++seed) {
    EnergyNetwork net = init_params(cfg, static_cast<std::uint64_t>(seed), InitScale{1.0, 0.0});
    for (int t = 0; t < 100; ++t) {
      const double e = net.energy(random_image(6, 6, rng, 2.0));
      CHECK(e >= 0.0);
      CHECK(std::isfinite(e));
    }
  }
}

TEST_CASE("one layer, one channel on a 2x2 input matches the hand trace") {
  NetConfig cfg;
  cfg.layers = 1;
  cfg.channels = 1;
  NetParams p = NetParams::zeros(cfg);
  p.conv[0].weight[4] = 1.0;    // real channel, center tap
  p.conv[0].weight[5] = 0.5;    // real channel, right neighbour
  p.conv[0].weight[13] = -1.0;  // imaginary channel, center tap
  p.conv[0].bias[0] = 0.1;
  p.head_weight[0] = 2.0;
  p.head_bias[0] = -0.5;
  const EnergyNetwork net(cfg, p);
  const ComplexImage x(2, 2, {cplx{1, 0}, cplx{2, -1}, cplx{0, 1}, cplx{-1, 0.5}});

  // conv: [[2.1, 3.1], [-1.4, -1.4]] -> leaky: [[2.1, 3.1], [-0.014, -0.014]]
  // pooled 5.172, energy 2 * 5.172 - 0.5
  const Tape tape = net.forward(x);
  CHECK(tape.activations[1].data[0] == doctest::Approx(2.1));
  CHECK(tape.activations[1].data[2] == doctest::Approx(-0.014));
  CHECK(tape.pooled[0] == doctest::Approx(5.172));
  CHECK(net.energy(x) == doctest::Approx(9.844));

  const ComplexImage g = net.grad_x(x);
  CHECK(std::abs(g[0] - cplx{2.0, -2.0}) < 1e-12);
  CHECK(std::abs(g[1] - cplx{3.0, -2.0}) < 1e-12);
  CHECK(std::abs(g[2] - cplx{0.02, -0.02}) < 1e-12);
  CHECK(std::abs(g[3] - cplx{0.03, -0.02}) < 1e-12);

  const NetParams gt = net.grad_theta(x);
  CHECK(gt.head_weight[0] == doctest::Approx(5.172));
  CHECK(gt.head_bias[0] == doctest::Approx(1.0));
  CHECK(gt.conv[0].bias[0] == doctest::Approx(4.04));
  CHECK(gt.conv[0].weight[4] == doctest::Approx(5.98));
}

TEST_CASE("grad_x matches central differences") {
  std::mt19937_64 rng(3);
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const EnergyNetwork net = random_net(3, 4, seed);
    const ComplexImage x = random_image(8, 8, rng);
    if (kink_margin(net, x) < 1e-3) continue;
    const ComplexImage g = net.grad_x(x);
    const double h = 1e-5;
    ComplexImage fd(8, 8);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (int part = 0; part < 2; ++part) {
        const cplx d = part == 0 ? cplx{h, 0} : cplx{0, h};
        ComplexImage xp = x;
        ComplexImage xm = x;
        xp[i] += d;
        xm[i] -= d;
        const double deriv = (net.energy(xp) - net.energy(xm)) / (2 * h);
        fd[i] += part == 0 ? cplx{deriv, 0} : cplx{0, deriv};
      }
    }
    CHECK(test::rel_diff(g, fd) < 1e-5);
    ++checked;
  }
  CHECK(checked >= 5);
}

TEST_CASE("grad_theta matches central differences per parameter block") {
  std::mt19937_64 rng(4);
  const EnergyNetwork net = random_net(2, 3, 7);
  const ComplexImage x = random_image(8, 8, rng);
  REQUIRE(kink_margin(net, x) > 1e-4);
  const NetParams g = net.grad_theta(x);
  const std::vector<double> flat = net.params().flatten();
  const std::vector<double> gflat = g.flatten();

  std::size_t offset = 0;
  net.params().for_each([&](const std::string& name, const auto&, std::span<const double> block) {
    double err = 0.0;
    double ref = 0.0;
    for (std::size_t j = 0; j < block.size(); ++j) {
      const double h = 1e-5;
      auto plus = flat;
      auto minus = flat;
      plus[offset + j] += h;
      minus[offset + j] -= h;
      NetParams pp = net.params();
      NetParams pm = net.params();
      pp.unflatten(plus);
      pm.unflatten(minus);
      const double fd = (EnergyNetwork(net.config(), pp).energy(x) - EnergyNetwork(net.config(), pm).energy(x)) / (2 * h);
      err += (fd - gflat[offset + j]) * (fd - gflat[offset + j]);
      ref += fd * fd;
    }
    INFO(name);
    CHECK(std::sqrt(err) <= 1e-5 * std::max(std::sqrt(ref), 1e-8));
    offset += block.size();
  });
}

TEST_CASE("head scaling, dead output unit and linearity") {
  std::mt19937_64 rng(5);
  EnergyNetwork net = random_net(2, 4, 3);
  const ComplexImage x = random_image(6, 6, rng);
  net.mutable_params().head_bias[0] = 0.0;
  const double s = net.forward(x).head_pre;
  if (s < 0) {
    for (auto& w : net.mutable_params().head_weight) w = -w;
  }
  const ComplexImage g1 = net.grad_x(x);
  EnergyNetwork scaled = net;
  for (auto& w : scaled.mutable_params().head_weight) w *= 2.5;
  CHECK(test::rel_diff(scaled.grad_x(x), 2.5 * g1) < 1e-12);

  EnergyNetwork dead = net;
  dead.mutable_params().head_bias[0] = -1e6;
  CHECK(dead.energy(x) == 0.0);
  CHECK(dead.forward(x).head_pre < 0.0);
  CHECK(dead.grad_theta(x).norm() == 0.0);
  CHECK(norm(dead.grad_x(x)) == 0.0);

  NetParams twice = net.grad_theta(x);
  twice.axpy(1.0, net.grad_theta(x));
  NetParams doubled = net.grad_theta(x);
  doubled.scale(2.0);
  CHECK(twice == doubled);
}

TEST_CASE("init_params: determinism and statistics") {
  NetConfig cfg;  // 5 layers, 64 channels
  const EnergyNetwork a = init_params(cfg, 42);
  const EnergyNetwork b = init_params(cfg, 42);
  CHECK(a.params() == b.params());
  CHECK_FALSE(a.params() == init_params(cfg, 43).params());

  for (const auto& conv : a.params().conv) {
    double ss = 0.0;
    for (double v : conv.weight) ss += v * v;
    const double emp = std::sqrt(ss / static_cast<double>(conv.weight.size()));
    const double target = std::sqrt(2.0 / static_cast<double>(conv.in_channels * 9));
    CHECK(std::abs(emp - target) / target < 0.05);
    for (double bias : conv.bias) CHECK(bias == 0.0);
  }

  std::mt19937_64 rng(6);
  std::vector<double> energies;
  for (int t = 0; t < 20; ++t) energies.push_back(a.energy(random_image(16, 16, rng)));
  double mean = 0.0;
  for (double e : energies) mean += e;
  mean /= static_cast<double>(energies.size());
  double var = 0.0;
  for (double e : energies) {
    CHECK(std::isfinite(e));
    var += (e - mean) * (e - mean);
  }
  CHECK(std::sqrt(var / static_cast<double>(energies.size() - 1)) < 10.0);
  CHECK_THROWS_AS(init_params(cfg, 1, InitScale{0.0, 1.0}), InvalidArgument);
}

TEST_CASE("config validation and shape errors") {
  NetConfig cfg;
  cfg.layers = 0;
  CHECK_THROWS_AS(EnergyNetwork::zeros(cfg), InvalidArgument);
  cfg = NetConfig{};
  cfg.slope = 1.5;
  CHECK_THROWS_AS(EnergyNetwork::zeros(cfg), InvalidArgument);
  cfg = NetConfig{};
  cfg.channels = 4;
  NetParams wrong = NetParams::zeros(cfg);
  wrong.head_weight.push_back(0.0);
  CHECK_THROWS_AS(EnergyNetwork(cfg, wrong), InvalidArgument);
  CHECK_THROWS_AS(EnergyNetwork::zeros(cfg).energy(ComplexImage()), InvalidArgument);
}

TEST_CASE("save/load round trip is bit exact") {
  const auto dir = std::filesystem::temp_directory_path() / "deepen_net_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  NetConfig cfg;
  cfg.channels = 6;
  cfg.layers = 3;
  cfg.slope = 0.02;
  const EnergyNetwork net = random_net(3, 6, 9);
  save_params(net, dir / "net.dpn1");
  const EnergyNetwork back = load_params(dir / "net.dpn1");
  CHECK(back.params() == net.params());
  CHECK(back.config() == net.config());
  std::mt19937_64 rng(7);
  const ComplexImage x = random_image(7, 5, rng);
  CHECK(back.energy(x) == net.energy(x));

  // Shape-inconsistent header is rejected.
  TensorArchive arc = read_archive(dir / "net.dpn1");
  arc.header["channels"] = "7";
  write_archive(dir / "bad.dpn1", arc);
  CHECK_THROWS_AS(load_params(dir / "bad.dpn1"), CheckpointIncompatible);
  arc = read_archive(dir / "net.dpn1");
  arc.header["format"] = "something-else";
  write_archive(dir / "bad2.dpn1", arc);
  CHECK_THROWS_AS(load_params(dir / "bad2.dpn1"), CheckpointIncompatible);
  CHECK_THROWS_AS(load_params(dir / "missing.dpn1"), IoError);
  std::filesystem::remove_all(dir);
}
