#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "deepen/energy_net.hpp"
#include "deepen/forward_model.hpp"

namespace deepen {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr_decay = 1.0;  // per-epoch factor: epoch e trains at lr · lr_decay^(e-1)
};

struct TrainConfig {
  NetConfig net;
  InitScale init;
  int epochs = 10;
  std::size_t batch_size = 8;
  AdamConfig adam;
  double epsilon = 0.001;        // Langevin noise scale
  int mcmc_steps = 30;
  double lambda_tilde = 0.01;    // regularizer of the chain initializer
  double smoothing_std = 0.002;  // noise added to true samples, per component (2ε)
  std::uint64_t seed = 0;        // initialization and every random stream
  int checkpoint_every = 0;      // epochs between checkpoint callbacks; 0 disables
  std::size_t workers = 1;       // threads for the fake-sample chains
  double max_drop_fraction = 0.5;

  void validate() const;
};

struct AdamState {
  NetParams m;
  NetParams v;
  long step = 0;

  static AdamState zeros(const NetConfig& cfg);
};

// (1/n) Σ E(x⁺) - (1/m) Σ E(x⁻)
double contrastive_loss(const EnergyNetwork& net, std::span<const ComplexImage> true_batch,
                        std::span<const ComplexImage> fake_batch);

// Exact parameter gradient of contrastive_loss. Fake samples are constants.
NetParams loss_grad_theta(const EnergyNetwork& net, std::span<const ComplexImage> true_batch,
                          std::span<const ComplexImage> fake_batch);

struct LossAndGrad {
  double loss = 0.0;
  double mean_energy_true = 0.0;
  double mean_energy_fake = 0.0;
  NetParams grad;
};
LossAndGrad contrastive_loss_and_grad(const EnergyNetwork& net,
                                      std::span<const ComplexImage> true_batch,
                                      std::span<const ComplexImage> fake_batch);

// Bias-corrected Adam update of net's parameters in place. Throws
// NumericalError on a non-finite gradient or update.
void adam_step(AdamState& state, EnergyNetwork& net, const NetParams& grad, const AdamConfig& cfg);

struct FakeBatch {
  std::vector<ComplexImage> samples;
  std::vector<std::size_t> dropped;  // indices of diverged chains
};

// x0 = sense_init(b) per measurement set, then cfg.mcmc_steps scaled Langevin
// steps under the current (frozen) network. Chain i draws its noise from
// derive_seed(seed, {i}). Diverged chains are dropped; throws NumericalError
// when more than cfg.max_drop_fraction of the batch diverges.
FakeBatch make_fake_batch(const EnergyNetwork& net, const ForwardOperator& op,
                          std::span<const CoilImages> measurements, const TrainConfig& cfg,
                          std::uint64_t seed);

struct TrainLogRow {
  int epoch = 0;
  long step = 0;
  double loss = 0.0;
  double mean_energy_true = 0.0;
  double mean_energy_fake = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
  std::size_t dropped = 0;
};

struct EpochSummary {
  int epoch = 0;
  double loss = 0.0;
  double mean_energy_true = 0.0;
  double mean_energy_fake = 0.0;
  double energy_gap() const;  // |mean E(x⁺) - mean E(x⁻)|
};

struct TrainState {
  EnergyNetwork net;
  AdamState adam;
  int epochs_done = 0;
};

struct TrainResult {
  TrainState state;
  std::vector<TrainLogRow> steps;
  std::vector<EpochSummary> epochs;
  long peak_live_buffers = 0;  // above the count live when training started
};

struct TrainCallbacks {
  std::function<void(const TrainLogRow&)> on_step;
  std::function<void(const EpochSummary&)> on_epoch;
  std::function<void(const TrainState&)> on_checkpoint;
};

// Contrastive maximum-likelihood training over ds.train. Starts from
// init_params(cfg.net, cfg.seed) or from `resume`, and runs until
// cfg.epochs epochs are done. Random streams are keyed by (seed, epoch, step),
// so a resumed run reproduces an uninterrupted one.
TrainResult train(const Dataset& ds, const TrainConfig& cfg, const TrainCallbacks& callbacks = {},
                  std::optional<TrainState> resume = std::nullopt);

std::vector<EpochSummary> summarize_epochs(const std::vector<TrainLogRow>& rows);

// Network parameters plus optimizer state in one archive; loadable with
// load_params as a plain network checkpoint.
void save_train_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_train_checkpoint(const std::filesystem::path& path);

void write_train_log_csv(const std::vector<TrainLogRow>& rows, const std::filesystem::path& path);
std::vector<TrainLogRow> read_train_log_csv(const std::filesystem::path& path);

}  // namespace deepen
