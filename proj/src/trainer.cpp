#include "deepen/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

#include "deepen/errors.hpp"
#include "deepen/posterior.hpp"
#include "deepen/rng.hpp"
#include "deepen/sampler.hpp"

namespace deepen {

namespace {

// Fields make_fake_batch depends on; an empty chain is allowed there.
void validate_chain_fields(const TrainConfig& cfg) {
  cfg.net.validate();
  if (!(cfg.epsilon > 0.0)) throw InvalidArgument("TrainConfig: epsilon must be > 0");
  if (cfg.mcmc_steps < 0) throw InvalidArgument("TrainConfig: mcmc_steps must be >= 0");
  if (!(cfg.lambda_tilde > 0.0)) throw InvalidArgument("TrainConfig: lambda_tilde must be > 0");
  if (cfg.workers < 1) throw InvalidArgument("TrainConfig: workers must be >= 1");
  if (!(cfg.max_drop_fraction >= 0.0 && cfg.max_drop_fraction <= 1.0)) {
    throw InvalidArgument("TrainConfig: max_drop_fraction must be in [0, 1]");
  }
}

}  // namespace

void TrainConfig::validate() const {
  validate_chain_fields(*this);
  init.validate();
  if (epochs < 0) throw InvalidArgument("TrainConfig: epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
  if (!(adam.lr > 0.0)) throw InvalidArgument("TrainConfig: lr must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw InvalidArgument("TrainConfig: beta1 must be in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw InvalidArgument("TrainConfig: beta2 must be in [0, 1)");
  if (!(adam.eps > 0.0)) throw InvalidArgument("TrainConfig: adam eps must be > 0");
  if (!(adam.lr_decay > 0.0 && adam.lr_decay <= 1.0)) {
    throw InvalidArgument("TrainConfig: lr_decay must be in (0, 1]");
  }
  if (mcmc_steps < 1) throw InvalidArgument("TrainConfig: mcmc_steps must be >= 1");
  if (!(smoothing_std >= 0.0)) throw InvalidArgument("TrainConfig: smoothing_std must be >= 0");
  if (checkpoint_every < 0) throw InvalidArgument("TrainConfig: checkpoint_every must be >= 0");
}

AdamState AdamState::zeros(const NetConfig& cfg) {
  return AdamState{NetParams::zeros(cfg), NetParams::zeros(cfg), 0};
}

double EpochSummary::energy_gap() const { return std::abs(mean_energy_true - mean_energy_fake); }

namespace {

void require_nonempty(std::span<const ComplexImage> a, std::span<const ComplexImage> b, const char* op) {
  if (a.empty() || b.empty()) throw InvalidArgument(std::string(op) + ": batches must be non-empty");
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written by index; the first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < workers; ++t) {
    threads.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

LossAndGrad contrastive_loss_and_grad(const EnergyNetwork& net,
                                      std::span<const ComplexImage> true_batch,
                                      std::span<const ComplexImage> fake_batch) {
  require_nonempty(true_batch, fake_batch, "contrastive_loss_and_grad");
  LossAndGrad out;
  out.grad = NetParams::zeros(net.config());
  NetParams g;
  const double wt = 1.0 / static_cast<double>(true_batch.size());
  for (const auto& x : true_batch) {
    const Tape tape = net.forward(x);
    out.mean_energy_true += wt * tape.energy;
    net.backward(tape, nullptr, &g);
    out.grad.axpy(wt, g);
  }
  const double wf = 1.0 / static_cast<double>(fake_batch.size());
  for (const auto& x : fake_batch) {
    const Tape tape = net.forward(x);
    out.mean_energy_fake += wf * tape.energy;
    net.backward(tape, nullptr, &g);
    out.grad.axpy(-wf, g);
  }
  out.loss = out.mean_energy_true - out.mean_energy_fake;
  return out;
}

double contrastive_loss(const EnergyNetwork& net, std::span<const ComplexImage> true_batch,
                        std::span<const ComplexImage> fake_batch) {
  require_nonempty(true_batch, fake_batch, "contrastive_loss");
  double et = 0.0;
  for (const auto& x : true_batch) et += net.energy(x);
  double ef = 0.0;
  for (const auto& x : fake_batch) ef += net.energy(x);
  return et / static_cast<double>(true_batch.size()) - ef / static_cast<double>(fake_batch.size());
}

NetParams loss_grad_theta(const EnergyNetwork& net, std::span<const ComplexImage> true_batch,
                          std::span<const ComplexImage> fake_batch) {
  return contrastive_loss_and_grad(net, true_batch, fake_batch).grad;
}

void adam_step(AdamState& state, EnergyNetwork& net, const NetParams& grad, const AdamConfig& cfg) {
  if (!grad.all_finite()) {
    throw NumericalError("adam_step: non-finite gradient (norm " + std::to_string(grad.norm()) +
                         ", step " + std::to_string(state.step) + ")");
  }
  std::vector<double> theta = net.params().flatten();
  std::vector<double> m = state.m.flatten();
  std::vector<double> v = state.v.flatten();
  const std::vector<double> g = grad.flatten();
  if (g.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size()) {
    throw InvalidArgument("adam_step: parameter, gradient and moment shapes differ");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  state.m.unflatten(m);
  state.v.unflatten(v);
  net.mutable_params().unflatten(theta);
  if (!net.params().all_finite()) {
    throw NumericalError("adam_step: parameters became non-finite at step " + std::to_string(state.step));
  }
}

FakeBatch make_fake_batch(const EnergyNetwork& net, const ForwardOperator& op,
                          std::span<const CoilImages> measurements, const TrainConfig& cfg,
                          std::uint64_t seed) {
  validate_chain_fields(cfg);
  const std::size_t n = measurements.size();
  // Non-owning handles: the chains only read net and op.
  auto op_ptr = std::shared_ptr<const ForwardOperator>(&op, [](const ForwardOperator*) {});
  auto net_ptr = std::shared_ptr<const EnergyModel>(&net, [](const EnergyModel*) {});

  std::vector<ComplexImage> samples(n);
  std::vector<std::uint8_t> ok(n, 0);
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    const PosteriorModel model(op_ptr, net_ptr, measurements[i]);
    ComplexImage x0 = sense_init(op, measurements[i], cfg.lambda_tilde);
    SamplerConfig sc;
    sc.epsilon = cfg.epsilon;
    sc.n_steps = cfg.mcmc_steps;
    sc.variant = LangevinVariant::Scaled;
    sc.seed = derive_seed(seed, {i});
    try {
      samples[i] = sample_posterior(model, x0, sc).sample;
      ok[i] = 1;
    } catch (const DivergenceError&) {
      ok[i] = 0;
    }
  });

  FakeBatch batch;
  for (std::size_t i = 0; i < n; ++i) {
    if (ok[i]) {
      batch.samples.push_back(std::move(samples[i]));
    } else {
      batch.dropped.push_back(i);
    }
  }
  if (n > 0 && static_cast<double>(batch.dropped.size()) > cfg.max_drop_fraction * static_cast<double>(n)) {
    throw NumericalError("make_fake_batch: " + std::to_string(batch.dropped.size()) + " of " +
                         std::to_string(n) + " chains diverged");
  }
  if (batch.samples.empty()) throw NumericalError("make_fake_batch: every chain diverged");
  return batch;
}

std::vector<EpochSummary> summarize_epochs(const std::vector<TrainLogRow>& rows) {
  std::vector<EpochSummary> out;
  std::size_t count = 0;
  for (const auto& r : rows) {
    if (out.empty() || out.back().epoch != r.epoch) {
      if (!out.empty()) {
        out.back().loss /= static_cast<double>(count);
        out.back().mean_energy_true /= static_cast<double>(count);
        out.back().mean_energy_fake /= static_cast<double>(count);
      }
      out.push_back(EpochSummary{r.epoch, 0.0, 0.0, 0.0});
      count = 0;
    }
    out.back().loss += r.loss;
    out.back().mean_energy_true += r.mean_energy_true;
    out.back().mean_energy_fake += r.mean_energy_fake;
    ++count;
  }
  if (!out.empty() && count > 0) {
    out.back().loss /= static_cast<double>(count);
    out.back().mean_energy_true /= static_cast<double>(count);
    out.back().mean_energy_fake /= static_cast<double>(count);
  }
  return out;
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const TrainCallbacks& callbacks,
                  std::optional<TrainState> resume) {
  cfg.validate();
  if (ds.train.size() == 0) throw InvalidArgument("train: training split is empty");

  TrainResult result{resume ? std::move(*resume)
                            : TrainState{init_params(cfg.net, cfg.seed, cfg.init), AdamState::zeros(cfg.net), 0},
                     {}, {}, 0};
  TrainState& state = result.state;
  if (!(state.net.config() == cfg.net)) {
    throw CheckpointIncompatible("train: resume checkpoint network does not match the configured layer plan");
  }

  const ForwardOperator op = ds.make_operator();
  const std::size_t n_train = ds.train.size();
  const std::size_t steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;

  const long baseline = BufferTracker::live();
  BufferTracker::reset_peak();

  for (int epoch = state.epochs_done + 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), 0xFFFFFFFFull}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    AdamConfig adam = cfg.adam;
    adam.lr = cfg.adam.lr * std::pow(cfg.adam.lr_decay, epoch - 1);

    std::vector<TrainLogRow> epoch_rows;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::uint64_t step_seed =
          derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(s)});
      const std::size_t begin = s * cfg.batch_size;
      const std::size_t end = std::min(n_train, begin + cfg.batch_size);

      std::vector<ComplexImage> true_batch;
      std::vector<CoilImages> meas;
      Rng noise_rng(derive_seed(step_seed, {0}));
      for (std::size_t k = begin; k < end; ++k) {
        ComplexImage x = ds.train.images[order[k]];
        if (cfg.smoothing_std > 0.0) {
          ComplexImage z(x.height(), x.width());
          fill_complex_normal(z, noise_rng);
          axpy(cfg.smoothing_std, z, x);
        }
        true_batch.push_back(std::move(x));
        meas.push_back(ds.train.kspace[order[k]]);
      }

      FakeBatch fake;
      try {
        fake = make_fake_batch(state.net, op, meas, cfg, derive_seed(step_seed, {1}));
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " [epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(s) + "]");
      }
      LossAndGrad lg = contrastive_loss_and_grad(state.net, true_batch, fake.samples);
      try {
        adam_step(state.adam, state.net, lg.grad, adam);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " [epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(s) + "]");
      }

      TrainLogRow row;
      row.epoch = epoch;
      row.step = static_cast<long>(s);
      row.loss = lg.loss;
      row.mean_energy_true = lg.mean_energy_true;
      row.mean_energy_fake = lg.mean_energy_fake;
      row.grad_norm = lg.grad.norm();
      row.dropped = fake.dropped.size();
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (callbacks.on_step) callbacks.on_step(row);
      epoch_rows.push_back(row);
      result.steps.push_back(row);
    }

    state.epochs_done = epoch;
    const EpochSummary summary = summarize_epochs(epoch_rows).front();
    result.epochs.push_back(summary);
    if (callbacks.on_epoch) callbacks.on_epoch(summary);
    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && callbacks.on_checkpoint) {
      callbacks.on_checkpoint(state);
    }
  }
  result.peak_live_buffers = BufferTracker::peak() - baseline;
  return result;
}

void save_train_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  TensorArchive archive = to_archive(state.net);
  archive.header["epochs_done"] = std::to_string(state.epochs_done);
  archive.header["adam_step"] = std::to_string(state.adam.step);
  add_params(archive, state.adam.m, "adam.m.");
  add_params(archive, state.adam.v, "adam.v.");
  write_archive(path, archive);
}

TrainState load_train_checkpoint(const std::filesystem::path& path) {
  const TensorArchive archive = read_archive(path);
  EnergyNetwork net = from_archive(archive);
  AdamState adam = AdamState::zeros(net.config());
  int epochs_done = 0;
  if (archive.header.count("adam_step")) {
    try {
      adam.step = std::stol(archive.header.at("adam_step"));
      epochs_done = std::stoi(archive.header.at("epochs_done"));
    } catch (const std::logic_error&) {
      throw CheckpointIncompatible(path.string() + ": malformed optimizer header");
    }
    adam.m = read_params(archive, net.config(), "adam.m.");
    adam.v = read_params(archive, net.config(), "adam.v.");
  }
  return TrainState{std::move(net), std::move(adam), epochs_done};
}

void write_train_log_csv(const std::vector<TrainLogRow>& rows, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "epoch,step,loss,meanEnergyTrue,meanEnergyFake,gradNorm,wallMs\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.step << ',' << format_double(r.loss) << ','
       << format_double(r.mean_energy_true) << ',' << format_double(r.mean_energy_fake) << ','
       << format_double(r.grad_norm) << ',' << std::fixed << std::setprecision(3) << r.wall_ms
       << std::defaultfloat << '\n';
  }
  write_file_atomic(path, os.str());
}

std::vector<TrainLogRow> read_train_log_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open training log " + path.string());
  std::vector<TrainLogRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string f[7];
    for (auto& v : f) std::getline(fields, v, ',');
    try {
      TrainLogRow r;
      r.epoch = std::stoi(f[0]);
      r.step = std::stol(f[1]);
      r.loss = std::stod(f[2]);
      r.mean_energy_true = std::stod(f[3]);
      r.mean_energy_fake = std::stod(f[4]);
      r.grad_norm = std::stod(f[5]);
      r.wall_ms = std::stod(f[6]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw IoError(path.string() + ": malformed row '" + line + "'");
    }
  }
  return rows;
}

}  // namespace deepen
