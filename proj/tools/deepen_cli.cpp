// Batch command-line front end: gen-data, train, reconstruct, sample, evaluate.
#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deepen/bayes_metrics.hpp"
#include "deepen/errors.hpp"
#include "deepen/forward_model.hpp"
#include "deepen/map_recon.hpp"
#include "deepen/posterior.hpp"
#include "deepen/sampler.hpp"
#include "deepen/tensor_io.hpp"
#include "deepen/trainer.hpp"

namespace fs = std::filesystem;
using namespace deepen;

namespace {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kNumericalError = 4 };

std::string image_name(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04zu.%s", stem, i, ext);
  return buf;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// Binary 16-bit PGM of the magnitude, scaled so max(scale) maps to 65535.
void write_pgm16(const fs::path& path, std::size_t h, std::size_t w, const std::vector<double>& values,
                 double scale) {
  std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n65535\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + 2 * values.size());
  for (double v : values) {
    const double t = scale > 0.0 ? std::clamp(v / scale, 0.0, 1.0) : 0.0;
    const auto q = static_cast<std::uint16_t>(std::lround(t * 65535.0));
    bytes.push_back(static_cast<std::uint8_t>(q >> 8));
    bytes.push_back(static_cast<std::uint8_t>(q & 0xFF));
  }
  write_file_atomic(path, bytes);
}

void write_magnitude_pgm(const fs::path& path, const ComplexImage& img) {
  std::vector<double> mag(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) mag[i] = std::abs(img[i]);
  const double peak = mag.empty() ? 0.0 : *std::max_element(mag.begin(), mag.end());
  write_pgm16(path, img.height(), img.width(), mag, peak);
}

void require_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw IoError("output path exists and is not a directory: " + dir.string());
    if (!fs::is_empty(dir) && !force) {
      throw IoError("output directory is not empty (use --force): " + dir.string());
    }
  }
  fs::create_directories(dir);
}

void add_config(CLI::App* cmd) {
  static std::string unused;
  cmd->add_option("--config", unused, "key=value configuration file; flags take precedence");
}

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Rewrites `deepen <cmd> ... --config FILE ...` into plain flags. Each key
// must name an option of <cmd>; keys also given as flags are skipped so the
// command line wins.
std::vector<std::string> merge_config(const CLI::App& app, std::vector<std::string> args) {
  if (args.size() < 2) return args;
  const CLI::App* cmd = nullptr;
  try {
    cmd = app.get_subcommand(args[1]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  std::optional<std::string> file;
  std::vector<std::string> rest;
  std::vector<std::string> given;
  for (std::size_t i = 2; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a file name");
      file = args[++i];
      continue;
    }
    if (a.rfind("--config=", 0) == 0) {
      file = a.substr(9);
      continue;
    }
    if (a.rfind("--", 0) == 0) {
      const auto eq = a.find('=');
      given.push_back(eq == std::string::npos ? a.substr(2) : a.substr(2, eq - 2));
    }
    rest.push_back(a);
  }
  if (!file) return args;

  std::ifstream in(*file);
  if (!in) throw ConfigError("cannot read config file " + *file);
  std::vector<std::string> injected;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(*file + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    const CLI::Option* opt = key == "config" ? nullptr : cmd->get_option_no_throw("--" + key);
    if (opt == nullptr) throw ConfigError("unknown config key '" + key + "' for " + args[1]);
    if (std::find(given.begin(), given.end(), key) != given.end()) continue;
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1") {
        injected.push_back("--" + key);
      } else if (value != "false" && value != "0") {
        throw ConfigError("config key '" + key + "' expects true or false");
      }
    } else {
      injected.push_back("--" + key);
      injected.push_back(value);
    }
  }
  std::vector<std::string> out{args[0], args[1]};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  fs::path out;
  DatasetSpec spec;
  bool force = false;
};

void setup_gen_data(CLI::App& app, GenDataArgs& a, std::function<int()>& run) {
  auto* cmd = app.add_subcommand("gen-data", "Simulate phantoms, coil maps, mask and measurements");
  add_config(cmd);
  cmd->add_option("--out", a.out, "Dataset directory")->required();
  cmd->add_option("--n-train", a.spec.n_train, "Training images")->capture_default_str();
  cmd->add_option("--n-val", a.spec.n_val, "Validation images")->capture_default_str();
  cmd->add_option("--n-test", a.spec.n_test, "Test images")->capture_default_str();
  cmd->add_option("--height", a.spec.height, "Image height")->capture_default_str();
  cmd->add_option("--width", a.spec.width, "Image width")->capture_default_str();
  cmd->add_option("--n-coils", a.spec.n_coils, "Receiver coils")->capture_default_str();
  cmd->add_option("--acceleration", a.spec.acceleration, "Undersampling factor")->capture_default_str();
  cmd->add_option("--noise-std", a.spec.noise_std, "k-space noise std per component")
      ->capture_default_str();
  cmd->add_option("--seed", a.spec.seed, "Random seed")->capture_default_str();
  cmd->add_flag("--force", a.force, "Overwrite a non-empty output directory");
  cmd->callback([&] {
    run = [&] {
      a.spec.validate();
      const Dataset ds = gen_phantoms(a.spec);
      require_output_dir(a.out, a.force);
      write_dataset(ds, a.out);
      std::cout << "wrote " << ds.train.size() << "/" << ds.val.size() << "/" << ds.test.size()
                << " train/val/test images, " << ds.mask.selected_count() << " of "
                << ds.mask.width << " columns sampled, to " << a.out.string() << "\n";
      return kOk;
    };
  });
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  fs::path data;
  fs::path out;
  fs::path resume;
  TrainConfig cfg;
  bool force = false;
};

void setup_train(CLI::App& app, TrainArgs& a, std::function<int()>& run) {
  auto* cmd = app.add_subcommand("train", "Contrastive training of the energy network");
  add_config(cmd);
  TrainConfig& c = a.cfg;
  cmd->add_option("--data", a.data, "Dataset directory")->required();
  cmd->add_option("--out", a.out, "Run directory for checkpoints and logs")->required();
  cmd->add_option("--resume", a.resume, "Training checkpoint to continue from");
  cmd->add_option("--epochs", c.epochs, "Total epochs")->capture_default_str();
  cmd->add_option("--batch-size", c.batch_size, "Images per step")->capture_default_str();
  cmd->add_option("--lr", c.adam.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--beta1", c.adam.beta1, "Adam first-moment decay")->capture_default_str();
  cmd->add_option("--beta2", c.adam.beta2, "Adam second-moment decay")->capture_default_str();
  cmd->add_option("--eps-adam", c.adam.eps, "Adam denominator offset")->capture_default_str();
  cmd->add_option("--lr-decay", c.adam.lr_decay, "Per-epoch learning-rate factor")->capture_default_str();
  cmd->add_option("--epsilon", c.epsilon, "Langevin noise scale")->capture_default_str();
  cmd->add_option("--mcmc-steps", c.mcmc_steps, "Langevin steps per fake sample")->capture_default_str();
  cmd->add_option("--lambda-tilde", c.lambda_tilde, "Chain initializer regularization")
      ->capture_default_str();
  cmd->add_option("--smoothing-std", c.smoothing_std, "Noise std added to true samples")
      ->capture_default_str();
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--checkpoint-every", c.checkpoint_every, "Epochs between checkpoints (0: final only)")
      ->capture_default_str();
  cmd->add_option("--workers", c.workers, "Threads for fake-sample chains")->capture_default_str();
  cmd->add_option("--max-drop-fraction", c.max_drop_fraction, "Tolerated share of diverged chains")
      ->capture_default_str();
  cmd->add_option("--layers", c.net.layers, "Convolution layers")->capture_default_str();
  cmd->add_option("--channels", c.net.channels, "Hidden channels")->capture_default_str();
  cmd->add_option("--slope", c.net.slope, "Hidden leaky-ReLU slope")->capture_default_str();
  cmd->add_option("--head-gain", c.init.head_gain, "Initial head weight scale")->capture_default_str();
  cmd->add_option("--head-bias", c.init.head_bias, "Initial head bias")->capture_default_str();
  cmd->add_flag("--force", a.force, "Allow a non-empty run directory");
  cmd->callback([&] {
    run = [&] {
      a.cfg.validate();
      if (!fs::exists(a.data / "manifest.txt")) {
        throw IoError("dataset manifest not found: " + (a.data / "manifest.txt").string());
      }
      std::optional<TrainState> resume;
      if (!a.resume.empty()) resume = load_train_checkpoint(a.resume);
      const Dataset ds = read_dataset(a.data);
      if (resume) {
        fs::create_directories(a.out);
      } else {
        require_output_dir(a.out, a.force);
      }

      // Keep the log rows of the epochs the checkpoint already covers.
      std::vector<TrainLogRow> rows;
      const fs::path log_path = a.out / "train_log.csv";
      if (resume && fs::exists(log_path)) {
        for (auto& r : read_train_log_csv(log_path)) {
          if (r.epoch <= resume->epochs_done) rows.push_back(r);
        }
      }

      TrainCallbacks cb;
      cb.on_step = [&](const TrainLogRow& r) { rows.push_back(r); };
      cb.on_epoch = [&](const EpochSummary& e) {
        std::cout << "epoch " << e.epoch << " loss " << fmt(e.loss) << " E+ " << fmt(e.mean_energy_true)
                  << " E- " << fmt(e.mean_energy_fake) << " gap " << fmt(e.energy_gap()) << std::endl;
      };
      cb.on_checkpoint = [&](const TrainState& s) {
        save_train_checkpoint(s, a.out / image_name("checkpoint_epoch", static_cast<std::size_t>(s.epochs_done), "dpn1"));
        write_train_log_csv(rows, log_path);
      };
      TrainResult result = train(ds, a.cfg, cb, std::move(resume));

      save_train_checkpoint(result.state, a.out / "checkpoint.dpn1");
      write_train_log_csv(rows, log_path);
      std::ostringstream epochs;
      epochs << "epoch,loss,meanEnergyTrue,meanEnergyFake,energyGap\n";
      for (const auto& e : summarize_epochs(rows)) {
        epochs << e.epoch << "," << fmt(e.loss) << "," << fmt(e.mean_energy_true) << ","
               << fmt(e.mean_energy_fake) << "," << fmt(e.energy_gap()) << "\n";
      }
      write_text_atomic(a.out / "epochs.csv", epochs.str());
      std::cout << "peak live image buffers " << result.peak_live_buffers << "\n";
      return kOk;
    };
  });
}

// ---------------------------------------------------------------- reconstruct

struct ReconArgs {
  fs::path data;
  fs::path out;
  fs::path checkpoint;
  std::string split = "test";
  std::string method = "deepen";
  double lambda_tilde = 0.01;
  MapConfig map;
  bool force = false;
};

void setup_reconstruct(CLI::App& app, ReconArgs& a, std::function<int()>& run) {
  auto* cmd = app.add_subcommand("reconstruct", "SENSE baseline or MAP reconstruction of a split");
  add_config(cmd);
  cmd->add_option("--data", a.data, "Dataset directory")->required();
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--method", a.method, "sense or deepen")
      ->check(CLI::IsMember({"sense", "deepen"}))
      ->capture_default_str();
  cmd->add_option("--checkpoint", a.checkpoint, "Network checkpoint (deepen)");
  cmd->add_option("--split", a.split, "train, val or test")->capture_default_str();
  cmd->add_option("--lambda-tilde", a.lambda_tilde, "SENSE regularization (baseline and MAP start)")
      ->capture_default_str();
  cmd->add_option("--beta", a.map.beta, "Backtracking factor")->capture_default_str();
  cmd->add_option("--max-iters", a.map.max_iters, "MAP iteration cap")->capture_default_str();
  cmd->add_option("--rel-tol", a.map.rel_tol, "Relative cost-change stopping tolerance")
      ->capture_default_str();
  cmd->add_option("--max-backtracks", a.map.max_backtracks, "Step halvings per iteration")
      ->capture_default_str();
  cmd->add_flag("--force", a.force, "Overwrite a non-empty output directory");
  cmd->callback([&] {
    run = [&] {
      const SplitKind kind = parse_split(a.split);
      a.map.validate();
      if (!(a.lambda_tilde > 0.0)) throw InvalidArgument("--lambda-tilde must be positive");
      const bool deepen = a.method == "deepen";
      if (deepen && a.checkpoint.empty()) throw InvalidArgument("--method deepen needs --checkpoint");

      const Dataset ds = read_dataset(a.data);
      std::shared_ptr<const EnergyModel> prior;
      if (deepen) {
        auto net = std::make_shared<EnergyNetwork>(load_params(a.checkpoint));
        prior = net;
      }
      require_output_dir(a.out, a.force);
      const auto op = std::make_shared<const ForwardOperator>(ds.make_operator());
      const DatasetSplit& split = ds.split(kind);

      std::ostringstream csv;
      csv << "id,method,iterations,converged,finalCost,monotone\n";
      for (std::size_t i = 0; i < split.size(); ++i) {
        ComplexImage x = sense_init(*op, split.kspace[i], a.lambda_tilde);
        int iterations = 0;
        bool converged = true;
        double final_cost = 0.0;
        if (deepen) {
          PosteriorModel model(op, prior, split.kspace[i]);
          ReconReport rep = map_estimate(model, x, a.map);
          for (std::size_t k = 1; k < rep.cost_trajectory.size(); ++k) {
            if (rep.cost_trajectory[k] > rep.cost_trajectory[k - 1]) {
              throw NumericalError("reconstruct: cost increased at iteration " + std::to_string(k) +
                                   " of image " + std::to_string(i));
            }
          }
          write_recon_trajectory_csv(rep, a.out / image_name("trajectory", i, "csv"));
          iterations = rep.iterations;
          converged = rep.converged;
          final_cost = rep.cost_trajectory.back();
          x = std::move(rep.estimate);
        } else {
          PosteriorModel model(op, std::make_shared<ZeroEnergy>(), split.kspace[i]);
          final_cost = model.cost(x);
        }
        write_tensor(a.out / image_name("recon", i, "dpn1"), to_tensor(x));
        write_magnitude_pgm(a.out / image_name("recon", i, "pgm"), x);
        csv << i << "," << a.method << "," << iterations << "," << (converged ? 1 : 0) << ","
            << fmt(final_cost) << ",1\n";
      }
      write_text_atomic(a.out / "reconstruct.csv", csv.str());
      std::cout << "reconstructed " << split.size() << " " << a.split << " images with " << a.method
                << "\n";
      return kOk;
    };
  });
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
  fs::path data;
  fs::path out;
  fs::path checkpoint;
  std::string split = "test";
  std::string variant = "scaled";
  std::size_t n_samples = 100;
  std::size_t limit = 0;
  SamplerConfig sampler{0.001, 500, LangevinVariant::Scaled, 0, 1e12};
  UncertaintyOptions opts;
  bool force = false;
};

void setup_sample(CLI::App& app, SampleArgs& a, std::function<int()>& run) {
  auto* cmd = app.add_subcommand("sample", "Posterior sampling: MMSE estimate and variance maps");
  add_config(cmd);
  cmd->add_option("--data", a.data, "Dataset directory")->required();
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--checkpoint", a.checkpoint, "Network checkpoint")->required();
  cmd->add_option("--split", a.split, "train, val or test")->capture_default_str();
  cmd->add_option("--n-samples", a.n_samples, "Chains per image")->capture_default_str();
  cmd->add_option("--n-steps", a.sampler.n_steps, "Langevin steps per chain")->capture_default_str();
  cmd->add_option("--epsilon", a.sampler.epsilon, "Langevin noise scale")->capture_default_str();
  cmd->add_option("--variant", a.variant, "standard or scaled")
      ->check(CLI::IsMember({"standard", "scaled"}))
      ->capture_default_str();
  cmd->add_option("--seed", a.sampler.seed, "Random seed")->capture_default_str();
  cmd->add_option("--divergence-cost", a.sampler.divergence_cost, "Cost treated as divergence")
      ->capture_default_str();
  cmd->add_option("--lambda-tilde", a.opts.lambda_tilde, "Regularization of the chain centre")
      ->capture_default_str();
  cmd->add_option("--limit", a.limit, "Only the first N images (0: all)")->capture_default_str();
  cmd->add_flag("--force", a.force, "Overwrite a non-empty output directory");
  cmd->callback([&] {
    run = [&] {
      const SplitKind kind = parse_split(a.split);
      a.sampler.variant = parse_variant(a.variant);
      a.sampler.validate();
      if (a.n_samples < 2) throw InvalidArgument("--n-samples must be at least 2");
      if (!(a.opts.lambda_tilde > 0.0)) throw InvalidArgument("--lambda-tilde must be positive");
      a.opts.keep_samples = 1;

      const Dataset ds = read_dataset(a.data);
      auto net = std::make_shared<const EnergyNetwork>(load_params(a.checkpoint));
      require_output_dir(a.out, a.force);
      const auto op = std::make_shared<const ForwardOperator>(ds.make_operator());
      const DatasetSplit& split = ds.split(kind);
      const std::size_t n = a.limit == 0 ? split.size() : std::min(a.limit, split.size());

      std::ostringstream csv;
      csv << "id,nSamples,dropped,meanVariance\n";
      for (std::size_t i = 0; i < n; ++i) {
        PosteriorModel model(op, net, split.kspace[i]);
        SamplerConfig cfg = a.sampler;
        cfg.seed = derive_seed(a.sampler.seed, {i});
        const UncertaintyReport rep = estimate_mmse_uncertainty(model, cfg, a.n_samples, a.opts);
        write_tensor(a.out / image_name("mmse", i, "dpn1"), to_tensor(rep.mmse));
        write_tensor(a.out / image_name("variance", i, "dpn1"),
                     to_tensor(rep.variance, ds.spec.height, ds.spec.width));
        write_tensor(a.out / image_name("single", i, "dpn1"), to_tensor(rep.kept.front()));
        write_magnitude_pgm(a.out / image_name("mmse", i, "pgm"), rep.mmse);
        const double vmax = *std::max_element(rep.variance.begin(), rep.variance.end());
        write_pgm16(a.out / image_name("variance", i, "pgm"), ds.spec.height, ds.spec.width,
                    rep.variance, vmax);
        csv << i << "," << rep.n_samples << "," << rep.dropped << "," << fmt(rep.mean_variance())
            << "\n";
      }
      write_text_atomic(a.out / "sample.csv", csv.str());
      std::cout << "sampled " << n << " " << a.split << " images, " << a.n_samples << " chains each\n";
      return kOk;
    };
  });
}

// ---------------------------------------------------------------- evaluate

struct EvalArgs {
  fs::path data;
  fs::path out;
  std::string split = "test";
  std::vector<std::string> recon;  // method=dir
  fs::path samples;
};

struct MethodRows {
  std::string method;
  std::vector<double> psnr;
  std::vector<double> ssim;
};

void setup_evaluate(CLI::App& app, EvalArgs& a, std::function<int()>& run) {
  auto* cmd = app.add_subcommand("evaluate", "PSNR/SSIM tables for reconstructions of a split");
  add_config(cmd);
  cmd->add_option("--data", a.data, "Dataset directory")->required();
  cmd->add_option("--out", a.out, "Directory for metrics.csv and summary.csv")->required();
  cmd->add_option("--split", a.split, "train, val or test")->capture_default_str();
  cmd->add_option("--recon", a.recon, "method=directory of a reconstruct run (repeatable)")
      ->required()
      ->delimiter(',');
  cmd->add_option("--samples", a.samples, "Directory of a sample run (adds mmse rows)");
  cmd->callback([&] {
    run = [&] {
      const SplitKind kind = parse_split(a.split);
      std::vector<std::pair<std::string, fs::path>> sources;
      for (const auto& spec : a.recon) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
          throw InvalidArgument("--recon expects method=directory, got '" + spec + "'");
        }
        sources.emplace_back(spec.substr(0, eq), fs::path(spec.substr(eq + 1)));
      }

      const Dataset ds = read_dataset(a.data);
      const DatasetSplit& split = ds.split(kind);
      std::ostringstream metrics;
      metrics << "method,id,psnr,ssim,meanVariance\n";
      std::vector<MethodRows> table;

      for (const auto& [method, dir] : sources) {
        MethodRows rows{method, {}, {}};
        for (std::size_t i = 0; i < split.size(); ++i) {
          const fs::path file = dir / image_name("recon", i, "dpn1");
          if (!fs::exists(file)) throw IoError("missing reconstruction: " + file.string());
          const ComplexImage x = image_from_tensor(read_tensor(file));
          const double p = psnr(split.images[i], x);
          const double s = ssim(split.images[i], x);
          rows.psnr.push_back(p);
          rows.ssim.push_back(s);
          metrics << method << "," << i << "," << fmt(p) << "," << fmt(s) << ",\n";
        }
        table.push_back(std::move(rows));
      }
      if (!a.samples.empty()) {
        MethodRows rows{"mmse", {}, {}};
        for (std::size_t i = 0; i < split.size(); ++i) {
          const fs::path file = a.samples / image_name("mmse", i, "dpn1");
          if (!fs::exists(file)) {
            if (i == 0) throw IoError("missing sample output: " + file.string());
            break;  // sample --limit covers a prefix of the split
          }
          const ComplexImage x = image_from_tensor(read_tensor(file));
          const auto var = read_tensor(a.samples / image_name("variance", i, "dpn1")).values;
          double mean_var = 0.0;
          for (double v : var) mean_var += v;
          mean_var /= static_cast<double>(var.size());
          const double p = psnr(split.images[i], x);
          const double s = ssim(split.images[i], x);
          rows.psnr.push_back(p);
          rows.ssim.push_back(s);
          metrics << "mmse," << i << "," << fmt(p) << "," << fmt(s) << "," << fmt(mean_var) << "\n";
        }
        table.push_back(std::move(rows));
      }

      std::ostringstream summary;
      summary << "method,n,meanPsnr,meanSsim\n";
      for (const auto& rows : table) {
        double p = 0.0;
        double s = 0.0;
        for (std::size_t i = 0; i < rows.psnr.size(); ++i) {
          p += rows.psnr[i];
          s += rows.ssim[i];
        }
        const double n = static_cast<double>(rows.psnr.size());
        summary << rows.method << "," << rows.psnr.size() << "," << fmt(p / n) << "," << fmt(s / n)
                << "\n";
        std::printf("%-8s PSNR %7.3f dB  SSIM %.4f  (n=%zu)\n", rows.method.c_str(), p / n, s / n,
                    rows.psnr.size());
      }
      fs::create_directories(a.out);
      write_text_atomic(a.out / "metrics.csv", metrics.str());
      write_text_atomic(a.out / "summary.csv", summary.str());
      return kOk;
    };
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned energy-prior MRI reconstruction and posterior sampling", "deepen"};
  app.require_subcommand(1);

  std::function<int()> run;
  GenDataArgs gen;
  TrainArgs tr;
  ReconArgs rec;
  SampleArgs smp;
  EvalArgs ev;
  setup_gen_data(app, gen, run);
  setup_train(app, tr, run);
  setup_reconstruct(app, rec, run);
  setup_sample(app, smp, run);
  setup_evaluate(app, ev, run);

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = merge_config(app, std::move(args));
    args.erase(args.begin());
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    app.parse(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    return run();
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const CheckpointIncompatible& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
}
