#include "deepen/forward_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "deepen/errors.hpp"
#include "deepen/fft.hpp"
#include "deepen/rng.hpp"
#include "deepen/tensor_io.hpp"

namespace deepen {

namespace fs = std::filesystem;

SamplingMask SamplingMask::full(std::size_t height, std::size_t width) {
  return SamplingMask{height, width, std::vector<std::uint8_t>(width, 1)};
}

std::size_t SamplingMask::selected_count() const {
  return static_cast<std::size_t>(std::count(columns.begin(), columns.end(), std::uint8_t{1}));
}

ForwardOperator::ForwardOperator(SamplingMask mask, CoilImages coil_maps)
    : mask_(std::move(mask)), coils_(std::move(coil_maps)) {
  if (mask_.height < 2 || mask_.width < 2) throw InvalidArgument("ForwardOperator: image must be at least 2x2");
  if (mask_.columns.size() != mask_.width) throw InvalidArgument("ForwardOperator: mask width mismatch");
  if (coils_.empty()) throw InvalidArgument("ForwardOperator: at least one coil map required");
  for (auto& v : mask_.columns) v = v ? 1 : 0;
  std::vector<double> sos(mask_.height * mask_.width, 0.0);
  for (const auto& c : coils_) {
    if (c.height() != mask_.height || c.width() != mask_.width) {
      throw InvalidArgument("ForwardOperator: coil map shape does not match mask");
    }
    if (!c.all_finite()) throw InvalidArgument("ForwardOperator: non-finite coil map");
    for (std::size_t i = 0; i < c.size(); ++i) sos[i] += std::norm(c[i]);
  }
  if (*std::min_element(sos.begin(), sos.end()) <= 0.0) {
    throw InvalidArgument("ForwardOperator: coil maps vanish at some pixel");
  }
}

void ForwardOperator::check_image(const ComplexImage& x, const char* op) const {
  if (x.height() != height() || x.width() != width()) {
    throw InvalidArgument(std::string(op) + ": image is " + std::to_string(x.height()) + "x" +
                          std::to_string(x.width()) + ", operator expects " +
                          std::to_string(height()) + "x" + std::to_string(width()));
  }
}

void ForwardOperator::check_kspace(const CoilImages& y, const char* op) const {
  if (y.size() != coil_count()) {
    throw InvalidArgument(std::string(op) + ": got " + std::to_string(y.size()) +
                          " coil planes, operator has " + std::to_string(coil_count()));
  }
  for (const auto& plane : y) check_image(plane, op);
}

void ForwardOperator::apply_mask(ComplexImage& k) const {
  for (std::size_t r = 0; r < k.height(); ++r) {
    for (std::size_t c = 0; c < k.width(); ++c) {
      if (!mask_.columns[c]) k(r, c) = cplx{0.0, 0.0};
    }
  }
}

CoilImages ForwardOperator::apply(const ComplexImage& x) const {
  check_image(x, "ForwardOperator::apply");
  CoilImages out;
  out.reserve(coils_.size());
  for (const auto& coil : coils_) {
    ComplexImage k = fft2_centered(hadamard(coil, x));
    apply_mask(k);
    out.push_back(std::move(k));
  }
  return out;
}

ComplexImage ForwardOperator::adjoint(const CoilImages& y) const {
  check_kspace(y, "ForwardOperator::adjoint");
  ComplexImage out(height(), width());
  ComplexImage masked;
  for (std::size_t c = 0; c < coils_.size(); ++c) {
    masked = y[c];
    apply_mask(masked);
    const ComplexImage img = ifft2_centered(masked);
    const ComplexImage& coil = coils_[c];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::conj(coil[i]) * img[i];
  }
  return out;
}

ComplexImage ForwardOperator::normal(const ComplexImage& x) const { return adjoint(apply(x)); }

ComplexImage sense_init(const ForwardOperator& op, const CoilImages& b, double lambda_tilde,
                        const CgConfig& cfg) {
  if (!(lambda_tilde > 0.0)) throw InvalidArgument("sense_init: lambda_tilde must be > 0");
  const ComplexImage rhs = op.adjoint(b);
  auto normal = [&](const ComplexImage& v) {
    ComplexImage out = op.normal(v);
    axpy(lambda_tilde, v, out);
    return out;
  };
  return conjugate_gradient(normal, rhs, cfg).solution;
}

SamplingMask make_vardens_mask(std::size_t height, std::size_t width, double acceleration,
                               std::uint64_t seed) {
  if (!(acceleration >= 1.0)) throw InvalidArgument("make_vardens_mask: acceleration must be >= 1");
  if (acceleration > static_cast<double>(width)) {
    throw InvalidArgument("make_vardens_mask: acceleration exceeds the number of columns");
  }
  if (width == 0 || height == 0) throw InvalidArgument("make_vardens_mask: empty shape");

  SamplingMask mask{height, width, std::vector<std::uint8_t>(width, 0)};
  const auto target = static_cast<std::size_t>(
      std::max(1.0, std::round(static_cast<double>(width) / acceleration)));
  if (target >= width) return SamplingMask::full(height, width);

  const std::size_t center = width / 2;
  std::size_t band = static_cast<std::size_t>(std::round(0.08 * static_cast<double>(width)));
  band = std::clamp<std::size_t>(band, 1, target);
  const std::size_t band_start = center - std::min(center, band / 2);
  for (std::size_t c = band_start; c < band_start + band && c < width; ++c) mask.columns[c] = 1;

  // Weighted sampling without replacement (exponential keys); density falls
  // off quadratically with distance from the center column.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double half = static_cast<double>(width) / 2.0 + 1.0;
  std::vector<std::pair<double, std::size_t>> keys;
  for (std::size_t c = 0; c < width; ++c) {
    const double u = unif(rng);
    if (mask.columns[c]) continue;
    const double dist = std::abs(static_cast<double>(c) - static_cast<double>(center)) / half;
    const double weight = std::pow(1.0 - dist, 2.0) + 1e-3;
    keys.emplace_back(std::log(std::max(u, 1e-300)) / weight, c);
  }
  std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  std::size_t remaining = target - mask.selected_count();
  for (std::size_t i = 0; i < remaining && i < keys.size(); ++i) mask.columns[keys[i].second] = 1;
  return mask;
}

CoilImages make_coil_maps(std::size_t height, std::size_t width, std::size_t n_coils) {
  if (n_coils < 1) throw InvalidArgument("make_coil_maps: need at least one coil");
  if (height == 0 || width == 0) throw InvalidArgument("make_coil_maps: empty shape");
  CoilImages maps;
  if (n_coils == 1) {
    ComplexImage m(height, width);
    for (auto& v : m.data()) v = cplx{1.0, 0.0};
    maps.push_back(std::move(m));
    return maps;
  }

  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  const double extent = std::max(h, w);
  const double sigma = 0.55 * extent;
  const double radius = 0.6 * extent;
  for (std::size_t c = 0; c < n_coils; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(n_coils);
    const double cy = h / 2.0 + radius * std::sin(angle);
    const double cx = w / 2.0 + radius * std::cos(angle);
    ComplexImage m(height, width);
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t col = 0; col < width; ++col) {
        const double dy = static_cast<double>(r) - cy;
        const double dx = static_cast<double>(col) - cx;
        const double mag = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        const double phase = angle + 0.5 * std::numbers::pi *
                                         (std::cos(angle) * dy - std::sin(angle) * dx) / extent;
        m(r, col) = std::polar(mag, phase);
      }
    }
    maps.push_back(std::move(m));
  }
  for (std::size_t i = 0; i < height * width; ++i) {
    double sos = 0.0;
    for (const auto& m : maps) sos += std::norm(m[i]);
    const double scale = 1.0 / std::sqrt(sos);
    for (auto& m : maps) m[i] *= scale;
  }
  return maps;
}

void DatasetSpec::validate() const {
  if (height < 2 || width < 2) throw InvalidArgument("DatasetSpec: image shape must be at least 2x2");
  if (n_coils < 1) throw InvalidArgument("DatasetSpec: n_coils must be >= 1");
  if (!(acceleration >= 1.0)) throw InvalidArgument("DatasetSpec: acceleration must be >= 1");
  if (acceleration > static_cast<double>(width)) {
    throw InvalidArgument("DatasetSpec: acceleration exceeds the number of columns");
  }
  if (!(noise_std >= 0.0)) throw InvalidArgument("DatasetSpec: noise_std must be >= 0");
}

const char* split_name(SplitKind kind) {
  switch (kind) {
    case SplitKind::Train: return "train";
    case SplitKind::Val: return "val";
    case SplitKind::Test: return "test";
  }
  return "train";
}

SplitKind parse_split(const std::string& name) {
  if (name == "train") return SplitKind::Train;
  if (name == "val") return SplitKind::Val;
  if (name == "test") return SplitKind::Test;
  throw InvalidArgument("unknown split '" + name + "' (expected train, val or test)");
}

const DatasetSplit& Dataset::split(SplitKind kind) const {
  switch (kind) {
    case SplitKind::Train: return train;
    case SplitKind::Val: return val;
    case SplitKind::Test: return test;
  }
  return train;
}

ComplexImage make_phantom(std::size_t height, std::size_t width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);

  struct Ellipse {
    double cy, cx, ay, ax, cos_t, sin_t, value;
    bool contains(double y, double x) const {
      const double dy = y - cy;
      const double dx = x - cx;
      const double u = (dx * cos_t + dy * sin_t) / ax;
      const double v = (-dx * sin_t + dy * cos_t) / ay;
      return u * u + v * v <= 1.0;
    }
  };
  auto make = [&](double cy, double cx, double ay, double ax, double theta, double value) {
    return Ellipse{cy, cx, ay, ax, std::cos(theta), std::sin(theta), value};
  };

  const Ellipse outer = make(h / 2.0 + uniform(-0.04, 0.04) * h, w / 2.0 + uniform(-0.04, 0.04) * w,
                             uniform(0.36, 0.44) * h, uniform(0.30, 0.40) * w,
                             uniform(-0.3, 0.3), uniform(0.5, 0.8));
  std::vector<Ellipse> inner;
  const int n_inner = static_cast<int>(std::floor(uniform(3.0, 7.0)));
  for (int k = 0; k < n_inner; ++k) {
    const double r = uniform(0.0, 0.55);
    const double phi = uniform(0.0, 2.0 * std::numbers::pi);
    inner.push_back(make(outer.cy + r * outer.ay * std::sin(phi), outer.cx + r * outer.ax * std::cos(phi),
                         uniform(0.06, 0.22) * h, uniform(0.06, 0.22) * w,
                         uniform(0.0, std::numbers::pi), uniform(-0.35, 0.35)));
  }
  const double gy = uniform(-1.0, 1.0);
  const double gx = uniform(-1.0, 1.0);
  const double phase0 = uniform(-std::numbers::pi, std::numbers::pi);
  const double ky = uniform(-0.3, 0.3);
  const double kx = uniform(-0.3, 0.3);

  ComplexImage img(height, width);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double y = static_cast<double>(r);
      const double x = static_cast<double>(c);
      if (!outer.contains(y, x)) continue;
      double mag = outer.value;
      for (const auto& e : inner) {
        if (e.contains(y, x)) mag += e.value;
      }
      mag *= 1.0 + 0.15 * (gy * (y - outer.cy) / h + gx * (x - outer.cx) / w);
      mag = std::clamp(mag, 0.0, 1.0);
      const double phase = phase0 + 2.0 * std::numbers::pi * (ky * y / h + kx * x / w);
      img(r, c) = std::polar(mag, phase);
    }
  }
  return img;
}

namespace {

DatasetSplit make_split(const DatasetSpec& spec, const ForwardOperator& op, std::size_t count,
                        std::uint64_t split_id) {
  DatasetSplit split;
  for (std::size_t i = 0; i < count; ++i) {
    ComplexImage x = make_phantom(spec.height, spec.width, derive_seed(spec.seed, {split_id, 2 * i}));
    CoilImages b = op.apply(x);
    if (spec.noise_std > 0.0) {
      std::mt19937_64 rng(derive_seed(spec.seed, {split_id, 2 * i + 1}));
      std::normal_distribution<double> normal(0.0, spec.noise_std);
      for (auto& plane : b) {
        for (std::size_t r = 0; r < plane.height(); ++r) {
          for (std::size_t c = 0; c < plane.width(); ++c) {
            if (!op.mask().selected(r, c)) continue;
            const double re = normal(rng);
            const double im = normal(rng);
            plane(r, c) += cplx{re, im};
          }
        }
      }
    }
    split.images.push_back(std::move(x));
    split.kspace.push_back(std::move(b));
  }
  return split;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string manifest_text(const DatasetSpec& spec) {
  std::ostringstream os;
  os << "format=deepen-dataset-1\n"
     << "shape=" << spec.height << "x" << spec.width << "\n"
     << "coils=" << spec.n_coils << "\n"
     << "acceleration=" << format_double(spec.acceleration) << "\n"
     << "noise_std=" << format_double(spec.noise_std) << "\n"
     << "seed=" << spec.seed << "\n"
     << "n_train=" << spec.n_train << "\n"
     << "n_val=" << spec.n_val << "\n"
     << "n_test=" << spec.n_test << "\n";
  return os.str();
}

std::string indexed_name(const char* prefix, std::size_t i) {
  std::ostringstream os;
  os << prefix << std::setw(4) << std::setfill('0') << i << ".dpn1";
  return os.str();
}

}  // namespace

Dataset gen_phantoms(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  ds.mask = make_vardens_mask(spec.height, spec.width, spec.acceleration, derive_seed(spec.seed, {100}));
  ds.coil_maps = make_coil_maps(spec.height, spec.width, spec.n_coils);
  const ForwardOperator op = ds.make_operator();
  ds.train = make_split(spec, op, spec.n_train, 0);
  ds.val = make_split(spec, op, spec.n_val, 1);
  ds.test = make_split(spec, op, spec.n_test, 2);
  return ds;
}

void write_dataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<double> mask_plane(ds.mask.height * ds.mask.width);
  for (std::size_t r = 0; r < ds.mask.height; ++r) {
    for (std::size_t c = 0; c < ds.mask.width; ++c) mask_plane[r * ds.mask.width + c] = ds.mask.columns[c];
  }
  Tensor mask_t = to_tensor(mask_plane, ds.mask.height, ds.mask.width);
  mask_t.dtype = DType::F32;
  write_tensor(dir / "mask.dpn1", mask_t);
  write_tensor(dir / "coils.dpn1", to_tensor(ds.coil_maps));

  for (SplitKind kind : {SplitKind::Train, SplitKind::Val, SplitKind::Test}) {
    const fs::path sub = dir / split_name(kind);
    fs::create_directories(sub, ec);
    if (ec) throw IoError("cannot create " + sub.string() + ": " + ec.message());
    const DatasetSplit& split = ds.split(kind);
    for (std::size_t i = 0; i < split.size(); ++i) {
      write_tensor(sub / indexed_name("img_", i), to_tensor(split.images[i]));
      write_tensor(sub / indexed_name("ksp_", i), to_tensor(split.kspace[i]));
    }
  }
  // Manifest last: its presence marks a complete dataset.
  write_file_atomic(dir / "manifest.txt", manifest_text(ds.spec));
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.txt";
  std::ifstream in(manifest);
  if (!in) throw IoError("missing dataset manifest: " + manifest.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError(manifest.string() + ": malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError(manifest.string() + ": missing key '" + key + "'");
    return it->second;
  };

  Dataset ds;
  try {
    const std::string shape = get("shape");
    const auto x = shape.find('x');
    if (x == std::string::npos) throw IoError(manifest.string() + ": bad shape '" + shape + "'");
    ds.spec.height = std::stoul(shape.substr(0, x));
    ds.spec.width = std::stoul(shape.substr(x + 1));
    ds.spec.n_coils = std::stoul(get("coils"));
    ds.spec.acceleration = std::stod(get("acceleration"));
    ds.spec.noise_std = std::stod(get("noise_std"));
    ds.spec.seed = std::stoull(get("seed"));
    ds.spec.n_train = std::stoul(get("n_train"));
    ds.spec.n_val = std::stoul(get("n_val"));
    ds.spec.n_test = std::stoul(get("n_test"));
  } catch (const std::logic_error&) {
    throw IoError(manifest.string() + ": malformed value");
  }

  const Tensor mask_t = read_tensor(dir / "mask.dpn1");
  if (mask_t.dims.size() != 2 || mask_t.dims[0] != ds.spec.height || mask_t.dims[1] != ds.spec.width) {
    throw IoError((dir / "mask.dpn1").string() + ": shape does not match manifest");
  }
  ds.mask = SamplingMask{ds.spec.height, ds.spec.width, std::vector<std::uint8_t>(ds.spec.width, 0)};
  for (std::size_t c = 0; c < ds.spec.width; ++c) {
    const bool first = mask_t.values[c] != 0.0;
    for (std::size_t r = 1; r < ds.spec.height; ++r) {
      if ((mask_t.values[r * ds.spec.width + c] != 0.0) != first) {
        throw IoError((dir / "mask.dpn1").string() + ": mask does not select whole columns");
      }
    }
    ds.mask.columns[c] = first ? 1 : 0;
  }
  ds.coil_maps = planes_from_tensor(read_tensor(dir / "coils.dpn1"));
  if (ds.coil_maps.size() != ds.spec.n_coils) {
    throw IoError((dir / "coils.dpn1").string() + ": coil count does not match manifest");
  }

  auto load_split = [&](SplitKind kind, std::size_t count) {
    DatasetSplit split;
    const fs::path sub = dir / split_name(kind);
    for (std::size_t i = 0; i < count; ++i) {
      split.images.push_back(image_from_tensor(read_tensor(sub / indexed_name("img_", i))));
      split.kspace.push_back(planes_from_tensor(read_tensor(sub / indexed_name("ksp_", i))));
    }
    return split;
  };
  ds.train = load_split(SplitKind::Train, ds.spec.n_train);
  ds.val = load_split(SplitKind::Val, ds.spec.n_val);
  ds.test = load_split(SplitKind::Test, ds.spec.n_test);
  return ds;
}

}  // namespace deepen
