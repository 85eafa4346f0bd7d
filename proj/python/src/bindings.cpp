// Python bindings. Images cross the boundary as complex128 numpy arrays of
// shape (H, W); multi-coil data as (C, H, W).
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "deepen/bayes_metrics.hpp"
#include "deepen/map_recon.hpp"
#include "deepen/posterior.hpp"
#include "deepen/sampler.hpp"
#include "deepen/tensor_io.hpp"
#include "deepen/trainer.hpp"

namespace py = pybind11;
using namespace deepen;

namespace {

using CArray = py::array_t<cplx, py::array::c_style | py::array::forcecast>;

ComplexImage to_image(const CArray& a) {
  if (a.ndim() != 2) throw InvalidArgument("expected a 2-D complex array");
  const auto h = static_cast<std::size_t>(a.shape(0));
  const auto w = static_cast<std::size_t>(a.shape(1));
  return ComplexImage(h, w, std::vector<cplx>(a.data(), a.data() + h * w));
}

CArray from_image(const ComplexImage& x) {
  CArray out({x.height(), x.width()});
  std::memcpy(out.mutable_data(), x.data().data(), x.size() * sizeof(cplx));
  return out;
}

CoilImages to_planes(const CArray& a) {
  if (a.ndim() != 3) throw InvalidArgument("expected a 3-D complex array (coils, H, W)");
  const auto h = static_cast<std::size_t>(a.shape(1));
  const auto w = static_cast<std::size_t>(a.shape(2));
  CoilImages planes;
  for (py::ssize_t c = 0; c < a.shape(0); ++c) {
    const cplx* p = a.data() + c * h * w;
    planes.emplace_back(h, w, std::vector<cplx>(p, p + h * w));
  }
  return planes;
}

CArray from_planes(const CoilImages& planes) {
  const std::size_t h = planes.empty() ? 0 : planes[0].height();
  const std::size_t w = planes.empty() ? 0 : planes[0].width();
  CArray out({planes.size(), h, w});
  for (std::size_t c = 0; c < planes.size(); ++c) {
    std::memcpy(out.mutable_data() + c * h * w, planes[c].data().data(), h * w * sizeof(cplx));
  }
  return out;
}

std::vector<CArray> from_list(const std::vector<ComplexImage>& xs) {
  std::vector<CArray> out;
  for (const auto& x : xs) out.push_back(from_image(x));
  return out;
}

PosteriorModel make_model(const ForwardOperator& op, std::shared_ptr<const EnergyModel> energy, const CArray& b) {
  return PosteriorModel(std::make_shared<const ForwardOperator>(op), std::move(energy), to_planes(b));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Energy-based MRI reconstruction core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<CheckpointIncompatible>(m, "CheckpointIncompatible", base.ptr());
  auto numerical = py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", numerical.ptr());
  py::register_exception<StagnationError>(m, "StagnationError", numerical.ptr());

  py::class_<SamplingMask>(m, "SamplingMask")
      .def_static("full", &SamplingMask::full, py::arg("height"), py::arg("width"))
      .def_readonly("height", &SamplingMask::height)
      .def_readonly("width", &SamplingMask::width)
      .def_property_readonly("columns", [](const SamplingMask& s) { return s.columns; })
      .def("selected_count", &SamplingMask::selected_count);

  m.def("make_vardens_mask", &make_vardens_mask, py::arg("height"), py::arg("width"), py::arg("acceleration"),
        py::arg("seed"));
  m.def("make_coil_maps", [](std::size_t h, std::size_t w, std::size_t n) { return from_planes(make_coil_maps(h, w, n)); },
        py::arg("height"), py::arg("width"), py::arg("n_coils"));
  m.def("make_phantom", [](std::size_t h, std::size_t w, std::uint64_t seed) { return from_image(make_phantom(h, w, seed)); },
        py::arg("height"), py::arg("width"), py::arg("seed"));

  py::class_<ForwardOperator>(m, "ForwardOperator")
      .def(py::init([](const SamplingMask& mask, const CArray& coils) { return ForwardOperator(mask, to_planes(coils)); }),
           py::arg("mask"), py::arg("coil_maps"))
      .def_property_readonly("height", &ForwardOperator::height)
      .def_property_readonly("width", &ForwardOperator::width)
      .def_property_readonly("coil_count", &ForwardOperator::coil_count)
      .def_property_readonly("mask", &ForwardOperator::mask)
      .def("apply", [](const ForwardOperator& op, const CArray& x) { return from_planes(op.apply(to_image(x))); })
      .def("adjoint", [](const ForwardOperator& op, const CArray& y) { return from_image(op.adjoint(to_planes(y))); })
      .def("normal", [](const ForwardOperator& op, const CArray& x) { return from_image(op.normal(to_image(x))); });

  m.def("sense_init",
        [](const ForwardOperator& op, const CArray& b, double lambda_tilde) {
          return from_image(sense_init(op, to_planes(b), lambda_tilde));
        },
        py::arg("op"), py::arg("kspace"), py::arg("lambda_tilde") = 0.01);

  py::class_<EnergyModel, std::shared_ptr<EnergyModel>>(m, "EnergyModel")
      .def("energy", [](const EnergyModel& e, const CArray& x) { return e.energy(to_image(x)); })
      .def("grad_x", [](const EnergyModel& e, const CArray& x) { return from_image(e.grad_x(to_image(x))); });
  py::class_<ZeroEnergy, EnergyModel, std::shared_ptr<ZeroEnergy>>(m, "ZeroEnergy").def(py::init<>());
  py::class_<QuadraticEnergy, EnergyModel, std::shared_ptr<QuadraticEnergy>>(m, "QuadraticEnergy")
      .def(py::init<double>(), py::arg("weight") = 1.0);

  py::class_<NetConfig>(m, "NetConfig")
      .def(py::init<>())
      .def_readwrite("layers", &NetConfig::layers)
      .def_readwrite("channels", &NetConfig::channels)
      .def_readwrite("slope", &NetConfig::slope);
  py::class_<EnergyNetwork, EnergyModel, std::shared_ptr<EnergyNetwork>>(m, "EnergyNetwork")
      .def_property_readonly("config", &EnergyNetwork::config)
      .def("parameter_count", [](const EnergyNetwork& n) { return n.params().size(); })
      .def("save", [](const EnergyNetwork& n, const std::filesystem::path& p) { save_params(n, p); });
  m.def("init_params",
        [](const NetConfig& cfg, std::uint64_t seed) { return std::make_shared<EnergyNetwork>(init_params(cfg, seed)); },
        py::arg("config"), py::arg("seed") = 0);
  m.def("load_params", [](const std::filesystem::path& p) { return std::make_shared<EnergyNetwork>(load_params(p)); },
        py::arg("path"));

  py::class_<MapConfig>(m, "MapConfig")
      .def(py::init<>())
      .def_readwrite("beta", &MapConfig::beta)
      .def_readwrite("max_iters", &MapConfig::max_iters)
      .def_readwrite("rel_tol", &MapConfig::rel_tol)
      .def_readwrite("max_backtracks", &MapConfig::max_backtracks);

  m.def("map_estimate",
        [](const ForwardOperator& op, std::shared_ptr<const EnergyModel> energy, const CArray& b, const CArray& x0,
           const MapConfig& cfg) {
          const ReconReport r = map_estimate(make_model(op, std::move(energy), b), to_image(x0), cfg);
          py::dict out;
          out["estimate"] = from_image(r.estimate);
          out["costs"] = r.cost_trajectory;
          out["step_sizes"] = r.step_sizes;
          out["iterations"] = r.iterations;
          out["converged"] = r.converged;
          return out;
        },
        py::arg("op"), py::arg("energy"), py::arg("kspace"), py::arg("x0"), py::arg("config") = MapConfig{});

  py::enum_<LangevinVariant>(m, "LangevinVariant")
      .value("Standard", LangevinVariant::Standard)
      .value("Scaled", LangevinVariant::Scaled);
  py::class_<SamplerConfig>(m, "SamplerConfig")
      .def(py::init<>())
      .def_readwrite("epsilon", &SamplerConfig::epsilon)
      .def_readwrite("n_steps", &SamplerConfig::n_steps)
      .def_readwrite("variant", &SamplerConfig::variant)
      .def_readwrite("seed", &SamplerConfig::seed);

  m.def("sample_posterior",
        [](const ForwardOperator& op, std::shared_ptr<const EnergyModel> energy, const CArray& b, const CArray& x0,
           const SamplerConfig& cfg) {
          return from_image(sample_posterior(make_model(op, std::move(energy), b), to_image(x0), cfg).sample);
        },
        py::arg("op"), py::arg("energy"), py::arg("kspace"), py::arg("x0"), py::arg("config") = SamplerConfig{});

  m.def("estimate_mmse_uncertainty",
        [](const ForwardOperator& op, std::shared_ptr<const EnergyModel> energy, const CArray& b,
           const SamplerConfig& cfg, std::size_t n_samples) {
          const UncertaintyReport r = estimate_mmse_uncertainty(make_model(op, std::move(energy), b), cfg, n_samples);
          py::array_t<double> var({op.height(), op.width()});
          std::memcpy(var.mutable_data(), r.variance.data(), r.variance.size() * sizeof(double));
          py::dict out;
          out["mmse"] = from_image(r.mmse);
          out["variance"] = var;
          out["n_samples"] = r.n_samples;
          out["dropped"] = r.dropped;
          return out;
        },
        py::arg("op"), py::arg("energy"), py::arg("kspace"), py::arg("config"), py::arg("n_samples"));

  m.def("psnr", [](const CArray& ref, const CArray& est) { return psnr(to_image(ref), to_image(est)); });
  m.def("ssim", [](const CArray& ref, const CArray& est) { return ssim(to_image(ref), to_image(est)); });
  m.def("mse", [](const CArray& ref, const CArray& est) { return mse(to_image(ref), to_image(est)); });

  m.def("read_image", [](const std::filesystem::path& p) { return from_image(image_from_tensor(read_tensor(p))); });
  m.def("read_planes", [](const std::filesystem::path& p) { return from_planes(planes_from_tensor(read_tensor(p))); });
  m.def("write_image", [](const std::filesystem::path& p, const CArray& x) { write_tensor(p, to_tensor(to_image(x))); });

  py::class_<DatasetSpec>(m, "DatasetSpec")
      .def(py::init<>())
      .def_readwrite("n_train", &DatasetSpec::n_train)
      .def_readwrite("n_val", &DatasetSpec::n_val)
      .def_readwrite("n_test", &DatasetSpec::n_test)
      .def_readwrite("height", &DatasetSpec::height)
      .def_readwrite("width", &DatasetSpec::width)
      .def_readwrite("n_coils", &DatasetSpec::n_coils)
      .def_readwrite("acceleration", &DatasetSpec::acceleration)
      .def_readwrite("noise_std", &DatasetSpec::noise_std)
      .def_readwrite("seed", &DatasetSpec::seed);
  m.def("gen_dataset",
        [](const DatasetSpec& spec, const std::filesystem::path& dir) { write_dataset(gen_phantoms(spec), dir); },
        py::arg("spec"), py::arg("out_dir"));
}
