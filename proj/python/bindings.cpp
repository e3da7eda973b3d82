#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "m2rec/cli.hpp"
#include "m2rec/dataset.hpp"
#include "m2rec/error.hpp"
#include "m2rec/evaluation.hpp"
#include "m2rec/fft.hpp"
#include "m2rec/spectral_filter.hpp"

namespace py = pybind11;
using namespace m2rec;

PYBIND11_MODULE(_m2rec, m) {
  m.doc() = "Native core of the m2rec recommender";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def("fft", [](const std::vector<Complex>& x) { return fft(std::span<const Complex>(x)); },
        py::arg("x"), "Unnormalized forward DFT of a 1-D sequence.");
  m.def("ifft", [](const std::vector<Complex>& x) { return ifft(std::span<const Complex>(x)); },
        py::arg("x"), "Inverse DFT carrying the 1/T factor.");
  m.def(
      "power_spectrum",
      [](const std::vector<double>& x) {
        const auto p = power_spectrum(x);
        std::vector<double> f, pw;
        for (const auto& s : p) {
          f.push_back(s.frequency);
          pw.push_back(s.power);
        }
        return std::make_pair(f, pw);
      },
      py::arg("x"), "(frequencies, powers) for bins 0 .. T/2.");

  m.def(
      "spectral_filter",
      [](const Matrix& x, double theta, std::size_t first_valid) {
        const auto p = SpectralFilterParams::identity(static_cast<std::size_t>(x.rows()),
                                                      static_cast<std::size_t>(x.cols()), theta);
        return spectral_filter(x, p, first_valid);
      },
      py::arg("x"), py::arg("theta"), py::arg("first_valid") = 0,
      "Low-pass a T x d block with an all-pass kernel over the kept band.");

  m.def(
      "synthetic",
      [](std::size_t users, std::size_t items, std::size_t length, std::vector<std::size_t> periods,
         double noise, std::uint64_t seed, bool random_phase) {
        SyntheticOptions o;
        o.num_users = users;
        o.num_items = items;
        o.length = length;
        o.periods = std::move(periods);
        o.noise_prob = noise;
        o.seed = seed;
        o.random_phase = random_phase;
        std::vector<std::vector<ItemId>> out;
        for (auto& u : generate_synthetic(o).users) out.push_back(std::move(u.items));
        return out;
      },
      py::arg("users") = 200, py::arg("items") = 64, py::arg("length") = 120,
      py::arg("periods") = std::vector<std::size_t>{7}, py::arg("noise") = 0.0,
      py::arg("seed") = 1, py::arg("random_phase") = true,
      "Item sequences of the periodic synthetic generator.");

  m.def(
      "target_rank",
      [](const std::vector<double>& scores, ItemId target) { return target_rank(scores, target); },
      py::arg("scores"), py::arg("target"));
  m.def(
      "metrics_json",
      [](const std::vector<std::size_t>& ranks, const std::vector<std::size_t>& histories,
         const std::vector<std::size_t>& ks) {
        return metrics_from_ranks(ranks, histories, ks).to_json().dump();
      },
      py::arg("ranks"), py::arg("histories"), py::arg("ks"));

  m.def(
      "timing_bench",
      [](const std::vector<std::size_t>& lengths, std::size_t reps, std::size_t d, std::size_t batch,
         std::uint64_t seed) {
        std::vector<std::tuple<std::size_t, double, double>> rows;
        for (const auto& r : timing_bench(lengths, reps, d, batch, seed))
          rows.emplace_back(r.length, r.filter_seconds, r.scan_seconds);
        return rows;
      },
      py::arg("lengths"), py::arg("reps") = 9, py::arg("d") = 64, py::arg("batch") = 32,
      py::arg("seed") = 1);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return std::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a command-line subcommand; returns (status, stdout, stderr).");
}
