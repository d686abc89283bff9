#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "captime/data_io.hpp"
#include "captime/inference.hpp"
#include "captime/metrics.hpp"
#include "captime/model.hpp"
#include "captime/series_prep.hpp"
#include "captime/student_t.hpp"

namespace py = pybind11;
using namespace captime;

namespace {

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  std::vector<std::vector<double>> out(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) out[r][c] = t(r, c);
  return out;
}

py::dict result_dict(const ForecastResult& r) {
  py::dict d;
  d["point"] = r.point;
  d["mu"] = r.mu;
  d["sigma"] = r.sigma;
  d["nu"] = r.nu;
  d["quantiles"] = r.quantiles;
  d["steps"] = r.steps;
  py::list att;
  for (const Tensor& a : r.attention) att.append(rows_of(a));
  d["attention"] = att;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Context-aware probabilistic forecasting core";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  m.def("student_t_logpdf", py::overload_cast<double, double, double, double>(&student_t::logpdf), py::arg("y"),
        py::arg("mu"), py::arg("sigma"), py::arg("nu"));
  m.def("student_t_cdf", &student_t::cdf, py::arg("y"), py::arg("mu"), py::arg("sigma"), py::arg("nu"));
  m.def("student_t_quantile", &student_t::quantile, py::arg("q"), py::arg("mu"), py::arg("sigma"), py::arg("nu"),
        py::arg("tol") = 1e-8);

  m.def("patch_count", &patch_count, py::arg("length"), py::arg("patch_len"));
  m.def(
      "patchify",
      [](const std::vector<double>& x, std::size_t patch_len) { return rows_of(patchify(x, patch_len).patches); },
      py::arg("values"), py::arg("patch_len"));
  m.def(
      "instance_normalize",
      [](const std::vector<double>& x) {
        const ChannelStats s = channel_stats(x);
        return py::make_tuple(normalize_channel(x, s), s.mean, s.std);
      },
      py::arg("values"), "Returns (normalized, mean, std).");

  m.def("mse", [](const std::vector<double>& y, const std::vector<double>& f) { return metrics::mse(y, f); });
  m.def("mae", [](const std::vector<double>& y, const std::vector<double>& f) { return metrics::mae(y, f); });
  m.def("smape", [](const std::vector<double>& y, const std::vector<double>& f) { return metrics::smape(y, f); });
  m.def(
      "mase",
      [](const std::vector<double>& y, const std::vector<double>& f, const std::vector<double>& insample,
         std::size_t season) { return metrics::mase(y, f, insample, season); },
      py::arg("y"), py::arg("yhat"), py::arg("insample"), py::arg("season"));
  m.def("owa", &metrics::owa, py::arg("smape"), py::arg("mase"), py::arg("smape_naive2"), py::arg("mase_naive2"));
  m.def(
      "naive2",
      [](const std::vector<double>& insample, std::size_t horizon, std::size_t season) {
        return metrics::naive2(insample, horizon, season);
      },
      py::arg("insample"), py::arg("horizon"), py::arg("season"));

  m.def(
      "generate_synthetic",
      [](std::size_t length, double period, std::size_t segment, std::uint64_t seed, bool hetero) {
        SyntheticSpec s;
        s.length = length;
        s.period = period;
        s.segment = segment;
        s.seed = seed;
        s.hetero = hetero;
        const SyntheticCorpus g = generate_synthetic(s);
        py::list texts;
        for (const TextRecord& t : g.corpus.texts) texts.append(py::make_tuple(t.start, t.end, t.text));
        std::vector<int> regimes;
        for (Regime r : g.regimes) regimes.push_back(static_cast<int>(r));
        py::dict d;
        d["timestamps"] = g.corpus.timestamps;
        d["values"] = g.corpus.channels.at(0);
        d["texts"] = texts;
        d["regimes"] = regimes;
        return d;
      },
      py::arg("length") = 6400, py::arg("period") = 16.0, py::arg("segment") = 32, py::arg("seed") = 0,
      py::arg("hetero") = false);

  py::class_<Model>(m, "Model")
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def_property_readonly("lookback", [](const Model& x) { return x.cfg.lookback; })
      .def_property_readonly("patch_len", [](const Model& x) { return x.cfg.patch_len; })
      .def_property_readonly("max_horizon", [](const Model& x) { return x.cfg.max_horizon; })
      .def_property_readonly("probabilistic", [](const Model& x) { return x.cfg.probabilistic(); })
      .def(
          "forecast",
          [](const Model& x, const std::vector<double>& lookback, std::size_t horizon, const std::string& text,
             const std::vector<double>& quantiles, bool keep_attention) {
            ForecastRequest req;
            req.lookback = lookback;
            req.horizon = horizon;
            req.prompt = tokenize(text, x.vocab, x.cfg.text_max_len);
            req.quantiles = quantiles;
            req.keep_attention = keep_attention;
            ForecastResult r;
            {
              py::gil_scoped_release nogil;
              r = forecast(x, req);
            }
            return result_dict(r);
          },
          py::arg("lookback"), py::arg("horizon"), py::arg("text") = "", py::arg("quantiles") = std::vector<double>{},
          py::arg("keep_attention") = false);
}
