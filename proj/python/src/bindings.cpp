#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "stain/dataset.hpp"
#include "stain/detect.hpp"
#include "stain/envrisk.hpp"
#include "stain/error.hpp"
#include "stain/forecast.hpp"
#include "stain/trainkit.hpp"

namespace py = pybind11;
using namespace stain;

namespace {

dsp::AudioClip to_clip(py::array_t<double, py::array::c_style | py::array::forcecast> samples, int rate) {
  if (samples.ndim() != 1) throw std::invalid_argument("samples must be one-dimensional");
  dsp::AudioClip c;
  c.sample_rate = rate;
  c.samples.assign(samples.data(), samples.data() + samples.size());
  return c;
}

py::array_t<double> to_array(const numerics::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict metrics_dict(const trainkit::MetricsReport& r) {
  py::dict d;
  d["sensitivity"] = r.sensitivity;
  d["specificity"] = r.specificity;
  d["accuracy"] = r.accuracy;
  d["mcc"] = r.mcc;
  return d;
}

std::map<envrisk::EnvFactor, double> factor_map(const std::map<std::string, double>& in) {
  std::map<envrisk::EnvFactor, double> out;
  for (const auto& [k, v] : in) out[envrisk::parse_factor(k)] = v;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cough detection, environmental risk and forecasting core";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "read_wav",
      [](const std::filesystem::path& path) {
        const auto c = dsp::read_wav(path);
        py::array_t<double> a(static_cast<py::ssize_t>(c.samples.size()));
        std::copy(c.samples.begin(), c.samples.end(), a.mutable_data());
        return py::make_tuple(a, c.sample_rate);
      },
      py::arg("path"), "Mono samples in [-1, 1] and the sample rate.");
  m.def(
      "write_wav",
      [](const std::filesystem::path& path, py::array_t<double> samples, int rate) {
        dsp::write_wav(path, to_clip(samples, rate));
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate") = 16000);
  m.def(
      "spectrogram",
      [](py::array_t<double> samples, int rate) {
        const dsp::StftConfig stft;
        return to_array(dsp::spectrogram(dsp::resample(to_clip(samples, rate), stft.sample_rate), stft).values);
      },
      py::arg("samples"), py::arg("sample_rate") = 16000, "Log-magnitude spectrogram [bins, frames].");

  m.def(
      "metrics",
      [](std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
        return metrics_dict(trainkit::metrics({tp, fp, tn, fn}));
      },
      py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));

  m.def(
      "generate_fixtures",
      [](const std::filesystem::path& root, std::size_t cough_files, std::size_t other_files, std::uint64_t seed) {
        const auto man = dataset::generate_fixture_corpus(root, {cough_files, other_files, seed, 16000});
        return py::make_tuple(man.cough_files.size(), man.other_files.size());
      },
      py::arg("root"), py::arg("cough_files") = 48, py::arg("other_files") = 64, py::arg("seed") = 0);
  m.def(
      "build_dataset",
      [](const std::filesystem::path& corpus, const std::filesystem::path& out, std::uint64_t seed,
         std::size_t train_pos, std::size_t train_neg, std::size_t test_pos, std::size_t test_neg) {
        dataset::AugmentationSpec spec;
        spec.seed = seed;
        const dataset::SourceBank bank(dataset::build_manifest(corpus), spec.sample_rate);
        return dataset::build_dataset(bank, spec, {train_pos, train_neg, test_pos, test_neg}, out);
      },
      py::arg("corpus"), py::arg("out"), py::arg("seed") = 0, py::arg("train_pos") = 200, py::arg("train_neg") = 200,
      py::arg("test_pos") = 50, py::arg("test_neg") = 50, "Returns the path of index.tsv.");

  m.def(
      "train",
      [](const std::filesystem::path& data, const std::filesystem::path& out, const std::string& kind,
         std::optional<std::size_t> epochs, std::uint64_t seed) {
        auto cfg = trainkit::default_train_config(models::parse_model_kind(kind), seed);
        if (epochs) cfg.epochs = *epochs;
        const auto set = trainkit::load_features(dataset::read_index(data), "train");
        trainkit::TrainResult r;
        {
          py::gil_scoped_release release;
          r = trainkit::train(set, cfg);
        }
        models::save_checkpoint(out, r.checkpoint);
        return r.epoch_losses;
      },
      py::arg("data"), py::arg("out"), py::arg("kind") = "stain", py::arg("epochs") = py::none(), py::arg("seed") = 0,
      "Trains on the train split, writes a checkpoint and returns the epoch losses.");

  py::class_<models::Model>(m, "Model")
      .def_static(
          "load", [](const std::filesystem::path& path) { return models::load_checkpoint(path).model(); },
          py::arg("path"))
      .def_property_readonly("kind", [](const models::Model& mo) { return models::to_string(mo.config().kind); })
      .def_property_readonly("parameter_count", &models::Model::parameter_count)
      .def(
          "predict",
          [](const models::Model& mo, py::array_t<double> samples, int rate) {
            const auto clip = dsp::resample(to_clip(samples, rate), mo.config().stft.sample_rate);
            const auto p = mo.predict(mo.features(clip));
            return py::make_tuple(p.probability, p.per_slice);
          },
          py::arg("samples"), py::arg("sample_rate") = 16000,
          "Clip probability and per-slice probabilities (empty for rnn/crnn).")
      .def(
          "detect",
          [](const models::Model& mo, py::array_t<double> samples, int rate, double threshold, double window,
             double hop, double refractory) {
            const auto ev = detect::detect(mo, to_clip(samples, rate), {threshold, window, hop, refractory});
            std::vector<std::pair<double, double>> out;
            for (const auto& e : ev) out.emplace_back(e.timestamp, e.probability);
            return out;
          },
          py::arg("samples"), py::arg("sample_rate") = 16000, py::arg("threshold") = 0.5, py::arg("window") = 4.0,
          py::arg("hop") = 1.0, py::arg("refractory") = 1.0, "List of (timestamp_s, probability).");

  m.def(
      "risk_increase",
      [](const std::map<std::string, double>& values) {
        const auto r = envrisk::risk_increase(factor_map(values), envrisk::RiskConfig::defaults());
        std::map<std::string, double> contrib;
        for (const auto& [f, v] : r.contributions) contrib[envrisk::to_string(f)] = v;
        return py::make_tuple(r.total, contrib);
      },
      py::arg("values"), "Total percent increase and per-factor contributions under the default config.");
  m.def("haversine_km", &envrisk::haversine_km, py::arg("lat1"), py::arg("lon1"), py::arg("lat2"), py::arg("lon2"));

  m.def(
      "forecast",
      [](const std::vector<double>& timestamps, double env_pct, std::size_t horizon_days, double bucket_s,
         double reference_frequency, double alert_threshold) {
        std::vector<forecast::CoughEvent> ev;
        for (double t : timestamps) ev.push_back({t, 1.0});
        const auto trend = forecast::fit_trend(forecast::aggregate(ev, bucket_s));
        const auto f = forecast::make_forecast(trend, env_pct, horizon_days, {reference_frequency, alert_threshold});
        return py::make_tuple(forecast::render_record(f), forecast::summary_line(f));
      },
      py::arg("timestamps"), py::arg("env_pct") = 0.0, py::arg("horizon_days") = 7, py::arg("bucket_s") = 3600.0,
      py::arg("reference_frequency") = 10.0, py::arg("alert_threshold") = 1.5,
      "JSON record and summary line for event timestamps in seconds.");
}
