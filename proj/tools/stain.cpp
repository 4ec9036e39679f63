// stain: command-line front end for the cough-detection and risk pipeline.
//
// Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric failure.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "stain/dataset.hpp"
#include "stain/detect.hpp"
#include "stain/envrisk.hpp"
#include "stain/error.hpp"
#include "stain/forecast.hpp"
#include "stain/trainkit.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using namespace stain;

namespace {

constexpr int kUsage = 1, kData = 2, kNumeric = 3;

// Sections of the --config file owned by the CLI; the rest is risk config.
const char* const kCliSections[] = {"train", "detect", "forecast", "dataset", "fixtures"};

struct Globals {
  std::uint64_t seed = 0;
  std::string config_path;
  pt::ptree config;

  const pt::ptree& section(const std::string& name) const {
    static const pt::ptree empty;
    auto it = config.find(name);
    return it == config.not_found() ? empty : it->second;
  }

  envrisk::RiskConfig risk() const {
    pt::ptree rest;
    for (const auto& [name, body] : config) {
      if (std::find(std::begin(kCliSections), std::end(kCliSections), name) == std::end(kCliSections)) {
        rest.add_child(name, body);
      }
    }
    std::ostringstream text;
    pt::write_ini(text, rest);
    return envrisk::parse_risk_config(text.str());
  }
};

// Fills `target` from the config section unless the option was given.
template <class T>
void from_config(T& target, const CLI::Option* opt, const pt::ptree& section, const std::string& key) {
  if (opt && opt->count() > 0) return;
  if (auto v = section.get_optional<std::string>(key)) {
    std::istringstream in(*v);
    T parsed{};
    if (!(in >> parsed)) throw std::invalid_argument("config: bad value for " + key + ": " + *v);
    target = parsed;
  }
}

void from_config(std::string& target, const CLI::Option* opt, const pt::ptree& section, const std::string& key) {
  if (opt && opt->count() > 0) return;
  if (auto v = section.get_optional<std::string>(key)) target = *v;
}

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

envrisk::BBox parse_bbox(const std::string& s) {
  envrisk::BBox b;
  char extra;
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf%c", &b.lat_min, &b.lat_max, &b.lon_min, &b.lon_max, &extra) != 4) {
    throw std::invalid_argument("--bbox expects lat_min,lat_max,lon_min,lon_max");
  }
  return b;
}

std::vector<envrisk::SensorSample> load_snapshots(const std::vector<std::string>& paths, const std::string& kind) {
  const auto source = envrisk::parse_source_kind(kind);
  std::vector<envrisk::SensorSample> all;
  for (const auto& p : paths) {
    auto r = envrisk::ingest_snapshot(p, source);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    all.insert(all.end(), r.samples.begin(), r.samples.end());
  }
  return all;
}

nlohmann::ordered_json risk_json(const envrisk::RiskAssessment& r) {
  nlohmann::ordered_json j, in, contrib;
  for (const auto& [f, v] : r.inputs) in[envrisk::to_string(f)] = v;
  for (const auto& [f, v] : r.contributions) contrib[envrisk::to_string(f)] = v;
  j["inputs"] = in;
  j["contributions_pct"] = contrib;
  j["total_pct"] = r.total;
  return j;
}

// --- subcommands ---------------------------------------------------------------

struct FixturesCmd {
  std::string out;
  dataset::FixtureConfig cfg;
  CLI::Option *cough = nullptr, *other = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("fixtures", "Write the synthetic fixture corpus (cough/ and other/ WAVs)");
    c->add_option("--out", out, "Corpus directory")->required();
    cough = c->add_option("--cough-files", cfg.cough_files, "Number of cough surrogates");
    other = c->add_option("--other-files", cfg.other_files, "Number of non-cough sounds");
  }
  int run(const Globals& g) {
    const auto& sec = g.section("fixtures");
    from_config(cfg.cough_files, cough, sec, "cough_files");
    from_config(cfg.other_files, other, sec, "other_files");
    cfg.seed = g.seed;
    const auto m = dataset::generate_fixture_corpus(out, cfg);
    std::cout << "wrote " << m.cough_files.size() << " cough and " << m.other_files.size() << " other files to "
              << out << '\n';
    return 0;
  }
};

struct DatasetCmd {
  std::string corpus, out, cough_dir = "cough", other_dir = "other";
  dataset::AugmentationSpec spec;
  dataset::DatasetCounts counts;
  bool full_scale = false;
  std::vector<std::pair<CLI::Option*, std::string>> opts;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("dataset", "Synthesize a labeled train/test dataset from a corpus");
    c->add_option("--corpus", corpus, "Corpus root with cough/ and other/ subdirectories")->required();
    c->add_option("--out", out, "Output directory")->required();
    c->add_option("--cough-dir", cough_dir, "Cough subdirectory name");
    c->add_option("--other-dir", other_dir, "Non-cough subdirectory name");
    opts = {{c->add_option("--train-pos", counts.train_pos), "train_pos"},
            {c->add_option("--train-neg", counts.train_neg), "train_neg"},
            {c->add_option("--test-pos", counts.test_pos), "test_pos"},
            {c->add_option("--test-neg", counts.test_neg), "test_neg"},
            {c->add_option("--min-overlays", spec.min_overlays), "min_overlays"},
            {c->add_option("--max-overlays", spec.max_overlays), "max_overlays"},
            {c->add_option("--min-gain-db", spec.min_gain_db), "min_gain_db"},
            {c->add_option("--max-gain-db", spec.max_gain_db), "max_gain_db"}};
    c->add_flag("--full-scale", full_scale, "Use 10000/10000/1000/1000 examples");
  }
  int run(const Globals& g) {
    const auto& sec = g.section("dataset");
    from_config(counts.train_pos, opts[0].first, sec, opts[0].second);
    from_config(counts.train_neg, opts[1].first, sec, opts[1].second);
    from_config(counts.test_pos, opts[2].first, sec, opts[2].second);
    from_config(counts.test_neg, opts[3].first, sec, opts[3].second);
    from_config(spec.min_overlays, opts[4].first, sec, opts[4].second);
    from_config(spec.max_overlays, opts[5].first, sec, opts[5].second);
    from_config(spec.min_gain_db, opts[6].first, sec, opts[6].second);
    from_config(spec.max_gain_db, opts[7].first, sec, opts[7].second);
    if (full_scale) counts = dataset::DatasetCounts::full_scale();
    spec.seed = g.seed;
    spec.validate();
    const auto manifest = dataset::build_manifest(corpus, cough_dir, other_dir);
    const dataset::SourceBank bank(manifest, spec.sample_rate);
    const auto index = dataset::build_dataset(bank, spec, counts, out);
    std::cout << "wrote " << counts.total() << " examples; index " << index.string() << '\n';
    return 0;
  }
};

// Training options shared by `train` and `bench`.
struct TrainOpts {
  double lr = 0, momentum = 0, clip = 0;
  std::size_t batch = 0, epochs = 0;
  std::string encoder;
  CLI::Option *o_lr = nullptr, *o_mom = nullptr, *o_clip = nullptr, *o_batch = nullptr, *o_epochs = nullptr,
              *o_enc = nullptr;

  void add(CLI::App* c) {
    o_lr = c->add_option("--lr", lr, "Learning rate (default per model)");
    o_mom = c->add_option("--momentum", momentum, "SGD momentum");
    o_batch = c->add_option("--batch-size", batch, "Examples per gradient accumulation");
    o_epochs = c->add_option("--epochs", epochs, "Training epochs");
    o_clip = c->add_option("--clip-norm", clip, "Gradient norm cap, 0 disables");
    o_enc = c->add_option("--encoder", encoder, "STAIN encoder: pool or vae");
  }
  // Precedence: command line, then [train] in the config file, then the per-model default.
  void apply(trainkit::TrainConfig& c, const Globals& g) const {
    const auto& sec = g.section("train");
    auto pick = [&](auto& field, CLI::Option* o, auto value, const char* key) {
      if (o->count() > 0) field = value;
      else from_config(field, nullptr, sec, key);
    };
    pick(c.lr, o_lr, lr, "lr");
    pick(c.momentum, o_mom, momentum, "momentum");
    pick(c.batch_size, o_batch, batch, "batch_size");
    pick(c.epochs, o_epochs, epochs, "epochs");
    pick(c.clip_norm, o_clip, clip, "clip_norm");
    std::string enc = models::to_string(c.encoder);
    pick(enc, o_enc, encoder, "encoder");
    c.encoder = models::parse_encoder_kind(enc);
    c.seed = g.seed;
  }
};

struct TrainCmd {
  std::string data, out, model = "stain";
  TrainOpts opts;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Train one model on the train split");
    c->add_option("--data", data, "Dataset directory or index.tsv")->required();
    c->add_option("--model", model, "cnn, rnn, crnn or stain");
    c->add_option("--out", out, "Checkpoint path")->required();
    opts.add(c);
  }
  int run(const Globals& g) {
    auto cfg = trainkit::default_train_config(models::parse_model_kind(model));
    opts.apply(cfg, g);
    cfg.validate();
    const auto ds = dataset::read_index(data);
    const auto set = trainkit::load_features(ds, "train");
    std::cerr << "training " << model << " on " << set.size() << " examples\n";
    auto r = trainkit::train(set, cfg, [](std::size_t e, double loss) {
      std::cerr << "epoch " << e << " loss " << fmt(loss) << '\n';
    });
    models::save_checkpoint(out, r.checkpoint);
    const auto m = r.checkpoint.model();
    const double acc = trainkit::metrics(trainkit::evaluate(m, set).cm).accuracy;
    std::cout << "train accuracy " << fmt(acc, "%.4f") << "; checkpoint " << out << '\n';
    return 0;
  }
};

struct EvalCmd {
  std::string checkpoint, data, split = "test";
  double threshold = 0.5;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    c->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
    c->add_option("--data", data, "Dataset directory or index.tsv")->required();
    c->add_option("--split", split, "Split name");
    c->add_option("--threshold", threshold, "Positive iff probability > threshold");
  }
  int run(const Globals&) {
    const auto ckpt = models::load_checkpoint(checkpoint);
    const auto m = ckpt.model();
    const auto set = trainkit::load_features(dataset::read_index(data), split, m.config().stft);
    if (set.size() == 0) throw DataError("split '" + split + "' is empty");
    trainkit::BenchmarkRow row;
    row.kind = m.config().kind;
    row.cm = trainkit::evaluate(m, set, threshold).cm;
    row.report = trainkit::metrics(row.cm);
    if (auto s = ckpt.meta("seed")) row.seed = std::stoull(*s);
    if (auto l = ckpt.meta("final_loss")) row.final_loss = std::stod(*l);
    std::cout << trainkit::render_records({row});
    return 0;
  }
};

struct BenchCmd {
  std::string data, out;
  std::vector<std::string> kinds{"cnn", "rnn", "crnn", "stain"};
  double threshold = 0.5;
  TrainOpts opts;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("bench", "Train and test the four models on one dataset");
    c->add_option("--data", data, "Dataset directory or index.tsv")->required();
    c->add_option("--out", out, "Directory for records.jsonl, table.txt and checkpoints");
    c->add_option("--models", kinds, "Subset of models to run")->delimiter(',');
    c->add_option("--threshold", threshold, "Positive iff probability > threshold");
    opts.add(c);
  }
  int run(const Globals& g) {
    trainkit::BenchmarkConfig bc;
    bc.threshold = threshold;
    for (const auto& k : kinds) {
      auto cfg = trainkit::default_train_config(models::parse_model_kind(k));
      opts.apply(cfg, g);
      cfg.validate();
      bc.runs.push_back(cfg);
    }
    const auto ds = dataset::read_index(data);
    const auto train_set = trainkit::load_features(ds, "train");
    const auto test_set = trainkit::load_features(ds, "test");
    const auto rows = trainkit::benchmark(train_set, test_set, bc, [](const trainkit::BenchmarkRow& r) {
      std::cerr << models::to_string(r.kind) << ": " << (r.ok() ? "done" : "FAILED: " + r.error) << " in "
                << fmt(r.seconds, "%.1f") << " s\n";
    });
    const std::string table = trainkit::render_table(rows), records = trainkit::render_records(rows);
    std::cout << table;
    if (!out.empty()) {
      write_text(fs::path(out) / "records.jsonl", records);
      write_text(fs::path(out) / "table.txt", table);
      for (const auto& r : rows) {
        if (r.checkpoint) models::save_checkpoint(fs::path(out) / (models::to_string(r.kind) + ".ckpt"), *r.checkpoint);
      }
    }
    for (const auto& r : rows) {
      if (!r.ok()) return kData;
    }
    return 0;
  }
};

struct DetectCmd {
  std::string checkpoint, input = "-";
  double offset = 0.0;
  detect::DetectionConfig cfg;
  CLI::Option *o_thr = nullptr, *o_win = nullptr, *o_hop = nullptr, *o_ref = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("detect", "Stream cough events from a WAV file or raw 16-bit PCM on stdin");
    c->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
    c->add_option("--input", input, "WAV file, or - for raw mono s16le at the model rate on stdin");
    o_thr = c->add_option("--threshold", cfg.threshold, "Detection threshold");
    o_win = c->add_option("--window", cfg.window_s, "Analysis window in seconds");
    o_hop = c->add_option("--hop", cfg.hop_s, "Window hop in seconds");
    o_ref = c->add_option("--refractory", cfg.refractory_s, "Minimum gap between events in seconds");
    c->add_option("--offset", offset, "Added to every timestamp (e.g. stream start, UTC seconds)");
  }
  int run(const Globals& g) {
    const auto& sec = g.section("detect");
    from_config(cfg.threshold, o_thr, sec, "threshold");
    from_config(cfg.window_s, o_win, sec, "window_s");
    from_config(cfg.hop_s, o_hop, sec, "hop_s");
    from_config(cfg.refractory_s, o_ref, sec, "refractory_s");
    cfg.validate();
    // Checkpoint problems surface before any audio is read.
    const auto model = models::load_checkpoint(checkpoint).model();
    detect::Detector d(model, cfg, [&](const detect::CoughEvent& e) {
      std::printf("%.3f,%.6f\n", e.timestamp + offset, e.probability);
      std::fflush(stdout);
    });
    if (input == "-") {
      std::vector<std::int16_t> raw(4096);
      std::vector<double> buf;
      while (true) {
        const std::size_t n = std::fread(raw.data(), sizeof(std::int16_t), raw.size(), stdin);
        buf.resize(n);
        for (std::size_t i = 0; i < n; ++i) buf[i] = raw[i] / 32768.0;
        d.push(buf);
        if (n < raw.size()) break;
      }
    } else {
      const auto clip = dsp::resample(dsp::read_wav(input), model.config().stft.sample_rate);
      d.push(clip.samples);
    }
    d.finish();
    return 0;
  }
};

struct RiskMapCmd {
  std::vector<std::string> snapshots;
  std::string source = "generic", bbox, out;
  std::size_t resolution = 10;
  std::int64_t now = 0;
  CLI::Option* o_now = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("riskmap", "Interpolated exacerbation-risk grid from sensor snapshots");
    c->add_option("--snapshot", snapshots, "Snapshot file (repeatable)")->required();
    c->add_option("--source", source, "purpleair, waqi or generic");
    c->add_option("--bbox", bbox, "lat_min,lat_max,lon_min,lon_max")->required();
    c->add_option("--resolution", resolution, "Cells per side");
    o_now = c->add_option("--now", now, "Reference time, UTC seconds (default: newest sample)");
    c->add_option("--out", out, "Write the grid here instead of stdout");
  }
  int run(const Globals& g) {
    const auto cfg = g.risk();
    const auto samples = load_snapshots(snapshots, source);
    const auto map = envrisk::risk_map(samples, cfg, parse_bbox(bbox), resolution,
                                       o_now->count() ? std::optional<std::int64_t>(now) : std::nullopt);
    const auto text = envrisk::render_risk_map(map);
    if (out.empty()) std::cout << text;
    else write_text(out, text);
    return 0;
  }
};

struct RiskCmd {
  std::vector<std::string> snapshots, values;
  std::string source = "generic";
  double lat = 0, lon = 0;
  std::int64_t now = 0;
  CLI::Option *o_lat = nullptr, *o_now = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("risk", "Exacerbation-risk increase at one location or for given values");
    c->add_option("--value", values, "FACTOR=value, e.g. NO2=55 (repeatable)");
    c->add_option("--snapshot", snapshots, "Snapshot file (repeatable)");
    c->add_option("--source", source, "purpleair, waqi or generic");
    o_lat = c->add_option("--lat", lat, "Latitude");
    c->add_option("--lon", lon, "Longitude");
    o_now = c->add_option("--now", now, "Reference time, UTC seconds");
  }
  envrisk::RiskAssessment compute(const Globals& g) const {
    const auto cfg = g.risk();
    std::optional<envrisk::RiskAssessment> r;
    if (!values.empty()) {
      std::map<envrisk::EnvFactor, double> in;
      for (const auto& v : values) {
        const auto eq = v.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--value expects FACTOR=value, got " + v);
        in[envrisk::parse_factor(v.substr(0, eq))] = std::stod(v.substr(eq + 1));
      }
      r = envrisk::risk_increase(in, cfg);
    } else {
      if (snapshots.empty() || !o_lat->count()) throw std::invalid_argument("risk needs --value or --snapshot with --lat/--lon");
      const auto samples = load_snapshots(snapshots, source);
      r = envrisk::assess_location(samples, cfg, lat, lon,
                                   o_now->count() ? std::optional<std::int64_t>(now) : std::nullopt);
      if (!r) throw DataError("no fresh sensor within range of the location");
    }
    return *r;
  }
  int run(const Globals& g) {
    std::cout << risk_json(compute(g)).dump() << '\n';
    return 0;
  }
};

struct ForecastCmd {
  std::string events;
  double bucket_s = 3600.0, env_pct = 0.0, start = 0.0;
  std::size_t horizon = 7;
  forecast::ForecastConfig cfg;
  RiskCmd env;  // optional environmental inputs, same flags as `risk`
  CLI::Option *o_bucket = nullptr, *o_h = nullptr, *o_ref = nullptr, *o_thr = nullptr, *o_env = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("forecast", "Cough-frequency trend combined with environmental risk");
    c->add_option("--events", events, "Event file: timestamp[,probability] per line")->required();
    c->add_option("--start", start, "Added to every event timestamp");
    o_bucket = c->add_option("--bucket", bucket_s, "Bucket length in seconds");
    o_h = c->add_option("--horizon", horizon, "Forecast horizon in days");
    o_ref = c->add_option("--reference", cfg.reference_frequency, "Coughs/hour taken as severity 1");
    o_thr = c->add_option("--threshold", cfg.alert_threshold, "Alert threshold on the combined score");
    o_env = c->add_option("--env-pct", env_pct, "Environmental risk increase in percent");
    c->add_option("--value", env.values, "FACTOR=value for the environmental risk (repeatable)");
    c->add_option("--snapshot", env.snapshots, "Snapshot file for the environmental risk (repeatable)");
    c->add_option("--source", env.source, "purpleair, waqi or generic");
    env.o_lat = c->add_option("--lat", env.lat, "Latitude");
    c->add_option("--lon", env.lon, "Longitude");
    env.o_now = c->add_option("--now", env.now, "Reference time, UTC seconds");
  }
  int run(const Globals& g) {
    const auto& sec = g.section("forecast");
    from_config(bucket_s, o_bucket, sec, "bucket_s");
    from_config(horizon, o_h, sec, "horizon_days");
    from_config(cfg.reference_frequency, o_ref, sec, "reference_frequency");
    from_config(cfg.alert_threshold, o_thr, sec, "alert_threshold");
    if (!o_env->count() && (!env.values.empty() || !env.snapshots.empty())) env_pct = env.compute(g).total;
    auto ev = forecast::read_events(events);
    for (auto& e : ev) e.timestamp += start;
    const auto series = forecast::aggregate(ev, bucket_s);
    if (series.buckets.size() < 2) throw DataError("need events spanning at least 2 buckets for a trend");
    const auto f = forecast::make_forecast(forecast::fit_trend(series), env_pct, horizon, cfg);
    std::cout << forecast::render_record(f) << '\n' << forecast::summary_line(f) << '\n';
    return 0;
  }
};

struct SpectrogramCmd {
  std::string input, out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("spectrogram", "Dump the log spectrogram of a WAV file");
    c->add_option("--input", input, "WAV file")->required();
    c->add_option("--out", out, "Dump path")->required();
  }
  int run(const Globals&) {
    const dsp::StftConfig stft;
    const auto clip = dsp::resample(dsp::read_wav(input), stft.sample_rate);
    const auto spec = dsp::spectrogram(clip, stft);
    dsp::write_spectrogram_dump(out, spec);
    std::cout << "bins=" << spec.bins() << " frames=" << spec.frames() << " slices=" << dsp::slice(spec).slices.size()
              << '\n';
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cough detection, environmental risk and exacerbation forecasting"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for fixtures, datasets and training");
  app.add_option("--config", g.config_path, "INI file: [train] [detect] [forecast] [dataset] [fixtures] and risk sections");

  FixturesCmd fixtures;
  DatasetCmd dataset_cmd;
  TrainCmd train;
  EvalCmd eval;
  BenchCmd bench;
  DetectCmd detect_cmd;
  RiskMapCmd riskmap;
  RiskCmd risk;
  ForecastCmd forecast_cmd;
  SpectrogramCmd spectrogram;
  fixtures.add(app);
  dataset_cmd.add(app);
  train.add(app);
  eval.add(app);
  bench.add(app);
  detect_cmd.add(app);
  riskmap.add(app);
  risk.add(app);
  forecast_cmd.add(app);
  spectrogram.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kUsage;
  }

  try {
    if (!g.config_path.empty()) {
      try {
        pt::read_ini(g.config_path, g.config);
      } catch (const pt::ini_parser_error& e) {
        throw DataError("config: " + std::string(e.what()));
      }
    }
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "fixtures") return fixtures.run(g);
    if (name == "dataset") return dataset_cmd.run(g);
    if (name == "train") return train.run(g);
    if (name == "eval") return eval.run(g);
    if (name == "bench") return bench.run(g);
    if (name == "detect") return detect_cmd.run(g);
    if (name == "riskmap") return riskmap.run(g);
    if (name == "risk") return risk.run(g);
    if (name == "forecast") return forecast_cmd.run(g);
    if (name == "spectrogram") return spectrogram.run(g);
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
