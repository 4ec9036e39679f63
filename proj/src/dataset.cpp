#include "stain/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "stain/error.hpp"

namespace stain::dataset {

namespace {

bool is_wav(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".wav";
}

std::vector<fs::path> list_wavs(const fs::path& root, const std::string& sub) {
  const fs::path dir = root / sub;
  if (!fs::is_directory(dir)) throw DataError("corpus directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_wav(e.path())) out.push_back(fs::path(sub) / e.path().filename());
  }
  if (out.empty()) throw DataError("corpus directory has no .wav files: " + dir.string());
  std::sort(out.begin(), out.end());
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

double db_to_gain(double db) { return std::pow(10.0, db / 20.0); }

}  // namespace

CorpusManifest build_manifest(const fs::path& root, const std::string& cough_subdir, const std::string& other_subdir) {
  CorpusManifest m{root, list_wavs(root, cough_subdir), list_wavs(root, other_subdir)};
  std::set<fs::path> seen;
  for (const auto& p : m.cough_files) seen.insert(fs::weakly_canonical(root / p));
  for (const auto& p : m.other_files) {
    if (seen.count(fs::weakly_canonical(root / p))) throw DataError("overlapping corpus classes: " + p.string());
  }
  return m;
}

void AugmentationSpec::validate() const {
  if (!(min_duration_s >= 2.0 && min_duration_s < max_duration_s && max_duration_s <= 5.0)) {
    throw std::invalid_argument("duration range must satisfy 2.0 <= min < max <= 5.0");
  }
  if (min_overlays < 0 || max_overlays < min_overlays) throw std::invalid_argument("bad overlay count range");
  if (!(min_gain_db <= max_gain_db)) throw std::invalid_argument("bad gain range");
  if (sample_rate <= 0) throw std::invalid_argument("sample_rate must be positive");
}

std::size_t LabeledExample::cough_sources() const {
  return static_cast<std::size_t>(std::count_if(provenance.begin(), provenance.end(), [](auto& e) { return e.cough; }));
}

SourceBank::SourceBank(const CorpusManifest& manifest, int sample_rate) : sample_rate_(sample_rate) {
  auto load = [&](const std::vector<fs::path>& files, std::vector<Source>& out) {
    for (const auto& p : files) {
      dsp::AudioClip c;
      try {
        c = dsp::resample(dsp::read_wav(manifest.root / p), sample_rate);
      } catch (const DataError& e) {
        throw DataError(p.string() + ": " + e.what());
      }
      if (c.samples.empty()) throw DataError(p.string() + ": no samples");
      out.push_back({p, std::move(c.samples)});
    }
  };
  load(manifest.cough_files, coughs_);
  load(manifest.other_files, others_);
  if (coughs_.empty() || others_.empty()) throw DataError("corpus needs both cough and non-cough files");
}

LabeledExample synthesize_example(const SourceBank& bank, const AugmentationSpec& spec, int label,
                                  SplitMix64& rng) {
  spec.validate();
  if (bank.sample_rate() != spec.sample_rate) throw std::invalid_argument("source bank sample rate differs from spec");
  const double rate = spec.sample_rate;
  const auto n_min = static_cast<std::size_t>(std::ceil(spec.min_duration_s * rate));
  const auto n_max = static_cast<std::size_t>(std::floor(spec.max_duration_s * rate));
  const auto n = std::clamp(static_cast<std::size_t>(std::llround(rng.uniform(spec.min_duration_s, spec.max_duration_s) * rate)),
                            n_min, n_max);

  LabeledExample ex;
  ex.label = label;
  std::vector<double> mix(n, 0.0);
  auto add = [&](const SourceBank::Source& src, std::size_t offset, double gain_db, bool cough) {
    const double g = db_to_gain(gain_db);
    for (std::size_t j = 0; j < src.samples.size() && offset + j < n; ++j) mix[offset + j] += g * src.samples[j];
    ex.provenance.push_back({src.path, cough, static_cast<double>(offset) / rate, gain_db});
  };

  const auto overlays = rng.uniform_int(spec.min_overlays, spec.max_overlays);
  for (std::int64_t k = 0; k < overlays; ++k) {
    const auto& src = bank.others()[static_cast<std::size_t>(rng.uniform_int(0, std::ssize(bank.others()) - 1))];
    const auto offset = std::min(static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)), n - 1);
    add(src, offset, rng.uniform(spec.min_gain_db, spec.max_gain_db), false);
  }
  if (label == 1) {
    const auto& src = bank.coughs()[static_cast<std::size_t>(rng.uniform_int(0, std::ssize(bank.coughs()) - 1))];
    const std::size_t room = src.samples.size() < n ? n - src.samples.size() : 0;
    const auto offset = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(room)));
    add(src, offset, rng.uniform(spec.min_gain_db, spec.max_gain_db), true);
  } else if (label != 0) {
    throw std::invalid_argument("label must be 0 or 1");
  }

  // Hard clip, then snap to the 16-bit grid so the clip equals its WAV file.
  for (auto& s : mix) s = dsp::quantize16(std::clamp(s, -1.0, 1.0));
  ex.clip = {std::move(mix), spec.sample_rate};
  return ex;
}

std::vector<PlannedExample> plan_dataset(const AugmentationSpec& spec, const DatasetCounts& counts) {
  if (counts.train_pos < 1 || counts.train_neg < 1 || counts.test_pos < 1 || counts.test_neg < 1) {
    throw std::invalid_argument("every dataset count must be >= 1");
  }
  std::vector<PlannedExample> out;
  out.reserve(counts.total());
  auto plan = [&](const std::string& split, std::size_t pos, std::size_t neg) {
    const std::uint64_t split_seed = derive_seed(spec.seed, split);
    for (std::size_t i = 0; i < pos + neg; ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_%05zu.wav", split.c_str(), i);
      out.push_back({{fs::path(split) / name, i < pos ? 1 : 0, split}, derive_seed(split_seed, i)});
    }
  };
  plan("train", counts.train_pos, counts.train_neg);
  plan("test", counts.test_pos, counts.test_neg);
  return out;
}

fs::path build_dataset(const SourceBank& bank, const AugmentationSpec& spec, const DatasetCounts& counts,
                       const fs::path& out_dir) {
  spec.validate();
  const auto plan = plan_dataset(spec, counts);
  std::error_code ec;
  for (const char* split : {"train", "test"}) {
    fs::create_directories(out_dir / split, ec);
    if (ec) throw DataError("cannot create " + (out_dir / split).string() + ": " + ec.message());
  }
  std::vector<IndexRecord> records;
  std::ostringstream prov;
  for (const auto& p : plan) {
    SplitMix64 rng(p.stream_seed);
    const LabeledExample ex = synthesize_example(bank, spec, p.record.label, rng);
    dsp::write_wav(out_dir / p.record.path, ex.clip);
    records.push_back(p.record);
    for (const auto& e : ex.provenance) {
      prov << p.record.path.generic_string() << '\t' << e.source.generic_string() << '\t'
           << (e.cough ? "cough" : "other") << '\t' << fmt(e.start_s) << '\t' << fmt(e.gain_db) << '\n';
    }
  }
  const fs::path index = out_dir / "index.tsv";
  write_index(index, records);
  std::ofstream pf(out_dir / "provenance.tsv", std::ios::binary | std::ios::trunc);
  pf << prov.str();
  if (!pf) throw DataError("cannot write " + (out_dir / "provenance.tsv").string());
  return index;
}

std::vector<IndexRecord> Dataset::split(const std::string& name) const {
  std::vector<IndexRecord> out;
  for (const auto& r : records) {
    if (r.split == name) out.push_back(r);
  }
  return out;
}

void write_index(const fs::path& path, const std::vector<IndexRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) out << r.path.generic_string() << '\t' << r.label << '\t' << r.split << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

Dataset read_index(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "index.tsv" : path;
  std::ifstream in(file);
  if (!in) throw DataError("cannot open dataset index " + file.string());
  Dataset d{file.parent_path(), {}};
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 3 || (f[1] != "0" && f[1] != "1") || f[2].empty()) {
      throw DataError(file.string() + ":" + std::to_string(no) + ": expected 'path<TAB>0|1<TAB>split'");
    }
    d.records.push_back({f[0], f[1] == "1" ? 1 : 0, f[2]});
  }
  return d;
}

std::vector<ProvenanceRecord> read_provenance(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<ProvenanceRecord> out;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    const auto f = split_tabs(line);
    if (f.size() != 5 || (f[2] != "cough" && f[2] != "other")) {
      throw DataError(path.string() + ":" + std::to_string(no) + ": malformed provenance record");
    }
    try {
      out.push_back({f[0], {f[1], f[2] == "cough", std::stod(f[3]), std::stod(f[4])}});
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ":" + std::to_string(no) + ": bad number");
    }
  }
  return out;
}

// --- fixtures -----------------------------------------------------------------

namespace {

// Raised-cosine fade in and out over `fade` samples.
void apply_fades(std::vector<double>& x, std::size_t fade) {
  fade = std::min(fade, x.size() / 2);
  for (std::size_t i = 0; i < fade; ++i) {
    const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(fade));
    x[i] *= w;
    x[x.size() - 1 - i] *= w;
  }
}

}  // namespace

AudioClip fixture_cough(SplitMix64& rng, int sample_rate) {
  const double rate = sample_rate;
  const auto bursts = rng.uniform_int(1, 3);
  std::vector<double> out;
  std::size_t onset = static_cast<std::size_t>(rng.uniform(0.05, 0.15) * rate);
  for (std::int64_t b = 0; b < bursts; ++b) {
    const auto len = static_cast<std::size_t>(rng.uniform(0.3, 0.5) * rate);
    const double tau = rng.uniform(0.05, 0.1) * rate;
    const double amp = rng.uniform(0.5, 0.9);
    // Two-pole resonator gives the noise a vocal-tract-like bump.
    const double f0 = rng.uniform(300.0, 1500.0), r = 0.97;
    const double a1 = 2 * r * std::cos(2 * std::numbers::pi * f0 / rate), a2 = -r * r;
    const auto attack = static_cast<std::size_t>(0.005 * rate);
    out.resize(onset + len, 0.0);
    double y1 = 0.0, y2 = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double w = rng.normal();
      const double y = 0.05 * w + a1 * y1 + a2 * y2;
      y2 = y1;
      y1 = y;
      const double env = (i < attack ? static_cast<double>(i) / attack : 1.0) * std::exp(-static_cast<double>(i) / tau);
      out[onset + i] += amp * env * std::clamp(0.25 * w + 0.5 * y, -3.0, 3.0) / 3.0;
    }
    onset += len + static_cast<std::size_t>(rng.uniform(0.03, 0.12) * rate);
  }
  out.resize(out.size() + static_cast<std::size_t>(0.05 * rate), 0.0);
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  const double target = rng.uniform(0.5, 0.9);
  for (auto& v : out) v *= target / peak;
  return {std::move(out), sample_rate};
}

AudioClip fixture_other(SplitMix64& rng, int sample_rate, std::size_t variant) {
  const double rate = sample_rate;
  const auto n = static_cast<std::size_t>(rng.uniform(1.0, 3.0) * rate);
  std::vector<double> x(n, 0.0);
  switch (variant % 3) {
    case 0: {  // tone cluster
      const auto tones = rng.uniform_int(1, 3);
      for (std::int64_t k = 0; k < tones; ++k) {
        const double f = rng.uniform(150.0, 3500.0), a = rng.uniform(0.1, 0.3), ph = rng.uniform(0.0, 6.28);
        for (std::size_t i = 0; i < n; ++i) x[i] += a * std::sin(2 * std::numbers::pi * f * i / rate + ph);
      }
      apply_fades(x, static_cast<std::size_t>(0.2 * rate));
      break;
    }
    case 1: {  // linear chirp
      double f0 = rng.uniform(200.0, 1000.0), f1 = rng.uniform(1000.0, 4000.0);
      if (rng.uniform() < 0.5) std::swap(f0, f1);
      const double a = rng.uniform(0.2, 0.4), dur = n / rate;
      double phase = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = a * std::sin(phase);
        phase += 2 * std::numbers::pi * (f0 + (f1 - f0) * (i / rate) / dur) / rate;
      }
      apply_fades(x, static_cast<std::size_t>(0.05 * rate));
      break;
    }
    default: {  // steady low-passed noise
      // Two cascaded one-pole stages. A single stage leaks enough broadband
      // energy to bury quiet coughs. The level is set from the first stage.
      const double alpha = rng.uniform(0.05, 0.2), target = rng.uniform(0.05, 0.15);
      double y = 0.0, y2 = 0.0, energy = 0.0;
      for (auto& v : x) {
        y += alpha * (rng.normal() - y);
        y2 += alpha * (y - y2);
        v = y2;
        energy += y * y;
      }
      const double scale = target / std::sqrt(energy / static_cast<double>(n) + 1e-300);
      for (auto& v : x) v *= scale;
      apply_fades(x, static_cast<std::size_t>(0.1 * rate));
      break;
    }
  }
  return {std::move(x), sample_rate};
}

CorpusManifest generate_fixture_corpus(const fs::path& root, const FixtureConfig& cfg) {
  if (cfg.cough_files == 0 || cfg.other_files == 0) throw std::invalid_argument("fixture counts must be >= 1");
  std::error_code ec;
  for (const char* sub : {"cough", "other"}) {
    fs::create_directories(root / sub, ec);
    if (ec) throw DataError("cannot create " + (root / sub).string() + ": " + ec.message());
  }
  CorpusManifest m{root, {}, {}};
  char name[64];
  for (std::size_t i = 0; i < cfg.cough_files; ++i) {
    SplitMix64 rng(derive_seed(derive_seed(cfg.seed, "fixture.cough"), i));
    std::snprintf(name, sizeof name, "cough_%03zu.wav", i);
    m.cough_files.push_back(fs::path("cough") / name);
    dsp::write_wav(root / m.cough_files.back(), fixture_cough(rng, cfg.sample_rate));
  }
  for (std::size_t i = 0; i < cfg.other_files; ++i) {
    SplitMix64 rng(derive_seed(derive_seed(cfg.seed, "fixture.other"), i));
    std::snprintf(name, sizeof name, "other_%03zu.wav", i);
    m.other_files.push_back(fs::path("other") / name);
    dsp::write_wav(root / m.other_files.back(), fixture_other(rng, cfg.sample_rate, i));
  }
  return m;
}

}  // namespace stain::dataset
