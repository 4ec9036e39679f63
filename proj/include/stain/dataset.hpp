#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stain/dsp.hpp"
#include "stain/rng.hpp"

namespace stain::dataset {

namespace fs = std::filesystem;
using dsp::AudioClip;

struct CorpusManifest {
  fs::path root;
  std::vector<fs::path> cough_files;  // absolute or root-relative, lexicographic
  std::vector<fs::path> other_files;
};

// Lists *.wav files under root/cough_subdir and root/other_subdir.
CorpusManifest build_manifest(const fs::path& root, const std::string& cough_subdir = "cough",
                              const std::string& other_subdir = "other");

struct AugmentationSpec {
  double min_duration_s = 2.0;
  double max_duration_s = 5.0;
  int min_overlays = 1;
  int max_overlays = 4;
  double min_gain_db = -18.0;
  double max_gain_db = 0.0;
  std::uint64_t seed = 0;
  int sample_rate = 16000;

  void validate() const;
};

struct ProvenanceEntry {
  fs::path source;
  bool cough = false;
  double start_s = 0.0;
  double gain_db = 0.0;
};

struct LabeledExample {
  AudioClip clip;
  int label = 0;
  std::vector<ProvenanceEntry> provenance;

  std::size_t cough_sources() const;
};

// Decoded source audio, resampled to the synthesis rate and kept in memory.
class SourceBank {
 public:
  SourceBank(const CorpusManifest& manifest, int sample_rate);

  struct Source {
    fs::path path;
    std::vector<double> samples;
  };
  const std::vector<Source>& coughs() const { return coughs_; }
  const std::vector<Source>& others() const { return others_; }
  int sample_rate() const { return sample_rate_; }

 private:
  std::vector<Source> coughs_, others_;
  int sample_rate_;
};

// One augmented clip. Non-cough overlays start anywhere in the clip and are
// trimmed at the end; a cough overlay is placed so it lies fully inside.
LabeledExample synthesize_example(const SourceBank& bank, const AugmentationSpec& spec, int label,
                                  SplitMix64& rng);

struct DatasetCounts {
  std::size_t train_pos = 200;
  std::size_t train_neg = 200;
  std::size_t test_pos = 50;
  std::size_t test_neg = 50;

  static DatasetCounts full_scale() { return {10000, 10000, 1000, 1000}; }
  std::size_t total() const { return train_pos + train_neg + test_pos + test_neg; }
};

struct IndexRecord {
  fs::path path;  // relative to the dataset root
  int label = 0;
  std::string split;
};

// File layout and RNG stream of every example, without synthesizing audio.
struct PlannedExample {
  IndexRecord record;
  std::uint64_t stream_seed = 0;
};
std::vector<PlannedExample> plan_dataset(const AugmentationSpec& spec, const DatasetCounts& counts);

// Writes <split>/<split>_NNNNN.wav, index.tsv and provenance.tsv under out_dir.
// Returns the path of index.tsv.
fs::path build_dataset(const SourceBank& bank, const AugmentationSpec& spec, const DatasetCounts& counts,
                       const fs::path& out_dir);

struct Dataset {
  fs::path root;
  std::vector<IndexRecord> records;

  std::vector<IndexRecord> split(const std::string& name) const;
  fs::path resolve(const IndexRecord& r) const { return root / r.path; }
};

// Reads index.tsv (or a directory containing it).
Dataset read_index(const fs::path& path);
void write_index(const fs::path& path, const std::vector<IndexRecord>& records);

// Parsed provenance.tsv, keyed by example path in file order.
struct ProvenanceRecord {
  fs::path example;
  ProvenanceEntry entry;
};
std::vector<ProvenanceRecord> read_provenance(const fs::path& path);

// --- synthetic fixture corpus ---------------------------------------------------

struct FixtureConfig {
  std::size_t cough_files = 48;
  std::size_t other_files = 64;
  std::uint64_t seed = 0;
  int sample_rate = 16000;
};

// Cough surrogate: 1-3 exponentially decaying broadband bursts of 0.3-0.5 s.
AudioClip fixture_cough(SplitMix64& rng, int sample_rate);
// Non-cough: tone cluster, chirp or steady low-passed noise, chosen by `variant` % 3.
AudioClip fixture_other(SplitMix64& rng, int sample_rate, std::size_t variant);

// Writes root/cough/*.wav and root/other/*.wav and returns their manifest.
CorpusManifest generate_fixture_corpus(const fs::path& root, const FixtureConfig& cfg);

}  // namespace stain::dataset
