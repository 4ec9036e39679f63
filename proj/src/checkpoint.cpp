#include <charconv>
#include <cstdio>
#include <sstream>

#include "binio.hpp"
#include "stain/error.hpp"
#include "stain/models.hpp"

// Layout: "RSPN1\n", key=value header lines, "params=N", one "param <name>
// <rank> <dims...>" line per tensor, "end\n", then little-endian f64 data in
// the same order.

namespace stain::models {

namespace {

constexpr std::string_view kMagic = "RSPN1\n";

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || p != end) throw DataError("checkpoint: bad value for '" + key + "': '" + text + "'");
  return v;
}

}  // namespace

std::optional<std::string> Checkpoint::meta(std::string_view key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return std::nullopt;
}

Model Checkpoint::model() const { return Model::from_parameters(config, params); }

Checkpoint make_checkpoint(const Model& model, std::vector<std::pair<std::string, std::string>> metadata) {
  Checkpoint c{model.config(), {}, std::move(metadata)};
  for (const auto& p : model.parameters()) c.params.emplace_back(p.name, p.value);
  return c;
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  const ModelConfig& c = ckpt.config;
  std::ostringstream h;
  h << kMagic;
  h << "kind=" << to_string(c.kind) << '\n';
  h << "encoder=" << to_string(c.encoder) << '\n';
  h << "sample_rate=" << c.stft.sample_rate << '\n';
  h << "window_len=" << c.stft.window_len << '\n';
  h << "hop=" << c.stft.hop << '\n';
  h << "fft_len=" << c.stft.fft_len << '\n';
  h << "kept_bins=" << c.stft.kept_bins << '\n';
  h << "conv1_channels=" << c.conv1_channels << '\n';
  h << "conv2_channels=" << c.conv2_channels << '\n';
  h << "dense_hidden=" << c.dense_hidden << '\n';
  h << "rnn_hidden=" << c.rnn_hidden << '\n';
  h << "feature_mean=" << fmt_double(c.feature_mean) << '\n';
  h << "feature_std=" << fmt_double(c.feature_std) << '\n';
  for (const auto& [k, v] : ckpt.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint metadata '" + k + "' contains '=' or a newline");
    }
    h << "meta." << k << '=' << v << '\n';
  }
  h << "params=" << ckpt.params.size() << '\n';
  for (const auto& p : ckpt.params) {
    h << "param " << p.name << ' ' << p.value.rank();
    for (std::size_t d : p.value.shape()) h << ' ' << d;
    h << '\n';
  }
  h << "end\n";
  const std::string header = h.str();
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (const auto& p : ckpt.params) {
    for (double v : p.value.data()) binio::put_f64(out, v);
  }
  return out;
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
  const std::string_view all(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (!all.starts_with(kMagic)) throw DataError("checkpoint: bad magic (not a checkpoint file)");
  std::size_t pos = kMagic.size();
  auto next_line = [&]() -> std::string {
    const std::size_t nl = all.find('\n', pos);
    if (nl == std::string_view::npos) throw DataError("checkpoint: truncated header");
    std::string line(all.substr(pos, nl - pos));
    pos = nl + 1;
    return line;
  };

  Checkpoint ckpt;
  ModelConfig& c = ckpt.config;
  std::size_t n_params = 0;
  bool have_params = false;
  while (!have_params) {
    const std::string line = next_line();
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint: malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "kind") c.kind = parse_model_kind(val);
    else if (key == "encoder") c.encoder = parse_encoder_kind(val);
    else if (key == "sample_rate") c.stft.sample_rate = parse_number<int>(key, val);
    else if (key == "window_len") c.stft.window_len = parse_number<std::size_t>(key, val);
    else if (key == "hop") c.stft.hop = parse_number<std::size_t>(key, val);
    else if (key == "fft_len") c.stft.fft_len = parse_number<std::size_t>(key, val);
    else if (key == "kept_bins") c.stft.kept_bins = parse_number<std::size_t>(key, val);
    else if (key == "conv1_channels") c.conv1_channels = parse_number<std::size_t>(key, val);
    else if (key == "conv2_channels") c.conv2_channels = parse_number<std::size_t>(key, val);
    else if (key == "dense_hidden") c.dense_hidden = parse_number<std::size_t>(key, val);
    else if (key == "rnn_hidden") c.rnn_hidden = parse_number<std::size_t>(key, val);
    else if (key == "feature_mean") c.feature_mean = parse_number<double>(key, val);
    else if (key == "feature_std") c.feature_std = parse_number<double>(key, val);
    else if (key.starts_with("meta.")) ckpt.metadata.emplace_back(key.substr(5), val);
    else if (key == "params") {
      n_params = parse_number<std::size_t>(key, val);
      have_params = true;
    } else {
      throw DataError("checkpoint: unknown header key '" + key + "'");
    }
  }

  std::vector<std::pair<std::string, numerics::Shape>> shapes;
  for (std::size_t i = 0; i < n_params; ++i) {
    std::istringstream ls(next_line());
    std::string tag, name;
    std::size_t rank = 0;
    ls >> tag >> name >> rank;
    if (!ls || tag != "param" || rank < 1 || rank > 4) throw DataError("checkpoint: malformed param line " + std::to_string(i));
    numerics::Shape s(rank);
    for (auto& d : s) ls >> d;
    if (!ls) throw DataError("checkpoint: malformed shape for parameter '" + name + "'");
    shapes.emplace_back(name, s);
  }
  if (next_line() != "end") throw DataError("checkpoint: missing 'end' after parameter list");

  std::size_t need = 0;
  for (const auto& [_, s] : shapes) need += numerics::shape_volume(s) * 8;
  if (bytes.size() - pos != need) {
    throw DataError("checkpoint: expected " + std::to_string(need) + " bytes of weights, found " +
                    std::to_string(bytes.size() - pos));
  }
  const std::uint8_t* p = bytes.data() + pos;
  for (auto& [name, s] : shapes) {
    Tensor t(s);
    for (auto& v : t.data()) {
      v = binio::get_f64(p);
      p += 8;
    }
    ckpt.params.emplace_back(name, std::move(t));
  }
  // Validate against the architecture now so a bad file fails at load time.
  (void)Model::from_parameters(ckpt.config, ckpt.params);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  binio::write_file(path, serialize(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize(binio::read_file(path)); }

}  // namespace stain::models
