// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "seld/error.hpp"

namespace seld {

enum class ModelKind { seldnet, seldtcn };

inline const char* to_string(ModelKind k) { return k == ModelKind::seldnet ? "seldnet" : "seldtcn"; }

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "seldnet") return ModelKind::seldnet;
  if (s == "seldtcn") return ModelKind::seldtcn;
  throw ConfigError("unknown model kind '" + s + "' (expected seldnet or seldtcn)");
}

/// Architecture hyperparameters shared by both models.
struct ModelConfig {
  std::size_t n_sed = 11;
  std::size_t n_feature_channels = 8;
  std::size_t n_bins = 256;
  std::size_t conv_filters = 64;
  std::vector<std::size_t> pool_schedule = {8, 8, 2};
  std::size_t rnn_hidden = 128;
  std::size_t tcn_filters = 256;
  std::size_t tcn_blocks = 10;
  std::size_t tcn_out_filters = 128;
  std::size_t fc_units = 128;
  std::size_t seq_len = 512;
  double dropout_rate = 0.5;
  double loss_weight_doa = 1.0;

  std::size_t pooled_bins() const {
    std::size_t f = n_bins;
    for (auto p : pool_schedule) f /= p;
    return f;
  }

  /// Width of the per-frame vector leaving the convolutional front end.
  std::size_t frontend_features() const { return conv_filters * pooled_bins(); }

  std::size_t dilation(std::size_t block) const { return std::size_t{1} << block; }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(n_sed, "n_sed");
    positive(n_feature_channels, "n_feature_channels");
    positive(n_bins, "n_bins");
    positive(conv_filters, "conv_filters");
    positive(rnn_hidden, "rnn_hidden");
    positive(tcn_filters, "tcn_filters");
    positive(tcn_out_filters, "tcn_out_filters");
    positive(fc_units, "fc_units");
    positive(seq_len, "seq_len");
    if (pool_schedule.empty()) throw ConfigError("pool_schedule must not be empty");
    std::size_t product = 1;
    for (auto p : pool_schedule) {
      positive(p, "pool_schedule entry");
      product *= p;
    }
    if (n_bins % product != 0)
      throw ConfigError("n_bins " + std::to_string(n_bins) +
                        " is not divisible by the pooling product " + std::to_string(product));
    if (tcn_blocks == 0 || tcn_blocks > 16) throw ConfigError("tcn_blocks must lie in [1, 16]");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw ConfigError("dropout_rate must lie in [0, 1)");
    if (!(loss_weight_doa >= 0.0) || !std::isfinite(loss_weight_doa))
      throw ConfigError("loss_weight_doa must be finite and non-negative");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Everything a training run reads from its config file.
struct RunConfig {
  ModelConfig model;
  std::uint32_t sample_rate_hz = 16000;
  std::string dataset_dir;
  std::size_t epochs = 500;
  std::size_t batch_size = 16;
  std::size_t patience = 50;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename U>
U parse_number(const std::string& key, const std::string& text) {
  U value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  std::from_chars_result r;
  if constexpr (std::is_floating_point_v<U>) {
    char* end = nullptr;
    value = static_cast<U>(std::strtod(text.c_str(), &end));
    r.ptr = end;
    r.ec = end == first ? std::errc::invalid_argument : std::errc{};
  } else {
    r = std::from_chars(first, last, value);
  }
  if (r.ec != std::errc{} || r.ptr != last)
    throw ConfigError("bad value for '" + key + "': '" + text + "'");
  return value;
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item)));
  return out;
}

}  // namespace detail

/// Parses flat `key = value` lines; `#` starts a comment. Unknown keys are
/// rejected so typos do not silently fall back to defaults.
inline RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg;
  auto& m = cfg.model;
  using detail::parse_number;
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
      {"n_sed", [&](auto& k, auto& v) { m.n_sed = parse_number<std::size_t>(k, v); }},
      {"n_feature_channels", [&](auto& k, auto& v) { m.n_feature_channels = parse_number<std::size_t>(k, v); }},
      {"n_bins", [&](auto& k, auto& v) { m.n_bins = parse_number<std::size_t>(k, v); }},
      {"conv_filters", [&](auto& k, auto& v) { m.conv_filters = parse_number<std::size_t>(k, v); }},
      {"pool_schedule", [&](auto& k, auto& v) { m.pool_schedule = detail::parse_list(k, v); }},
      {"rnn_hidden", [&](auto& k, auto& v) { m.rnn_hidden = parse_number<std::size_t>(k, v); }},
      {"tcn_filters", [&](auto& k, auto& v) { m.tcn_filters = parse_number<std::size_t>(k, v); }},
      {"tcn_blocks", [&](auto& k, auto& v) { m.tcn_blocks = parse_number<std::size_t>(k, v); }},
      {"tcn_out_filters", [&](auto& k, auto& v) { m.tcn_out_filters = parse_number<std::size_t>(k, v); }},
      {"fc_units", [&](auto& k, auto& v) { m.fc_units = parse_number<std::size_t>(k, v); }},
      {"seq_len", [&](auto& k, auto& v) { m.seq_len = parse_number<std::size_t>(k, v); }},
      {"dropout_rate", [&](auto& k, auto& v) { m.dropout_rate = parse_number<double>(k, v); }},
      {"loss_weight_doa", [&](auto& k, auto& v) { m.loss_weight_doa = parse_number<double>(k, v); }},
      {"sample_rate_hz", [&](auto& k, auto& v) { cfg.sample_rate_hz = parse_number<std::uint32_t>(k, v); }},
      {"dataset_dir", [&](auto&, auto& v) { cfg.dataset_dir = v; }},
      {"epochs", [&](auto& k, auto& v) { cfg.epochs = parse_number<std::size_t>(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { cfg.batch_size = parse_number<std::size_t>(k, v); }},
      {"patience", [&](auto& k, auto& v) { cfg.patience = parse_number<std::size_t>(k, v); }},
      {"seed", [&](auto& k, auto& v) { cfg.seed = parse_number<std::uint64_t>(k, v); }},
      {"learning_rate", [&](auto& k, auto& v) { cfg.learning_rate = parse_number<double>(k, v); }},
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end())
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second(key, value);
  }
  if (cfg.sample_rate_hz == 0) throw ConfigError("sample_rate_hz must be positive");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  m.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  return parse_run_config(in);
}

inline std::string format_model_config(const ModelConfig& m) {
  std::ostringstream os;
  os.precision(17);
  os << "n_sed = " << m.n_sed << "\n"
     << "n_feature_channels = " << m.n_feature_channels << "\n"
     << "n_bins = " << m.n_bins << "\n"
     << "conv_filters = " << m.conv_filters << "\n"
     << "pool_schedule = ";
  for (std::size_t i = 0; i < m.pool_schedule.size(); ++i)
    os << (i ? "," : "") << m.pool_schedule[i];
  os << "\n"
     << "rnn_hidden = " << m.rnn_hidden << "\n"
     << "tcn_filters = " << m.tcn_filters << "\n"
     << "tcn_blocks = " << m.tcn_blocks << "\n"
     << "tcn_out_filters = " << m.tcn_out_filters << "\n"
     << "fc_units = " << m.fc_units << "\n"
     << "seq_len = " << m.seq_len << "\n"
     << "dropout_rate = " << m.dropout_rate << "\n"
     << "loss_weight_doa = " << m.loss_weight_doa << "\n";
  return os.str();
}

}  // namespace seld
