#pragma once

// Flat key=value experiment configuration with a schema version. Unknown
// keys are errors; missing keys fall back to the desk-scale defaults.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pilotforge/channel.hpp"
#include "pilotforge/channelnet.hpp"
#include "pilotforge/common.hpp"
#include "pilotforge/concrete.hpp"
#include "pilotforge/selector.hpp"

namespace pilotforge::harness {

struct ExperimentConfig {
  int schema_version = 1;
  int nf = 72;
  int nn = 14;

  std::string profile_name = "veha";  // "veha" or "custom"
  std::vector<double> tap_delays_ns = {0, 310, 710, 1090, 1730, 2510};
  std::vector<double> tap_powers_db = {0, -1, -9, -10, -15, -20};
  double carrier_hz = 2.1e9;
  double spacing_hz = 15e3;
  double symbol_s = 1e-3 / 14.0;
  double speed_kmh = 50.0;

  int train_count = 3200;
  int val_count = 400;
  int test_count = 400;
  std::uint64_t seed = 1;

  std::vector<float> snr_list_db = {0, 3, 6, 9, 12, 15, 18, 21, 24, 27, 30};
  double snr_window_boundary_db = 15.0;
  std::vector<int> np_list = {8, 16, 32, 48};

  double selector_t0 = 10.0;
  double selector_tb = 0.01;
  int selector_epochs = 100;
  double selector_lr = 1e-3;
  int selector_batch = 32;

  std::vector<int> decoder_hidden = {256, 512, 1024};
  double decoder_dropout = 0.1;
  double decoder_slope = 0.2;

  int e2e_epochs = 150;
  double e2e_lr = 1e-3;
  int e2e_batch = 32;
  bool finetune_decoder = true;

  std::vector<int> srcnn_filters = {64, 32};
  std::vector<int> srcnn_kernels = {9, 1, 5};
  int dncnn_depth = 8;
  int dncnn_filters = 16;

  std::string out_dir = "out";

  void validate() const {
    if (schema_version != 1)
      throw ValidationError("config: unsupported schema_version " +
                            std::to_string(schema_version));
    if (nf < 1 || nn < 1) throw ValidationError("config: grid dimensions must be >= 1");
    if (profile_name != "veha" && profile_name != "custom")
      throw ValidationError("config: profile.name must be 'veha' or 'custom'");
    if (train_count < 1 || val_count < 1 || test_count < 1)
      throw ValidationError("config: dataset counts must be positive");
    if (snr_list_db.empty()) throw ValidationError("config: snr.list_db is empty");
    if (np_list.empty()) throw ValidationError("config: np.list is empty");
    for (int np : np_list) {
      if (np < 2 || np % 2 != 0)
        throw ValidationError("config: np values must be even and >= 2, got " +
                              std::to_string(np));
      if (np > nf * nn)
        throw ValidationError("config: np " + std::to_string(np) + " exceeds grid size");
    }
    if (!(selector_t0 > selector_tb && selector_tb > 0))
      throw ValidationError("config: selector temperatures require t0 > tb > 0");
    if (selector_epochs < 1 || e2e_epochs < 1)
      throw ValidationError("config: epoch counts must be >= 1");
    if (selector_batch < 1 || e2e_batch < 1)
      throw ValidationError("config: batch sizes must be >= 1");
    if (decoder_dropout < 0 || decoder_dropout >= 1)
      throw ValidationError("config: decoder.dropout must lie in [0,1)");
    if (decoder_hidden.empty()) throw ValidationError("config: decoder.hidden is empty");
    if (srcnn_kernels.size() != srcnn_filters.size() + 1)
      throw ValidationError("config: srcnn.kernels must be one longer than srcnn.filters");
    if (dncnn_depth < 2) throw ValidationError("config: dncnn.depth must be >= 2");
    if (dncnn_filters < 1) throw ValidationError("config: dncnn.filters must be >= 1");
    if (out_dir.empty()) throw ValidationError("config: out.dir is empty");
    sim_profile().validate();
  }

  sim::ChannelProfile sim_profile() const {
    sim::ChannelProfile p;
    if (profile_name == "veha") {
      p = sim::ChannelProfile::veha();
    } else {
      p.tap_delays_s.clear();
      for (double d : tap_delays_ns) p.tap_delays_s.push_back(d * 1e-9);
      p.tap_powers_db = tap_powers_db;
    }
    p.carrier_hz = carrier_hz;
    p.spacing_hz = spacing_hz;
    p.symbol_s = symbol_s;
    p.speed_mps = speed_kmh / 3.6;
    return p;
  }

  pilots::AnnealSchedule anneal_schedule() const {
    return pilots::AnnealSchedule{selector_t0, selector_tb, selector_epochs};
  }

  pilots::DecoderSpec decoder_spec() const {
    return pilots::DecoderSpec{decoder_hidden, decoder_slope, decoder_dropout};
  }

  cnet::PipelineSpec pipeline_spec() const {
    cnet::PipelineSpec s;
    s.srcnn.filters = srcnn_filters;
    s.srcnn.kernels = srcnn_kernels;
    s.dncnn.depth = dncnn_depth;
    s.dncnn.filters = dncnn_filters;
    s.decoder = decoder_spec();
    s.finetune_decoder = finetune_decoder;
    s.lr = e2e_lr;
    s.batch = e2e_batch;
    s.epochs = e2e_epochs;
    return s;
  }

  // Canonical serialized form; the manifest hash is the CRC32 of this.
  std::string canonical_text() const;

  std::uint32_t hash() const { return crc32(canonical_text()); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_scalar(const std::string& key, const std::string& v);

template <>
inline double parse_scalar<double>(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double r = 0;
  try {
    r = std::stod(v, &pos);
  } catch (...) {
    throw ValidationError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
  if (pos != v.size())
    throw ValidationError("config: key '" + key + "' has trailing characters: '" + v + "'");
  return r;
}

template <>
inline int parse_scalar<int>(const std::string& key, const std::string& v) {
  const double d = parse_scalar<double>(key, v);
  const int i = static_cast<int>(d);
  if (double(i) != d)
    throw ValidationError("config: key '" + key + "' expects an integer, got '" + v + "'");
  return i;
}

template <>
inline std::uint64_t parse_scalar<std::uint64_t>(const std::string& key,
                                                 const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw ValidationError("config: key '" + key + "' expects an unsigned integer, got '" +
                          v + "'");
  }
}

template <>
inline bool parse_scalar<bool>(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty())
      throw ValidationError("config: key '" + key + "' has an empty list element");
    out.push_back(static_cast<T>(parse_scalar<double>(key, item)));
  }
  if (out.empty()) throw ValidationError("config: key '" + key + "' expects a list");
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::string& origin = "<memory>") {
  ExperimentConfig c;
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config: " + origin + ":" + std::to_string(lineno) +
                            ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (kv.count(key))
      throw ValidationError("config: duplicate key '" + key + "' in " + origin);
    kv[key] = val;
  }

  using detail::parse_list;
  using detail::parse_scalar;
  for (const auto& [key, val] : kv) {
    if (key == "schema_version") c.schema_version = parse_scalar<int>(key, val);
    else if (key == "grid.nf") c.nf = parse_scalar<int>(key, val);
    else if (key == "grid.nn") c.nn = parse_scalar<int>(key, val);
    else if (key == "profile.name") c.profile_name = val;
    else if (key == "profile.tap_delays_ns") c.tap_delays_ns = parse_list<double>(key, val);
    else if (key == "profile.tap_powers_db") c.tap_powers_db = parse_list<double>(key, val);
    else if (key == "profile.carrier_hz") c.carrier_hz = parse_scalar<double>(key, val);
    else if (key == "profile.spacing_hz") c.spacing_hz = parse_scalar<double>(key, val);
    else if (key == "profile.symbol_s") c.symbol_s = parse_scalar<double>(key, val);
    else if (key == "profile.speed_kmh") c.speed_kmh = parse_scalar<double>(key, val);
    else if (key == "dataset.train") c.train_count = parse_scalar<int>(key, val);
    else if (key == "dataset.val") c.val_count = parse_scalar<int>(key, val);
    else if (key == "dataset.test") c.test_count = parse_scalar<int>(key, val);
    else if (key == "dataset.seed") c.seed = parse_scalar<std::uint64_t>(key, val);
    else if (key == "snr.list_db") c.snr_list_db = parse_list<float>(key, val);
    else if (key == "snr.window_boundary_db")
      c.snr_window_boundary_db = parse_scalar<double>(key, val);
    else if (key == "np.list") c.np_list = parse_list<int>(key, val);
    else if (key == "selector.t0") c.selector_t0 = parse_scalar<double>(key, val);
    else if (key == "selector.tb") c.selector_tb = parse_scalar<double>(key, val);
    else if (key == "selector.epochs") c.selector_epochs = parse_scalar<int>(key, val);
    else if (key == "selector.lr") c.selector_lr = parse_scalar<double>(key, val);
    else if (key == "selector.batch") c.selector_batch = parse_scalar<int>(key, val);
    else if (key == "decoder.hidden") c.decoder_hidden = parse_list<int>(key, val);
    else if (key == "decoder.dropout") c.decoder_dropout = parse_scalar<double>(key, val);
    else if (key == "decoder.slope") c.decoder_slope = parse_scalar<double>(key, val);
    else if (key == "e2e.epochs") c.e2e_epochs = parse_scalar<int>(key, val);
    else if (key == "e2e.lr") c.e2e_lr = parse_scalar<double>(key, val);
    else if (key == "e2e.batch") c.e2e_batch = parse_scalar<int>(key, val);
    else if (key == "e2e.finetune_decoder") c.finetune_decoder = parse_scalar<bool>(key, val);
    else if (key == "srcnn.filters") c.srcnn_filters = parse_list<int>(key, val);
    else if (key == "srcnn.kernels") c.srcnn_kernels = parse_list<int>(key, val);
    else if (key == "dncnn.depth") c.dncnn_depth = parse_scalar<int>(key, val);
    else if (key == "dncnn.filters") c.dncnn_filters = parse_scalar<int>(key, val);
    else if (key == "out.dir") c.out_dir = val;
    else
      throw ValidationError("config: unknown key '" + key + "' in " + origin);
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

inline std::string ExperimentConfig::canonical_text() const {
  std::ostringstream os;
  os.precision(17);
  auto list_d = [&](const std::vector<double>& v) {
    std::ostringstream s;
    s.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  auto list_f = [&](const std::vector<float>& v) {
    std::ostringstream s;
    s.precision(9);
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  auto list_i = [&](const std::vector<int>& v) {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  os << "schema_version=" << schema_version << "\n";
  os << "grid.nf=" << nf << "\n";
  os << "grid.nn=" << nn << "\n";
  os << "profile.name=" << profile_name << "\n";
  os << "profile.tap_delays_ns=" << list_d(tap_delays_ns) << "\n";
  os << "profile.tap_powers_db=" << list_d(tap_powers_db) << "\n";
  os << "profile.carrier_hz=" << carrier_hz << "\n";
  os << "profile.spacing_hz=" << spacing_hz << "\n";
  os << "profile.symbol_s=" << symbol_s << "\n";
  os << "profile.speed_kmh=" << speed_kmh << "\n";
  os << "dataset.train=" << train_count << "\n";
  os << "dataset.val=" << val_count << "\n";
  os << "dataset.test=" << test_count << "\n";
  os << "dataset.seed=" << seed << "\n";
  os << "snr.list_db=" << list_f(snr_list_db) << "\n";
  os << "snr.window_boundary_db=" << snr_window_boundary_db << "\n";
  os << "np.list=" << list_i(np_list) << "\n";
  os << "selector.t0=" << selector_t0 << "\n";
  os << "selector.tb=" << selector_tb << "\n";
  os << "selector.epochs=" << selector_epochs << "\n";
  os << "selector.lr=" << selector_lr << "\n";
  os << "selector.batch=" << selector_batch << "\n";
  os << "decoder.hidden=" << list_i(decoder_hidden) << "\n";
  os << "decoder.dropout=" << decoder_dropout << "\n";
  os << "decoder.slope=" << decoder_slope << "\n";
  os << "e2e.epochs=" << e2e_epochs << "\n";
  os << "e2e.lr=" << e2e_lr << "\n";
  os << "e2e.batch=" << e2e_batch << "\n";
  os << "e2e.finetune_decoder=" << (finetune_decoder ? "true" : "false") << "\n";
  os << "srcnn.filters=" << list_i(srcnn_filters) << "\n";
  os << "srcnn.kernels=" << list_i(srcnn_kernels) << "\n";
  os << "dncnn.depth=" << dncnn_depth << "\n";
  os << "dncnn.filters=" << dncnn_filters << "\n";
  os << "out.dir=" << out_dir << "\n";
  return os.str();
}

}  // namespace pilotforge::harness
