#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dpe/energy.hpp"
#include "dpe/error.hpp"
#include "dpe/image_plane.hpp"
#include "dpe/propagation.hpp"

namespace dpe {

// ---------------------------------------------------------------------------
// Binary PGM (P5) / PPM (P6). Samples are scaled to [0, 1] by maxval.

namespace detail {

inline std::size_t skip_space_and_comments(const std::vector<unsigned char>& b, std::size_t pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  return pos;
}

inline unsigned long read_header_number(const std::vector<unsigned char>& b, std::size_t& pos,
                                        const char* what) {
  pos = skip_space_and_comments(b, pos);
  const std::size_t start = pos;
  unsigned long v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos] - '0');
    if (v > 1'000'000'000UL) throw FormatError(std::string("malformed header: ") + what + " too large");
    ++pos;
  }
  if (pos == start) throw FormatError(std::string("malformed header: missing ") + what);
  return v;
}

}  // namespace detail

inline ImagePlane decode_pnm(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("malformed header: expected P5 or P6 magic");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  const auto width = detail::read_header_number(bytes, pos, "width");
  const auto height = detail::read_header_number(bytes, pos, "height");
  const auto maxval = detail::read_header_number(bytes, pos, "maxval");
  if (width == 0 || height == 0) throw FormatError("malformed header: zero dimension");
  if (maxval == 0 || maxval > 65535) throw FormatError("malformed header: maxval out of range");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FormatError("malformed header: missing separator before payload");
  }
  ++pos;
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t pixels = width * height;
  const std::size_t expected = pixels * channels * sample_bytes;
  if (bytes.size() - pos < expected) {
    throw FormatError("truncated payload at byte offset " + std::to_string(bytes.size()) + ": expected " +
                      std::to_string(pos + expected) + " bytes");
  }
  ImagePlane img(width, height, channels);
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t at = pos + (p * channels + c) * sample_bytes;
      const unsigned v = sample_bytes == 2 ? (unsigned{bytes[at]} << 8) | bytes[at + 1] : bytes[at];
      img[c * pixels + p] = v * scale;
    }
  return img;
}

inline std::vector<unsigned char> encode_pnm(const ImagePlane& img, int bits = 16) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw DimensionError("PNM output needs 1 or 3 channels, got " + std::to_string(img.channels()));
  }
  if (bits != 8 && bits != 16) throw ConfigError("bit depth must be 8 or 16");
  for (double v : img.data()) {
    if (!(v >= -1e-9 && v <= 1.0 + 1e-9)) throw FormatError("cannot write a plane with values outside [0, 1]");
  }
  const unsigned maxval = bits == 16 ? 65535 : 255;
  const std::string header = std::string(img.channels() == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n" +
                             std::to_string(maxval) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  const std::size_t pixels = img.width() * img.height();
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t c = 0; c < img.channels(); ++c) {
      const double v = std::clamp(img[c * pixels + p], 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::lround(v * maxval));
      if (bits == 16) out.push_back(static_cast<unsigned char>(q >> 8));
      out.push_back(static_cast<unsigned char>(q & 0xFF));
    }
  return out;
}

inline ImagePlane read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pnm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_image(const ImagePlane& img, const std::string& path, int bits = 16) {
  const auto bytes = encode_pnm(img, bits);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing image " + path);
}

// ---------------------------------------------------------------------------
// Run configuration: "key = value" lines, '#' starts a comment.

struct RunConfig {
  std::string task;
  std::string input;
  std::string output;
  std::string truth;
  std::string kernel;
  std::string mask;
  std::string weights_dir;
  std::string trace;
  std::string report;
  std::string predictor = "classical";  ///< classical | convnet | identity
  std::uint64_t seed = 0;
  int scale = 2;
  int patch = 7;
  double t_floor = 0.1;
  double classical_scale = 3.0 / 255.0;
  EnergyParams energy;
  PropagationConfig propagation;
  std::set<std::string> explicit_keys;  ///< keys set by a file or flag

  bool is_set(const std::string& key) const { return explicit_keys.count(key) != 0; }
};

namespace detail {

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("key '" + key + "': expected a real number, got '" + v + "'");
  }
  return out;
}

inline long long parse_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Sets one configuration key; throws ConfigError naming the key.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_integer;
  using detail::parse_real;
  auto& p = cfg.propagation;
  if (key == "task") cfg.task = value;
  else if (key == "input") cfg.input = value;
  else if (key == "output") cfg.output = value;
  else if (key == "truth") cfg.truth = value;
  else if (key == "kernel") cfg.kernel = value;
  else if (key == "mask") cfg.mask = value;
  else if (key == "weights_dir") cfg.weights_dir = value;
  else if (key == "trace") cfg.trace = value;
  else if (key == "report") cfg.report = value;
  else if (key == "predictor") {
    if (value != "classical" && value != "convnet" && value != "identity") {
      throw ConfigError("key 'predictor': expected classical, convnet or identity, got '" + value + "'");
    }
    cfg.predictor = value;
  } else if (key == "seed") {
    const long long s = parse_integer(key, value);
    if (s < 0) throw ConfigError("key 'seed': must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(s);
  } else if (key == "scale") cfg.scale = static_cast<int>(parse_integer(key, value));
  else if (key == "patch") cfg.patch = static_cast<int>(parse_integer(key, value));
  else if (key == "t_floor") cfg.t_floor = parse_real(key, value);
  else if (key == "classical_scale") cfg.classical_scale = parse_real(key, value);
  else if (key == "lambda") cfg.energy.lambda = parse_real(key, value);
  else if (key == "theta") cfg.energy.theta = parse_real(key, value);
  else if (key == "alpha") cfg.energy.alpha = parse_real(key, value);
  else if (key == "beta") cfg.energy.beta = parse_real(key, value);
  else if (key == "eta") {
    p.eta_schedule.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) p.eta_schedule.push_back(parse_real(key, detail::trim(item)));
  } else if (key == "c_ratio") p.c_ratio = parse_real(key, value);
  else if (key == "t_max") p.t_max = static_cast<int>(parse_integer(key, value));
  else if (key == "k_max") p.k_max = static_cast<int>(parse_integer(key, value));
  else if (key == "stop_tol") p.stop_tol = parse_real(key, value);
  else if (key == "variant") p.variant = parse_variant(value);
  else if (key == "sigma0") p.schedule.sigma0 = parse_real(key, value);
  else if (key == "rho") p.schedule.rho = parse_real(key, value);
  else throw ConfigError("unknown key '" + key + "'");
  cfg.explicit_keys.insert(key);
}

/// Throws ConfigError naming the first violated constraint.
inline void validate_config(const RunConfig& cfg) {
  const auto& p = cfg.propagation;
  if (!(p.c_ratio > 0.0 && p.c_ratio < 0.5)) {
    throw ConfigError("key 'c_ratio': " + format_real(p.c_ratio) +
                      " is outside the open interval (0, 0.5) required by the error bound c^k < eta^k/2");
  }
  if (p.t_max < 2) throw ConfigError("key 't_max': must be > 1");
  if (p.k_max < 1) throw ConfigError("key 'k_max': must be >= 1");
  if (!(p.stop_tol >= 0.0)) throw ConfigError("key 'stop_tol': must be >= 0");
  for (double e : p.eta_schedule) {
    if (!(e > 0.0)) throw ConfigError("key 'eta': every value must be > 0");
  }
  if (p.eta_schedule.empty()) throw ConfigError("key 'eta': empty schedule");
  if (!(p.schedule.sigma0 > 0.0)) throw ConfigError("key 'sigma0': must be > 0");
  if (!(p.schedule.rho > 0.0 && p.schedule.rho <= 1.0)) throw ConfigError("key 'rho': must lie in (0, 1]");
  if (!(cfg.energy.lambda >= 0.0)) throw ConfigError("key 'lambda': must be >= 0");
  if (!(cfg.energy.theta > 0.0)) throw ConfigError("key 'theta': must be > 0");
  if (!(cfg.energy.alpha < cfg.energy.beta)) throw ConfigError("key 'alpha': must be < beta");
  if (cfg.scale < 2) throw ConfigError("key 'scale': must be >= 2");
  if (cfg.patch < 1 || cfg.patch % 2 == 0) throw ConfigError("key 'patch': must be a positive odd number");
  if (!(cfg.t_floor > 0.0 && cfg.t_floor < 1.0)) throw ConfigError("key 't_floor': must lie in (0, 1)");
  if (!(cfg.classical_scale >= 0.0)) throw ConfigError("key 'classical_scale': must be >= 0");
  const std::pair<const char*, const std::string*> paths[] = {
      {"input", &cfg.input}, {"truth", &cfg.truth}, {"kernel", &cfg.kernel}, {"mask", &cfg.mask},
      {"weights_dir", &cfg.weights_dir}};
  for (const auto& [key, path] : paths) {
    if (!path->empty() && !std::filesystem::exists(*path)) {
      throw ConfigError("key '" + std::string(key) + "': path does not exist: " + *path);
    }
  }
}

/// Applies `text` then `overrides` (flags win), fills defaults and validates.
inline RunConfig parse_config(const std::string& text,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    apply_setting(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  validate_config(cfg);
  return cfg;
}

inline RunConfig parse_config_file(const std::string& path,
                                   const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

}  // namespace dpe
