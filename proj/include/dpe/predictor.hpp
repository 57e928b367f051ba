#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dpe/error.hpp"
#include "dpe/image_plane.hpp"

namespace dpe {

/// One convolution of the residual network. Batch normalization is already
/// folded into `weights` and `bias`.
struct ConvLayer {
  std::uint32_t in_channels = 0;
  std::uint32_t out_channels = 0;
  std::uint32_t kernel_height = 3;
  std::uint32_t kernel_width = 3;
  std::uint32_t dilation = 1;
  std::vector<float> weights;  ///< [out][in][kh][kw]
  std::vector<float> bias;     ///< [out]

  std::size_t weight_count() const {
    return std::size_t{out_channels} * in_channels * kernel_height * kernel_width;
  }

  float weight(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
    return weights[((o * in_channels + i) * kernel_height + ky) * kernel_width + kx];
  }

  bool operator==(const ConvLayer&) const = default;
};

/// Dilation pattern of the seven-layer residual stack.
inline constexpr std::uint32_t kDilationPattern[7] = {1, 2, 3, 4, 3, 2, 1};

/// Separable Gaussian blur with clamp-to-edge boundary; preserves constants.
inline ImagePlane gaussian_blur(const ImagePlane& x, double sigma) {
  if (!(sigma > 0.0)) return x;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += taps[static_cast<std::size_t>(i + radius)];
  }
  for (double& t : taps) t /= total;

  const long w = static_cast<long>(x.width()), h = static_cast<long>(x.height());
  ImagePlane tmp(x.shape()), out(x.shape());
  for (std::size_t c = 0; c < x.channels(); ++c) {
    for (long y = 0; y < h; ++y)
      for (long i = 0; i < w; ++i) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const long j = std::clamp(i + k, 0L, w - 1);
          s += taps[static_cast<std::size_t>(k + radius)] *
               x.at(static_cast<std::size_t>(j), static_cast<std::size_t>(y), c);
        }
        tmp.at(static_cast<std::size_t>(i), static_cast<std::size_t>(y), c) = s;
      }
    for (long y = 0; y < h; ++y)
      for (long i = 0; i < w; ++i) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const long j = std::clamp(y + k, 0L, h - 1);
          s += taps[static_cast<std::size_t>(k + radius)] *
               tmp.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j), c);
        }
        out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(y), c) = s;
      }
  }
  return out;
}

/// Residual direction estimator N(x). The descent step is x − N(x).
class Predictor {
 public:
  enum class Kind { identity, conv_net, classical };

  /// Zero residual; descent_step is the identity map.
  static Predictor identity() { return Predictor(Kind::identity); }

  /// N(x) = x − blur(x, sigma).
  static Predictor classical(double sigma) {
    if (!(sigma >= 0.0)) throw ConfigError("classical predictor sigma must be >= 0");
    Predictor p(Kind::classical);
    p.sigma_ = sigma;
    return p;
  }

  static Predictor conv_net(std::vector<ConvLayer> layers) {
    validate_layers(layers);
    Predictor p(Kind::conv_net);
    p.layers_ = std::move(layers);
    return p;
  }

  Kind kind() const { return kind_; }
  double sigma() const { return sigma_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }

  /// Channel count the network expects, 0 when any count is accepted.
  std::size_t channels() const {
    return kind_ == Kind::conv_net ? layers_.front().in_channels : 0;
  }

  ImagePlane predict_residual(const ImagePlane& x) const {
    switch (kind_) {
      case Kind::identity:
        return ImagePlane(x.shape());
      case Kind::classical:
        return x - gaussian_blur(x, sigma_);
      case Kind::conv_net:
        return run_network(x);
    }
    return ImagePlane(x.shape());
  }

  ImagePlane descent_step(const ImagePlane& x) const { return x - predict_residual(x); }

  static void validate_layers(const std::vector<ConvLayer>& layers) {
    if (layers.empty()) throw FormatError("network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const ConvLayer& layer = layers[l];
      const std::string where = "layer " + std::to_string(l);
      if (layer.in_channels == 0 || layer.out_channels == 0 || layer.dilation == 0 ||
          layer.kernel_height % 2 == 0 || layer.kernel_width % 2 == 0) {
        throw FormatError(where + ": invalid dimensions");
      }
      if (layer.weights.size() != layer.weight_count() || layer.bias.size() != layer.out_channels) {
        throw FormatError(where + ": tensor size mismatch");
      }
      const auto finite = [](float v) { return std::isfinite(v); };
      if (!std::ranges::all_of(layer.weights, finite) || !std::ranges::all_of(layer.bias, finite)) {
        throw FormatError(where + ": non-finite weight");
      }
      if (l + 1 < layers.size() && layer.out_channels != layers[l + 1].in_channels) {
        throw FormatError(where + ": output channels do not match next layer input");
      }
    }
    if (layers.front().in_channels != layers.back().out_channels) {
      throw FormatError("network input and output channel counts differ");
    }
  }

 private:
  explicit Predictor(Kind kind) : kind_(kind) {}

  // Zero-padded dilated convolutions; ReLU after every layer but the last.
  ImagePlane run_network(const ImagePlane& x) const {
    if (channels() == 1 && x.channels() > 1) {
      ImagePlane out(x.shape());
      for (std::size_t c = 0; c < x.channels(); ++c) {
        out.set_channel(c, run_network(x.extract_channel(c)));
      }
      return out;
    }
    if (x.channels() != channels()) {
      throw DimensionError("predictor expects " + std::to_string(channels()) +
                           " channels, plane has " + std::to_string(x.channels()));
    }
    const long w = static_cast<long>(x.width()), h = static_cast<long>(x.height());
    const std::size_t plane = x.width() * x.height();
    std::vector<double> act(x.data().begin(), x.data().end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const ConvLayer& layer = layers_[l];
      std::vector<double> out(layer.out_channels * plane);
      for (std::size_t o = 0; o < layer.out_channels; ++o) {
        double* dst = out.data() + o * plane;
        std::fill(dst, dst + plane, static_cast<double>(layer.bias[o]));
        for (std::size_t i = 0; i < layer.in_channels; ++i) {
          const double* src = act.data() + i * plane;
          for (std::size_t ky = 0; ky < layer.kernel_height; ++ky) {
            const long dy = (static_cast<long>(ky) - static_cast<long>(layer.kernel_height / 2)) *
                            static_cast<long>(layer.dilation);
            for (std::size_t kx = 0; kx < layer.kernel_width; ++kx) {
              const double wv = layer.weight(o, i, ky, kx);
              if (wv == 0.0) continue;
              const long dx = (static_cast<long>(kx) - static_cast<long>(layer.kernel_width / 2)) *
                              static_cast<long>(layer.dilation);
              const long x0 = std::max(0L, -dx), x1 = std::min(w, w - dx);
              for (long y = std::max(0L, -dy); y < std::min(h, h - dy); ++y) {
                double* drow = dst + y * w;
                const double* srow = src + (y + dy) * w + dx;
                for (long xx = x0; xx < x1; ++xx) drow[xx] += wv * srow[xx];
              }
            }
          }
        }
      }
      if (l + 1 < layers_.size()) {
        for (double& v : out) v = std::max(v, 0.0);
      }
      act = std::move(out);
    }
    return ImagePlane(x.shape(), std::move(act));
  }

  Kind kind_;
  double sigma_ = 0.0;
  std::vector<ConvLayer> layers_;
};

// ---------------------------------------------------------------------------
// Weight files: magic "DPEW", u32 version = 1, u32 layer_count, then per layer
// u32 in_ch, out_ch, kh, kw, dilation, f32 weights [out][in][kh][kw], f32
// bias[out]. Everything little-endian.

inline constexpr char kWeightMagic[4] = {'D', 'P', 'E', 'W'};
inline constexpr std::uint32_t kWeightVersion = 1;

namespace detail {

template <typename T>
T from_little_endian(const unsigned char* p) {
  static_assert(sizeof(T) == 4);
  std::uint32_t v = std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
                    (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
  return std::bit_cast<T>(v);
}

template <typename T>
void to_little_endian(T value, std::vector<unsigned char>& out) {
  const auto v = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  template <typename T>
  T read(const std::string& what) {
    if (pos_ + 4 > bytes_.size()) {
      throw FormatError("truncated weight file: " + what + " at byte " + std::to_string(pos_));
    }
    const T v = from_little_endian<T>(bytes_.data() + pos_);
    pos_ += 4;
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> encode_weights(const Predictor& p) {
  if (p.kind() != Predictor::Kind::conv_net) {
    throw FormatError("only convolutional predictors can be serialized");
  }
  std::vector<unsigned char> out(std::begin(kWeightMagic), std::end(kWeightMagic));
  detail::to_little_endian(kWeightVersion, out);
  detail::to_little_endian(static_cast<std::uint32_t>(p.layers().size()), out);
  for (const ConvLayer& l : p.layers()) {
    for (auto v : {l.in_channels, l.out_channels, l.kernel_height, l.kernel_width, l.dilation}) {
      detail::to_little_endian(v, out);
    }
    for (float v : l.weights) detail::to_little_endian(v, out);
    for (float v : l.bias) detail::to_little_endian(v, out);
  }
  return out;
}

inline Predictor decode_weights(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kWeightMagic), std::end(kWeightMagic), bytes.begin())) {
    throw FormatError("bad magic: not a DPEW weight file");
  }
  detail::ByteReader in(bytes);
  in.read<std::uint32_t>("magic");
  const auto version = in.read<std::uint32_t>("version");
  if (version != kWeightVersion) {
    throw FormatError("unsupported weight file version " + std::to_string(version));
  }
  const auto count = in.read<std::uint32_t>("layer count");
  if (count == 0 || count > 256) throw FormatError("implausible layer count " + std::to_string(count));

  std::vector<ConvLayer> layers(count);
  for (std::uint32_t l = 0; l < count; ++l) {
    ConvLayer& layer = layers[l];
    const std::string where = "layer " + std::to_string(l);
    layer.in_channels = in.read<std::uint32_t>(where + " header");
    layer.out_channels = in.read<std::uint32_t>(where + " header");
    layer.kernel_height = in.read<std::uint32_t>(where + " header");
    layer.kernel_width = in.read<std::uint32_t>(where + " header");
    layer.dilation = in.read<std::uint32_t>(where + " header");
    const std::size_t n = layer.weight_count();
    if (layer.in_channels > 4096 || layer.out_channels > 4096 || layer.kernel_height > 31 ||
        layer.kernel_width > 31 || (n + layer.out_channels) * 4 > in.remaining()) {
      throw FormatError("truncated tensor in " + where + " at byte " + std::to_string(in.position()));
    }
    layer.weights.resize(n);
    for (float& v : layer.weights) v = in.read<float>(where + " weights");
    layer.bias.resize(layer.out_channels);
    for (float& v : layer.bias) v = in.read<float>(where + " bias");
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after last layer");
  return Predictor::conv_net(std::move(layers));
}

inline void save_weights(const Predictor& p, const std::string& path) {
  const auto bytes = encode_weights(p);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write weight file " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing weight file " + path);
}

inline Predictor load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

// ---------------------------------------------------------------------------

/// Geometric noise-level decay σ_k = σ_0 ρ^k snapped to an even grid.
struct NoiseSchedule {
  double sigma0 = 20.0;
  double rho = 0.7;
  int floor_level = 2;
  int step = 2;
  int max_level = 20;

  int level(int stage) const {
    if (stage < 0) throw ConfigError("stage index must be >= 0");
    const double raw = sigma0 * std::pow(rho, stage);
    const int snapped = step * static_cast<int>(std::lround(raw / step));
    return std::clamp(snapped, floor_level, max_level);
  }
};

/// Predictors keyed by noise level (8-bit scale). Level 0 is the identity.
class PredictorBank {
 public:
  PredictorBank() { levels_.emplace(0, Predictor::identity()); }

  void add(int level, Predictor p) {
    if (level < 0) throw ConfigError("noise level must be >= 0");
    if (p.channels() != 0) {
      for (const auto& [lv, q] : levels_) {
        if (q.channels() != 0 && q.channels() != p.channels()) {
          throw ConfigError("predictor bank channel counts differ");
        }
      }
    }
    levels_.insert_or_assign(level, std::move(p));
  }

  const std::map<int, Predictor>& levels() const { return levels_; }
  std::size_t size() const { return levels_.size(); }

  /// The level nearest to `level` (ties go to the lower one).
  int nearest_level(int level) const {
    if (levels_.empty()) throw ConfigError("empty predictor bank");
    int best = levels_.begin()->first;
    for (const auto& [lv, p] : levels_) {
      if (std::abs(lv - level) < std::abs(best - level)) best = lv;
    }
    return best;
  }

  const Predictor& at(int level) const { return levels_.at(level); }

  /// Identity only: propagation reduces to warm start plus projection.
  static PredictorBank identity_bank() { return PredictorBank(); }

  /// Gaussian-blur residuals for levels 2..20, blur std = level * scale.
  static PredictorBank classical_bank(double scale = 3.0 / 255.0) {
    PredictorBank bank;
    for (int level = 2; level <= 20; level += 2) bank.add(level, Predictor::classical(level * scale));
    return bank;
  }

  /// Loads `sigma_NN.dpew` files for NN in 02..20; missing files are skipped.
  static PredictorBank load_directory(const std::string& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("weights directory not found: " + dir);
    PredictorBank bank;
    for (int level = 2; level <= 20; level += 2) {
      const auto path = std::filesystem::path(dir) / weight_file_name(level);
      if (std::filesystem::exists(path)) bank.add(level, load_weights(path.string()));
    }
    if (bank.size() == 1) throw IoError("no sigma_NN.dpew files in " + dir);
    return bank;
  }

  static std::string weight_file_name(int level) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sigma_%02d.dpew", level);
    return buf;
  }

 private:
  std::map<int, Predictor> levels_;
};

struct LevelChoice {
  int level;
  const Predictor* predictor;
};

/// Predictor for stage k: the bank level nearest to the scheduled σ_k.
inline LevelChoice select_level(const PredictorBank& bank, int stage, const NoiseSchedule& schedule) {
  if (bank.size() == 0) throw ConfigError("empty predictor bank");
  const int level = bank.nearest_level(schedule.level(stage));
  return {level, &bank.at(level)};
}

}  // namespace dpe
