#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dpe/energy.hpp"
#include "dpe/kernel.hpp"
#include "dpe/metrics.hpp"
#include "dpe/operators.hpp"
#include "dpe/predictor.hpp"
#include "dpe/propagation.hpp"
#include "dpe/rng.hpp"

namespace dpe {

enum class TaskKind { deconv, inpaint, sr, dehaze };

inline std::string task_name(TaskKind k) {
  switch (k) {
    case TaskKind::deconv: return "deconv";
    case TaskKind::inpaint: return "inpaint";
    case TaskKind::sr: return "sr";
    case TaskKind::dehaze: return "dehaze";
  }
  return "?";
}

inline TaskKind parse_task(const std::string& s) {
  for (TaskKind k : {TaskKind::deconv, TaskKind::inpaint, TaskKind::sr, TaskKind::dehaze}) {
    if (task_name(k) == s) return k;
  }
  throw ConfigError("unknown task '" + s + "'");
}

using Airlight = std::array<double, 3>;

inline constexpr double kDefaultTransmissionFloor = 0.1;
inline constexpr double kDarkChannelOmega = 0.95;

/// Degradation settings, written as comma-separated key=value pairs, e.g.
/// "blur=1.5,noise=0.01", "missing=0.5", "mask=text", "scale=2",
/// "airlight=0.9,noise=0.005".
struct TaskSpec {
  double noise = 0.0;
  double blur_sigma = 1.5;
  std::optional<Kernel> kernel;
  double missing = 0.5;
  bool text_mask = false;
  int scale = 2;
  Airlight airlight{0.9, 0.9, 0.9};
  int patch = 7;
  double t_floor = kDefaultTransmissionFloor;

  static TaskSpec parse(const std::string& text) {
    TaskSpec spec;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty() || item == "-") continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("task spec item '" + item + "' is not key=value");
      const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
      try {
        if (key == "noise") spec.noise = std::stod(value);
        else if (key == "blur") spec.blur_sigma = std::stod(value);
        else if (key == "kernel") spec.kernel = load_kernel(value);
        else if (key == "missing") spec.missing = std::stod(value);
        else if (key == "mask") {
          if (value != "text" && value != "random") throw ConfigError("mask must be text or random");
          spec.text_mask = value == "text";
        } else if (key == "scale") spec.scale = std::stoi(value);
        else if (key == "airlight") {
          std::stringstream as(value);
          std::string part;
          std::vector<double> parts;
          while (std::getline(as, part, ':')) parts.push_back(std::stod(part));
          if (parts.size() == 1) spec.airlight = {parts[0], parts[0], parts[0]};
          else if (parts.size() == 3) spec.airlight = {parts[0], parts[1], parts[2]};
          else throw ConfigError("airlight needs 1 or 3 values");
        } else if (key == "patch") spec.patch = std::stoi(value);
        else if (key == "tfloor") spec.t_floor = std::stod(value);
        else throw ConfigError("unknown task spec key '" + key + "'");
      } catch (const std::invalid_argument&) {
        throw ConfigError("task spec key '" + key + "' has a malformed value '" + value + "'");
      } catch (const std::out_of_range&) {
        throw ConfigError("task spec key '" + key + "' is out of range");
      }
    }
    return spec;
  }
};

struct HazeScene {
  ImagePlane hazy;          ///< I
  ImagePlane transmission;  ///< t, single channel
  ImagePlane radiance;      ///< J
  Airlight airlight{};      ///< A
};

struct TaskInstance {
  TaskKind kind = TaskKind::deconv;
  ImagePlane observation;
  DegradationOperator op = DegradationOperator::identity({1, 1, 1});
  std::optional<ImagePlane> truth;
  Shape target;  ///< shape of the restored image
  double noise = 0.0;
  std::optional<HazeScene> haze;
  TaskSpec spec;
};

// ---------------------------------------------------------------------------
// Scenes

/// Deterministic piecewise-smooth test image: shaded background, rectangles,
/// disks and a striped patch, values in [0.05, 0.95].
inline ImagePlane synthetic_scene(std::size_t width, std::size_t height, std::size_t channels,
                                  std::uint64_t seed) {
  Rng rng(seed);
  ImagePlane img(width, height, channels);
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  for (std::size_t c = 0; c < channels; ++c) {
    const double a = rng.uniform(0.2, 0.5), b = rng.uniform(-0.2, 0.2), d = rng.uniform(-0.2, 0.2);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) img.at(x, y, c) = a + b * x / w + d * y / h;
  }
  const int shapes = 6;
  for (int s = 0; s < shapes; ++s) {
    const double cx = rng.uniform(0.1, 0.9) * w, cy = rng.uniform(0.1, 0.9) * h;
    const double r = rng.uniform(0.08, 0.22) * std::min(w, h);
    std::vector<double> value(channels);
    for (double& v : value) v = rng.uniform(0.05, 0.95);
    const bool disk = s % 2 == 0;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double dx = x - cx, dy = y - cy;
        const bool inside = disk ? dx * dx + dy * dy <= r * r : std::abs(dx) <= r && std::abs(dy) <= 0.6 * r;
        if (inside)
          for (std::size_t c = 0; c < channels; ++c) img.at(x, y, c) = value[c];
      }
  }
  const double sx = rng.uniform(0.55, 0.75) * w, sy = rng.uniform(0.55, 0.75) * h;
  const double period = 4.0 + rng.uniform(0.0, 2.0);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      if (x >= sx && x < sx + 0.2 * w && y >= sy && y < sy + 0.2 * h) {
        const double v = 0.5 + 0.35 * std::sin(2.0 * 3.14159265358979323846 * x / period);
        for (std::size_t c = 0; c < channels; ++c) img.at(x, y, c) = v;
      }
    }
  for (double& v : img.data()) v = std::clamp(v, 0.05, 0.95);
  return img;
}

/// Smooth transmission map with a near object, values in [0.3, 0.95].
inline ImagePlane synthetic_transmission(std::size_t width, std::size_t height, std::uint64_t seed) {
  Rng rng(seed ^ 0x7ea5ULL);
  ImagePlane t(width, height, 1);
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  const double bx = rng.uniform(0.2, 0.8) * w, by = rng.uniform(0.2, 0.8) * h;
  const double br = rng.uniform(0.15, 0.3) * std::min(w, h);
  const double ox0 = rng.uniform(0.1, 0.4) * w, oy0 = rng.uniform(0.5, 0.7) * h;
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double dx = x - bx, dy = y - by;
      double depth = 0.7 * (1.0 - y / h) + 0.3 * std::exp(-(dx * dx + dy * dy) / (2.0 * br * br));
      if (x >= ox0 && x < ox0 + 0.3 * w && y >= oy0) depth = 0.1;
      t.at(x, y) = std::clamp(0.95 - 0.65 * depth, 0.3, 0.95);
    }
  return t;
}

// ---------------------------------------------------------------------------
// Masks

namespace detail {

// 5x7 uppercase glyphs, one byte per row, bit 4 is the leftmost column.
inline constexpr std::uint8_t kGlyphs[26][7] = {
    {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}, {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},
    {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E},
    {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},
    {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}, {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},
    {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},
    {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},
    {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11},
    {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},
    {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},
    {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},
    {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},
    {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}, {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},
    {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},
};

inline constexpr const char* kStencilText = "THE QUICK BROWN FOX JUMPS OVER THE LAZY DOG ";

}  // namespace detail

/// Observation mask (1 = observed) with text strokes removed. The pangram is
/// tiled line by line in a 6x9 cell grid.
inline ImagePlane text_mask(std::size_t width, std::size_t height, std::size_t channels = 1) {
  ImagePlane mask(width, height, channels, 1.0);
  const std::string text = detail::kStencilText;
  std::size_t cursor = 0;
  for (std::size_t top = 1; top + 7 <= height; top += 9) {
    for (std::size_t left = 1; left + 5 <= width; left += 6) {
      const char ch = text[cursor++ % text.size()];
      if (ch < 'A' || ch > 'Z') continue;
      const auto& glyph = detail::kGlyphs[ch - 'A'];
      for (std::size_t r = 0; r < 7; ++r)
        for (std::size_t col = 0; col < 5; ++col)
          if (glyph[r] & (0x10 >> col))
            for (std::size_t c = 0; c < channels; ++c) mask.at(left + col, top + r, c) = 0.0;
    }
  }
  return mask;
}

/// Exactly floor(rate * width * height) missing pixels, chosen by a partial
/// Fisher-Yates shuffle; all channels share the pattern.
inline ImagePlane random_mask(std::size_t width, std::size_t height, std::size_t channels, double rate,
                              std::uint64_t seed) {
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("missing rate must lie in (0, 1)");
  const std::size_t n = width * height;
  const auto missing = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < missing; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  ImagePlane mask(width, height, channels, 1.0);
  for (std::size_t i = 0; i < missing; ++i)
    for (std::size_t c = 0; c < channels; ++c) mask[c * n + idx[i]] = 0.0;
  return mask;
}

// ---------------------------------------------------------------------------
// Resampling and colour

/// Keys cubic convolution (a = -0.5) upsampling; output sample X maps to
/// input coordinate X / scale, matching the downsampling grid.
inline ImagePlane bicubic_upsample(const ImagePlane& src, Shape target, int scale) {
  if (target.channels != src.channels()) throw DimensionError("bicubic_upsample channel mismatch");
  const auto weight = [](double t) {
    t = std::abs(t);
    constexpr double a = -0.5;
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
  };
  const long sw = static_cast<long>(src.width()), sh = static_cast<long>(src.height());
  ImagePlane out(target);
  for (std::size_t c = 0; c < target.channels; ++c)
    for (std::size_t y = 0; y < target.height; ++y)
      for (std::size_t x = 0; x < target.width; ++x) {
        const double u = static_cast<double>(x) / scale, v = static_cast<double>(y) / scale;
        const long iu = static_cast<long>(std::floor(u)), iv = static_cast<long>(std::floor(v));
        double s = 0.0;
        for (long j = iv - 1; j <= iv + 2; ++j) {
          const double wy = weight(v - static_cast<double>(j));
          const auto jj = static_cast<std::size_t>(std::clamp(j, 0L, sh - 1));
          for (long i = iu - 1; i <= iu + 2; ++i) {
            const auto ii = static_cast<std::size_t>(std::clamp(i, 0L, sw - 1));
            s += wy * weight(u - static_cast<double>(i)) * src.at(ii, jj, c);
          }
        }
        out.at(x, y, c) = s;
      }
  return out;
}

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

/// Full-range BT.601 RGB -> YCbCr (chroma offset 0.5).
inline ImagePlane rgb_to_ycbcr(const ImagePlane& rgb) {
  if (rgb.channels() != 3) throw DimensionError("rgb_to_ycbcr needs 3 channels");
  ImagePlane out(rgb.shape());
  for (std::size_t i = 0; i < rgb.width() * rgb.height(); ++i) {
    const double r = rgb.channel(0)[i], g = rgb.channel(1)[i], b = rgb.channel(2)[i];
    const double y = kLumaR * r + kLumaG * g + kLumaB * b;
    out.channel(0)[i] = y;
    out.channel(1)[i] = 0.5 + (b - y) / (2.0 * (1.0 - kLumaB));
    out.channel(2)[i] = 0.5 + (r - y) / (2.0 * (1.0 - kLumaR));
  }
  return out;
}

inline ImagePlane ycbcr_to_rgb(const ImagePlane& ycc) {
  if (ycc.channels() != 3) throw DimensionError("ycbcr_to_rgb needs 3 channels");
  ImagePlane out(ycc.shape());
  for (std::size_t i = 0; i < ycc.width() * ycc.height(); ++i) {
    const double y = ycc.channel(0)[i], cb = ycc.channel(1)[i] - 0.5, cr = ycc.channel(2)[i] - 0.5;
    const double r = y + 2.0 * (1.0 - kLumaR) * cr;
    const double b = y + 2.0 * (1.0 - kLumaB) * cb;
    out.channel(0)[i] = r;
    out.channel(1)[i] = (y - kLumaR * r - kLumaB * b) / kLumaG;
    out.channel(2)[i] = b;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Haze model I = t J + (1 - t) A

inline ImagePlane to_rgb(const ImagePlane& img) {
  if (img.channels() == 3) return img;
  if (img.channels() != 1) throw DimensionError("expected a 1- or 3-channel image");
  ImagePlane out(img.width(), img.height(), 3);
  for (std::size_t c = 0; c < 3; ++c) out.set_channel(c, img);
  return out;
}

inline ImagePlane apply_haze(const ImagePlane& radiance, const ImagePlane& t, const Airlight& a) {
  if (radiance.channels() != 3 || t.channels() != 1 || t.width() != radiance.width() ||
      t.height() != radiance.height()) {
    throw DimensionError("haze model needs an RGB radiance and a matching 1-channel transmission");
  }
  ImagePlane out(radiance.shape());
  const std::size_t n = t.size();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      out.channel(c)[i] = t[i] * radiance.channel(c)[i] + (1.0 - t[i]) * a[c];
    }
  return out;
}

/// J = (I − A) / max(t, t_floor) + A, optionally clamped to [0, 1].
inline ImagePlane recover_radiance(const ImagePlane& hazy, const ImagePlane& t, const Airlight& a,
                                   double t_floor = kDefaultTransmissionFloor, bool clamp = true) {
  if (!(t_floor > 0.0)) throw ConfigError("t_floor must be > 0");
  if (hazy.channels() != 3 || t.channels() != 1 || t.width() != hazy.width() || t.height() != hazy.height()) {
    throw DimensionError("radiance recovery needs an RGB image and a matching transmission");
  }
  ImagePlane out(hazy.shape());
  const std::size_t n = t.size();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      double v = (hazy.channel(c)[i] - a[c]) / std::max(t[i], t_floor) + a[c];
      out.channel(c)[i] = clamp ? std::clamp(v, 0.0, 1.0) : v;
    }
  return out;
}

/// Per-pixel minimum over channels.
inline ImagePlane channel_minimum(const ImagePlane& img) {
  ImagePlane out(img.width(), img.height(), 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double m = img.channel(0)[i];
    for (std::size_t c = 1; c < img.channels(); ++c) m = std::min(m, img.channel(c)[i]);
    out[i] = m;
  }
  return out;
}

/// Square min filter of odd size; windows are truncated at the border.
inline ImagePlane min_filter(const ImagePlane& img, int patch) {
  if (patch < 1 || patch % 2 == 0) throw ConfigError("patch size must be a positive odd number");
  const long r = patch / 2;
  const long w = static_cast<long>(img.width()), h = static_cast<long>(img.height());
  ImagePlane rows(img.shape()), out(img.shape());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double m = img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
        for (long j = std::max(0L, x - r); j <= std::min(w - 1, x + r); ++j)
          m = std::min(m, img.at(static_cast<std::size_t>(j), static_cast<std::size_t>(y), c));
        rows.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = m;
      }
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double m = rows.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
        for (long j = std::max(0L, y - r); j <= std::min(h - 1, y + r); ++j)
          m = std::min(m, rows.at(static_cast<std::size_t>(x), static_cast<std::size_t>(j), c));
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = m;
      }
  }
  return out;
}

/// t = 1 − ω · min over patch and channels of I_c / A_c, clamped to [t_floor, 1].
inline ImagePlane dark_channel_transmission(const ImagePlane& hazy, const Airlight& a, int patch,
                                            double t_floor = kDefaultTransmissionFloor,
                                            double omega = kDarkChannelOmega) {
  if (hazy.channels() != 3) throw DimensionError("dark channel needs an RGB image");
  for (double v : a) {
    if (!(v >= 1e-3)) throw ConfigError("degenerate atmospheric light (channel below 1e-3)");
  }
  ImagePlane normalized(hazy.shape());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < hazy.width() * hazy.height(); ++i)
      normalized.channel(c)[i] = hazy.channel(c)[i] / a[c];
  ImagePlane t = min_filter(channel_minimum(normalized), patch);
  for (double& v : t.data()) v = std::clamp(1.0 - omega * v, t_floor, 1.0);
  return t;
}

/// Mean colour of the brightest `fraction` of pixels ranked by their
/// per-pixel dark channel (ties broken by pixel index).
inline Airlight estimate_atmospheric_light(const ImagePlane& hazy, double fraction = 0.001) {
  if (!(fraction > 0.0 && fraction <= 0.01)) throw ConfigError("fraction must lie in (0, 0.01]");
  if (hazy.channels() != 3) throw DimensionError("atmospheric light needs an RGB image");
  const ImagePlane dark = channel_minimum(hazy);
  const std::size_t n = dark.size();
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(count), idx.end(),
                    [&](std::size_t l, std::size_t r) {
                      return dark[l] != dark[r] ? dark[l] > dark[r] : l < r;
                    });
  Airlight a{0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < count; ++k)
    for (std::size_t c = 0; c < 3; ++c) a[c] += hazy.channel(c)[idx[k]];
  for (double& v : a) v /= static_cast<double>(count);
  return a;
}

// ---------------------------------------------------------------------------

inline void add_noise(ImagePlane& img, double std_dev, Rng& rng) {
  if (std_dev == 0.0) return;
  for (double& v : img.data()) v += std_dev * rng.normal();
}

/// Builds a seeded degraded observation of `truth`.
inline TaskInstance synthesize(TaskKind kind, const ImagePlane& truth, const TaskSpec& spec,
                               std::uint64_t seed) {
  if (!(spec.noise >= 0.0)) throw ConfigError("noise must be >= 0");
  for (double v : truth.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("ground truth must lie in [0, 1]");
  }
  TaskInstance inst;
  inst.kind = kind;
  inst.truth = truth;
  inst.target = truth.shape();
  inst.noise = spec.noise;
  inst.spec = spec;
  Rng rng(seed);
  switch (kind) {
    case TaskKind::deconv: {
      Kernel k = spec.kernel ? *spec.kernel : gaussian_kernel(spec.blur_sigma);
      inst.op = DegradationOperator::convolution(std::move(k), truth.shape());
      inst.observation = inst.op.apply(truth);
      add_noise(inst.observation, spec.noise, rng);
      break;
    }
    case TaskKind::inpaint: {
      ImagePlane mask = spec.text_mask
                            ? text_mask(truth.width(), truth.height(), truth.channels())
                            : random_mask(truth.width(), truth.height(), truth.channels(), spec.missing,
                                          rng.next());
      inst.op = DegradationOperator::mask(std::move(mask));
      ImagePlane noisy = truth;
      add_noise(noisy, spec.noise, rng);
      inst.observation = inst.op.apply(noisy);
      break;
    }
    case TaskKind::sr: {
      inst.op = DegradationOperator::downsample(truth.shape(), spec.scale);
      inst.observation = inst.op.apply(truth);
      add_noise(inst.observation, spec.noise, rng);
      break;
    }
    case TaskKind::dehaze: {
      HazeScene scene;
      scene.radiance = to_rgb(truth);
      scene.transmission = synthetic_transmission(truth.width(), truth.height(), seed);
      scene.airlight = spec.airlight;
      scene.hazy = apply_haze(scene.radiance, scene.transmission, scene.airlight);
      add_noise(scene.hazy, spec.noise, rng);
      inst.observation = scene.hazy;
      inst.truth = scene.radiance;
      inst.target = scene.radiance.shape();
      inst.op = DegradationOperator::identity({truth.width(), truth.height(), 1});
      inst.haze = std::move(scene);
      break;
    }
  }
  return inst;
}

/// Wraps an externally supplied observation (no ground truth).
inline TaskInstance make_instance(TaskKind kind, ImagePlane observation, DegradationOperator op,
                                  Shape target, const TaskSpec& spec = {}) {
  TaskInstance inst;
  inst.kind = kind;
  inst.observation = std::move(observation);
  inst.op = std::move(op);
  inst.target = target;
  inst.spec = spec;
  return inst;
}

/// Observation mapped onto the target grid (bicubic for super-resolution).
inline ImagePlane observation_on_target(const TaskInstance& inst) {
  if (inst.kind == TaskKind::sr) return bicubic_upsample(inst.observation, inst.target, inst.op.scale());
  return inst.observation;
}

/// Per-task parameters used where a run configuration leaves them unset.
/// Stable unit steps on the mask and identity operators need 1 + eta + 16*lambda*theta < 2.
struct TaskPreset {
  double eta = 1.0;
  double lambda = 1e-4;
  double theta = 400.0;
};

inline TaskPreset task_preset(TaskKind kind) {
  switch (kind) {
    case TaskKind::inpaint:
    case TaskKind::dehaze:
      return {0.25, 0.002, 10.0};
    default:
      return {};
  }
}

struct RestoreResult {
  ImagePlane image;
  Trace trace;
  std::optional<ImagePlane> transmission;
  std::optional<ImagePlane> transmission_init;
  Airlight airlight{};
};

inline RestoreResult restore(const TaskInstance& inst, const PredictorBank& bank,
                             const PropagationConfig& config, const EnergyParams& params = {}) {
  RestoreResult res;
  const ImagePlane* reference = inst.truth ? &*inst.truth : nullptr;
  switch (inst.kind) {
    case TaskKind::deconv:
    case TaskKind::inpaint: {
      RunResult r = run(inst.observation, inst.op, params, bank, config, std::nullopt, reference);
      res.image = std::move(r.x);
      res.trace = std::move(r.trace);
      break;
    }
    case TaskKind::sr: {
      const int s = inst.op.scale();
      const ImagePlane up = bicubic_upsample(inst.observation, inst.target, s);
      if (inst.target.channels == 1) {
        RunResult r = run(inst.observation, inst.op, params, bank, config, up, reference);
        res.image = std::move(r.x);
        res.trace = std::move(r.trace);
        break;
      }
      // Luminance through propagation, chroma bicubic.
      const ImagePlane ycc_low = rgb_to_ycbcr(inst.observation);
      ImagePlane ycc = rgb_to_ycbcr(project_box(up, params));
      const Shape luma_shape{inst.target.width, inst.target.height, 1};
      const auto op = DegradationOperator::downsample(luma_shape, s);
      std::optional<ImagePlane> luma_ref;
      if (reference) luma_ref = rgb_to_ycbcr(*reference).extract_channel(0);
      RunResult r = run(ycc_low.extract_channel(0), op, params, bank, config, ycc.extract_channel(0),
                        luma_ref ? &*luma_ref : nullptr);
      ycc.set_channel(0, r.x);
      res.image = project_box(ycbcr_to_rgb(ycc), params);
      res.trace = std::move(r.trace);
      break;
    }
    case TaskKind::dehaze: {
      const ImagePlane& hazy = inst.observation;
      res.airlight = estimate_atmospheric_light(hazy);
      const ImagePlane t0 = dark_channel_transmission(hazy, res.airlight, inst.spec.patch, inst.spec.t_floor);
      const auto op = DegradationOperator::identity(t0.shape());
      const ImagePlane* t_ref = inst.haze ? &inst.haze->transmission : nullptr;
      RunResult r = run(t0, op, params, bank, config, std::nullopt, t_ref);
      res.image = recover_radiance(hazy, r.x, res.airlight, inst.spec.t_floor);
      res.transmission = std::move(r.x);
      res.transmission_init = t0;
      res.trace = std::move(r.trace);
      break;
    }
  }
  return res;
}

}  // namespace dpe
