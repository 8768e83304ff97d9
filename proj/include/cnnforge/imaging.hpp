#pragma once

// Lesion images, ROI preparation, manifests and the binary feature format.

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cnnforge/engine.hpp"
#include "cnnforge/textio.hpp"

namespace cnnforge {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0) : width(w), height(h) {
    if (w < 1 || h < 1) throw ContractError("image dimensions must be positive");
    pixels.assign(static_cast<std::size_t>(w) * h, fill);
  }

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

// ---------------------------------------------------------------- PGM (P5)

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline GrayImage decode_pgm(const std::string& data, const std::string& origin = "<memory>") {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> long {
    skip_space();
    std::size_t start = pos;
    while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) ++pos;
    auto v = text::parse_int(std::string_view(data).substr(start, pos - start));
    if (!v) throw InputError(origin + ": malformed PGM header");
    return static_cast<long>(*v);
  };
  if (data.size() < 2 || data[0] != 'P' || data[1] != '5') throw InputError(origin + ": not a binary PGM (P5)");
  pos = 2;
  const long w = number(), h = number(), maxval = number();
  if (w < 1 || h < 1) throw InputError(origin + ": PGM dimensions must be positive");
  if (maxval != 255) throw InputError(origin + ": only maxval 255 PGMs are supported");
  if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos])))
    throw InputError(origin + ": malformed PGM header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (data.size() - pos < n) throw InputError(origin + ": truncated PGM payload");
  GrayImage img(static_cast<int>(w), static_cast<int>(h));
  std::memcpy(img.pixels.data(), data.data() + pos, n);
  return img;
}

inline GrayImage read_pgm(const std::string& path) { return decode_pgm(text::read_file(path), path); }
inline void write_pgm(const GrayImage& img, const std::string& path) { text::write_file(path, encode_pgm(img)); }

// ---------------------------------------------------------------- ROI ops

/// w x h window centered on (cx, cy), shifted inward at the borders.
inline GrayImage crop_roi(const GrayImage& img, int cx, int cy, int w, int h) {
  if (w < 1 || h < 1) throw ContractError("ROI size must be positive");
  if (w > img.width || h > img.height) throw ContractError("ROI exceeds image");
  if (cx < 0 || cx >= img.width || cy < 0 || cy >= img.height) throw ContractError("ROI center outside image");
  const int x0 = std::clamp(cx - w / 2, 0, img.width - w);
  const int y0 = std::clamp(cy - h / 2, 0, img.height - h);
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = img.at(x0 + x, y0 + y);
  return out;
}

/// Catmull-Rom cubic convolution kernel (a = -0.5).
inline double catmull_rom(double t) {
  constexpr double a = -0.5;
  t = std::fabs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace detail {

struct Taps {
  std::array<int, 4> index;
  std::array<double, 4> weight;
};

/// Half-pixel-centered source taps for every output coordinate.
inline std::vector<Taps> resample_taps(int in, int out) {
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = (o + 0.5) * scale - 0.5;
    const int base = static_cast<int>(std::floor(src));
    for (int k = 0; k < 4; ++k) {
      const int s = base - 1 + k;
      taps[o].index[k] = std::clamp(s, 0, in - 1);
      taps[o].weight[k] = catmull_rom(src - s);
    }
  }
  return taps;
}

inline std::uint8_t to_pixel(double v) {
  const double r = std::round(v);  // half away from zero
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

}  // namespace detail

/// Separable bicubic resample; the horizontal pass stays in double precision
/// and only the final value is rounded.
inline GrayImage bicubic_resize(const GrayImage& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw ContractError("resize target must be positive");
  const auto tx = detail::resample_taps(img.width, out_w);
  const auto ty = detail::resample_taps(img.height, out_h);

  std::vector<double> rows(static_cast<std::size_t>(img.height) * out_w);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += tx[x].weight[k] * img.at(tx[x].index[k], y);
      rows[static_cast<std::size_t>(y) * out_w + x] = acc;
    }
  }
  GrayImage out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += ty[y].weight[k] * rows[static_cast<std::size_t>(ty[y].index[k]) * out_w + x];
      out.at(x, y) = detail::to_pixel(acc);
    }
  }
  return out;
}

inline double normalize_level(std::uint8_t v) { return v / 127.5 - 1.0; }

/// Gray levels mapped linearly onto [-1, 1]; rows follow image y.
inline CellField normalize_to_cells(const GrayImage& img) {
  CellField f(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) f(y, x) = normalize_level(img.at(x, y));
  return f;
}

/// Output rendering v -> round((v + 1) * 127.5).
inline GrayImage render_cells(std::span<const float> values, int width, int height) {
  GrayImage img(width, height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = detail::to_pixel((static_cast<double>(values[i]) + 1.0) * 127.5);
  return img;
}

// ---------------------------------------------------------------- manifest

enum class BodySite { bladder, lymph_node, visceral, other };
enum class Label { class1, class2 };
enum class Split { train, val, test };

inline const char* to_string(BodySite s) {
  switch (s) {
    case BodySite::bladder: return "bladder";
    case BodySite::lymph_node: return "lymph_node";
    case BodySite::visceral: return "visceral";
    case BodySite::other: return "other";
  }
  return "?";
}
inline const char* to_string(Label l) { return l == Label::class1 ? "class1" : "class2"; }
inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline BodySite parse_body_site(const std::string& s) {
  if (s == "bladder") return BodySite::bladder;
  if (s == "lymph_node") return BodySite::lymph_node;
  if (s == "visceral") return BodySite::visceral;
  if (s == "other") return BodySite::other;
  throw InputError("unknown body_site '" + s + "'");
}
inline Label parse_label(const std::string& s) {
  if (s == "class1") return Label::class1;
  if (s == "class2") return Label::class2;
  throw InputError("unknown label '" + s + "'");
}
inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw InputError("unknown split '" + s + "'");
}

struct LesionRecord {
  std::string patient_id;
  std::string lesion_id;
  std::string image_path;
  BodySite body_site = BodySite::other;
  double ld_mm = 0.0;
  Label label = Label::class1;
  Split split = Split::train;

  bool operator==(const LesionRecord&) const = default;
};

inline constexpr const char* kManifestHeader = "patient_id,lesion_id,image_path,body_site,ld_mm,label,split";

inline std::string format_manifest(std::span<const LesionRecord> rows) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : rows) {
    out += r.patient_id + "," + r.lesion_id + "," + r.image_path + "," + to_string(r.body_site) + "," +
           text::format_real(r.ld_mm) + "," + to_string(r.label) + "," + to_string(r.split) + "\n";
  }
  return out;
}

inline std::vector<LesionRecord> parse_manifest(const std::string& content, const std::string& origin = "<memory>") {
  std::vector<LesionRecord> rows;
  std::size_t pos = 0, line_no = 0;
  bool header = false;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) nl = content.size();
    std::string_view line = text::trim(std::string_view(content).substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (!header) {
      if (line != kManifestHeader)
        throw ParseError(origin, line_no, "manifest header must be '" + std::string(kManifestHeader) + "'");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    auto cols = text::split(line, ',');
    if (cols.size() != 7)
      throw ParseError(origin, line_no, "expected 7 columns, got " + std::to_string(cols.size()));
    try {
      LesionRecord r;
      r.patient_id = cols[0];
      r.lesion_id = cols[1];
      r.image_path = cols[2];
      if (!text::valid_identifier(r.patient_id) || !text::valid_identifier(r.lesion_id))
        throw InputError("patient_id and lesion_id must be nonempty identifiers");
      if (r.image_path.empty()) throw InputError("missing image_path");
      r.body_site = parse_body_site(cols[3]);
      auto ld = text::parse_real(cols[4]);
      if (!ld || !(*ld > 0.0) || !std::isfinite(*ld)) throw InputError("ld_mm must be a positive real");
      r.ld_mm = *ld;
      r.label = parse_label(cols[5]);
      r.split = parse_split(cols[6]);
      rows.push_back(std::move(r));
    } catch (const ParseError&) {
      throw;
    } catch (const InputError& e) {
      throw ParseError(origin, line_no, e.what());
    }
  }
  if (!header) throw ParseError(origin, 1, "missing manifest header");
  return rows;
}

inline std::vector<LesionRecord> read_manifest(const std::string& path) {
  return parse_manifest(text::read_file(path), path);
}

inline void write_manifest(std::span<const LesionRecord> rows, const std::string& path) {
  text::write_file(path, format_manifest(rows));
}

/// Image paths in a manifest are relative to the manifest's directory.
inline std::string resolve_image_path(const std::string& manifest_path, const std::string& image_path) {
  std::filesystem::path p(image_path);
  if (p.is_absolute()) return p.string();
  return (std::filesystem::path(manifest_path).parent_path() / p).lexically_normal().string();
}

// ---------------------------------------------------------------- features

struct FeatureMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major, in [-1, 1]
  std::string lesion_id;
  std::string template_name;
  float checkpoint_time = 0.0f;

  bool operator==(const FeatureMap&) const = default;
};

inline constexpr char kFeatureMagic[4] = {'C', 'N', 'N', 'F'};
inline constexpr std::uint16_t kFeatureVersion = 1;

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  using U = std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint32_t>;
  U bits = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos, const std::string& origin) {
  using U = std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint32_t>;
  if (in.size() - pos < sizeof(U)) throw InputError(origin + ": truncated payload");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bits |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i));
  pos += sizeof(U);
  return std::bit_cast<T>(bits);
}

}  // namespace detail

inline std::string encode_feature(const FeatureMap& f) {
  if (f.width < 1 || f.height < 1 || f.values.size() != static_cast<std::size_t>(f.width) * f.height)
    throw ContractError("feature map dimensions do not match its payload");
  if (f.lesion_id.size() > 0xFFFF || f.template_name.size() > 0xFFFF) throw ContractError("feature name too long");
  std::string out(kFeatureMagic, 4);
  detail::put_le<std::uint16_t>(out, kFeatureVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.width));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.height));
  detail::put_le<float>(out, f.checkpoint_time);
  detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(f.lesion_id.size()));
  out += f.lesion_id;
  detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(f.template_name.size()));
  out += f.template_name;
  out.reserve(out.size() + 4 * f.values.size());
  for (float v : f.values) detail::put_le<float>(out, v);
  return out;
}

inline FeatureMap decode_feature(const std::string& in, const std::string& origin = "<memory>") {
  if (in.size() < 4 || std::memcmp(in.data(), kFeatureMagic, 4) != 0) throw InputError(origin + ": bad magic");
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint16_t>(in, pos, origin);
  if (version != kFeatureVersion) throw InputError(origin + ": unsupported feature version " + std::to_string(version));
  FeatureMap f;
  const auto w = detail::get_le<std::uint32_t>(in, pos, origin);
  const auto h = detail::get_le<std::uint32_t>(in, pos, origin);
  if (w == 0 || h == 0 || w > 65536 || h > 65536) throw InputError(origin + ": invalid feature dimensions");
  f.width = static_cast<int>(w);
  f.height = static_cast<int>(h);
  f.checkpoint_time = detail::get_le<float>(in, pos, origin);
  auto str = [&] {
    const auto n = detail::get_le<std::uint16_t>(in, pos, origin);
    if (in.size() - pos < n) throw InputError(origin + ": truncated payload");
    std::string s = in.substr(pos, n);
    pos += n;
    return s;
  };
  f.lesion_id = str();
  f.template_name = str();
  const std::size_t count = static_cast<std::size_t>(w) * h;
  if ((in.size() - pos) / 4 < count) throw InputError(origin + ": truncated payload");
  if (in.size() - pos != 4 * count) throw InputError(origin + ": trailing bytes after payload");
  f.values.resize(count);
  for (auto& v : f.values) v = detail::get_le<float>(in, pos, origin);
  return f;
}

inline void write_feature(const FeatureMap& f, const std::string& path) { text::write_file(path, encode_feature(f)); }
inline FeatureMap read_feature(const std::string& path) { return decode_feature(text::read_file(path), path); }

}  // namespace cnnforge
