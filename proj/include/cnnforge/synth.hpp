#pragma once

// Seeded two-class lesion corpus: class 1 is a filled Gaussian blob, class 2
// a ring. Every image is shifted to mean intensity 128 so that only
// structure separates the classes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "cnnforge/imaging.hpp"
#include "cnnforge/rng.hpp"

namespace cnnforge {

struct SynthConfig {
  int train_class1 = 28;
  int train_class2 = 48;
  int test_class1 = 15;
  int test_class2 = 15;
  int image_size = 128;
  std::uint64_t rng_seed = 2024;
  double blob_sigma_min = 8.0, blob_sigma_max = 18.0;
  double ring_radius_min = 18.0, ring_radius_max = 36.0;
  double ring_thickness_min = 4.0, ring_thickness_max = 9.0;
  double center_jitter = 6.0;
  double noise_sigma = 8.0;

  SynthConfig& per_class(int train, int test) {
    train_class1 = train_class2 = train;
    test_class1 = test_class2 = test;
    return *this;
  }

  void validate() const {
    if (train_class1 < 1 || train_class2 < 1 || test_class1 < 1 || test_class2 < 1)
      throw ContractError("synthetic class counts must be >= 1");
    if (image_size < 16) throw ContractError("synthetic image size must be >= 16");
    if (noise_sigma < 0.0) throw ContractError("noise_sigma must be >= 0");
  }
};

inline constexpr int kSynthMeanLevel = 128;

/// Renders one lesion; draws from `rng` in a fixed order.
inline GrayImage render_synth_lesion(Rng& rng, const SynthConfig& cfg, Label label) {
  const int n = cfg.image_size;
  const double cx = n / 2.0 + rng.uniform(-cfg.center_jitter, cfg.center_jitter);
  const double cy = n / 2.0 + rng.uniform(-cfg.center_jitter, cfg.center_jitter);
  double sigma = 0.0, radius = 0.0;
  if (label == Label::class1) {
    sigma = rng.uniform(cfg.blob_sigma_min, cfg.blob_sigma_max);
  } else {
    radius = rng.uniform(cfg.ring_radius_min, cfg.ring_radius_max);
    sigma = 0.5 * rng.uniform(cfg.ring_thickness_min, cfg.ring_thickness_max);
  }
  const double peak = rng.uniform(120.0, 170.0);

  std::vector<double> raw(static_cast<std::size_t>(n) * n);
  double sum = 0.0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double r = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
      const double d = r - radius;
      const double v = 60.0 + peak * std::exp(-d * d / (2.0 * sigma * sigma)) + rng.normal(0.0, cfg.noise_sigma);
      raw[static_cast<std::size_t>(y) * n + x] = v;
      sum += v;
    }
  }
  const double shift = kSynthMeanLevel - sum / static_cast<double>(raw.size());

  GrayImage img(n, n);
  long long total = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::round(raw[i] + shift), 0.0, 255.0));
    total += img.pixels[i];
  }
  // Nudge unclamped pixels by one level until the sum is exact.
  long long excess = total - static_cast<long long>(kSynthMeanLevel) * static_cast<long long>(raw.size());
  for (int pass = 0; pass < 256 && excess != 0; ++pass) {
    for (auto& px : img.pixels) {
      if (excess > 0 && px > 0) {
        --px;
        --excess;
      } else if (excess < 0 && px < 255) {
        ++px;
        ++excess;
      }
      if (excess == 0) break;
    }
  }
  return img;
}

inline double mean_intensity(const GrayImage& img) {
  double s = 0.0;
  for (auto p : img.pixels) s += p;
  return s / static_cast<double>(img.pixels.size());
}

/// Writes `<out_dir>/images/<lesion_id>.pgm` and `<out_dir>/manifest.csv`;
/// returns the manifest rows (image paths relative to the manifest).
inline std::vector<LesionRecord> generate_synth(const SynthConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  if (ec) throw InputError("cannot create '" + out_dir + "': " + ec.message());

  Rng rng(cfg.rng_seed);
  std::vector<LesionRecord> rows;
  static constexpr BodySite kSites[] = {BodySite::bladder, BodySite::lymph_node, BodySite::visceral, BodySite::other};
  auto emit = [&](int count, Label label, Split split) {
    for (int k = 0; k < count; ++k) {
      char id[16];
      std::snprintf(id, sizeof id, "%04zu", rows.size() + 1);
      LesionRecord r;
      r.patient_id = std::string("P") + id;
      r.lesion_id = std::string("L") + id;
      r.image_path = "images/" + r.lesion_id + ".pgm";
      r.label = label;
      r.split = split;
      r.body_site = kSites[rng.index(4)];
      r.ld_mm = std::round(rng.uniform(20.0, 90.0) * 10.0) / 10.0;
      write_pgm(render_synth_lesion(rng, cfg, label), (fs::path(out_dir) / r.image_path).string());
      rows.push_back(std::move(r));
    }
  };
  emit(cfg.train_class1, Label::class1, Split::train);
  emit(cfg.train_class2, Label::class2, Split::train);
  emit(cfg.test_class1, Label::class1, Split::test);
  emit(cfg.test_class2, Label::class2, Split::test);
  write_manifest(rows, (fs::path(out_dir) / "manifest.csv").string());
  return rows;
}

/// Test accuracy of the best single mean-intensity threshold fit on the
/// training rows (either polarity).
inline double brightness_baseline_accuracy(const std::vector<LesionRecord>& rows, const std::string& manifest_path) {
  struct Item {
    double mean;
    Label label;
    Split split;
  };
  std::vector<Item> items;
  for (const auto& r : rows)
    items.push_back({mean_intensity(read_pgm(resolve_image_path(manifest_path, r.image_path))), r.label, r.split});

  std::vector<double> cuts;
  for (const auto& it : items)
    if (it.split == Split::train) cuts.push_back(it.mean);
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(cuts.empty() ? 0.0 : cuts.back() + 1.0);

  auto accuracy = [&](double cut, bool above_is_class1, Split split) {
    std::size_t ok = 0, n = 0;
    for (const auto& it : items) {
      if (it.split != split) continue;
      ++n;
      const bool says1 = (it.mean >= cut) == above_is_class1;
      ok += says1 == (it.label == Label::class1);
    }
    return n == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(n);
  };
  double best = -1.0, best_cut = 0.0;
  bool best_pol = true;
  for (double c : cuts)
    for (bool pol : {true, false}) {
      const double a = accuracy(c, pol, Split::train);
      if (a > best) {
        best = a;
        best_cut = c;
        best_pol = pol;
      }
    }
  return accuracy(best_cut, best_pol, Split::test);
}

}  // namespace cnnforge
