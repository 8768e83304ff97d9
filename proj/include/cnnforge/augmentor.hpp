#pragma once

// Generative feature pipeline: each lesion ROI is resized to the classifier
// grid, normalized, and run through the engine once per template.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cnnforge/engine.hpp"
#include "cnnforge/imaging.hpp"
#include "cnnforge/parallel.hpp"
#include "cnnforge/templates.hpp"

namespace cnnforge {

enum class CheckpointPolicy { final_only, per_template_tfinal };

inline const char* to_string(CheckpointPolicy p) {
  return p == CheckpointPolicy::final_only ? "final_only" : "per_template_tfinal";
}
inline CheckpointPolicy parse_checkpoint_policy(const std::string& s) {
  if (s == "final_only") return CheckpointPolicy::final_only;
  if (s == "per_template_tfinal") return CheckpointPolicy::per_template_tfinal;
  throw InputError("unknown checkpoint policy '" + s + "'");
}

struct AugmentConfig {
  int grid_w = 64;
  int grid_h = 64;
  IntegrationConfig integration;
  /// final_only samples y at each template's t_final. per_template_tfinal
  /// additionally samples integration.checkpoint_times that fall before it.
  CheckpointPolicy checkpoint_policy = CheckpointPolicy::final_only;
  unsigned threads = 1;

  void validate() const {
    if (grid_w < 8 || grid_h < 8) throw ContractError("grid dimensions must be >= 8");
    if (!(integration.dt > 0.0)) throw ContractError("dt must be positive");
  }
};

/// Resized and normalized engine input for one ROI.
inline CellField prepare_input(const GrayImage& roi, const AugmentConfig& cfg) {
  return normalize_to_cells(bicubic_resize(roi, cfg.grid_w, cfg.grid_h));
}

/// Feature maps of one template on a prepared input. A template that
/// diverges yields all-zero maps and sets `divergent`.
inline std::vector<FeatureMap> template_features(const CellField& input, const TemplateSet& t,
                                                 const AugmentConfig& cfg, const std::string& lesion_id,
                                                 bool* divergent = nullptr) {
  IntegrationConfig ic = cfg.integration;
  ic.checkpoint_times.clear();
  if (cfg.checkpoint_policy == CheckpointPolicy::per_template_tfinal) {
    for (double c : cfg.integration.checkpoint_times)
      if (c < t.t_final) ic.checkpoint_times.push_back(c);
    ic.checkpoint_times.push_back(t.t_final);
  }
  if (ic.dt > t.t_final) ic.dt = t.t_final;

  std::vector<FeatureMap> maps;
  auto blank = [&](double time) {
    FeatureMap f;
    f.width = input.cols();
    f.height = input.rows();
    f.values.assign(input.size(), 0.0f);
    f.lesion_id = lesion_id;
    f.template_name = t.name;
    f.checkpoint_time = static_cast<float>(time);
    return f;
  };
  if (divergent) *divergent = false;
  try {
    TransientResult r = run_transient(input, input, t, ic);
    for (const auto& cp : r.outputs) {
      FeatureMap f = blank(cp.time);
      for (std::size_t q = 0; q < f.values.size(); ++q) f.values[q] = static_cast<float>(cp.y.values()[q]);
      maps.push_back(std::move(f));
    }
  } catch (const DivergenceError&) {
    if (divergent) *divergent = true;
    maps.clear();
    if (ic.checkpoint_times.empty()) ic.checkpoint_times.push_back(t.t_final);
    for (double c : ic.checkpoint_times) maps.push_back(blank(c));
  }
  return maps;
}

/// One map per template (per checkpoint under per_template_tfinal), in
/// library order. Indices of divergent templates go to `divergent`.
inline std::vector<FeatureMap> generate_features(const GrayImage& roi, const TemplateLibrary& lib,
                                                 const AugmentConfig& cfg, const std::string& lesion_id = "roi",
                                                 std::vector<std::size_t>* divergent = nullptr) {
  cfg.validate();
  std::vector<FeatureMap> out;
  if (lib.empty()) return out;
  const CellField input = prepare_input(roi, cfg);
  for (std::size_t m = 0; m < lib.size(); ++m) {
    bool div = false;
    auto maps = template_features(input, lib.entries[m], cfg, lesion_id, &div);
    if (div && divergent) divergent->push_back(m);
    for (auto& f : maps) out.push_back(std::move(f));
  }
  return out;
}

/// File name of a map inside its lesion directory.
inline std::string feature_file_name(const FeatureMap& f, const TemplateSet& t) {
  if (f.checkpoint_time == static_cast<float>(t.t_final)) return t.name + ".cnnf";
  return t.name + "_t" + text::format_real(static_cast<double>(f.checkpoint_time)) + ".cnnf";
}

struct AugmentSummary {
  /// (split, class) -> number of feature files written.
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  /// (lesion_id, template_name) pairs replaced by all-zero maps.
  std::vector<std::pair<std::string, std::string>> divergent;

  std::size_t total(const std::string& split) const {
    std::size_t n = 0;
    for (const auto& [key, c] : counts)
      if (key.first == split) n += c;
    return n;
  }

  /// `split,class,count` rows with a `total` row per split.
  std::string to_csv() const {
    std::string out = "split,class,count\n";
    for (const char* split : {"train", "val", "test"}) {
      bool any = false;
      for (const char* cls : {"class1", "class2"}) {
        auto it = counts.find({split, cls});
        if (it == counts.end()) continue;
        any = true;
        out += std::string(split) + "," + cls + "," + std::to_string(it->second) + "\n";
      }
      if (any) out += std::string(split) + ",total," + std::to_string(total(split)) + "\n";
    }
    return out;
  }
};

/// Writes `<out_dir>/<split>/<lesion_id>/<template_name>.cnnf` for every
/// (lesion, template). Directories created by a failed run are removed.
inline AugmentSummary augment_dataset(const std::vector<LesionRecord>& lesions, const std::string& manifest_path,
                                      const TemplateLibrary& lib, const AugmentConfig& cfg,
                                      const std::string& out_dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  lib.validate();

  std::vector<std::string> image_paths;
  std::map<std::string, int> seen;
  for (const auto& l : lesions) {
    if (seen[l.lesion_id]++) throw ContractError("duplicate lesion_id '" + l.lesion_id + "'");
    image_paths.push_back(resolve_image_path(manifest_path, l.image_path));
    if (!fs::is_regular_file(image_paths.back()))
      throw InputError("lesion " + l.lesion_id + ": missing image file '" + image_paths.back() + "'");
  }

  AugmentSummary summary;
  for (const auto& l : lesions) summary.counts[{to_string(l.split), to_string(l.label)}] += 0;

  std::vector<fs::path> created;
  auto make_dir = [&](const fs::path& p) {
    if (!fs::exists(p)) {
      fs::create_directories(p);
      created.push_back(p);
    }
  };
  std::vector<std::vector<std::pair<std::string, std::string>>> divergent(lesions.size());
  std::vector<std::size_t> written(lesions.size(), 0);
  try {
    make_dir(out_dir);
    for (const auto& l : lesions) {
      make_dir(fs::path(out_dir) / to_string(l.split));
      make_dir(fs::path(out_dir) / to_string(l.split) / l.lesion_id);
    }
    parallel_for(lesions.size(), cfg.threads, [&](std::size_t i) {
      const auto& l = lesions[i];
      const GrayImage roi = read_pgm(image_paths[i]);
      const CellField input = prepare_input(roi, cfg);
      const fs::path dir = fs::path(out_dir) / to_string(l.split) / l.lesion_id;
      for (const auto& t : lib.entries) {
        bool div = false;
        for (const auto& f : template_features(input, t, cfg, l.lesion_id, &div)) {
          write_feature(f, (dir / feature_file_name(f, t)).string());
          ++written[i];
        }
        if (div) divergent[i].emplace_back(l.lesion_id, t.name);
      }
    });
  } catch (...) {
    std::error_code ec;
    for (auto it = created.rbegin(); it != created.rend(); ++it) fs::remove_all(*it, ec);
    throw;
  }
  for (std::size_t i = 0; i < lesions.size(); ++i) {
    summary.counts[{to_string(lesions[i].split), to_string(lesions[i].label)}] += written[i];
    for (auto& d : divergent[i]) summary.divergent.push_back(std::move(d));
  }
  return summary;
}

}  // namespace cnnforge
