#pragma once

// Greedy random-driven template search: a proposal joins the library only
// if the downstream classifier, retrained from scratch on the enlarged
// feature set, strictly lowers the validation loss.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cnnforge/augmentor.hpp"
#include "cnnforge/classifier.hpp"
#include "cnnforge/parallel.hpp"
#include "cnnforge/templates.hpp"

namespace cnnforge {

/// A lesion already resized and normalized to the engine grid.
struct PreparedLesion {
  std::string lesion_id;
  std::string patient_id;
  Label label = Label::class1;
  CellField input;
};

struct SearchEvent {
  int proposal = 0;
  double validation_loss = std::numeric_limits<double>::quiet_NaN();
  bool accepted = false;
  std::string note;  // "divergent" for rejected unstable proposals
};

struct SearchReport {
  TemplateLibrary accepted;
  std::vector<SearchEvent> history;
  double initial_validation_loss = 0.0;
  double final_validation_loss = 0.0;

  std::string history_csv() const {
    std::string out = "proposal,validation_loss,accepted,note\n";
    for (const auto& e : history)
      out += std::to_string(e.proposal) + "," + text::format_real(e.validation_loss) + "," +
             (e.accepted ? "1" : "0") + "," + e.note + "\n";
    return out;
  }
};

class SearchError : public Error {
 public:
  SearchError(const std::string& what, SearchReport report)
      : Error(ErrorKind::divergence, what), report_(std::move(report)) {}
  const SearchReport& report() const noexcept { return report_; }

 private:
  SearchReport report_;
};

namespace detail {

/// Stratified, seeded subset keeping at least one lesion per present class;
/// returned indices are in dataset order.
inline std::vector<std::size_t> stratified_subset(const std::vector<PreparedLesion>& data, double fraction,
                                                  std::uint64_t seed) {
  Rng rng(seed ^ 0x5bd1e9955bd1e995ULL);
  std::vector<std::size_t> chosen;
  for (Label cls : {Label::class1, Label::class2}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data[i].label == cls) idx.push_back(i);
    if (idx.empty()) continue;
    rng.shuffle(idx);
    const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * idx.size() - 1e-9)));
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<long>(std::min(take, idx.size())));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

inline double lesion_bce(double p, Label label) {
  constexpr double eps = 1e-12;
  p = std::clamp(p, eps, 1.0 - eps);
  return label == Label::class1 ? -std::log(p) : -std::log(1.0 - p);
}

}  // namespace detail

/// Validation loss of a trained classifier: mean lesion-level cross-entropy
/// of the class-1 probability averaged over the lesion's feature maps.
inline double pooled_validation_loss(const Classifier& clf, const std::vector<PreparedLesion>& val,
                                     const std::vector<std::vector<FeatureMap>>& maps_per_template) {
  double total = 0.0;
  for (std::size_t v = 0; v < val.size(); ++v) {
    double p = 0.0;
    for (const auto& per_lesion : maps_per_template) p += clf.probability(per_lesion[v].values);
    p /= static_cast<double>(maps_per_template.size());
    total += detail::lesion_bce(p, val[v].label);
  }
  return total / static_cast<double>(val.size());
}

inline SearchReport search_templates(const std::vector<PreparedLesion>& train, const std::vector<PreparedLesion>& val,
                                     const SearchConfig& cfg, const ClassifierFactory& factory,
                                     const AugmentConfig& augment,
                                     const std::function<void(const SearchEvent&)>& on_event = {}) {
  cfg.validate();
  if (train.empty() || val.empty()) throw ContractError("search needs nonempty train and validation sets");
  const int width = train.front().input.cols();
  const int height = train.front().input.rows();
  for (const auto* set : {&train, &val})
    for (const auto& l : *set)
      if (l.input.cols() != width || l.input.rows() != height)
        throw ContractError("lesion " + l.lesion_id + " does not match the search grid");

  const auto subset = detail::stratified_subset(train, cfg.eval_subset, cfg.rng_seed);
  std::vector<PreparedLesion> fit_set;
  for (std::size_t i : subset) fit_set.push_back(train[i]);

  SearchReport report;
  report.accepted.source = "random-driven search, seed " + std::to_string(cfg.rng_seed);
  report.initial_validation_loss = std::log(2.0);  // uninformed p = 0.5
  double current = report.initial_validation_loss;

  // Cached maps of accepted templates: [template][lesion].
  std::vector<std::vector<FeatureMap>> fit_maps, val_maps;
  Rng rng(cfg.rng_seed);

  auto features_for = [&](const std::vector<PreparedLesion>& set, const TemplateSet& t, bool& divergent) {
    std::vector<FeatureMap> maps(set.size());
    std::vector<char> div(set.size(), 0);
    AugmentConfig single = augment;
    single.checkpoint_policy = CheckpointPolicy::final_only;
    parallel_for(set.size(), augment.threads, [&](std::size_t i) {
      bool d = false;
      maps[i] = std::move(template_features(set[i].input, t, single, set[i].lesion_id, &d).front());
      div[i] = d;
    });
    for (char d : div) divergent = divergent || d;
    return maps;
  };

  for (int p = 0; p < cfg.max_proposals; ++p) {
    if (static_cast<int>(report.accepted.size()) >= cfg.target_count) break;
    TemplateSet cand = sample_template(rng, cfg, "m" + std::to_string(report.accepted.size() + 1));

    SearchEvent ev;
    ev.proposal = p;
    bool divergent = false;
    auto cand_fit = features_for(fit_set, cand, divergent);
    std::vector<FeatureMap> cand_val;
    if (!divergent) cand_val = features_for(val, cand, divergent);
    if (divergent) {
      ev.note = "divergent";
    } else {
      fit_maps.push_back(std::move(cand_fit));
      val_maps.push_back(std::move(cand_val));
      std::vector<LabeledFeature> samples;
      for (const auto& per_template : fit_maps)
        for (std::size_t i = 0; i < fit_set.size(); ++i) samples.push_back({per_template[i].values, fit_set[i].label});
      auto clf = factory();
      clf->fit(samples, width, height);
      ev.validation_loss = pooled_validation_loss(*clf, val, val_maps);
      ev.accepted = ev.validation_loss < current;
      if (ev.accepted) {
        current = ev.validation_loss;
        report.accepted.entries.push_back(cand);
      } else {
        fit_maps.pop_back();
        val_maps.pop_back();
      }
    }
    report.history.push_back(ev);
    if (on_event) on_event(ev);
  }
  report.final_validation_loss = current;
  if (report.accepted.empty()) throw SearchError("search failed to seed library", report);
  return report;
}

}  // namespace cnnforge
