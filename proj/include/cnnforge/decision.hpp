#pragma once

// Per-patient majority vote over per-feature classifications, the RECIST 1.1
// target-lesion rules, and confusion-matrix metrics (class 1 positive).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cnnforge/classifier.hpp"
#include "cnnforge/error.hpp"
#include "cnnforge/imaging.hpp"

namespace cnnforge {

struct PatientDecision {
  std::string patient_id;
  std::size_t votes_class1 = 0;
  std::size_t votes_class2 = 0;
  Label decided = Label::class2;
  std::size_t m_used = 0;
};

/// Strict majority of hard labels; an even split goes to class 2.
inline PatientDecision decide_votes(std::string patient_id, std::size_t class1, std::size_t class2) {
  if (class1 + class2 == 0) throw ContractError("no votes for patient '" + patient_id + "'");
  PatientDecision d;
  d.patient_id = std::move(patient_id);
  d.votes_class1 = class1;
  d.votes_class2 = class2;
  d.m_used = class1 + class2;
  d.decided = class1 > class2 ? Label::class1 : Label::class2;
  return d;
}

/// Majority over the hard labels of one patient's classifications.
inline PatientDecision decide_patient(std::span<const Classification> cls) {
  if (cls.empty()) throw ContractError("cannot decide a patient without classifications");
  const std::string& patient = cls.front().patient_id;
  std::size_t c1 = 0;
  for (const auto& c : cls) {
    if (c.patient_id != patient)
      throw ContractError("classifications from mixed patients ('" + patient + "', '" + c.patient_id + "')");
    c1 += c.hard_label == Label::class1;
  }
  return decide_votes(patient, c1, cls.size() - c1);
}

// ---------------------------------------------------------------- RECIST

enum class Response { CR, PR, SD, PD };

inline const char* to_string(Response r) {
  switch (r) {
    case Response::CR: return "CR";
    case Response::PR: return "PR";
    case Response::SD: return "SD";
    case Response::PD: return "PD";
  }
  return "?";
}

struct RecistAssessment {
  double baseline_ld_sum_mm = 0.0;
  double followup_ld_sum_mm = 0.0;
  bool all_target_lesions_disappeared = false;
  Response category = Response::SD;
};

inline constexpr double kMinTargetDiameterMm = 20.0;
inline constexpr double kPartialResponseRatio = 0.70;
inline constexpr double kProgressionRatio = 1.20;

inline bool recist_eligible(double ld_mm) {
  if (!(ld_mm > 0.0)) throw ContractError("longest diameter must be positive");
  return ld_mm >= kMinTargetDiameterMm;
}
inline bool recist_eligible(const LesionRecord& lesion) { return recist_eligible(lesion.ld_mm); }

/// CR -> PD -> PR -> SD, thresholds inclusive. The relative slack only
/// absorbs rounding when a follow-up is computed as ratio * baseline.
inline RecistAssessment recist_assess(double baseline_mm, double followup_mm, bool disappeared) {
  if (!(baseline_mm > 0.0) || !std::isfinite(baseline_mm)) throw ContractError("baseline LD sum must be positive");
  if (!(followup_mm >= 0.0) || !std::isfinite(followup_mm)) throw ContractError("follow-up LD sum must be >= 0");
  if (disappeared && followup_mm > 0.0) throw ContractError("inconsistent assessment");
  constexpr double slack = 1e-12;
  RecistAssessment a{baseline_mm, followup_mm, disappeared, Response::SD};
  if (disappeared)
    a.category = Response::CR;
  else if (followup_mm >= kProgressionRatio * baseline_mm * (1.0 - slack))
    a.category = Response::PD;
  else if (followup_mm <= kPartialResponseRatio * baseline_mm * (1.0 + slack))
    a.category = Response::PR;
  return a;
}

inline Label recist_to_class(Response r) { return r == Response::PD ? Label::class2 : Label::class1; }
inline Label recist_to_class(const RecistAssessment& a) { return recist_to_class(a.category); }

// ---------------------------------------------------------------- metrics

struct MetricsReport {
  std::size_t tp = 0, fn = 0, fp = 0, tn = 0;

  static std::optional<double> ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  }
  std::optional<double> accuracy() const { return ratio(tp + tn, tp + tn + fp + fn); }
  std::optional<double> sensitivity() const { return ratio(tp, tp + fn); }
  std::optional<double> specificity() const { return ratio(tn, tn + fp); }

  /// Percentage truncated to two decimals ("86.66" for 13/15), computed in
  /// integer arithmetic; "undefined" for an empty denominator.
  static std::string percent(std::size_t num, std::size_t den) {
    if (den == 0) return "undefined";
    const std::uint64_t hundredths = static_cast<std::uint64_t>(num) * 10000u / den;
    std::string frac = std::to_string(hundredths % 100);
    if (frac.size() < 2) frac.insert(0, "0");
    return std::to_string(hundredths / 100) + "." + frac;
  }
  std::string accuracy_text() const { return percent(tp + tn, tp + tn + fp + fn); }
  std::string sensitivity_text() const { return percent(tp, tp + fn); }
  std::string specificity_text() const { return percent(tn, tn + fp); }

  std::string to_text() const {
    std::string out;
    out += "patients     " + std::to_string(tp + fn + fp + tn) + "\n";
    out += "TP " + std::to_string(tp) + "  FN " + std::to_string(fn) + "  FP " + std::to_string(fp) + "  TN " +
           std::to_string(tn) + "\n";
    out += "accuracy     " + accuracy_text() + " %\n";
    out += "sensitivity  " + sensitivity_text() + " %\n";
    out += "specificity  " + specificity_text() + " %\n";
    return out;
  }

  std::string to_csv() const {
    return "tp,fn,fp,tn,accuracy,sensitivity,specificity\n" + std::to_string(tp) + "," + std::to_string(fn) + "," +
           std::to_string(fp) + "," + std::to_string(tn) + "," + accuracy_text() + "," + sensitivity_text() + "," +
           specificity_text() + "\n";
  }
};

struct DecisionOutcome {
  PatientDecision decision;
  Label truth = Label::class1;
};

inline MetricsReport compute_metrics(std::span<const DecisionOutcome> outcomes) {
  if (outcomes.empty()) throw ContractError("no decisions to score");
  MetricsReport r;
  for (const auto& o : outcomes) {
    const bool predicted1 = o.decision.decided == Label::class1;
    if (o.truth == Label::class1)
      (predicted1 ? r.tp : r.fn) += 1;
    else
      (predicted1 ? r.fp : r.tn) += 1;
  }
  return r;
}

}  // namespace cnnforge
