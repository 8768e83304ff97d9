#pragma once

// Reference downstream classifier: flatten -> tanh hidden layer -> sigmoid,
// trained with mini-batch SGD with momentum on binary cross-entropy.
// Class 1 is the positive target (t = 1).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cnnforge/imaging.hpp"
#include "cnnforge/rng.hpp"
#include "cnnforge/textio.hpp"

namespace cnnforge {

struct TrainConfig {
  int batch_size = 10;
  double learning_rate = 3e-4;
  int max_epochs = 50;  // early stopping usually ends runs sooner
  double momentum = 0.9;
  std::uint64_t rng_seed = 7;
  int hidden_units = 64;
  int early_stop_patience = 20;

  void validate() const {
    if (batch_size < 1) throw ContractError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
    if (max_epochs < 0) throw ContractError("max_epochs must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must lie in [0, 1)");
    if (hidden_units < 1) throw ContractError("hidden_units must be >= 1");
    if (early_stop_patience < 0) throw ContractError("early_stop_patience must be >= 0");
  }
};

struct LabeledFeature {
  std::span<const float> values;
  Label label = Label::class1;
};

struct Model {
  int input_width = 0;
  int input_height = 0;
  int hidden = 0;
  std::vector<double> w1;  // hidden x input, row-major
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;
  TrainConfig config;
  std::vector<double> loss_curve;        // mean training loss per epoch
  std::vector<double> validation_curve;  // per epoch, when a validation set is given

  std::size_t input_size() const { return static_cast<std::size_t>(input_width) * input_height; }
  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + 1; }

  /// Flat parameter view: w1, b1, w2, b2.
  double& parameter(std::size_t k) {
    if (k < w1.size()) return w1[k];
    k -= w1.size();
    if (k < b1.size()) return b1[k];
    k -= b1.size();
    if (k < w2.size()) return w2[k];
    return b2;
  }
};

struct Classification {
  std::string patient_id;  // filled in by callers that know the manifest
  std::string lesion_id;
  std::string template_name;
  double p_class1 = 0.5;
  Label hard_label = Label::class1;
};

inline Label label_for_probability(double p) { return p >= 0.5 ? Label::class1 : Label::class2; }

inline Model init_model(int width, int height, const TrainConfig& cfg) {
  if (width < 1 || height < 1) throw ContractError("model input dimensions must be positive");
  Model m;
  m.input_width = width;
  m.input_height = height;
  m.hidden = cfg.hidden_units;
  m.config = cfg;
  const std::size_t in = m.input_size();
  const std::size_t hid = static_cast<std::size_t>(cfg.hidden_units);
  Rng rng(cfg.rng_seed);
  const double lim1 = std::sqrt(6.0 / static_cast<double>(in + hid));
  const double lim2 = std::sqrt(6.0 / static_cast<double>(hid + 1));
  m.w1.resize(hid * in);
  for (double& v : m.w1) v = rng.uniform(-lim1, lim1);
  m.b1.assign(hid, 0.0);
  m.w2.resize(hid);
  for (double& v : m.w2) v = rng.uniform(-lim2, lim2);
  return m;
}

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Binary cross-entropy on the logit: softplus(z) - t z.
inline double bce_logit(double z, double target) {
  return std::max(z, 0.0) - target * z + std::log1p(std::exp(-std::fabs(z)));
}

inline double target_of(Label l) { return l == Label::class1 ? 1.0 : 0.0; }

/// Forward pass; fills `hidden` and returns the output logit.
inline double forward(const Model& m, std::span<const float> x, std::vector<double>& hidden) {
  const std::size_t in = m.input_size();
  hidden.resize(static_cast<std::size_t>(m.hidden));
  double z2 = m.b2;
  for (int j = 0; j < m.hidden; ++j) {
    const double* row = m.w1.data() + static_cast<std::size_t>(j) * in;
    double z = m.b1[j];
    for (std::size_t i = 0; i < in; ++i) z += row[i] * static_cast<double>(x[i]);
    hidden[j] = std::tanh(z);
    z2 += m.w2[j] * hidden[j];
  }
  return z2;
}

/// Accumulates scale * dL/dtheta into `grad` (flat layout) and returns L.
inline double accumulate_gradient(const Model& m, std::span<const float> x, double target, double scale,
                                  std::vector<double>& grad, std::vector<double>& hidden) {
  const double z2 = forward(m, x, hidden);
  const double loss = bce_logit(z2, target);
  const double dz2 = (sigmoid(z2) - target) * scale;
  const std::size_t in = m.input_size();
  const std::size_t off_b1 = m.w1.size();
  const std::size_t off_w2 = off_b1 + m.b1.size();
  const std::size_t off_b2 = off_w2 + m.w2.size();
  for (int j = 0; j < m.hidden; ++j) {
    grad[off_w2 + j] += dz2 * hidden[j];
    const double dz1 = dz2 * m.w2[j] * (1.0 - hidden[j] * hidden[j]);
    grad[off_b1 + j] += dz1;
    if (dz1 == 0.0) continue;
    double* row = grad.data() + static_cast<std::size_t>(j) * in;
    for (std::size_t i = 0; i < in; ++i) row[i] += dz1 * static_cast<double>(x[i]);
  }
  grad[off_b2] += dz2;
  return loss;
}

inline double mean_loss(const Model& m, std::span<const LabeledFeature> data) {
  std::vector<double> hidden;
  double s = 0.0;
  for (const auto& d : data) s += bce_logit(forward(m, d.values, hidden), target_of(d.label));
  return data.empty() ? 0.0 : s / static_cast<double>(data.size());
}

inline void check_samples(const Model& m, std::span<const LabeledFeature> data) {
  for (const auto& d : data)
    if (d.values.size() != m.input_size()) throw ContractError("feature dimensions do not match model input");
}

}  // namespace detail

/// Probability of class 1 for a raw feature vector.
inline double predict_probability(const Model& m, std::span<const float> x) {
  if (x.size() != m.input_size()) throw ContractError("feature dimensions do not match model input");
  std::vector<double> hidden;
  return detail::sigmoid(detail::forward(m, x, hidden));
}

inline Classification predict(const Model& m, const FeatureMap& f) {
  if (f.width != m.input_width || f.height != m.input_height)
    throw ContractError("feature map " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                        " does not match model input " + std::to_string(m.input_width) + "x" +
                        std::to_string(m.input_height));
  const double p = predict_probability(m, f.values);
  return {"", f.lesion_id, f.template_name, p, label_for_probability(p)};
}

/// Mean binary cross-entropy of the model on `data`.
inline double evaluate_loss(const Model& m, std::span<const LabeledFeature> data) {
  detail::check_samples(m, data);
  return detail::mean_loss(m, data);
}

/// SGD with momentum: v <- momentum v - lr grad; theta <- theta + v.
/// With a validation set and patience > 0, stops after `patience` epochs
/// without validation improvement and returns the best parameters seen.
inline Model train(std::span<const LabeledFeature> data, int width, int height, const TrainConfig& cfg,
                   std::span<const LabeledFeature> validation = {}) {
  cfg.validate();
  if (data.empty()) throw ContractError("degenerate training set: no samples");
  bool has1 = false, has2 = false;
  for (const auto& d : data) (d.label == Label::class1 ? has1 : has2) = true;
  if (!has1 || !has2) throw ContractError("degenerate training set: a single class is present");

  Model m = init_model(width, height, cfg);
  detail::check_samples(m, data);
  detail::check_samples(m, validation);

  const std::size_t np = m.parameter_count();
  std::vector<double> grad(np), velocity(np, 0.0), hidden;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffler(cfg.rng_seed ^ 0x9e3779b97f4a7c15ULL);

  Model best = m;
  double best_val = validation.empty() ? 0.0 : detail::mean_loss(m, validation);
  int stale = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffler.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const auto& s = data[order[b]];
        epoch_loss += detail::accumulate_gradient(m, s.values, detail::target_of(s.label), scale, grad, hidden);
      }
      for (std::size_t k = 0; k < np; ++k) {
        velocity[k] = cfg.momentum * velocity[k] - cfg.learning_rate * grad[k];
        m.parameter(k) += velocity[k];
      }
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss))
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch), epoch);
    m.loss_curve.push_back(epoch_loss);

    if (!validation.empty()) {
      const double v = detail::mean_loss(m, validation);
      m.validation_curve.push_back(v);
      if (cfg.early_stop_patience > 0) {
        if (v < best_val) {
          best_val = v;
          best = m;
          stale = 0;
        } else if (++stale >= cfg.early_stop_patience) {
          break;
        }
      }
    }
  }
  if (!validation.empty() && cfg.early_stop_patience > 0 && !m.loss_curve.empty()) {
    // keep the training record of the full run on the returned parameters
    best.loss_curve = m.loss_curve;
    best.validation_curve = m.validation_curve;
    return best;
  }
  return m;
}

/// Largest relative error between the analytic loss gradient and central
/// differences over `coordinates` randomly chosen parameters.
inline double numerical_gradient_check(const Model& model, std::span<const float> x, Label label, double epsilon,
                                       std::uint64_t seed = 1, std::size_t coordinates = 64) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw ContractError("epsilon must lie in [1e-7, 1e-3]");
  if (x.size() != model.input_size()) throw ContractError("feature dimensions do not match model input");
  const double target = detail::target_of(label);
  std::vector<double> grad(model.parameter_count(), 0.0), hidden;
  detail::accumulate_gradient(model, x, target, 1.0, grad, hidden);

  Model probe = model;
  Rng rng(seed);
  const std::size_t n = std::max<std::size_t>(50, coordinates);
  double worst = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t k = rng.index(probe.parameter_count());
    const double saved = probe.parameter(k);
    probe.parameter(k) = saved + epsilon;
    const double up = detail::bce_logit(detail::forward(probe, x, hidden), target);
    probe.parameter(k) = saved - epsilon;
    const double down = detail::bce_logit(detail::forward(probe, x, hidden), target);
    probe.parameter(k) = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({std::fabs(grad[k]), std::fabs(numeric), 1e-6});
    worst = std::max(worst, std::fabs(grad[k] - numeric) / denom);
  }
  return worst;
}

/// Analytic gradient of the single-sample loss (flat layout w1, b1, w2, b2).
inline std::vector<double> loss_gradient(const Model& model, std::span<const float> x, Label label) {
  if (x.size() != model.input_size()) throw ContractError("feature dimensions do not match model input");
  std::vector<double> grad(model.parameter_count(), 0.0), hidden;
  detail::accumulate_gradient(model, x, detail::target_of(label), 1.0, grad, hidden);
  return grad;
}

// ---------------------------------------------------------------- persistence

inline constexpr const char* kModelMagic = "cnnforge-model v1";

inline std::string format_model(const Model& m) {
  std::string out = std::string(kModelMagic) + "\n";
  out += "input " + std::to_string(m.input_width) + " " + std::to_string(m.input_height) + "\n";
  out += "hidden " + std::to_string(m.hidden) + "\n";
  auto row = [&](const char* key, const std::vector<double>& v) {
    out += key;
    for (double x : v) out += " " + text::format_real(x);
    out += "\n";
  };
  row("w1", m.w1);
  row("b1", m.b1);
  row("w2", m.w2);
  out += "b2 " + text::format_real(m.b2) + "\n";
  row("loss", m.loss_curve);
  return out;
}

inline Model parse_model(const std::string& content, const std::string& origin = "<memory>") {
  Model m;
  std::size_t pos = 0, line_no = 0;
  auto next_line = [&]() -> std::string_view {
    if (pos >= content.size()) throw ParseError(origin, line_no + 1, "unexpected end of model file");
    std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) nl = content.size();
    std::string_view line = std::string_view(content).substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    return line;
  };
  auto values = [&](const char* key, std::size_t expect, bool exact) {
    auto tok = text::split_ws(next_line());
    if (tok.empty() || tok[0] != key) throw ParseError(origin, line_no, std::string("expected '") + key + "'");
    if (exact && tok.size() - 1 != expect)
      throw ParseError(origin, line_no, std::string("wrong arity for '") + key + "'");
    std::vector<double> v;
    for (std::size_t i = 1; i < tok.size(); ++i) {
      auto r = text::parse_real(tok[i]);
      if (!r || !std::isfinite(*r)) throw ParseError(origin, line_no, "malformed real");
      v.push_back(*r);
    }
    return v;
  };
  if (next_line() != kModelMagic) throw ParseError(origin, line_no, "bad model header");
  auto dims = values("input", 2, true);
  auto hid = values("hidden", 1, true);
  if (dims[0] < 1 || dims[1] < 1 || hid[0] < 1) throw ParseError(origin, line_no, "invalid model shape");
  m.input_width = static_cast<int>(dims[0]);
  m.input_height = static_cast<int>(dims[1]);
  m.hidden = static_cast<int>(hid[0]);
  m.config.hidden_units = m.hidden;
  const std::size_t h = static_cast<std::size_t>(m.hidden);
  m.w1 = values("w1", h * m.input_size(), true);
  m.b1 = values("b1", h, true);
  m.w2 = values("w2", h, true);
  m.b2 = values("b2", 1, true)[0];
  m.loss_curve = values("loss", 0, false);
  return m;
}

inline void save_model(const Model& m, const std::string& path) { text::write_file(path, format_model(m)); }
inline Model load_model(const std::string& path) { return parse_model(text::read_file(path), path); }

// ---------------------------------------------------------------- plug-in surface

/// Any backbone that can be fit on labeled maps and emit P(class 1).
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual void fit(std::span<const LabeledFeature> data, int width, int height) = 0;
  virtual double probability(std::span<const float> x) const = 0;
};

using ClassifierFactory = std::function<std::unique_ptr<Classifier>()>;

class MlpClassifier : public Classifier {
 public:
  explicit MlpClassifier(TrainConfig cfg) : cfg_(cfg) {}
  void fit(std::span<const LabeledFeature> data, int width, int height) override {
    model_ = train(data, width, height, cfg_);
  }
  double probability(std::span<const float> x) const override { return predict_probability(model_, x); }
  const Model& model() const { return model_; }

 private:
  TrainConfig cfg_;
  Model model_;
};

inline ClassifierFactory mlp_factory(TrainConfig cfg) {
  return [cfg] { return std::make_unique<MlpClassifier>(cfg); };
}

}  // namespace cnnforge
