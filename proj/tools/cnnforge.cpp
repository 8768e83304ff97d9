// cnnforge command-line driver.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cnnforge/cnnforge.hpp"

namespace fs = std::filesystem;
using namespace cnnforge;

namespace {

// ---------------------------------------------------------------- run config

struct KeySpec {
  const char* key;
  const char* fallback;
};

// Every recognised key with its default; empty means "unset".
constexpr KeySpec kKeys[] = {
    {"manifest", ""},          {"templates", ""},     {"image", ""},           {"features", ""},
    {"model", ""},             {"predictions", ""},   {"out", ""},             {"split", "test"},
    {"roi", ""},               {"grid", "64x64"},     {"dt", "0.05"},          {"method", "rk4"},
    {"boundary", "zero"},      {"blowup_guard", "1e6"}, {"tfinal", ""},         {"checkpoint_policy", "final_only"},
    {"checkpoint_times", ""},  {"threads", "1"},      {"search_seed", "1"},    {"target_count", "97"},
    {"max_proposals", "200"},  {"eval_subset", "0.25"}, {"value_range", "4"},   {"bias_range", "2"},
    {"t_final_choices", "1,2.5,5"}, {"batch_size", "10"}, {"learning_rate", "3e-4"}, {"max_epochs", "50"},
    {"momentum", "0.9"},       {"train_seed", "7"},   {"hidden_units", "64"},  {"patience", "20"},
    {"val_fraction", "0.2"},   {"synth_seed", "2024"}, {"train_class1", "28"}, {"train_class2", "48"},
    {"test_class1", "15"},     {"test_class2", "15"}, {"image_size", "128"},
};

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : kKeys) values_[k.key] = k.fallback;
  }

  void load(const std::string& path) {
    const std::string content = text::read_file(path);
    std::size_t pos = 0, line_no = 0;
    while (pos <= content.size()) {
      std::size_t nl = content.find('\n', pos);
      if (nl == std::string::npos) nl = content.size();
      ++line_no;
      std::string_view line = text::trim(std::string_view(content).substr(pos, nl - pos));
      pos = nl + 1;
      if (line.empty() || line.front() == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError(path, line_no, "expected key = value");
      const std::string key(text::trim(line.substr(0, eq)));
      if (!values_.count(key)) throw ParseError(path, line_no, "unknown key '" + key + "'");
      values_[key] = std::string(text::trim(line.substr(eq + 1)));
    }
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw InputError("unknown key '" + key + "'");
    values_[key] = value;
  }

  const std::string& str(const std::string& key) const { return values_.at(key); }

  const std::string& required(const std::string& key) const {
    const auto& v = str(key);
    if (v.empty()) throw InputError("missing required setting '" + key + "'");
    return v;
  }

  double real(const std::string& key) const {
    auto v = text::parse_real(str(key));
    if (!v) throw InputError("setting '" + key + "' is not a number: '" + str(key) + "'");
    return *v;
  }

  long long integer(const std::string& key) const {
    auto v = text::parse_int(str(key));
    if (!v) throw InputError("setting '" + key + "' is not an integer: '" + str(key) + "'");
    return *v;
  }

  int small_int(const std::string& key) const {
    const long long v = integer(key);
    if (v < -1000000000LL || v > 1000000000LL) throw InputError("setting '" + key + "' is out of range");
    return static_cast<int>(v);
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    if (str(key).empty()) return out;
    for (const auto& part : text::split(str(key), ',')) {
      auto v = text::parse_real(text::trim(part));
      if (!v) throw InputError("setting '" + key + "' has a bad entry '" + part + "'");
      out.push_back(*v);
    }
    return out;
  }

  std::pair<int, int> grid() const {
    const auto parts = text::split(str("grid"), 'x');
    if (parts.size() == 2) {
      auto w = text::parse_int(parts[0]), h = text::parse_int(parts[1]);
      if (w && h && *w > 0 && *h > 0 && *w <= 4096 && *h <= 4096) return {static_cast<int>(*w), static_cast<int>(*h)};
    }
    throw InputError("grid must look like WxH, got '" + str("grid") + "'");
  }

  /// Writes the resolved configuration plus a version line.
  void stamp(const std::string& dir, const std::string& command) const {
    std::string out = "# cnnforge " + std::string(kVersion) + "\n# command " + command + "\n";
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    fs::create_directories(dir);
    text::write_file((fs::path(dir) / "run.cfg").string(), out);
  }

 private:
  std::map<std::string, std::string> values_;
};

AugmentConfig augment_config(const RunConfig& rc) {
  AugmentConfig ac;
  std::tie(ac.grid_w, ac.grid_h) = rc.grid();
  ac.integration.dt = rc.real("dt");
  ac.integration.method = parse_method(rc.str("method"));
  ac.integration.boundary = parse_boundary(rc.str("boundary"));
  ac.integration.blowup_guard = rc.real("blowup_guard");
  ac.integration.checkpoint_times = rc.reals("checkpoint_times");
  ac.checkpoint_policy = parse_checkpoint_policy(rc.str("checkpoint_policy"));
  const long long threads = rc.integer("threads");
  if (threads < 1 || threads > 256) throw InputError("threads must lie in [1, 256]");
  ac.threads = static_cast<unsigned>(threads);
  ac.validate();
  return ac;
}

TrainConfig train_config(const RunConfig& rc) {
  TrainConfig tc;
  tc.batch_size = rc.small_int("batch_size");
  tc.learning_rate = rc.real("learning_rate");
  tc.max_epochs = rc.small_int("max_epochs");
  tc.momentum = rc.real("momentum");
  tc.rng_seed = static_cast<std::uint64_t>(rc.integer("train_seed"));
  tc.hidden_units = rc.small_int("hidden_units");
  tc.early_stop_patience = rc.small_int("patience");
  tc.validate();
  return tc;
}

SearchConfig search_config(const RunConfig& rc) {
  SearchConfig sc;
  sc.rng_seed = static_cast<std::uint64_t>(rc.integer("search_seed"));
  sc.target_count = rc.small_int("target_count");
  sc.max_proposals = rc.small_int("max_proposals");
  sc.eval_subset = rc.real("eval_subset");
  sc.value_range = rc.real("value_range");
  sc.bias_range = rc.real("bias_range");
  sc.t_final_choices = rc.reals("t_final_choices");
  sc.validate();
  return sc;
}

double val_fraction(const RunConfig& rc) {
  const double f = rc.real("val_fraction");
  if (!(f > 0.0 && f < 1.0)) throw ContractError("val_fraction must lie in (0, 1)");
  return f;
}

// ---------------------------------------------------------------- helpers

/// Seeded, stratified hold-out: indices (into `labels`) assigned to validation.
std::set<std::size_t> holdout(const std::vector<Label>& labels, double fraction, std::uint64_t seed) {
  Rng rng(seed ^ 0xa0761d6478bd642fULL);
  std::set<std::size_t> out;
  for (Label cls : {Label::class1, Label::class2}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    if (idx.size() < 2) continue;
    rng.shuffle(idx);
    const auto take = std::clamp<std::size_t>(static_cast<std::size_t>(fraction * idx.size() + 0.5), 1, idx.size() - 1);
    out.insert(idx.begin(), idx.begin() + static_cast<long>(take));
  }
  return out;
}

std::map<std::string, LesionRecord> lesions_by_id(const std::vector<LesionRecord>& rows) {
  std::map<std::string, LesionRecord> out;
  for (const auto& r : rows)
    if (!out.emplace(r.lesion_id, r).second) throw ContractError("duplicate lesion_id '" + r.lesion_id + "'");
  return out;
}

/// Feature files under `<root>/<split>/<lesion>/`, sorted by path.
std::vector<fs::path> feature_files(const std::string& root, const std::string& split) {
  std::vector<fs::path> out;
  const fs::path dir = fs::path(root) / split;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".cnnf") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw InputError("no such file '" + path + "'");
}

// ---------------------------------------------------------------- commands

int cmd_simulate(const RunConfig& rc) {
  const std::string image_path = rc.required("image"), lib_path = rc.required("templates"), out = rc.required("out");
  require_file(image_path);
  require_file(lib_path);
  TemplateLibrary lib = load_library(lib_path);
  if (!rc.str("tfinal").empty()) {
    const double tf = rc.real("tfinal");
    for (auto& t : lib.entries) t.t_final = tf;
  }
  lib.validate();
  AugmentConfig ac = augment_config(rc);
  GrayImage img = read_pgm(image_path);
  if (!rc.str("roi").empty()) {
    const auto parts = text::split(rc.str("roi"), ',');
    std::vector<int> v;
    for (const auto& p : parts) {
      auto n = text::parse_int(text::trim(p));
      if (!n) throw InputError("roi must be cx,cy,w,h");
      v.push_back(static_cast<int>(*n));
    }
    if (v.size() != 4) throw InputError("roi must be cx,cy,w,h");
    img = crop_roi(img, v[0], v[1], v[2], v[3]);
  }
  const std::string lesion = fs::path(image_path).stem().string();
  std::vector<std::size_t> divergent;
  auto maps = generate_features(img, lib, ac, lesion, &divergent);
  fs::create_directories(out);
  std::size_t k = 0;
  for (std::size_t m = 0; m < lib.size(); ++m) {
    const auto& t = lib.entries[m];
    const bool div = std::find(divergent.begin(), divergent.end(), m) != divergent.end();
    for (; k < maps.size() && maps[k].template_name == t.name; ++k) {
      const std::string name = feature_file_name(maps[k], t);
      const fs::path base = fs::path(out) / name;
      write_feature(maps[k], base.string());
      fs::path preview = base;
      preview.replace_extension(".pgm");
      write_pgm(render_cells(maps[k].values, maps[k].width, maps[k].height), preview.string());
      std::cout << name << (div ? " divergent" : "") << "\n";
    }
  }
  rc.stamp(out, "simulate");
  return 0;
}

int cmd_augment(const RunConfig& rc) {
  const std::string manifest = rc.required("manifest"), lib_path = rc.required("templates"), out = rc.required("out");
  require_file(manifest);
  require_file(lib_path);
  const auto rows = read_manifest(manifest);
  const auto lib = load_library(lib_path);
  const auto summary = augment_dataset(rows, manifest, lib, augment_config(rc), out);
  rc.stamp(out, "augment");
  text::write_file((fs::path(out) / "summary.csv").string(), summary.to_csv());
  std::cout << summary.to_csv();
  for (const auto& [lesion, tmpl] : summary.divergent)
    std::cerr << "warning: template " << tmpl << " diverged on lesion " << lesion << "\n";
  return 0;
}

int cmd_search(const RunConfig& rc) {
  const std::string manifest = rc.required("manifest"), out = rc.required("out");
  require_file(manifest);
  const SearchConfig sc = search_config(rc);
  const AugmentConfig ac = augment_config(rc);
  const TrainConfig tc = train_config(rc);
  const auto rows = read_manifest(manifest);

  std::vector<PreparedLesion> train, val;
  for (const auto& r : rows) {
    if (r.split == Split::test) continue;
    const std::string path = resolve_image_path(manifest, r.image_path);
    require_file(path);
    PreparedLesion p{r.lesion_id, r.patient_id, r.label, prepare_input(read_pgm(path), ac)};
    (r.split == Split::val ? val : train).push_back(std::move(p));
  }
  if (val.empty()) {
    std::vector<Label> labels;
    for (const auto& p : train) labels.push_back(p.label);
    const auto held = holdout(labels, val_fraction(rc), sc.rng_seed);
    std::vector<PreparedLesion> keep;
    for (std::size_t i = 0; i < train.size(); ++i) (held.count(i) ? val : keep).push_back(std::move(train[i]));
    train = std::move(keep);
  }
  std::cerr << "search: " << train.size() << " fit lesions, " << val.size() << " validation lesions\n";

  TrainConfig inner = tc;
  inner.early_stop_patience = 0;
  auto report_progress = [&](const SearchEvent& e) {
    if (e.accepted)
      std::cerr << "proposal " << e.proposal << " accepted, validation loss " << text::format_real(e.validation_loss)
                << "\n";
  };
  SearchReport report;
  try {
    report = search_templates(train, val, sc, mlp_factory(inner), ac, report_progress);
  } catch (const SearchError& e) {
    fs::create_directories(out);
    text::write_file((fs::path(out) / "search_history.csv").string(), e.report().history_csv());
    rc.stamp(out, "search");
    throw;
  }
  fs::create_directories(out);
  save_library(report.accepted, (fs::path(out) / "templates.txt").string());
  text::write_file((fs::path(out) / "search_history.csv").string(), report.history_csv());
  rc.stamp(out, "search");
  std::cout << "accepted " << report.accepted.size() << " of " << report.history.size() << " proposals\n"
            << "validation loss " << text::format_real(report.initial_validation_loss) << " -> "
            << text::format_real(report.final_validation_loss) << "\n";
  if (static_cast<int>(report.accepted.size()) < sc.target_count)
    std::cerr << "warning: proposal budget exhausted before reaching " << sc.target_count << " templates\n";
  return 0;
}

struct LoadedFeatures {
  std::vector<FeatureMap> maps;
  std::vector<Label> labels;
  std::vector<std::string> lesion_of;
};

LoadedFeatures load_split(const std::string& root, const std::string& split,
                          const std::map<std::string, LesionRecord>& by_id) {
  LoadedFeatures lf;
  for (const auto& path : feature_files(root, split)) {
    FeatureMap f = read_feature(path.string());
    auto it = by_id.find(f.lesion_id);
    if (it == by_id.end()) throw InputError("feature " + path.string() + " names unknown lesion '" + f.lesion_id + "'");
    if (!lf.maps.empty() && (f.width != lf.maps.front().width || f.height != lf.maps.front().height))
      throw ContractError("feature " + path.string() + " has inconsistent dimensions");
    lf.labels.push_back(it->second.label);
    lf.lesion_of.push_back(f.lesion_id);
    lf.maps.push_back(std::move(f));
  }
  return lf;
}

int cmd_train(const RunConfig& rc) {
  const std::string features = rc.required("features"), manifest = rc.required("manifest"), out = rc.required("out");
  require_file(manifest);
  const TrainConfig tc = train_config(rc);
  const auto by_id = lesions_by_id(read_manifest(manifest));
  LoadedFeatures tr = load_split(features, "train", by_id);
  if (tr.maps.empty()) throw InputError("no feature files under '" + (fs::path(features) / "train").string() + "'");
  LoadedFeatures va = load_split(features, "val", by_id);

  std::vector<LabeledFeature> fit, hold;
  if (!va.maps.empty()) {
    for (std::size_t i = 0; i < tr.maps.size(); ++i) fit.push_back({tr.maps[i].values, tr.labels[i]});
    for (std::size_t i = 0; i < va.maps.size(); ++i) hold.push_back({va.maps[i].values, va.labels[i]});
  } else {
    // hold out whole lesions so no lesion leaks across the split
    std::vector<std::string> ids;
    std::vector<Label> labels;
    for (std::size_t i = 0; i < tr.maps.size(); ++i)
      if (ids.empty() || ids.back() != tr.lesion_of[i]) {
        ids.push_back(tr.lesion_of[i]);
        labels.push_back(tr.labels[i]);
      }
    const auto held = holdout(labels, val_fraction(rc), tc.rng_seed);
    std::set<std::string> held_ids;
    for (std::size_t i : held) held_ids.insert(ids[i]);
    for (std::size_t i = 0; i < tr.maps.size(); ++i)
      (held_ids.count(tr.lesion_of[i]) ? hold : fit).push_back({tr.maps[i].values, tr.labels[i]});
  }
  const int w = tr.maps.front().width, h = tr.maps.front().height;
  if (!va.maps.empty() && (va.maps.front().width != w || va.maps.front().height != h))
    throw ContractError("validation features do not match training dimensions");
  Model model = train(fit, w, h, tc, hold);

  fs::create_directories(out);
  save_model(model, (fs::path(out) / "model.txt").string());
  std::string curve = "epoch,train_loss,validation_loss\n";
  for (std::size_t e = 0; e < model.loss_curve.size(); ++e)
    curve += std::to_string(e) + "," + text::format_real(model.loss_curve[e]) + "," +
             (e < model.validation_curve.size() ? text::format_real(model.validation_curve[e]) : "") + "\n";
  text::write_file((fs::path(out) / "loss_curve.csv").string(), curve);
  rc.stamp(out, "train");
  std::cout << "trained on " << fit.size() << " maps, held out " << hold.size() << ", " << model.loss_curve.size()
            << " epochs\n";
  return 0;
}

int cmd_predict(const RunConfig& rc) {
  const std::string model_path = rc.required("model"), features = rc.required("features"),
                    manifest = rc.required("manifest"), out = rc.required("out");
  require_file(model_path);
  require_file(manifest);
  const Model model = load_model(model_path);
  const auto by_id = lesions_by_id(read_manifest(manifest));
  const std::string split = rc.str("split");
  parse_split(split);
  const auto files = feature_files(features, split);
  if (files.empty()) throw InputError("no feature files under '" + (fs::path(features) / split).string() + "'");
  std::string csv = "patient_id,lesion_id,template_name,p_class1,label\n";
  for (const auto& path : files) {
    const FeatureMap f = read_feature(path.string());
    auto it = by_id.find(f.lesion_id);
    if (it == by_id.end()) throw InputError("feature " + path.string() + " names unknown lesion '" + f.lesion_id + "'");
    Classification c = predict(model, f);
    c.patient_id = it->second.patient_id;
    csv += c.patient_id + "," + c.lesion_id + "," + c.template_name + "," + text::format_real(c.p_class1) + "," +
           to_string(c.hard_label) + "\n";
  }
  fs::create_directories(out);
  text::write_file((fs::path(out) / "predictions.csv").string(), csv);
  rc.stamp(out, "predict");
  std::cout << "wrote " << files.size() << " predictions\n";
  return 0;
}

std::vector<Classification> read_predictions(const std::string& path) {
  const std::string content = text::read_file(path);
  std::vector<Classification> out;
  std::size_t pos = 0, line_no = 0;
  bool header = false;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) nl = content.size();
    ++line_no;
    std::string_view line = text::trim(std::string_view(content).substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    if (!header) {
      if (line != "patient_id,lesion_id,template_name,p_class1,label")
        throw ParseError(path, line_no, "unexpected predictions header");
      header = true;
      continue;
    }
    const auto cols = text::split(line, ',');
    if (cols.size() != 5) throw ParseError(path, line_no, "expected 5 columns, found " + std::to_string(cols.size()));
    auto p = text::parse_real(cols[3]);
    if (!p || *p < 0.0 || *p > 1.0) throw ParseError(path, line_no, "bad probability '" + cols[3] + "'");
    try {
      out.push_back({cols[0], cols[1], cols[2], *p, parse_label(cols[4])});
    } catch (const InputError& e) {
      throw ParseError(path, line_no, e.what());
    }
  }
  if (!header) throw InputError("predictions file '" + path + "' is empty");
  return out;
}

int cmd_evaluate(const RunConfig& rc) {
  const std::string preds = rc.required("predictions"), manifest = rc.required("manifest");
  require_file(preds);
  require_file(manifest);
  std::map<std::string, Label> truth;
  for (const auto& r : read_manifest(manifest)) {
    auto [it, fresh] = truth.emplace(r.patient_id, r.label);
    if (!fresh && it->second != r.label)
      throw ContractError("patient '" + r.patient_id + "' has lesions with conflicting labels");
  }
  std::map<std::string, std::vector<Classification>> per_patient;
  for (auto& c : read_predictions(preds)) {
    if (!truth.count(c.patient_id)) throw InputError("prediction for unknown patient '" + c.patient_id + "'");
    per_patient[c.patient_id].push_back(std::move(c));
  }
  if (per_patient.empty()) throw InputError("no predictions in '" + preds + "'");
  std::vector<DecisionOutcome> outcomes;
  std::string decisions = "patient_id,votes_class1,votes_class2,decided,truth\n";
  for (const auto& [pid, cls] : per_patient) {
    outcomes.push_back({decide_patient(cls), truth.at(pid)});
    const auto& d = outcomes.back().decision;
    decisions += pid + "," + std::to_string(d.votes_class1) + "," + std::to_string(d.votes_class2) + "," +
                 to_string(d.decided) + "," + to_string(truth.at(pid)) + "\n";
  }
  const MetricsReport report = compute_metrics(outcomes);
  if (!rc.str("out").empty()) {
    const std::string out = rc.str("out");
    fs::create_directories(out);
    text::write_file((fs::path(out) / "metrics.csv").string(), report.to_csv());
    text::write_file((fs::path(out) / "metrics.txt").string(), report.to_text());
    text::write_file((fs::path(out) / "decisions.csv").string(), decisions);
    rc.stamp(out, "evaluate");
  }
  std::cout << report.to_text();
  return 0;
}

int cmd_recist(double baseline, double followup, bool disappeared) {
  const auto a = recist_assess(baseline, followup, disappeared);
  std::cout << to_string(a.category) << " " << to_string(recist_to_class(a)) << "\n";
  return 0;
}

int cmd_synth(const RunConfig& rc) {
  const std::string out = rc.required("out");
  SynthConfig sc;
  sc.rng_seed = static_cast<std::uint64_t>(rc.integer("synth_seed"));
  sc.train_class1 = rc.small_int("train_class1");
  sc.train_class2 = rc.small_int("train_class2");
  sc.test_class1 = rc.small_int("test_class1");
  sc.test_class2 = rc.small_int("test_class2");
  sc.image_size = rc.small_int("image_size");
  const auto rows = generate_synth(sc, out);
  rc.stamp(out, "synth");
  std::cout << "wrote " << rows.size() << " lesions to " << (fs::path(out) / "manifest.csv").string() << "\n";
  return 0;
}

int cmd_templates(const RunConfig& rc, bool builtin, int sample) {
  const std::string out = rc.required("out");
  TemplateLibrary lib;
  if (builtin) {
    lib = builtin_oracles();
  } else {
    if (sample < 1) throw ContractError("--sample must be >= 1");
    SearchConfig sc = search_config(rc);
    Rng rng(sc.rng_seed);
    lib.source = "sampled, seed " + std::to_string(sc.rng_seed);
    for (int k = 1; k <= sample; ++k) lib.entries.push_back(sample_template(rng, sc, "s" + std::to_string(k)));
  }
  fs::create_directories(out);
  save_library(lib, (fs::path(out) / "templates.txt").string());
  rc.stamp(out, "templates");
  std::cout << "wrote " << lib.size() << " templates\n";
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::input: return 2;
    case ErrorKind::contract: return 3;
    case ErrorKind::divergence: return 4;
  }
  return 1;
}

// Binds a string flag of `sub` to a config key.
struct Binding {
  CLI::App* sub;
  std::string key;
  CLI::Option* option;
  std::string value;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cellular nonlinear network feature generation and treatment-outcome classification"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::deque<Binding> bindings;
  std::map<CLI::App*, std::string> config_files;
  auto bind = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    bindings.push_back({sub, key, nullptr, ""});
    bindings.back().option = sub->add_option(flag, bindings.back().value, help);
  };
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_files[sub], "key = value configuration file");
    bind(sub, "--threads", "threads", "worker threads");
  };
  auto integration = [&](CLI::App* sub) {
    bind(sub, "--grid", "grid", "engine grid WxH");
    bind(sub, "--dt", "dt", "integration step");
    bind(sub, "--method", "method", "euler or rk4");
    bind(sub, "--boundary", "boundary", "zero or replicate");
    bind(sub, "--blowup-guard", "blowup_guard", "divergence threshold on |x|");
    bind(sub, "--checkpoint-policy", "checkpoint_policy", "final_only or per_template_tfinal");
    bind(sub, "--checkpoint-times", "checkpoint_times", "comma-separated sample times");
  };
  auto training = [&](CLI::App* sub) {
    bind(sub, "--batch-size", "batch_size", "mini-batch size");
    bind(sub, "--learning-rate", "learning_rate", "SGD learning rate");
    bind(sub, "--max-epochs", "max_epochs", "epoch limit");
    bind(sub, "--momentum", "momentum", "SGD momentum");
    bind(sub, "--hidden-units", "hidden_units", "hidden layer width");
    bind(sub, "--patience", "patience", "early stopping patience");
    bind(sub, "--val-fraction", "val_fraction", "held-out fraction when no val split exists");
  };

  auto* simulate = app.add_subcommand("simulate", "run a template library on one image");
  common(simulate);
  integration(simulate);
  bind(simulate, "--templates", "templates", "template library");
  bind(simulate, "--image", "image", "input PGM");
  bind(simulate, "--out", "out", "output directory");
  bind(simulate, "--tfinal", "tfinal", "override every template's t_final");
  bind(simulate, "--roi", "roi", "crop cx,cy,w,h before resizing");

  auto* augment = app.add_subcommand("augment", "generate feature maps for a manifest");
  common(augment);
  integration(augment);
  bind(augment, "--manifest", "manifest", "lesion manifest CSV");
  bind(augment, "--templates", "templates", "template library");
  bind(augment, "--out", "out", "feature root directory");

  auto* search = app.add_subcommand("search", "grow a template library by random-driven search");
  common(search);
  integration(search);
  training(search);
  bind(search, "--manifest", "manifest", "lesion manifest CSV");
  bind(search, "--out", "out", "output directory");
  bind(search, "--seed", "search_seed", "search seed");
  bind(search, "--target-count", "target_count", "templates to accept");
  bind(search, "--max-proposals", "max_proposals", "proposal budget");
  bind(search, "--eval-subset", "eval_subset", "fraction of training lesions used per proposal");
  bind(search, "--value-range", "value_range", "template entry range");
  bind(search, "--bias-range", "bias_range", "bias range");
  bind(search, "--tfinal-choices", "t_final_choices", "comma-separated t_final candidates");
  bind(search, "--train-seed", "train_seed", "classifier seed");

  auto* trainc = app.add_subcommand("train", "train the downstream classifier");
  common(trainc);
  training(trainc);
  bind(trainc, "--features", "features", "feature root directory");
  bind(trainc, "--manifest", "manifest", "lesion manifest CSV");
  bind(trainc, "--out", "out", "model directory");
  bind(trainc, "--seed", "train_seed", "classifier seed");

  auto* predictc = app.add_subcommand("predict", "classify feature maps");
  common(predictc);
  bind(predictc, "--model", "model", "model file");
  bind(predictc, "--features", "features", "feature root directory");
  bind(predictc, "--manifest", "manifest", "lesion manifest CSV");
  bind(predictc, "--split", "split", "split to classify");
  bind(predictc, "--out", "out", "output directory");

  auto* evaluate = app.add_subcommand("evaluate", "patient-level decisions and metrics");
  common(evaluate);
  bind(evaluate, "--predictions", "predictions", "predictions CSV");
  bind(evaluate, "--manifest", "manifest", "lesion manifest CSV");
  bind(evaluate, "--out", "out", "optional report directory");

  auto* recist = app.add_subcommand("recist", "categorise a response from longest-diameter sums");
  double baseline = 0.0, followup = 0.0;
  bool disappeared = false;
  recist->add_option("--baseline-mm", baseline, "baseline LD sum (mm)")->required();
  recist->add_option("--followup-mm", followup, "follow-up LD sum (mm)")->required();
  recist->add_flag("--disappeared", disappeared, "all target lesions disappeared");

  auto* synth = app.add_subcommand("synth", "generate the synthetic blob/ring corpus");
  common(synth);
  bind(synth, "--out", "out", "output directory");
  bind(synth, "--seed", "synth_seed", "generator seed");
  bind(synth, "--train-class1", "train_class1", "training lesions of class 1");
  bind(synth, "--train-class2", "train_class2", "training lesions of class 2");
  bind(synth, "--test-class1", "test_class1", "test lesions of class 1");
  bind(synth, "--test-class2", "test_class2", "test lesions of class 2");
  bind(synth, "--image-size", "image_size", "image side in pixels");

  auto* templates = app.add_subcommand("templates", "write a builtin or sampled template library");
  common(templates);
  bool builtin = false;
  int sample = 0;
  templates->add_flag("--builtin", builtin, "analytic oracle templates");
  templates->add_option("--sample", sample, "number of random templates");
  bind(templates, "--out", "out", "output directory");
  bind(templates, "--seed", "search_seed", "sampling seed");
  bind(templates, "--value-range", "value_range", "template entry range");
  bind(templates, "--bias-range", "bias_range", "bias range");
  bind(templates, "--tfinal-choices", "t_final_choices", "comma-separated t_final candidates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (recist->parsed()) return cmd_recist(baseline, followup, disappeared);

    CLI::App* chosen = app.get_subcommands().front();
    RunConfig rc;
    if (!config_files[chosen].empty()) {
      require_file(config_files[chosen]);
      rc.load(config_files[chosen]);
    }
    for (const auto& b : bindings)
      if (b.sub == chosen && b.option->count() > 0) rc.set(b.key, b.value);

    if (chosen == simulate) return cmd_simulate(rc);
    if (chosen == augment) return cmd_augment(rc);
    if (chosen == search) return cmd_search(rc);
    if (chosen == trainc) return cmd_train(rc);
    if (chosen == predictc) return cmd_predict(rc);
    if (chosen == evaluate) return cmd_evaluate(rc);
    if (chosen == synth) return cmd_synth(rc);
    if (chosen == templates) {
      if (builtin == (sample > 0)) throw InputError("templates needs exactly one of --builtin or --sample N");
      return cmd_templates(rc, builtin, sample);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
