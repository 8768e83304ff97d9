#pragma once

// Template libraries: text persistence, analytic fixtures and random
// proposals for the search loop.

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "cnnforge/engine.hpp"
#include "cnnforge/rng.hpp"
#include "cnnforge/textio.hpp"

namespace cnnforge {

struct TemplateLibrary {
  std::vector<TemplateSet> entries;
  std::string source;
  /// Non-fatal notes gathered while loading.
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }

  /// Libraries compare by content; source and warnings are metadata.
  bool operator==(const TemplateLibrary& o) const { return entries == o.entries; }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& t : entries) {
      if (!text::valid_identifier(t.name)) throw ContractError("invalid template name '" + t.name + "'");
      if (!seen.insert(t.name).second) throw ContractError("duplicate template name '" + t.name + "'");
      t.validate();
    }
  }
};

inline constexpr const char* kLibraryMagic = "cnnforge-templates v1";

inline std::string format_library(const TemplateLibrary& lib) {
  lib.validate();
  std::string out = std::string(kLibraryMagic) + "\n";
  if (!lib.source.empty()) out += "# source " + lib.source + "\n";
  auto row = [&](const char* key, const std::array<double, 9>& s) {
    out += key;
    for (double v : s) out += " " + text::format_real(v);
    out += "\n";
  };
  for (const auto& t : lib.entries) {
    out += "template " + t.name + "\n";
    row("A", t.a);
    row("B", t.b);
    row("C", t.cst);
    row("D", t.d);
    out += std::string("DNL ") + to_string(t.d_nl) + "\n";
    out += "I " + text::format_real(t.bias) + "\n";
    out += "TFINAL " + text::format_real(t.t_final) + "\n";
    out += "end\n";
  }
  return out;
}

inline TemplateLibrary parse_library(const std::string& content, const std::string& origin = "<memory>") {
  TemplateLibrary lib;
  lib.source = origin;
  if (content.empty()) {
    lib.warnings.push_back(origin + ": empty template file");
    return lib;
  }

  std::set<std::string> names;
  std::size_t line_no = 0;
  bool header_seen = false;
  bool open = false;
  TemplateSet cur;
  std::set<std::string> fields;

  auto fail = [&](const std::string& msg) { throw ParseError(origin, line_no, msg); };
  auto stencil = [&](const std::vector<std::string_view>& tok, std::array<double, 9>& dst) {
    if (tok.size() != 10) fail("expected 9 values after '" + std::string(tok[0]) + "', got " + std::to_string(tok.size() - 1));
    for (int k = 0; k < 9; ++k) {
      auto v = text::parse_real(tok[k + 1]);
      if (!v) fail("malformed real '" + std::string(tok[k + 1]) + "'");
      dst[k] = *v;
    }
  };
  auto scalar = [&](const std::vector<std::string_view>& tok) {
    if (tok.size() != 2) fail("expected 1 value after '" + std::string(tok[0]) + "'");
    auto v = text::parse_real(tok[1]);
    if (!v) fail("malformed real '" + std::string(tok[1]) + "'");
    return *v;
  };

  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) nl = content.size();
    std::string_view line = text::trim(std::string_view(content).substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (!header_seen) {
      if (line != kLibraryMagic) fail("missing header '" + std::string(kLibraryMagic) + "'");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (line.substr(0, 9) == "# source ") lib.source = std::string(line.substr(9));
      continue;
    }
    auto tok = text::split_ws(line);
    const std::string key(tok[0]);
    if (key == "template") {
      if (open) fail("'template' before 'end' of previous template");
      if (tok.size() != 2 || !text::valid_identifier(tok[1])) fail("expected 'template <name>'");
      cur = TemplateSet{};
      cur.name = std::string(tok[1]);
      if (!names.insert(cur.name).second) fail("duplicate template name '" + cur.name + "'");
      fields.clear();
      open = true;
      continue;
    }
    if (!open) fail("'" + key + "' outside a template block");
    if (key != "end" && !fields.insert(key).second) fail("repeated field '" + key + "'");
    if (key == "A") stencil(tok, cur.a);
    else if (key == "B") stencil(tok, cur.b);
    else if (key == "C") stencil(tok, cur.cst);
    else if (key == "D") stencil(tok, cur.d);
    else if (key == "DNL") {
      if (tok.size() != 2) fail("expected 'DNL <identity|pwl_diff|cubic_diff>'");
      try {
        cur.d_nl = parse_nonlinearity(std::string(tok[1]));
      } catch (const InputError& e) {
        fail(e.what());
      }
    } else if (key == "I") cur.bias = scalar(tok);
    else if (key == "TFINAL") cur.t_final = scalar(tok);
    else if (key == "end") {
      if (tok.size() != 1) fail("unexpected tokens after 'end'");
      for (const char* req : {"A", "B", "C", "D", "DNL", "I", "TFINAL"})
        if (!fields.count(req)) fail(std::string("template '") + cur.name + "' is missing field " + req);
      try {
        cur.validate();
      } catch (const ContractError& e) {
        fail(e.what());
      }
      lib.entries.push_back(cur);
      open = false;
    } else {
      fail("unknown keyword '" + key + "'");
    }
  }
  if (open) fail("unterminated template '" + cur.name + "'");
  if (lib.entries.empty()) lib.warnings.push_back(origin + ": library contains no templates");
  return lib;
}

inline void save_library(const TemplateLibrary& lib, const std::string& path) {
  text::write_file(path, format_library(lib));
}

inline TemplateLibrary load_library(const std::string& path) { return parse_library(text::read_file(path), path); }

/// Templates whose fixed points are closed-form (A = Cst = D = 0 gives
/// x* = R_x (B * u + I)).
inline TemplateLibrary builtin_oracles() {
  TemplateLibrary lib;
  lib.source = "builtin analytic oracles";

  TemplateSet zero;
  zero.name = "zero";
  lib.entries.push_back(zero);

  TemplateSet identity;
  identity.name = "identity_pass";
  identity.b[4] = 1.0;
  lib.entries.push_back(identity);

  TemplateSet mean;
  mean.name = "local_mean";
  mean.b.fill(1.0 / 9.0);
  lib.entries.push_back(mean);

  TemplateSet drive;
  drive.name = "bias_drive";
  drive.bias = 1.0;
  lib.entries.push_back(drive);
  return lib;
}

struct SearchConfig {
  std::uint64_t rng_seed = 1;
  double value_range = 4.0;
  double bias_range = 2.0;
  std::vector<double> t_final_choices{1.0, 2.5, 5.0};
  int max_proposals = 200;
  int target_count = 97;
  double eval_subset = 0.25;

  void validate() const {
    if (!(value_range > 0.0) || !(bias_range > 0.0)) throw ContractError("sampling ranges must be positive");
    if (target_count < 1) throw ContractError("target_count must be >= 1");
    if (max_proposals < 0) throw ContractError("max_proposals must be >= 0");
    if (!(eval_subset > 0.0) || eval_subset > 1.0) throw ContractError("eval_subset must lie in (0, 1]");
    if (t_final_choices.empty()) throw ContractError("t_final_choices must not be empty");
    for (double t : t_final_choices)
      if (!(t > 0.0)) throw ContractError("t_final choices must be positive");
  }
};

/// Draws one template; entries i.i.d. uniform, selector and horizon uniform
/// over their choices. Draw order is fixed (A, B, C, D, I, DNL, TFINAL).
inline TemplateSet sample_template(Rng& rng, const SearchConfig& cfg, std::string name = "sampled") {
  TemplateSet t;
  t.name = std::move(name);
  for (auto* s : {&t.a, &t.b, &t.cst, &t.d})
    for (double& v : *s) v = rng.uniform(-cfg.value_range, cfg.value_range);
  t.bias = rng.uniform(-cfg.bias_range, cfg.bias_range);
  static constexpr Nonlinearity kSelectors[] = {Nonlinearity::identity, Nonlinearity::pwl_diff,
                                                Nonlinearity::cubic_diff};
  t.d_nl = kSelectors[rng.index(3)];
  t.t_final = cfg.t_final_choices[rng.index(cfg.t_final_choices.size())];
  return t;
}

}  // namespace cnnforge
