#include "feklab/cli.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "feklab/bergman.hpp"
#include "feklab/common.hpp"
#include "feklab/curieweiss.hpp"
#include "feklab/diagnostics.hpp"
#include "feklab/energy.hpp"
#include "feklab/equilibrium.hpp"
#include "feklab/sampler.hpp"
#include "feklab/transport.hpp"
#include "feklab/tropical.hpp"

namespace feklab {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kToolName = "feklab";
constexpr const char* kSemver = "0.1.0";

struct CliError {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, const std::string& msg) { throw CliError{code, msg}; }
[[noreturn]] void bad_config(const std::string& msg) { fail(kExitConfig, "config: " + msg); }

// ---------------------------------------------------------------------------
// JSON field access.  Strict on types and on unknown keys (typos must not
// silently change an experiment), and defaults are written back into the
// document so the manifest records the fully resolved config.

void check_keys(const json& o, const std::vector<const char*>& allowed, const char* where) {
  if (!o.is_object()) bad_config(std::string(where) + " must be an object");
  for (auto it = o.begin(); it != o.end(); ++it) {
    bool known = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        known = true;
        break;
      }
    if (!known) bad_config(std::string(where) + ": unknown field '" + it.key() + "'");
  }
}

void check_keys(const json& o, std::initializer_list<const char*> allowed, const char* where) {
  check_keys(o, std::vector<const char*>(allowed), where);
}

const json& need(const json& o, const char* key, const char* where) {
  if (!o.is_object() || !o.contains(key))
    bad_config(std::string(where) + ": missing field '" + key + "'");
  return o.at(key);
}

json& need_mut(json& o, const char* key, const char* where) {
  if (!o.is_object() || !o.contains(key))
    bad_config(std::string(where) + ": missing field '" + key + "'");
  return o[key];
}

double as_num(const json& v, const std::string& situ) {
  if (!v.is_number()) bad_config(situ + " must be a number");
  return v.get<double>();
}

long long as_int(const json& v, const std::string& situ) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) bad_config(situ + " must be an integer");
  return v.get<long long>();
}

std::string as_str(const json& v, const std::string& situ) {
  if (!v.is_string()) bad_config(situ + " must be a string");
  return v.get<std::string>();
}

bool as_bool(const json& v, const std::string& situ) {
  if (!v.is_boolean()) bad_config(situ + " must be a boolean");
  return v.get<bool>();
}

std::vector<double> as_num_vec(const json& v, const std::string& situ) {
  if (!v.is_array() || v.empty()) bad_config(situ + " must be a non-empty array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(as_num(e, situ + " entry"));
  return out;
}

double req_num(const json& o, const char* key, const char* where) {
  return as_num(need(o, key, where), std::string(where) + "." + key);
}
long long req_int(const json& o, const char* key, const char* where) {
  return as_int(need(o, key, where), std::string(where) + "." + key);
}
std::string req_str(const json& o, const char* key, const char* where) {
  return as_str(need(o, key, where), std::string(where) + "." + key);
}

double opt_num(json& o, const char* key, double def, const char* where) {
  if (!o.contains(key)) {
    o[key] = def;
    return def;
  }
  return as_num(o.at(key), std::string(where) + "." + key);
}
long long opt_int(json& o, const char* key, long long def, const char* where) {
  if (!o.contains(key)) {
    o[key] = def;
    return def;
  }
  return as_int(o.at(key), std::string(where) + "." + key);
}
std::string opt_str(json& o, const char* key, const std::string& def, const char* where) {
  if (!o.contains(key)) {
    o[key] = def;
    return def;
  }
  return as_str(o.at(key), std::string(where) + "." + key);
}
bool opt_bool(json& o, const char* key, bool def, const char* where) {
  if (!o.contains(key)) {
    o[key] = def;
    return def;
  }
  return as_bool(o.at(key), std::string(where) + "." + key);
}

// beta fields accept a number or the string "inf" (the Fekete regime).
double parse_beta_value(const json& v, const std::string& situ) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    bad_config(situ + ": expected a number or \"inf\"");
  }
  return as_num(v, situ);
}

std::uint64_t parse_seed(const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    const long long s = v.get<long long>();
    if (s < 0) bad_config("execution.seed must be non-negative");
    return static_cast<std::uint64_t>(s);
  }
  bad_config("execution.seed must be an integer");
}

// ---------------------------------------------------------------------------
// Model / execution parsing.

Weight parse_weight(json& w) {
  const std::string kind = req_str(w, "kind", "model.weight");
  if (kind == "quadratic") {
    check_keys(w, {"kind", "scale"}, "model.weight");
    return Weight::quadratic(opt_num(w, "scale", 1.0, "model.weight"));
  }
  if (kind == "half-quadratic") {
    check_keys(w, {"kind", "scale"}, "model.weight");
    return Weight::half_quadratic(opt_num(w, "scale", 1.0, "model.weight"));
  }
  if (kind == "fubini-study") {
    check_keys(w, {"kind", "scale"}, "model.weight");
    return Weight::fubini_study(opt_num(w, "scale", 1.0, "model.weight"));
  }
  if (kind == "torus-log") {
    check_keys(w, {"kind"}, "model.weight");
    return Weight::torus_log();
  }
  if (kind == "indicator-disc") {
    check_keys(w, {"kind", "R"}, "model.weight");
    return Weight::indicator_disc(req_num(w, "R", "model.weight"));
  }
  if (kind == "indicator-annulus") {
    check_keys(w, {"kind", "r_min", "r_max"}, "model.weight");
    return Weight::indicator_annulus(req_num(w, "r_min", "model.weight"),
                                     req_num(w, "r_max", "model.weight"));
  }
  if (kind == "custom-radial") {
    check_keys(w, {"kind", "s_grid", "phi_hat", "tail_slope"}, "model.weight");
    std::optional<double> tail;
    if (w.contains("tail_slope")) tail = as_num(w.at("tail_slope"), "model.weight.tail_slope");
    return Weight::custom_radial(
        as_num_vec(need(w, "s_grid", "model.weight"), "model.weight.s_grid"),
        as_num_vec(need(w, "phi_hat", "model.weight"), "model.weight.phi_hat"), tail);
  }
  bad_config("model.weight.kind '" + kind + "' not recognized");
}

BaseMeasure parse_base(json& b, int n) {
  const std::string kind = req_str(b, "kind", "model.base");
  auto need_1d = [&] {
    if (n != 1) bad_config("model.base kind '" + kind + "' is one-dimensional; model.n must be 1");
  };
  if (kind == "lebesgue-c") {
    check_keys(b, {"kind"}, "model.base");
    return BaseMeasure::lebesgue_c(n);
  }
  if (kind == "lebesgue-r") {
    check_keys(b, {"kind"}, "model.base");
    need_1d();
    return BaseMeasure::lebesgue_r();
  }
  if (kind == "gaussian") {
    check_keys(b, {"kind", "sigma"}, "model.base");
    return BaseMeasure::gaussian(opt_num(b, "sigma", 1.0, "model.base"), n);
  }
  if (kind == "circle") {
    check_keys(b, {"kind"}, "model.base");
    need_1d();
    return BaseMeasure::circle();
  }
  if (kind == "interval") {
    check_keys(b, {"kind", "a", "b"}, "model.base");
    need_1d();
    return BaseMeasure::interval(req_num(b, "a", "model.base"), req_num(b, "b", "model.base"));
  }
  if (kind == "arcsine") {
    check_keys(b, {"kind"}, "model.base");
    need_1d();
    return BaseMeasure::arcsine();
  }
  if (kind == "uniform-disc") {
    check_keys(b, {"kind", "R"}, "model.base");
    need_1d();
    return BaseMeasure::uniform_disc(opt_num(b, "R", 1.0, "model.base"));
  }
  if (kind == "radial-density-s") {
    check_keys(b, {"kind", "s_grid", "log_w"}, "model.base");
    need_1d();
    return BaseMeasure::radial_density_s(
        as_num_vec(need(b, "s_grid", "model.base"), "model.base.s_grid"),
        as_num_vec(need(b, "log_w", "model.base"), "model.base.log_w"));
  }
  bad_config("model.base.kind '" + kind + "' not recognized");
}

ConfigMode parse_mode(json& m, const std::string& def) {
  const std::string s = opt_str(m, "mode", def, "model");
  if (s == "complex") return ConfigMode::Complex;
  if (s == "real-line") return ConfigMode::RealLine;
  if (s == "real-tropical") return ConfigMode::RealTropical;
  bad_config("model.mode '" + s + "' (use complex | real-line | real-tropical)");
}

enum class BetaPolicy { Required, DefaultInf, Unused };

EnsembleModel parse_model(json& m, BetaPolicy policy, const std::string& default_mode = "complex") {
  std::vector<const char*> keys = {"n", "k", "mode", "beta", "weight", "base"};
  if (policy == BetaPolicy::Required) keys.push_back("schedule");
  check_keys(m, keys, "model");
  const int n = static_cast<int>(req_int(m, "n", "model"));
  const int k = static_cast<int>(req_int(m, "k", "model"));
  if (n < 1 || n > 16) bad_config("model.n out of range [1, 16]");
  if (k < 0 || k > 100000) bad_config("model.k out of range [0, 100000]");

  double beta = 1.0;
  if (m.contains("beta"))
    beta = parse_beta_value(m.at("beta"), "model.beta");
  else if (policy == BetaPolicy::Required)
    bad_config("model.beta is required");
  else if (policy == BetaPolicy::DefaultInf) {
    beta = kInf;
    m["beta"] = "inf";
  }

  EnsembleModel model;
  try {
    model.basis = MultiIndexBasis::make(n, k);
  } catch (const std::overflow_error& e) {
    bad_config(std::string("model basis too large: ") + e.what());
  }
  model.weight = parse_weight(need_mut(m, "weight", "model"));
  model.base = parse_base(need_mut(m, "base", "model"), n);
  model.beta = beta;
  model.mode = parse_mode(m, default_mode);
  return model;
}

Schedule parse_schedule(json& m, double beta) {
  if (!m.contains("schedule")) {
    m["schedule"] = json{{"kind", "fixed"}};
    return Schedule::fixed(beta);
  }
  json& s = m["schedule"];
  check_keys(s, {"kind", "rho", "start_frac"}, "model.schedule");
  const std::string kind = req_str(s, "kind", "model.schedule");
  if (kind == "fixed") return Schedule::fixed(beta);
  if (kind == "beta-ramp")
    return Schedule::beta_ramp(beta, opt_num(s, "start_frac", 0.1, "model.schedule"));
  if (kind == "geometric") {
    const double rho = req_num(s, "rho", "model.schedule");
    if (!(rho > 1.0)) bad_config("model.schedule.rho must exceed 1");
    return Schedule::geometric(beta, rho);
  }
  bad_config("model.schedule.kind '" + kind + "' (use fixed | beta-ramp | geometric)");
}

struct Exec {
  long long sweeps = 0;
  int chains = 1;
  std::uint64_t seed = 0;
  int workers = 1;
  long long thin = 0;
  double burn_in_frac = 0.2;
  ProposalKind proposal = ProposalKind::Auto;
};

Exec parse_exec(json& e, bool seed_required) {
  check_keys(e, {"sweeps", "chains", "seed", "workers", "thin", "burn_in_frac", "proposal"},
             "execution");
  Exec ex;
  ex.sweeps = opt_int(e, "sweeps", 0, "execution");
  ex.chains = static_cast<int>(opt_int(e, "chains", 1, "execution"));
  ex.workers = static_cast<int>(opt_int(e, "workers", 1, "execution"));
  ex.thin = opt_int(e, "thin", 0, "execution");
  ex.burn_in_frac = opt_num(e, "burn_in_frac", 0.2, "execution");
  if (e.contains("seed"))
    ex.seed = parse_seed(e.at("seed"));
  else if (seed_required)
    bad_config("execution.seed is mandatory");
  const std::string prop = opt_str(e, "proposal", "auto", "execution");
  if (prop == "auto")
    ex.proposal = ProposalKind::Auto;
  else if (prop == "mala")
    ex.proposal = ProposalKind::Mala;
  else if (prop == "rwm")
    ex.proposal = ProposalKind::Rwm;
  else
    bad_config("execution.proposal '" + prop + "' (use auto | mala | rwm)");
  if (ex.sweeps < 0) bad_config("execution.sweeps must be non-negative");
  if (ex.chains < 1 || ex.chains > 1024) bad_config("execution.chains out of range [1, 1024]");
  if (ex.workers < 1 || ex.workers > 256) bad_config("execution.workers out of range [1, 256]");
  if (ex.thin < 0) bad_config("execution.thin must be non-negative");
  if (!(ex.burn_in_frac >= 0.0 && ex.burn_in_frac < 1.0))
    bad_config("execution.burn_in_frac must lie in [0, 1)");
  return ex;
}

Carrier parse_carrier(json& c) {
  check_keys(c, {"kind", "a", "b", "R", "half_width"}, "fekete.carrier");
  const std::string kind = req_str(c, "kind", "fekete.carrier");
  if (kind == "circle") return Carrier::circle();
  if (kind == "interval")
    return Carrier::interval(req_num(c, "a", "fekete.carrier"), req_num(c, "b", "fekete.carrier"));
  if (kind == "disc") return Carrier::disc(req_num(c, "R", "fekete.carrier"));
  if (kind == "box") return Carrier::box(req_num(c, "half_width", "fekete.carrier"));
  bad_config("fekete.carrier.kind '" + kind + "' (use circle | interval | disc | box)");
}

ConvexBody parse_body(json& b, const std::string& where) {
  check_keys(b, {"kind", "a", "b", "n", "half_width", "vertices"}, where.c_str());
  const std::string kind = req_str(b, "kind", where.c_str());
  if (kind == "interval")
    return ConvexBody::interval(req_num(b, "a", where.c_str()), req_num(b, "b", where.c_str()));
  if (kind == "box")
    return ConvexBody::box(static_cast<int>(req_int(b, "n", where.c_str())),
                           req_num(b, "half_width", where.c_str()));
  if (kind == "simplex") return ConvexBody::simplex(static_cast<int>(req_int(b, "n", where.c_str())));
  if (kind == "vertices") {
    const int n = static_cast<int>(req_int(b, "n", where.c_str()));
    const json& vl = need(b, "vertices", where.c_str());
    if (!vl.is_array() || vl.empty()) bad_config(where + ".vertices must be a non-empty array");
    std::vector<Eigen::VectorXd> verts;
    for (const auto& v : vl) {
      const std::vector<double> coords = as_num_vec(v, where + ".vertices entry");
      if (static_cast<int>(coords.size()) != n)
        bad_config(where + ".vertices entry of wrong dimension");
      verts.push_back(Eigen::Map<const Eigen::VectorXd>(coords.data(), n));
    }
    return ConvexBody(n, std::move(verts));
  }
  bad_config(where + ".kind '" + kind + "' (use interval | box | simplex | vertices)");
}

std::vector<cplx> parse_grid(json& g, const char* where) {
  check_keys(g, {"kind", "r_max", "a", "b", "points"}, where);
  const std::string kind = opt_str(g, "kind", "radial", where);
  std::vector<cplx> grid;
  if (kind == "radial") {
    const double r_max = opt_num(g, "r_max", 2.0, where);
    const int pts = static_cast<int>(opt_int(g, "points", 128, where));
    if (!(r_max > 0.0) || pts < 2 || pts > 100000)
      bad_config(std::string(where) + ": bad radial grid");
    for (int i = 0; i < pts; ++i) grid.emplace_back(r_max * (i + 1) / pts, 0.0);
    return grid;
  }
  if (kind == "linspace") {
    const double a = req_num(g, "a", where), b = req_num(g, "b", where);
    const int pts = static_cast<int>(opt_int(g, "points", 128, where));
    if (!(a < b) || pts < 2 || pts > 100000) bad_config(std::string(where) + ": bad linspace grid");
    for (double x : linspace(a, b, pts)) grid.emplace_back(x, 0.0);
    return grid;
  }
  bad_config(std::string(where) + ".kind '" + kind + "' (use radial | linspace)");
}

// ---------------------------------------------------------------------------
// Canonical model keys: weight + base + dimension, deliberately excluding k,
// beta, and mode so that runs of the same underlying model at different
// resolutions or temperatures join in the report.

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string grid_hash_key(const std::vector<double>& a, const std::vector<double>& b) {
  std::string text;
  for (double v : a) text += format_double(v) + ",";
  text += ";";
  for (double v : b) text += format_double(v) + ",";
  return hex64(fnv1a64(text));
}

std::string weight_key(const Weight& w) {
  switch (w.kind) {
    case WeightKind::Quadratic:
      return "quadratic(scale=" + format_double(w.scale) + ")";
    case WeightKind::HalfQuadratic:
      return "half-quadratic(scale=" + format_double(w.scale) + ")";
    case WeightKind::FubiniStudy:
      return "fubini-study(scale=" + format_double(w.scale) + ")";
    case WeightKind::TorusLog:
      return "torus-log";
    case WeightKind::IndicatorRadial:
      return "indicator(r_min=" + format_double(w.r_min) + ",r_max=" + format_double(w.r_max) + ")";
    case WeightKind::CustomRadial:
      return "custom-radial(h=" + grid_hash_key(w.s_grid, w.phi_hat) + ")";
  }
  return "weight?";
}

std::string base_key(const BaseMeasure& b) {
  switch (b.kind) {
    case BaseKind::LebesgueC:
      return "lebesgue-c";
    case BaseKind::LebesgueR:
      return "lebesgue-r";
    case BaseKind::Gaussian:
      return "gaussian(sigma=" + format_double(b.sigma) + ")";
    case BaseKind::Circle:
      return "circle";
    case BaseKind::Interval:
      return "interval(a=" + format_double(b.a) + ",b=" + format_double(b.b) + ")";
    case BaseKind::Arcsine:
      return "arcsine";
    case BaseKind::UniformDisc:
      return "uniform-disc(R=" + format_double(b.R) + ")";
    case BaseKind::RadialDensityS:
      return "radial-density-s(h=" + grid_hash_key(b.s_grid, b.log_w) + ")";
  }
  return "base?";
}

std::string model_key_of(const Weight& w, const BaseMeasure& b, int n) {
  return "n=" + std::to_string(n) + ";weight=" + weight_key(w) + ";base=" + base_key(b);
}

// ---------------------------------------------------------------------------
// Output writing.  Every file is built in memory and written in binary mode
// (LF endings by construction); the writer records path + FNV-1a hash for
// the closing manifest.

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

class RunWriter {
 public:
  RunWriter(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec)
      fail(kExitConfig, "cannot create output directory '" + dir_.string() + "': " + ec.message());
  }

  void write(const std::string& rel, const std::string& content) {
    write_raw(rel, content);
    outputs_.emplace_back(rel, fnv1a64(content));
  }

  void write_summary(json s) {
    s["command"] = command_;
    write("summary.json", s.dump(2) + "\n");
  }

  void finish_manifest(const json& resolved_config, std::uint64_t seed,
                       const std::string& model_key) {
    json man;
    man["schema"] = kManifestSchema;
    man["tool"] = kToolName;
    man["version"] = kSemver;
    man["command"] = command_;
    man["seed"] = seed;
    man["model_key"] = model_key;
    man["config"] = resolved_config;
    json outs = json::array();
    std::vector<std::pair<std::string, std::uint64_t>> sorted = outputs_;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& [path, h] : sorted)
      outs.push_back(json{{"path", path}, {"fnv1a64", hex64(h)}});
    man["outputs"] = outs;
    write_raw("manifest.json", man.dump(2) + "\n");
  }

  const fs::path& dir() const { return dir_; }

 private:
  void write_raw(const std::string& rel, const std::string& content) {
    const fs::path p = dir_ / rel;
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) fail(kExitConfig, "cannot open '" + p.string() + "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.close();
    if (!f) fail(kExitConfig, "short write to '" + p.string() + "'");
  }

  fs::path dir_;
  std::string command_;
  std::vector<std::pair<std::string, std::uint64_t>> outputs_;
};

// Non-finite values would serialize as JSON null; summaries omit them.
void put_num(json& o, const char* key, double v) {
  if (std::isfinite(v)) o[key] = v;
}

// ---------------------------------------------------------------------------
// CSV builders.

void append_point(std::string& out, const cplx* z, int n, bool complex_mode) {
  for (int c = 0; c < n; ++c) {
    out += "," + format_double(z[c].real());
    if (complex_mode) out += "," + format_double(z[c].imag());
  }
}

std::string coord_header(int n, bool complex_mode) {
  std::string h;
  for (int c = 1; c <= n; ++c) {
    if (complex_mode)
      h += ",re_" + std::to_string(c) + ",im_" + std::to_string(c);
    else
      h += ",x_" + std::to_string(c);
  }
  return h;
}

std::string samples_csv(const std::vector<SampleRecord>& samples, int n, ConfigMode mode) {
  const bool cx = mode == ConfigMode::Complex;
  std::string out = "chain,sweep,particle" + coord_header(n, cx) + "\n";
  for (const auto& rec : samples)
    for (int p = 0; p < rec.config.count(); ++p) {
      out += std::to_string(rec.chain) + "," + std::to_string(rec.sweep) + "," + std::to_string(p);
      append_point(out, rec.config.point(p), n, cx);
      out += "\n";
    }
  return out;
}

std::string chain_stats_csv(const std::vector<ChainStats>& stats) {
  std::string out = "chain,proposed,accepted,acceptance,step,mala,burn_proposed,burn_accepted\n";
  for (const auto& s : stats) {
    out += std::to_string(s.chain) + "," + std::to_string(s.proposed) + "," +
           std::to_string(s.accepted) + "," + format_double(s.acceptance()) + "," +
           format_double(s.step) + "," + (s.used_mala ? "1" : "0") + "," +
           std::to_string(s.burn_proposed) + "," + std::to_string(s.burn_accepted) + "\n";
  }
  return out;
}

std::string points_csv(const Configuration& cfg) {
  const bool cx = cfg.mode == ConfigMode::Complex;
  std::string out = "particle" + coord_header(cfg.n, cx) + "\n";
  for (int p = 0; p < cfg.count(); ++p) {
    out += std::to_string(p);
    append_point(out, cfg.point(p), cfg.n, cx);
    out += "\n";
  }
  return out;
}

std::string profile_csv(const RadialProfile& p) {
  std::string out = "s,psi,m\n";
  for (int i = 0; i < p.size(); ++i)
    out += format_double(p.s[i]) + "," + format_double(p.psi[i]) + "," + format_double(p.m[i]) +
           "\n";
  return out;
}

std::string cloud_csv(const LatticeCloud& cloud) {
  std::string out = "index";
  for (int c = 1; c <= cloud.n; ++c) out += ",p_" + std::to_string(c);
  out += "\n";
  for (int i = 0; i < cloud.count(); ++i) {
    out += std::to_string(i);
    for (int c = 0; c < cloud.n; ++c) out += "," + format_double(cloud.points[i][c]);
    out += "\n";
  }
  return out;
}

std::string zdiag_csv(const TruncationDiagnostic& d) {
  std::string out = "radius,log_mass,ratio\n";
  for (std::size_t i = 0; i < d.radii.size(); ++i) {
    out += format_double(d.radii[i]) + "," + format_double(d.log_mass[i]) + ",";
    if (i > 0 && i - 1 < d.ratio.size()) out += format_double(d.ratio[i - 1]);
    out += "\n";
  }
  return out;
}

std::string green_csv(const GreenEstimate& est) {
  std::string out = "re,im,value,se\n";
  for (std::size_t i = 0; i < est.grid.size(); ++i)
    out += format_double(est.grid[i].real()) + "," + format_double(est.grid[i].imag()) + "," +
           format_double(est.value[i]) + "," + format_double(est.se[i]) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Small shared numerics.

// |z| per point in complex mode, the line coordinate in real modes (n = 1).
void collect_axis_atoms(const Configuration& cfg, std::vector<double>& out) {
  for (int p = 0; p < cfg.count(); ++p) {
    const cplx z = *cfg.point(p);
    out.push_back(cfg.mode == ConfigMode::Complex ? std::abs(z) : z.real());
  }
}

double mean_sq_norm(const std::vector<SampleRecord>& samples, int n) {
  KahanSum acc;
  long long cnt = 0;
  for (const auto& rec : samples)
    for (int p = 0; p < rec.config.count(); ++p) {
      const cplx* z = rec.config.point(p);
      double s2 = 0.0;
      for (int c = 0; c < n; ++c) s2 += std::norm(z[c]);
      acc.add(s2);
      ++cnt;
    }
  return cnt > 0 ? acc.value() / static_cast<double>(cnt) : 0.0;
}

// Exact W1 between two finitely supported measures on the line (merged-CDF
// sweep; weights need not be uniform).
double w1_weighted_1d(std::vector<std::pair<double, double>> a,
                      std::vector<std::pair<double, double>> b) {
  auto by_pos = [](const auto& x, const auto& y) { return x.first < y.first; };
  std::sort(a.begin(), a.end(), by_pos);
  std::sort(b.begin(), b.end(), by_pos);
  std::size_t ia = 0, ib = 0;
  double fa = 0.0, fb = 0.0, prev = 0.0;
  bool started = false;
  KahanSum dist;
  while (ia < a.size() || ib < b.size()) {
    const double xa = ia < a.size() ? a[ia].first : kInf;
    const double xb = ib < b.size() ? b[ib].first : kInf;
    const double x = std::min(xa, xb);
    if (started && x > prev) dist.add(std::abs(fa - fb) * (x - prev));
    while (ia < a.size() && a[ia].first == x) fa += a[ia++].second;
    while (ib < b.size() && b[ib].first == x) fb += b[ib++].second;
    prev = x;
    started = true;
  }
  return dist.value();
}

// Radius law of a radial profile as weighted atoms at the mass-carrying
// nodes, normalized to probability.
std::vector<std::pair<double, double>> profile_radius_atoms(const RadialProfile& p) {
  std::vector<std::pair<double, double>> atoms;
  double total = 0.0;
  for (int i = 0; i < p.size(); ++i) total += p.node_mass(i);
  if (!(total > 0.0)) return atoms;
  for (int i = 0; i < p.size(); ++i) {
    const double w = p.node_mass(i);
    if (w > 1e-15 * total) atoms.emplace_back(std::exp(p.s[i] / 2.0), w);
  }
  double kept = 0.0;
  for (auto& [r, w] : atoms) kept += w;
  for (auto& [r, w] : atoms) w /= kept;
  return atoms;
}

// W1 between pooled 1D sample atoms and a closed-form reference law.
double w1_vs_reference(const std::vector<double>& atoms, const ReferenceLaw& law) {
  const EmpiricalMeasure emp = EmpiricalMeasure::from_reals(atoms);
  switch (law.kind) {
    case ReferenceLaw::Kind::Arcsine:
      return wasserstein1(emp, ClosedFormMeasure::arcsine());
    case ReferenceLaw::Kind::Semicircle:
      return wasserstein1(
          emp, ClosedFormMeasure::cdf_1d([law](double x) { return law.cdf(x); }, -1.0, 1.0));
    case ReferenceLaw::Kind::UniformDisc: {
      const double R = law.R;
      return wasserstein1(emp, ClosedFormMeasure::cdf_1d(
                                   [R](double r) {
                                     if (r <= 0.0) return 0.0;
                                     if (r >= R) return 1.0;
                                     return sq(r / R);
                                   },
                                   0.0, R));
    }
    case ReferenceLaw::Kind::FubiniStudySphere:
      bad_config("reference 'fubini-study-sphere' has unbounded support; W1 summary unavailable");
  }
  bad_config("unhandled reference law");
}

// The reference compares against radii in complex mode and against the line
// coordinate in real modes; reject mismatched pairings.
void check_reference(const ReferenceLaw& law, ConfigMode mode, int n) {
  if (n != 1) bad_config("the reference W1 summary requires model.n = 1");
  const bool line_samples = mode != ConfigMode::Complex;
  if (law.on_real_line() != line_samples)
    bad_config(std::string("reference law lives on the ") +
               (law.on_real_line() ? "real line" : "plane") +
               " but the sampled configurations do not");
}

double support_radius_of(const RadialProfile& p) {
  const double total = p.total_mass();
  if (!(total > 0.0)) return 0.0;
  for (int i = 0; i < p.size(); ++i)
    if (p.m[i] - p.m.front() >= total - 1e-3) return std::exp(p.s[i] / 2.0);
  return std::exp(p.s.back() / 2.0);
}

// ---------------------------------------------------------------------------
// Command handlers.  Each parses its blocks (echoing defaults), validates,
// runs, writes artifacts + summary + manifest, and returns a deferred exit
// code (artifacts can be valuable even when a run legitimately refuses).

struct CmdResult {
  int exit_code = kExitOk;
  std::string note;
};

json& command_block(json& doc, const char* name) {
  if (!doc.contains(name)) doc[name] = json::object();
  return doc[name];
}

std::optional<ReferenceLaw> parse_reference(json& doc) {
  if (!doc.contains("reference")) return std::nullopt;
  const std::string name = as_str(doc.at("reference"), "config.reference");
  try {
    return preset_equilibrium(name);
  } catch (const std::invalid_argument& e) {
    bad_config(std::string("reference: ") + e.what());
  }
}

CmdResult cmd_sample(json& doc, const Exec& ex, const fs::path& out, std::ostream& log) {
  EnsembleModel model = parse_model(need_mut(doc, "model", "config"), BetaPolicy::Required);
  const Schedule sched = parse_schedule(doc["model"], model.beta);
  if (ex.sweeps <= 0) bad_config("execution.sweeps must be positive for sample");
  const std::optional<ReferenceLaw> ref = parse_reference(doc);
  if (ref) check_reference(*ref, model.mode, model.n());

  const AdmissibilityVerdict verdict = model.admissibility();
  if (!verdict.ok()) fail(kExitAdmissibility, "admissibility: " + verdict.detail);

  RunOptions opt;
  opt.proposal = ex.proposal;
  opt.burn_in_frac = ex.burn_in_frac;
  opt.thin = static_cast<int>(ex.thin);
  opt.workers = ex.workers;
  log << "sample: N=" << model.N() << " beta=" << model.beta << " sweeps=" << ex.sweeps
      << " chains=" << ex.chains << "\n";
  const RunResult res = run_chain(model, sched, ex.sweeps, ex.chains, ex.seed, opt);

  RunWriter w(out, "sample");
  w.write("samples.csv", samples_csv(res.samples, model.n(), model.mode));
  w.write("chain_stats.csv", chain_stats_csv(res.stats));

  KahanSum ham;
  for (const auto& rec : res.samples) ham.add(weighted_hamiltonian(model, rec.config));
  json s;
  s["acceptance"] = res.acceptance;
  s["burn_in"] = res.burn_in;
  s["thin"] = res.thin;
  s["n_records"] = res.samples.size();
  if (!res.samples.empty())
    put_num(s, "mean_hamiltonian", ham.value() / static_cast<double>(res.samples.size()));
  put_num(s, "second_moment", mean_sq_norm(res.samples, model.n()));
  if (ref) {
    std::vector<double> atoms;
    for (const auto& rec : res.samples) collect_axis_atoms(rec.config, atoms);
    if (!atoms.empty()) {
      s["w1_reference"] = w1_vs_reference(atoms, *ref);
      s["reference"] = as_str(doc.at("reference"), "config.reference");
    }
  }
  w.write_summary(s);
  w.finish_manifest(doc, ex.seed, model_key_of(model.weight, model.base, model.n()));
  return {};
}

CmdResult cmd_fekete(json& doc, const Exec& ex, const fs::path& out, std::ostream& log) {
  json& fk = need_mut(doc, "fekete", "config");
  check_keys(fk,
             {"carrier", "restarts", "anneal_sweeps", "beta0", "rho", "polish_max_iter",
              "exchange_candidates", "exchange_rounds"},
             "fekete");
  const Carrier carrier = parse_carrier(need_mut(fk, "carrier", "fekete"));
  const std::string default_mode =
      carrier.kind == Carrier::Kind::Interval ? "real-line" : "complex";
  EnsembleModel model = parse_model(need_mut(doc, "model", "config"), BetaPolicy::DefaultInf,
                                    default_mode);
  if (std::isfinite(model.beta))
    bad_config("fekete runs at beta = inf; omit model.beta or set \"inf\"");

  FeketeOptions opt;
  opt.restarts = static_cast<int>(opt_int(fk, "restarts", opt.restarts, "fekete"));
  opt.anneal_sweeps = opt_int(fk, "anneal_sweeps", opt.anneal_sweeps, "fekete");
  opt.beta0 = opt_num(fk, "beta0", opt.beta0, "fekete");
  opt.rho = opt_num(fk, "rho", opt.rho, "fekete");
  opt.polish_max_iter =
      static_cast<int>(opt_int(fk, "polish_max_iter", opt.polish_max_iter, "fekete"));
  opt.exchange_candidates =
      static_cast<int>(opt_int(fk, "exchange_candidates", opt.exchange_candidates, "fekete"));
  opt.exchange_rounds =
      static_cast<int>(opt_int(fk, "exchange_rounds", opt.exchange_rounds, "fekete"));
  const std::optional<ReferenceLaw> ref = parse_reference(doc);
  if (ref) check_reference(*ref, model.mode, model.n());

  log << "fekete: N=" << model.N() << " carrier=" << carrier.describe() << "\n";
  const FeketeResult r = fekete_search(model, carrier, opt, ex.seed);

  RunWriter w(out, "fekete");
  w.write("points.csv", points_csv(r.config));
  json s;
  put_num(s, "hamiltonian", r.hamiltonian);
  put_num(s, "energy", r.energy);
  put_num(s, "energy_after_anneal", r.energy_after_anneal);
  s["singular_restarts"] = r.singular_restarts;
  s["n_points"] = r.config.count();
  if (ref) {
    std::vector<double> atoms;
    collect_axis_atoms(r.config, atoms);
    s["w1_reference"] = w1_vs_reference(atoms, *ref);
    s["reference"] = as_str(doc.at("reference"), "config.reference");
  }
  w.write_summary(s);
  w.finish_manifest(doc, ex.seed, model_key_of(model.weight, model.base, model.n()));
  return {};
}

CmdResult cmd_equilibrium(json& doc, const Exec& ex, const fs::path& out, std::ostream& log) {
  json& m = need_mut(doc, "model", "config");
  check_keys(m, {"n", "weight", "base"}, "model");
  if (m.contains("n") && req_int(m, "n", "model") != 1)
    bad_config("the radial solver is one-dimensional; model.n must be 1");
  m["n"] = 1;
  const Weight weight = parse_weight(need_mut(m, "weight", "model"));
  const BaseMeasure base = parse_base(need_mut(m, "base", "model"), 1);

  json& eq = need_mut(doc, "equilibrium", "config");
  check_keys(eq, {"betas", "s_min", "s_max", "grid_points", "tol"}, "equilibrium");
  const std::vector<double> betas =
      as_num_vec(need(eq, "betas", "equilibrium"), "equilibrium.betas");
  for (double b : betas)
    if (!(b >= 0.0) || !std::isfinite(b))
      bad_config("equilibrium.betas entries must be finite and >= 0");
  {
    std::set<std::string> seen;
    for (double b : betas)
      if (!seen.insert(format_double(b)).second) bad_config("equilibrium.betas has duplicates");
  }
  MfeOptions opt;
  opt.s_min = opt_num(eq, "s_min", opt.s_min, "equilibrium");
  opt.s_max = opt_num(eq, "s_max", opt.s_max, "equilibrium");
  opt.grid_points = static_cast<int>(opt_int(eq, "grid_points", opt.grid_points, "equilibrium"));
  opt.tol = opt_num(eq, "tol", opt.tol, "equilibrium");

  std::vector<double> positives;
  for (double b : betas)
    if (b > 0.0) positives.push_back(b);
  SweepResult sweep;
  if (!positives.empty()) {
    log << "equilibrium: solving " << positives.size() << " positive beta value(s)\n";
    sweep = temperature_sweep(weight, base, positives, opt);
  }

  RunWriter w(out, "equilibrium");
  std::string sweep_rows = "beta,sup_gap_envelope,mass_residual,support_radius,failed,error\n";
  std::size_t pos_idx = 0;
  int failed = 0;
  double max_residual = 0.0;
  for (double b : betas) {
    if (b == 0.0) {
      // Linear (beta -> 0) problem; envelope gap and support radius computed
      // here to match the sweep-row conventions of the positive-beta path.
      try {
        const RadialProfile prof = solve_cy_radial(weight, base, opt);
        const RadialProfile env = weighted_extremal_radial(weight, prof.s);
        double gap = 0.0;
        for (int i = 0; i < prof.size(); ++i)
          gap = std::max(gap, std::abs(prof.psi[i] - env.psi_at(prof.s[i])));
        const double residual = std::abs(prof.total_mass() - 1.0);
        max_residual = std::max(max_residual, residual);
        w.write("profile_beta_" + format_double(b) + ".csv", profile_csv(prof));
        sweep_rows += format_double(b) + "," + format_double(gap) + "," + format_double(residual) +
                      "," + format_double(support_radius_of(prof)) + ",0,\"\"\n";
      } catch (const std::exception& e) {
        ++failed;
        sweep_rows += format_double(b) + ",,,,1," + csv_quote(e.what()) + "\n";
      }
      continue;
    }
    const SweepRow& row = sweep.rows.at(pos_idx);
    if (row.failed) {
      ++failed;
      sweep_rows += format_double(b) + ",,,,1," + csv_quote(row.error) + "\n";
    } else {
      max_residual = std::max(max_residual, row.mass_residual);
      w.write("profile_beta_" + format_double(b) + ".csv", profile_csv(sweep.profiles.at(pos_idx)));
      sweep_rows += format_double(b) + "," + format_double(row.sup_gap_envelope) + "," +
                    format_double(row.mass_residual) + "," + format_double(row.support_radius) +
                    ",0,\"\"\n";
    }
    ++pos_idx;
  }
  w.write("sweep.csv", sweep_rows);

  json s;
  s["n_betas"] = betas.size();
  s["n_failed"] = failed;
  put_num(s, "max_mass_residual", max_residual);
  put_num(s, "min_beta", *std::min_element(betas.begin(), betas.end()));
  put_num(s, "max_beta", *std::max_element(betas.begin(), betas.end()));
  w.write_summary(s);
  w.finish_manifest(doc, ex.seed, model_key_of(weight, base, 1));
  if (failed > 0)
    return {kExitSolver,
            std::to_string(failed) + " of " + std::to_string(betas.size()) + " solver rows failed"};
  return {};
}

CmdResult cmd_bergman(json& doc, const Exec& ex, const fs::path& out, std::ostream& log) {
  EnsembleModel head = parse_model(need_mut(doc, "model", "config"), BetaPolicy::Unused);
  if (head.n() != 1) bad_config("bergman grids are one-dimensional; model.n must be 1");
  json& bg = command_block(doc, "bergman");
  check_keys(bg, {"k_list", "grid", "dpp_samples"}, "bergman");
  std::vector<int> k_list;
  if (bg.contains("k_list")) {
    for (double v : as_num_vec(bg.at("k_list"), "bergman.k_list")) {
      if (v < 1 || v != std::floor(v))
        bad_config("bergman.k_list entries must be positive integers");
      k_list.push_back(static_cast<int>(v));
    }
  } else {
    if (head.k() < 1) bad_config("bergman needs model.k >= 1 (or an explicit k_list)");
    k_list.push_back(head.k());
  }
  json& grid_spec = command_block(bg, "grid");
  const std::vector<cplx> grid = parse_grid(grid_spec, "bergman.grid");
  const long long dpp_samples = opt_int(bg, "dpp_samples", 0, "bergman");
  if (dpp_samples < 0 || dpp_samples > 1000000) bad_config("bergman.dpp_samples out of range");

  // Envelope reference on the grid radii (skipped when not applicable).
  std::vector<double> s_nodes;
  for (const cplx& z : grid)
    if (std::abs(z) > 0.0) s_nodes.push_back(2.0 * std::log(std::abs(z)));
  std::sort(s_nodes.begin(), s_nodes.end());
  s_nodes.erase(std::unique(s_nodes.begin(), s_nodes.end()), s_nodes.end());
  std::optional<RadialProfile> envelope;
  if (s_nodes.size() >= 2) {
    try {
      envelope = weighted_extremal_radial(head.weight, s_nodes);
    } catch (const std::exception&) {
      envelope.reset();
    }
  }

  RunWriter w(out, "bergman");
  std::string chris = "k,re,im,psi,kernel_weighted\n";
  std::string gram_rows = "k,path,cond,residual,trace,basis_size,sup_dev_extremal\n";
  double sup_dev_max = 0.0, cond_max = 0.0, trace_dev_max = 0.0;
  GramFactorization last;
  for (int k : k_list) {
    log << "bergman: factorizing k=" << k << "\n";
    const MultiIndexBasis basis = MultiIndexBasis::make(1, k);
    GramFactorization g = gram_factorize(basis, head.weight, head.base);
    double sup_dev = 0.0;
    for (const cplx& z : grid) {
      const ChristoffelValue v = christoffel(g, z);
      chris += std::to_string(k) + "," + format_double(z.real()) + "," + format_double(z.imag()) +
               "," + format_double(v.psi) + "," + format_double(v.kernel_weighted) + "\n";
      if (envelope && std::abs(z) > 0.0)
        sup_dev =
            std::max(sup_dev, std::abs(v.psi - envelope->psi_at(2.0 * std::log(std::abs(z)))));
    }
    const double trace = gram_trace(g);
    const double trace_dev = std::abs(trace - g.size()) / g.size();
    cond_max = std::max(cond_max, g.cond);
    trace_dev_max = std::max(trace_dev_max, trace_dev);
    sup_dev_max = std::max(sup_dev_max, sup_dev);
    const char* path = g.path == GramPath::Diagonal     ? "diagonal"
                       : g.path == GramPath::Recurrence ? "recurrence"
                                                        : "general";
    gram_rows += std::to_string(k) + "," + path + "," + format_double(g.cond) + "," +
                 format_double(g.residual) + "," + format_double(trace) + "," +
                 std::to_string(g.size()) + "," +
                 (envelope ? format_double(sup_dev) : std::string()) + "\n";
    last = std::move(g);
  }
  w.write("christoffel.csv", chris);
  w.write("gram.csv", gram_rows);

  json s;
  s["k_max"] = *std::max_element(k_list.begin(), k_list.end());
  s["n_k"] = k_list.size();
  put_num(s, "cond_max", cond_max);
  put_num(s, "trace_dev_max", trace_dev_max);
  if (envelope) put_num(s, "sup_dev_extremal_max", sup_dev_max);
  if (dpp_samples > 0) {
    log << "bergman: drawing " << dpp_samples << " determinantal sample(s)\n";
    DppStats stats;
    std::vector<SampleRecord> recs;
    for (long long i = 0; i < dpp_samples; ++i) {
      const std::uint64_t si = fnv1a64(&i, sizeof i, ex.seed);
      recs.push_back({0, i, dpp_sample(last, si, &stats)});
    }
    w.write("samples.csv", samples_csv(recs, 1, recs.front().config.mode));
    s["dpp_samples"] = dpp_samples;
    put_num(s, "dpp_efficiency", stats.efficiency());
  }
  w.write_summary(s);
  w.finish_manifest(doc, ex.seed, model_key_of(head.weight, head.base, 1));
  return {};
}

CmdResult cmd_tropical(json& doc, const Exec& ex, const fs::path& out, std::ostream& log) {
  json& m = need_mut(doc, "model", "config");
  check_keys(m, {"n", "k", "beta"}, "model");
  const int n = static_cast<int>(req_int(m, "n", "model"));
  const int k = static_cast<int>(req_int(m, "k", "model"));
  const double beta = parse_beta_value(need(m, "beta", "model"), "model.beta");
  if (k < 1 || k > 100000) bad_config("model.k out of range [1, 100000]");
  if (!std::isfinite(beta)) bad_config("model.beta must be finite for tropical");

  json& tr = need_mut(doc, "tropical", "config");
  check_keys(tr, {"body", "z_diagnostic"}, "tropical");
  const ConvexBody body = parse_body(need_mut(tr, "body", "tropical"), "tropical.body");
  if (body.dimension() != n) bad_config("tropical.body dimension differs from model.n");

  const double r_p = r_invariant(body);
  const LatticeCloud cloud = lattice_cloud(body, k);

  RunWriter w(out, "tropical");
  w.write("cloud.csv", cloud_csv(cloud));

  json s;
  s["r_p"] = r_p;
  s["n_cloud"] = cloud.count();
  double bary_gap = 0.0;
  for (int c = 0; c < n; ++c)
    bary_gap = std::max(bary_gap, std::abs(cloud.mean[c] - body.barycenter()[c]));
  s["cloud_mean_vs_barycenter"] = bary_gap;

  bool zdiag_written = false;
  if (tr.contains("z_diagnostic")) {
    json& zd = tr["z_diagnostic"];
    check_keys(zd, {"radii", "samples_per_radius"}, "tropical.z_diagnostic");
    std::vector<double> radii = {5.0, 10.0, 20.0};
    if (zd.contains("radii"))
      radii = as_num_vec(zd.at("radii"), "tropical.z_diagnostic.radii");
    else
      zd["radii"] = radii;
    const long long spr = opt_int(zd, "samples_per_radius", 200000, "tropical.z_diagnostic");
    if (spr < 100 || spr > 100000000)
      bad_config("tropical.z_diagnostic.samples_per_radius out of range");
    log << "tropical: partition-mass diagnostic over " << radii.size() << " radii\n";
    const TruncationDiagnostic d =
        tropical_z_diagnostic(body, k, beta, ex.seed, static_cast<long>(spr), radii);
    w.write("zdiag.csv", zdiag_csv(d));
    zdiag_written = true;
    s["divergent"] = d.divergent ? 1 : 0;
    if (!d.ratio.empty()) {
      put_num(s, "ratio_first", d.ratio.front());
      put_num(s, "ratio_last", d.ratio.back());
    }
  }

  CmdResult result;
  if (ex.sweeps > 0) {
    TropicalGibbsOptions opt;
    opt.burn_in_frac = ex.burn_in_frac;
    opt.thin = static_cast<long>(ex.thin);
    opt.workers = ex.workers;
    log << "tropical: sampling beta=" << beta << " sweeps=" << ex.sweeps << "\n";
    const TropicalGibbsResult res =
        tropical_gibbs(body, k, beta, static_cast<long>(ex.sweeps), ex.chains, ex.seed, opt);
    if (res.samples.empty() && res.diagnostic) {
      // The Gibbs family is non-normalizable at this beta; keep the
      // divergence evidence and report an admissibility failure.
      if (!zdiag_written) w.write("zdiag.csv", zdiag_csv(*res.diagnostic));
      s["divergent"] = res.diagnostic->divergent ? 1 : 0;
      s["sampling_refused"] = 1;
      result = {kExitAdmissibility, "tropical Gibbs family diverges at beta=" +
                                        format_double(beta) + " (R_P=" + format_double(r_p) + ")"};
    } else {
      w.write("samples.csv", samples_csv(res.samples, n, ConfigMode::RealTropical));
      w.write("chain_stats.csv", chain_stats_csv(res.stats));
      s["acceptance"] = res.acceptance;
      s["n_records"] = res.samples.size();
      s["burn_in"] = res.burn_in;
      s["thin"] = res.thin;
    }
  }
  w.write_summary(s);
  w.finish_manifest(doc, ex.seed, "body=" + body.describe() + ";k=" + std::to_string(k));
  return result;
}

DiscreteMeasure parse_discrete_measure(json& spec, const std::string& where) {
  check_keys(spec, {"points", "weights", "lattice"}, where.c_str());
  if (spec.contains("lattice")) {
    if (spec.contains("points") || spec.contains("weights"))
      bad_config(where + ": give either 'lattice' or 'points', not both");
    json& lat = spec["lattice"];
    const std::string lat_where = where + ".lattice";
    check_keys(lat, {"body", "k"}, lat_where.c_str());
    const ConvexBody body = parse_body(need_mut(lat, "body", lat_where.c_str()), lat_where + ".body");
    const int k = static_cast<int>(req_int(lat, "k", lat_where.c_str()));
    const LatticeCloud cloud = lattice_cloud(body, k);
    return DiscreteMeasure::uniform(cloud.points);
  }
  const json& pl = need(spec, "points", where.c_str());
  if (!pl.is_array() || pl.empty()) bad_config(where + ".points must be a non-empty array");
  std::vector<Eigen::VectorXd> points;
  for (const auto& p : pl) {
    const std::vector<double> coords = as_num_vec(p, where + ".points entry");
    points.push_back(
        Eigen::Map<const Eigen::VectorXd>(coords.data(), static_cast<int>(coords.size())));
  }
  if (!spec.contains("weights")) return DiscreteMeasure::uniform(std::move(points));
  const std::vector<double> wts = as_num_vec(spec.at("weights"), where + ".weights");
  if (wts.size() != points.size()) bad_config(where + ": weights and points differ in length");
  return DiscreteMeasure(std::move(points),
                         Eigen::Map<const Eigen::VectorXd>(wts.data(), static_cast<int>(wts.size())));
}

CmdResult cmd_transport(json& doc, const Exec& ex, const fs::path& out, std::ostream& log) {
  json& tr = need_mut(doc, "transport", "config");
  check_keys(tr, {"source", "target"}, "transport");
  DiscreteMeasure mu0 = parse_discrete_measure(need_mut(tr, "source", "transport"), "transport.source");
  DiscreteMeasure mu1 = parse_discrete_measure(need_mut(tr, "target", "transport"), "transport.target");
  log << "transport: " << mu0.size() << " x " << mu1.size() << " coupling\n";
  const TransportPlan plan = ot_cost(mu0, mu1);

  RunWriter w(out, "transport");
  w.write("plan.csv", plan_to_csv(plan));
  json s;
  s["cost"] = plan.cost;
  s["n_entries"] = plan.entries.size();
  s["marginal_residual"] = plan.marginal_residual;
  s["size_source"] = mu0.size();
  s["size_target"] = mu1.size();
  w.write_summary(s);
  w.finish_manifest(doc, ex.seed, "transport");
  return {};
}

CmdResult cmd_curieweiss(json& doc, const Exec& ex, const fs::path& out, std::ostream& log) {
  json& cw = need_mut(doc, "curie-weiss", "config");
  check_keys(cw, {"beta", "betas", "h", "hs", "N", "window", "sign"}, "curie-weiss");
  std::vector<double> betas;
  if (cw.contains("betas"))
    betas = as_num_vec(cw.at("betas"), "curie-weiss.betas");
  else
    betas.push_back(req_num(cw, "beta", "curie-weiss"));
  std::vector<double> hs;
  if (cw.contains("hs"))
    hs = as_num_vec(cw.at("hs"), "curie-weiss.hs");
  else
    hs.push_back(opt_num(cw, "h", 0.0, "curie-weiss"));
  const std::string sign_str = opt_str(cw, "sign", "ferro", "curie-weiss");
  CWSign sign;
  if (sign_str == "ferro")
    sign = CWSign::Ferro;
  else if (sign_str == "antiferro")
    sign = CWSign::Antiferro;
  else
    bad_config("curie-weiss.sign '" + sign_str + "' (use ferro | antiferro)");

  log << "curie-weiss: " << betas.size() << " beta value(s) x " << hs.size() << " field(s)\n";
  RunWriter w(out, "curie-weiss");
  w.write("phase.csv", cw_phase_table_csv(betas, hs, sign));

  // Headline analysis at the first (beta, h) pair.
  const double beta = betas.front(), h = hs.front();
  const std::vector<CWFixedPoint> roots = cw_magnetization(beta, h, sign);
  double m_top = 0.0;
  bool m_top_stable = false;
  for (const auto& r : roots)
    if (r.stable && std::abs(r.m) >= std::abs(m_top)) {
      m_top = r.m;
      m_top_stable = true;
    }
  json s;
  s["beta"] = beta;
  s["h"] = h;
  s["n_roots"] = roots.size();
  s["m_top"] = m_top;
  s["m_top_stable"] = m_top_stable ? 1 : 0;

  if (cw.contains("N")) {
    const long long N = req_int(cw, "N", "curie-weiss");
    double lo, hi;
    if (cw.contains("window")) {
      const std::vector<double> win = as_num_vec(cw.at("window"), "curie-weiss.window");
      if (win.size() != 2) bad_config("curie-weiss.window must be [lo, hi]");
      lo = win[0];
      hi = win[1];
    } else {
      lo = std::max(-1.0, m_top - 0.05);
      hi = std::min(1.0, m_top + 0.05);
      cw["window"] = json::array({lo, hi});
    }
    const CWFiniteN fin = cw_finite_n(beta, h, N, lo, hi, sign);
    std::string fn = "j,m,log_p\n";
    for (std::size_t j = 0; j < fin.m.size(); ++j)
      fn += std::to_string(j) + "," + format_double(fin.m[j]) + "," + format_double(fin.log_p[j]) +
            "\n";
    w.write("finite_n.csv", fn);
    s["N"] = N;
    put_num(s, "window_prob", fin.window_prob);
    put_num(s, "rate", fin.rate);
    put_num(s, "f_gap", fin.f_gap);
    put_num(s, "free_energy_n", fin.free_energy_n);
    put_num(s, "mean_energy", fin.mean_energy);
  }
  w.write_summary(s);
  w.finish_manifest(doc, ex.seed, "curie-weiss(sign=" + sign_str + ")");
  return {};
}

CmdResult cmd_green(json& doc, const Exec& ex, const fs::path& out, std::ostream& log) {
  EnsembleModel model = parse_model(need_mut(doc, "model", "config"), BetaPolicy::Unused);
  if (model.n() != 1) bad_config("green-formula grids are one-dimensional; model.n must be 1");
  json& gf = command_block(doc, "green-formula");
  check_keys(gf, {"grid", "samples", "compare_bergman"}, "green-formula");
  json& grid_spec = command_block(gf, "grid");
  const std::vector<cplx> grid = parse_grid(grid_spec, "green-formula.grid");
  const long long samples = opt_int(gf, "samples", 2000, "green-formula");
  if (samples < 100 || samples > 100000000)
    bad_config("green-formula.samples out of range [100, 1e8]");
  const bool compare = opt_bool(gf, "compare_bergman", false, "green-formula");

  log << "green-formula: " << grid.size() << " grid points, " << samples << " samples\n";
  const GreenEstimate est = green_formula_estimate(model, grid, static_cast<int>(samples), ex.seed);

  RunWriter w(out, "green-formula");
  w.write("green.csv", green_csv(est));
  json s;
  s["samples"] = est.samples;
  s["grid_points"] = est.grid.size();
  double max_se = 0.0;
  for (double se : est.se) max_se = std::max(max_se, se);
  put_num(s, "max_se", max_se);
  if (compare) {
    // The estimator approximates the Christoffel potential k^{-1. } log K up
    // to an additive constant; both sides are grid-mean centered.
    const GramFactorization g = gram_factorize(model.basis, model.weight, model.base);
    std::vector<double> psi;
    KahanSum mean;
    for (const cplx& z : grid) {
      psi.push_back(christoffel(g, z).psi);
      mean.add(psi.back());
    }
    const double shift = mean.value() / static_cast<double>(psi.size());
    double sup_dev = 0.0;
    for (std::size_t i = 0; i < psi.size(); ++i)
      sup_dev = std::max(sup_dev, std::abs(est.value[i] - (psi[i] - shift)));
    put_num(s, "sup_dev_bergman", sup_dev);
  }
  w.write_summary(s);
  w.finish_manifest(doc, ex.seed, model_key_of(model.weight, model.base, 1));
  return {};
}

// ---------------------------------------------------------------------------
// report: scan run directories, verify manifests and hashes, and join
// summaries into comparison tables.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool inq = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (inq) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          inq = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      inq = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

int column_of(const CsvTable& t, const std::string& name) {
  for (std::size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == name) return static_cast<int>(i);
  return -1;
}

std::optional<double> to_num(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::string> read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) return std::nullopt;
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

struct RunInfo {
  std::string name;  // subdirectory name, the run id in report tables
  std::string command;
  std::string model_key;
  json config;
  json summary;
  std::map<std::string, std::string> files;  // verified path -> content
};

struct Exclusion {
  std::string dir;
  std::string reason;
};

std::optional<RadialProfile> profile_from_csv(const std::string& text) {
  const CsvTable t = parse_csv(text);
  const int cs = column_of(t, "s"), cp = column_of(t, "psi"), cm = column_of(t, "m");
  if (cs < 0 || cp < 0 || cm < 0) return std::nullopt;
  RadialProfile p;
  for (const auto& row : t.rows) {
    const auto s = to_num(row.at(cs)), psi = to_num(row.at(cp)), m = to_num(row.at(cm));
    if (!s || !psi || !m) return std::nullopt;
    p.s.push_back(*s);
    p.psi.push_back(*psi);
    p.m.push_back(*m);
  }
  if (p.size() < 2) return std::nullopt;
  return p;
}

// Radii of pooled planar samples; nullopt for real-mode (x_1) files.
std::optional<std::vector<double>> radii_from_samples_csv(const std::string& text) {
  const CsvTable t = parse_csv(text);
  const int cre = column_of(t, "re_1"), cim = column_of(t, "im_1");
  if (cre < 0 || cim < 0) return std::nullopt;
  std::vector<double> radii;
  radii.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    const auto re = to_num(row.at(cre)), im = to_num(row.at(cim));
    if (!re || !im) return std::nullopt;
    radii.push_back(std::hypot(*re, *im));
  }
  return radii;
}

void scan_runs(const fs::path& root, std::vector<RunInfo>& runs, std::vector<Exclusion>& excl,
               int& candidates) {
  std::vector<fs::path> subdirs;
  for (const auto& de : fs::directory_iterator(root))
    if (de.is_directory() && de.path().filename() != "report") subdirs.push_back(de.path());
  std::sort(subdirs.begin(), subdirs.end());

  for (const fs::path& dir : subdirs) {
    const std::string name = dir.filename().string();
    const std::optional<std::string> mtext = read_file(dir / "manifest.json");
    if (!mtext) {
      ++candidates;
      excl.push_back({name, "missing manifest"});
      continue;
    }
    json man;
    try {
      man = json::parse(*mtext);
    } catch (const json::parse_error&) {
      ++candidates;
      excl.push_back({name, "manifest is not valid JSON"});
      continue;
    }
    if (!man.is_object() || !man.contains("schema") || !man["schema"].is_number_integer()) {
      ++candidates;
      excl.push_back({name, "manifest lacks a schema version"});
      continue;
    }
    if (man["schema"].get<int>() != kManifestSchema)
      fail(kExitConfig, "report: manifest schema " + man["schema"].dump() + " in '" + name +
                            "', this tool reads schema " + std::to_string(kManifestSchema));
    const std::string command = man.value("command", std::string());
    if (command == "report") continue;  // never re-consume report output
    ++candidates;

    std::map<std::string, std::string> listed;  // path -> expected hash
    if (man.contains("outputs") && man["outputs"].is_array())
      for (const auto& o : man["outputs"])
        if (o.is_object() && o.contains("path") && o.contains("fnv1a64"))
          listed[o["path"].get<std::string>()] = o["fnv1a64"].get<std::string>();

    std::string reason;
    std::map<std::string, std::string> files;
    for (const auto& de : fs::directory_iterator(dir)) {
      if (!de.is_regular_file()) continue;
      const std::string fname = de.path().filename().string();
      if (fname == "manifest.json") continue;
      if (!listed.count(fname)) {
        reason = "unhashed file '" + fname + "'";
        break;
      }
    }
    if (reason.empty())
      for (const auto& [path, expect] : listed) {
        const std::optional<std::string> content = read_file(dir / path);
        if (!content) {
          reason = "listed output '" + path + "' is missing";
          break;
        }
        if (hex64(fnv1a64(*content)) != expect) {
          reason = "content hash mismatch for '" + path + "'";
          break;
        }
        files[path] = *content;
      }
    if (reason.empty() && !files.count("summary.json")) reason = "missing summary.json";
    if (!reason.empty()) {
      excl.push_back({name, reason});
      continue;
    }

    RunInfo run;
    run.name = name;
    run.command = command;
    run.model_key = man.value("model_key", std::string());
    run.config = man.value("config", json::object());
    try {
      run.summary = json::parse(files.at("summary.json"));
    } catch (const json::parse_error&) {
      excl.push_back({name, "summary.json is not valid JSON"});
      continue;
    }
    run.files = std::move(files);
    runs.push_back(std::move(run));
  }
}

CmdResult cmd_report(json& doc, const fs::path& scan_dir, std::uint64_t seed, std::ostream& log) {
  if (!fs::exists(scan_dir) || !fs::is_directory(scan_dir))
    bad_config("report: output directory '" + scan_dir.string() + "' does not exist");
  std::vector<RunInfo> runs;
  std::vector<Exclusion> excl;
  int candidates = 0;
  scan_runs(scan_dir, runs, excl, candidates);
  if (candidates == 0)
    bad_config("report: no candidate run directories under '" + scan_dir.string() + "'");
  log << "report: " << runs.size() << " run(s) included, " << excl.size() << " excluded\n";

  // Long-format table: one row per numeric summary entry of every run.
  std::string longcsv = "run,command,model_key,beta,k,metric,value\n";
  long long long_rows = 0;
  for (const RunInfo& r : runs) {
    std::string beta_cell, k_cell;
    if (r.config.is_object() && r.config.contains("model") && r.config["model"].is_object()) {
      const json& m = r.config["model"];
      if (m.contains("beta"))
        beta_cell = m["beta"].is_string() ? m["beta"].get<std::string>()
                                          : format_double(m["beta"].get<double>());
      if (m.contains("k") && m["k"].is_number_integer())
        k_cell = std::to_string(m["k"].get<long long>());
    }
    for (auto it = r.summary.begin(); it != r.summary.end(); ++it) {
      double v;
      if (it->is_boolean())
        v = it->get<bool>() ? 1.0 : 0.0;
      else if (it->is_number())
        v = it->get<double>();
      else
        continue;
      longcsv += csv_quote(r.name) + "," + r.command + "," + csv_quote(r.model_key) + "," +
                 beta_cell + "," + k_cell + "," + it.key() + "," + format_double(v) + "\n";
      ++long_rows;
    }
  }

  // Comparison table keyed by (model_key, beta): equilibrium sweep rows merged
  // across runs, sample runs attached, and W1(sample radii, solver measure)
  // where both sides are present.
  struct Comp {
    std::string beta_str;
    std::string eq_run, eq_mass, eq_gap, eq_support;
    const std::string* profile = nullptr;
    std::string sample_run;
    long long sample_count = 0;
    const std::string* samples = nullptr;
  };
  std::map<std::pair<std::string, double>, Comp> comp;

  for (const RunInfo& r : runs) {
    if (r.command == "equilibrium") {
      const auto it = r.files.find("sweep.csv");
      if (it == r.files.end()) continue;
      const CsvTable t = parse_csv(it->second);
      const int cb = column_of(t, "beta"), cg = column_of(t, "sup_gap_envelope"),
                cm = column_of(t, "mass_residual"), cs = column_of(t, "support_radius"),
                cf = column_of(t, "failed");
      if (cb < 0 || cg < 0 || cm < 0 || cs < 0 || cf < 0) continue;
      for (const auto& row : t.rows) {
        if (row.at(cf) == "1") continue;
        const std::optional<double> beta = to_num(row.at(cb));
        if (!beta) continue;
        Comp& c = comp[{r.model_key, *beta}];
        if (!c.eq_run.empty()) continue;  // first (sorted) run wins
        c.beta_str = row.at(cb);
        c.eq_run = r.name;
        c.eq_gap = row.at(cg);
        c.eq_mass = row.at(cm);
        c.eq_support = row.at(cs);
        const auto pf = r.files.find("profile_beta_" + row.at(cb) + ".csv");
        if (pf != r.files.end()) c.profile = &pf->second;
      }
    } else if (r.command == "sample") {
      if (!r.config.is_object() || !r.config.contains("model")) continue;
      const json& m = r.config["model"];
      if (!m.is_object() || !m.contains("beta") || !m["beta"].is_number()) continue;
      const double beta = m["beta"].get<double>();
      const auto it = r.files.find("samples.csv");
      if (it == r.files.end()) continue;
      Comp& c = comp[{r.model_key, beta}];
      if (!c.sample_run.empty()) continue;
      if (c.beta_str.empty()) c.beta_str = format_double(beta);
      c.sample_run = r.name;
      c.samples = &it->second;
      if (r.summary.contains("n_records") && r.summary["n_records"].is_number())
        c.sample_count = r.summary["n_records"].get<long long>();
    }
  }

  std::string compcsv =
      "model_key,beta,equilibrium_run,mass_residual,sup_gap_envelope,support_radius,"
      "sample_run,sample_count,w1_sample_solver\n";
  for (const auto& [key, c] : comp) {
    std::string w1_cell;
    if (c.profile && c.samples) {
      const std::optional<RadialProfile> prof = profile_from_csv(*c.profile);
      const std::optional<std::vector<double>> radii = radii_from_samples_csv(*c.samples);
      if (prof && radii && !radii->empty()) {
        std::vector<std::pair<double, double>> emp;
        emp.reserve(radii->size());
        const double wgt = 1.0 / static_cast<double>(radii->size());
        for (double r : *radii) emp.emplace_back(r, wgt);
        w1_cell = format_double(w1_weighted_1d(std::move(emp), profile_radius_atoms(*prof)));
      }
    }
    compcsv += csv_quote(key.first) + "," + c.beta_str + "," + csv_quote(c.eq_run) + "," +
               c.eq_mass + "," + c.eq_gap + "," + c.eq_support + "," + csv_quote(c.sample_run) +
               "," + (c.sample_run.empty() ? std::string() : std::to_string(c.sample_count)) +
               "," + w1_cell + "\n";
  }

  RunWriter w(scan_dir / "report", "report");
  w.write("comparison.csv", compcsv);
  w.write("long.csv", longcsv);
  json s;
  s["runs_included"] = runs.size();
  s["runs_excluded"] = excl.size();
  s["warnings"] = excl.size();
  s["comparison_rows"] = comp.size();
  s["long_rows"] = long_rows;
  json ex_arr = json::array();
  for (const Exclusion& e : excl) ex_arr.push_back(json{{"dir", e.dir}, {"reason", e.reason}});
  s["exclusions"] = ex_arr;
  w.write_summary(s);
  w.finish_manifest(doc, seed, "report");
  return {};
}

// ---------------------------------------------------------------------------
// Dispatcher.

std::vector<const char*> allowed_top_keys(const std::string& cmd) {
  std::vector<const char*> keys = {"command", "output", "execution"};
  if (cmd == "sample") {
    keys.push_back("model");
    keys.push_back("reference");
  } else if (cmd == "fekete") {
    keys.push_back("model");
    keys.push_back("fekete");
    keys.push_back("reference");
  } else if (cmd == "equilibrium") {
    keys.push_back("model");
    keys.push_back("equilibrium");
  } else if (cmd == "bergman") {
    keys.push_back("model");
    keys.push_back("bergman");
  } else if (cmd == "tropical") {
    keys.push_back("model");
    keys.push_back("tropical");
  } else if (cmd == "transport") {
    keys.push_back("transport");
  } else if (cmd == "curie-weiss") {
    keys.push_back("curie-weiss");
  } else if (cmd == "green-formula") {
    keys.push_back("model");
    keys.push_back("green-formula");
  }
  return keys;
}

int run_cli_inner(const CliRequest& req, std::ostream& log) {
  if (req.config_path.empty()) bad_config("--config is required");
  std::ifstream f(req.config_path, std::ios::binary);
  if (!f) bad_config("cannot open config file '" + req.config_path + "'");
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    bad_config(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) bad_config("top level must be an object");

  const std::string cmd = req_str(doc, "command", "config");
  static const std::set<std::string> known = {"sample",    "fekete",      "equilibrium",
                                             "bergman",   "tropical",    "transport",
                                             "curie-weiss", "green-formula", "report"};
  if (!known.count(cmd)) bad_config("unknown command '" + cmd + "'");
  if (!req.command.empty() && req.command != cmd)
    bad_config("command mismatch: CLI says '" + req.command + "', config says '" + cmd + "'");

  if (!req.out_override.empty()) doc["output"] = req.out_override;
  if (req.seed_override) doc["execution"]["seed"] = *req.seed_override;

  check_keys(doc, allowed_top_keys(cmd), "config");
  if (!doc.contains("output"))
    bad_config("no output directory: set config field 'output' or pass --out");
  const fs::path out = fs::path(as_str(doc.at("output"), "config.output"));

  const bool needs_seed = cmd != "report";
  Exec ex;
  if (doc.contains("execution") || needs_seed) {
    if (!doc.contains("execution")) bad_config("execution block with a seed is mandatory");
    ex = parse_exec(doc["execution"], needs_seed);
  }

  CmdResult res;
  if (cmd == "sample")
    res = cmd_sample(doc, ex, out, log);
  else if (cmd == "fekete")
    res = cmd_fekete(doc, ex, out, log);
  else if (cmd == "equilibrium")
    res = cmd_equilibrium(doc, ex, out, log);
  else if (cmd == "bergman")
    res = cmd_bergman(doc, ex, out, log);
  else if (cmd == "tropical")
    res = cmd_tropical(doc, ex, out, log);
  else if (cmd == "transport")
    res = cmd_transport(doc, ex, out, log);
  else if (cmd == "curie-weiss")
    res = cmd_curieweiss(doc, ex, out, log);
  else if (cmd == "green-formula")
    res = cmd_green(doc, ex, out, log);
  else
    res = cmd_report(doc, out, ex.seed, log);

  if (res.exit_code == kExitOk)
    log << cmd << ": ok, artifacts in " << out.string() << "\n";
  else
    log << cmd << ": " << res.note << " (exit " << res.exit_code << ")\n";
  return res.exit_code;
}

}  // namespace

std::string tool_version() { return std::string(kToolName) + " " + kSemver; }

int run_cli(const CliRequest& req, std::ostream& log) {
  try {
    return run_cli_inner(req, log);
  } catch (const CliError& e) {
    log << "error: " << e.message << "\n";
    return e.code;
  } catch (const json::exception& e) {
    log << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::logic_error& e) {
    log << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::runtime_error& e) {
    log << "error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    log << "internal error: " << e.what() << "\n";
    return kExitSolver;
  }
}

}  // namespace feklab
