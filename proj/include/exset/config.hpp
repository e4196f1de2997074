#pragma once

#include "exset/active_learning.hpp"
#include "exset/errors.hpp"
#include "exset/kde_pce.hpp"
#include "exset/testbeds.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace exset {

using json = nlohmann::json;

inline const std::vector<std::string>& method_names()
{
  static const std::vector<std::string> names{"maxmin", "lhs", "kde-pce"};
  return names;
}

/// Everything a `run` needs. Defaults reproduce the sand-piles study.
struct ExperimentConfig
{
  std::string testbed = "sand-piles";
  std::string method = "maxmin";
  LearningConfig learning{};
  Eigen::Index repetitions = 20;
  /// Realizations for the GP-membership field of the median run.
  Eigen::Index n_rea_metrics = 200;
  std::string output_dir = "exset-out";
  /// 0 means one worker per hardware thread.
  int workers = 0;
  /// Compare against the true-simulator reference.
  bool oracle = true;
  /// Emit GP and DoE membership fields.
  bool membership = true;
  /// Reference cache; falls back to $EXSET_CACHE_DIR, then <output_dir>/cache.
  std::optional<std::string> cache_dir;
  PceOptions pce{};

  /// Seed of repetition r.
  std::uint64_t repetition_seed(Eigen::Index r) const { return derive_seed(learning.seed, {static_cast<std::uint64_t>(r)}); }
};

namespace detail {

class ConfigReader
{
public:
  ConfigReader(const json& j, std::string path) : j_(j), path_(std::move(path))
  {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected an object");
  }

  /// Rejects fields that were never asked for.
  void done() const
  {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(path_ + "/" + it.key(), "unknown field");
  }

  std::string child(const std::string& key) const { return path_ + "/" + key; }

  const json* find(const std::string& key)
  {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out)
  {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(child(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(child(key), "must be finite");
    }
  }

  /// A number, or null meaning unbounded (given by `none`).
  void bound(const std::string& key, double& out, double none)
  {
    if (const json* v = find(key)) {
      if (v->is_null()) out = none;
      else if (v->is_number()) out = v->get<double>();
      else throw ConfigError(child(key), "expected a number or null");
    }
  }

  template <class Int>
  void integer(const std::string& key, Int& out, long long lo, long long hi = std::numeric_limits<long long>::max())
  {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(child(key), "expected an integer");
      const long long x = v->get<long long>();
      if (x < lo || x > hi) throw ConfigError(child(key), "out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      out = static_cast<Int>(x);
    }
  }

  void seed(const std::string& key, std::uint64_t& out)
  {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
        throw ConfigError(child(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void boolean(const std::string& key, bool& out)
  {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(child(key), "expected a boolean");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out)
  {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(child(key), "expected a string");
      out = v->get<std::string>();
    }
  }

private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& path, const std::string& message)
{
  if (!ok) throw ConfigError(path, message);
}

} // namespace detail

/// Checks cross-field constraints; paths name the offending field.
inline void validate(const ExperimentConfig& c)
{
  using detail::require;
  const auto& names = testbed_names();
  require(std::find(names.begin(), names.end(), c.testbed) != names.end(), "/testbed", "unknown testbed '" + c.testbed + "'");
  const auto& methods = method_names();
  require(std::find(methods.begin(), methods.end(), c.method) != methods.end(), "/method", "unknown method '" + c.method + "'");
  const auto& l = c.learning;
  require(l.alpha > 0.0 && l.alpha < 1.0, "/alpha", "must lie in (0, 1)");
  require(!std::isnan(l.target.low) && !std::isnan(l.target.high), "/target", "bounds must be numbers or null");
  require(l.target.low <= l.target.high, "/target", "low must not exceed high");
  require(std::isfinite(l.target.low) || std::isfinite(l.target.high), "/target", "at least one bound must be finite");
  require(l.n_init >= 2, "/n_init", "must be at least 2");
  require(l.budget >= 0, "/budget", "must be non-negative");
  require(l.n_mcs >= 1, "/n_mcs", "must be positive");
  require(l.n_rea >= 1, "/n_rea", "must be positive");
  require(l.beta_lo > 0.0 && l.beta_lo < l.beta_hi && l.beta_hi < 1.0, "/beta", "need 0 < lo < hi < 1");
  require(l.beta_lo_wide > 0.0 && l.beta_lo_wide <= l.beta_lo && l.beta_hi <= l.beta_hi_wide && l.beta_hi_wide < 1.0, "/beta/wide",
          "widened band must contain the primary band and lie in (0, 1)");
  require(l.surrogate.ric_threshold > 0.0 && l.surrogate.ric_threshold <= 1.0, "/surrogate/ric", "must lie in (0, 1]");
  require(l.surrogate.gp.nugget > 0.0, "/surrogate/nugget", "must be positive");
  require(l.surrogate.gp.max_nugget >= l.surrogate.gp.nugget, "/surrogate/max_nugget", "must be at least the nugget");
  require(l.surrogate.gp.restarts >= 1, "/surrogate/restarts", "must be at least 1");
  require(l.surrogate.gp.lengthscale_lo > 0.0 && l.surrogate.gp.lengthscale_lo < l.surrogate.gp.lengthscale_hi, "/surrogate/lengthscale_bounds",
          "need 0 < lo < hi");
  const auto& o = l.surrogate.gp.optimizer;
  require(o.rho_begin > 0.0 && o.rho_end > 0.0 && o.rho_end <= o.rho_begin, "/surrogate/optimizer", "need 0 < rho_end <= rho_begin");
  require(o.max_evals >= 1, "/surrogate/optimizer/max_evals", "must be positive");
  require(l.kl.energy > 0.0 && l.kl.energy <= 1.0, "/kl/energy", "must lie in (0, 1]");
  require(l.kl.max_terms >= 0, "/kl/max_terms", "must be non-negative");
  require(l.kl.max_anchors >= 1, "/kl/max_anchors", "must be positive");
  require(c.repetitions >= 1, "/repetitions", "must be positive");
  require(c.n_rea_metrics >= 1, "/n_rea_metrics", "must be positive");
  require(c.workers >= 0, "/workers", "must be non-negative");
  require(!c.output_dir.empty(), "/output_dir", "must not be empty");
  require(c.pce.min_degree >= 1 && c.pce.min_degree <= c.pce.max_degree, "/pce", "need 1 <= min_degree <= max_degree");
  if (c.method == "kde-pce")
    require(l.n_init + l.budget <= l.n_mcs, "/budget", "n_init + budget must not exceed n_mcs for kde-pce");
}

/// Overlay `j` onto `c`. Unknown fields and type errors raise ConfigError with
/// the JSON path of the offending value.
inline void apply_json(ExperimentConfig& c, const json& j)
{
  detail::ConfigReader r(j, "");
  auto& l = c.learning;
  r.string("testbed", c.testbed);
  r.string("method", c.method);
  r.number("alpha", l.alpha);
  if (const json* t = r.find("target")) {
    detail::ConfigReader tr(*t, "/target");
    tr.bound("low", l.target.low, -std::numeric_limits<double>::infinity());
    tr.bound("high", l.target.high, std::numeric_limits<double>::infinity());
    tr.done();
  }
  r.integer("n_init", l.n_init, 2);
  r.integer("budget", l.budget, 0);
  r.integer("n_mcs", l.n_mcs, 1);
  r.integer("n_rea", l.n_rea, 1);
  r.integer("n_rea_metrics", c.n_rea_metrics, 1);
  if (const json* b = r.find("beta")) {
    detail::ConfigReader br(*b, "/beta");
    br.number("lo", l.beta_lo);
    br.number("hi", l.beta_hi);
    if (const json* w = br.find("wide")) {
      detail::ConfigReader wr(*w, "/beta/wide");
      wr.number("lo", l.beta_lo_wide);
      wr.number("hi", l.beta_hi_wide);
      wr.done();
    }
    br.done();
  }
  r.integer("repetitions", c.repetitions, 1);
  if (const json* s = r.find("seeds")) {
    detail::ConfigReader sr(*s, "/seeds");
    sr.seed("mc", l.mc_seed);
    sr.seed("base", l.seed);
    sr.done();
  }
  r.string("output_dir", c.output_dir);
  r.integer("workers", c.workers, 0, 4096);
  r.boolean("oracle", c.oracle);
  r.boolean("membership", c.membership);
  if (const json* v = r.find("cache_dir")) {
    if (v->is_null()) c.cache_dir.reset();
    else if (v->is_string()) c.cache_dir = v->get<std::string>();
    else throw ConfigError("/cache_dir", "expected a string or null");
  }
  if (const json* s = r.find("surrogate")) {
    detail::ConfigReader sr(*s, "/surrogate");
    auto& g = l.surrogate.gp;
    sr.number("ric", l.surrogate.ric_threshold);
    std::string kernel(to_string(g.kernel));
    sr.string("kernel", kernel);
    try {
      g.kernel = kernel_kind_from_string(kernel);
    } catch (const Error& e) {
      throw ConfigError("/surrogate/kernel", e.what());
    }
    sr.number("nugget", g.nugget);
    sr.number("max_nugget", g.max_nugget);
    sr.integer("restarts", g.restarts, 1, 10000);
    if (const json* lb = sr.find("lengthscale_bounds")) {
      if (!lb->is_array() || lb->size() != 2 || !(*lb)[0].is_number() || !(*lb)[1].is_number())
        throw ConfigError("/surrogate/lengthscale_bounds", "expected [lo, hi]");
      g.lengthscale_lo = (*lb)[0].get<double>();
      g.lengthscale_hi = (*lb)[1].get<double>();
    }
    if (const json* o = sr.find("optimizer")) {
      detail::ConfigReader orr(*o, "/surrogate/optimizer");
      orr.number("rho_begin", g.optimizer.rho_begin);
      orr.number("rho_end", g.optimizer.rho_end);
      orr.integer("max_evals", g.optimizer.max_evals, 1, 1000000);
      orr.done();
    }
    sr.done();
  }
  if (const json* k = r.find("kl")) {
    detail::ConfigReader kr(*k, "/kl");
    kr.number("energy", l.kl.energy);
    kr.integer("max_terms", l.kl.max_terms, 0);
    kr.integer("max_anchors", l.kl.max_anchors, 1);
    kr.done();
  }
  if (const json* p = r.find("pce")) {
    detail::ConfigReader pr(*p, "/pce");
    pr.integer("min_degree", c.pce.min_degree, 1, 20);
    pr.integer("max_degree", c.pce.max_degree, 1, 20);
    pr.done();
  }
  r.done();
}

inline ExperimentConfig config_from_json(const json& j)
{
  ExperimentConfig c;
  apply_json(c, j);
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw ConfigError("/", "cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

namespace detail {

inline json bound_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

} // namespace detail

/// Fully resolved configuration; `config_from_json(to_json(c))` reproduces `c`.
inline json to_json(const ExperimentConfig& c)
{
  const auto& l = c.learning;
  const auto& g = l.surrogate.gp;
  json j;
  j["testbed"] = c.testbed;
  j["method"] = c.method;
  j["alpha"] = l.alpha;
  j["target"] = {{"low", detail::bound_json(l.target.low)}, {"high", detail::bound_json(l.target.high)}};
  j["n_init"] = l.n_init;
  j["budget"] = l.budget;
  j["n_mcs"] = l.n_mcs;
  j["n_rea"] = l.n_rea;
  j["n_rea_metrics"] = c.n_rea_metrics;
  j["beta"] = {{"lo", l.beta_lo}, {"hi", l.beta_hi}, {"wide", {{"lo", l.beta_lo_wide}, {"hi", l.beta_hi_wide}}}};
  j["repetitions"] = c.repetitions;
  j["seeds"] = {{"mc", l.mc_seed}, {"base", l.seed}};
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  j["oracle"] = c.oracle;
  j["membership"] = c.membership;
  j["cache_dir"] = c.cache_dir ? json(*c.cache_dir) : json(nullptr);
  j["surrogate"] = {{"ric", l.surrogate.ric_threshold},
                    {"kernel", std::string(to_string(g.kernel))},
                    {"nugget", g.nugget},
                    {"max_nugget", g.max_nugget},
                    {"restarts", g.restarts},
                    {"lengthscale_bounds", {g.lengthscale_lo, g.lengthscale_hi}},
                    {"optimizer", {{"rho_begin", g.optimizer.rho_begin}, {"rho_end", g.optimizer.rho_end}, {"max_evals", g.optimizer.max_evals}}}};
  j["kl"] = {{"energy", l.kl.energy}, {"max_terms", l.kl.max_terms}, {"max_anchors", l.kl.max_anchors}};
  j["pce"] = {{"min_degree", c.pce.min_degree}, {"max_degree", c.pce.max_degree}};
  return j;
}

} // namespace exset
