// Command-line driver: fit / predict / tune / simulate / rates.
// Exit codes: 0 success, 2 bad input or config, 3 solver failure.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <system_error>
#include <vector>

#include "CLI11.hpp"

#include "addreg/io.hpp"
#include "addreg/model.hpp"
#include "addreg/simlab.hpp"
#include "addreg/solver.hpp"
#include "addreg/tuning.hpp"

namespace {

using addreg::Json;

// Everything a run can configure, with the defaults baked in.  Config-file
// values fill in only where the matching flag was not given on the line.
struct Options {
  std::string data_path;
  std::string model_path;
  std::string scenario_path;
  std::string config_path;
  std::string response = "y";
  bool rescale = false;
  std::vector<std::string> class_tokens;
  double q = 0.0;
  std::optional<double> c1;
  double c1_factor = 1.0;
  double a0 = 2.0;
  double epsilon = 0.1;
  double b0star = 1.0;
  std::string variant = "adaptive";
  double mf = 1.0;
  double mq = 1.0;
  double tol = 1e-8;
  std::size_t max_sweeps = 500;
  bool active_set = true;
  std::vector<std::size_t> n_grid;
  std::size_t reps = 20;
  std::size_t n_mc = 4096;
  bool serial = false;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

// flag pointers, so the config merge can tell "given" from "defaulted"
struct OptionRefs {
  std::map<std::string, CLI::Option*> by_key;

  bool given(const std::string& key) const {
    const auto it = by_key.find(key);
    return it != by_key.end() && it->second != nullptr && it->second->count() > 0;
  }
};

void add_data_options(CLI::App* cmd, Options& opt, OptionRefs& refs) {
  refs.by_key["data"] =
      cmd->add_option("--data", opt.data_path, "input table (delimited, header row)");
  refs.by_key["response"] = cmd->add_option(
      "--response", opt.response, "response column, by name or 1-based index");
  refs.by_key["rescale"] = cmd->add_flag(
      "--rescale", opt.rescale,
      "min-max rescale every covariate column to [0, 1]; the transform is "
      "stored with the model and reapplied at prediction time");
}

void add_tuning_options(CLI::App* cmd, Options& opt, OptionRefs& refs) {
  refs.by_key["classes"] =
      cmd->add_option("--classes", opt.class_tokens,
                      "smoothness classes per covariate (bv1, bv2, sob2, ...); "
                      "one token applies to every covariate")
          ->delimiter(',');
  refs.by_key["q"] = cmd->add_option("--q", opt.q, "sparsity exponent in [0, 1]");
  refs.by_key["c1"] = cmd->add_option(
      "--c1", opt.c1, "penalty scale; omitted means the noise-scale plug-in");
  refs.by_key["c1_factor"] = cmd->add_option(
      "--c1-factor", opt.c1_factor, "multiplier on the plug-in penalty scale");
  refs.by_key["a0"] = cmd->add_option("--a0", opt.a0, "penalty inflation factor, >= 1");
  refs.by_key["epsilon"] =
      cmd->add_option("--epsilon", opt.epsilon, "confidence level in (0, 1)");
  refs.by_key["b0star"] = cmd->add_option("--b0star", opt.b0star, "size budget, > 0");
  refs.by_key["variant"] =
      cmd->add_option("--variant", opt.variant, "tuning variant")
          ->check(CLI::IsMember({"adaptive", "dependent"}));
  refs.by_key["mf"] =
      cmd->add_option("--mf", opt.mf, "smoothness budget (dependent variant)");
  refs.by_key["mq"] =
      cmd->add_option("--mq", opt.mq, "size budget (dependent variant)");
}

void add_fit_options(CLI::App* cmd, Options& opt, OptionRefs& refs) {
  refs.by_key["tol"] =
      cmd->add_option("--tol", opt.tol, "relative objective change declaring convergence");
  refs.by_key["max_sweeps"] =
      cmd->add_option("--max-sweeps", opt.max_sweeps, "sweep budget");
  refs.by_key["active_set"] = cmd->add_flag(
      "--active-set,!--no-active-set", opt.active_set, "skip long-null components");
}

void add_common_options(CLI::App* cmd, Options& opt, OptionRefs& refs) {
  refs.by_key["seed"] = cmd->add_option("--seed", opt.seed, "random seed");
  refs.by_key["out"] = cmd->add_option("--out", opt.out_dir, "output directory");
  cmd->add_option("--config", opt.config_path,
                  "JSON document supplying any of this command's keys; "
                  "explicit flags win");
}

// apply one config value unless the flag was given on the command line
template <class T>
void merge_key(const Json& cfg, const OptionRefs& refs, const std::string& key, T& slot) {
  if (cfg.contains(key) && !refs.given(key)) slot = cfg.at(key).get<T>();
}

void merge_config(const Json& cfg, const OptionRefs& refs, Options& opt,
                  std::initializer_list<const char*> allowed) {
  addreg::require_keys(cfg, allowed, "config");
  merge_key(cfg, refs, "data", opt.data_path);
  merge_key(cfg, refs, "model", opt.model_path);
  merge_key(cfg, refs, "scenario", opt.scenario_path);
  merge_key(cfg, refs, "response", opt.response);
  merge_key(cfg, refs, "rescale", opt.rescale);
  merge_key(cfg, refs, "classes", opt.class_tokens);
  merge_key(cfg, refs, "q", opt.q);
  if (cfg.contains("c1") && !refs.given("c1")) opt.c1 = cfg.at("c1").get<double>();
  merge_key(cfg, refs, "c1_factor", opt.c1_factor);
  merge_key(cfg, refs, "a0", opt.a0);
  merge_key(cfg, refs, "epsilon", opt.epsilon);
  merge_key(cfg, refs, "b0star", opt.b0star);
  merge_key(cfg, refs, "variant", opt.variant);
  merge_key(cfg, refs, "mf", opt.mf);
  merge_key(cfg, refs, "mq", opt.mq);
  merge_key(cfg, refs, "tol", opt.tol);
  merge_key(cfg, refs, "max_sweeps", opt.max_sweeps);
  merge_key(cfg, refs, "active_set", opt.active_set);
  merge_key(cfg, refs, "n_grid", opt.n_grid);
  merge_key(cfg, refs, "reps", opt.reps);
  merge_key(cfg, refs, "n_mc", opt.n_mc);
  merge_key(cfg, refs, "serial", opt.serial);
  if (cfg.contains("seed") && !refs.given("seed")) {
    opt.seed = cfg.at("seed").get<std::uint64_t>();
  }
  merge_key(cfg, refs, "out", opt.out_dir);
}

std::size_t find_response_column(const addreg::Table& table, const std::string& token) {
  int idx = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), idx);
  if (ec == std::errc() && ptr == token.data() + token.size()) {
    if (idx < 1 || static_cast<std::size_t>(idx) > table.column_names.size()) {
      throw std::invalid_argument("response index " + token + " out of range (1.." +
                                  std::to_string(table.column_names.size()) + ")");
    }
    return static_cast<std::size_t>(idx - 1);
  }
  for (std::size_t c = 0; c < table.column_names.size(); ++c) {
    if (table.column_names[c] == token) return c;
  }
  throw std::invalid_argument("response column '" + token + "' not found");
}

struct LoadedData {
  addreg::Dataset data;
  // per-covariate (lo, hi) of the training min-max transform; empty when off
  std::vector<std::pair<double, double>> rescale;
};

LoadedData load_dataset(const Options& opt) {
  if (opt.data_path.empty()) throw std::invalid_argument("--data is required");
  const addreg::Table table = addreg::read_table(opt.data_path);
  const std::size_t yc = find_response_column(table, opt.response);
  LoadedData out;
  out.data.y = table.columns[yc];
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c == yc) continue;
    out.data.x.push_back(table.columns[c]);
    out.data.column_names.push_back(table.column_names[c]);
  }
  if (out.data.x.empty()) {
    throw std::invalid_argument("'" + opt.data_path + "' has no covariate columns");
  }
  if (opt.rescale) {
    for (auto& col : out.data.x) {
      const auto [lo_it, hi_it] = std::minmax_element(col.begin(), col.end());
      const double lo = *lo_it;
      const double span = *hi_it - lo;
      // a constant column has no range to stretch; park it at zero
      for (double& v : col) v = span > 0 ? (v - lo) / span : 0.0;
      out.rescale.emplace_back(lo, *hi_it);
    }
  }
  out.data.validate();
  return out;
}

std::vector<addreg::ComponentClass> resolve_classes(const Options& opt, std::size_t p) {
  if (opt.class_tokens.empty()) {
    throw std::invalid_argument("--classes is required");
  }
  std::vector<addreg::ComponentClass> classes;
  if (opt.class_tokens.size() == 1) {
    classes.assign(p, addreg::parse_class_spec(opt.class_tokens.front()));
  } else if (opt.class_tokens.size() == p) {
    for (const auto& tok : opt.class_tokens) {
      classes.push_back(addreg::parse_class_spec(tok));
    }
  } else {
    throw std::invalid_argument("got " + std::to_string(opt.class_tokens.size()) +
                                " class tokens for " + std::to_string(p) +
                                " covariates");
  }
  return classes;
}

double resolve_c1(const Options& opt, const std::vector<double>& y) {
  if (opt.c1) return *opt.c1;
  return addreg::noise_scale_mad(y) * opt.c1_factor;
}

addreg::TuningVariant resolve_variant(const Options& opt) {
  if (opt.variant == "dependent") {
    return addreg::TuningVariant::dependent(opt.mf, opt.mq);
  }
  return addreg::TuningVariant::adaptive();
}

Json tuning_manifest(const Options& opt, const std::vector<std::string>& class_tokens,
                     double resolved_c1) {
  Json m;
  m["classes"] = class_tokens;
  m["q"] = opt.q;
  m["c1"] = resolved_c1;
  m["c1_factor"] = opt.c1_factor;
  m["a0"] = opt.a0;
  m["epsilon"] = opt.epsilon;
  m["b0star"] = opt.b0star;
  m["variant"] = opt.variant;
  m["mf"] = opt.mf;
  m["mq"] = opt.mq;
  return m;
}

std::vector<std::string> tokens_of(const std::vector<addreg::ComponentClass>& classes) {
  std::vector<std::string> out;
  out.reserve(classes.size());
  for (const auto& cls : classes) out.push_back(addreg::class_spec(cls));
  return out;
}

// artifacts are staged in memory and written together, so a failed run
// leaves nothing behind
struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;

  void add(const std::string& name, const std::string& content) {
    files.emplace_back(name, content);
  }
  void write(const std::string& out_dir) const {
    std::filesystem::create_directories(out_dir);
    for (const auto& [name, content] : files) {
      addreg::write_text_file((std::filesystem::path(out_dir) / name).string(), content);
    }
  }
};

Json finite_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

int run_fit(const Options& opt) {
  const LoadedData loaded = load_dataset(opt);
  const addreg::Dataset& data = loaded.data;
  const std::vector<addreg::ComponentClass> classes = resolve_classes(opt, data.p());
  const double c1 = resolve_c1(opt, data.y);
  const addreg::PenaltyPlan plan =
      addreg::build_plan(data, classes, opt.q, c1, opt.epsilon, opt.a0,
                         resolve_variant(opt), opt.b0star);

  addreg::FitOptions fopt;
  fopt.tol = opt.tol;
  fopt.max_sweeps = opt.max_sweeps;
  fopt.active_set = opt.active_set;
  const addreg::AdditiveFit fit = addreg::fit_additive(data, plan, fopt);
  const std::vector<double> gaps = addreg::kkt_residuals(data, plan, fit);

  Json metrics;
  metrics["objective_trace"] = fit.objective_trace;
  metrics["sweeps"] = fit.sweeps;
  metrics["converged"] = fit.converged;
  metrics["kkt_gaps"] = gaps;
  Json active = Json::array();
  Json nulls = Json::array();
  for (std::size_t j = 0; j < fit.components.size(); ++j) {
    (fit.components[j] ? active : nulls).push_back(data.column_names[j]);
  }
  metrics["active"] = std::move(active);
  metrics["null"] = std::move(nulls);

  Json manifest;
  manifest["command"] = "fit";
  manifest["data"] = opt.data_path;
  manifest["response"] = opt.response;
  manifest["rescale"] = opt.rescale;
  manifest["tuning"] = tuning_manifest(opt, tokens_of(classes), c1);
  Json fj;
  fj["tol"] = opt.tol;
  fj["max_sweeps"] = opt.max_sweeps;
  fj["active_set"] = opt.active_set;
  manifest["fit"] = std::move(fj);
  manifest["out"] = opt.out_dir;

  Json model_doc = addreg::model_to_json(fit);
  if (!loaded.rescale.empty()) {
    Json rs = Json::array();
    for (const auto& [lo, hi] : loaded.rescale) {
      Json one;
      one["lo"] = lo;
      one["hi"] = hi;
      rs.push_back(std::move(one));
    }
    model_doc["rescale"] = std::move(rs);
  }

  Artifacts art;
  art.add("model.json", addreg::dump_json(model_doc));
  art.add("plan.json", addreg::dump_json(addreg::plan_to_json(plan)));
  art.add("metrics.json", addreg::dump_json(metrics));
  art.add("manifest.json", addreg::dump_json(manifest));
  art.write(opt.out_dir);
  return 0;
}

int run_predict(const Options& opt) {
  if (opt.model_path.empty()) throw std::invalid_argument("--model is required");
  const Json model_doc = addreg::parse_json_file(opt.model_path);
  const addreg::AdditiveFit fit = addreg::model_from_json(model_doc);

  if (opt.data_path.empty()) throw std::invalid_argument("--data is required");
  const addreg::Table table = addreg::read_table(opt.data_path);
  std::vector<std::vector<double>> columns;
  std::optional<std::size_t> drop;
  for (std::size_t c = 0; c < table.column_names.size(); ++c) {
    if (!drop && table.column_names[c] == opt.response) drop = c;
  }
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (drop && c == *drop) continue;
    columns.push_back(table.columns[c]);
  }
  if (columns.size() != fit.components.size()) {
    throw std::invalid_argument("model expects " +
                                std::to_string(fit.components.size()) +
                                " covariate columns, table supplies " +
                                std::to_string(columns.size()));
  }

  // a model fitted with --rescale carries its training transform; replay it
  if (model_doc.contains("rescale") && !model_doc.at("rescale").is_null()) {
    const Json& rs = model_doc.at("rescale");
    if (!rs.is_array() || rs.size() != columns.size()) {
      throw std::invalid_argument("model rescale block does not match the covariate count");
    }
    for (std::size_t j = 0; j < columns.size(); ++j) {
      addreg::require_keys(rs.at(j), {"lo", "hi"}, "model rescale entry");
      const double lo = rs.at(j).at("lo").get<double>();
      const double span = rs.at(j).at("hi").get<double>() - lo;
      for (double& v : columns[j]) v = span > 0 ? (v - lo) / span : 0.0;
    }
  }

  const std::vector<double> pred = addreg::predict(fit, columns);

  addreg::Table out;
  out.column_names = {"prediction"};
  out.columns = {pred};

  Json manifest;
  manifest["command"] = "predict";
  manifest["model"] = opt.model_path;
  manifest["data"] = opt.data_path;
  manifest["response"] = opt.response;
  manifest["out"] = opt.out_dir;

  std::filesystem::create_directories(opt.out_dir);
  addreg::write_table((std::filesystem::path(opt.out_dir) / "predictions.csv").string(),
                      out);
  addreg::write_json((std::filesystem::path(opt.out_dir) / "manifest.json").string(),
                     manifest);
  return 0;
}

int run_tune(const Options& opt) {
  const LoadedData loaded = load_dataset(opt);
  const addreg::Dataset& data = loaded.data;
  const std::vector<addreg::ComponentClass> classes = resolve_classes(opt, data.p());
  const double c1 = resolve_c1(opt, data.y);
  const addreg::PenaltyPlan plan =
      addreg::build_plan(data, classes, opt.q, c1, opt.epsilon, opt.a0,
                         resolve_variant(opt), opt.b0star);

  Json manifest;
  manifest["command"] = "tune";
  manifest["data"] = opt.data_path;
  manifest["response"] = opt.response;
  manifest["rescale"] = opt.rescale;
  manifest["tuning"] = tuning_manifest(opt, tokens_of(classes), c1);
  manifest["out"] = opt.out_dir;

  Artifacts art;
  art.add("plan.json", addreg::dump_json(addreg::plan_to_json(plan)));
  art.add("manifest.json", addreg::dump_json(manifest));
  art.write(opt.out_dir);
  return 0;
}

int run_simulate(const Options& opt) {
  if (opt.scenario_path.empty()) throw std::invalid_argument("--scenario is required");
  addreg::Scenario scenario =
      addreg::scenario_from_json(addreg::parse_json_file(opt.scenario_path));
  if (opt.seed) scenario.seed = *opt.seed;

  const addreg::GeneratedData gen = addreg::generate(scenario);

  addreg::Table out;
  out.column_names = gen.data.column_names;
  out.columns = gen.data.x;
  out.column_names.push_back("y");
  out.columns.push_back(gen.data.y);

  Json truth;
  truth["model"] = addreg::model_to_json(gen.truth);
  truth["mf"] = gen.mf;
  truth["mq"] = gen.mq;
  truth["component_norms"] = gen.component_norms;

  Json manifest;
  manifest["command"] = "simulate";
  manifest["scenario"] = addreg::scenario_to_json(scenario);
  manifest["out"] = opt.out_dir;

  Artifacts art;
  std::string table_text;
  {
    // write_table goes straight to disk; reuse its formatting by staging
    // through a temporary string instead
    std::string text;
    for (std::size_t c = 0; c < out.column_names.size(); ++c) {
      if (c) text += ",";
      text += out.column_names[c];
    }
    text += "\n";
    for (std::size_t r = 0; r < out.rows(); ++r) {
      for (std::size_t c = 0; c < out.columns.size(); ++c) {
        if (c) text += ",";
        text += addreg::format_double(out.columns[c][r]);
      }
      text += "\n";
    }
    table_text = std::move(text);
  }
  art.add("data.csv", table_text);
  art.add("truth.json", addreg::dump_json(truth));
  art.add("manifest.json", addreg::dump_json(manifest));
  art.write(opt.out_dir);
  return 0;
}

int run_rates(const Options& opt) {
  if (opt.scenario_path.empty()) throw std::invalid_argument("--scenario is required");
  addreg::RateStudyConfig config;
  config.scenario = addreg::scenario_from_json(addreg::parse_json_file(opt.scenario_path));
  if (opt.seed) config.scenario.seed = *opt.seed;
  if (opt.n_grid.size() < 3) {
    throw std::invalid_argument("--n-grid needs at least three sizes; a slope cannot "
                                "be fitted from fewer");
  }
  config.n_grid = opt.n_grid;
  config.reps = opt.reps;
  config.classes = resolve_classes(opt, config.scenario.p);
  config.q = opt.q;
  config.c1 = opt.c1 ? *opt.c1 : 1.0;
  config.a0 = opt.a0;
  config.epsilon = opt.epsilon;
  config.b0star = opt.b0star;
  config.variant = resolve_variant(opt);
  config.fit_options.tol = opt.tol;
  config.fit_options.max_sweeps = opt.max_sweeps;
  config.fit_options.active_set = opt.active_set;
  config.n_mc = opt.n_mc;
  config.parallel = !opt.serial;

  const addreg::RateStudyResult res = addreg::rate_study(config);

  std::string cells;
  cells += "n,rep,error_n,error_q,status\n";
  for (std::size_t gi = 0; gi < res.grid.size(); ++gi) {
    for (std::size_t rep = 0; rep < res.reps; ++rep) {
      cells += std::to_string(res.grid[gi]);
      cells += "," + std::to_string(rep + 1);
      const bool ok = res.failures[gi][rep].empty();
      cells += ",";
      cells += ok ? addreg::format_double(res.errors_n[gi][rep]) : "nan";
      cells += ",";
      cells += ok ? addreg::format_double(res.errors_q[gi][rep]) : "nan";
      cells += ",";
      if (ok) {
        cells += "ok";
      } else {
        std::string msg = res.failures[gi][rep];
        for (char& ch : msg) {
          if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
        }
        cells += "failed: " + msg;
      }
      cells += "\n";
    }
  }

  Json summary;
  summary["n_grid"] = res.grid;
  summary["reps"] = res.reps;
  Json mean_n = Json::array();
  Json mean_q = Json::array();
  Json log_n = Json::array();
  Json log_en = Json::array();
  Json log_eq = Json::array();
  for (std::size_t gi = 0; gi < res.grid.size(); ++gi) {
    double accn = 0.0;
    double accq = 0.0;
    std::size_t good = 0;
    for (std::size_t rep = 0; rep < res.reps; ++rep) {
      if (res.failures[gi][rep].empty() && std::isfinite(res.errors_n[gi][rep])) {
        accn += res.errors_n[gi][rep];
        accq += res.errors_q[gi][rep];
        ++good;
      }
    }
    const double en = good ? accn / static_cast<double>(good)
                           : std::numeric_limits<double>::quiet_NaN();
    const double eq = good ? accq / static_cast<double>(good)
                           : std::numeric_limits<double>::quiet_NaN();
    mean_n.push_back(finite_or_null(en));
    mean_q.push_back(finite_or_null(eq));
    log_n.push_back(std::log(static_cast<double>(res.grid[gi])));
    log_en.push_back(finite_or_null(en > 0 ? std::log(en)
                                           : std::numeric_limits<double>::quiet_NaN()));
    log_eq.push_back(finite_or_null(eq > 0 ? std::log(eq)
                                           : std::numeric_limits<double>::quiet_NaN()));
  }
  summary["mean_error_n"] = std::move(mean_n);
  summary["mean_error_q"] = std::move(mean_q);
  summary["log_n"] = std::move(log_n);
  summary["log_mean_error_n"] = std::move(log_en);
  summary["log_mean_error_q"] = std::move(log_eq);
  Json sn;
  sn["slope"] = finite_or_null(res.slope_n.slope);
  sn["stderr"] = finite_or_null(res.slope_n.stderr_value);
  Json sq;
  sq["slope"] = finite_or_null(res.slope_q.slope);
  sq["stderr"] = finite_or_null(res.slope_q.stderr_value);
  summary["slope_n"] = std::move(sn);
  summary["slope_q"] = std::move(sq);
  Json theory = Json::array();
  std::vector<double> betas;
  for (const auto& cls : config.classes) {
    const double b = addreg::class_exponents(cls).beta;
    if (std::find(betas.begin(), betas.end(), b) == betas.end()) betas.push_back(b);
  }
  for (double b : betas) {
    Json t;
    t["beta0"] = b;
    t["exponent"] = addreg::error_rate_exponent(opt.q, b);
    theory.push_back(std::move(t));
  }
  summary["theoretical_exponents"] = std::move(theory);
  summary["degenerate"] = res.degenerate;

  Json manifest;
  manifest["command"] = "rates";
  manifest["scenario"] = addreg::scenario_to_json(config.scenario);
  manifest["n_grid"] = config.n_grid;
  manifest["reps"] = config.reps;
  manifest["n_mc"] = config.n_mc;
  manifest["serial"] = opt.serial;
  manifest["tuning"] = tuning_manifest(opt, tokens_of(config.classes), config.c1);
  Json fj;
  fj["tol"] = opt.tol;
  fj["max_sweeps"] = opt.max_sweeps;
  fj["active_set"] = opt.active_set;
  manifest["fit"] = std::move(fj);
  manifest["out"] = opt.out_dir;

  Artifacts art;
  art.add("cells.csv", cells);
  art.add("summary.json", addreg::dump_json(summary));
  art.add("manifest.json", addreg::dump_json(manifest));
  art.write(opt.out_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"doubly penalized additive regression"};
  app.require_subcommand(1);

  Options opt;
  // one flag registry per subcommand; only the parsed one is consulted
  OptionRefs refs_fit;
  OptionRefs refs_predict;
  OptionRefs refs_tune;
  OptionRefs refs_simulate;
  OptionRefs refs_rates;

  CLI::App* fit = app.add_subcommand("fit", "fit an additive model to a table");
  add_data_options(fit, opt, refs_fit);
  add_tuning_options(fit, opt, refs_fit);
  add_fit_options(fit, opt, refs_fit);
  add_common_options(fit, opt, refs_fit);

  CLI::App* predict = app.add_subcommand("predict", "evaluate a saved model on a table");
  refs_predict.by_key["model"] =
      predict->add_option("--model", opt.model_path, "model document from a fit run");
  refs_predict.by_key["data"] =
      predict->add_option("--data", opt.data_path, "input table");
  refs_predict.by_key["response"] = predict->add_option(
      "--response", opt.response, "response column to drop if present");
  add_common_options(predict, opt, refs_predict);

  CLI::App* tune = app.add_subcommand("tune", "derive penalty levels for a table");
  add_data_options(tune, opt, refs_tune);
  add_tuning_options(tune, opt, refs_tune);
  add_common_options(tune, opt, refs_tune);

  CLI::App* simulate = app.add_subcommand("simulate", "draw one synthetic dataset");
  refs_simulate.by_key["scenario"] =
      simulate->add_option("--scenario", opt.scenario_path, "scenario document");
  add_common_options(simulate, opt, refs_simulate);

  CLI::App* rates = app.add_subcommand("rates", "run a convergence-rate study");
  refs_rates.by_key["scenario"] =
      rates->add_option("--scenario", opt.scenario_path, "scenario template document");
  refs_rates.by_key["n_grid"] =
      rates->add_option("--n-grid", opt.n_grid, "sample sizes, ascending")->delimiter(',');
  refs_rates.by_key["reps"] = rates->add_option("--reps", opt.reps, "replicates per size");
  refs_rates.by_key["n_mc"] =
      rates->add_option("--n-mc", opt.n_mc, "Monte Carlo draws for the population error");
  refs_rates.by_key["serial"] =
      rates->add_flag("--serial", opt.serial, "disable the parallel cell fan-out");
  add_tuning_options(rates, opt, refs_rates);
  add_fit_options(rates, opt, refs_rates);
  add_common_options(rates, opt, refs_rates);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!opt.config_path.empty()) {
      const Json cfg = addreg::parse_json_file(opt.config_path);
      if (fit->parsed()) {
        merge_config(cfg, refs_fit, opt,
                     {"data", "response", "rescale", "classes", "q", "c1", "c1_factor",
                      "a0", "epsilon", "b0star", "variant", "mf", "mq", "tol",
                      "max_sweeps", "active_set", "seed", "out"});
      } else if (predict->parsed()) {
        merge_config(cfg, refs_predict, opt, {"model", "data", "response", "out"});
      } else if (tune->parsed()) {
        merge_config(cfg, refs_tune, opt,
                     {"data", "response", "rescale", "classes", "q", "c1", "c1_factor",
                      "a0", "epsilon", "b0star", "variant", "mf", "mq", "seed", "out"});
      } else if (simulate->parsed()) {
        merge_config(cfg, refs_simulate, opt, {"scenario", "seed", "out"});
      } else if (rates->parsed()) {
        merge_config(cfg, refs_rates, opt,
                     {"scenario", "n_grid", "reps", "n_mc", "serial", "classes", "q",
                      "c1", "a0", "epsilon", "b0star", "variant", "mf", "mq", "tol",
                      "max_sweeps", "active_set", "seed", "out"});
      }
    }

    if (fit->parsed()) return run_fit(opt);
    if (predict->parsed()) return run_predict(opt);
    if (tune->parsed()) return run_tune(opt);
    if (simulate->parsed()) return run_simulate(opt);
    if (rates->parsed()) return run_rates(opt);
    std::cerr << "no command given\n";
    return 2;
  } catch (const addreg::solver_error& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
