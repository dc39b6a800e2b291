#include "ngvi/cli.hpp"

#include "ngvi/data.hpp"
#include "ngvi/rng.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#ifndef NGVI_CODE_VERSION
#define NGVI_CODE_VERSION "unknown"
#endif

namespace ngvi::cli {

namespace fs = std::filesystem;

namespace {

enum class Type { kNumber, kOptNumber, kCount, kString, kBool, kNumberOrList, kIntPair, kOptMatrix, kOptList, kOptStringList };

struct KeySpec {
  const char* key;
  json value;
  Type type;
};

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = {
      {"model.kind", "logistic", Type::kString},
      {"model.noise_variance", 1.0, Type::kNumber},
      // synth | csv | idx | inline
      {"data.source", "synth", Type::kString},
      {"data.synth_kind", "logistic", Type::kString},
      {"data.n", 200, Type::kCount},
      {"data.d", 5, Type::kCount},
      {"data.seed", 0, Type::kCount},
      {"data.path", "", Type::kString},
      {"data.images", "", Type::kString},
      {"data.labels", "", Type::kString},
      {"data.classes", json::array({6, 8}), Type::kIntPair},
      {"data.x", nullptr, Type::kOptMatrix},
      {"data.y", nullptr, Type::kOptList},
      {"algorithm", "proj_sngd", Type::kString},
      {"schedule.kind", "constant", Type::kString},
      {"schedule.gamma", 0.1, Type::kNumber},
      {"schedule.L", nullptr, Type::kOptNumber},
      {"schedule.V2", 0.0, Type::kNumber},
      {"schedule.lambda0", nullptr, Type::kOptNumber},
      {"schedule.mu_B", nullptr, Type::kOptNumber},
      {"T", 100, Type::kCount},
      {"seed", 0, Type::kCount},
      {"box.U", nullptr, Type::kOptNumber},
      {"box.D", nullptr, Type::kOptNumber},
      {"proj_sgd.M", nullptr, Type::kOptNumber},
      {"gradient.kind", "exact", Type::kString},
      {"gradient.batch_size", 1, Type::kCount},
      {"gradient.mc_samples", 1, Type::kCount},
      {"gradient.noise_V2", 0.0, Type::kNumber},
      {"init.mu", 0.0, Type::kNumberOrList},
      {"init.sigma2", 1.0, Type::kNumberOrList},
      {"log_every", 1, Type::kCount},
      {"bfbe.rho", nullptr, Type::kOptNumber},
      {"stop.grad_tol", nullptr, Type::kOptNumber},
      {"ell_star.compute", false, Type::kBool},
      {"ell_star.gamma", nullptr, Type::kOptNumber},
      {"ell_star.max_iter", 100000, Type::kCount},
      {"ell_star.tol", 1e-12, Type::kNumber},
      {"grid.points_per_axis", 15, Type::kCount},
      {"grid.max_tensor_points", 200000, Type::kCount},
      {"grid.random_samples", 10000, Type::kCount},
      {"grid.seed", 0, Type::kCount},
      {"sweep.algorithms", nullptr, Type::kOptStringList},
      {"sweep.seeds", 5, Type::kCount},
      {"parallel.workers", 1, Type::kCount},
      {"trace.timing", false, Type::kBool},
      // empty: $NGVI_OUTPUT_DIR, else ./ngvi_out
      {"output.dir", "", Type::kString},
  };
  return specs;
}

bool type_ok(Type type, const json& v) {
  auto is_list_of_numbers = [](const json& a) {
    return a.is_array() && !a.empty() && std::all_of(a.begin(), a.end(), [](const json& e) { return e.is_number(); });
  };
  switch (type) {
    case Type::kNumber:
      return v.is_number();
    case Type::kOptNumber:
      return v.is_null() || v.is_number();
    case Type::kCount:
      return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case Type::kString:
      return v.is_string();
    case Type::kBool:
      return v.is_boolean();
    case Type::kNumberOrList:
      return v.is_number() || is_list_of_numbers(v);
    case Type::kIntPair:
      return v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer();
    case Type::kOptMatrix:
      return v.is_null() ||
             (v.is_array() && !v.empty() && std::all_of(v.begin(), v.end(), is_list_of_numbers));
    case Type::kOptList:
      return v.is_null() || is_list_of_numbers(v);
    case Type::kOptStringList:
      return v.is_null() || (v.is_array() && !v.empty() &&
                             std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); }));
  }
  return false;
}

const char* type_name(Type type) {
  switch (type) {
    case Type::kNumber: return "a number";
    case Type::kOptNumber: return "a number or null";
    case Type::kCount: return "a nonnegative integer";
    case Type::kString: return "a string";
    case Type::kBool: return "true or false";
    case Type::kNumberOrList: return "a number or a list of numbers";
    case Type::kIntPair: return "a pair of integers";
    case Type::kOptMatrix: return "a list of numeric rows or null";
    case Type::kOptList: return "a list of numbers or null";
    case Type::kOptStringList: return "a list of strings or null";
  }
  return "?";
}

std::optional<double> opt_number(const json& cfg, const char* key) {
  const json& v = cfg.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::size_t count(const json& cfg, const char* key) { return cfg.at(key).get<std::size_t>(); }

double positive(const json& cfg, const char* key) {
  const double v = cfg.at(key).get<double>();
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(key) + " must be positive");
  return v;
}

Vec per_coordinate(const json& v, std::size_t d, const char* key) {
  if (v.is_number()) return Vec::Constant(static_cast<Eigen::Index>(d), v.get<double>());
  if (v.size() != d) {
    throw ConfigError(std::string(key) + " has " + std::to_string(v.size()) + " entries, the data has d = " +
                      std::to_string(d));
  }
  Vec out(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  return out;
}

Dataset load_data(const json& cfg) {
  const std::string source = cfg.at("data.source");
  try {
    if (source == "synth") {
      return synth(cfg.at("data.synth_kind").get<std::string>(), count(cfg, "data.n"), count(cfg, "data.d"),
                   cfg.at("data.seed").get<std::uint64_t>());
    }
    if (source == "csv") return load_csv(cfg.at("data.path").get<std::string>());
    if (source == "idx") {
      const RawImageSet raw =
          load_idx(cfg.at("data.images").get<std::string>(), cfg.at("data.labels").get<std::string>());
      return filter_binary(raw, cfg.at("data.classes")[0].get<int>(), cfg.at("data.classes")[1].get<int>());
    }
    if (source == "inline") {
      const json& xs = cfg.at("data.x");
      const json& ys = cfg.at("data.y");
      if (xs.is_null() || ys.is_null()) throw ConfigError("inline data needs data.x and data.y");
      if (xs.size() != ys.size()) throw ConfigError("data.x and data.y differ in length");
      const std::size_t d = xs[0].size();
      Dataset ds;
      ds.x.resize(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(d));
      ds.y.resize(static_cast<Eigen::Index>(xs.size()));
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].size() != d) throw ConfigError("data.x rows differ in length");
        for (std::size_t j = 0; j < d; ++j) {
          ds.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xs[i][j].get<double>();
        }
        ds.y(static_cast<Eigen::Index>(i)) = ys[i].get<double>();
      }
      return ds;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("data: " + std::string(e.what()));
  }
  throw ConfigError("data.source must be one of synth, csv, idx, inline");
}

StepSchedule make_schedule(const json& cfg, const std::optional<DomainBox>& box) {
  ScheduleKind kind;
  try {
    kind = parse_schedule_kind(cfg.at("schedule.kind").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::size_t T = count(cfg, "T");
  auto required = [&](const char* key) {
    const auto v = opt_number(cfg, key);
    if (!v) throw ConfigError(std::string(key) + " is required by schedule.kind = " + std::string(to_string(kind)));
    return *v;
  };
  StepSchedule s;
  switch (kind) {
    case ScheduleKind::kConstant:
      s = StepSchedule::constant(cfg.at("schedule.gamma").get<double>());
      break;
    case ScheduleKind::kInvSqrt:
      s = StepSchedule::inv_sqrt(cfg.at("schedule.gamma").get<double>());
      break;
    case ScheduleKind::kTheoremConstant:
      s = StepSchedule::theorem_constant(required("schedule.L"), cfg.at("schedule.V2").get<double>(),
                                         required("schedule.lambda0"), T);
      break;
    case ScheduleKind::kFastConv: {
      auto mu_B = opt_number(cfg, "schedule.mu_B");
      if (!mu_B) {
        if (!box) throw ConfigError("schedule.mu_B is required when no box is configured");
        mu_B = moduli(*box).mu_B;
      }
      s = StepSchedule::fast_conv(required("schedule.L"), *mu_B, T);
      break;
    }
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

json schedule_json(const StepSchedule& s) {
  return json{{"kind", std::string(to_string(s.kind))}, {"gamma", s.gamma}, {"L", s.L},     {"V2", s.V2},
              {"lambda0", s.lambda0},                   {"mu_B", s.mu_B},   {"T", s.T}};
}

json params_json(const ExpectationParams& w) {
  const StandardParams p = to_standard(w);
  return json{{"mu", std::vector<double>(p.mu.begin(), p.mu.end())},
              {"sigma2", std::vector<double>(p.sigma2.begin(), p.sigma2.end())}};
}

GridSpec grid_spec(const json& cfg) {
  GridSpec g;
  g.points_per_axis = count(cfg, "grid.points_per_axis");
  g.max_tensor_points = count(cfg, "grid.max_tensor_points");
  g.random_samples = count(cfg, "grid.random_samples");
  g.seed = cfg.at("grid.seed").get<std::uint64_t>();
  if (g.points_per_axis == 0 || g.random_samples == 0) throw ConfigError("grid sizes must be positive");
  return g;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

json ell_star_json(const OptimumEstimate& e, double gamma) {
  return json{{"value", e.ell_star},
              {"gamma", gamma},
              {"iterations", e.iterations},
              {"step_norm", e.step_norm},
              {"converged", e.converged},
              {"point", params_json(e.point)}};
}

double ell_star_gamma(const ExperimentSetup& setup) {
  if (const auto g = opt_number(setup.config, "ell_star.gamma")) {
    if (!(*g > 0.0)) throw ConfigError("ell_star.gamma must be positive");
    return *g;
  }
  const SmoothnessCertificate cert =
      certify_relative_smoothness(setup.model, *setup.options.box, grid_spec(setup.config));
  return 1.0 / (2.0 * cert.beta);
}

/// Runs fn(0..count-1) on `workers` threads.  The first exception is rethrown.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

OptimizerTrace checked_run(const ExperimentSetup& setup, const RunOptions& options) {
  try {
    return run(setup.model, setup.w0, options);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

std::string code_version() { return NGVI_CODE_VERSION; }

const json& config_defaults() {
  static const json defaults = [] {
    json d = json::object();
    for (const auto& s : key_specs()) d[s.key] = s.value;
    return d;
  }();
  return defaults;
}

json resolve_config(const json& user) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  json out = config_defaults();
  for (const auto& [key, value] : user.items()) {
    const auto& specs = key_specs();
    const auto it = std::find_if(specs.begin(), specs.end(), [&](const KeySpec& s) { return key == s.key; });
    if (it == specs.end()) throw ConfigError("unknown config key '" + key + "'");
    if (!type_ok(it->type, value)) throw ConfigError("config key '" + key + "' must be " + type_name(it->type));
    out[key] = value;
  }
  return out;
}

json load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json user;
  try {
    user = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return resolve_config(user);
}

ExperimentSetup make_setup(const json& resolved) {
  ExperimentSetup s;
  s.config = resolved;
  const json& cfg = s.config;

  ModelKind kind;
  try {
    kind = parse_model_kind(cfg.at("model.kind").get<std::string>());
    s.model = LikelihoodModel::make(kind, load_data(cfg), positive(cfg, "model.noise_variance"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::size_t d = s.model.d();

  RunOptions& o = s.options;
  const auto U = opt_number(cfg, "box.U");
  const auto D = opt_number(cfg, "box.D");
  if (U.has_value() != D.has_value()) throw ConfigError("box.U and box.D must be given together");
  if (U) {
    try {
      o.box = DomainBox::make(*U, *D, d);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

  StandardParams init{per_coordinate(cfg.at("init.mu"), d, "init.mu"),
                      per_coordinate(cfg.at("init.sigma2"), d, "init.sigma2")};
  if (!(init.sigma2.array() > 0.0).all()) throw ConfigError("init.sigma2 must be positive");
  s.w0 = to_expectation(init);

  try {
    o.algorithm = parse_algorithm(cfg.at("algorithm").get<std::string>());
    o.gradient.kind = parse_gradient_kind(cfg.at("gradient.kind").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  o.schedule = make_schedule(cfg, o.box);
  o.T = count(cfg, "T");
  o.seed = cfg.at("seed").get<std::uint64_t>();
  o.proj_sgd_M = opt_number(cfg, "proj_sgd.M");
  o.gradient.batch_size = count(cfg, "gradient.batch_size");
  o.gradient.mc_samples = count(cfg, "gradient.mc_samples");
  o.gradient.noise_V2 = cfg.at("gradient.noise_V2").get<double>();
  o.log_every = count(cfg, "log_every");
  if (o.log_every == 0) throw ConfigError("log_every must be >= 1");
  o.bfbe_rho = opt_number(cfg, "bfbe.rho");
  o.grad_tol = opt_number(cfg, "stop.grad_tol");
  if (count(cfg, "sweep.seeds") == 0) throw ConfigError("sweep.seeds must be >= 1");

  std::string dir = cfg.at("output.dir");
  if (dir.empty()) {
    const char* env = std::getenv(kOutputDirEnv);
    dir = env && *env ? env : "ngvi_out";
  }
  s.output_dir = dir;
  s.config["output.dir"] = dir;
  return s;
}

OptimumEstimate compute_ell_star(const ExperimentSetup& setup) {
  if (!setup.options.box) throw ConfigError("computing l* needs box.U and box.D");
  const double gamma = ell_star_gamma(setup);
  return optimal_value(setup.model, *setup.options.box, setup.w0, gamma, count(setup.config, "ell_star.max_iter"),
                       setup.config.at("ell_star.tol").get<double>());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trace_csv(const OptimizerTrace& trace, bool timing) {
  std::string out = "t,gamma,elbo,grad_norm,bfbe,elapsed_s\n";
  for (const auto& r : trace.rows) {
    out += std::to_string(r.t);
    out += ',' + format_double(r.gamma);
    out += ',' + format_double(r.elbo);
    out += ',' + format_double(r.grad_norm);
    out += ',' + (r.bfbe ? format_double(*r.bfbe) : std::string());
    out += ',' + format_double(timing ? r.elapsed_s : 0.0);
    out += '\n';
  }
  return out;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

int cmd_run(const json& resolved) {
  const ExperimentSetup setup = make_setup(resolved);
  fs::create_directories(setup.output_dir);

  json ell_star = nullptr;
  std::optional<double> star_value;
  if (setup.config.at("ell_star.compute").get<bool>()) {
    const double gamma = ell_star_gamma(setup);
    const OptimumEstimate est =
        optimal_value(setup.model, *setup.options.box, setup.w0, gamma, count(setup.config, "ell_star.max_iter"),
                      setup.config.at("ell_star.tol").get<double>());
    ell_star = ell_star_json(est, gamma);
    star_value = est.ell_star;
  }

  const OptimizerTrace trace = checked_run(setup, setup.options);
  write_file(setup.output_dir / "trace.csv", trace_csv(trace, setup.config.at("trace.timing").get<bool>()));

  json result = {{"iterations", trace.iterations},
                 {"diverged", trace.diverged},
                 {"divergence", trace.divergence},
                 {"output_index", trace.output_index}};
  if (!trace.diverged) {
    const double final_elbo = trace.rows.back().elbo;
    result["final_elbo"] = final_elbo;
    result["final_gap"] = star_value ? json(final_elbo - *star_value) : json(nullptr);
    result["final_point"] = params_json(trace.final_point);
    if (trace.output_point) result["output_point"] = params_json(*trace.output_point);
  }
  json meta = {{"command", "run"},
               {"code_version", code_version()},
               {"config", setup.config},
               {"resolved", {{"schedule", schedule_json(setup.options.schedule)},
                             {"n", setup.model.n()},
                             {"d", setup.model.d()},
                             {"pixel_scaling", setup.config.at("data.source") == "idx" ? "byte/255" : "none"}}},
               {"ell_star", ell_star},
               {"result", result}};
  write_file(setup.output_dir / "meta.json", meta.dump(2) + "\n");
  return trace.diverged ? kExitDiverged : kExitOk;
}

std::vector<double> parse_gamma_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b == std::string::npos) throw ConfigError("empty entry in gamma list");
    double v = 0.0;
    const char* first = item.data() + b;
    const char* last = item.data() + e + 1;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last || !(v > 0.0)) {
      throw ConfigError("bad step size '" + item + "' in gamma list");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("gamma list is empty");
  return out;
}

std::vector<SweepRow> cmd_sweep(const json& resolved, const SweepOptions& sweep) {
  const ExperimentSetup setup = make_setup(resolved);
  const json& cfg = setup.config;
  if (sweep.gammas.empty()) throw ConfigError("sweep needs at least one step size");
  const ScheduleKind sk = setup.options.schedule.kind;
  if (sk != ScheduleKind::kConstant && sk != ScheduleKind::kInvSqrt) {
    throw ConfigError("sweep varies gamma_0 and needs schedule.kind constant or inv_sqrt");
  }

  std::vector<Algorithm> algorithms;
  try {
    if (cfg.at("sweep.algorithms").is_null()) {
      algorithms.push_back(setup.options.algorithm);
    } else {
      for (const auto& a : cfg.at("sweep.algorithms")) algorithms.push_back(parse_algorithm(a.get<std::string>()));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::size_t seeds = count(cfg, "sweep.seeds");

  json threshold_meta = {{"relative", sweep.relative}, {"input", sweep.threshold}};
  double threshold = sweep.threshold;
  if (sweep.relative) {
    const double gamma = ell_star_gamma(setup);
    const OptimumEstimate est = optimal_value(setup.model, *setup.options.box, setup.w0, gamma,
                                              count(cfg, "ell_star.max_iter"), cfg.at("ell_star.tol").get<double>());
    const double l0 = elbo(setup.w0, setup.model);
    threshold = est.ell_star + sweep.threshold * (l0 - est.ell_star);
    threshold_meta["ell_star"] = ell_star_json(est, gamma);
    threshold_meta["elbo_w0"] = l0;
  }
  threshold_meta["absolute"] = threshold;

  std::vector<SweepRow> rows;
  for (const Algorithm a : algorithms) {
    for (const double g : sweep.gammas) {
      for (std::size_t k = 0; k < seeds; ++k) {
        rows.push_back({std::string(to_string(a)), g, setup.options.seed + k, -1});
      }
    }
  }
  parallel_for(rows.size(), count(cfg, "parallel.workers"), [&](std::size_t i) {
    SweepRow& row = rows[i];
    RunOptions o = setup.options;
    o.algorithm = parse_algorithm(row.algorithm);
    o.schedule.gamma = row.gamma0;
    o.seed = row.seed;
    o.stop_below = threshold;
    const OptimizerTrace trace = checked_run(setup, o);
    if (trace.diverged) return;
    for (const auto& r : trace.rows) {
      if (r.elbo <= threshold) {
        row.iterations = static_cast<long long>(r.t);
        break;
      }
    }
  });

  fs::create_directories(setup.output_dir);
  std::string csv = "algorithm,gamma0,seed,iterations\n";
  for (const auto& r : rows) {
    csv += r.algorithm + ',' + format_double(r.gamma0) + ',' + std::to_string(r.seed) + ',' +
           std::to_string(r.iterations) + '\n';
  }
  write_file(setup.output_dir / "sweep.csv", csv);
  json meta = {{"command", "sweep"},
               {"code_version", code_version()},
               {"config", cfg},
               {"resolved", {{"schedule", schedule_json(setup.options.schedule)},
                             {"n", setup.model.n()},
                             {"d", setup.model.d()}}},
               {"gammas", sweep.gammas},
               {"threshold", threshold_meta}};
  write_file(setup.output_dir / "sweep_meta.json", meta.dump(2) + "\n");
  return rows;
}

json cmd_certify(const json& resolved) {
  const ExperimentSetup setup = make_setup(resolved);
  if (!setup.options.box) throw ConfigError("certify needs box.U and box.D");
  const DomainBox& box = *setup.options.box;
  const GridSpec grid = grid_spec(setup.config);
  const SmoothnessCertificate cert = certify_relative_smoothness(setup.model, box, grid);
  const Moduli m = moduli(box);

  json sufficient = nullptr;
  try {
    const SufficientConstants sc =
        sufficient_constants(setup.model.kind, setup.model.data, box, setup.model.noise_variance);
    sufficient = {{"L1", sc.L1}, {"L2", sc.L2}, {"beta_loglik", sc.beta}, {"heuristic", sc.heuristic}};
  } catch (const std::invalid_argument&) {
  }
  json iff = nullptr;
  if (cert.iff) iff = {{"points", cert.iff->points}, {"disagreements", cert.iff->disagreements}};

  json out = {{"command", "certify"},
              {"code_version", code_version()},
              {"config", setup.config},
              {"model", std::string(to_string(setup.model.kind))},
              {"n", setup.model.n()},
              {"d", setup.model.d()},
              {"box", {{"U", box.U}, {"D", box.D}}},
              {"alpha", cert.alpha},
              {"beta", cert.beta},
              {"alpha_loglik", cert.alpha_loglik},
              {"beta_loglik", cert.beta_loglik},
              {"min_slack", cert.min_slack},
              {"mu_C", m.mu_C},
              {"mu_H", m.mu_H},
              {"C_S", m.C_S},
              {"C_L", m.C_L},
              {"mu_B", m.mu_B},
              {"grid",
               {{"points_per_axis", grid.points_per_axis},
                {"points", cert.grid.size()},
                {"sampled", cert.sampled},
                {"coarse", cert.coarse},
                {"max_tensor_points", grid.max_tensor_points},
                {"random_samples", grid.random_samples},
                {"seed", grid.seed},
                {"mean_axis", "linear [-U, U]"},
                {"variance_axis", "geometric [1/D, D]"}}},
              {"sufficient", sufficient},
              {"iff", iff}};
  fs::create_directories(setup.output_dir);
  write_file(setup.output_dir / "certificate.json", out.dump(2) + "\n");
  return out;
}

std::vector<double> read_trace_elbo(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string field;
    for (int k = 0; k < 3; ++k) std::getline(ss, field, ',');
    out.push_back(field == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(field));
  }
  return out;
}

namespace {

constexpr std::size_t kReplicateRuns = 10;
constexpr std::size_t kPoissonT = 300;
constexpr double kPoissonEllStarGamma = 0.1;

struct PoissonVariant {
  Algorithm algorithm;
  double sigma2;
  double gamma;
};

std::string variant_name(const PoissonVariant& v) {
  return std::string(to_string(v.algorithm)) + "_sigma2-" + format_double(v.sigma2) + "_gamma-" +
         format_double(v.gamma);
}

/// t,median,q1,q3 over the runs that have a finite objective at t.
std::string quartile_summary(const std::vector<std::vector<double>>& runs) {
  std::size_t len = 0;
  for (const auto& r : runs) len = std::max(len, r.size());
  std::string out = "t,median,q1,q3\n";
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<double> v;
    for (const auto& r : runs) {
      if (t < r.size() && std::isfinite(r[t])) v.push_back(r[t]);
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out += std::to_string(t) + ',' + format_double(v.empty() ? nan : quantile(v, 0.5)) + ',' +
           format_double(v.empty() ? nan : quantile(v, 0.25)) + ',' +
           format_double(v.empty() ? nan : quantile(v, 0.75)) + '\n';
  }
  return out;
}

void replicate_poisson(const std::string& figure, const fs::path& dir, std::uint64_t seed) {
  std::vector<PoissonVariant> variants;
  for (const double g : {0.5, 0.3, 0.1}) {
    if (figure == "poisson_instability") {
      variants.push_back({Algorithm::kSngd, 2.0, g});
      variants.push_back({Algorithm::kSngd, 0.4, g});
    } else {
      variants.push_back({Algorithm::kSngd, 2.0, g});
      variants.push_back({Algorithm::kProjSngd, 2.0, g});
    }
  }
  const LikelihoodModel model = LikelihoodModel::make(ModelKind::kPoisson, synth("poisson_point", 1, 1, 0));
  const DomainBox box = DomainBox::make(4.0, 25.0, 1);

  std::vector<double> mu0(kReplicateRuns);
  for (std::size_t k = 0; k < kReplicateRuns; ++k) {
    CounterStream rng(seed, k, StreamPurpose::kInit);
    mu0[k] = std::uniform_real_distribution<double>(-3.0, 0.0)(rng);
  }
  const OptimumEstimate star =
      optimal_value(model, box, to_expectation({Vec::Zero(1), Vec::Ones(1)}), kPoissonEllStarGamma);

  fs::create_directories(dir);
  json variants_meta = json::array();
  for (const auto& v : variants) {
    const fs::path vdir = dir / variant_name(v);
    fs::create_directories(vdir);
    std::vector<std::vector<double>> runs;
    std::size_t diverged = 0;
    for (std::size_t k = 0; k < kReplicateRuns; ++k) {
      RunOptions o;
      o.algorithm = v.algorithm;
      o.schedule = StepSchedule::constant(v.gamma);
      o.T = kPoissonT;
      o.seed = seed;
      if (v.algorithm == Algorithm::kProjSngd) o.box = box;
      const OptimizerTrace trace =
          run(model, to_expectation({Vec::Constant(1, mu0[k]), Vec::Constant(1, v.sigma2)}), o);
      diverged += trace.diverged;
      char name[32];
      std::snprintf(name, sizeof name, "run_%02zu.csv", k);
      write_file(vdir / name, trace_csv(trace, false));
      std::vector<double> elbos;
      for (const auto& r : trace.rows) elbos.push_back(r.elbo);
      runs.push_back(std::move(elbos));
    }
    write_file(vdir / "summary.csv", quartile_summary(runs));
    variants_meta.push_back({{"name", variant_name(v)},
                             {"algorithm", std::string(to_string(v.algorithm))},
                             {"sigma2_0", v.sigma2},
                             {"gamma", v.gamma},
                             {"diverged_runs", diverged}});
  }
  json meta = {{"command", "replicate"},
               {"figure", figure},
               {"code_version", code_version()},
               {"seed", seed},
               {"data", {{"x", 0.9}, {"y", 24}}},
               {"box", {{"U", box.U}, {"D", box.D}}},
               {"T", kPoissonT},
               {"runs", kReplicateRuns},
               {"mu0", mu0},
               {"ell_star", ell_star_json(star, kPoissonEllStarGamma)},
               {"summary_statistic", "objective quartiles (type 7) over runs with a finite value at t"},
               {"variants", variants_meta}};
  write_file(dir / "meta.json", meta.dump(2) + "\n");
}

void replicate_stepsize(const fs::path& dir, std::uint64_t seed) {
  json user = {{"model.kind", "logistic"},
               {"data.source", "synth"},
               {"data.synth_kind", "logistic"},
               {"data.n", 200},
               {"data.d", 5},
               {"data.seed", seed},
               {"box.U", 5.0},
               {"box.D", 10.0},
               {"schedule.kind", "inv_sqrt"},
               {"gradient.kind", "stochastic"},
               {"gradient.batch_size", 20},
               {"gradient.mc_samples", 10},
               {"T", 300},
               {"seed", seed},
               {"ell_star.gamma", 0.05},
               {"sweep.algorithms", {"sngd", "proj_sngd", "prox_sgd", "proj_sgd"}},
               {"output.dir", dir.string()}};
  SweepOptions sweep;
  sweep.gammas = {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0};
  sweep.threshold = 0.05;
  sweep.relative = true;
  const auto rows = cmd_sweep(resolve_config(user), sweep);

  std::string summary = "algorithm,gamma0,reached,median,q1,q3\n";
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    std::vector<double> reached;
    while (j < rows.size() && rows[j].algorithm == rows[i].algorithm && rows[j].gamma0 == rows[i].gamma0) {
      if (rows[j].iterations >= 0) reached.push_back(static_cast<double>(rows[j].iterations));
      ++j;
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    summary += rows[i].algorithm + ',' + format_double(rows[i].gamma0) + ',' + std::to_string(reached.size()) +
               ',' + format_double(reached.empty() ? nan : quantile(reached, 0.5)) + ',' +
               format_double(reached.empty() ? nan : quantile(reached, 0.25)) + ',' +
               format_double(reached.empty() ? nan : quantile(reached, 0.75)) + '\n';
    i = j;
  }
  write_file(dir / "summary.csv", summary);
}

}  // namespace

void cmd_replicate(const std::string& figure, const fs::path& out_dir, std::uint64_t seed) {
  if (figure == "poisson_instability" || figure == "poisson_projection") {
    replicate_poisson(figure, out_dir / figure, seed);
  } else if (figure == "stepsize_robustness") {
    replicate_stepsize(out_dir / figure, seed);
  } else {
    throw ConfigError("unknown figure '" + figure +
                      "' (expected poisson_instability, poisson_projection or stepsize_robustness)");
  }
}

}  // namespace ngvi::cli
