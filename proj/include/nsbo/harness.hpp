#pragma once

#include "nsbo/acquisition.hpp"
#include "nsbo/cylindrical.hpp"
#include "nsbo/fit.hpp"
#include "nsbo/informative.hpp"
#include "nsbo/objectives.hpp"

#include <json.hpp>

#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace nsbo {

// ---------------------------------------------------------------------------
// Method matrix: every tag resolves to exactly one component tuple.
// ---------------------------------------------------------------------------

struct MethodSpec {
  enum class Cov { Stationary, Cylindrical, Informative };
  enum class Point { None, Origin, Incumbent };

  Cov cov = Cov::Stationary;
  Point anchor = Point::None;
  bool quadratic_mean = false;
  bool trust_region = false;
  bool focused = false;  // fixed shaping lengthscales and ratio
  bool saas = false;
  AcquisitionKind acq = AcquisitionKind::EI;
  Point belief_location = Point::None;
};

inline MethodSpec resolve_method_tag(const std::string& tag) {
  MethodSpec spec;
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : tag) {
    if (c == '+') {
      tokens.push_back(cur);
      cur.clear();
    } else {
      cur += static_cast<char>(std::toupper(c));
    }
  }
  tokens.push_back(cur);
  if (tokens.empty() || tokens[0].empty())
    throw ConfigError("empty method tag");

  if (tokens[0] == "S") spec.cov = MethodSpec::Cov::Stationary;
  else if (tokens[0] == "C") spec.cov = MethodSpec::Cov::Cylindrical;
  else if (tokens[0] == "I") spec.cov = MethodSpec::Cov::Informative;
  else throw ConfigError("unknown covariance in method tag: " + tokens[0]);

  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (t == "QM") spec.quadratic_mean = true;
    else if (t == "TR") spec.trust_region = true;
    else if (t == "X0") spec.anchor = MethodSpec::Point::Origin;
    else if (t == "XA") spec.anchor = MethodSpec::Point::Incumbent;
    else if (t == "F") spec.focused = true;
    else if (t == "SAAS") spec.saas = true;
    else if (t == "GKEI" || t == "GWEI") {
      spec.acq = t == "GKEI" ? AcquisitionKind::GKEI : AcquisitionKind::GWEI;
      spec.belief_location = spec.anchor;  // follow the anchor policy
    } else if (t == "GKEIX0" || t == "GWEIX0") {
      spec.acq = t[1] == 'K' ? AcquisitionKind::GKEI : AcquisitionKind::GWEI;
      spec.belief_location = MethodSpec::Point::Origin;
    } else if (t == "GKEIXA" || t == "GWEIXA") {
      spec.acq = t[1] == 'K' ? AcquisitionKind::GKEI : AcquisitionKind::GWEI;
      spec.belief_location = MethodSpec::Point::Incumbent;
    } else {
      throw ConfigError("unknown method token: " + t);
    }
  }

  const bool informative = spec.cov == MethodSpec::Cov::Informative;
  if (informative && spec.anchor == MethodSpec::Point::None)
    throw ConfigError("informative covariance needs an anchor (+X0 or +XA)");
  if (!informative && spec.anchor != MethodSpec::Point::None)
    throw ConfigError("anchors only apply to the informative covariance");
  if (spec.focused && !informative)
    throw ConfigError("+F only applies to the informative covariance");
  if ((spec.acq == AcquisitionKind::GKEI || spec.acq == AcquisitionKind::GWEI)
      && spec.belief_location == MethodSpec::Point::None)
    throw ConfigError("weighted acquisition needs a location (X0/XA)");
  return spec;
}

// ---------------------------------------------------------------------------
// Run configuration (JSON-mirrored) and per-trial record.
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string objective = "qbranin";
  int dim = 2;
  std::string method = "S";
  int n_init = 16;
  int budget = 200;
  std::vector<std::uint64_t> seeds = {0};
  std::string r0_prior = "K3";   // K1 | K2 | K3 | U | D
  double r0_value = 0.1;         // Dirac value / focused ratio
  double noise_variance = 1e-3;
  double log_offset = kDefaultLogOffset;
  bool use_log_transform = true;
  int fit_restarts = 5;
  int fit_max_iters = 1000;
  int n_sobol = 20000;
  int n_heuristic = 10;
  int n_starts = 20;
  double perturb_std = 0.04;
  double zeta = 0.0;             // 0 -> budget / 10
  std::optional<double> lcb_beta;  // switches the acquisition to LCB
  double tr_min_side = 0.015625;
  double tr_max_side = 1.6;
  double tr_init_side = 0.8;
  int tr_success_tolerance = 3;
  int tr_failure_tolerance = 10;
  std::string out_dir = "runs";

  void validate() const {
    if (n_init < 2) throw ConfigError("config: n0 must be >= 2");
    if (budget < 0) throw ConfigError("config: budget must be >= 0");
    if (seeds.empty()) throw ConfigError("config: at least one seed");
    (void)resolve_method_tag(method);
    (void)parse_objective_family(objective);
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"objective", c.objective},
                     {"dim", c.dim},
                     {"method", c.method},
                     {"n0", c.n_init},
                     {"budget", c.budget},
                     {"seeds", c.seeds},
                     {"r0_prior", c.r0_prior},
                     {"r0_value", c.r0_value},
                     {"noise_variance", c.noise_variance},
                     {"log_offset", c.log_offset},
                     {"use_log_transform", c.use_log_transform},
                     {"fit_restarts", c.fit_restarts},
                     {"fit_max_iters", c.fit_max_iters},
                     {"n_sobol", c.n_sobol},
                     {"n_heuristic", c.n_heuristic},
                     {"n_starts", c.n_starts},
                     {"perturb_std", c.perturb_std},
                     {"zeta", c.zeta},
                     {"tr_min_side", c.tr_min_side},
                     {"tr_max_side", c.tr_max_side},
                     {"tr_init_side", c.tr_init_side},
                     {"tr_success_tolerance", c.tr_success_tolerance},
                     {"tr_failure_tolerance", c.tr_failure_tolerance},
                     {"out_dir", c.out_dir}};
  if (c.lcb_beta) j["lcb_beta"] = *c.lcb_beta;
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  c = RunConfig{};
  auto get = [&j](const char* key, auto& into) {
    if (j.contains(key)) j.at(key).get_to(into);
  };
  get("objective", c.objective);
  get("dim", c.dim);
  get("method", c.method);
  get("n0", c.n_init);
  get("budget", c.budget);
  get("seeds", c.seeds);
  get("r0_prior", c.r0_prior);
  get("r0_value", c.r0_value);
  get("noise_variance", c.noise_variance);
  get("log_offset", c.log_offset);
  get("use_log_transform", c.use_log_transform);
  get("fit_restarts", c.fit_restarts);
  get("fit_max_iters", c.fit_max_iters);
  get("n_sobol", c.n_sobol);
  get("n_heuristic", c.n_heuristic);
  get("n_starts", c.n_starts);
  get("perturb_std", c.perturb_std);
  get("zeta", c.zeta);
  get("tr_min_side", c.tr_min_side);
  get("tr_max_side", c.tr_max_side);
  get("tr_init_side", c.tr_init_side);
  get("tr_success_tolerance", c.tr_success_tolerance);
  get("tr_failure_tolerance", c.tr_failure_tolerance);
  get("out_dir", c.out_dir);
  if (j.contains("lcb_beta")) c.lcb_beta = j.at("lcb_beta").get<double>();
}

/// FNV-1a over the canonical JSON dump; changes iff any config field changes.
inline std::string config_hash(const RunConfig& cfg) {
  nlohmann::json j = cfg;
  std::string dump = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

struct StepRecord {
  Vector x;
  double y = 0.0;          // raw objective value
  double incumbent = 0.0;  // best raw value so far
  double ni = 0.0;
  double seconds = 0.0;
};

struct RunRecord {
  std::string method;
  std::string objective;
  int dim = 0;
  int n_init = 0;
  std::uint64_t seed = 0;
  std::string hash;
  bool ni_degenerate = false;
  std::vector<StepRecord> steps;

  /// NI of the n-th acquisition (n >= 1); NI_0 = 0 by construction.
  double ni_at(int n) const { return n == 0 ? 0.0 : steps[n_init + n - 1].ni; }
  int n_acquisitions() const {
    return static_cast<int>(steps.size()) - n_init;
  }
};

// ---------------------------------------------------------------------------
// Normalized improvement over initial conditions.
// ---------------------------------------------------------------------------

/// NI_n = (f_best^(n0) - f(x_best^(n0+n))) / (f_best^(n0) - f(x*)), for
/// n = 0..N over the incumbent trajectory. When the initial best already
/// attains the optimum the series is identically 1 and `degenerate` is set.
inline std::vector<double> normalized_improvement(
    const std::vector<double>& incumbents, int n_init, double f_star,
    bool* degenerate = nullptr) {
  if (static_cast<int>(incumbents.size()) < n_init || n_init < 1)
    throw ConfigError("normalized_improvement: bad incumbent series");
  const double f0 = incumbents[n_init - 1];
  const int N = static_cast<int>(incumbents.size()) - n_init;
  std::vector<double> ni(N + 1);
  if (!(f0 > f_star)) {
    std::fill(ni.begin(), ni.end(), 1.0);
    if (degenerate) *degenerate = true;
    return ni;
  }
  if (degenerate) *degenerate = false;
  for (int n = 0; n <= N; ++n) {
    double value = (f0 - incumbents[n_init - 1 + n]) / (f0 - f_star);
    ni[n] = clamp(value, 0.0, 1.0);
  }
  return ni;
}

/// Mean NI over the N acquisitions of each record, averaged over records
/// (the normalized area under the NI curve).
inline double mean_ni(const std::vector<RunRecord>& records) {
  if (records.empty()) throw ConfigError("mean_ni: no records");
  const int N = records.front().n_acquisitions();
  if (N < 1) throw ConfigError("mean_ni: records have no acquisitions");
  double acc = 0.0;
  for (const RunRecord& r : records) {
    if (r.n_acquisitions() != N)
      throw ConfigError("mean_ni: records disagree on N");
    double s = 0.0;
    for (int n = 1; n <= N; ++n) s += r.ni_at(n);
    acc += s / N;
  }
  return acc / static_cast<double>(records.size());
}

// ---------------------------------------------------------------------------
// One BO trial (Algorithm 1).
// ---------------------------------------------------------------------------

namespace detail {

struct MethodComponents {
  std::shared_ptr<MeanFunction> mean;
  std::shared_ptr<CovarianceFunction> cov;
};

inline Hyperprior ratio_prior_from_tag(const std::string& tag, double dirac) {
  if (tag == "K1") return Kumaraswamy{1.467, 10.0};
  if (tag == "K2") return Kumaraswamy{2.253, 100.0};
  if (tag == "K3") return Kumaraswamy{3.164, 1000.0};
  if (tag == "U") return Uniform{0.0, 1.0};
  if (tag == "D") return DiracDelta{dirac};
  throw ConfigError("unknown r0 prior tag: " + tag);
}

inline MethodComponents build_components(const MethodSpec& spec,
                                         const RunConfig& cfg,
                                         const Vector& anchor0) {
  MethodComponents out;
  const int D = cfg.dim;
  if (spec.quadratic_mean) {
    out.mean = std::make_shared<QuadraticMean>(D);
  } else {
    out.mean = std::make_shared<ConstantMean>(D);
  }
  switch (spec.cov) {
    case MethodSpec::Cov::Stationary:
      out.cov = std::make_shared<StationaryKernel>(StationaryKind::Matern52, D);
      break;
    case MethodSpec::Cov::Cylindrical:
      out.cov = std::make_shared<CylindricalKernel>(D);
      break;
    case MethodSpec::Cov::Informative: {
      ShapingConfig shaping;
      if (spec.focused) {
        shaping.ratio_prior = DiracDelta{cfg.r0_value};
        shaping.fixed_shaping_lengthscale = 0.1 * std::sqrt(double(D));
      } else {
        shaping.ratio_prior = ratio_prior_from_tag(cfg.r0_prior, cfg.r0_value);
      }
      out.cov = std::make_shared<InformativeKernel>(
          D, AnchorSet::single(anchor0, 0.1), shaping);
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Per-step internals exposed to observers (tests, verbose logging).
struct StepTrace {
  int step = 0;
  Vector anchor;       // empty for non-informative methods
  Vector incumbent;
  double tr_side = 0.0;
  bool fit_degraded = false;
};

using StepObserver = std::function<void(const StepTrace&)>;

inline RunRecord run_bo(const RunConfig& cfg, std::uint64_t seed,
                        const StepObserver& observer = {}) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const MethodSpec spec = resolve_method_tag(cfg.method);
  const ObjectiveSpec objective =
      make_objective(parse_objective_family(cfg.objective), cfg.dim);
  const int D = cfg.dim;

  RunRecord rec;
  rec.method = cfg.method;
  rec.objective = objective.name;
  rec.dim = D;
  rec.n_init = cfg.n_init;
  rec.seed = seed;
  rec.hash = config_hash(cfg);

  const std::uint64_t root = hash_combine(seed, 0xB0);
  auto transform_y = [&](double y) {
    return cfg.use_log_transform ? log_transform(y, cfg.log_offset) : y;
  };

  // initial design: the origin plus n0 - 1 scrambled low-discrepancy points
  EvidenceSet evidence(D);
  std::vector<double> raw_values;
  Vector incumbent_x = Vector::Zero(D);
  double incumbent_y = kInf;
  auto observe = [&](const Vector& x, clock::time_point t0) {
    double y = evaluate(objective, x);
    evidence.add(x, transform_y(y));
    raw_values.push_back(y);
    if (y < incumbent_y) {
      incumbent_y = y;
      incumbent_x = x;
    }
    StepRecord s;
    s.x = x;
    s.y = y;
    s.incumbent = incumbent_y;
    s.ni = 0.0;
    s.seconds =
        std::chrono::duration<double>(clock::now() - t0).count();
    rec.steps.push_back(std::move(s));
  };

  {
    auto t0 = clock::now();
    observe(Vector::Zero(D), t0);
    SobolSequence init_design(D, hash_combine(root, 0x171), true);
    for (int i = 0; i < cfg.n_init - 1; ++i) {
      t0 = clock::now();
      Vector u = init_design.point(i);
      observe(2.0 * u - Vector::Ones(D), t0);
    }
  }
  const double f_best_init = incumbent_y;

  detail::MethodComponents comp =
      detail::build_components(spec, cfg, incumbent_x);

  TrustRegionConfig tr_cfg{cfg.tr_min_side, cfg.tr_max_side, cfg.tr_init_side,
                           cfg.tr_success_tolerance, cfg.tr_failure_tolerance};
  TrustRegionState tr_state{incumbent_x, cfg.tr_init_side, 0, 0};

  AcquisitionConfig acq;
  acq.kind = cfg.lcb_beta ? AcquisitionKind::LCB : spec.acq;
  acq.beta = cfg.lcb_beta;
  acq.zeta = cfg.zeta > 0.0 ? cfg.zeta
                            : std::max(1.0, cfg.budget / 10.0);
  acq.n_sobol = cfg.n_sobol;
  acq.n_heuristic = cfg.n_heuristic;
  acq.n_starts = cfg.n_starts;
  acq.perturb_std = cfg.perturb_std;
  acq.prior_stddev = 0.5;

  FitOptions fit_opts;
  fit_opts.restarts = cfg.fit_restarts;
  fit_opts.max_iters = cfg.fit_max_iters;

  std::optional<WarmStart> warm;
  std::optional<GpModel> model;

  for (int n = 1; n <= cfg.budget; ++n) {
    auto t0 = clock::now();
    // anchor policy
    if (spec.cov == MethodSpec::Cov::Informative) {
      auto* inf = static_cast<InformativeKernel*>(comp.cov.get());
      Matrix a(1, D);
      a.row(0) = (spec.anchor == MethodSpec::Point::Incumbent ? incumbent_x
                                                              : Vector::Zero(D))
                     .transpose();
      inf->set_anchors(a);
    }

    // refit; on numerical degeneracy keep the previous step's model
    Rng fit_rng(hash_combine(hash_combine(root, 0xF17), n));
    try {
      FitResult fit;
      if (spec.saas) {
        fit = fit_saas_selection(*comp.mean, *comp.cov, cfg.noise_variance,
                                 evidence, {1.0, 1e-1, 1e-2, 1e-3}, fit_opts,
                                 fit_rng, warm)
                  .fit;
      } else {
        fit = fit_empirical_bayes(*comp.mean, *comp.cov, cfg.noise_variance,
                                  evidence, fit_opts, fit_rng, warm);
      }
      GpModel next = condition_fit(fit, cfg.noise_variance, evidence);
      model.emplace(std::move(next));
      warm = WarmStart{fit.mean->params(), fit.cov->params()};
    } catch (const NumericalError&) {
      if (!model) throw;
      // previous hyperparameters, refreshed with the current evidence
      GpModel retry(model->mean_ptr(), model->cov_ptr(), cfg.noise_variance);
      try {
        retry.condition(evidence);
        retry.mark_degraded();
        model.emplace(std::move(retry));
      } catch (const NumericalError&) {
        // keep the stale conditioned model as a last resort
      }
    }

    acq.step = n;
    if (spec.belief_location != MethodSpec::Point::None)
      acq.prior_location = spec.belief_location == MethodSpec::Point::Incumbent
                               ? incumbent_x
                               : Vector::Zero(D);

    std::optional<Box> box;
    if (spec.trust_region) {
      tr_state.center = incumbent_x;
      box = trust_region_box(tr_state);
    }
    Matrix candidates =
        generate_candidates(hash_combine(hash_combine(root, 0xCA), n),
                            incumbent_x, D, box, acq);
    double f_best_model = evidence.outputs().minCoeff();
    AcquisitionResult next =
        maximize_acquisition(*model, f_best_model, acq, candidates, box);

    double prev_incumbent = incumbent_y;
    observe(next.x, t0);
    if (spec.trust_region)
      tr_state = trust_region_update(tr_state, raw_values.back() <
                                                   prev_incumbent,
                                     tr_cfg, incumbent_x);

    if (observer) {
      StepTrace trace;
      trace.step = n;
      if (spec.cov == MethodSpec::Cov::Informative)
        trace.anchor = static_cast<InformativeKernel*>(comp.cov.get())
                           ->anchor_set()
                           .anchors.row(0)
                           .transpose();
      trace.incumbent = incumbent_x;
      trace.tr_side = tr_state.side;
      trace.fit_degraded = model && model->degraded_fit();
      observer(trace);
    }
  }

  // fill the NI column for acquisition rows
  if (objective.f_star) {
    std::vector<double> incumbents(rec.steps.size());
    for (std::size_t i = 0; i < rec.steps.size(); ++i)
      incumbents[i] = rec.steps[i].incumbent;
    std::vector<double> ni = normalized_improvement(
        incumbents, cfg.n_init, *objective.f_star, &rec.ni_degenerate);
    for (int n = 1; n <= cfg.budget; ++n)
      rec.steps[cfg.n_init + n - 1].ni = ni[n];
  } else {
    for (auto& s : rec.steps) s.ni = kNaN;
  }
  (void)f_best_init;
  return rec;
}

// ---------------------------------------------------------------------------
// Persistence: one CSV per run plus a JSON manifest; loading round-trips.
// ---------------------------------------------------------------------------

namespace detail {
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

inline std::string run_basename(const RunRecord& rec) {
  std::ostringstream name;
  name << rec.method << "_" << rec.objective << "_d" << rec.dim << "_s"
       << rec.seed;
  return name.str();
}

inline void persist_run(const RunRecord& rec, const RunConfig& cfg,
                        const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  const std::string base = (fs::path(dir) / run_basename(rec)).string();

  std::ofstream csv(base + ".csv", std::ios::binary);
  if (!csv) throw IoError("cannot write " + base + ".csv");
  csv << "step";
  for (int d = 0; d < rec.dim; ++d) csv << ",x" << d;
  csv << ",y,incumbent,ni,seconds\n";
  for (std::size_t i = 0; i < rec.steps.size(); ++i) {
    const StepRecord& s = rec.steps[i];
    csv << i;
    for (int d = 0; d < rec.dim; ++d)
      csv << "," << detail::format_double(s.x[d]);
    csv << "," << detail::format_double(s.y) << ","
        << detail::format_double(s.incumbent) << ","
        << detail::format_double(s.ni) << ","
        << detail::format_double(s.seconds) << "\n";
  }
  csv.close();
  if (!csv) throw IoError("failed while writing " + base + ".csv");

  nlohmann::json manifest;
  manifest["config"] = cfg;
  manifest["config_hash"] = rec.hash;
  manifest["method"] = rec.method;
  manifest["objective"] = rec.objective;
  manifest["dim"] = rec.dim;
  manifest["n0"] = rec.n_init;
  manifest["seed"] = rec.seed;
  manifest["ni_degenerate"] = rec.ni_degenerate;
  std::ofstream mf(base + ".json", std::ios::binary);
  if (!mf) throw IoError("cannot write " + base + ".json");
  mf << manifest.dump(2) << "\n";
}

struct LoadedRun {
  RunRecord record;
  RunConfig config;
};

inline LoadedRun load_run(const std::string& manifest_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw IoError("cannot read " + manifest_path);
  nlohmann::json manifest = nlohmann::json::parse(mf);

  LoadedRun out;
  out.config = manifest.at("config").get<RunConfig>();
  out.record.method = manifest.at("method").get<std::string>();
  out.record.objective = manifest.at("objective").get<std::string>();
  out.record.dim = manifest.at("dim").get<int>();
  out.record.n_init = manifest.at("n0").get<int>();
  out.record.seed = manifest.at("seed").get<std::uint64_t>();
  out.record.hash = manifest.at("config_hash").get<std::string>();
  out.record.ni_degenerate = manifest.at("ni_degenerate").get<bool>();

  std::string csv_path = manifest_path;
  csv_path.replace(csv_path.size() - 5, 5, ".csv");
  std::ifstream csv(csv_path);
  if (!csv) throw IoError("cannot read " + csv_path);
  std::string line;
  std::getline(csv, line);  // header
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    StepRecord s;
    s.x.resize(out.record.dim);
    for (int d = 0; d < out.record.dim; ++d) {
      std::getline(row, cell, ',');
      s.x[d] = std::strtod(cell.c_str(), nullptr);
    }
    std::getline(row, cell, ',');
    s.y = std::strtod(cell.c_str(), nullptr);
    std::getline(row, cell, ',');
    s.incumbent = std::strtod(cell.c_str(), nullptr);
    std::getline(row, cell, ',');
    s.ni = std::strtod(cell.c_str(), nullptr);
    std::getline(row, cell, ',');
    s.seconds = std::strtod(cell.c_str(), nullptr);
    out.record.steps.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trial-level parallelism across seeds; NSBO_THREADS caps the pool.
// ---------------------------------------------------------------------------

inline int thread_cap() {
  if (const char* env = std::getenv("NSBO_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline std::vector<RunRecord> run_all(const RunConfig& cfg,
                                      bool persist = true) {
  cfg.validate();
  const int n_trials = static_cast<int>(cfg.seeds.size());
  std::vector<RunRecord> records(n_trials);
  const int n_threads = std::min(thread_cap(), n_trials);
  std::atomic<int> cursor{0};
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      int i = cursor.fetch_add(1);
      if (i >= n_trials) return;
      try {
        records[i] = run_bo(cfg, cfg.seeds[i]);
        if (persist) persist_run(records[i], cfg, cfg.out_dir);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return records;
}

// ---------------------------------------------------------------------------
// Aggregation: Table-style mean-NI summaries and per-step series for
// external plotting.
// ---------------------------------------------------------------------------

inline std::vector<LoadedRun> load_all_runs(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> manifests;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json")
      manifests.push_back(entry.path().string());
  std::sort(manifests.begin(), manifests.end());
  std::vector<LoadedRun> runs;
  for (const auto& m : manifests) runs.push_back(load_run(m));
  if (runs.empty()) throw IoError("no run manifests under " + dir);
  return runs;
}

/// Method-by-objective table of mean NI over acquisitions, mean +- std over
/// seeds, as CSV text.
inline std::string summarize_runs(const std::vector<LoadedRun>& runs) {
  std::map<std::string, std::map<std::string, std::vector<double>>> table;
  for (const LoadedRun& run : runs) {
    std::ostringstream obj;
    obj << run.record.objective << "-" << run.record.dim << "D";
    table[run.record.method][obj.str()].push_back(
        mean_ni({run.record}));
  }
  std::vector<std::string> objectives;
  for (const auto& [method, cols] : table)
    for (const auto& [obj, vals] : cols)
      if (std::find(objectives.begin(), objectives.end(), obj) ==
          objectives.end())
        objectives.push_back(obj);
  std::sort(objectives.begin(), objectives.end());

  std::ostringstream out;
  out << "method";
  for (const auto& obj : objectives) out << "," << obj;
  out << "\n";
  for (const auto& [method, cols] : table) {
    out << method;
    for (const auto& obj : objectives) {
      auto it = cols.find(obj);
      if (it == cols.end()) {
        out << ",";
        continue;
      }
      const std::vector<double>& v = it->second;
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= v.size();
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      double sd = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0;
      char cell[64];
      std::snprintf(cell, sizeof(cell), ",%.3f+-%.3f", mean, sd);
      out << cell;
    }
    out << "\n";
  }
  return out.str();
}

/// Per-step mean/std/quartile NI series across seeds, long-format CSV.
inline std::string plot_data(const std::vector<LoadedRun>& runs) {
  std::map<std::pair<std::string, std::string>, std::vector<const RunRecord*>>
      groups;
  for (const LoadedRun& run : runs) {
    std::ostringstream obj;
    obj << run.record.objective << "-" << run.record.dim << "D";
    groups[{obj.str(), run.record.method}].push_back(&run.record);
  }
  std::ostringstream out;
  out << "objective,method,step,mean_ni,std_ni,q25,q75\n";
  for (const auto& [key, recs] : groups) {
    int N = recs.front()->n_acquisitions();
    for (int n = 0; n <= N; ++n) {
      std::vector<double> v;
      for (const RunRecord* r : recs)
        if (r->n_acquisitions() >= n) v.push_back(r->ni_at(n));
      std::sort(v.begin(), v.end());
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= v.size();
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      double sd = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0;
      auto quantile = [&v](double q) {
        double pos = q * (v.size() - 1);
        std::size_t lo = static_cast<std::size_t>(pos);
        std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - lo) * (v[hi] - v[lo]);
      };
      char row[160];
      std::snprintf(row, sizeof(row), "%s,%s,%d,%.6f,%.6f,%.6f,%.6f\n",
                    key.first.c_str(), key.second.c_str(), n, mean, sd,
                    quantile(0.25), quantile(0.75));
      out << row;
    }
  }
  return out.str();
}

}  // namespace nsbo
