// carrm command-line front end.

#include <carrm/carrm.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

namespace fs = std::filesystem;
using namespace carrm;

namespace {

struct Global {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = ".";
  int config_version = 0;
};

struct DataArgs {
  std::string path;
  std::string schema = "canonical";
  std::string problems;
  std::string trials;
  double epsilon = 0.0;
  std::string rules;
  std::string features = "gate";

  void add(CLI::App* cmd, bool required = true) {
    auto* o = cmd->add_option("--data", path, "Dataset file");
    if (required) o->required();
    o->check(CLI::ExistingFile);
    cmd->add_option("--schema", schema, "canonical | choices13k | cpc18")->capture_default_str();
    cmd->add_option("--problems", problems, "choices13k problems JSON (default: next to --data)");
    cmd->add_option("--trials", trials, "Trial file for canonical data (menu_id,chose_left)");
    cmd->add_option("--epsilon", epsilon, "Activity margin; negative selects the all-active variant")
        ->capture_default_str();
    cmd->add_option("--rules", rules, "Comma-separated rule library (default: all 12)");
    cmd->add_option("--features", features, "gate | raw")->capture_default_str();
  }

  Dataset load() const {
    const auto s = parse_schema(schema);
    if (!s) throw Error(ErrorKind::InvalidArgument, "unknown schema '" + schema + "'");
    LoadOptions opt;
    opt.problems_json = problems;
    opt.trials_csv = trials;
    return load_csv(path, *s, opt);
  }

  Library library() const {
    if (rules.empty()) return full_library();
    Library lib;
    std::stringstream ss(rules);
    std::string name;
    while (std::getline(ss, name, ',')) {
      const auto r = parse_rule(name);
      if (!r) throw Error(ErrorKind::InvalidArgument, "unknown rule '" + name + "'");
      lib.push_back(*r);
    }
    return lib;
  }

  FeatureKind kind() const {
    if (features == "gate") return FeatureKind::Gate;
    if (features == "raw") return FeatureKind::Raw;
    throw Error(ErrorKind::InvalidArgument, "unknown feature set '" + features + "'");
  }
};

struct TrainArgs {
  double lr = 0.01;
  int epochs = 1000;
  double clip = 1.0;
  double m_min = kDefaultMMin;
  std::vector<double> lr_grid = {0.001, 0.01, 0.1};

  void add(CLI::App* cmd) {
    cmd->add_option("--lr", lr, "Learning rate")->capture_default_str();
    cmd->add_option("--epochs", epochs, "Adam epochs")->capture_default_str();
    cmd->add_option("--clip-norm", clip, "Global gradient-norm clip")->capture_default_str();
    cmd->add_option("--m-min", m_min, "Active-mass guard")->capture_default_str();
    cmd->add_option("--lr-grid", lr_grid, "Learning-rate grid")->delimiter(',');
  }

  ModelConfig model(const DataArgs& d, std::uint64_t seed) const {
    ModelConfig m;
    m.library = d.library();
    m.features = d.kind();
    m.train.learning_rate = lr;
    m.train.epochs = epochs;
    m.train.clip_norm = clip;
    m.train.m_min = m_min;
    m.train.lr_grid = lr_grid;
    m.train.seed = seed;
    validate(m.train);
    return m;
  }
};

struct PlanArgs {
  int splits = 50;
  double train_fraction = 0.9;
  double inner_val = 0.2;

  void add(CLI::App* cmd) {
    cmd->add_option("--splits", splits, "Random splits")->capture_default_str();
    cmd->add_option("--train-fraction", train_fraction)->capture_default_str();
    cmd->add_option("--inner-val", inner_val, "Validation share of each training set")
        ->capture_default_str();
  }

  SplitPlan plan(std::uint64_t seed) const {
    SplitPlan p{splits, train_fraction, inner_val, seed};
    validate(p);
    return p;
  }
};

struct Loaded {
  Dataset ds;
  RuleMatrix matrix;
  FeatureMatrix z;
};

Loaded load_all(const DataArgs& d, const Global& g) {
  Loaded l;
  l.ds = d.load();
  l.matrix = build_rule_matrix(l.ds.menus, d.epsilon, g.threads);
  l.z = feature_matrix(l.ds, d.kind());
  return l;
}

void emit(const Global& g, const std::string& name, const std::string& text) {
  const fs::path p = fs::path(g.out) / name;
  write_text(p, text);
  std::cerr << "wrote " << p.string() << '\n';
}

std::vector<int> parse_ks(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  return out;
}

Covariate parse_covariate(const std::string& s) {
  if (s == "tc") return Covariate::TC;
  if (s == "risk_asym") return Covariate::RiskAsym;
  throw Error(ErrorKind::InvalidArgument, "unknown covariate '" + s + "'");
}

BootstrapScheme parse_scheme(const std::string& s) {
  if (s == "menu") return BootstrapScheme::Menu;
  if (s == "trial") return BootstrapScheme::Trial;
  throw Error(ErrorKind::InvalidArgument, "unknown bootstrap scheme '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional-on-activity random rule model toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML key-value config; must set config_version = 1");
  Global g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--config-version,--config_version", g.config_version, "Config schema version")->group("");

  // ingest
  DataArgs ingest_data;
  auto* ingest = app.add_subcommand("ingest", "Load a dataset, write canonical CSV, features and rule indicators");
  ingest_data.add(ingest);

  // fit
  DataArgs fit_data;
  TrainArgs fit_train;
  auto* fit = app.add_subcommand("fit", "Train the rule gate on every menu");
  fit_data.add(fit);
  fit_train.add(fit);

  // cv
  DataArgs cv_data;
  TrainArgs cv_train;
  PlanArgs cv_plan;
  bool cv_curve = false;
  auto* cv = app.add_subcommand("cv", "Repeated random-split cross-validation");
  cv_data.add(cv);
  cv_train.add(cv);
  cv_plan.add(cv);
  cv->add_flag("--learning-curve", cv_curve, "Also trace test MSE against training fraction at the selected lr");

  // two-step
  DataArgs ts_data;
  int ts_k = 50;
  int ts_boot = 100;
  std::string ts_scheme = "menu";
  std::string ts_baseline = "A1";
  bool ts_efficient = false;
  std::string ts_compare;
  auto* two = app.add_subcommand("two-step", "Cellwise least squares plus second-stage projection");
  ts_data.add(two);
  two->add_option("--k", ts_k, "k-means cells for menus outside exact groups")->capture_default_str();
  two->add_option("--bootstrap", ts_boot, "Bootstrap resamples (0 disables)")->capture_default_str();
  two->add_option("--scheme", ts_scheme, "menu | trial")->capture_default_str();
  two->add_option("--baseline", ts_baseline, "Normalizing rule")->capture_default_str();
  two->add_flag("--efficient", ts_efficient, "Weight the second stage by inverse bootstrap variance");
  two->add_option("--compare", ts_compare, "Gate params JSON to compare responsibilities against")
      ->check(CLI::ExistingFile);

  // diagnose
  DataArgs dg_data;
  int dg_k = 50;
  std::string dg_params;
  auto* diag = app.add_subcommand("diagnose", "Identification report");
  dg_data.add(diag);
  diag->add_option("--k", dg_k, "k-means cells")->capture_default_str();
  diag->add_option("--params", dg_params, "Gate params JSON for the local Jacobian rank")
      ->check(CLI::ExistingFile);

  // ablate
  DataArgs ab_data;
  TrainArgs ab_train;
  PlanArgs ab_plan;
  auto* abl = app.add_subcommand("ablate", "Leave-one-rule-out refits");
  ab_data.add(abl);
  ab_train.add(abl);
  ab_plan.add(abl);

  // crossfit
  DataArgs cf_data;
  TrainArgs cf_train;
  PlanArgs cf_plan;
  std::string cf_rule_ks = "1,2,3,4,5,6";
  std::string cf_family_ks = "1,2,3,4";
  auto* cf = app.add_subcommand("crossfit", "Cross-fitted top-k rule and family selection");
  cf_data.add(cf);
  cf_train.add(cf);
  cf_plan.add(cf);
  cf->add_option("--rule-ks", cf_rule_ks)->capture_default_str();
  cf->add_option("--family-ks", cf_family_ks)->capture_default_str();

  // statics
  DataArgs st_data;
  std::string st_params;
  std::string st_cov = "tc";
  int st_bins = 10;
  auto* st = app.add_subcommand("statics", "Binned rule weights along a menu covariate");
  st_data.add(st);
  st->add_option("--params", st_params, "Gate params JSON")->required()->check(CLI::ExistingFile);
  st->add_option("--covariate", st_cov, "tc | risk_asym")->capture_default_str();
  st->add_option("--bins", st_bins)->capture_default_str();

  // restrictiveness
  DataArgs rs_data;
  TrainArgs rs_train;
  PlanArgs rs_plan;
  int rs_perm = 10;
  auto* rs = app.add_subcommand("restrictiveness", "Fit to permuted targets relative to a constant predictor");
  rs_data.add(rs);
  rs_train.add(rs);
  rs_plan.add(rs);
  rs->add_option("--permutations", rs_perm)->capture_default_str();

  // portability
  DataArgs pt_data;
  std::string pt_params;
  auto* pt = app.add_subcommand("portability", "Score frozen parameters on another dataset");
  pt_data.add(pt);
  pt->add_option("--params", pt_params, "Gate params JSON")->required()->check(CLI::ExistingFile);

  // synth
  SynthConfig sy;
  std::string sy_rules;
  std::string sy_baseline = "A1";
  double sy_alpha = 1.0;
  double sy_beta = 0.5;
  auto* syn = app.add_subcommand("synth", "Generate a synthetic dataset from a random gate");
  syn->add_option("--cells", sy.cells)->capture_default_str();
  syn->add_option("--menus-per-cell", sy.menus_per_cell)->capture_default_str();
  syn->add_option("--n-trials", sy.n_trials, "Trials per menu (0: noiseless)")->capture_default_str();
  syn->add_option("--quadratic", sy.quadratic, "Quadratic index strength")->capture_default_str();
  syn->add_option("--rules", sy_rules, "Comma-separated rule library");
  syn->add_option("--baseline", sy_baseline)->capture_default_str();
  syn->add_option("--alpha-scale", sy_alpha)->capture_default_str();
  syn->add_option("--beta-scale", sy_beta)->capture_default_str();
  syn->add_flag("--real-features", "Compute features from lotteries instead of drawing them per cell");

  // placebo
  DataArgs pl_data;
  TrainArgs pl_train;
  PlanArgs pl_plan;
  int pl_strata = 10;
  auto* pl = app.add_subcommand("placebo", "Cross-validate with permuted rule indicators");
  pl_data.add(pl);
  pl_train.add(pl);
  pl_plan.add(pl);
  pl->add_option("--strata", pl_strata, "Support-size strata (1 permutes across all menus)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.get_config_ptr()->count() > 0 && g.config_version != 1)
      throw Error(ErrorKind::SchemaViolation, "config must set config_version = 1");
    fs::create_directories(g.out);

    if (*ingest) {
      const auto l = load_all(ingest_data, g);
      emit(g, "dataset.csv", to_canonical_csv(l.ds));
      if (!l.ds.trials.empty()) emit(g, "trials.csv", trials_to_csv(l.ds));
      emit(g, "features.csv", features_to_csv(l.ds, feature_matrix(l.ds, FeatureKind::Gate)));
      emit(g, "rules.csv", l.matrix.to_csv());
      const auto counts = l.matrix.activity_counts();
      std::cout << l.ds.name << ": " << l.ds.size() << " menus, " << l.ds.trials.size()
                << " trials, rescale factor " << l.ds.rescale_factor << '\n';
      for (RuleId r : kAllRules) std::cout << "  " << rule_name(r) << " active on " << counts[index_of(r)] << '\n';
    } else if (*fit) {
      const auto l = load_all(fit_data, g);
      validate(l.ds, true);
      const auto model = fit_train.model(fit_data, g.seed);
      std::vector<std::size_t> rows(l.ds.size());
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
      const auto targets = l.ds.targets();
      auto res = fit_rows(l.matrix, l.z, targets, model, rows, model.train.learning_rate);
      res.params.rescale_factor = l.ds.rescale_factor;
      res.params.rescale_source = l.ds.name;
      emit(g, "params.json", params_to_json(res.params));
      const auto batch = make_batch(l.matrix, l.z, targets, model.library);
      const auto resp = responsibilities(res.params, batch);
      emit(g, "concentration.json", concentration_to_json(concentration(resp.w), model.library));
      std::ostringstream trace;
      trace << "epoch,train_mse\n";
      for (std::size_t e = 0; e < res.trace.size(); ++e) trace << e << ',' << res.trace[e] << '\n';
      emit(g, "trace.csv", trace.str());
      std::cout << "train MSE " << res.final_mse << '\n';
    } else if (*cv) {
      const auto l = load_all(cv_data, g);
      const auto model = cv_train.model(cv_data, g.seed);
      const auto plan = cv_plan.plan(g.seed);
      const auto rec = run_cv(l.ds, l.matrix, l.z, model, plan, g.threads);
      emit(g, "run_record.json", run_record_to_json(rec));
      std::cout << "selected lr " << rec.selected_lr << ", test MSE " << rec.test_mse_mean << " (sd "
                << rec.test_mse_sd << ")\n";
      if (cv_curve) {
        const auto pts = learning_curve(l.ds, l.matrix, l.z, model, plan, rec.selected_lr,
                                        {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}, g.threads);
        emit(g, "learning_curve.json", learning_curve_to_json(pts));
      }
    } else if (*two) {
      const auto l = load_all(ts_data, g);
      validate(l.ds, true);
      const auto base = parse_rule(ts_baseline);
      if (!base) throw Error(ErrorKind::InvalidArgument, "unknown baseline rule");
      TwoStepConfig cfg;
      cfg.library = ts_data.library();
      cfg.baseline = *base;
      cfg.efficient_weights = ts_efficient;
      cfg.bootstrap = ts_boot > 0;
      cfg.boot = {ts_boot, derive_seed(g.seed, 1), parse_scheme(ts_scheme)};
      cfg.threads = g.threads;
      const auto z = feature_matrix(l.ds, FeatureKind::Gate);
      const auto cells = build_cells(z, ts_k, g.seed);
      const auto res = fit_two_step(l.ds, l.matrix, z, cells, cfg);
      std::vector<double> w_mse;
      if (!ts_compare.empty()) {
        const auto p = params_from_json(read_text(ts_compare));
        w_mse = responsibilities(p, make_batch(l.matrix, z, {}, p.rules)).w;
        if (w_mse.size() != res.w.size()) throw Error(ErrorKind::DimensionMismatch, "compared params use another library");
      }
      emit(g, "two_step.csv", two_step_to_csv(res, w_mse));
      emit(g, "two_step.json", two_step_to_json(res, w_mse));
      std::cout << two_step_to_csv(res, w_mse);
    } else if (*diag) {
      const auto l = load_all(dg_data, g);
      IdentConfig cfg;
      cfg.k = dg_k;
      cfg.seed = g.seed;
      cfg.library = dg_data.library();
      const auto z = feature_matrix(l.ds, FeatureKind::Gate);
      const auto rep = ident_report(l.ds, l.matrix, z, cfg);
      emit(g, "ident_report.json", ident_report_to_json(rep));
      std::cout << format_ident_report(rep);
      if (!dg_params.empty()) {
        const auto p = params_from_json(read_text(dg_params));
        const RuleId base = p.baseline.value_or(RuleId::A1);
        const auto jr = jacobian_local_rank(p, base, l.matrix, feature_matrix(l.ds, FeatureKind::Gate, p.rescale_factor));
        std::cout << "local Jacobian rank " << jr.rank << " of " << jr.columns << " columns ("
                  << jr.effective_columns << " effective) over " << jr.rows << " two-sided menus\n";
      }
    } else if (*abl) {
      const auto l = load_all(ab_data, g);
      const auto rep = ablate(l.ds, l.matrix, l.z, ab_train.model(ab_data, g.seed), ab_plan.plan(g.seed), {}, g.threads);
      emit(g, "ablation.csv", ablation_to_csv(rep));
      emit(g, "ablation.json", ablation_to_json(rep));
      std::cout << ablation_to_csv(rep);
    } else if (*cf) {
      const auto l = load_all(cf_data, g);
      const auto model = cf_train.model(cf_data, g.seed);
      const auto rep = crossfit_topk(l.ds, l.matrix, l.z, model, cf_plan.plan(g.seed), model.train.learning_rate,
                                     parse_ks(cf_rule_ks), parse_ks(cf_family_ks), default_families(), g.threads);
      emit(g, "crossfit.csv", crossfit_to_csv(rep, model.library));
      emit(g, "crossfit.json", crossfit_to_json(rep, model.library));
      std::cout << crossfit_to_csv(rep, model.library);
    } else if (*st) {
      auto sd = st_data;
      const auto p = params_from_json(read_text(st_params));
      const auto ds = sd.load();
      const auto matrix = build_rule_matrix(ds.menus, sd.epsilon, g.threads);
      const auto z = feature_matrix(ds, FeatureKind::Gate, p.rescale_factor);
      const auto rep = comparative_statics(ds, p, matrix, z, parse_covariate(st_cov), st_bins);
      emit(g, "statics.csv", statics_to_long_csv(rep));
      emit(g, "statics.json", statics_to_json(rep));
    } else if (*rs) {
      const auto l = load_all(rs_data, g);
      validate(l.ds, true);
      const auto model = rs_train.model(rs_data, g.seed);
      const auto fitter = rule_gating_fitter(l.matrix, l.z, model, model.train.learning_rate);
      const auto rep = restrictiveness(l.ds.targets(), fitter, rs_plan.plan(g.seed), rs_perm,
                                       derive_seed(g.seed, 2), g.threads);
      emit(g, "restrictiveness.json", restrictiveness_to_json(rep));
      std::cout << "restrictiveness " << rep.ratio << " (sd " << rep.sd << ")\n";
    } else if (*pt) {
      const auto p = params_from_json(read_text(pt_params));
      const auto target = pt_data.load();
      const auto rep = portability(p, target, pt_data.epsilon);
      emit(g, "portability.json", portability_to_json(rep));
      std::cout << "MSE_menu " << rep.mse_menu << ", Brier " << rep.brier_trial << ", log-loss "
                << rep.logloss_trial << '\n';
    } else if (*syn) {
      DataArgs lib_args;
      lib_args.rules = sy_rules;
      const auto lib = lib_args.library();
      const auto base = parse_rule(sy_baseline);
      if (!base) throw Error(ErrorKind::InvalidArgument, "unknown baseline rule");
      sy.seed = g.seed;
      sy.oracle_features = syn->count("--real-features") == 0;
      const auto truth = random_truth(lib, kGateFeatureDim, *base, sy_alpha, sy_beta, derive_seed(g.seed, 3));
      const auto data = generate_synthetic(truth, sy);
      emit(g, "dataset.csv", to_canonical_csv(data.dataset));
      if (!data.dataset.trials.empty()) emit(g, "trials.csv", trials_to_csv(data.dataset));
      emit(g, "features.csv", features_to_csv(data.dataset, feature_matrix(data.dataset)));
      emit(g, "truth.json", params_to_json(truth));
      if (sy.oracle_features)
        std::cerr << "note: oracle features live in features.csv; the canonical CSV alone recomputes them\n";
    } else if (*pl) {
      const auto l = load_all(pl_data, g);
      const auto model = pl_train.model(pl_data, g.seed);
      const auto plan = pl_plan.plan(g.seed);
      const auto permuted = placebo_permute(l.matrix, l.ds.menus, pl_strata, derive_seed(g.seed, 4));
      const auto real = run_cv(l.ds, l.matrix, l.z, model, plan, g.threads);
      const auto fake = run_cv(l.ds, permuted, l.z, model, plan, g.threads);
      emit(g, "run_record.json", run_record_to_json(real));
      emit(g, "placebo_run_record.json", run_record_to_json(fake));
      emit(g, "placebo_rules.csv", permuted.to_csv());
      std::cout << "test MSE " << real.test_mse_mean << " actual, " << fake.test_mse_mean << " placebo\n";
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_validation_error(e.kind()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
