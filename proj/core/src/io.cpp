#include "carrm/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

#include "carrm/error.hpp"
#include "json.hpp"

namespace carrm {

using json = nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
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

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error(ErrorKind::SchemaViolation, "missing column '" + name + "'");
  }
  bool has(const std::string& name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
  }
};

CsvTable parse_table(std::string_view text) {
  CsvTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    for (auto& c : cells) c = trim(c);
    if (t.header.empty()) {
      if (!cells.empty() && cells[0].size() >= 3 && cells[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
        cells[0] = cells[0].substr(3);
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw Error(ErrorKind::ParseError, "row " + std::to_string(n) + ": expected " +
                                             std::to_string(t.header.size()) + " fields, got " +
                                             std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(n);
  }
  if (t.header.empty()) throw Error(ErrorKind::ParseError, "empty CSV");
  return t;
}

double parse_double(const std::string& s, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::ParseError, "row " + std::to_string(line) + ": not a number: '" + s + "'");
  }
}

int parse_int(const std::string& s, std::size_t line) {
  const double v = parse_double(s, line);
  if (v != std::floor(v)) throw Error(ErrorKind::ParseError, "row " + std::to_string(line) + ": not an integer: '" + s + "'");
  return static_cast<int>(v);
}

bool parse_bool(const std::string& s, std::size_t line) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (l == "1" || l == "true" || l == "1.0") return true;
  if (l == "0" || l == "false" || l == "0.0") return false;
  throw Error(ErrorKind::ParseError, "row " + std::to_string(line) + ": not a boolean: '" + s + "'");
}

std::vector<double> parse_list(const std::string& s, std::size_t line) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) out.push_back(parse_double(trim(item), line));
  if (out.empty()) throw Error(ErrorKind::ParseError, "row " + std::to_string(line) + ": empty list");
  return out;
}

Lottery lottery_at(const std::vector<double>& xs, const std::vector<double>& ps, std::size_t line) {
  try {
    return Lottery::canonicalize(xs, ps);
  } catch (const Error& e) {
    throw Error(e.kind(), "row " + std::to_string(line) + ": " + e.what());
  }
}

std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += fmt(v[i]);
  }
  return out;
}

Dataset load_canonical(const std::filesystem::path& path, const LoadOptions& opt) {
  Dataset ds = parse_canonical_csv(read_text(path), path.stem().string());
  ds.provenance["source"] = path.string();
  ds.provenance["schema"] = "canonical";
  if (!opt.trials_csv.empty()) {
    const CsvTable t = parse_table(read_text(opt.trials_csv));
    const auto c_id = t.column("menu_id");
    const auto c_y = t.column("chose_left");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ds.size(); ++i) index[ds.menus[i].id] = i;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto it = index.find(t.rows[r][c_id]);
      if (it == index.end())
        throw Error(ErrorKind::SchemaViolation, "row " + std::to_string(t.line_numbers[r]) + ": unknown menu id");
      ds.trials.push_back({it->second, parse_bool(t.rows[r][c_y], t.line_numbers[r])});
    }
  }
  return ds;
}

// Problems JSON entries are lists of pairs; the probability position is
// detected from which coordinate sums to one.
Lottery lottery_from_pairs(const json& pairs, const std::string& where) {
  if (!pairs.is_array() || pairs.empty())
    throw Error(ErrorKind::SchemaViolation, where + ": expected a list of pairs");
  std::vector<double> first, second;
  for (const auto& p : pairs) {
    if (!p.is_array() || p.size() != 2) throw Error(ErrorKind::SchemaViolation, where + ": malformed pair");
    first.push_back(p[0].get<double>());
    second.push_back(p[1].get<double>());
  }
  auto is_prob = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
      if (x < 0.0 || x > 1.0) return false;
      s += x;
    }
    return std::abs(s - 1.0) <= 1e-6;
  };
  const bool a = is_prob(first);
  const bool b = is_prob(second);
  if (a && !b) return Lottery::canonicalize(second, first);
  if (b && !a) return Lottery::canonicalize(first, second);
  if (a && b) {
    // Both readings are valid distributions; the published layout puts the
    // probability first.
    return Lottery::canonicalize(second, first);
  }
  throw Error(ErrorKind::ProbabilityNotNormalized, where + ": no coordinate sums to one");
}

Dataset load_choices13k(const std::filesystem::path& path, const LoadOptions& opt) {
  const auto problems_path = opt.problems_json.empty() ? path.parent_path() / "c13k_problems.json" : opt.problems_json;
  json problems;
  try {
    problems = json::parse(read_text(problems_path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, problems_path.string() + ": " + e.what());
  }
  const CsvTable t = parse_table(read_text(path));
  const auto c_problem = t.column("Problem");
  const auto c_feedback = t.column("Feedback");
  const auto c_n = t.column("n");
  const auto c_amb = t.column("Amb");
  const auto c_rate = t.column("bRate");

  Dataset ds;
  ds.name = "choices13k";
  ds.provenance["source"] = path.string();
  ds.provenance["problems"] = problems_path.string();
  ds.provenance["schema"] = "choices13k";
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.line_numbers[r];
    if (parse_bool(row[c_amb], line) || !parse_bool(row[c_feedback], line)) continue;
    const std::string key = std::to_string(parse_int(row[c_problem], line));
    if (!problems.contains(key))
      throw Error(ErrorKind::SchemaViolation, "row " + std::to_string(line) + ": problem " + key + " missing from problems file");
    const auto& pr = problems[key];
    if (!pr.contains("A") || !pr.contains("B"))
      throw Error(ErrorKind::SchemaViolation, "problem " + key + " lacks options A/B");
    Lottery left = lottery_from_pairs(pr["A"], "problem " + key + " option A");
    Lottery right = lottery_from_pairs(pr["B"], "problem " + key + " option B");
    const double b_rate = parse_double(row[c_rate], line);
    const int n = parse_int(row[c_n], line);
    ds.menus.push_back(make_menu("c13k_" + key, std::move(left), std::move(right), 1.0 - b_rate,
                                 n > 0 ? std::optional<int>(n) : std::nullopt));
  }
  return ds;
}

Dataset load_cpc18(const std::filesystem::path& path) {
  const CsvTable t = parse_table(read_text(path));
  const auto c_game = t.column("GameID");
  const auto c_amb = t.column("Amb");
  const auto c_b = t.column("B");
  const char* names[] = {"Ha", "pHa", "La", "Hb", "pHb", "Lb"};
  std::size_t c[6];
  for (int i = 0; i < 6; ++i) c[i] = t.column(names[i]);
  const bool shapes = t.has("LotShapeA") && t.has("LotNumA") && t.has("LotShapeB") && t.has("LotNumB");

  Dataset ds;
  ds.name = "cpc18";
  ds.provenance["source"] = path.string();
  ds.provenance["schema"] = "cpc18";
  std::map<int, std::size_t> game_index;
  std::vector<std::pair<int, int>> counts;  // (left choices, trials)
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.line_numbers[r];
    if (parse_int(row[c_amb], line) != 0) continue;
    const int game = parse_int(row[c_game], line);
    auto it = game_index.find(game);
    if (it == game_index.end()) {
      const std::string sa = shapes ? row[t.column("LotShapeA")] : "-";
      const std::string sb = shapes ? row[t.column("LotShapeB")] : "-";
      const int na = shapes ? parse_int(row[t.column("LotNumA")], line) : 1;
      const int nb = shapes ? parse_int(row[t.column("LotNumB")], line) : 1;
      Lottery left = cpc_lottery(parse_double(row[c[0]], line), parse_double(row[c[1]], line),
                                 parse_double(row[c[2]], line), sa, na);
      Lottery right = cpc_lottery(parse_double(row[c[3]], line), parse_double(row[c[4]], line),
                                  parse_double(row[c[5]], line), sb, nb);
      it = game_index.emplace(game, ds.menus.size()).first;
      ds.menus.push_back(make_menu("cpc18_" + std::to_string(game), std::move(left), std::move(right)));
      counts.emplace_back(0, 0);
    }
    const bool left = parse_int(row[c_b], line) == 0;
    ds.trials.push_back({it->second, left});
    counts[it->second].first += left ? 1 : 0;
    counts[it->second].second += 1;
  }
  for (std::size_t i = 0; i < ds.menus.size(); ++i) {
    ds.menus[i].choice_rate = static_cast<double>(counts[i].first) / counts[i].second;
    ds.menus[i].n_trials = counts[i].second;
  }
  return ds;
}

json coverage_json(const RuleCoverage& c) {
  return {{"rule", rule_name(c.rule)},
          {"n_active", c.n_active},
          {"pr_active", c.pr_active},
          {"pr_left_given_active", c.pr_left_given_active},
          {"pr_right_given_active", c.pr_right_given_active},
          {"switches", c.switches}};
}

json rules_json(const Library& lib) {
  json a = json::array();
  for (RuleId r : lib) a.push_back(std::string(rule_name(r)));
  return a;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(row);
  }
  return a;
}

// NaN and infinities are not JSON; they serialize as null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::optional<Schema> parse_schema(std::string_view name) noexcept {
  if (name == "canonical") return Schema::Canonical;
  if (name == "choices13k") return Schema::Choices13k;
  if (name == "cpc18") return Schema::Cpc18;
  return std::nullopt;
}

Lottery cpc_lottery(double high, double p_high, double low, std::string_view shape, int lot_num) {
  std::vector<double> xs;
  std::vector<double> ps;
  if (shape == "-" || shape.empty() || lot_num <= 1) {
    xs.push_back(high);
    ps.push_back(p_high);
  } else if (shape == "Symm") {
    const int k = lot_num - 1;
    double coeff = 1.0;
    for (int i = 0; i <= k; ++i) {
      xs.push_back(high - k / 2.0 + i);
      ps.push_back(p_high * coeff / std::pow(2.0, k));
      coeff = coeff * (k - i) / (i + 1);
    }
  } else if (shape == "R-skew" || shape == "L-skew") {
    const bool right = shape == "R-skew";
    const double c = right ? -1.0 - lot_num : 1.0 + lot_num;
    const double sign = right ? 1.0 : -1.0;
    for (int i = 1; i <= lot_num; ++i) {
      xs.push_back(high + c + sign * std::pow(2.0, i));
      ps.push_back(p_high / std::pow(2.0, i));
    }
    ps.back() *= 2.0;
  } else {
    throw Error(ErrorKind::SchemaViolation, "unknown lottery shape '" + std::string(shape) + "'");
  }
  if (p_high < 1.0) {
    xs.push_back(low);
    ps.push_back(1.0 - p_high);
  }
  return Lottery::canonicalize(xs, ps);
}

Dataset parse_canonical_csv(std::string_view text, std::string name) {
  const CsvTable t = parse_table(text);
  const auto c_id = t.column("menu_id");
  const auto c_lx = t.column("left_outcomes");
  const auto c_lp = t.column("left_probs");
  const auto c_rx = t.column("right_outcomes");
  const auto c_rp = t.column("right_probs");
  const bool has_n = t.has("n_trials");
  const bool has_rate = t.has("left_choice_rate");
  Dataset ds;
  ds.name = std::move(name);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.line_numbers[r];
    Lottery left = lottery_at(parse_list(row[c_lx], line), parse_list(row[c_lp], line), line);
    Lottery right = lottery_at(parse_list(row[c_rx], line), parse_list(row[c_rp], line), line);
    std::optional<int> n;
    std::optional<double> rate;
    if (has_n && !row[t.column("n_trials")].empty()) n = parse_int(row[t.column("n_trials")], line);
    if (has_rate && !row[t.column("left_choice_rate")].empty())
      rate = parse_double(row[t.column("left_choice_rate")], line);
    try {
      ds.menus.push_back(make_menu(row[c_id], std::move(left), std::move(right), rate, n));
    } catch (const Error& e) {
      throw Error(ErrorKind::SchemaViolation, "row " + std::to_string(line) + ": " + e.what());
    }
  }
  validate(ds, false);
  derive_rescale_factor(ds);
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, Schema schema, const LoadOptions& opt) {
  Dataset ds;
  switch (schema) {
    case Schema::Canonical: ds = load_canonical(path, opt); break;
    case Schema::Choices13k: ds = load_choices13k(path, opt); break;
    case Schema::Cpc18: ds = load_cpc18(path); break;
  }
  validate(ds, false);
  derive_rescale_factor(ds);
  return ds;
}

std::string to_canonical_csv(const Dataset& ds) {
  std::ostringstream out;
  out << "menu_id,left_outcomes,left_probs,right_outcomes,right_probs,n_trials,left_choice_rate\n";
  for (const auto& m : ds.menus) {
    out << m.id << ',' << join(m.left.outcomes()) << ',' << join(m.left.probs()) << ','
        << join(m.right.outcomes()) << ',' << join(m.right.probs()) << ',';
    if (m.n_trials) out << *m.n_trials;
    out << ',';
    if (m.choice_rate) out << fmt(*m.choice_rate);
    out << '\n';
  }
  return out.str();
}

std::string trials_to_csv(const Dataset& ds) {
  std::ostringstream out;
  out << "menu_id,chose_left\n";
  for (const auto& t : ds.trials) out << ds.menus[t.menu].id << ',' << (t.chose_left ? 1 : 0) << '\n';
  return out.str();
}

std::string features_to_csv(const Dataset& ds, const FeatureMatrix& z) {
  if (static_cast<std::size_t>(z.rows()) != ds.size())
    throw Error(ErrorKind::LengthMismatch, "feature rows do not match menus");
  std::ostringstream out;
  out << "menu_id";
  for (Eigen::Index j = 0; j < z.cols(); ++j) out << ",z_" << (j + 1);
  out << ",tc,risk_asym\n";
  for (std::size_t t = 0; t < ds.size(); ++t) {
    const auto c = menu_covariates(ds.menus[t]);
    out << ds.menus[t].id;
    for (Eigen::Index j = 0; j < z.cols(); ++j) out << ',' << fmt(z(static_cast<Eigen::Index>(t), j));
    out << ',' << fmt(c.tc) << ',' << fmt(c.risk_asym) << '\n';
  }
  return out.str();
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::string params_to_json(const GateParams& p) {
  json j;
  j["format"] = "carrm.gate_params";
  j["version"] = 1;
  j["rules"] = rules_json(p.rules);
  j["alpha"] = std::vector<double>(p.alpha.data(), p.alpha.data() + p.alpha.size());
  j["beta"] = matrix_json(p.beta);
  j["feature_names"] = p.feature_names;
  j["rescale_factor"] = p.rescale_factor;
  j["rescale_source"] = p.rescale_source;
  j["m_min"] = p.m_min;
  j["baseline"] = p.baseline ? json(std::string(rule_name(*p.baseline))) : json(nullptr);
  return j.dump(2);
}

GateParams params_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("gate parameters: ") + e.what());
  }
  try {
    if (j.value("format", "") != "carrm.gate_params")
      throw Error(ErrorKind::SchemaViolation, "not a gate parameter document");
    if (j.at("version").get<int>() != 1)
      throw Error(ErrorKind::SchemaViolation, "unsupported gate parameter version");
    Library rules;
    for (const auto& r : j.at("rules")) {
      const auto id = parse_rule(r.get<std::string>());
      if (!id) throw Error(ErrorKind::SchemaViolation, "unknown rule " + r.get<std::string>());
      rules.push_back(*id);
    }
    const auto alpha = j.at("alpha").get<std::vector<double>>();
    const auto beta = j.at("beta").get<std::vector<std::vector<double>>>();
    if (alpha.size() != rules.size() || beta.size() != rules.size())
      throw Error(ErrorKind::DimensionMismatch, "alpha/beta rows do not match rules");
    const std::size_t d = beta.empty() ? 0 : beta[0].size();
    GateParams p = GateParams::zeros(rules, d);
    for (std::size_t f = 0; f < rules.size(); ++f) {
      p.alpha(static_cast<Eigen::Index>(f)) = alpha[f];
      if (beta[f].size() != d) throw Error(ErrorKind::DimensionMismatch, "ragged beta");
      for (std::size_t c = 0; c < d; ++c) p.beta(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(c)) = beta[f][c];
    }
    p.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    p.rescale_factor = j.at("rescale_factor").get<double>();
    p.rescale_source = j.value("rescale_source", "");
    p.m_min = j.at("m_min").get<double>();
    if (j.contains("baseline") && !j["baseline"].is_null()) {
      const auto b = parse_rule(j["baseline"].get<std::string>());
      if (!b) throw Error(ErrorKind::SchemaViolation, "unknown baseline rule");
      p.baseline = *b;
    }
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaViolation, std::string("gate parameters: ") + e.what());
  }
}

std::string ident_report_to_json(const IdentReport& r) {
  json j;
  j["menus"] = r.menus;
  j["two_sided"] = r.two_sided;
  j["two_sided_fraction"] = r.two_sided_fraction;
  j["coverage"] = json::array();
  for (const auto& c : r.coverage) j["coverage"].push_back(coverage_json(c));
  j["cells"] = json::array();
  for (const auto& c : r.cells) {
    j["cells"].push_back({{"cell", c.cell_id}, {"exact", c.exact}, {"menus", c.menus},
                          {"two_sided_rows", c.two_sided_rows}, {"rank", c.rank},
                          {"gap", number(c.gap)}, {"qualifies", c.qualifies}, {"passes", c.passes}});
  }
  j["g1_pass_count"] = r.g1_pass_count;
  j["g1_needed"] = r.g1_needed;
  j["g2_rank"] = r.g2_rank;
  j["d_eff"] = r.d_eff;
  j["verdict"] = r.verdict;
  j["kmeans"] = {{"clusters", r.kmeans.clusters}, {"iterations", r.kmeans.iterations},
                 {"converged", r.kmeans.converged}, {"max_iterations", r.kmeans.max_iterations},
                 {"tolerance", r.kmeans.tolerance}, {"clustered_menus", r.kmeans.clustered_menus}};
  return j.dump(2);
}

std::string run_record_to_json(const RunRecord& rec) {
  json j;
  j["dataset"] = rec.dataset;
  j["config"] = {{"n_splits", rec.plan.n_splits},
                 {"train_fraction", rec.plan.train_fraction},
                 {"inner_val_fraction", rec.plan.inner_val_fraction},
                 {"seed", rec.plan.seed},
                 {"rules", rules_json(rec.model.library)},
                 {"features", rec.model.features == FeatureKind::Gate ? "gate" : "raw"},
                 {"epochs", rec.model.train.epochs},
                 {"clip_norm", rec.model.train.clip_norm},
                 {"m_min", rec.model.train.m_min},
                 {"lr_grid", rec.lr_grid}};
  j["mean_val_mse"] = rec.mean_val_mse;
  j["mean_test_mse"] = rec.mean_test_mse;
  j["selected_lr"] = rec.selected_lr;
  j["test_mse_mean"] = rec.test_mse_mean;
  j["test_mse_sd"] = rec.test_mse_sd;
  j["test_mse_w_mean"] = rec.test_mse_w_mean ? json(*rec.test_mse_w_mean) : json(nullptr);
  j["folds"] = json::array();
  for (const auto& f : rec.folds) {
    j["folds"].push_back({{"split", f.split}, {"val_mse", f.val_mse}, {"test_mse", f.test_mse},
                          {"test_mse_w", f.test_mse_w}, {"train_w", f.train_w}});
  }
  j["started"] = rec.started;
  j["finished"] = rec.finished;
  return j.dump(2);
}

std::string learning_curve_to_json(const std::vector<LearningCurvePoint>& points) {
  json j = json::array();
  for (const auto& p : points)
    j.push_back({{"fraction", p.fraction}, {"test_mse_mean", p.test_mse_mean}, {"test_mse_sd", p.test_mse_sd}});
  return j.dump(2);
}

std::string two_step_to_csv(const TwoStepFit& fit, const std::vector<double>& w_mse) {
  std::ostringstream out;
  out << "rule,w_two_step,w_two_step_se,w_mse,difference,J,dof,p\n";
  for (std::size_t f = 0; f < fit.rules.size(); ++f) {
    out << rule_name(fit.rules[f]) << ',' << fmt(fit.w[f]) << ',';
    if (!fit.w_se.empty()) out << fmt(fit.w_se[f]);
    out << ',';
    if (!w_mse.empty()) out << fmt(w_mse[f]) << ',' << fmt(fit.w[f] - w_mse[f]);
    else out << ',';
    out << ',';
    const auto& j = fit.j[f];
    if (j.defined) out << fmt(j.stat) << ',' << j.dof << ',' << fmt(j.p_value);
    else out << ",,";
    out << '\n';
  }
  return out.str();
}

std::string two_step_to_json(const TwoStepFit& fit, const std::vector<double>& w_mse) {
  json j;
  j["caveat"] =
      "Cell binning and positivity constraints place this estimate outside the exact "
      "assumptions of the consistency result; treat it as an econometric cross-check.";
  j["rules"] = rules_json(fit.rules);
  j["baseline"] = std::string(rule_name(fit.baseline));
  j["d_eff"] = fit.d_eff;
  j["cells"] = fit.cells.size();
  j["gamma"] = matrix_json(fit.gamma);
  j["gamma_se"] = matrix_json(fit.gamma_se);
  j["w_two_step"] = fit.w;
  j["w_two_step_se"] = fit.w_se;
  if (!w_mse.empty()) j["w_mse"] = w_mse;
  j["resamples"] = fit.resamples;
  j["degenerate_resample_cells"] = fit.degenerate_resample_cells;
  j["j_test"] = json::array();
  for (std::size_t f = 0; f < fit.rules.size(); ++f) {
    const auto& t = fit.j[f];
    j["j_test"].push_back({{"rule", rule_name(fit.rules[f])}, {"defined", t.defined},
                           {"stat", number(t.stat)}, {"dof", t.dof}, {"p", number(t.p_value)},
                           {"ridge", t.ridge_applied}});
  }
  j["solver"] = json::array();
  for (const auto& c : fit.cells) {
    json floor = json::array();
    for (RuleId r : c.at_floor) floor.push_back(std::string(rule_name(r)));
    j["solver"].push_back({{"cell", c.cell_id}, {"converged", c.converged},
                           {"iterations", c.iterations}, {"residual_norm", c.residual_norm},
                           {"at_floor", floor}});
  }
  return j.dump(2);
}

std::string concentration_to_json(const ConcentrationReport& rep, const Library& rules) {
  json j;
  j["hhi"] = rep.hhi;
  j["n_eff"] = rep.n_eff;
  j["w"] = json::object();
  for (std::size_t f = 0; f < rules.size() && f < rep.w.size(); ++f) j["w"][std::string(rule_name(rules[f]))] = rep.w[f];
  return j.dump(2);
}

std::string ablation_to_csv(const AblationReport& rep) {
  std::ostringstream out;
  out << "rule,phi,delta_mse,delta_se,sigma_n,n_eff_reduced\n";
  for (const auto& e : rep.entries)
    out << rule_name(e.rule) << ',' << fmt(e.phi) << ',' << fmt(e.delta_mse) << ',' << fmt(e.delta_se)
        << ',' << fmt(e.sigma_n) << ',' << fmt(e.n_eff_reduced) << '\n';
  return out.str();
}

std::string ablation_to_json(const AblationReport& rep) {
  json j;
  j["lr"] = rep.lr;
  j["full_mse"] = rep.full_mse;
  j["n_eff_full"] = rep.n_eff_full;
  j["fold_mse_full"] = rep.fold_mse_full;
  j["entries"] = json::array();
  for (const auto& e : rep.entries) {
    j["entries"].push_back({{"rule", rule_name(e.rule)}, {"phi", e.phi}, {"delta_mse", e.delta_mse},
                            {"delta_se", e.delta_se}, {"sigma_n", e.sigma_n},
                            {"n_eff_reduced", e.n_eff_reduced}, {"fold_mse", e.fold_mse_reduced},
                            {"fold_delta", e.fold_delta}});
  }
  return j.dump(2);
}

std::string statics_to_long_csv(const StaticsReport& rep) {
  std::ostringstream out;
  out << "bin,rule,mean_weight,kind\n";
  for (const auto& b : rep.bins) {
    for (std::size_t f = 0; f < rep.rules.size(); ++f)
      out << b.bin << ',' << rule_name(rep.rules[f]) << ',' << fmt(b.effective[f]) << ",effective\n";
    for (std::size_t f = 0; f < rep.rules.size(); ++f)
      out << b.bin << ',' << rule_name(rep.rules[f]) << ',' << fmt(b.latent[f]) << ",latent\n";
  }
  return out.str();
}

std::string statics_to_json(const StaticsReport& rep) {
  json j;
  j["covariate"] = rep.covariate == Covariate::TC ? "tc" : "risk_asym";
  j["rules"] = rules_json(rep.rules);
  j["degenerate"] = rep.degenerate;
  j["guard_excluded"] = rep.guard_excluded;
  j["bins"] = json::array();
  for (const auto& b : rep.bins) {
    j["bins"].push_back({{"bin", b.bin}, {"menus", b.menus}, {"guard_excluded", b.guard_excluded},
                         {"covariate_min", number(b.covariate_min)},
                         {"covariate_max", number(b.covariate_max)},
                         {"effective", b.effective}, {"latent", b.latent}});
  }
  return j.dump(2);
}

std::string restrictiveness_to_json(const RestrictivenessReport& rep) {
  json j;
  j["ratio"] = rep.ratio;
  j["sd"] = rep.sd;
  j["splits"] = rep.splits;
  j["permutations"] = rep.permutations;
  j["runs"] = rep.runs;
  return j.dump(2);
}

std::string crossfit_to_csv(const CrossfitReport& rep, const Library& rules) {
  std::ostringstream out;
  out << "mode,k,mse,retention\n";
  out << "full," << rules.size() << ',' << fmt(rep.full_mse) << ",100\n";
  for (const auto& e : rep.rules) out << "rules," << e.k << ',' << fmt(e.mse) << ',' << fmt(e.retention) << '\n';
  for (const auto& e : rep.families) out << "families," << e.k << ',' << fmt(e.mse) << ',' << fmt(e.retention) << '\n';
  return out.str();
}

std::string crossfit_to_json(const CrossfitReport& rep, const Library& rules) {
  json j;
  j["lr"] = rep.lr;
  j["full_mse"] = rep.full_mse;
  j["fold_mse_full"] = rep.fold_mse_full;
  j["rules"] = json::array();
  for (std::size_t i = 0; i < rep.rules.size(); ++i) {
    json freq = json::object();
    for (std::size_t f = 0; f < rules.size(); ++f) freq[std::string(rule_name(rules[f]))] = rep.rule_frequency[i][f];
    j["rules"].push_back({{"k", rep.rules[i].k}, {"mse", rep.rules[i].mse},
                          {"retention", rep.rules[i].retention}, {"selection_frequency", freq}});
  }
  j["families"] = json::array();
  for (std::size_t i = 0; i < rep.families.size(); ++i) {
    json freq = json::object();
    for (std::size_t f = 0; f < rep.family_names.size(); ++f) freq[rep.family_names[f]] = rep.family_frequency[i][f];
    j["families"].push_back({{"k", rep.families[i].k}, {"mse", rep.families[i].mse},
                             {"retention", rep.families[i].retention}, {"selection_frequency", freq}});
  }
  return j.dump(2);
}

std::string portability_to_json(const PortabilityReport& rep) {
  json j;
  j["mse_menu"] = rep.mse_menu;
  j["brier_trial"] = rep.brier_trial;
  j["logloss_trial"] = rep.logloss_trial;
  j["menus"] = rep.menus;
  j["trials"] = rep.trials;
  j["rescale_factor"] = rep.rescale_factor;
  j["rescale_source"] = rep.rescale_source;
  return j.dump(2);
}

}  // namespace carrm
