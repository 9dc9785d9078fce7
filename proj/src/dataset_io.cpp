#include "shiftlab/dataset_io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "shiftlab/errors.hpp"
#include "shiftlab/rng.hpp"
#include "shiftlab/version.hpp"

namespace shiftlab::io {

using nlohmann::json;

std::string fmt_double(double v) {
  // Shortest %.{p}g text that parses back to exactly v.
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << data;
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::string hash_hex(const std::string& bytes) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

namespace {

json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw DataError("malformed JSON in " + what);
  return j;
}

void check_schema_version(const json& j, const std::string& what) {
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
      j["schema_version"].get<int>() != kSchemaVersion)
    throw SchemaError(what + ": unsupported or missing schema_version (want " +
                      std::to_string(kSchemaVersion) + ")");
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      out.push_back(text.substr(pos));
      break;
    }
    out.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

// Fields in our CSVs never contain commas or quotes (ids, dates, numbers).
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t c = line.find(',', pos);
    if (c == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, c - pos));
    pos = c + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw DataError(where + ": bad number '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw DataError(where + ": bad integer '" + s + "'");
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// extracts

void write_extract(const std::string& dir, const std::string& name, const sim::RawExtract& ex,
                   const sim::Taxonomy& tax) {
  std::string jsonl;
  for (const auto& row : ex.rows) {
    json j;
    j["enc"] = row.encounter_id;
    j["date"] = date_str(row.date);
    j["dos"] = row.day_of_stay;
    json vals = json::object();
    for (const auto& [fid, v] : row.values) {
      const auto& f = tax.features.at(fid);
      if (f.categorical)
        vals[f.name] = "c" + std::to_string(v.category);
      else
        vals[f.name] = v.number;
    }
    j["values"] = std::move(vals);
    jsonl += j.dump();
    jsonl += '\n';
  }
  write_file(dir + "/" + name + ".jsonl", jsonl);

  json enc = json::array();
  for (const auto& m : ex.encounters) {
    json e;
    e["id"] = m.encounter_id;
    e["patient"] = m.patient_id;
    e["admit_at"] = m.admit_at;
    e["discharge_at"] = m.discharge_at;
    e["outcome_positive"] = m.outcome_positive;
    e["outcome_at"] = m.outcome_at ? json(*m.outcome_at) : json(nullptr);
    e["prior_positive_at"] = m.prior_positive_at ? json(*m.prior_positive_at) : json(nullptr);
    enc.push_back(std::move(e));
  }
  json root;
  root["schema_version"] = kSchemaVersion;
  root["encounters"] = std::move(enc);
  write_file(dir + "/" + name + ".encounters.json", root.dump(2) + "\n");
}

sim::RawExtract read_extract(const std::string& dir, const std::string& name,
                             const sim::Taxonomy& tax) {
  const std::string rows_path = dir + "/" + name + ".jsonl";
  const std::string meta_path = dir + "/" + name + ".encounters.json";

  std::unordered_map<std::string, const sim::FeatureDef*> by_name;
  for (const auto& f : tax.features) by_name[f.name] = &f;

  sim::RawExtract ex;
  const auto lines = split_lines(read_file(rows_path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = name + ".jsonl line " + std::to_string(i + 1);
    json j = parse_json(lines[i], where);
    sim::RawRow row;
    try {
      row.encounter_id = j.at("enc").get<std::string>();
      row.date = parse_date(j.at("date").get<std::string>());
      row.day_of_stay = j.at("dos").get<int>();
      for (const auto& [fname, v] : j.at("values").items()) {
        auto it = by_name.find(fname);
        if (it == by_name.end())
          throw TaxonomyError(where + ": unknown feature '" + fname + "'");
        sim::Payload p;
        if (it->second->categorical) {
          if (!v.is_string() || v.get<std::string>().size() < 2 || v.get<std::string>()[0] != 'c')
            throw DataError(where + ": feature '" + fname + "' wants a category string");
          p.category = static_cast<int>(parse_int(v.get<std::string>().substr(1), where));
        } else {
          if (!v.is_number()) throw DataError(where + ": feature '" + fname + "' wants a number");
          p.number = v.get<double>();
        }
        row.values.emplace_back(it->second->id, p);
      }
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    std::sort(row.values.begin(), row.values.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    ex.rows.push_back(std::move(row));
  }

  json meta = parse_json(read_file(meta_path), name + ".encounters.json");
  check_schema_version(meta, name + ".encounters.json");
  try {
    for (const auto& e : meta.at("encounters")) {
      sim::EncounterMeta m;
      m.encounter_id = e.at("id").get<std::string>();
      m.patient_id = e.at("patient").get<std::string>();
      m.admit_at = e.at("admit_at").get<Minutes>();
      m.discharge_at = e.at("discharge_at").get<Minutes>();
      m.outcome_positive = e.at("outcome_positive").get<bool>();
      if (!e.at("outcome_at").is_null()) m.outcome_at = e.at("outcome_at").get<Minutes>();
      if (!e.at("prior_positive_at").is_null())
        m.prior_positive_at = e.at("prior_positive_at").get<Minutes>();
      ex.encounters.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw DataError(name + ".encounters.json: " + e.what());
  }
  return ex;
}

// ---------------------------------------------------------------------------
// taxonomy

void write_taxonomy(const std::string& path, const sim::Taxonomy& tax) {
  json groups = json::array();
  for (const auto& g : tax.groups) {
    json j;
    j["name"] = g.name;
    j["prefix"] = sim::prefix_str(g.prefix);
    j["static"] = g.static_group;
    j["categorical"] = g.n_categorical;
    j["numeric"] = g.n_numeric;
    j["categories"] = g.n_categories;
    j["prevalence"] = {g.prevalence_lo, g.prevalence_hi};
    j["log_median"] = {g.log_median_lo, g.log_median_hi};
    j["value_sigma"] = g.value_sigma;
    groups.push_back(std::move(j));
  }
  json feats = json::array();
  for (const auto& f : tax.features) {
    json j;
    j["id"] = f.id;
    j["name"] = f.name;
    j["group"] = tax.groups[f.group].name;
    j["kind"] = f.categorical ? "categorical" : "numeric";
    j["static"] = f.static_feature;
    feats.push_back(std::move(j));
  }
  json root;
  root["schema_version"] = kSchemaVersion;
  root["groups"] = std::move(groups);
  root["features"] = std::move(feats);
  write_file(path, root.dump(2) + "\n");
}

sim::Taxonomy read_taxonomy(const std::string& path) {
  json root = parse_json(read_file(path), path);
  check_schema_version(root, path);
  std::vector<sim::GroupSpec> groups;
  try {
    for (const auto& j : root.at("groups")) {
      sim::GroupSpec g;
      g.name = j.at("name").get<std::string>();
      g.prefix = sim::parse_prefix(j.at("prefix").get<std::string>());
      g.static_group = j.at("static").get<bool>();
      g.n_categorical = j.at("categorical").get<int>();
      g.n_numeric = j.at("numeric").get<int>();
      g.n_categories = j.at("categories").get<int>();
      g.prevalence_lo = j.at("prevalence").at(0).get<double>();
      g.prevalence_hi = j.at("prevalence").at(1).get<double>();
      g.log_median_lo = j.at("log_median").at(0).get<double>();
      g.log_median_hi = j.at("log_median").at(1).get<double>();
      g.value_sigma = j.at("value_sigma").get<double>();
      groups.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  sim::Taxonomy tax = sim::make_taxonomy(groups);
  // cross-check the derived feature list against the file
  if (root.contains("features")) {
    const auto& feats = root["features"];
    if (feats.size() != tax.features.size())
      throw SchemaError(path + ": feature list does not match groups");
    for (std::size_t i = 0; i < tax.features.size(); ++i)
      if (feats[i].at("name").get<std::string>() != tax.features[i].name)
        throw SchemaError(path + ": feature list does not match groups");
  }
  return tax;
}

// ---------------------------------------------------------------------------
// codec

void write_codec(const std::string& path, const feat::FeatureCodec& codec) {
  json root;
  root["schema_version"] = kSchemaVersion;
  root["options"] = {{"include_missing_bin", codec.options.include_missing_bin},
                     {"min_encounters", codec.options.min_encounters}};
  json groups = json::object();
  for (const auto& [name, prefix] : codec.group_prefix) groups[name] = sim::prefix_str(prefix);
  root["groups"] = std::move(groups);
  json specs = json::array();
  for (const auto& s : codec.specs) {
    json j;
    j["feature_id"] = s.feature;
    j["feature"] = s.feature_name;
    j["group"] = s.group;
    j["kind"] = s.categorical ? "categorical" : "numeric";
    if (s.categorical) {
      j["categories"] = s.categories;
    } else {
      j["bounds"] = s.quintile_bounds;
      j["degenerate"] = s.degenerate;
      j["missing_bin"] = s.missing_bin;
    }
    specs.push_back(std::move(j));
  }
  root["specs"] = std::move(specs);
  json cols = json::array();
  for (const auto& c : codec.columns) cols.push_back(c.id);
  root["columns"] = std::move(cols);
  root["dropped"] = codec.dropped;
  write_file(path, root.dump(2) + "\n");
}

feat::FeatureCodec read_codec(const std::string& path) {
  json root = parse_json(read_file(path), path);
  check_schema_version(root, path);
  feat::FeatureCodec codec;
  try {
    codec.options.include_missing_bin = root.at("options").at("include_missing_bin").get<bool>();
    codec.options.min_encounters = root.at("options").at("min_encounters").get<int>();
    for (const auto& [name, prefix] : root.at("groups").items())
      codec.group_prefix[name] = sim::parse_prefix(prefix.get<std::string>());
    for (const auto& j : root.at("specs")) {
      feat::FeatureSpec s;
      s.feature = j.at("feature_id").get<std::uint32_t>();
      s.feature_name = j.at("feature").get<std::string>();
      s.group = j.at("group").get<std::string>();
      s.categorical = j.at("kind").get<std::string>() == "categorical";
      if (s.categorical) {
        s.categories = j.at("categories").get<std::vector<int>>();
      } else {
        const auto& b = j.at("bounds");
        for (int i = 0; i < 4; ++i) s.quintile_bounds[static_cast<std::size_t>(i)] = b.at(i).get<double>();
        s.degenerate = j.at("degenerate").get<bool>();
        s.missing_bin = j.at("missing_bin").get<bool>();
      }
      codec.specs.push_back(std::move(s));
    }
    const auto retained = root.at("columns").get<std::vector<std::string>>();
    codec.dropped = root.at("dropped").get<std::vector<std::string>>();
    // rebuild ColumnDefs from the canonical order
    std::set<std::string> keep(retained.begin(), retained.end());
    for (auto& c : feat::canonical_columns(codec.specs))
      if (keep.count(c.id)) codec.columns.push_back(std::move(c));
    std::vector<std::string> got;
    for (const auto& c : codec.columns) got.push_back(c.id);
    if (got != retained)
      throw SchemaError(path + ": column list is not a canonical subset of the specs");
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return codec;
}

// ---------------------------------------------------------------------------
// matrices

void write_matrix(const std::string& dir, const std::string& name, const feat::FeatureMatrix& m) {
  std::string cols = "column\n";
  for (const auto& c : m.columns) cols += c + "\n";
  write_file(dir + "/" + name + ".columns.csv", cols);

  std::string rows = "encounter_id,date,day_of_stay,admit_month,label\n";
  for (const auto& r : m.rows) {
    rows += r.encounter_id;
    rows += ',';
    rows += date_str(r.date);
    rows += ',';
    rows += std::to_string(r.day_of_stay);
    rows += ',';
    rows += month_str(r.admit_month);
    rows += ',';
    rows += r.label ? '1' : '0';
    rows += '\n';
  }
  write_file(dir + "/" + name + ".rows.csv", rows);

  std::string cells = "row_key,column,value\n";
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const std::string key = m.rows[i].encounter_id + "|" + date_str(m.rows[i].date);
    for (std::uint32_t c : m.row_active[i]) {
      cells += key;
      cells += ',';
      cells += m.columns[c];
      cells += ",1\n";
    }
  }
  write_file(dir + "/" + name + ".cells.csv", cells);
}

feat::FeatureMatrix read_matrix(const std::string& dir, const std::string& name,
                                MatrixLoadReport* report) {
  feat::FeatureMatrix m;

  const std::string cols_path = dir + "/" + name + ".columns.csv";
  const auto col_lines = split_lines(read_file(cols_path));
  if (col_lines.empty() || col_lines[0] != "column")
    throw SchemaError(cols_path + ": missing 'column' header");
  std::unordered_map<std::string, std::uint32_t> col_index;
  for (std::size_t i = 1; i < col_lines.size(); ++i) {
    if (col_lines[i].empty()) continue;
    col_index.emplace(col_lines[i], static_cast<std::uint32_t>(m.columns.size()));
    m.columns.push_back(col_lines[i]);
  }

  const std::string rows_path = dir + "/" + name + ".rows.csv";
  const auto row_lines = split_lines(read_file(rows_path));
  if (row_lines.empty() || row_lines[0] != "encounter_id,date,day_of_stay,admit_month,label")
    throw SchemaError(rows_path + ": unexpected header");
  std::unordered_map<std::string, std::uint32_t> row_index;
  for (std::size_t i = 1; i < row_lines.size(); ++i) {
    if (row_lines[i].empty()) continue;
    const std::string where = rows_path + " line " + std::to_string(i + 1);
    const auto f = split_csv(row_lines[i]);
    if (f.size() != 5) throw DataError(where + ": want 5 fields");
    feat::RowMeta r;
    r.encounter_id = f[0];
    r.date = parse_date(f[1]);
    r.day_of_stay = static_cast<int>(parse_int(f[2], where));
    r.admit_month = parse_month(f[3]);
    if (f[4] != "0" && f[4] != "1") throw DataError(where + ": label must be 0 or 1");
    r.label = f[4] == "1" ? 1 : 0;
    row_index.emplace(f[0] + "|" + f[1], static_cast<std::uint32_t>(m.rows.size()));
    m.rows.push_back(std::move(r));
  }
  m.row_active.resize(m.rows.size());

  const std::string cells_path = dir + "/" + name + ".cells.csv";
  const auto cell_lines = split_lines(read_file(cells_path));
  if (cell_lines.empty() || cell_lines[0] != "row_key,column,value")
    throw SchemaError(cells_path + ": unexpected header");
  long long n_cells = 0;
  for (std::size_t i = 1; i < cell_lines.size(); ++i) {
    if (cell_lines[i].empty()) continue;
    const std::string where = cells_path + " line " + std::to_string(i + 1);
    const auto f = split_csv(cell_lines[i]);
    if (f.size() != 3) throw DataError(where + ": want 3 fields");
    if (f[2] != "1") throw DataError(where + ": cell value must be 1");
    auto rit = row_index.find(f[0]);
    if (rit == row_index.end()) throw DataError(where + ": unknown row key '" + f[0] + "'");
    auto cit = col_index.find(f[1]);
    if (cit == col_index.end()) throw DataError(where + ": unknown column '" + f[1] + "'");
    m.row_active[rit->second].push_back(cit->second);
    ++n_cells;
  }
  int all_zero = 0;
  for (auto& act : m.row_active) {
    std::sort(act.begin(), act.end());
    act.erase(std::unique(act.begin(), act.end()), act.end());
    if (act.empty()) ++all_zero;
  }
  if (report) {
    report->n_cells = n_cells;
    report->n_rows_all_zero = all_zero;
  }
  return m;
}

// ---------------------------------------------------------------------------
// model

void write_model(const std::string& path, const model::RiskModel& m) {
  json root;
  root["schema_version"] = kSchemaVersion;
  root["base_columns"] = m.base_columns;
  root["intercept"] = m.intercept;
  root["shared"] = m.shared;
  json tasks = json::array();
  for (std::size_t t = 0; t < m.task_years.size(); ++t) {
    json j;
    j["year"] = m.task_years[t];
    j["weights"] = m.task_weights[t];
    tasks.push_back(std::move(j));
  }
  root["tasks"] = std::move(tasks);
  root["regularization"] = m.regularization;
  root["seed"] = m.seed;
  root["days_per_encounter"] = m.days_per_encounter;
  root["convergence"] = {{"iterations", m.convergence.iterations},
                         {"grad_norm", m.convergence.grad_norm},
                         {"converged", m.convergence.converged}};
  write_file(path, root.dump(2) + "\n");
}

model::RiskModel read_model(const std::string& path) {
  json root = parse_json(read_file(path), path);
  check_schema_version(root, path);
  model::RiskModel m;
  try {
    m.base_columns = root.at("base_columns").get<std::vector<std::string>>();
    m.intercept = root.at("intercept").get<double>();
    m.shared = root.at("shared").get<std::vector<double>>();
    for (const auto& t : root.at("tasks")) {
      m.task_years.push_back(t.at("year").get<int>());
      m.task_weights.push_back(t.at("weights").get<std::vector<double>>());
    }
    m.regularization = root.at("regularization").get<double>();
    m.seed = root.at("seed").get<std::uint64_t>();
    m.days_per_encounter = root.at("days_per_encounter").get<int>();
    m.convergence.iterations = root.at("convergence").at("iterations").get<int>();
    m.convergence.grad_norm = root.at("convergence").at("grad_norm").get<double>();
    m.convergence.converged = root.at("convergence").at("converged").get<bool>();
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (m.shared.size() != m.base_columns.size())
    throw SchemaError(path + ": shared weight width mismatch");
  for (const auto& tw : m.task_weights)
    if (tw.size() != m.base_columns.size())
      throw SchemaError(path + ": task weight width mismatch");
  if (m.task_years.empty()) throw SchemaError(path + ": model has no tasks");
  return m;
}

// ---------------------------------------------------------------------------
// scores

void append_daily_scores(const std::string& path, const std::vector<DailyScore>& rows) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot write '" + path + "'");
  if (fresh) out << "run_date,encounter_id,day_of_stay,score\n";
  for (const auto& r : rows)
    out << date_str(r.run_date) << ',' << r.encounter_id << ',' << r.day_of_stay << ','
        << fmt_double(r.score) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<DailyScore> read_daily_scores(const std::string& path) {
  const auto lines = split_lines(read_file(path));
  if (lines.empty() || lines[0] != "run_date,encounter_id,day_of_stay,score")
    throw SchemaError(path + ": unexpected header");
  std::vector<DailyScore> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = path + " line " + std::to_string(i + 1);
    const auto f = split_csv(lines[i]);
    if (f.size() != 4) throw DataError(where + ": want 4 fields");
    DailyScore d;
    d.run_date = parse_date(f[0]);
    d.encounter_id = f[1];
    d.day_of_stay = static_cast<int>(parse_int(f[2], where));
    d.score = parse_double(f[3], where);
    out.push_back(std::move(d));
  }
  return out;
}

metrics::ScoreSet to_score_set(const ScoredSet& s) {
  metrics::ScoreSet out;
  out.reserve(s.size());
  for (const auto& e : s) out.push_back({e.encounter_id, e.admit_month, e.score, e.label});
  return out;
}

void write_scored_set(const std::string& path, const ScoredSet& s) {
  std::string text = "encounter_id,admit_month,label,score,n_days\n";
  for (const auto& e : s) {
    text += e.encounter_id;
    text += ',';
    text += month_str(e.admit_month);
    text += ',';
    text += e.label ? '1' : '0';
    text += ',';
    text += fmt_double(e.score);
    text += ',';
    text += std::to_string(e.n_days);
    text += '\n';
  }
  write_file(path, text);
}

ScoredSet read_scored_set(const std::string& path) {
  const auto lines = split_lines(read_file(path));
  if (lines.empty() || lines[0] != "encounter_id,admit_month,label,score,n_days")
    throw SchemaError(path + ": unexpected header");
  ScoredSet out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = path + " line " + std::to_string(i + 1);
    const auto f = split_csv(lines[i]);
    if (f.size() != 5) throw DataError(where + ": want 5 fields");
    ScoredEncounter e;
    e.encounter_id = f[0];
    e.admit_month = parse_month(f[1]);
    if (f[2] != "0" && f[2] != "1") throw DataError(where + ": label must be 0 or 1");
    e.label = f[2] == "1" ? 1 : 0;
    e.score = parse_double(f[3], where);
    e.n_days = static_cast<int>(parse_int(f[4], where));
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// manifest

Manifest load_manifest(const std::string& out_dir) {
  Manifest m;
  const std::string path = out_dir + "/manifest.json";
  if (!std::filesystem::exists(path)) return m;
  json root = parse_json(read_file(path), path);
  check_schema_version(root, path);
  try {
    m.seed = root.at("seed").get<std::uint64_t>();
    m.config_hash = root.at("config_hash").get<std::string>();
    for (const auto& [k, v] : root.at("files").items()) m.files[k] = v.get<std::string>();
    m.commands = root.at("commands").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return m;
}

void save_manifest(const std::string& out_dir, const Manifest& m) {
  json root;
  root["schema_version"] = kSchemaVersion;
  root["tool"] = kToolName;
  root["version"] = kToolVersion;
  root["seed"] = m.seed;
  root["config_hash"] = m.config_hash;
  root["files"] = m.files;
  root["commands"] = m.commands;
  {
    char buf[32];
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    root["generated_at"] = buf;  // the only non-reproducible field
  }
  write_file(out_dir + "/manifest.json", root.dump(2) + "\n");
}

void manifest_record(Manifest& m, const std::string& out_dir, const std::string& rel_path) {
  m.files[rel_path] = hash_hex(read_file(out_dir + "/" + rel_path));
}

}  // namespace shiftlab::io
