#include "shiftlab/run.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <string_view>
#include <unordered_map>

#include <json.hpp>

#include "shiftlab/dataset_io.hpp"
#include "shiftlab/errors.hpp"
#include "shiftlab/gap.hpp"
#include "shiftlab/metrics.hpp"
#include "shiftlab/rng.hpp"
#include "shiftlab/version.hpp"

namespace shiftlab::run {

using nlohmann::json;

namespace {

// --------------------------------------------------------------------------
// strict config parsing

void check_keys(const json& j, const std::string& path,
                std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + path + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError("unknown config key '" + (path.empty() ? k : path + "." + k) + "'");
  }
}

template <typename T>
T req(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError("missing config key '" + path + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + path + key + "' has the wrong type");
  }
}

template <typename T>
T opt(const json& j, const std::string& path, const char* key, T def) {
  if (!j.contains(key) || j.at(key).is_null()) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + path + key + "' has the wrong type");
  }
}

std::pair<double, double> range2(const json& j, const std::string& dotted) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ConfigError("config key '" + dotted + "' must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

DayIndex date_key(const json& j, const std::string& path, const char* key) {
  const std::string s = req<std::string>(j, path, key);
  try {
    return parse_date(s);
  } catch (const Error&) {
    throw ConfigError("config key '" + path + key + "' is not a YYYY-MM-DD date");
  }
}

void apply_override(json& root, const std::string& kv) {
  const std::size_t eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set wants key=value, got '" + kv + "'");
  const std::string dotted = kv.substr(0, eq);
  const std::string text = kv.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;  // bare strings need no quotes

  json* node = &root;
  std::size_t pos = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', pos);
    const std::string part = dotted.substr(pos, dot - pos);
    if (part.empty()) throw ConfigError("--set key '" + dotted + "' has an empty segment");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

sim::GroupSpec parse_group(const json& j, const std::string& path) {
  check_keys(j, path,
             {"name", "prefix", "static", "categorical", "numeric", "categories", "prevalence",
              "log_median", "value_sigma"});
  sim::GroupSpec g;
  g.name = req<std::string>(j, path + ".", "name");
  const std::string prefix = req<std::string>(j, path + ".", "prefix");
  if (prefix == "demographics")
    g.prefix = sim::Prefix::demographics;
  else if (prefix == "history")
    g.prefix = sim::Prefix::history;
  else if (prefix == "index_stay")
    g.prefix = sim::Prefix::index_stay;
  else
    throw ConfigError("config key '" + path + ".prefix' must be demographics|history|index_stay");
  g.static_group = opt<bool>(j, path + ".", "static", false);
  g.n_categorical = opt<int>(j, path + ".", "categorical", 0);
  g.n_numeric = opt<int>(j, path + ".", "numeric", 0);
  g.n_categories = opt<int>(j, path + ".", "categories", 4);
  if (j.contains("prevalence"))
    std::tie(g.prevalence_lo, g.prevalence_hi) = range2(j["prevalence"], path + ".prevalence");
  if (j.contains("log_median"))
    std::tie(g.log_median_lo, g.log_median_hi) = range2(j["log_median"], path + ".log_median");
  g.value_sigma = opt<double>(j, path + ".", "value_sigma", 0.5);
  return g;
}

sim::NoiseSpec parse_noise(const json& j, const std::string& path) {
  check_keys(j, path,
             {"entry_lag_median_min", "entry_lag_sigma", "update_prob", "backdate_prob",
              "cancel_prob", "revise_delay_days", "backdate_shift_days"});
  sim::NoiseSpec n;
  n.entry_lag_median_min = opt<double>(j, path + ".", "entry_lag_median_min", 0.0);
  n.entry_lag_sigma = opt<double>(j, path + ".", "entry_lag_sigma", 0.8);
  n.update_prob = opt<double>(j, path + ".", "update_prob", 0.0);
  n.backdate_prob = opt<double>(j, path + ".", "backdate_prob", 0.0);
  n.cancel_prob = opt<double>(j, path + ".", "cancel_prob", 0.0);
  if (j.contains("revise_delay_days"))
    std::tie(n.revise_delay_lo_days, n.revise_delay_hi_days) =
        range2(j["revise_delay_days"], path + ".revise_delay_days");
  n.backdate_shift_days = opt<double>(j, path + ".", "backdate_shift_days", 2.0);
  return n;
}

}  // namespace

RunConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides,
                       std::optional<std::uint64_t> seed_override) {
  json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded()) throw ConfigError("config is not valid JSON");
  for (const auto& kv : overrides) apply_override(root, kv);
  if (seed_override) root["seed"] = *seed_override;

  check_keys(root, "",
             {"schema_version", "seed", "out_dir", "sim", "roles", "pipelines", "featurize",
              "train", "evaluate", "gap", "swap", "drift_test"});
  if (req<int>(root, "", "schema_version") != kSchemaVersion)
    throw ConfigError("config schema_version must be " + std::to_string(kSchemaVersion));

  RunConfig cfg;
  cfg.seed = req<std::uint64_t>(root, "", "seed");
  cfg.out_dir = opt<std::string>(root, "", "out_dir", "");

  // --- sim ---
  if (!root.contains("sim")) throw ConfigError("missing config key 'sim'");
  const json& s = root["sim"];
  check_keys(s, "sim",
             {"n_encounters", "periods", "los", "class_code_flip_prob", "prior_positive_prob",
              "target_prevalence", "outcome_intercept", "groups", "outcome_weights", "noise",
              "drift"});
  cfg.sim.seed = cfg.seed;
  cfg.sim.n_encounters = req<int>(s, "sim.", "n_encounters");

  if (!s.contains("periods") || !s["periods"].is_array() || s["periods"].empty())
    throw ConfigError("config key 'sim.periods' must be a non-empty array");
  int pi = 0;
  for (const auto& pj : s["periods"]) {
    const std::string path = "sim.periods[" + std::to_string(pi++) + "]";
    check_keys(pj, path, {"start", "end"});
    sim::Period p;
    p.start = date_key(pj, path + ".", "start");
    p.end = date_key(pj, path + ".", "end");
    cfg.sim.periods.push_back(p);
  }

  if (s.contains("los")) {
    const json& l = s["los"];
    check_keys(l, "sim.los", {"median_days", "sigma", "min_days", "max_days"});
    cfg.sim.los_median_days = opt<double>(l, "sim.los.", "median_days", cfg.sim.los_median_days);
    cfg.sim.los_sigma = opt<double>(l, "sim.los.", "sigma", cfg.sim.los_sigma);
    cfg.sim.los_min_days = opt<int>(l, "sim.los.", "min_days", cfg.sim.los_min_days);
    cfg.sim.los_max_days = opt<int>(l, "sim.los.", "max_days", cfg.sim.los_max_days);
  }
  cfg.sim.class_code_flip_prob = opt<double>(s, "sim.", "class_code_flip_prob", 0.0);
  cfg.sim.prior_positive_prob = opt<double>(s, "sim.", "prior_positive_prob", 0.0);
  cfg.sim.target_prevalence = opt<double>(s, "sim.", "target_prevalence", 0.007);
  if (s.contains("outcome_intercept") && !s["outcome_intercept"].is_null())
    cfg.sim.outcome_intercept = req<double>(s, "sim.", "outcome_intercept");

  if (!s.contains("groups") || !s["groups"].is_array() || s["groups"].empty())
    throw ConfigError("config key 'sim.groups' must be a non-empty array");
  int gi = 0;
  for (const auto& gj : s["groups"])
    cfg.sim.groups.push_back(parse_group(gj, "sim.groups[" + std::to_string(gi++) + "]"));

  if (s.contains("outcome_weights")) {
    int wi = 0;
    for (const auto& wj : s["outcome_weights"]) {
      const std::string path = "sim.outcome_weights[" + std::to_string(wi++) + "]";
      check_keys(wj, path, {"feature", "category", "weight"});
      sim::OutcomeWeight w;
      w.feature = req<std::string>(wj, path + ".", "feature");
      w.category = opt<int>(wj, path + ".", "category", -1);
      w.weight = req<double>(wj, path + ".", "weight");
      cfg.sim.outcome_weights.push_back(std::move(w));
    }
  }

  if (s.contains("noise")) {
    if (!s["noise"].is_object()) throw ConfigError("config key 'sim.noise' must be an object");
    for (const auto& [group, nj] : s["noise"].items())
      cfg.sim.noise[group] = parse_noise(nj, "sim.noise." + group);
  }

  if (s.contains("drift")) {
    int di = 0;
    for (const auto& dj : s["drift"]) {
      const std::string path = "sim.drift[" + std::to_string(di++) + "]";
      check_keys(dj, path, {"period", "group", "multiplier"});
      sim::DriftSpec d;
      d.period = req<int>(dj, path + ".", "period");
      d.group = req<std::string>(dj, path + ".", "group");
      d.multiplier = req<double>(dj, path + ".", "multiplier");
      cfg.sim.drift.push_back(std::move(d));
    }
  }

  // --- roles ---
  if (!root.contains("roles")) throw ConfigError("missing config key 'roles'");
  const json& r = root["roles"];
  check_keys(r, "roles", {"train", "retrospective", "prospective"});
  cfg.train_periods = req<std::vector<int>>(r, "roles.", "train");
  cfg.retro_period = req<int>(r, "roles.", "retrospective");
  cfg.pro_period = req<int>(r, "roles.", "prospective");

  const int n_periods = static_cast<int>(cfg.sim.periods.size());
  std::set<int> used;
  auto claim = [&](int idx, const std::string& what) {
    if (idx < 0 || idx >= n_periods)
      throw ConfigError("config: " + what + " period index " + std::to_string(idx) +
                        " is out of range (have " + std::to_string(n_periods) + " periods)");
    if (!used.insert(idx).second)
      throw ConfigError("config: period " + std::to_string(idx) + " has two roles");
  };
  if (cfg.train_periods.empty()) throw ConfigError("config: roles.train must not be empty");
  for (int t : cfg.train_periods) claim(t, "roles.train");
  claim(cfg.retro_period, "roles.retrospective");
  claim(cfg.pro_period, "roles.prospective");

  // --- pipelines ---
  cfg.retro_pipeline = sim::PipelineConfig::retrospective_defaults();
  cfg.pro_pipeline = sim::PipelineConfig::prospective_defaults();
  if (root.contains("pipelines")) {
    const json& pl = root["pipelines"];
    check_keys(pl, "pipelines", {"retrospective", "prospective"});
    if (pl.contains("retrospective")) {
      const json& rp = pl["retrospective"];
      check_keys(rp, "pipelines.retrospective", {"extraction_lag_days", "settle_days"});
      if (rp.contains("extraction_lag_days")) {
        auto [lo, hi] = range2(rp["extraction_lag_days"], "pipelines.retrospective.extraction_lag_days");
        cfg.retro_pipeline.extraction_lag_lo = static_cast<Minutes>(lo * kMinutesPerDay);
        cfg.retro_pipeline.extraction_lag_hi = static_cast<Minutes>(hi * kMinutesPerDay);
      }
      cfg.settle_days = opt<int>(rp, "pipelines.retrospective.", "settle_days", cfg.settle_days);
    }
    if (pl.contains("prospective")) {
      const json& pp = pl["prospective"];
      check_keys(pp, "pipelines.prospective",
                 {"extraction_lag_hours", "daily_cutoff_hour", "outage_dates"});
      if (pp.contains("extraction_lag_hours")) {
        auto [lo, hi] = range2(pp["extraction_lag_hours"], "pipelines.prospective.extraction_lag_hours");
        cfg.pro_pipeline.extraction_lag_lo = static_cast<Minutes>(lo * 60);
        cfg.pro_pipeline.extraction_lag_hi = static_cast<Minutes>(hi * 60);
      }
      cfg.pro_pipeline.daily_cutoff =
          static_cast<Minutes>(opt<double>(pp, "pipelines.prospective.", "daily_cutoff_hour", 6.0) * 60);
      if (pp.contains("outage_dates")) {
        for (const auto& dj : pp["outage_dates"]) {
          if (!dj.is_string())
            throw ConfigError("config key 'pipelines.prospective.outage_dates' wants date strings");
          try {
            cfg.pro_pipeline.outage_days.insert(parse_date(dj.get<std::string>()));
          } catch (const Error&) {
            throw ConfigError("config: outage date '" + dj.get<std::string>() +
                              "' is not YYYY-MM-DD");
          }
        }
      }
    }
  }
  if (cfg.settle_days < 1) throw ConfigError("config: settle_days must be >= 1");

  // --- featurize / train / evaluate / gap / swap / drift_test ---
  if (root.contains("featurize")) {
    const json& f = root["featurize"];
    check_keys(f, "featurize", {"min_encounters", "include_missing_bin"});
    cfg.featurize.min_encounters =
        opt<int>(f, "featurize.", "min_encounters", cfg.featurize.min_encounters);
    cfg.featurize.include_missing_bin =
        opt<bool>(f, "featurize.", "include_missing_bin", cfg.featurize.include_missing_bin);
  }
  if (root.contains("train")) {
    const json& t = root["train"];
    check_keys(t, "train", {"days_per_encounter", "reg_grid", "tolerance", "max_iterations"});
    cfg.train.days_per_encounter =
        opt<int>(t, "train.", "days_per_encounter", cfg.train.days_per_encounter);
    cfg.train.reg_grid = opt<std::vector<double>>(t, "train.", "reg_grid", cfg.train.reg_grid);
    cfg.train.tolerance = opt<double>(t, "train.", "tolerance", cfg.train.tolerance);
    cfg.train.max_iterations = opt<int>(t, "train.", "max_iterations", cfg.train.max_iterations);
    if (cfg.train.reg_grid.empty())
      throw ConfigError("config: train.reg_grid must not be empty");
    if (cfg.train.days_per_encounter < 1)
      throw ConfigError("config: train.days_per_encounter must be >= 1");
  }
  cfg.train.seed = cfg.seed;

  if (root.contains("evaluate")) {
    const json& e = root["evaluate"];
    check_keys(e, "evaluate", {"n_replicates", "threshold_percentile", "threshold_reference"});
    cfg.evaluate.n_replicates =
        opt<int>(e, "evaluate.", "n_replicates", cfg.evaluate.n_replicates);
    cfg.evaluate.threshold_percentile =
        opt<double>(e, "evaluate.", "threshold_percentile", cfg.evaluate.threshold_percentile);
    cfg.evaluate.threshold_reference = opt<std::string>(e, "evaluate.", "threshold_reference",
                                                        cfg.evaluate.threshold_reference);
  }
  if (cfg.evaluate.n_replicates < 1)
    throw ConfigError("config: evaluate.n_replicates must be >= 1");
  if (cfg.evaluate.threshold_reference != "retrospective" &&
      cfg.evaluate.threshold_reference != "prospective" &&
      cfg.evaluate.threshold_reference != "retro_replay")
    throw ConfigError(
        "config: evaluate.threshold_reference must be retrospective|prospective|retro_replay");

  if (root.contains("gap")) {
    check_keys(root["gap"], "gap", {"n_replicates"});
    cfg.gap.n_replicates = opt<int>(root["gap"], "gap.", "n_replicates", cfg.gap.n_replicates);
    if (cfg.gap.n_replicates < 1) throw ConfigError("config: gap.n_replicates must be >= 1");
  }
  if (root.contains("swap")) {
    check_keys(root["swap"], "swap", {"half_period"});
    cfg.swap.half_period = opt<bool>(root["swap"], "swap.", "half_period", cfg.swap.half_period);
  }
  if (root.contains("drift_test")) {
    check_keys(root["drift_test"], "drift_test", {"alpha"});
    cfg.drift.alpha = opt<double>(root["drift_test"], "drift_test.", "alpha", cfg.drift.alpha);
    if (!(cfg.drift.alpha > 0.0 && cfg.drift.alpha < 1.0))
      throw ConfigError("config: drift_test.alpha must be in (0, 1)");
  }

  cfg.sim.validate();
  cfg.retro_pipeline.validate();
  cfg.pro_pipeline.validate();

  cfg.canonical_text = root.dump();
  return cfg;
}

RunConfig load_config(const CliOptions& opts) {
  return parse_config(io::read_file(opts.config_path), opts.overrides, opts.seed);
}

std::string resolve_out_dir(const RunConfig& cfg, const CliOptions& opts) {
  if (opts.out_dir && !opts.out_dir->empty()) return *opts.out_dir;
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  if (const char* env = std::getenv("SHIFTLAB_OUT"); env && *env) return env;
  return "out";
}

std::string config_hash(const RunConfig& cfg) { return io::hash_hex(cfg.canonical_text); }

// ---------------------------------------------------------------------------
// command plumbing

namespace {

struct Paths {
  std::string out;
  std::string extracts() const { return out + "/extracts"; }
  std::string features() const { return out + "/features"; }
  std::string model_dir() const { return out + "/model"; }
  std::string scores() const { return out + "/scores"; }
  std::string reports() const { return out + "/reports"; }
};

// Every command stamps the manifest; reusing an out dir under a different
// config or seed is refused rather than silently mixed.
io::Manifest open_manifest(const RunConfig& cfg, const std::string& out_dir,
                           const std::string& command) {
  io::Manifest m = io::load_manifest(out_dir);
  const std::string h = config_hash(cfg);
  if (m.config_hash.empty()) {
    m.seed = cfg.seed;
    m.config_hash = h;
  } else if (m.config_hash != h) {
    throw ConfigError("out dir '" + out_dir + "' holds results for a different configuration (" +
                      m.config_hash + " vs " + h + "); use a fresh --out");
  } else if (m.seed != cfg.seed) {
    throw ConfigError("out dir '" + out_dir + "' holds results for seed " +
                      std::to_string(m.seed));
  }
  m.commands.push_back(command);
  return m;
}

void record_extract(io::Manifest& man, const std::string& out, const std::string& name) {
  io::manifest_record(man, out, "extracts/" + name + ".jsonl");
  io::manifest_record(man, out, "extracts/" + name + ".encounters.json");
}

void record_matrix(io::Manifest& man, const std::string& out, const std::string& name) {
  io::manifest_record(man, out, "features/" + name + ".rows.csv");
  io::manifest_record(man, out, "features/" + name + ".cells.csv");
  io::manifest_record(man, out, "features/" + name + ".columns.csv");
}

std::vector<std::string> train_set_names(const RunConfig& cfg) {
  std::vector<std::string> names;
  for (int p : cfg.train_periods) names.push_back("train_" + std::to_string(p));
  return names;
}

json ci_json(const metrics::MetricCI& c) {
  return {{"point", c.point},
          {"lo", c.lo},
          {"hi", c.hi},
          {"n_replicates", c.n_replicates},
          {"n_redrawn", c.n_redrawn}};
}

json opt_num(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json confusion_json(const metrics::Confusion& c) {
  return {{"tp", c.tp},           {"fp", c.fp},
          {"tn", c.tn},           {"fn", c.fn},
          {"sensitivity", opt_num(c.sensitivity)},
          {"specificity", opt_num(c.specificity)},
          {"ppv", opt_num(c.ppv)}};
}

json monthly_row_json(const metrics::MonthlyRow& r) {
  json j;
  j["month"] = month_str(r.month);
  j["n"] = r.n;
  j["n_pos"] = r.n_pos;
  j["value"] = r.value ? ci_json(*r.value) : json(nullptr);
  return j;
}

const metrics::MetricFn& auroc_fn() {
  static const metrics::MetricFn fn = [](std::span<const metrics::EncounterScore> s) {
    return metrics::auroc(s);
  };
  return fn;
}

const metrics::MetricFn& brier_fn() {
  static const metrics::MetricFn fn = [](std::span<const metrics::EncounterScore> s) {
    return metrics::brier(s);
  };
  return fn;
}

// --------------------------------------------------------------------------
// simulate: ground truth -> raw extracts for every role

void cmd_simulate(const RunConfig& cfg, const Paths& p, io::Manifest& man) {
  const sim::Taxonomy tax = sim::make_taxonomy(cfg.sim);
  io::write_taxonomy(p.out + "/taxonomy.json", tax);
  io::manifest_record(man, p.out, "taxonomy.json");

  json sets = json::object();
  auto write_one = [&](const std::string& name, const sim::RawExtract& ex, Minutes as_of) {
    io::write_extract(p.extracts(), name, ex, tax);
    record_extract(man, p.out, name);
    int pos = 0;
    for (const auto& e : ex.encounters) pos += e.outcome_positive ? 1 : 0;
    sets[name] = {{"n_encounters", ex.encounters.size()},
                  {"n_rows", ex.rows.size()},
                  {"n_positive", pos},
                  {"as_of", as_of},
                  {"as_of_date", date_str(day_of(as_of))}};
  };

  auto settled_extract = [&](int period_index, const std::string& name) {
    const auto truth = sim::generate_truth(cfg.sim, period_index);
    const auto& period = cfg.sim.periods[static_cast<std::size_t>(period_index)];
    const Minutes as_of = day_start(period.end + cfg.settle_days);
    sim::ExtractOptions opts;
    opts.window_begin = period.start;
    opts.window_end = period.end;
    write_one(name, sim::extract(truth, tax, cfg.retro_pipeline, as_of, cfg.seed, opts), as_of);
  };

  for (int pi : cfg.train_periods) settled_extract(pi, "train_" + std::to_string(pi));
  settled_extract(cfg.retro_period, "retro_eval");

  const auto paired = sim::build_paired_period(cfg.sim, cfg.pro_period, cfg.pro_pipeline,
                                               cfg.retro_pipeline, cfg.settle_days);
  write_one("pro_eval", paired.prospective, paired.prospective_as_of);
  write_one("retro_replay", paired.retro_replay, paired.retro_as_of);

  json rep;
  rep["schema_version"] = kSchemaVersion;
  rep["seed"] = cfg.seed;
  rep["n_features"] = tax.features.size();
  rep["sets"] = std::move(sets);
  io::write_file(p.extracts() + "/simulate.json", rep.dump(2) + "\n");
  io::manifest_record(man, p.out, "extracts/simulate.json");
}

// --------------------------------------------------------------------------
// featurize: inclusion rules + frozen codec + encoded matrices

json inclusion_json(const feat::InclusionStats& s) {
  return {{"n_encounters_in", s.n_encounters_in},
          {"n_kept", s.n_kept},
          {"n_dropped_short_stay", s.n_dropped_short_stay},
          {"n_dropped_early_positive", s.n_dropped_early_positive},
          {"n_dropped_recent_prior", s.n_dropped_recent_prior},
          {"n_rows_dropped_post_outcome", s.n_rows_dropped_post_outcome}};
}

void cmd_featurize(const RunConfig& cfg, const Paths& p, io::Manifest& man) {
  const sim::Taxonomy tax = io::read_taxonomy(p.out + "/taxonomy.json");
  json rep;
  rep["schema_version"] = kSchemaVersion;
  json inc_rep = json::object();
  json enc_rep = json::object();

  // training extracts concatenate into one matrix (ids are period-tagged)
  sim::RawExtract train_raw;
  for (const auto& name : train_set_names(cfg)) {
    auto ex = io::read_extract(p.extracts(), name, tax);
    std::move(ex.encounters.begin(), ex.encounters.end(), std::back_inserter(train_raw.encounters));
    std::move(ex.rows.begin(), ex.rows.end(), std::back_inserter(train_raw.rows));
  }
  const auto train_inc = feat::apply_inclusion(train_raw);
  inc_rep["train"] = inclusion_json(train_inc.stats);

  const feat::FeatureCodec codec = feat::fit_codec(train_inc.extract, tax, cfg.featurize);
  io::write_codec(p.features() + "/codec.json", codec);
  io::manifest_record(man, p.out, "features/codec.json");

  auto encode_one = [&](const std::string& name, const feat::InclusionResult& inc) {
    feat::EncodeReport er;
    const auto m = feat::encode_matrix(inc.extract, inc.labels, codec, &er);
    io::write_matrix(p.features(), name, m);
    record_matrix(man, p.out, name);
    int pos = 0;
    for (const auto& [id, l] : inc.labels) pos += l;
    enc_rep[name] = {{"n_rows", m.rows.size()},
                     {"n_encounters", inc.labels.size()},
                     {"n_positive", pos},
                     {"n_unseen_categories", er.n_unseen_categories},
                     {"n_missing_numeric", er.n_missing_numeric}};
  };

  encode_one("train", train_inc);
  for (const char* name : {"retro_eval", "pro_eval", "retro_replay"}) {
    const auto inc = feat::apply_inclusion(io::read_extract(p.extracts(), name, tax));
    inc_rep[name] = inclusion_json(inc.stats);
    encode_one(name, inc);
  }

  rep["inclusion"] = std::move(inc_rep);
  rep["matrices"] = std::move(enc_rep);
  rep["codec"] = {{"n_columns", codec.columns.size()},
                  {"n_dropped", codec.dropped.size()},
                  {"min_encounters", codec.options.min_encounters},
                  {"include_missing_bin", codec.options.include_missing_bin}};
  io::write_file(p.features() + "/featurize.json", rep.dump(2) + "\n");
  io::manifest_record(man, p.out, "features/featurize.json");
}

// --------------------------------------------------------------------------
// train

// Encounters clipped by the extraction window can carry fewer rows than the
// per-encounter day quota; they cannot be subsampled, so training skips them.
feat::FeatureMatrix filter_day_quota(const feat::FeatureMatrix& in, int quota, int* n_dropped) {
  std::map<std::string, int> counts;
  for (const auto& r : in.rows) counts[r.encounter_id]++;
  int dropped = 0;
  for (const auto& [_, n] : counts)
    if (n < quota) ++dropped;
  feat::FeatureMatrix out;
  out.columns = in.columns;
  for (std::size_t i = 0; i < in.rows.size(); ++i) {
    if (counts[in.rows[i].encounter_id] < quota) continue;
    out.rows.push_back(in.rows[i]);
    out.row_active.push_back(in.row_active[i]);
  }
  if (n_dropped) *n_dropped = dropped;
  return out;
}

void cmd_train(const RunConfig& cfg, const Paths& p, io::Manifest& man) {
  const auto full = io::read_matrix(p.features(), "train");
  int n_below_quota = 0;
  const auto m = filter_day_quota(full, cfg.train.days_per_encounter, &n_below_quota);
  model::CvResult cv;
  const model::RiskModel rm = model::train(m, cfg.train, &cv);
  io::write_model(p.model_dir() + "/model.json", rm);
  io::manifest_record(man, p.out, "model/model.json");

  json rep;
  rep["schema_version"] = kSchemaVersion;
  rep["chosen_lambda"] = rm.regularization;
  rep["task_years"] = rm.task_years;
  rep["n_base_columns"] = rm.base_columns.size();
  rep["days_per_encounter"] = rm.days_per_encounter;
  rep["n_encounters_below_day_quota"] = n_below_quota;
  rep["convergence"] = {{"iterations", rm.convergence.iterations},
                        {"grad_norm", rm.convergence.grad_norm},
                        {"converged", rm.convergence.converged}};
  json folds = json::array();
  for (const auto& f : cv.table)
    folds.push_back({{"lambda", f.lambda},
                     {"held_out_year", f.held_out_year},
                     {"auroc", opt_num(f.auroc)}});
  rep["cv"] = std::move(folds);
  io::write_file(p.model_dir() + "/train.json", rep.dump(2) + "\n");
  io::manifest_record(man, p.out, "model/train.json");
}

// --------------------------------------------------------------------------
// score

io::ScoredSet aggregate_scores(const feat::FeatureMatrix& m, const std::vector<double>& daily) {
  io::ScoredSet out;
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& r = m.rows[i];
    auto [it, fresh] = idx.emplace(r.encounter_id, out.size());
    if (fresh) {
      io::ScoredEncounter e;
      e.encounter_id = r.encounter_id;
      e.admit_month = r.admit_month;
      e.label = r.label;
      e.score = daily[i];
      e.n_days = 1;
      out.push_back(std::move(e));
    } else {
      auto& e = out[it->second];
      e.score = std::max(e.score, daily[i]);
      ++e.n_days;
    }
  }
  return out;
}

void cmd_score(const RunConfig& cfg, const Paths& p, io::Manifest& man) {
  (void)cfg;
  const model::RiskModel rm = io::read_model(p.model_dir() + "/model.json");
  json rep;
  rep["schema_version"] = kSchemaVersion;
  json sets = json::object();

  auto score_one = [&](const std::string& mat_name, const std::string& csv_name,
                       bool daily_log) {
    const auto m = io::read_matrix(p.features(), mat_name);
    const auto daily = model::score_rows(rm, m);
    if (daily_log) {
      std::vector<io::DailyScore> ds;
      ds.reserve(daily.size());
      for (std::size_t i = 0; i < m.rows.size(); ++i)
        ds.push_back({m.rows[i].date, m.rows[i].encounter_id, m.rows[i].day_of_stay, daily[i]});
      io::append_daily_scores(p.scores() + "/daily_prospective.csv", ds);
      io::manifest_record(man, p.out, "scores/daily_prospective.csv");
    }
    const auto agg = aggregate_scores(m, daily);
    io::write_scored_set(p.scores() + "/" + csv_name + ".csv", agg);
    io::manifest_record(man, p.out, "scores/" + csv_name + ".csv");
    int pos = 0;
    double mx = 0.0;
    for (const auto& e : agg) {
      pos += e.label;
      mx = std::max(mx, e.score);
    }
    sets[csv_name] = {{"n_encounters", agg.size()},
                      {"n_positive", pos},
                      {"n_rows", m.rows.size()},
                      {"max_score", mx}};
  };

  score_one("retro_eval", "retrospective", false);
  score_one("pro_eval", "prospective", true);
  score_one("retro_replay", "retro_replay", false);

  rep["sets"] = std::move(sets);
  io::write_file(p.scores() + "/score.json", rep.dump(2) + "\n");
  io::manifest_record(man, p.out, "scores/score.json");
}

// --------------------------------------------------------------------------
// evaluate

void cmd_evaluate(const RunConfig& cfg, const Paths& p, io::Manifest& man) {
  const std::map<std::string, metrics::ScoreSet> sets = {
      {"retrospective", io::to_score_set(io::read_scored_set(p.scores() + "/retrospective.csv"))},
      {"prospective", io::to_score_set(io::read_scored_set(p.scores() + "/prospective.csv"))},
      {"retro_replay", io::to_score_set(io::read_scored_set(p.scores() + "/retro_replay.csv"))}};

  const double threshold = metrics::percentile_threshold(
      sets.at(cfg.evaluate.threshold_reference), cfg.evaluate.threshold_percentile);

  json rep;
  rep["schema_version"] = kSchemaVersion;
  rep["n_replicates"] = cfg.evaluate.n_replicates;
  rep["threshold"] = {{"reference", cfg.evaluate.threshold_reference},
                      {"percentile", cfg.evaluate.threshold_percentile},
                      {"value", threshold}};
  json per_set = json::object();
  for (const auto& [name, ss] : sets) {
    int pos = 0;
    for (const auto& e : ss) pos += e.label;
    json j;
    j["n"] = ss.size();
    j["n_positive"] = pos;
    j["auroc"] = ci_json(metrics::bootstrap_ci(ss, auroc_fn(), cfg.evaluate.n_replicates,
                                               cfg.seed, fnv1a64("auroc:" + name)));
    j["brier"] = ci_json(metrics::bootstrap_ci(ss, brier_fn(), cfg.evaluate.n_replicates,
                                               cfg.seed, fnv1a64("brier:" + name)));
    j["confusion"] = confusion_json(metrics::confusion_at(ss, threshold));
    per_set[name] = std::move(j);
  }
  rep["sets"] = std::move(per_set);

  json monthly = json::array();
  for (const auto& row : metrics::monthly_compare(sets.at("retrospective"),
                                                  sets.at("prospective"), auroc_fn(),
                                                  cfg.evaluate.n_replicates, cfg.seed)) {
    json j;
    j["month_of_year"] = row.month;
    j["retrospective"] = row.a ? monthly_row_json(*row.a) : json(nullptr);
    j["prospective"] = row.b ? monthly_row_json(*row.b) : json(nullptr);
    j["difference"] = row.difference ? ci_json(*row.difference) : json(nullptr);
    j["significant"] = row.significant;
    monthly.push_back(std::move(j));
  }
  rep["monthly_auroc"] = std::move(monthly);

  io::write_file(p.reports() + "/evaluate.json", rep.dump(2) + "\n");
  io::manifest_record(man, p.out, "reports/evaluate.json");
}

// --------------------------------------------------------------------------
// gap

json gap_json(const gap::GapReport& g) {
  double max_resid = 0.0;
  for (std::size_t i = 0; i < g.rep_delta.size(); ++i)
    max_resid = std::max(max_resid,
                         std::abs(g.rep_delta[i] - (g.rep_delta_time[i] + g.rep_delta_infra[i])));
  return {{"measure", g.measure},
          {"negated", g.negated},
          {"retrospective", ci_json(g.p_ret)},
          {"retro_replay", ci_json(g.p_ret_replay)},
          {"prospective", ci_json(g.p_pro)},
          {"delta", ci_json(g.delta)},
          {"delta_time", ci_json(g.delta_time)},
          {"delta_infra", ci_json(g.delta_infra)},
          {"n_redrawn", g.n_redrawn},
          {"identity_max_abs_residual", max_resid}};
}

void cmd_gap(const RunConfig& cfg, const Paths& p, io::Manifest& man) {
  const auto ret = io::to_score_set(io::read_scored_set(p.scores() + "/retrospective.csv"));
  const auto replay = io::to_score_set(io::read_scored_set(p.scores() + "/retro_replay.csv"));
  const auto pro = io::to_score_set(io::read_scored_set(p.scores() + "/prospective.csv"));

  json rep;
  rep["schema_version"] = kSchemaVersion;
  rep["n_replicates"] = cfg.gap.n_replicates;
  rep["auroc"] = gap_json(gap::gap_bootstrap(ret, replay, pro, auroc_fn(), false, "auroc",
                                             cfg.gap.n_replicates, cfg.seed));
  rep["brier"] = gap_json(gap::gap_bootstrap(ret, replay, pro, brier_fn(), true, "brier",
                                             cfg.gap.n_replicates, cfg.seed));
  io::write_file(p.reports() + "/gap.json", rep.dump(2) + "\n");
  io::manifest_record(man, p.out, "reports/gap.json");
}

// --------------------------------------------------------------------------
// swap: discrepancy + attribution + concordance

json swap_json(const gap::SwapReport& s) {
  json rows = json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"group", r.group},
                    {"rollup", r.rollup},
                    {"n_columns", r.n_columns},
                    {"auroc_after", r.auroc_after},
                    {"difference", r.difference}});
  json j;
  j["baseline_auroc"] = s.baseline_auroc;
  j["retro_replay_auroc"] = s.retro_replay_auroc;
  j["date_limit"] = s.date_limit ? json(date_str(*s.date_limit)) : json(nullptr);
  j["rows"] = std::move(rows);
  return j;
}

void cmd_swap(const RunConfig& cfg, const Paths& p, io::Manifest& man) {
  const auto codec = io::read_codec(p.features() + "/codec.json");
  const auto pro_m = io::read_matrix(p.features(), "pro_eval");
  const auto replay_m = io::read_matrix(p.features(), "retro_replay");
  const auto paired = feat::align_paired(pro_m, replay_m);
  const auto rm = io::read_model(p.model_dir() + "/model.json");

  json rep;
  rep["schema_version"] = kSchemaVersion;
  rep["n_paired_rows"] = paired.pairs.size();
  rep["n_only_prospective"] = paired.only_a.size();
  rep["n_only_retro_replay"] = paired.only_b.size();

  const auto disc = gap::feature_discrepancy(pro_m, replay_m, paired, codec);
  {
    json cols = json::array();
    for (const auto& c : disc.columns)
      cols.push_back({{"column", c.column},
                      {"group", c.group},
                      {"mismatches", c.mismatches},
                      {"rate", c.rate}});
    json groups = json::array();
    for (const auto& g : disc.groups)
      groups.push_back({{"group", g.group},
                        {"n_columns", g.n_columns},
                        {"n_any", g.n_any},
                        {"mean_rate", g.mean_rate},
                        {"max_rate", g.max_rate}});
    json hist = json::array();
    for (const auto& b : disc.histogram)
      hist.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}});
    rep["discrepancy"] = {{"n_paired_rows", disc.n_paired_rows},
                          {"n_columns_any", disc.n_columns_any},
                          {"n_columns_gt_1pct", disc.n_columns_gt_1pct},
                          {"columns", std::move(cols)},
                          {"groups", std::move(groups)},
                          {"histogram", std::move(hist)}};
  }

  rep["swap"] = swap_json(gap::feature_swap(pro_m, replay_m, paired, codec, rm));
  if (cfg.swap.half_period) {
    const auto& period = cfg.sim.periods[static_cast<std::size_t>(cfg.pro_period)];
    const DayIndex mid = period.start + (period.end - period.start) / 2;
    rep["swap_first_half"] =
        swap_json(gap::feature_swap(pro_m, replay_m, paired, codec, rm, mid));
  } else {
    rep["swap_first_half"] = nullptr;
  }

  // encounter-level concordance between the paired score sets
  {
    const auto pro_s = io::read_scored_set(p.scores() + "/prospective.csv");
    const auto replay_s = io::read_scored_set(p.scores() + "/retro_replay.csv");
    std::unordered_map<std::string, const io::ScoredEncounter*> by_id;
    for (const auto& e : replay_s) by_id[e.encounter_id] = &e;
    std::vector<gap::ConcordancePair> pairs;
    for (const auto& e : pro_s) {
      auto it = by_id.find(e.encounter_id);
      if (it == by_id.end()) continue;
      gap::ConcordancePair c;
      c.encounter_id = e.encounter_id;
      c.retro_score = it->second->score;
      c.prospective_score = e.score;
      c.missing_days = std::max(0, it->second->n_days - e.n_days);
      pairs.push_back(std::move(c));
    }
    const auto conc = gap::score_concordance(std::move(pairs));
    json extreme = json::array();
    for (std::uint32_t i : conc.extreme) {
      const auto& c = conc.pairs[i];
      extreme.push_back({{"encounter_id", c.encounter_id},
                         {"retro_score", c.retro_score},
                         {"prospective_score", c.prospective_score},
                         {"missing_days", c.missing_days}});
    }
    rep["concordance"] = {{"n_pairs", conc.pairs.size()},
                          {"pearson_r", opt_num(conc.pearson_r)},
                          {"slope", opt_num(conc.slope)},
                          {"intercept", opt_num(conc.intercept)},
                          {"discordance_threshold", conc.discordance_threshold},
                          {"n_extreme", conc.extreme.size()},
                          {"extreme", std::move(extreme)}};
  }

  io::write_file(p.reports() + "/swap.json", rep.dump(2) + "\n");
  io::manifest_record(man, p.out, "reports/swap.json");
}

// --------------------------------------------------------------------------
// drift: same pipeline, different eras

void cmd_drift(const RunConfig& cfg, const Paths& p, io::Manifest& man) {
  const auto codec = io::read_codec(p.features() + "/codec.json");
  const auto a = io::read_matrix(p.features(), "retro_eval");
  const auto b = io::read_matrix(p.features(), "retro_replay");
  const auto dr = gap::temporal_drift_test(a, b, codec, cfg.drift.alpha, cfg.seed);

  json rows = json::array();
  for (const auto& r : dr.rows)
    rows.push_back({{"column", r.column},
                    {"group", r.group},
                    {"n1", r.n1},
                    {"x1", r.x1},
                    {"n2", r.n2},
                    {"x2", r.x2},
                    {"p1", r.p1},
                    {"p2", r.p2},
                    {"z", r.z},
                    {"p_value", r.p_value},
                    {"tested", r.tested},
                    {"significant", r.significant}});
  json groups = json::array();
  for (const auto& g : dr.groups)
    groups.push_back({{"group", g.group},
                      {"n_significant", g.n_significant},
                      {"n_tested", g.n_tested},
                      {"n_columns", g.n_columns}});

  json rep;
  rep["schema_version"] = kSchemaVersion;
  rep["alpha"] = dr.alpha;
  rep["d_tested"] = dr.d_tested;
  rep["threshold"] = dr.threshold;
  rep["n_skipped"] = dr.n_skipped;
  rep["rows"] = std::move(rows);
  rep["groups"] = std::move(groups);
  io::write_file(p.reports() + "/drift.json", rep.dump(2) + "\n");
  io::manifest_record(man, p.out, "reports/drift.json");
}

// --------------------------------------------------------------------------
// report: bundle everything produced so far

void cmd_report(const RunConfig& cfg, const Paths& p, io::Manifest& man) {
  auto section = [&](const std::string& rel) -> json {
    const std::string path = p.out + "/" + rel;
    if (!std::filesystem::exists(path)) return nullptr;
    json j = json::parse(io::read_file(path), nullptr, false);
    if (j.is_discarded()) throw DataError("malformed JSON in " + path);
    return j;
  };

  json bundle;
  bundle["schema_version"] = kSchemaVersion;
  bundle["tool"] = kToolName;
  bundle["version"] = kToolVersion;
  bundle["seed"] = cfg.seed;
  bundle["config_hash"] = config_hash(cfg);
  bundle["simulate"] = section("extracts/simulate.json");
  bundle["featurize"] = section("features/featurize.json");
  bundle["train"] = section("model/train.json");
  bundle["score"] = section("scores/score.json");
  bundle["evaluate"] = section("reports/evaluate.json");
  bundle["gap"] = section("reports/gap.json");
  bundle["swap"] = section("reports/swap.json");
  bundle["drift"] = section("reports/drift.json");
  bundle["files"] = man.files;
  io::write_file(p.reports() + "/bundle.json", bundle.dump(2) + "\n");
  io::manifest_record(man, p.out, "reports/bundle.json");

  // headline summary on stdout
  if (!bundle["gap"].is_null()) {
    const json& g = bundle["gap"];
    for (const char* m : {"auroc", "brier"}) {
      const json& gm = g[m];
      std::printf("%-5s  ret %.3f  replay %.3f  pro %.3f | delta %+.4f = time %+.4f + infra %+.4f\n",
                  m, gm["retrospective"]["point"].get<double>(),
                  gm["retro_replay"]["point"].get<double>(),
                  gm["prospective"]["point"].get<double>(), gm["delta"]["point"].get<double>(),
                  gm["delta_time"]["point"].get<double>(),
                  gm["delta_infra"]["point"].get<double>());
    }
  }
}

}  // namespace

void execute(const std::string& command, const RunConfig& cfg, const std::string& out_dir) {
  const Paths p{out_dir};
  io::Manifest man = open_manifest(cfg, out_dir, command);
  if (command == "simulate")
    cmd_simulate(cfg, p, man);
  else if (command == "featurize")
    cmd_featurize(cfg, p, man);
  else if (command == "train")
    cmd_train(cfg, p, man);
  else if (command == "score")
    cmd_score(cfg, p, man);
  else if (command == "evaluate")
    cmd_evaluate(cfg, p, man);
  else if (command == "gap")
    cmd_gap(cfg, p, man);
  else if (command == "swap")
    cmd_swap(cfg, p, man);
  else if (command == "drift")
    cmd_drift(cfg, p, man);
  else if (command == "report")
    cmd_report(cfg, p, man);
  else
    throw ConfigError("unknown command '" + command + "'");
  io::save_manifest(out_dir, man);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const IoError*>(&e)) return 4;
  if (dynamic_cast<const Error*>(&e)) return 3;
  return 1;
}

}  // namespace shiftlab::run
