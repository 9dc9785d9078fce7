#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "shiftlab/dataset_io.hpp"
#include "shiftlab/errors.hpp"
#include "shiftlab/run.hpp"
#include "shiftlab/sim.hpp"

using namespace shiftlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("shiftlab_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

sim::SimConfig tiny_sim() {
  sim::SimConfig c;
  c.seed = 31;
  c.n_encounters = 40;
  c.periods = {{parse_date("2015-01-01"), parse_date("2015-07-01")}};
  sim::GroupSpec demo;
  demo.name = "demo";
  demo.prefix = sim::Prefix::demographics;
  demo.static_group = true;
  demo.n_categorical = 1;
  demo.prevalence_lo = 0.9;
  demo.prevalence_hi = 1.0;
  sim::GroupSpec labs;
  labs.name = "labs";
  labs.prefix = sim::Prefix::index_stay;
  labs.n_numeric = 2;
  labs.prevalence_lo = 0.4;
  labs.prevalence_hi = 0.8;
  labs.log_median_lo = 1.0;
  labs.log_median_hi = 2.0;
  c.groups = {demo, labs};
  c.outcome_weights = {{"labs/0", -1, 1.3}};
  c.target_prevalence = 0.15;
  c.prior_positive_prob = 0.05;
  return c;
}

// the smallest config that exercises every pipeline stage
std::string mini_config() {
  return R"({
  "schema_version": 1,
  "seed": 2025,
  "sim": {
    "n_encounters": 250,
    "periods": [
      {"start": "2015-01-01", "end": "2015-05-01"},
      {"start": "2015-05-01", "end": "2015-09-01"},
      {"start": "2015-09-01", "end": "2016-01-01"}
    ],
    "los": {"median_days": 5.0, "sigma": 0.4, "min_days": 1, "max_days": 14},
    "target_prevalence": 0.12,
    "prior_positive_prob": 0.02,
    "class_code_flip_prob": 0.05,
    "groups": [
      {"name": "demo", "prefix": "demographics", "static": true, "categorical": 1,
       "categories": 4, "prevalence": [0.9, 1.0]},
      {"name": "labs", "prefix": "index_stay", "numeric": 2,
       "prevalence": [0.4, 0.7], "log_median": [1.0, 2.0]},
      {"name": "meds", "prefix": "index_stay", "numeric": 1,
       "prevalence": [0.3, 0.5], "log_median": [0.5, 1.5]}
    ],
    "outcome_weights": [
      {"feature": "labs/0", "weight": 1.4},
      {"feature": "meds/0", "weight": 0.9}
    ],
    "noise": {
      "meds": {"entry_lag_median_min": 600, "entry_lag_sigma": 0.7,
               "update_prob": 0.1, "revise_delay_days": [1, 3]}
    }
  },
  "roles": {"train": [0], "retrospective": 1, "prospective": 2},
  "pipelines": {
    "retrospective": {"extraction_lag_days": [1, 3], "settle_days": 21},
    "prospective": {"extraction_lag_hours": [1, 6], "daily_cutoff_hour": 6,
                    "outage_dates": ["2015-10-07"]}
  },
  "featurize": {"min_encounters": 3},
  "train": {"days_per_encounter": 2, "reg_grid": [0.01], "tolerance": 1e-6,
            "max_iterations": 400},
  "evaluate": {"n_replicates": 30},
  "gap": {"n_replicates": 40},
  "swap": {"half_period": true},
  "drift_test": {"alpha": 0.05}
})";
}

std::string config_with(const std::string& base, const std::string& needle,
                        const std::string& replacement) {
  std::string out = base;
  const auto pos = out.find(needle);
  REQUIRE(pos != std::string::npos);
  out.replace(pos, needle.size(), replacement);
  return out;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("float formatting round-trips exactly") {
  const double cases[] = {0.0,        -0.0,       0.1,          1.0 / 3.0,   1e-300,
                          1e300,      -12345.678, 2.2250738585072014e-308,   0.9999999999999999,
                          5e-324,     42.0,       0.007,        1.7976931348623157e308};
  for (double v : cases) {
    const std::string s = io::fmt_double(v);
    const double back = std::strtod(s.c_str(), nullptr);
    CHECK(std::memcmp(&back, &v, sizeof v) == 0);
  }
}

TEST_CASE("extracts survive a write/read round trip") {
  const auto dir = fresh_dir("extract");
  const auto cfg = tiny_sim();
  const auto tax = sim::make_taxonomy(cfg.groups);
  const auto truth = sim::generate_truth(cfg, 0);
  sim::ExtractOptions opts;
  opts.window_begin = cfg.periods[0].start;
  opts.window_end = cfg.periods[0].end;
  const auto ex = sim::extract(truth, tax, sim::PipelineConfig::retrospective_defaults(),
                               day_start(cfg.periods[0].end + 30), cfg.seed, opts);
  REQUIRE(!ex.rows.empty());

  io::write_extract(dir.string(), "roundtrip", ex, tax);
  const auto back = io::read_extract(dir.string(), "roundtrip", tax);

  REQUIRE(back.encounters.size() == ex.encounters.size());
  for (std::size_t i = 0; i < ex.encounters.size(); ++i) {
    const auto& a = ex.encounters[i];
    const auto& b = back.encounters[i];
    CHECK(a.encounter_id == b.encounter_id);
    CHECK(a.patient_id == b.patient_id);
    CHECK(a.admit_at == b.admit_at);
    CHECK(a.discharge_at == b.discharge_at);
    CHECK(a.outcome_positive == b.outcome_positive);
    CHECK(a.outcome_at == b.outcome_at);
    CHECK(a.prior_positive_at == b.prior_positive_at);
  }
  REQUIRE(back.rows.size() == ex.rows.size());
  for (std::size_t i = 0; i < ex.rows.size(); ++i) {
    const auto& a = ex.rows[i];
    const auto& b = back.rows[i];
    CHECK(a.encounter_id == b.encounter_id);
    CHECK(a.date == b.date);
    CHECK(a.day_of_stay == b.day_of_stay);
    REQUIRE(a.values.size() == b.values.size());
    for (std::size_t j = 0; j < a.values.size(); ++j) {
      CHECK(a.values[j].first == b.values[j].first);
      CHECK(a.values[j].second.number == b.values[j].second.number);
      CHECK(a.values[j].second.category == b.values[j].second.category);
    }
  }

  // a corrupt line reports its position
  const std::string rows_path = (dir / "roundtrip.jsonl").string();
  io::write_file(rows_path, io::read_file(rows_path) + "not json\n");
  try {
    io::read_extract(dir.string(), "roundtrip", tax);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(contains(e.what(), "line"));
  }
}

TEST_CASE("taxonomy and codec files round-trip with exact numerics") {
  const auto dir = fresh_dir("codec");
  const auto cfg = tiny_sim();
  const auto tax = sim::make_taxonomy(cfg.groups);
  io::write_taxonomy((dir / "taxonomy.json").string(), tax);
  const auto tax2 = io::read_taxonomy((dir / "taxonomy.json").string());
  REQUIRE(tax2.features.size() == tax.features.size());
  for (std::size_t i = 0; i < tax.features.size(); ++i) {
    CHECK(tax2.features[i].name == tax.features[i].name);
    CHECK(tax2.features[i].categorical == tax.features[i].categorical);
    CHECK(tax2.features[i].group == tax.features[i].group);
  }
  REQUIRE(tax2.groups.size() == tax.groups.size());
  CHECK(tax2.groups[1].prevalence_lo == tax.groups[1].prevalence_lo);
  CHECK(tax2.groups[1].log_median_hi == tax.groups[1].log_median_hi);

  const auto truth = sim::generate_truth(cfg, 0);
  sim::ExtractOptions opts;
  opts.window_begin = cfg.periods[0].start;
  opts.window_end = cfg.periods[0].end;
  const auto ex = sim::extract(truth, tax, sim::PipelineConfig::retrospective_defaults(),
                               day_start(cfg.periods[0].end + 30), cfg.seed, opts);
  const auto incl = feat::apply_inclusion(ex);
  feat::Options fo;
  fo.min_encounters = 2;
  const auto codec = feat::fit_codec(incl.extract, tax, fo);

  io::write_codec((dir / "codec.json").string(), codec);
  const auto codec2 = io::read_codec((dir / "codec.json").string());
  REQUIRE(codec2.columns.size() == codec.columns.size());
  for (std::size_t i = 0; i < codec.columns.size(); ++i) {
    CHECK(codec2.columns[i].id == codec.columns[i].id);
    CHECK(codec2.columns[i].feature == codec.columns[i].feature);
    CHECK(codec2.columns[i].group == codec.columns[i].group);
    CHECK(codec2.columns[i].bin == codec.columns[i].bin);
  }
  REQUIRE(codec2.specs.size() == codec.specs.size());
  for (std::size_t i = 0; i < codec.specs.size(); ++i) {
    CHECK(codec2.specs[i].categories == codec.specs[i].categories);
    for (int q = 0; q < 4; ++q)
      CHECK(codec2.specs[i].quintile_bounds[q] == codec.specs[i].quintile_bounds[q]);
    CHECK(codec2.specs[i].degenerate == codec.specs[i].degenerate);
  }
  CHECK(codec2.dropped == codec.dropped);
  CHECK(codec2.options.min_encounters == 2);

  // tampering with the retained column list breaks the canonical-order check
  json j = json::parse(io::read_file((dir / "codec.json").string()));
  std::swap(j["columns"][0], j["columns"][1]);
  io::write_file((dir / "bad.json").string(), j.dump());
  CHECK_THROWS_AS(io::read_codec((dir / "bad.json").string()), SchemaError);
}

TEST_CASE("matrices, models, and scored sets round-trip") {
  const auto dir = fresh_dir("matrix");
  const auto cfg = tiny_sim();
  const auto tax = sim::make_taxonomy(cfg.groups);
  const auto truth = sim::generate_truth(cfg, 0);
  sim::ExtractOptions opts;
  opts.window_begin = cfg.periods[0].start;
  opts.window_end = cfg.periods[0].end;
  const auto ex = sim::extract(truth, tax, sim::PipelineConfig::retrospective_defaults(),
                               day_start(cfg.periods[0].end + 30), cfg.seed, opts);
  const auto incl = feat::apply_inclusion(ex);
  feat::Options fo;
  const auto codec = feat::fit_codec(incl.extract, tax, fo);
  const auto m = feat::encode_matrix(incl.extract, incl.labels, codec, nullptr);

  io::write_matrix(dir.string(), "m", m);
  io::MatrixLoadReport lr;
  const auto m2 = io::read_matrix(dir.string(), "m", &lr);
  CHECK(m2.columns == m.columns);
  REQUIRE(m2.rows.size() == m.rows.size());
  long long cells = 0;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    CHECK(m2.rows[i].encounter_id == m.rows[i].encounter_id);
    CHECK(m2.rows[i].date == m.rows[i].date);
    CHECK(m2.rows[i].day_of_stay == m.rows[i].day_of_stay);
    CHECK(m2.rows[i].admit_month == m.rows[i].admit_month);
    CHECK(m2.rows[i].label == m.rows[i].label);
    CHECK(m2.row_active[i] == m.row_active[i]);
    cells += static_cast<long long>(m.row_active[i].size());
  }
  CHECK(lr.n_cells == cells);

  // cell values other than 1 are rejected
  const std::string cells_path = (dir / "m.cells.csv").string();
  io::write_file(cells_path, io::read_file(cells_path) + "p0-e00000|16436,demo/0:c0,2\n");
  CHECK_THROWS_AS(io::read_matrix(dir.string(), "m", nullptr), DataError);

  model::TrainConfig tc;
  tc.days_per_encounter = 1;
  tc.reg_grid = {0.02};
  tc.tolerance = 1e-6;
  tc.seed = cfg.seed;
  const auto rm = model::train(m, tc);
  io::write_model((dir / "model.json").string(), rm);
  const auto rm2 = io::read_model((dir / "model.json").string());
  CHECK(rm2.base_columns == rm.base_columns);
  CHECK(rm2.intercept == rm.intercept);
  CHECK(rm2.shared == rm.shared);
  CHECK(rm2.task_years == rm.task_years);
  CHECK(rm2.task_weights == rm.task_weights);
  CHECK(rm2.regularization == rm.regularization);
  CHECK(rm2.seed == rm.seed);
  CHECK(rm2.days_per_encounter == rm.days_per_encounter);
  CHECK(rm2.convergence.iterations == rm.convergence.iterations);
  CHECK(rm2.convergence.grad_norm == rm.convergence.grad_norm);
  CHECK(rm2.convergence.converged == rm.convergence.converged);

  io::ScoredSet ss = {{"e1", MonthKey{2015, 3}, 1, 0.75, 4}, {"e2", MonthKey{2015, 4}, 0, 0.25, 3}};
  io::write_scored_set((dir / "scored.csv").string(), ss);
  const auto ss2 = io::read_scored_set((dir / "scored.csv").string());
  REQUIRE(ss2.size() == 2);
  CHECK(ss2[0].encounter_id == "e1");
  CHECK(ss2[0].admit_month == MonthKey{2015, 3});
  CHECK(ss2[0].label == 1);
  CHECK(ss2[0].score == 0.75);
  CHECK(ss2[0].n_days == 4);
  const auto as_scores = io::to_score_set(ss2);
  CHECK(as_scores[1].score == 0.25);
  CHECK(as_scores[1].label == 0);
}

TEST_CASE("daily scores append without duplicating the header") {
  const auto dir = fresh_dir("daily");
  const std::string path = (dir / "daily.csv").string();
  io::append_daily_scores(path, {{16436, "e1", 1, 0.5}, {16436, "e2", 1, 0.25}});
  io::append_daily_scores(path, {{16437, "e1", 2, 0.625}});
  const auto rows = io::read_daily_scores(path);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].encounter_id == "e1");
  CHECK(rows[2].run_date == 16437);
  CHECK(rows[2].day_of_stay == 2);
  CHECK(rows[2].score == 0.625);
  const std::string text = io::read_file(path);
  std::size_t headers = 0, pos = 0;
  while ((pos = text.find("run_date", pos)) != std::string::npos) {
    ++headers;
    pos += 8;
  }
  CHECK(headers == 1);
}

TEST_CASE("manifest tracks content hashes and command history") {
  const auto dir = fresh_dir("manifest");
  auto man = io::load_manifest(dir.string());
  CHECK(man.files.empty());
  CHECK(man.commands.empty());

  man.seed = 7;
  man.config_hash = "00ff";
  man.commands.push_back("simulate");
  io::write_file((dir / "a" / "b.txt").string(), "hello\n");
  io::manifest_record(man, dir.string(), "a/b.txt");
  CHECK(man.files.at("a/b.txt") == io::hash_hex("hello\n"));

  io::save_manifest(dir.string(), man);
  const auto man2 = io::load_manifest(dir.string());
  CHECK(man2.seed == 7);
  CHECK(man2.config_hash == "00ff");
  CHECK(man2.files == man.files);
  CHECK(man2.commands == man.commands);
}

TEST_CASE("config parsing is strict about keys, types, and roles") {
  const std::string base = mini_config();
  const auto cfg = run::parse_config(base);
  CHECK(cfg.seed == 2025);
  CHECK(cfg.train_periods == std::vector<int>{0});
  CHECK(cfg.retro_period == 1);
  CHECK(cfg.pro_period == 2);
  CHECK(cfg.settle_days == 21);
  CHECK(cfg.retro_pipeline.extraction_lag_lo == 1 * 24 * 60);
  CHECK(cfg.retro_pipeline.extraction_lag_hi == 3 * 24 * 60);
  CHECK(cfg.pro_pipeline.extraction_lag_lo == 60);
  CHECK(cfg.pro_pipeline.extraction_lag_hi == 6 * 60);
  CHECK(cfg.pro_pipeline.outage_days.count(parse_date("2015-10-07")) == 1);
  CHECK(cfg.evaluate.n_replicates == 30);
  CHECK(cfg.evaluate.threshold_percentile == 95.0);  // default
  CHECK(cfg.gap.n_replicates == 40);
  CHECK(cfg.drift.alpha == 0.05);
  CHECK(cfg.train.seed == cfg.seed);
  CHECK(cfg.sim.seed == cfg.seed);

  auto throws_mentioning = [&](const std::string& text, const std::string& what) {
    try {
      run::parse_config(text);
      FAIL_CHECK("expected ConfigError mentioning ", what);
    } catch (const ConfigError& e) {
      CHECK(contains(e.what(), what));
    }
  };
  throws_mentioning(config_with(base, "\"swap\"", "\"swaps\""), "swaps");
  throws_mentioning(config_with(base, "\"n_encounters\"", "\"n_encounter\""), "sim.n_encounter");
  throws_mentioning(config_with(base, "\"seed\": 2025,", ""), "seed");
  throws_mentioning(config_with(base, "\"schema_version\": 1", "\"schema_version\": 99"),
                    "schema_version");
  throws_mentioning(config_with(base, "\"retrospective\": 1", "\"retrospective\": 0"), "roles");
  throws_mentioning(config_with(base, "\"prospective\": 2", "\"prospective\": 9"), "period index");
  throws_mentioning(config_with(base, "\"alpha\": 0.05", "\"alpha\": 1.5"), "alpha");
  CHECK_THROWS_AS(run::parse_config("{nope"), ConfigError);

  // overrides are applied before validation; the seed override wins
  const auto cfg2 =
      run::parse_config(base, {"train.max_iterations=7", "sim.target_prevalence=0.25"}, 99);
  CHECK(cfg2.seed == 99);
  CHECK(cfg2.train.max_iterations == 7);
  CHECK(cfg2.sim.target_prevalence == 0.25);
  CHECK(run::config_hash(cfg2) != run::config_hash(cfg));
  CHECK_THROWS_AS(run::parse_config(base, {"bogus.key=1"}), ConfigError);
  CHECK_THROWS_AS(run::parse_config(base, {"no_equals"}), ConfigError);
}

TEST_CASE("out-dir resolution prefers the command line, then config, then environment") {
  auto cfg = run::parse_config(mini_config());
  run::CliOptions opts;
  ::unsetenv("SHIFTLAB_OUT");
  CHECK(run::resolve_out_dir(cfg, opts) == "out");
  ::setenv("SHIFTLAB_OUT", "/tmp/envout", 1);
  CHECK(run::resolve_out_dir(cfg, opts) == "/tmp/envout");
  cfg.out_dir = "cfgout";
  CHECK(run::resolve_out_dir(cfg, opts) == "cfgout");
  opts.out_dir = "cliout";
  CHECK(run::resolve_out_dir(cfg, opts) == "cliout");
  ::unsetenv("SHIFTLAB_OUT");
}

TEST_CASE("the full pipeline runs end to end, reproducibly") {
  const auto cfg = run::parse_config(mini_config());
  const auto out1 = fresh_dir("run1");
  for (const auto& cmd : run::command_names()) run::execute(cmd, cfg, out1.string());

  for (const char* rel :
       {"taxonomy.json", "extracts/train_0.jsonl", "extracts/train_0.encounters.json",
        "extracts/retro_eval.jsonl", "extracts/pro_eval.jsonl", "extracts/retro_replay.jsonl",
        "extracts/simulate.json", "features/codec.json", "features/train.cells.csv",
        "features/featurize.json", "model/model.json", "model/train.json",
        "scores/retrospective.csv", "scores/prospective.csv", "scores/retro_replay.csv",
        "scores/daily_prospective.csv", "scores/score.json", "reports/evaluate.json",
        "reports/gap.json", "reports/swap.json", "reports/drift.json", "reports/bundle.json",
        "manifest.json"})
    CHECK_MESSAGE(fs::exists(out1 / rel), rel);

  const json bundle = json::parse(io::read_file((out1 / "reports" / "bundle.json").string()));
  for (const char* m : {"auroc", "brier"}) {
    const json& g = bundle["gap"][m];
    const double d = g["delta"]["point"].get<double>();
    const double dt = g["delta_time"]["point"].get<double>();
    const double di = g["delta_infra"]["point"].get<double>();
    CHECK(std::fabs(d - (dt + di)) <= 1e-12);
  }
  CHECK(bundle["train"]["convergence"]["iterations"].get<int>() > 0);
  CHECK(bundle["evaluate"].contains("monthly_auroc"));
  CHECK(bundle["swap"]["swap"]["baseline_auroc"].is_number());
  CHECK(bundle["drift"]["d_tested"].get<int>() > 0);

  // every manifest hash matches the bytes on disk
  const json man = json::parse(io::read_file((out1 / "manifest.json").string()));
  REQUIRE(man["files"].is_object());
  int audited = 0;
  for (const auto& [rel, h] : man["files"].items()) {
    CHECK(io::hash_hex(io::read_file((out1 / rel).string())) == h.get<std::string>());
    ++audited;
  }
  CHECK(audited >= 20);

  // the same config and seed reproduce the bundle byte for byte
  const auto out2 = fresh_dir("run2");
  for (const auto& cmd : run::command_names()) run::execute(cmd, cfg, out2.string());
  CHECK(io::read_file((out1 / "reports" / "bundle.json").string()) ==
        io::read_file((out2 / "reports" / "bundle.json").string()));

  // an out dir claimed by one seed refuses another
  const auto other = run::parse_config(mini_config(), {}, 4242);
  CHECK_THROWS_AS(run::execute("simulate", other, out1.string()), ConfigError);

  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("exit codes map the error taxonomy") {
  CHECK(run::exit_code_for(ConfigError("x")) == 2);
  CHECK(run::exit_code_for(IoError("x")) == 4);
  CHECK(run::exit_code_for(DataError("x")) == 3);
  CHECK(run::exit_code_for(SchemaError("x")) == 3);
  CHECK(run::exit_code_for(std::runtime_error("x")) == 1);
}
