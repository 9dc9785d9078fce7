#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "shiftlab/clock.hpp"
#include "shiftlab/errors.hpp"
#include "shiftlab/sim.hpp"

using namespace shiftlab;

namespace {

sim::GroupSpec group(const std::string& name, sim::Prefix prefix, bool static_group, int n_cat,
                     int n_num, double prev_lo, double prev_hi) {
  sim::GroupSpec g;
  g.name = name;
  g.prefix = prefix;
  g.static_group = static_group;
  g.n_categorical = n_cat;
  g.n_numeric = n_num;
  g.prevalence_lo = prev_lo;
  g.prevalence_hi = prev_hi;
  g.log_median_lo = 1.0;
  g.log_median_hi = 2.0;
  return g;
}

sim::SimConfig base_cfg(int n_encounters) {
  sim::SimConfig c;
  c.seed = 77;
  c.n_encounters = n_encounters;
  c.periods = {{parse_date("2015-01-01"), parse_date("2015-07-01")},
               {parse_date("2015-07-01"), parse_date("2016-01-01")}};
  c.groups = {group("demo", sim::Prefix::demographics, true, 1, 0, 0.9, 1.0),
              group("labs", sim::Prefix::index_stay, false, 0, 3, 0.3, 0.6),
              group("meds", sim::Prefix::index_stay, false, 0, 2, 0.2, 0.4)};
  c.los_median_days = 4.0;
  c.los_sigma = 0.5;
  c.outcome_weights = {{"labs/0", -1, 1.5}, {"meds/0", -1, 1.0}};
  c.target_prevalence = 0.05;
  return c;
}

sim::PipelineConfig retro_lag(Minutes lo, Minutes hi) {
  auto p = sim::PipelineConfig::retrospective_defaults();
  p.extraction_lag_lo = lo;
  p.extraction_lag_hi = hi;
  return p;
}

sim::PipelineConfig pro_lag(Minutes lo, Minutes hi) {
  auto p = sim::PipelineConfig::prospective_defaults();
  p.extraction_lag_lo = lo;
  p.extraction_lag_hi = hi;
  return p;
}

using RowKey = std::pair<std::string, DayIndex>;

std::set<RowKey> row_keys(const sim::RawExtract& ex) {
  std::set<RowKey> out;
  for (const auto& r : ex.rows) out.insert({r.encounter_id, r.date});
  return out;
}

const sim::RawRow* find_row(const sim::RawExtract& ex, const std::string& id, DayIndex d) {
  for (const auto& r : ex.rows)
    if (r.encounter_id == id && r.date == d) return &r;
  return nullptr;
}

std::optional<sim::Payload> row_value(const sim::RawRow* row, std::uint32_t feature) {
  if (!row) return std::nullopt;
  for (const auto& [fid, v] : row->values)
    if (fid == feature) return v;
  return std::nullopt;
}

bool rows_equal(const sim::RawExtract& a, const sim::RawExtract& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& ra = a.rows[i];
    const auto& rb = b.rows[i];
    if (ra.encounter_id != rb.encounter_id || ra.date != rb.date ||
        ra.day_of_stay != rb.day_of_stay || ra.values.size() != rb.values.size())
      return false;
    for (std::size_t j = 0; j < ra.values.size(); ++j) {
      if (ra.values[j].first != rb.values[j].first) return false;
      if (ra.values[j].second.number != rb.values[j].second.number) return false;
      if (ra.values[j].second.category != rb.values[j].second.category) return false;
    }
  }
  return true;
}

long long total_values(const sim::RawExtract& ex) {
  long long n = 0;
  for (const auto& r : ex.rows) n += static_cast<long long>(r.values.size());
  return n;
}

}  // namespace

TEST_CASE("taxonomy assigns ids in group order with <group>/<k> names") {
  std::vector<sim::GroupSpec> gs = {group("a", sim::Prefix::history, true, 2, 1, 0.1, 0.2),
                                    group("b", sim::Prefix::index_stay, false, 0, 1, 0.1, 0.2)};
  const auto tax = sim::make_taxonomy(gs);
  REQUIRE(tax.features.size() == 4);
  CHECK(tax.features[0].name == "a/0");
  CHECK(tax.features[0].categorical);
  CHECK(tax.features[0].static_feature);
  CHECK(tax.features[2].name == "a/2");
  CHECK(!tax.features[2].categorical);
  CHECK(tax.features[3].name == "b/0");
  CHECK(tax.features[3].group == 1);
  for (std::uint32_t i = 0; i < 4; ++i) CHECK(tax.features[i].id == i);
  CHECK(tax.by_name("b/0").id == 3);
  CHECK_THROWS_AS(tax.by_name("nope/0"), TaxonomyError);
}

TEST_CASE("config validation rejects inconsistent setups") {
  auto ok = base_cfg(10);
  CHECK_NOTHROW(ok.validate());

  auto c1 = ok;
  c1.periods.clear();
  CHECK_THROWS_AS(c1.validate(), ConfigError);

  auto c2 = ok;
  c2.periods = {{100, 200}, {150, 250}};  // overlap
  CHECK_THROWS_AS(c2.validate(), ConfigError);

  auto c3 = ok;
  c3.groups[0].prevalence_lo = 1.5;
  CHECK_THROWS_AS(c3.validate(), ConfigError);

  auto c4 = ok;
  c4.noise["ghost"] = {};
  CHECK_THROWS_AS(c4.validate(), ConfigError);

  auto c5 = ok;
  c5.drift.push_back({9, "labs", 2.0});
  CHECK_THROWS_AS(c5.validate(), ConfigError);

  auto c6 = ok;
  c6.target_prevalence = 0.0;
  CHECK_THROWS_AS(c6.validate(), ConfigError);
}

TEST_CASE("truth generation and extraction are deterministic") {
  const auto cfg = base_cfg(60);
  const auto t1 = sim::generate_truth(cfg, 0);
  const auto t2 = sim::generate_truth(cfg, 0);
  REQUIRE(t1.size() == t2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1[i].encounter_id == t2[i].encounter_id);
    CHECK(t1[i].admit_at == t2[i].admit_at);
    CHECK(t1[i].discharge_at == t2[i].discharge_at);
    CHECK(t1[i].events.size() == t2[i].events.size());
    CHECK(t1[i].outcome_positive == t2[i].outcome_positive);
  }
  const auto tax = sim::make_taxonomy(cfg);
  const Minutes as_of = day_start(cfg.periods[0].end + 30);
  sim::ExtractOptions eo;
  eo.window_begin = cfg.periods[0].start;
  eo.window_end = cfg.periods[0].end;
  const auto e1 = sim::extract(t1, tax, retro_lag(1440, 3 * 1440), as_of, cfg.seed, eo);
  const auto e2 = sim::extract(t2, tax, retro_lag(1440, 3 * 1440), as_of, cfg.seed, eo);
  CHECK(rows_equal(e1, e2));
}

TEST_CASE("hand-traced stay: entry lag, update, backdate, cancel, static carry") {
  // taxonomy: demo/0 = static categorical (id 0); labs/0, labs/1 = daily
  // numerics (ids 1, 2)
  std::vector<sim::GroupSpec> gs = {group("demo", sim::Prefix::demographics, true, 1, 0, 1, 1),
                                    group("labs", sim::Prefix::index_stay, false, 0, 2, 1, 1)};
  const auto tax = sim::make_taxonomy(gs);

  sim::EncounterTruth t;
  t.encounter_id = "enc1";
  t.patient_id = "pt1";
  t.admit_at = day_start(100) + 8 * 60;
  t.discharge_at = day_start(103) + 12 * 60;
  t.class_code_history = {{t.admit_at, true}};
  t.census_intervals = {{t.admit_at, t.discharge_at}};

  auto ev = [](std::uint32_t fid, Minutes occ, Minutes entered, double num,
               int cat = -1) {
    sim::EventRecord e;
    e.feature = fid;
    e.occurred_at = occ;
    e.entered_at = entered;
    e.value.number = num;
    e.value.category = cat;
    return e;
  };

  // E0: clean same-day lab
  t.events.push_back(ev(1, day_start(100) + 600, day_start(100) + 630, 5.0));
  // E1: occurred day 101, entered day 102 09:00 (misses the day-101 snapshot)
  t.events.push_back(ev(1, day_start(101) + 540, day_start(102) + 540, 4.0));
  // E2: lab updated 7.0 -> 9.0 on day 110
  {
    auto e = ev(2, day_start(100) + 720, day_start(100) + 720, 7.0);
    sim::RevisionRecord rv;
    rv.revised_at = day_start(110);
    rv.kind = sim::RevisionKind::update;
    rv.new_value.number = 9.0;
    e.revisions.push_back(rv);
    t.events.push_back(std::move(e));
  }
  // E3: lab canceled on day 111
  {
    auto e = ev(2, day_start(102) + 480, day_start(102) + 485, 3.0);
    sim::RevisionRecord rv;
    rv.revised_at = day_start(111);
    rv.kind = sim::RevisionKind::cancel;
    e.revisions.push_back(rv);
    t.events.push_back(std::move(e));
  }
  // E4: occurred day 103, backdated to day 102 on day 112
  {
    auto e = ev(1, day_start(103) + 840, day_start(103) + 850, 8.0);
    sim::RevisionRecord rv;
    rv.revised_at = day_start(112);
    rv.kind = sim::RevisionKind::backdate;
    rv.new_occurred_at = day_start(102) + 780;
    e.revisions.push_back(rv);
    t.events.push_back(std::move(e));
  }
  // E5: static demographic, category 2
  t.events.push_back(ev(0, t.admit_at, t.admit_at, 0.0, 2));
  // E6: second day-100 lab, later occurrence wins over E0
  t.events.push_back(ev(1, day_start(100) + 660, day_start(100) + 665, 6.0));

  const std::vector<sim::EncounterTruth> truth = {t};
  sim::ExtractOptions eo;
  eo.window_begin = 90;
  eo.window_end = 200;

  const auto pro =
      sim::extract(truth, tax, pro_lag(0, 0), day_start(104) + 6 * 60, 1, eo);
  const auto retro = sim::extract(truth, tax, retro_lag(0, 0), day_start(133), 1, eo);

  REQUIRE(pro.rows.size() == 4);
  REQUIRE(retro.rows.size() == 4);
  for (int d = 0; d < 4; ++d) {
    CHECK(pro.rows[static_cast<std::size_t>(d)].date == 100 + d);
    CHECK(pro.rows[static_cast<std::size_t>(d)].day_of_stay == d + 1);
    // the static demographic rides along on every day of the stay
    CHECK(row_value(find_row(pro, "enc1", 100 + d), 0)->category == 2);
    CHECK(row_value(find_row(retro, "enc1", 100 + d), 0)->category == 2);
  }

  // day 100: both sides agree on the later lab; update only visible settled
  CHECK(row_value(find_row(pro, "enc1", 100), 1)->number == 6.0);
  CHECK(row_value(find_row(retro, "enc1", 100), 1)->number == 6.0);
  CHECK(row_value(find_row(pro, "enc1", 100), 2)->number == 7.0);
  CHECK(row_value(find_row(retro, "enc1", 100), 2)->number == 9.0);

  // day 101: the late-entered lab misses the prospective snapshot
  CHECK(!row_value(find_row(pro, "enc1", 101), 1).has_value());
  CHECK(row_value(find_row(retro, "enc1", 101), 1)->number == 4.0);

  // day 102: prospective still shows the later-canceled lab; the settled view
  // drops it and gains the backdated event instead
  CHECK(row_value(find_row(pro, "enc1", 102), 2)->number == 3.0);
  CHECK(!row_value(find_row(retro, "enc1", 102), 2).has_value());
  CHECK(!row_value(find_row(pro, "enc1", 102), 1).has_value());
  CHECK(row_value(find_row(retro, "enc1", 102), 1)->number == 8.0);

  // day 103: the backdate moves the event off this day in the settled view
  CHECK(row_value(find_row(pro, "enc1", 103), 1)->number == 8.0);
  CHECK(!row_value(find_row(retro, "enc1", 103), 1).has_value());
}

TEST_CASE("prospective rows exist only once finalized by the next batch run") {
  std::vector<sim::GroupSpec> gs = {group("labs", sim::Prefix::index_stay, false, 0, 1, 1, 1)};
  const auto tax = sim::make_taxonomy(gs);
  sim::EncounterTruth t;
  t.encounter_id = "e";
  t.patient_id = "p";
  t.admit_at = day_start(100);
  t.discharge_at = day_start(105) + 600;
  t.class_code_history = {{t.admit_at, true}};
  t.census_intervals = {{t.admit_at, t.discharge_at}};
  const std::vector<sim::EncounterTruth> truth = {t};
  sim::ExtractOptions eo;
  eo.cohort = std::vector<std::string>{"e"};

  // as_of 05:00 on day 103: the day-102 batch (06:00 on day 103) has not run
  auto ex = sim::extract(truth, tax, pro_lag(0, 0), day_start(103) + 300, 1, eo);
  CHECK(row_keys(ex) == std::set<RowKey>{{"e", 100}, {"e", 101}});
  // at 06:00 the day-102 row appears
  ex = sim::extract(truth, tax, pro_lag(0, 0), day_start(103) + 360, 1, eo);
  CHECK(row_keys(ex) == std::set<RowKey>{{"e", 100}, {"e", 101}, {"e", 102}});
}

TEST_CASE("outage days drop prospective rows and nothing else") {
  auto cfg = base_cfg(80);
  auto pro = pro_lag(0, 8 * 60);
  const DayIndex d0 = cfg.periods[1].start;
  pro.outage_days = {d0 + 10, d0 + 11, d0 + 40};
  const auto retro = retro_lag(0, 8 * 60);  // equal lag: visibility matches

  const auto pe = sim::build_paired_period(cfg, 1, pro, retro, 30);
  const auto pro_keys = row_keys(pe.prospective);
  const auto replay_keys = row_keys(pe.retro_replay);

  for (const auto& [id, d] : pro_keys) CHECK(pro.outage_days.count(d) == 0);
  // prospective rows are exactly the replay rows minus outage dates
  std::set<RowKey> expect;
  for (const auto& k : replay_keys)
    if (!pro.outage_days.count(k.second)) expect.insert(k);
  CHECK(pro_keys == expect);
  CHECK(replay_keys.size() > pro_keys.size());  // some stays crossed an outage
}

TEST_CASE("zero-noise truth through equal-lag pipelines gives identical extracts") {
  auto cfg = base_cfg(150);  // no noise map entries, no class-code flips
  const auto pe = sim::build_paired_period(cfg, 1, pro_lag(0, 0), retro_lag(0, 0), 30);
  REQUIRE(pe.prospective.encounters.size() == pe.retro_replay.encounters.size());
  for (std::size_t i = 0; i < pe.prospective.encounters.size(); ++i)
    CHECK(pe.prospective.encounters[i].encounter_id ==
          pe.retro_replay.encounters[i].encounter_id);
  CHECK(rows_equal(pe.prospective, pe.retro_replay));
  CHECK(pe.prospective_as_of == day_start(cfg.periods[1].end) + 6 * 60);
  CHECK(pe.retro_as_of == day_start(cfg.periods[1].end + 30));
}

TEST_CASE("extraction lag draws hang off event identity, not the pipeline") {
  auto cfg = base_cfg(60);
  sim::NoiseSpec lagged;
  lagged.entry_lag_median_min = 12 * 60;
  lagged.entry_lag_sigma = 1.0;
  cfg.noise["labs"] = lagged;  // no revisions, just late entry

  const auto truth = sim::generate_truth(cfg, 0);
  const auto tax = sim::make_taxonomy(cfg);
  const Minutes as_of = day_start(cfg.periods[0].end + 10);
  sim::ExtractOptions eo;
  eo.window_begin = cfg.periods[0].start;
  eo.window_end = cfg.periods[0].end;

  auto a = retro_lag(1440, 3 * 1440);
  auto b = a;
  b.sees_revisions_after_extraction = false;  // irrelevant without revisions
  const auto ea = sim::extract(truth, tax, a, as_of, cfg.seed, eo);
  const auto eb = sim::extract(truth, tax, b, as_of, cfg.seed, eo);
  CHECK(rows_equal(ea, eb));

  const auto ec = sim::extract(truth, tax, retro_lag(0, 0), as_of, cfg.seed, eo);
  CHECK(total_values(ec) >= total_values(ea));  // zero lag can only see more
  CHECK(total_values(ec) > 0);
}

TEST_CASE("settled visibility grows monotonically with as_of") {
  auto cfg = base_cfg(80);
  sim::NoiseSpec noisy;
  noisy.entry_lag_median_min = 2000;  // ~1.4 days median entry delay
  noisy.entry_lag_sigma = 1.2;
  noisy.update_prob = 0.2;  // updates replace, never remove
  cfg.noise["labs"] = noisy;
  cfg.noise["meds"] = noisy;

  const auto truth = sim::generate_truth(cfg, 0);
  const auto tax = sim::make_taxonomy(cfg);
  sim::ExtractOptions eo;
  eo.window_begin = cfg.periods[0].start;
  eo.window_end = cfg.periods[0].end;
  const auto early =
      sim::extract(truth, tax, retro_lag(0, 1440), day_start(cfg.periods[0].end + 60), cfg.seed, eo);
  const auto late =
      sim::extract(truth, tax, retro_lag(0, 1440), day_start(cfg.periods[0].end + 120), cfg.seed, eo);
  CHECK(row_keys(early) == row_keys(late));
  CHECK(total_values(late) >= total_values(early));
}

TEST_CASE("outcome prevalence calibrates to the target") {
  auto cfg = base_cfg(4000);
  const auto truth = sim::generate_truth(cfg, 0);
  int pos = 0;
  for (const auto& t : truth) {
    pos += t.outcome_positive ? 1 : 0;
    if (t.outcome_positive) {
      REQUIRE(t.outcome_at.has_value());
      CHECK(*t.outcome_at >= t.admit_at);
      CHECK(*t.outcome_at <= t.discharge_at);
    }
  }
  const double prev = static_cast<double>(pos) / 4000.0;
  CHECK(prev > 0.03);
  CHECK(prev < 0.07);

  auto fixed = cfg;
  fixed.outcome_intercept = -12.0;  // overwhelms every weight
  const auto none = sim::generate_truth(fixed, 0);
  int pos2 = 0;
  for (const auto& t : none) pos2 += t.outcome_positive ? 1 : 0;
  CHECK(pos2 < 40);
}

TEST_CASE("prior positives land before admission at the configured rate") {
  auto cfg = base_cfg(3000);
  cfg.prior_positive_prob = 0.25;
  const auto truth = sim::generate_truth(cfg, 0);
  int n_prior = 0;
  for (const auto& t : truth) {
    if (t.prior_positive_at) {
      ++n_prior;
      CHECK(*t.prior_positive_at < t.admit_at);
    }
  }
  const double frac = static_cast<double>(n_prior) / 3000.0;
  CHECK(frac > 0.21);
  CHECK(frac < 0.29);
}

TEST_CASE("class-code flips start as observation stays fixed after discharge") {
  auto cfg = base_cfg(600);
  cfg.class_code_flip_prob = 0.3;
  const auto truth = sim::generate_truth(cfg, 0);
  int flipped = 0;
  for (const auto& t : truth) {
    REQUIRE(!t.class_code_history.empty());
    if (!t.class_code_history.front().inpatient) {
      ++flipped;
      REQUIRE(t.class_code_history.size() == 2);
      CHECK(t.class_code_history.back().inpatient);
      CHECK(t.class_code_history.back().at > t.discharge_at);

      // mid-stay the billing cohort misses it; after the fix it appears
      const auto mid = sim::select_cohort({t}, retro_lag(0, 0), t.admit_at + 60);
      CHECK(mid.empty());
      const auto fixed =
          sim::select_cohort({t}, retro_lag(0, 0), t.class_code_history.back().at);
      CHECK(fixed == std::vector<std::string>{t.encounter_id});
    }
  }
  const double frac = static_cast<double>(flipped) / 600.0;
  CHECK(frac > 0.22);
  CHECK(frac < 0.38);
}

TEST_CASE("census cohort needs three distinct days seen so far") {
  sim::EncounterTruth t;
  t.encounter_id = "e";
  t.admit_at = day_start(100) + 8 * 60;
  t.discharge_at = day_start(103) + 12 * 60;
  t.class_code_history = {{t.admit_at, true}};
  t.census_intervals = {{t.admit_at, t.discharge_at}};
  const std::vector<sim::EncounterTruth> truth = {t};
  const auto pro = pro_lag(0, 0);

  CHECK(sim::select_cohort(truth, pro, day_start(101) + 600).empty());       // days 100,101
  CHECK(!sim::select_cohort(truth, pro, day_start(102) + 600).empty());     // days 100..102
  CHECK(sim::select_cohort(truth, pro, t.admit_at - kMinutesPerDay).empty());  // before admit
}

TEST_CASE("drift multipliers scale only the targeted group's event rate") {
  auto cfg = base_cfg(1200);
  cfg.drift.push_back({1, "meds", 2.0});
  const auto tax = sim::make_taxonomy(cfg);

  auto rate = [&](int period, const std::string& group_name) {
    const auto truth = sim::generate_truth(cfg, period);
    long long events = 0, days = 0;
    for (const auto& t : truth) {
      days += day_of(t.discharge_at) - day_of(t.admit_at) + 1;
      for (const auto& ev : t.events)
        if (tax.groups[tax.features[ev.feature].group].name == group_name) ++events;
    }
    return static_cast<double>(events) / static_cast<double>(days);
  };

  const double meds_ratio = rate(1, "meds") / rate(0, "meds");
  const double labs_ratio = rate(1, "labs") / rate(0, "labs");
  CHECK(meds_ratio > 1.7);
  CHECK(meds_ratio < 2.3);
  CHECK(labs_ratio > 0.9);
  CHECK(labs_ratio < 1.1);
}

TEST_CASE("retrospective extraction refuses impossible as_of") {
  auto cfg = base_cfg(20);
  const auto truth = sim::generate_truth(cfg, 0);
  const auto tax = sim::make_taxonomy(cfg);
  sim::ExtractOptions eo;
  eo.window_begin = cfg.periods[0].start;
  eo.window_end = cfg.periods[0].end;
  CHECK_THROWS_AS(
      sim::extract(truth, tax, retro_lag(0, 0), day_start(cfg.periods[0].start - 5), cfg.seed, eo),
      TemporalBoundsError);

  const Minutes day_one = day_start(cfg.periods[0].start);
  const sim::EncounterTruth* later = nullptr;
  for (const auto& t : truth)
    if (t.admit_at > day_one) later = &t;
  REQUIRE(later != nullptr);
  sim::ExtractOptions with_cohort = eo;
  with_cohort.cohort = std::vector<std::string>{later->encounter_id};
  CHECK_THROWS_AS(sim::extract(truth, tax, retro_lag(0, 0), day_one, cfg.seed, with_cohort),
                  TemporalBoundsError);
}
