#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "shiftlab/clock.hpp"

namespace shiftlab::sim {

// ---------------------------------------------------------------------------
// Taxonomy: feature groups arranged as prefix -> group -> feature, mirroring
// a hospital data dictionary (demographics / history / index-stay sections).

enum class Prefix { demographics, history, index_stay };

std::string prefix_str(Prefix p);
Prefix parse_prefix(const std::string& s);

struct GroupSpec {
  std::string name;
  Prefix prefix = Prefix::index_stay;
  bool static_group = false;  // recorded once at admission, carried to every day
  int n_categorical = 0;
  int n_numeric = 0;
  int n_categories = 4;       // category alphabet size per categorical feature
  // Per-feature daily occurrence rate (static groups: per-encounter presence)
  // drawn uniformly from this range.
  double prevalence_lo = 0.1;
  double prevalence_hi = 0.5;
  // Numeric payloads are lognormal; per-feature median drawn from exp(U[lo,hi]).
  double log_median_lo = 0.0;
  double log_median_hi = 3.0;
  double value_sigma = 0.5;
};

struct FeatureDef {
  std::uint32_t id = 0;
  std::string name;  // "<group>/<k>"
  std::uint32_t group = 0;
  bool categorical = false;
  int n_categories = 0;
  bool static_feature = false;
};

struct Taxonomy {
  std::vector<GroupSpec> groups;
  std::vector<FeatureDef> features;

  const FeatureDef& by_name(const std::string& name) const;  // TaxonomyError if unknown
};

// ---------------------------------------------------------------------------
// Documentation-noise model (per feature group).

struct NoiseSpec {
  // Lognormal entry delay: entered_at = occurred_at + lognormal(median, sigma)
  // minutes; median 0 disables the delay entirely.
  double entry_lag_median_min = 0.0;
  double entry_lag_sigma = 0.8;
  double update_prob = 0.0;    // value-correcting revision
  double backdate_prob = 0.0;  // occurrence-time-moving revision
  double cancel_prob = 0.0;    // record deletion (terminal)
  // Revision delay after entry, uniform in days.
  double revise_delay_lo_days = 1.0;
  double revise_delay_hi_days = 30.0;
  // Backdates move occurred_at earlier by up to this many days.
  double backdate_shift_days = 2.0;
};

// ---------------------------------------------------------------------------
// Ground truth records.

enum class RevisionKind { update, backdate, cancel };

struct Payload {
  double number = 0.0;  // numeric features
  int category = -1;    // categorical features (0-based)
};

struct RevisionRecord {
  Minutes revised_at = 0;
  RevisionKind kind = RevisionKind::update;
  Payload new_value;                        // applied by update; informational otherwise
  std::optional<Minutes> new_occurred_at;   // backdate only
};

struct EventRecord {
  std::uint32_t feature = 0;
  Minutes occurred_at = 0;  // when the clinical fact happened
  Minutes entered_at = 0;   // when it landed in the source system (>= occurred_at)
  Payload value;
  std::vector<RevisionRecord> revisions;  // ordered by revised_at; nothing after a cancel
};

struct ClassCodeChange {
  Minutes at = 0;
  bool inpatient = false;
};

struct EncounterTruth {
  std::string encounter_id;
  std::string patient_id;
  Minutes admit_at = 0;
  Minutes discharge_at = 0;
  std::vector<ClassCodeChange> class_code_history;          // billing class over time
  std::vector<std::pair<Minutes, Minutes>> census_intervals;  // physically-present spans
  bool outcome_positive = false;
  std::optional<Minutes> outcome_at;
  std::optional<Minutes> prior_positive_at;  // most recent positive before admission
  std::vector<EventRecord> events;
};

// ---------------------------------------------------------------------------
// Simulation config.

struct Period {
  DayIndex start = 0;  // [start, end)
  DayIndex end = 0;
};

struct OutcomeWeight {
  std::string feature;  // taxonomy name
  int category = -1;    // categorical: match this category; numeric/-1: presence / above-median
  double weight = 0.0;
};

struct DriftSpec {
  int period = 0;         // period index the multiplier applies to
  std::string group;      // group name
  double multiplier = 1.0;  // scales per-feature occurrence rates
};

struct SimConfig {
  std::uint64_t seed = 1;
  int n_encounters = 1000;  // per period; 0 is legal and yields empty truth
  std::vector<Period> periods;
  std::vector<GroupSpec> groups;

  double los_median_days = 5.0;
  double los_sigma = 0.6;
  int los_min_days = 1;
  int los_max_days = 60;

  double class_code_flip_prob = 0.0;  // admitted under a non-inpatient code, fixed post-discharge
  double prior_positive_prob = 0.0;

  std::vector<OutcomeWeight> outcome_weights;
  std::optional<double> outcome_intercept;  // fixed logit intercept; else calibrated
  double target_prevalence = 0.007;

  std::map<std::string, NoiseSpec> noise;  // by group name; absent = clean
  std::vector<DriftSpec> drift;

  void validate() const;  // throws ConfigError
};

Taxonomy make_taxonomy(const SimConfig& cfg);
Taxonomy make_taxonomy(const std::vector<GroupSpec>& groups);

// ---------------------------------------------------------------------------
// Extraction pipelines.

enum class PipelineMode { retrospective, prospective };
enum class CohortSource { class_codes, census };

struct PipelineConfig {
  PipelineMode mode = PipelineMode::retrospective;
  // Transfer delay from source entry to pipeline visibility, uniform minutes.
  Minutes extraction_lag_lo = 0;
  Minutes extraction_lag_hi = 0;
  bool sees_revisions_after_extraction = true;
  CohortSource cohort_source = CohortSource::class_codes;
  std::set<DayIndex> outage_days;     // prospective rows lost on these dates
  Minutes daily_cutoff = 6 * 60;      // batch run time-of-day (minutes after midnight)

  static PipelineConfig retrospective_defaults();
  static PipelineConfig prospective_defaults();
  void validate() const;
};

// One pipeline's view of one encounter-day.
struct RawRow {
  std::string encounter_id;
  DayIndex date = 0;
  int day_of_stay = 0;  // 1-based
  std::vector<std::pair<std::uint32_t, Payload>> values;  // sorted by feature id
};

struct EncounterMeta {
  std::string encounter_id;
  std::string patient_id;
  Minutes admit_at = 0;
  Minutes discharge_at = 0;
  bool outcome_positive = false;
  std::optional<Minutes> outcome_at;
  std::optional<Minutes> prior_positive_at;
};

struct RawExtract {
  std::vector<EncounterMeta> encounters;
  std::vector<RawRow> rows;  // sorted by (encounter order, date)
};

std::vector<EncounterTruth> generate_truth(const SimConfig& cfg, int period_index);

// Encounters the pipeline believes are in scope at as_of.
std::vector<std::string> select_cohort(const std::vector<EncounterTruth>& truth,
                                       const PipelineConfig& pipeline, Minutes as_of);

struct ExtractOptions {
  DayIndex window_begin = INT64_MIN / 4;  // rows restricted to [begin, end)
  DayIndex window_end = INT64_MAX / 4;
  // When set, extract exactly these encounters (pairing support); otherwise
  // the pipeline's own cohort at as_of.
  std::optional<std::vector<std::string>> cohort;
};

// Materialize what `pipeline` would have seen at `as_of`. Retrospective mode
// requires as_of at/after every cohort admission and at/after the window
// start (TemporalBoundsError otherwise). `seed` keys the per-event extraction
// lag streams; lag draws depend on the event identity only, never on the
// pipeline, so equal lag ranges yield identical visibility across pipelines.
RawExtract extract(const std::vector<EncounterTruth>& truth, const Taxonomy& tax,
                   const PipelineConfig& pipeline, Minutes as_of, std::uint64_t seed,
                   const ExtractOptions& opts = {});

struct PairedExtract {
  RawExtract prospective;
  RawExtract retro_replay;  // same period & population through the retrospective pipeline
  Minutes prospective_as_of = 0;
  Minutes retro_as_of = 0;
};

// The counterfactual pairing: one period, one population (the prospective
// cohort), both pipelines. Retro replay extracts settle_days after period end.
PairedExtract build_paired_period(const SimConfig& cfg, int period_index,
                                  const PipelineConfig& prospective,
                                  const PipelineConfig& retrospective,
                                  int settle_days = 30);

}  // namespace shiftlab::sim
