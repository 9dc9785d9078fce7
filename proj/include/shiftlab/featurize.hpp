#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shiftlab/clock.hpp"
#include "shiftlab/sim.hpp"

namespace shiftlab::feat {

// ---------------------------------------------------------------------------
// Cohort inclusion, applied identically to every extract.

struct InclusionStats {
  int n_encounters_in = 0;
  int n_kept = 0;
  int n_dropped_short_stay = 0;     // calendar LOS < 3
  int n_dropped_early_positive = 0; // outcome on day-of-stay 1-2
  int n_dropped_recent_prior = 0;   // prior positive within 14 days of admission
  long long n_rows_dropped_post_outcome = 0;
};

struct InclusionResult {
  sim::RawExtract extract;                 // kept encounters, rows cut at the outcome day
  std::map<std::string, std::uint8_t> labels;  // encounter -> 0/1
  InclusionStats stats;
};

// Study-population rules: calendar LOS >= 3 days; positives on day 1-2
// excluded; a prior positive within 14 days of admission excludes the
// encounter; positive encounters keep rows through the outcome day, label 1.
// Rows whose encounter lacks metadata raise DataError. Idempotent.
InclusionResult apply_inclusion(const sim::RawExtract& in);

// ---------------------------------------------------------------------------
// Feature specs fitted on training data and frozen.

struct Options {
  bool include_missing_bin = true;  // explicit bin for missing numerics
  int min_encounters = 10;          // prune columns active in fewer training encounters
};

struct FeatureSpec {
  std::uint32_t feature = 0;
  std::string feature_name;
  std::string group;
  bool categorical = false;
  std::vector<int> categories;           // observed in training, ascending
  std::array<double, 4> quintile_bounds{};  // 20/40/60/80th training percentiles
  bool degenerate = false;               // <5 training values: missing-bin only
  bool missing_bin = false;
};

struct ColumnDef {
  std::string id;          // "<feature>:q3" | "<feature>:c2" | "<feature>:na"
  std::uint32_t feature = 0;
  std::string group;
  int bin = 0;       // quintile 1..5, category value, or -1 for the missing bin
  bool is_missing_bin = false;
};

// Frozen encoder: fitted specs + the post-prune column set.
struct FeatureCodec {
  Options options;
  std::vector<FeatureSpec> specs;        // indexed by taxonomy feature id
  std::vector<ColumnDef> columns;        // retained, in canonical order
  std::vector<std::string> dropped;      // pruned column ids
  std::map<std::string, sim::Prefix> group_prefix;

  int width() const { return static_cast<int>(columns.size()); }
  // column index by id; -1 when absent (pruned or never existed)
  int column_index(const std::string& id) const;
};

// Canonical pre-prune column order for a spec set: features by id, categories
// ascending, quintiles 1..5, then the missing bin.
std::vector<ColumnDef> canonical_columns(const std::vector<FeatureSpec>& specs);

// 20/40/60/80th percentiles with linear interpolation (shared percentile
// definition). Throws DegenerateFeatureError with fewer than 5 values.
std::array<double, 4> fit_quintile_bins(std::vector<double> values);

// Quintile of v given bounds; v <= bound lands in the lower bin.
int quintile_of(double v, const std::array<double, 4>& bounds);

struct RowMeta {
  std::string encounter_id;
  DayIndex date = 0;
  int day_of_stay = 0;
  MonthKey admit_month;
  std::uint8_t label = 0;
};

struct FeatureMatrix {
  std::vector<std::string> columns;
  std::vector<RowMeta> rows;
  std::vector<std::vector<std::uint32_t>> row_active;  // sorted column indices per row
};

struct EncodeReport {
  long long n_unseen_categories = 0;  // encoded as all-zero
  long long n_missing_numeric = 0;
};

// Fit specs on (filtered) training data, encode it, and prune columns active
// in fewer than min_encounters distinct training encounters.
FeatureCodec fit_codec(const sim::RawExtract& train, const sim::Taxonomy& tax,
                       const Options& opts);

// Encode an extract against a frozen codec. Every numeric value sets exactly
// one quintile bin; missing numerics set the missing bin (when present);
// categories unseen in training encode as all-zero and are counted.
FeatureMatrix encode_matrix(const sim::RawExtract& in,
                            const std::map<std::string, std::uint8_t>& labels,
                            const FeatureCodec& codec, EncodeReport* report = nullptr);

// Columns active in >= min_encounters distinct encounters (indices into
// matrix.columns). Exposed for oracle tests; fit_codec uses it internally.
std::vector<std::uint8_t> rare_column_mask(const FeatureMatrix& m, int min_encounters);

// ---------------------------------------------------------------------------
// Pairing of two views of the same period/population.

struct PairedIndex {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;  // (a row, b row)
  std::vector<std::uint32_t> only_a;  // rows of `a` with no partner
  std::vector<std::uint32_t> only_b;
};

// Join rows on (encounter_id, date). Column sets must match exactly
// (SchemaError otherwise).
PairedIndex align_paired(const FeatureMatrix& a, const FeatureMatrix& b);

}  // namespace shiftlab::feat
