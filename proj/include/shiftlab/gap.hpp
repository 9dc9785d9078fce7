#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shiftlab/featurize.hpp"
#include "shiftlab/metrics.hpp"
#include "shiftlab/model.hpp"

namespace shiftlab::gap {

// ---------------------------------------------------------------------------
// Gap decomposition. With s = -1 for lower-is-better measures (negate=true):
//   delta       = s * (p_ret - p_pro)         total retrospective->prospective gap
//   delta_time  = s * (p_ret - p_ret_replay)  population/era component
//   delta_infra = s * (p_ret_replay - p_pro)  pipeline component
// delta == delta_time + delta_infra exactly.

struct GapCore {
  double delta = 0.0;
  double delta_time = 0.0;
  double delta_infra = 0.0;
};

GapCore performance_gap(double p_ret, double p_ret_replay, double p_pro, bool negate);

struct GapReport {
  std::string measure;
  bool negated = false;
  metrics::MetricCI p_ret, p_ret_replay, p_pro;
  metrics::MetricCI delta, delta_time, delta_infra;
  int n_redrawn = 0;
  // per-replicate values, kept for identity checks and plotting
  std::vector<double> rep_delta, rep_delta_time, rep_delta_infra;
};

// Joint bootstrap of the three-way decomposition: replicate k resamples each
// of the three score sets from its own (seed, tag) stream, evaluates the
// metric on all three, and re-derives the decomposition. Undefined metrics on
// any set redraw the replicate (counted).
GapReport gap_bootstrap(const metrics::ScoreSet& ret, const metrics::ScoreSet& ret_replay,
                        const metrics::ScoreSet& pro, const metrics::MetricFn& fn, bool negate,
                        const std::string& measure, int n_replicates, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Encounter-level score concordance between the paired pipelines.

struct ConcordancePair {
  std::string encounter_id;
  double retro_score = 0.0;
  double prospective_score = 0.0;
  int missing_days = 0;  // days scored retrospectively but absent prospectively
};

struct ConcordanceReport {
  std::vector<ConcordancePair> pairs;
  std::optional<double> pearson_r;
  std::optional<double> slope;      // least squares, prospective on retrospective
  std::optional<double> intercept;
  double discordance_threshold = 0.5;
  std::vector<std::uint32_t> extreme;  // indices into pairs with |diff| >= threshold
};

ConcordanceReport score_concordance(std::vector<ConcordancePair> pairs,
                                    double discordance_threshold = 0.5);

// ---------------------------------------------------------------------------
// Paired row-level disagreement of encoded features.

struct ColumnDiscrepancy {
  std::string column;
  std::string group;
  long long mismatches = 0;
  double rate = 0.0;
};

struct GroupDiscrepancy {
  std::string group;
  int n_columns = 0;
  int n_any = 0;       // columns with at least one mismatch
  double mean_rate = 0.0;
  double max_rate = 0.0;
};

struct HistogramBin {
  double lo = 0.0, hi = 0.0;  // (lo, hi]; the first bin is exactly zero
  int count = 0;
};

struct DiscrepancyReport {
  long long n_paired_rows = 0;
  std::vector<ColumnDiscrepancy> columns;
  std::vector<GroupDiscrepancy> groups;
  std::vector<HistogramBin> histogram;
  int n_columns_any = 0;      // >= 1 mismatch
  int n_columns_gt_1pct = 0;  // rate > 1%
};

DiscrepancyReport feature_discrepancy(const feat::FeatureMatrix& pro,
                                      const feat::FeatureMatrix& retro_replay,
                                      const feat::PairedIndex& paired,
                                      const feat::FeatureCodec& codec);

// ---------------------------------------------------------------------------
// Feature-swap attribution: rescore prospective rows with one group's columns
// replaced by their retrospective-replay values; AUROC recovery localizes the
// infrastructure gap.

struct SwapRow {
  std::string group;       // leaf group, "Demographics"/"Hx"/"Idx" roll-up, or "(all)"
  bool rollup = false;
  int n_columns = 0;
  double auroc_after = 0.0;
  double difference = 0.0;  // auroc_after - baseline
};

struct SwapReport {
  double baseline_auroc = 0.0;      // prospective paired rows, unswapped
  double retro_replay_auroc = 0.0;  // all columns swapped
  std::optional<DayIndex> date_limit;
  std::vector<SwapRow> rows;        // sorted by difference, descending
};

// date_limit (exclusive) restricts the paired universe to earlier rows — the
// half-period interim variant. Labels come from the prospective matrix.
SwapReport feature_swap(const feat::FeatureMatrix& pro, const feat::FeatureMatrix& retro_replay,
                        const feat::PairedIndex& paired, const feat::FeatureCodec& codec,
                        const model::RiskModel& model,
                        std::optional<DayIndex> date_limit = std::nullopt);

// ---------------------------------------------------------------------------
// Column-level temporal drift between two periods' matrices.

struct DriftRow {
  std::string column;
  std::string group;
  long long n1 = 0, x1 = 0;  // sampled rows / active rows, first period
  long long n2 = 0, x2 = 0;
  double p1 = 0.0, p2 = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  bool tested = false;  // false: zero or full pooled count (no variance)
  bool significant = false;
};

struct DriftGroupSummary {
  std::string group;
  int n_significant = 0;
  int n_tested = 0;
  int n_columns = 0;
};

struct DriftReport {
  std::vector<DriftRow> rows;
  std::vector<DriftGroupSummary> groups;
  double alpha = 0.05;
  int d_tested = 0;           // Bonferroni divisor: columns actually tested
  double threshold = 0.0;     // alpha / d_tested
  int n_skipped = 0;
};

// Two-proportion pooled-variance z-test per column with Bonferroni
// correction. One row is sampled per encounter (keyed by encounter id only,
// so swapping the periods negates every z exactly).
DriftReport temporal_drift_test(const feat::FeatureMatrix& a, const feat::FeatureMatrix& b,
                                const feat::FeatureCodec& codec, double alpha,
                                std::uint64_t seed);

}  // namespace shiftlab::gap
