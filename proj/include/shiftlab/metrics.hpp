#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftlab/clock.hpp"

namespace shiftlab::metrics {

// One encounter's evaluation unit: max daily score over the scored stay.
struct EncounterScore {
  std::string encounter_id;
  MonthKey admit_month;
  double score = 0.0;  // in [0, 1]
  uint8_t label = 0;   // 0/1
};

using ScoreSet = std::vector<EncounterScore>;
using MetricFn = std::function<std::optional<double>(std::span<const EncounterScore>)>;

// AUROC by the rank statistic (Mann-Whitney U with midranks for ties).
// nullopt when either class is absent.
std::optional<double> auroc(std::span<const EncounterScore> s);

// Brier score: mean squared (score - label). nullopt on empty input.
std::optional<double> brier(std::span<const EncounterScore> s);

// Score at the given percentile of a reference set's encounter scores
// (linear-interpolation percentile). Used as the alert threshold.
double percentile_threshold(const ScoreSet& reference, double pct);

struct Confusion {
  long long tp = 0, fp = 0, tn = 0, fn = 0;
  std::optional<double> sensitivity;  // undefined with no positives
  std::optional<double> specificity;  // undefined with no negatives
  std::optional<double> ppv;          // undefined with no predicted positives
};

// Predicted positive iff score >= threshold.
Confusion confusion_at(std::span<const EncounterScore> s, double threshold);

struct MetricCI {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int n_replicates = 0;  // replicates that produced a defined value
  int n_redrawn = 0;     // replicates redrawn because the metric was undefined
};

// Empirical percentile bootstrap over encounters. Replicate k draws from the
// stream (seed, bootstrap, tag, k, attempt), so results do not depend on
// evaluation order; undefined replicates are redrawn (and counted). CI bounds
// are the 2.5 / 97.5 linear-interpolation percentiles of replicate values.
// Throws UndefinedMetricError if the metric is undefined on the full set.
MetricCI bootstrap_ci(const ScoreSet& s, const MetricFn& fn, int n_replicates,
                      std::uint64_t seed, std::uint64_t tag = 0);

struct MonthlyRow {
  MonthKey month;
  int n = 0;
  int n_pos = 0;
  std::optional<MetricCI> value;  // nullopt = metric undefined that month
};

// Per-admission-month metric with bootstrap CIs; months where the metric is
// undefined stay in the output as explicit markers.
std::vector<MonthlyRow> monthly_metric(const ScoreSet& s, const MetricFn& fn,
                                       int n_replicates, std::uint64_t seed);

// Two-set monthly comparison joined on month-of-year (periods cover the same
// calendar months of different years). Emits both sides' per-month CIs and a
// bootstrap CI on the difference (a - b); difference defined only when both
// sides are.
struct MonthlyCompareRow {
  int month = 0;  // 1..12
  std::optional<MonthlyRow> a, b;
  std::optional<MetricCI> difference;
  bool significant = false;  // difference CI excludes 0
};

std::vector<MonthlyCompareRow> monthly_compare(const ScoreSet& a, const ScoreSet& b,
                                               const MetricFn& fn, int n_replicates,
                                               std::uint64_t seed);

}  // namespace shiftlab::metrics
