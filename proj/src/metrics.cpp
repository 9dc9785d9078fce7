#include "shiftlab/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "shiftlab/errors.hpp"
#include "shiftlab/rng.hpp"
#include "shiftlab/stats.hpp"

namespace shiftlab::metrics {

std::optional<double> auroc(std::span<const EncounterScore> s) {
  const std::size_t n = s.size();
  long long n_pos = 0;
  for (const auto& e : s) n_pos += e.label ? 1 : 0;
  const long long n_neg = static_cast<long long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return s[a].score < s[b].score; });

  // Midranks over tie groups, summed for positives.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && s[order[j]].score == s[order[i]].score) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (s[order[k]].label) rank_sum_pos += midrank;
    i = j;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::optional<double> brier(std::span<const EncounterScore> s) {
  if (s.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& e : s) {
    const double d = e.score - static_cast<double>(e.label);
    sum += d * d;
  }
  return sum / static_cast<double>(s.size());
}

double percentile_threshold(const ScoreSet& reference, double pct) {
  if (reference.empty()) throw UndefinedMetricError("percentile threshold of empty reference set");
  std::vector<double> v;
  v.reserve(reference.size());
  for (const auto& e : reference) v.push_back(e.score);
  return percentile_linear(std::move(v), pct);
}

Confusion confusion_at(std::span<const EncounterScore> s, double threshold) {
  Confusion c;
  for (const auto& e : s) {
    const bool pred = e.score >= threshold;
    if (e.label)
      (pred ? c.tp : c.fn)++;
    else
      (pred ? c.fp : c.tn)++;
  }
  if (c.tp + c.fn > 0) c.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.tn + c.fp > 0) c.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  if (c.tp + c.fp > 0) c.ppv = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  return c;
}

MetricCI bootstrap_ci(const ScoreSet& s, const MetricFn& fn, int n_replicates,
                      std::uint64_t seed, std::uint64_t tag) {
  auto point = fn(s);
  if (!point) throw UndefinedMetricError("bootstrap of a metric undefined on the full set");
  if (n_replicates <= 0) throw ConfigError("bootstrap replicates must be positive");

  const std::size_t n = s.size();
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n_replicates));
  int redrawn = 0;
  ScoreSet resampled(n);
  for (int k = 0; k < n_replicates; ++k) {
    // Bounded redraw: an undefined replicate (e.g. single-class resample) is
    // replaced by the next attempt's stream and counted.
    for (int attempt = 0; attempt < 100; ++attempt) {
      Rng r(seed, {stream::kBootstrap, tag, static_cast<std::uint64_t>(k),
                   static_cast<std::uint64_t>(attempt)});
      for (std::size_t i = 0; i < n; ++i) resampled[i] = s[r.below(n)];
      auto v = fn(resampled);
      if (v) {
        values.push_back(*v);
        break;
      }
      ++redrawn;
    }
  }
  if (values.empty()) throw UndefinedMetricError("all bootstrap replicates undefined");

  MetricCI ci;
  ci.point = *point;
  ci.lo = percentile_linear(values, 2.5);
  ci.hi = percentile_linear(values, 97.5);
  ci.n_replicates = static_cast<int>(values.size());
  ci.n_redrawn = redrawn;
  return ci;
}

namespace {

std::map<MonthKey, ScoreSet> by_month(const ScoreSet& s) {
  std::map<MonthKey, ScoreSet> m;
  for (const auto& e : s) m[e.admit_month].push_back(e);
  return m;
}

MonthlyRow make_row(MonthKey month, const ScoreSet& sub, const MetricFn& fn, int n_replicates,
                    std::uint64_t seed) {
  MonthlyRow row;
  row.month = month;
  row.n = static_cast<int>(sub.size());
  for (const auto& e : sub) row.n_pos += e.label ? 1 : 0;
  if (fn(sub)) {
    const std::uint64_t tag = fnv1a64(month_str(month));
    row.value = bootstrap_ci(sub, fn, n_replicates, seed, tag);
  }
  return row;
}

}  // namespace

std::vector<MonthlyRow> monthly_metric(const ScoreSet& s, const MetricFn& fn, int n_replicates,
                                       std::uint64_t seed) {
  std::vector<MonthlyRow> out;
  for (const auto& [month, sub] : by_month(s))
    out.push_back(make_row(month, sub, fn, n_replicates, seed));
  return out;
}

std::vector<MonthlyCompareRow> monthly_compare(const ScoreSet& a, const ScoreSet& b,
                                               const MetricFn& fn, int n_replicates,
                                               std::uint64_t seed) {
  auto ma = by_month(a);
  auto mb = by_month(b);
  // Join on month-of-year: each side is expected to hold at most one
  // month-year per calendar month (one period each).
  std::map<int, std::pair<const std::pair<const MonthKey, ScoreSet>*,
                          const std::pair<const MonthKey, ScoreSet>*>>
      joined;
  for (const auto& kv : ma) joined[kv.first.month].first = &kv;
  for (const auto& kv : mb) joined[kv.first.month].second = &kv;

  std::vector<MonthlyCompareRow> out;
  for (const auto& [month, sides] : joined) {
    MonthlyCompareRow row;
    row.month = month;
    if (sides.first)
      row.a = make_row(sides.first->first, sides.first->second, fn, n_replicates, seed);
    if (sides.second)
      row.b = make_row(sides.second->first, sides.second->second, fn, n_replicates, seed);

    if (row.a && row.a->value && row.b && row.b->value) {
      const ScoreSet& sa = sides.first->second;
      const ScoreSet& sb = sides.second->second;
      const std::uint64_t tag = fnv1a64("monthly_diff") ^ static_cast<std::uint64_t>(month);
      // Difference bootstrap: resample both months independently per
      // replicate; undefined resamples on either side redraw the replicate.
      std::vector<double> diffs;
      diffs.reserve(static_cast<std::uint64_t>(n_replicates));
      int redrawn = 0;
      ScoreSet ra(sa.size()), rb(sb.size());
      for (int k = 0; k < n_replicates; ++k) {
        for (int attempt = 0; attempt < 100; ++attempt) {
          Rng r(seed, {stream::kBootstrap, tag, static_cast<std::uint64_t>(k),
                       static_cast<std::uint64_t>(attempt)});
          for (auto& e : ra) e = sa[r.below(sa.size())];
          for (auto& e : rb) e = sb[r.below(sb.size())];
          auto va = fn(ra);
          auto vb = fn(rb);
          if (va && vb) {
            diffs.push_back(*va - *vb);
            break;
          }
          ++redrawn;
        }
      }
      if (!diffs.empty()) {
        MetricCI ci;
        ci.point = row.a->value->point - row.b->value->point;
        ci.lo = percentile_linear(diffs, 2.5);
        ci.hi = percentile_linear(diffs, 97.5);
        ci.n_replicates = static_cast<int>(diffs.size());
        ci.n_redrawn = redrawn;
        row.difference = ci;
        row.significant = ci.lo > 0.0 || ci.hi < 0.0;
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace shiftlab::metrics
