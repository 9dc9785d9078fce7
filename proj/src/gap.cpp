#include "shiftlab/gap.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "shiftlab/errors.hpp"
#include "shiftlab/rng.hpp"
#include "shiftlab/stats.hpp"

namespace shiftlab::gap {

GapCore performance_gap(double p_ret, double p_ret_replay, double p_pro, bool negate) {
  const double s = negate ? -1.0 : 1.0;
  GapCore g;
  g.delta = s * (p_ret - p_pro);
  g.delta_time = s * (p_ret - p_ret_replay);
  g.delta_infra = s * (p_ret_replay - p_pro);
  return g;
}

GapReport gap_bootstrap(const metrics::ScoreSet& ret, const metrics::ScoreSet& ret_replay,
                        const metrics::ScoreSet& pro, const metrics::MetricFn& fn, bool negate,
                        const std::string& measure, int n_replicates, std::uint64_t seed) {
  if (n_replicates <= 0) throw ConfigError("gap bootstrap replicates must be positive");
  auto point_ret = fn(ret), point_rr = fn(ret_replay), point_pro = fn(pro);
  if (!point_ret || !point_rr || !point_pro)
    throw UndefinedMetricError("gap metric '" + measure + "' undefined on a full score set");

  GapReport rep;
  rep.measure = measure;
  rep.negated = negate;
  const GapCore point = performance_gap(*point_ret, *point_rr, *point_pro, negate);

  const std::uint64_t mt = fnv1a64(measure);
  const std::uint64_t tag_ret = mt ^ fnv1a64("gap_ret");
  const std::uint64_t tag_rr = mt ^ fnv1a64("gap_ret_replay");
  const std::uint64_t tag_pro = mt ^ fnv1a64("gap_pro");

  std::vector<double> v_ret, v_rr, v_pro;
  auto resample = [](const metrics::ScoreSet& s, Rng& r, metrics::ScoreSet& out) {
    out.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[r.below(s.size())];
  };

  metrics::ScoreSet ra, rb, rc;
  for (int k = 0; k < n_replicates; ++k) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const auto ku = static_cast<std::uint64_t>(k);
      const auto au = static_cast<std::uint64_t>(attempt);
      Rng r1(seed, {stream::kBootstrap, tag_ret, ku, au});
      Rng r2(seed, {stream::kBootstrap, tag_rr, ku, au});
      Rng r3(seed, {stream::kBootstrap, tag_pro, ku, au});
      resample(ret, r1, ra);
      resample(ret_replay, r2, rb);
      resample(pro, r3, rc);
      auto m1 = fn(ra), m2 = fn(rb), m3 = fn(rc);
      if (m1 && m2 && m3) {
        v_ret.push_back(*m1);
        v_rr.push_back(*m2);
        v_pro.push_back(*m3);
        const GapCore g = performance_gap(*m1, *m2, *m3, negate);
        rep.rep_delta.push_back(g.delta);
        rep.rep_delta_time.push_back(g.delta_time);
        rep.rep_delta_infra.push_back(g.delta_infra);
        break;
      }
      rep.n_redrawn++;
    }
  }
  if (rep.rep_delta.empty()) throw UndefinedMetricError("all gap bootstrap replicates undefined");

  auto ci = [&](double pt, const std::vector<double>& v) {
    metrics::MetricCI c;
    c.point = pt;
    c.lo = percentile_linear(v, 2.5);
    c.hi = percentile_linear(v, 97.5);
    c.n_replicates = static_cast<int>(v.size());
    c.n_redrawn = rep.n_redrawn;
    return c;
  };
  rep.p_ret = ci(*point_ret, v_ret);
  rep.p_ret_replay = ci(*point_rr, v_rr);
  rep.p_pro = ci(*point_pro, v_pro);
  rep.delta = ci(point.delta, rep.rep_delta);
  rep.delta_time = ci(point.delta_time, rep.rep_delta_time);
  rep.delta_infra = ci(point.delta_infra, rep.rep_delta_infra);
  return rep;
}

ConcordanceReport score_concordance(std::vector<ConcordancePair> pairs,
                                    double discordance_threshold) {
  ConcordanceReport rep;
  rep.discordance_threshold = discordance_threshold;
  std::vector<double> x, y;
  x.reserve(pairs.size());
  y.reserve(pairs.size());
  for (const auto& p : pairs) {
    x.push_back(p.retro_score);
    y.push_back(p.prospective_score);
  }
  const LinearFit fit = linear_fit(x, y);
  rep.pearson_r = fit.r;
  rep.slope = fit.slope;
  rep.intercept = fit.intercept;
  for (std::uint32_t i = 0; i < pairs.size(); ++i)
    if (std::fabs(pairs[i].prospective_score - pairs[i].retro_score) >= discordance_threshold)
      rep.extreme.push_back(i);
  rep.pairs = std::move(pairs);
  return rep;
}

namespace {

// symmetric difference of two sorted index vectors, counted per column
void count_mismatches(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b,
                      std::vector<long long>& counts) {
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j >= b.size() || (i < a.size() && a[i] < b[j]))
      counts[a[i++]]++;
    else if (i >= a.size() || b[j] < a[i])
      counts[b[j++]]++;
    else {
      ++i;
      ++j;
    }
  }
}

}  // namespace

DiscrepancyReport feature_discrepancy(const feat::FeatureMatrix& pro,
                                      const feat::FeatureMatrix& retro_replay,
                                      const feat::PairedIndex& paired,
                                      const feat::FeatureCodec& codec) {
  if (pro.columns != retro_replay.columns)
    throw SchemaError("discrepancy inputs have different column sets");
  if (static_cast<int>(pro.columns.size()) != codec.width())
    throw SchemaError("discrepancy inputs do not match the feature codec");

  DiscrepancyReport rep;
  rep.n_paired_rows = static_cast<long long>(paired.pairs.size());
  std::vector<long long> counts(pro.columns.size(), 0);
  for (const auto& [ia, ib] : paired.pairs)
    count_mismatches(pro.row_active[ia], retro_replay.row_active[ib], counts);

  std::map<std::string, GroupDiscrepancy> groups;
  rep.columns.reserve(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    ColumnDiscrepancy cd;
    cd.column = codec.columns[c].id;
    cd.group = codec.columns[c].group;
    cd.mismatches = counts[c];
    cd.rate = rep.n_paired_rows > 0
                  ? static_cast<double>(counts[c]) / static_cast<double>(rep.n_paired_rows)
                  : 0.0;
    auto& g = groups[cd.group];
    g.group = cd.group;
    g.n_columns++;
    if (cd.mismatches > 0) g.n_any++;
    g.mean_rate += cd.rate;
    g.max_rate = std::max(g.max_rate, cd.rate);
    if (cd.mismatches > 0) rep.n_columns_any++;
    if (cd.rate > 0.01) rep.n_columns_gt_1pct++;
    rep.columns.push_back(std::move(cd));
  }
  for (auto& [_, g] : groups) {
    if (g.n_columns > 0) g.mean_rate /= g.n_columns;
    rep.groups.push_back(g);
  }

  const double edges[] = {0.0001, 0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0};
  rep.histogram.push_back({0.0, 0.0, 0});  // exactly zero
  double lo = 0.0;
  for (double hi : edges) {
    rep.histogram.push_back({lo, hi, 0});
    lo = hi;
  }
  for (const auto& cd : rep.columns) {
    if (cd.rate == 0.0) {
      rep.histogram[0].count++;
      continue;
    }
    for (std::size_t b = 1; b < rep.histogram.size(); ++b) {
      if (cd.rate > rep.histogram[b].lo && cd.rate <= rep.histogram[b].hi) {
        rep.histogram[b].count++;
        break;
      }
    }
  }
  return rep;
}

SwapReport feature_swap(const feat::FeatureMatrix& pro, const feat::FeatureMatrix& retro_replay,
                        const feat::PairedIndex& paired, const feat::FeatureCodec& codec,
                        const model::RiskModel& model, std::optional<DayIndex> date_limit) {
  if (pro.columns != retro_replay.columns)
    throw SchemaError("swap inputs have different column sets");
  if (pro.columns != model.base_columns)
    throw SchemaError("swap inputs do not match the model's columns");

  std::vector<std::pair<std::uint32_t, std::uint32_t>> universe;
  for (const auto& pr : paired.pairs)
    if (!date_limit || pro.rows[pr.first].date < *date_limit) universe.push_back(pr);

  // per-column group labels
  const std::size_t n_cols = pro.columns.size();
  std::vector<std::string> leaf(n_cols), roll(n_cols);
  for (std::size_t c = 0; c < n_cols; ++c) {
    leaf[c] = codec.columns[c].group;
    roll[c] = sim::prefix_str(codec.group_prefix.at(leaf[c]));
  }

  // Encounter max over the paired universe under a column mask: masked
  // columns read from the retro replay row, the rest from the prospective row.
  auto auroc_with_mask = [&](const std::vector<std::uint8_t>& mask) {
    std::map<std::string, std::pair<double, std::uint8_t>> best;
    std::vector<std::uint32_t> merged;
    for (const auto& [ip, ir] : universe) {
      merged.clear();
      for (std::uint32_t c : pro.row_active[ip])
        if (!mask[c]) merged.push_back(c);
      for (std::uint32_t c : retro_replay.row_active[ir])
        if (mask[c]) merged.push_back(c);
      const double s = model::predict_day(
          model, merged, day_from_civil(pro.rows[ip].admit_month.year, 1, 1));
      auto [it, inserted] = best.try_emplace(pro.rows[ip].encounter_id,
                                             std::make_pair(s, pro.rows[ip].label));
      if (!inserted) it->second.first = std::max(it->second.first, s);
    }
    metrics::ScoreSet ss;
    ss.reserve(best.size());
    for (const auto& [enc, sl] : best)
      ss.push_back({enc, MonthKey{}, sl.first, sl.second});
    auto a = metrics::auroc(ss);
    if (!a) throw UndefinedMetricError("swap AUROC undefined on the paired universe");
    return *a;
  };

  SwapReport rep;
  rep.date_limit = date_limit;
  std::vector<std::uint8_t> mask(n_cols, 0);
  rep.baseline_auroc = auroc_with_mask(mask);

  auto add_row = [&](const std::string& name, bool rollup, auto&& in_group) {
    std::fill(mask.begin(), mask.end(), 0);
    int n = 0;
    for (std::size_t c = 0; c < n_cols; ++c)
      if (in_group(c)) {
        mask[c] = 1;
        ++n;
      }
    SwapRow row;
    row.group = name;
    row.rollup = rollup;
    row.n_columns = n;
    row.auroc_after = auroc_with_mask(mask);
    row.difference = row.auroc_after - rep.baseline_auroc;
    rep.rows.push_back(std::move(row));
  };

  std::vector<std::string> leaf_names, roll_names;
  for (std::size_t c = 0; c < n_cols; ++c) {
    if (std::find(leaf_names.begin(), leaf_names.end(), leaf[c]) == leaf_names.end())
      leaf_names.push_back(leaf[c]);
    if (std::find(roll_names.begin(), roll_names.end(), roll[c]) == roll_names.end())
      roll_names.push_back(roll[c]);
  }
  for (const auto& g : leaf_names)
    add_row(g, false, [&](std::size_t c) { return leaf[c] == g; });
  for (const auto& g : roll_names)
    add_row(g, true, [&](std::size_t c) { return roll[c] == g; });
  add_row("(all)", true, [&](std::size_t) { return true; });
  rep.retro_replay_auroc = rep.rows.back().auroc_after;

  std::stable_sort(rep.rows.begin(), rep.rows.end(),
                   [](const SwapRow& a, const SwapRow& b) { return a.difference > b.difference; });
  return rep;
}

DriftReport temporal_drift_test(const feat::FeatureMatrix& a, const feat::FeatureMatrix& b,
                                const feat::FeatureCodec& codec, double alpha,
                                std::uint64_t seed) {
  if (a.columns != b.columns) throw SchemaError("drift inputs have different column sets");
  if (static_cast<int>(a.columns.size()) != codec.width())
    throw SchemaError("drift inputs do not match the feature codec");
  if (a.rows.empty() || b.rows.empty()) throw DataError("drift test on an empty matrix");
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("drift alpha outside (0,1)");

  // One sampled day per encounter, keyed by encounter id only so the sample
  // is identical whichever side the period lands on.
  auto sample = [&](const feat::FeatureMatrix& m, std::vector<long long>& counts) -> long long {
    std::unordered_map<std::string, std::vector<std::uint32_t>> by_enc;
    for (std::uint32_t i = 0; i < m.rows.size(); ++i)
      by_enc[m.rows[i].encounter_id].push_back(i);
    std::vector<std::string> encs;
    encs.reserve(by_enc.size());
    for (const auto& [enc, _] : by_enc) encs.push_back(enc);
    std::sort(encs.begin(), encs.end());
    for (const auto& enc : encs) {
      const auto& idx = by_enc[enc];
      Rng r(seed, {stream::kDrift, fnv1a64(enc)});
      const std::uint32_t pick = idx[r.below(idx.size())];
      for (std::uint32_t c : m.row_active[pick]) counts[c]++;
    }
    return static_cast<long long>(encs.size());
  };

  const std::size_t n_cols = a.columns.size();
  std::vector<long long> x1(n_cols, 0), x2(n_cols, 0);
  const long long n1 = sample(a, x1);
  const long long n2 = sample(b, x2);

  DriftReport rep;
  rep.alpha = alpha;
  rep.rows.resize(n_cols);
  for (std::size_t c = 0; c < n_cols; ++c) {
    DriftRow& row = rep.rows[c];
    row.column = codec.columns[c].id;
    row.group = codec.columns[c].group;
    row.n1 = n1;
    row.n2 = n2;
    row.x1 = x1[c];
    row.x2 = x2[c];
    row.p1 = static_cast<double>(x1[c]) / static_cast<double>(n1);
    row.p2 = static_cast<double>(x2[c]) / static_cast<double>(n2);
    const long long pooled = x1[c] + x2[c];
    if (pooled == 0 || pooled == n1 + n2) {
      row.tested = false;  // zero pooled variance: skipped, reported
      rep.n_skipped++;
      continue;
    }
    row.tested = true;
    const double ph = static_cast<double>(pooled) / static_cast<double>(n1 + n2);
    const double se = std::sqrt(ph * (1.0 - ph) *
                                (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
    row.z = (row.p1 - row.p2) / se;
    row.p_value = normal_two_sided_p(row.z);
    rep.d_tested++;
  }
  rep.threshold = rep.d_tested > 0 ? alpha / rep.d_tested : 0.0;
  std::map<std::string, DriftGroupSummary> groups;
  for (auto& row : rep.rows) {
    if (row.tested && row.p_value <= rep.threshold) row.significant = true;
    auto& g = groups[row.group];
    g.group = row.group;
    g.n_columns++;
    if (row.tested) g.n_tested++;
    if (row.significant) g.n_significant++;
  }
  for (const auto& [_, g] : groups) rep.groups.push_back(g);
  return rep;
}

}  // namespace shiftlab::gap
