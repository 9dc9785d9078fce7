#include "shiftlab/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "shiftlab/errors.hpp"
#include "shiftlab/rng.hpp"
#include "shiftlab/stats.hpp"

namespace shiftlab::sim {

std::string prefix_str(Prefix p) {
  switch (p) {
    case Prefix::demographics: return "Demographics";
    case Prefix::history: return "Hx";
    case Prefix::index_stay: return "Idx";
  }
  return "?";
}

Prefix parse_prefix(const std::string& s) {
  if (s == "Demographics") return Prefix::demographics;
  if (s == "Hx") return Prefix::history;
  if (s == "Idx") return Prefix::index_stay;
  throw ConfigError("unknown feature-group prefix '" + s + "'");
}

const FeatureDef& Taxonomy::by_name(const std::string& name) const {
  for (const auto& f : features)
    if (f.name == name) return f;
  throw TaxonomyError("unknown feature '" + name + "'");
}

void SimConfig::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " outside [0,1]");
  };
  if (n_encounters < 0) throw ConfigError("sim.n_encounters negative");
  if (periods.empty()) throw ConfigError("sim.periods empty");
  for (const auto& p : periods)
    if (p.start >= p.end) throw ConfigError("sim.periods entry with start >= end");
  for (std::size_t i = 0; i + 1 < periods.size(); ++i)
    for (std::size_t j = i + 1; j < periods.size(); ++j)
      if (periods[i].start < periods[j].end && periods[j].start < periods[i].end)
        throw ConfigError("sim.periods overlap");
  if (groups.empty()) throw ConfigError("sim.groups empty");
  for (const auto& g : groups) {
    if (g.name.empty()) throw ConfigError("sim.groups entry with empty name");
    if (g.n_categorical < 0 || g.n_numeric < 0)
      throw ConfigError("group '" + g.name + "' has negative feature counts");
    if (g.n_categorical + g.n_numeric == 0)
      throw ConfigError("group '" + g.name + "' has no features");
    if (g.n_categorical > 0 && g.n_categories < 2)
      throw ConfigError("group '" + g.name + "' needs >= 2 categories");
    prob(g.prevalence_lo, "group prevalence");
    prob(g.prevalence_hi, "group prevalence");
    if (g.prevalence_lo > g.prevalence_hi)
      throw ConfigError("group '" + g.name + "' prevalence range inverted");
    if (g.value_sigma < 0) throw ConfigError("group '" + g.name + "' value_sigma negative");
  }
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (std::size_t j = i + 1; j < groups.size(); ++j)
      if (groups[i].name == groups[j].name)
        throw ConfigError("duplicate group name '" + groups[i].name + "'");
  auto group_known = [&](const std::string& name) {
    for (const auto& g : groups)
      if (g.name == name) return true;
    return false;
  };
  if (!(los_median_days > 0) || !(los_sigma >= 0) || los_min_days < 1 || los_max_days < los_min_days)
    throw ConfigError("sim length-of-stay parameters invalid");
  prob(class_code_flip_prob, "sim.class_code_flip_prob");
  prob(prior_positive_prob, "sim.prior_positive_prob");
  if (!(target_prevalence > 0.0 && target_prevalence < 1.0))
    throw ConfigError("sim.target_prevalence outside (0,1)");
  for (const auto& [name, ns] : noise) {
    if (!group_known(name)) throw ConfigError("sim.noise references unknown group '" + name + "'");
    prob(ns.update_prob, "noise update_prob");
    prob(ns.backdate_prob, "noise backdate_prob");
    prob(ns.cancel_prob, "noise cancel_prob");
    if (ns.entry_lag_median_min < 0 || ns.entry_lag_sigma < 0)
      throw ConfigError("noise entry lag parameters invalid for group '" + name + "'");
    if (ns.revise_delay_lo_days < 0 || ns.revise_delay_hi_days < ns.revise_delay_lo_days)
      throw ConfigError("noise revision delay range invalid for group '" + name + "'");
    if (ns.backdate_shift_days < 0)
      throw ConfigError("noise backdate_shift_days negative for group '" + name + "'");
  }
  for (const auto& d : drift) {
    if (d.period < 0 || d.period >= static_cast<int>(periods.size()))
      throw ConfigError("sim.drift entry references period out of range");
    if (!group_known(d.group)) throw ConfigError("sim.drift references unknown group '" + d.group + "'");
    if (!(d.multiplier >= 0)) throw ConfigError("sim.drift multiplier negative");
  }
  for (const auto& w : outcome_weights)
    if (!std::isfinite(w.weight)) throw ConfigError("sim.outcome weight not finite");
}

Taxonomy make_taxonomy(const SimConfig& cfg) {
  cfg.validate();
  return make_taxonomy(cfg.groups);
}

Taxonomy make_taxonomy(const std::vector<GroupSpec>& groups) {
  Taxonomy tax;
  tax.groups = groups;
  std::uint32_t id = 0;
  for (std::uint32_t g = 0; g < tax.groups.size(); ++g) {
    const GroupSpec& gs = tax.groups[g];
    for (int k = 0; k < gs.n_categorical + gs.n_numeric; ++k) {
      FeatureDef f;
      f.id = id++;
      f.name = gs.name + "/" + std::to_string(k);
      f.group = g;
      f.categorical = k < gs.n_categorical;
      f.n_categories = f.categorical ? gs.n_categories : 0;
      f.static_feature = gs.static_group;
      tax.features.push_back(std::move(f));
    }
  }
  return tax;
}

PipelineConfig PipelineConfig::retrospective_defaults() {
  PipelineConfig p;
  p.mode = PipelineMode::retrospective;
  p.extraction_lag_lo = 1 * kMinutesPerDay;
  p.extraction_lag_hi = 7 * kMinutesPerDay;
  p.sees_revisions_after_extraction = true;
  p.cohort_source = CohortSource::class_codes;
  return p;
}

PipelineConfig PipelineConfig::prospective_defaults() {
  PipelineConfig p;
  p.mode = PipelineMode::prospective;
  p.extraction_lag_lo = 0;
  p.extraction_lag_hi = 8 * 60;
  p.sees_revisions_after_extraction = false;
  p.cohort_source = CohortSource::census;
  return p;
}

void PipelineConfig::validate() const {
  if (extraction_lag_lo < 0 || extraction_lag_hi < extraction_lag_lo)
    throw ConfigError("pipeline extraction lag range invalid");
  if (daily_cutoff < 0 || daily_cutoff >= kMinutesPerDay)
    throw ConfigError("pipeline daily_cutoff outside [0, 1440)");
}

namespace {

constexpr int kCensusMinDays = 3;

struct FeatParams {
  double prevalence = 0.0;
  double log_median = 0.0;
  double sigma = 0.0;
  std::vector<double> cat_cum;  // cumulative category weights, normalized
};

std::vector<FeatParams> make_feature_params(const SimConfig& cfg, const Taxonomy& tax) {
  std::vector<FeatParams> out(tax.features.size());
  for (const auto& f : tax.features) {
    const GroupSpec& g = tax.groups[f.group];
    Rng r(cfg.seed, {stream::kFeatureParams, f.id});
    FeatParams p;
    p.prevalence = r.uniform(g.prevalence_lo, g.prevalence_hi);
    p.log_median = r.uniform(g.log_median_lo, g.log_median_hi);
    p.sigma = g.value_sigma;
    if (f.categorical) {
      p.cat_cum.resize(f.n_categories);
      double total = 0;
      for (int c = 0; c < f.n_categories; ++c) {
        total += std::exp(r.uniform(-1.2, 1.2));  // skewed category mix
        p.cat_cum[c] = total;
      }
      for (double& v : p.cat_cum) v /= total;
    }
    out[f.id] = std::move(p);
  }
  return out;
}

int sample_category(Rng& r, const FeatParams& p) {
  const double u = r.uniform01();
  auto it = std::upper_bound(p.cat_cum.begin(), p.cat_cum.end(), u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - p.cat_cum.begin(),
                                                   static_cast<std::ptrdiff_t>(p.cat_cum.size()) - 1));
}

double drift_multiplier(const SimConfig& cfg, int period, std::uint32_t group,
                        const Taxonomy& tax) {
  double m = 1.0;
  for (const auto& d : cfg.drift)
    if (d.period == period && d.group == tax.groups[group].name) m *= d.multiplier;
  return m;
}

// Calibrate the outcome logit intercept so mean sigmoid(b + s_e) hits the
// target prevalence (monotone in b; plain bisection).
double calibrate_intercept(const std::vector<double>& signal, double target) {
  if (signal.empty()) return 0.0;
  auto mean_p = [&](double b) {
    double s = 0;
    for (double x : signal) s += sigmoid(b + x);
    return s / static_cast<double>(signal.size());
  };
  double lo = -60.0, hi = 60.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (mean_p(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct ResolvedWeight {
  std::uint32_t feature;
  int category;
  double weight;
};

bool weight_active(const ResolvedWeight& w, const EncounterTruth& t, const Taxonomy& tax,
                   const std::vector<FeatParams>& params) {
  const bool categorical = tax.features[w.feature].categorical;
  for (const auto& ev : t.events) {
    if (ev.feature != w.feature) continue;
    if (w.category < 0) return true;  // presence
    if (categorical) {
      if (ev.value.category == w.category) return true;
    } else {
      if (ev.value.number > std::exp(params[w.feature].log_median)) return true;
    }
  }
  // Numeric "above generating median" applies when category == -1 too; treat
  // any requested category on a numeric feature as the above-median rule.
  if (!categorical && w.category >= 0) {
    for (const auto& ev : t.events)
      if (ev.feature == w.feature && ev.value.number > std::exp(params[w.feature].log_median))
        return true;
  }
  return false;
}

}  // namespace

std::vector<EncounterTruth> generate_truth(const SimConfig& cfg, int period_index) {
  cfg.validate();
  if (period_index < 0 || period_index >= static_cast<int>(cfg.periods.size()))
    throw ConfigError("period index out of range");
  const Taxonomy tax = make_taxonomy(cfg);
  const auto params = make_feature_params(cfg, tax);
  const Period pd = cfg.periods[period_index];

  std::vector<ResolvedWeight> weights;
  for (const auto& w : cfg.outcome_weights)
    weights.push_back({tax.by_name(w.feature).id, w.category, w.weight});

  std::vector<const NoiseSpec*> noise_by_group(tax.groups.size(), nullptr);
  static const NoiseSpec kClean{};
  for (std::uint32_t g = 0; g < tax.groups.size(); ++g) {
    auto it = cfg.noise.find(tax.groups[g].name);
    noise_by_group[g] = it == cfg.noise.end() ? &kClean : &it->second;
  }

  std::vector<double> drift_mult(tax.groups.size());
  for (std::uint32_t g = 0; g < tax.groups.size(); ++g)
    drift_mult[g] = drift_multiplier(cfg, period_index, g, tax);

  std::vector<EncounterTruth> out;
  out.reserve(static_cast<std::size_t>(cfg.n_encounters));
  std::vector<double> signal(static_cast<std::size_t>(cfg.n_encounters), 0.0);

  for (int e = 0; e < cfg.n_encounters; ++e) {
    Rng r(cfg.seed, {stream::kTruth, static_cast<std::uint64_t>(period_index),
                     static_cast<std::uint64_t>(e)});
    EncounterTruth t;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "p%d-e%05d", period_index, e);
    t.encounter_id = idbuf;
    t.patient_id = std::string("pt-") + idbuf;

    const DayIndex admit_day = pd.start + static_cast<DayIndex>(r.below(
                                   static_cast<std::uint64_t>(pd.end - pd.start)));
    t.admit_at = day_start(admit_day) + static_cast<Minutes>(r.below(kMinutesPerDay));
    const long long los = std::clamp<long long>(
        std::llround(r.lognormal(cfg.los_median_days, cfg.los_sigma)),
        cfg.los_min_days, cfg.los_max_days);
    const DayIndex discharge_day = admit_day + los - 1;
    t.discharge_at = day_start(discharge_day) + 8 * 60 + static_cast<Minutes>(r.below(12 * 60));
    if (t.discharge_at <= t.admit_at) t.discharge_at = t.admit_at + 60;
    const DayIndex last_day = day_of(t.discharge_at);

    // Billing class: usually inpatient from admission; with flip probability
    // the encounter starts under an observation code and is corrected to
    // inpatient 1..10 days after discharge.
    if (r.bernoulli(cfg.class_code_flip_prob)) {
      t.class_code_history.push_back({t.admit_at, false});
      const Minutes fix_at = t.discharge_at + (1 + static_cast<Minutes>(r.below(10))) * kMinutesPerDay;
      t.class_code_history.push_back({fix_at, true});
    } else {
      t.class_code_history.push_back({t.admit_at, true});
    }
    t.census_intervals.emplace_back(t.admit_at, t.discharge_at);

    auto add_event = [&](std::uint32_t fid, Minutes occ, Payload val) {
      const NoiseSpec& ns = *noise_by_group[tax.features[fid].group];
      EventRecord ev;
      ev.feature = fid;
      ev.occurred_at = occ;
      Minutes lag = 0;
      if (ns.entry_lag_median_min > 0)
        lag = std::llround(r.lognormal(ns.entry_lag_median_min, ns.entry_lag_sigma));
      ev.entered_at = occ + std::max<Minutes>(0, lag);
      ev.value = val;

      auto rev_delay = [&] {
        return std::max<Minutes>(
            1, std::llround(r.uniform(ns.revise_delay_lo_days, ns.revise_delay_hi_days) *
                            kMinutesPerDay));
      };
      std::vector<RevisionRecord> revs;
      if (ns.update_prob > 0 && r.bernoulli(ns.update_prob)) {
        RevisionRecord rv;
        rv.revised_at = ev.entered_at + rev_delay();
        rv.kind = RevisionKind::update;
        rv.new_value = val;
        if (tax.features[fid].categorical) {
          const int n = tax.features[fid].n_categories;
          rv.new_value.category =
              (val.category + 1 + static_cast<int>(r.below(std::max(1, n - 1)))) % n;
        } else {
          rv.new_value.number = val.number * std::exp(0.25 * r.normal());
        }
        revs.push_back(rv);
      }
      if (ns.backdate_prob > 0 && r.bernoulli(ns.backdate_prob)) {
        RevisionRecord rv;
        rv.revised_at = ev.entered_at + rev_delay();
        rv.kind = RevisionKind::backdate;
        rv.new_value = val;
        const Minutes shift = std::max<Minutes>(
            1, std::llround(r.uniform(0.0, ns.backdate_shift_days) * kMinutesPerDay));
        rv.new_occurred_at = std::max(t.admit_at, occ - shift);
        revs.push_back(rv);
      }
      if (ns.cancel_prob > 0 && r.bernoulli(ns.cancel_prob)) {
        RevisionRecord rv;
        rv.revised_at = ev.entered_at + rev_delay();
        rv.kind = RevisionKind::cancel;
        rv.new_value = val;
        revs.push_back(rv);
      }
      std::stable_sort(revs.begin(), revs.end(),
                       [](const RevisionRecord& a, const RevisionRecord& b) {
                         return a.revised_at < b.revised_at;
                       });
      for (std::size_t i = 1; i < revs.size(); ++i)
        if (revs[i].revised_at <= revs[i - 1].revised_at)
          revs[i].revised_at = revs[i - 1].revised_at + 1;
      // A cancel is terminal: nothing may follow it.
      for (std::size_t i = 0; i < revs.size(); ++i) {
        if (revs[i].kind == RevisionKind::cancel) {
          revs.resize(i + 1);
          break;
        }
      }
      ev.revisions = std::move(revs);
      t.events.push_back(std::move(ev));
    };

    for (const auto& f : tax.features) {
      const FeatParams& fp = params[f.id];
      const double prev = std::clamp(fp.prevalence * drift_mult[f.group], 0.0, 1.0);
      auto draw_payload = [&] {
        Payload v;
        if (f.categorical)
          v.category = sample_category(r, fp);
        else
          v.number = r.lognormal(std::exp(fp.log_median), fp.sigma);
        return v;
      };
      if (f.static_feature) {
        if (r.bernoulli(prev)) add_event(f.id, t.admit_at, draw_payload());
      } else {
        for (DayIndex d = admit_day; d <= last_day; ++d) {
          if (!r.bernoulli(prev)) continue;
          Minutes occ = day_start(d) + static_cast<Minutes>(r.below(kMinutesPerDay));
          occ = std::clamp(occ, t.admit_at, t.discharge_at);
          add_event(f.id, occ, draw_payload());
        }
      }
    }

    double s = 0.0;
    for (const auto& w : weights)
      if (weight_active(w, t, tax, params)) s += w.weight;
    signal[static_cast<std::size_t>(e)] = s;
    out.push_back(std::move(t));
  }

  const double b = cfg.outcome_intercept ? *cfg.outcome_intercept
                                         : calibrate_intercept(signal, cfg.target_prevalence);

  for (int e = 0; e < cfg.n_encounters; ++e) {
    EncounterTruth& t = out[static_cast<std::size_t>(e)];
    Rng ro(cfg.seed, {stream::kOutcome, static_cast<std::uint64_t>(period_index),
                      static_cast<std::uint64_t>(e)});
    const double p = sigmoid(b + signal[static_cast<std::size_t>(e)]);
    t.outcome_positive = ro.bernoulli(p);
    if (t.outcome_positive) {
      const DayIndex admit_day = day_of(t.admit_at);
      const long long cal_days = day_of(t.discharge_at) - admit_day + 1;
      const long long osd = 1 + static_cast<long long>(ro.below(static_cast<std::uint64_t>(cal_days)));
      Minutes at = day_start(admit_day + osd - 1) + static_cast<Minutes>(ro.below(kMinutesPerDay));
      t.outcome_at = std::clamp(at, t.admit_at, t.discharge_at);
    }
    if (cfg.prior_positive_prob > 0 && ro.bernoulli(cfg.prior_positive_prob)) {
      const Minutes days_before = 1 + static_cast<Minutes>(ro.below(25));
      t.prior_positive_at = t.admit_at - days_before * kMinutesPerDay;
    }
  }
  return out;
}

std::vector<std::string> select_cohort(const std::vector<EncounterTruth>& truth,
                                       const PipelineConfig& pipeline, Minutes as_of) {
  pipeline.validate();
  std::vector<std::string> out;
  for (const auto& t : truth) {
    bool in = false;
    if (pipeline.cohort_source == CohortSource::census) {
      std::set<DayIndex> days;
      for (const auto& [s, e] : t.census_intervals) {
        if (s > as_of) continue;
        const DayIndex hi = day_of(std::min(e, as_of));
        for (DayIndex d = day_of(s); d <= hi; ++d) days.insert(d);
      }
      in = static_cast<int>(days.size()) >= kCensusMinDays;
    } else {
      const ClassCodeChange* last = nullptr;
      for (const auto& c : t.class_code_history)
        if (c.at <= as_of) last = &c;
      in = last != nullptr && last->inpatient;
    }
    if (in) out.push_back(t.encounter_id);
  }
  return out;
}

namespace {

EncounterMeta meta_of(const EncounterTruth& t) {
  EncounterMeta m;
  m.encounter_id = t.encounter_id;
  m.patient_id = t.patient_id;
  m.admit_at = t.admit_at;
  m.discharge_at = t.discharge_at;
  m.outcome_positive = t.outcome_positive;
  m.outcome_at = t.outcome_at;
  m.prior_positive_at = t.prior_positive_at;
  return m;
}

}  // namespace

RawExtract extract(const std::vector<EncounterTruth>& truth, const Taxonomy& tax,
                   const PipelineConfig& pipeline, Minutes as_of, std::uint64_t seed,
                   const ExtractOptions& opts) {
  pipeline.validate();
  const bool prospective = pipeline.mode == PipelineMode::prospective;
  if (prospective && pipeline.cohort_source != CohortSource::census)
    std::fprintf(stderr, "note: prospective pipeline using class_codes cohort (override)\n");
  if (!prospective && pipeline.cohort_source != CohortSource::class_codes)
    std::fprintf(stderr, "note: retrospective pipeline using census cohort (override)\n");

  std::unordered_map<std::string, const EncounterTruth*> by_id;
  by_id.reserve(truth.size());
  for (const auto& t : truth) by_id[t.encounter_id] = &t;

  const std::vector<std::string> cohort =
      opts.cohort ? *opts.cohort : select_cohort(truth, pipeline, as_of);

  if (!prospective && day_of(as_of) < opts.window_begin)
    throw TemporalBoundsError("retrospective as_of precedes the extraction window");

  RawExtract out;
  out.encounters.reserve(cohort.size());

  const Minutes lag_span = pipeline.extraction_lag_hi - pipeline.extraction_lag_lo;
  auto scale_lag = [&](double u) {
    return pipeline.extraction_lag_lo + static_cast<Minutes>(std::llround(u * static_cast<double>(lag_span)));
  };

  for (const auto& id : cohort) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("cohort references unknown encounter '" + id + "'");
    const EncounterTruth& t = *it->second;
    if (!prospective && t.admit_at > as_of)
      throw TemporalBoundsError("retrospective as_of precedes admission of '" + id + "'");
    out.encounters.push_back(meta_of(t));

    // Per-event pipeline transfer lags. Streams are keyed by event identity
    // only (seed, encounter, event index) and consumed in a fixed order, so
    // two pipelines with equal lag ranges see identical visibility.
    const std::uint64_t enc_key = fnv1a64(id);
    std::vector<Minutes> ev_vis(t.events.size());
    std::vector<std::vector<Minutes>> rev_vis(t.events.size());
    for (std::size_t i = 0; i < t.events.size(); ++i) {
      Rng er(seed, {stream::kExtractLag, enc_key, static_cast<std::uint64_t>(i)});
      ev_vis[i] = t.events[i].entered_at + scale_lag(er.uniform01());
      rev_vis[i].reserve(t.events[i].revisions.size());
      for (const auto& rv : t.events[i].revisions)
        rev_vis[i].push_back(rv.revised_at + scale_lag(er.uniform01()));
    }

    const DayIndex admit_day = day_of(t.admit_at);
    const DayIndex lo = std::max(admit_day, opts.window_begin);
    DayIndex hi = std::min(day_of(t.discharge_at), opts.window_end - 1);
    // Only finalized rows exist: a prospective day-D row is built by the
    // first batch run after D (cutoff on D+1), which must be <= as_of.
    hi = std::min(hi, prospective ? day_of(as_of - pipeline.daily_cutoff) - 1 : day_of(as_of));

    for (DayIndex d = lo; d <= hi; ++d) {
      if (prospective && pipeline.outage_days.count(d)) continue;
      const Minutes snapshot = prospective ? day_start(d + 1) + pipeline.daily_cutoff : as_of;
      const Minutes value_time =
          pipeline.sees_revisions_after_extraction ? as_of : snapshot;

      RawRow row;
      row.encounter_id = id;
      row.date = d;
      row.day_of_stay = static_cast<int>(d - admit_day + 1);

      // feature -> (effective occurred_at, event index, payload); later
      // occurrences win, ties broken toward the later event.
      std::map<std::uint32_t, std::tuple<Minutes, std::size_t, Payload>> best;
      for (std::size_t i = 0; i < t.events.size(); ++i) {
        if (ev_vis[i] > snapshot) continue;
        const EventRecord& ev = t.events[i];
        Minutes occ = ev.occurred_at;
        Payload val = ev.value;
        bool dead = false;
        for (std::size_t j = 0; j < ev.revisions.size(); ++j) {
          if (rev_vis[i][j] > value_time) continue;
          const RevisionRecord& rv = ev.revisions[j];
          switch (rv.kind) {
            case RevisionKind::update: val = rv.new_value; break;
            case RevisionKind::backdate:
              if (rv.new_occurred_at) occ = *rv.new_occurred_at;
              break;
            case RevisionKind::cancel: dead = true; break;
          }
          if (dead) break;
        }
        if (dead) continue;
        const FeatureDef& fd = tax.features[ev.feature];
        if (!fd.static_feature && day_of(occ) != d) continue;
        auto bit = best.find(ev.feature);
        if (bit == best.end() || std::get<0>(bit->second) < occ ||
            (std::get<0>(bit->second) == occ && std::get<1>(bit->second) < i))
          best[ev.feature] = {occ, i, val};
      }
      row.values.reserve(best.size());
      for (const auto& [fid, tup] : best) row.values.emplace_back(fid, std::get<2>(tup));
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

PairedExtract build_paired_period(const SimConfig& cfg, int period_index,
                                  const PipelineConfig& prospective,
                                  const PipelineConfig& retrospective, int settle_days) {
  cfg.validate();
  if (period_index < 0 || period_index >= static_cast<int>(cfg.periods.size()))
    throw ConfigError("period index out of range");
  if (settle_days < 0) throw ConfigError("settle_days negative");
  const Period pd = cfg.periods[period_index];
  const auto truth = generate_truth(cfg, period_index);
  const Taxonomy tax = make_taxonomy(cfg);

  PairedExtract pe;
  pe.prospective_as_of = day_start(pd.end) + prospective.daily_cutoff;
  const auto cohort = select_cohort(truth, prospective, pe.prospective_as_of);
  ExtractOptions eo;
  eo.window_begin = pd.start;
  eo.window_end = pd.end;
  eo.cohort = cohort;
  pe.prospective = extract(truth, tax, prospective, pe.prospective_as_of, cfg.seed, eo);
  pe.retro_as_of = day_start(pd.end + settle_days);
  pe.retro_replay = extract(truth, tax, retrospective, pe.retro_as_of, cfg.seed, eo);
  return pe;
}

}  // namespace shiftlab::sim
