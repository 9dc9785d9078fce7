#include "shiftlab/featurize.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "shiftlab/errors.hpp"
#include "shiftlab/stats.hpp"

namespace shiftlab::feat {

namespace {

constexpr int kMinLosDays = 3;
constexpr int kEarlyOutcomeCutoffDays = 2;
constexpr int kPriorPositiveWindowDays = 14;

long long calendar_los(const sim::EncounterMeta& m) {
  return day_of(m.discharge_at) - day_of(m.admit_at) + 1;
}

}  // namespace

InclusionResult apply_inclusion(const sim::RawExtract& in) {
  InclusionResult out;
  out.stats.n_encounters_in = static_cast<int>(in.encounters.size());

  // decision per encounter: keep + label + last kept day-of-stay
  struct Decision {
    bool keep = false;
    std::uint8_t label = 0;
    long long last_dos = 0;  // inclusive cutoff for rows
  };
  std::unordered_map<std::string, Decision> decisions;
  decisions.reserve(in.encounters.size());

  for (const auto& m : in.encounters) {
    Decision d;
    const long long los = calendar_los(m);
    d.last_dos = los;
    if (los < kMinLosDays) {
      out.stats.n_dropped_short_stay++;
      decisions.emplace(m.encounter_id, d);
      continue;
    }
    if (m.prior_positive_at) {
      const long long gap = day_of(m.admit_at) - day_of(*m.prior_positive_at);
      if (gap <= kPriorPositiveWindowDays) {
        out.stats.n_dropped_recent_prior++;
        decisions.emplace(m.encounter_id, d);
        continue;
      }
    }
    if (m.outcome_positive && m.outcome_at) {
      const long long osd = day_of(*m.outcome_at) - day_of(m.admit_at) + 1;
      if (osd <= kEarlyOutcomeCutoffDays) {
        out.stats.n_dropped_early_positive++;
        decisions.emplace(m.encounter_id, d);
        continue;
      }
      d.label = 1;
      d.last_dos = osd;  // prediction stops once the outcome is known
    }
    d.keep = true;
    decisions.emplace(m.encounter_id, d);
    out.stats.n_kept++;
  }

  for (const auto& m : in.encounters) {
    const Decision& d = decisions.at(m.encounter_id);
    if (!d.keep) continue;
    out.extract.encounters.push_back(m);
    out.labels[m.encounter_id] = d.label;
  }
  for (const auto& row : in.rows) {
    auto it = decisions.find(row.encounter_id);
    if (it == decisions.end())
      throw DataError("row for encounter '" + row.encounter_id + "' has no metadata");
    if (!it->second.keep) continue;
    if (row.day_of_stay > it->second.last_dos) {
      out.stats.n_rows_dropped_post_outcome++;
      continue;
    }
    out.extract.rows.push_back(row);
  }
  return out;
}

std::array<double, 4> fit_quintile_bins(std::vector<double> values) {
  if (values.size() < 5)
    throw DegenerateFeatureError("quintile fit needs >= 5 values, got " +
                                 std::to_string(values.size()));
  std::array<double, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = percentile_linear(values, 20.0 * (i + 1));
  return b;
}

int quintile_of(double v, const std::array<double, 4>& bounds) {
  for (int i = 0; i < 4; ++i)
    if (v <= bounds[i]) return i + 1;
  return 5;
}

int FeatureCodec::column_index(const std::string& id) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].id == id) return static_cast<int>(i);
  return -1;
}

namespace {

std::string col_id(const FeatureSpec& s, int bin, bool missing) {
  if (missing) return s.feature_name + ":na";
  if (s.categorical) return s.feature_name + ":c" + std::to_string(bin);
  return s.feature_name + ":q" + std::to_string(bin);
}

}  // namespace

std::vector<ColumnDef> canonical_columns(const std::vector<FeatureSpec>& specs) {
  std::vector<ColumnDef> out;
  for (const auto& s : specs) {
    auto push = [&](int bin, bool missing) {
      ColumnDef c;
      c.id = col_id(s, bin, missing);
      c.feature = s.feature;
      c.group = s.group;
      c.bin = missing ? -1 : bin;
      c.is_missing_bin = missing;
      out.push_back(std::move(c));
    };
    if (s.categorical) {
      for (int cat : s.categories) push(cat, false);
    } else if (!s.degenerate) {
      for (int q = 1; q <= 5; ++q) push(q, false);
    }
    if (s.missing_bin) push(-1, true);
  }
  return out;
}

namespace {

// Encoder working on an explicit column set (pre- or post-prune).
struct Encoder {
  const FeatureCodec& codec;
  const std::vector<ColumnDef>& columns;
  // (feature, bin) -> column index; missing bin keyed as bin = -1
  std::unordered_map<std::uint64_t, std::uint32_t> index;

  Encoder(const FeatureCodec& c, const std::vector<ColumnDef>& cols) : codec(c), columns(cols) {
    index.reserve(cols.size());
    for (std::uint32_t i = 0; i < cols.size(); ++i)
      index.emplace(key(cols[i].feature, cols[i].bin), i);
  }

  static std::uint64_t key(std::uint32_t feature, int bin) {
    return (static_cast<std::uint64_t>(feature) << 16) ^
           static_cast<std::uint64_t>(static_cast<std::uint16_t>(bin));
  }

  std::vector<std::uint32_t> encode(const sim::RawRow& row, EncodeReport* rep) const {
    std::vector<std::uint32_t> active;
    std::size_t vi = 0;
    for (const auto& spec : codec.specs) {
      // row.values sorted by feature id; specs indexed by feature id
      while (vi < row.values.size() && row.values[vi].first < spec.feature) ++vi;
      const bool present = vi < row.values.size() && row.values[vi].first == spec.feature;
      if (present) {
        const sim::Payload& v = row.values[vi].second;
        if (spec.categorical) {
          auto it = index.find(key(spec.feature, v.category));
          if (it != index.end())
            active.push_back(it->second);
          else if (!std::binary_search(spec.categories.begin(), spec.categories.end(), v.category) &&
                   rep)
            rep->n_unseen_categories++;  // unseen in training: all-zero
        } else if (!spec.degenerate) {
          auto it = index.find(key(spec.feature, quintile_of(v.number, spec.quintile_bounds)));
          if (it != index.end()) active.push_back(it->second);
        }
      } else if (!spec.categorical) {
        if (rep) rep->n_missing_numeric++;
        if (spec.missing_bin) {
          auto it = index.find(key(spec.feature, -1));
          if (it != index.end()) active.push_back(it->second);
        }
      }
    }
    std::sort(active.begin(), active.end());
    return active;
  }
};

FeatureMatrix encode_with(const sim::RawExtract& in,
                          const std::map<std::string, std::uint8_t>& labels,
                          const FeatureCodec& codec, const std::vector<ColumnDef>& cols,
                          EncodeReport* report) {
  std::unordered_map<std::string, const sim::EncounterMeta*> meta;
  for (const auto& m : in.encounters) meta[m.encounter_id] = &m;

  Encoder enc(codec, cols);
  FeatureMatrix out;
  out.columns.reserve(cols.size());
  for (const auto& c : cols) out.columns.push_back(c.id);
  out.rows.reserve(in.rows.size());
  out.row_active.reserve(in.rows.size());
  for (const auto& row : in.rows) {
    auto mit = meta.find(row.encounter_id);
    if (mit == meta.end())
      throw DataError("row for encounter '" + row.encounter_id + "' has no metadata");
    auto lit = labels.find(row.encounter_id);
    if (lit == labels.end())
      throw DataError("encounter '" + row.encounter_id + "' has no label");
    RowMeta rm;
    rm.encounter_id = row.encounter_id;
    rm.date = row.date;
    rm.day_of_stay = row.day_of_stay;
    rm.admit_month = month_of(day_of(mit->second->admit_at));
    rm.label = lit->second;
    out.rows.push_back(std::move(rm));
    out.row_active.push_back(enc.encode(row, report));
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> rare_column_mask(const FeatureMatrix& m, int min_encounters) {
  if (min_encounters < 0) throw ConfigError("min_encounters negative");
  std::vector<std::set<std::string>> encs(m.columns.size());
  for (std::size_t r = 0; r < m.row_active.size(); ++r)
    for (std::uint32_t c : m.row_active[r]) encs[c].insert(m.rows[r].encounter_id);
  std::vector<std::uint8_t> keep(m.columns.size());
  for (std::size_t c = 0; c < m.columns.size(); ++c)
    keep[c] = static_cast<int>(encs[c].size()) >= min_encounters ? 1 : 0;
  return keep;
}

FeatureCodec fit_codec(const sim::RawExtract& train, const sim::Taxonomy& tax,
                       const Options& opts) {
  if (opts.min_encounters < 0) throw ConfigError("featurize.min_encounters negative");
  FeatureCodec codec;
  codec.options = opts;
  for (const auto& g : tax.groups) codec.group_prefix[g.name] = g.prefix;

  // Collect training observations per feature.
  std::vector<std::vector<double>> numeric_vals(tax.features.size());
  std::vector<std::set<int>> cats(tax.features.size());
  for (const auto& row : train.rows) {
    for (const auto& [fid, v] : row.values) {
      if (fid >= tax.features.size())
        throw TaxonomyError("row references unknown feature id " + std::to_string(fid));
      if (tax.features[fid].categorical)
        cats[fid].insert(v.category);
      else
        numeric_vals[fid].push_back(v.number);
    }
  }

  codec.specs.reserve(tax.features.size());
  for (const auto& f : tax.features) {
    FeatureSpec s;
    s.feature = f.id;
    s.feature_name = f.name;
    s.group = tax.groups[f.group].name;
    s.categorical = f.categorical;
    if (f.categorical) {
      s.categories.assign(cats[f.id].begin(), cats[f.id].end());
    } else {
      s.missing_bin = opts.include_missing_bin;
      try {
        s.quintile_bounds = fit_quintile_bins(numeric_vals[f.id]);
      } catch (const DegenerateFeatureError&) {
        s.degenerate = true;  // demoted to missing-only
      }
    }
    codec.specs.push_back(std::move(s));
  }

  // Prune on the training matrix (full width), then freeze.
  const auto cols = canonical_columns(codec.specs);
  std::map<std::string, std::uint8_t> train_labels;
  for (const auto& m : train.encounters) train_labels[m.encounter_id] = 0;  // labels irrelevant here
  const FeatureMatrix full = encode_with(train, train_labels, codec, cols, nullptr);
  const auto keep = rare_column_mask(full, opts.min_encounters);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (keep[c])
      codec.columns.push_back(cols[c]);
    else
      codec.dropped.push_back(cols[c].id);
  }
  return codec;
}

FeatureMatrix encode_matrix(const sim::RawExtract& in,
                            const std::map<std::string, std::uint8_t>& labels,
                            const FeatureCodec& codec, EncodeReport* report) {
  return encode_with(in, labels, codec, codec.columns, report);
}

PairedIndex align_paired(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.columns != b.columns)
    throw SchemaError("paired matrices have different column sets (" +
                      std::to_string(a.columns.size()) + " vs " +
                      std::to_string(b.columns.size()) + " columns)");
  std::map<std::pair<std::string, DayIndex>, std::uint32_t> bkeys;
  for (std::uint32_t i = 0; i < b.rows.size(); ++i)
    bkeys.emplace(std::make_pair(b.rows[i].encounter_id, b.rows[i].date), i);

  PairedIndex out;
  std::unordered_set<std::uint32_t> used;
  for (std::uint32_t i = 0; i < a.rows.size(); ++i) {
    auto it = bkeys.find({a.rows[i].encounter_id, a.rows[i].date});
    if (it == bkeys.end()) {
      out.only_a.push_back(i);
    } else {
      out.pairs.emplace_back(i, it->second);
      used.insert(it->second);
    }
  }
  for (std::uint32_t i = 0; i < b.rows.size(); ++i)
    if (!used.count(i)) out.only_b.push_back(i);
  return out;
}

}  // namespace shiftlab::feat
