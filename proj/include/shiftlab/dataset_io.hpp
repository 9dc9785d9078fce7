#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shiftlab/featurize.hpp"
#include "shiftlab/metrics.hpp"
#include "shiftlab/model.hpp"
#include "shiftlab/sim.hpp"

namespace shiftlab::io {

// Deterministic float text (%.17g: shortest round-trip within printf).
std::string fmt_double(double v);

std::string read_file(const std::string& path);                     // IoError if unreadable
void write_file(const std::string& path, const std::string& data);  // creates parent dirs
std::string hash_hex(const std::string& bytes);                     // fnv1a64, 16 hex chars

// ---------------------------------------------------------------------------
// Raw extracts: one JSON object per encounter-day row (values keyed by
// feature name; categorical as "c<k>", numeric as number) plus an
// encounter-metadata sidecar.

void write_extract(const std::string& dir, const std::string& name, const sim::RawExtract& ex,
                   const sim::Taxonomy& tax);
sim::RawExtract read_extract(const std::string& dir, const std::string& name,
                             const sim::Taxonomy& tax);

void write_taxonomy(const std::string& path, const sim::Taxonomy& tax);
sim::Taxonomy read_taxonomy(const std::string& path);

void write_codec(const std::string& path, const feat::FeatureCodec& codec);
feat::FeatureCodec read_codec(const std::string& path);

// ---------------------------------------------------------------------------
// Feature matrices: sparse cell triples (row_key, column, 1) + row metadata +
// a column list (needed to represent retained-but-inactive columns).

struct MatrixLoadReport {
  long long n_cells = 0;
  int n_rows_all_zero = 0;  // metadata rows with no cells
};

void write_matrix(const std::string& dir, const std::string& name, const feat::FeatureMatrix& m);
feat::FeatureMatrix read_matrix(const std::string& dir, const std::string& name,
                                MatrixLoadReport* report = nullptr);

void write_model(const std::string& path, const model::RiskModel& m);
model::RiskModel read_model(const std::string& path);

// ---------------------------------------------------------------------------
// Daily scores: append-only CSV (run_date, encounter_id, day_of_stay, score).
// Duplicate appends are harmless downstream because encounter aggregation
// takes the max.

struct DailyScore {
  DayIndex run_date = 0;
  std::string encounter_id;
  int day_of_stay = 0;
  double score = 0.0;
};

void append_daily_scores(const std::string& path, const std::vector<DailyScore>& rows);
std::vector<DailyScore> read_daily_scores(const std::string& path);

// Encounter-level scored set (max over scored days).
struct ScoredEncounter {
  std::string encounter_id;
  MonthKey admit_month;
  std::uint8_t label = 0;
  double score = 0.0;
  int n_days = 0;  // scored days
};
using ScoredSet = std::vector<ScoredEncounter>;

metrics::ScoreSet to_score_set(const ScoredSet& s);
void write_scored_set(const std::string& path, const ScoredSet& s);
ScoredSet read_scored_set(const std::string& path);

// ---------------------------------------------------------------------------
// Manifest: (config hash, seed) plus content hashes of every produced file,
// so every reported number is traceable to its inputs.

struct Manifest {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::map<std::string, std::string> files;  // out-dir-relative path -> content hash
  std::vector<std::string> commands;
};

Manifest load_manifest(const std::string& out_dir);  // absent file -> empty manifest
void save_manifest(const std::string& out_dir, const Manifest& m);
void manifest_record(Manifest& m, const std::string& out_dir, const std::string& rel_path);

}  // namespace shiftlab::io
