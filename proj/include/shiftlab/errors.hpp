#pragma once

#include <stdexcept>
#include <string>

namespace shiftlab {

// Error taxonomy. Config/data/schema problems throw; statistically undefined
// results (single-class AUROC, empty sets) are std::nullopt markers instead.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error { using Error::Error; };          // bad/unknown config keys, invalid values
struct DataError : Error { using Error::Error; };            // malformed or inconsistent input data
struct SchemaError : Error { using Error::Error; };          // column sets / file schema mismatch
struct IoError : Error { using Error::Error; };              // missing/unwritable files
struct TemporalBoundsError : Error { using Error::Error; };  // as_of outside the legal range
struct TaxonomyError : Error { using Error::Error; };        // unknown feature/group reference
struct DegenerateFeatureError : Error { using Error::Error; };  // too few values to fit bins
struct DegenerateLabelError : Error { using Error::Error; };    // single-class training labels
struct TaskMappingError : Error { using Error::Error; };        // date / task index out of range
struct InclusionViolationError : Error { using Error::Error; }; // row set violates inclusion rules
struct FoldError : Error { using Error::Error; };               // CV folds impossible/undefined
struct UndefinedMetricError : Error { using Error::Error; };    // metric undefined where a value is required

}  // namespace shiftlab
