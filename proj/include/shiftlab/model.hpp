#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftlab/featurize.hpp"

namespace shiftlab::model {

// ---------------------------------------------------------------------------
// Generic L2-regularized logistic regression on sparse binary rows, fitted by
// full-batch gradient descent with a backtracking (Armijo) line search.

struct LogisticProblem {
  std::size_t n_cols = 0;                               // weight dimension (intercept excluded)
  std::vector<std::vector<std::uint32_t>> rows;         // sorted active indices per row
  std::vector<std::uint8_t> labels;
  double lambda = 0.0;                                  // L2 strength (intercept unpenalized)
};

// Mean cross-entropy + (lambda/2)*||w||^2. weights[0] is the intercept.
double logistic_loss(const LogisticProblem& p, std::span<const double> weights);
std::vector<double> logistic_grad(const LogisticProblem& p, std::span<const double> weights);

struct Convergence {
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
};

// Deterministic: zero start, fixed Armijo constants, step warm-started from
// the previous accepted step; once loss differences fall below double
// precision it continues on monotone gradient-norm descent. Stops at
// ||grad||_2 <= tolerance.
std::vector<double> minimize_logistic(const LogisticProblem& p, double tolerance,
                                      int max_iterations, Convergence* conv = nullptr);

// ---------------------------------------------------------------------------
// Multitask layout: weight vector [shared || task_0 || task_1 || ...], task
// blocks one per training year; a row contributes to shared + its year block.

std::vector<std::uint32_t> multitask_expand(std::span<const std::uint32_t> row, int task_index,
                                            int n_tasks, int base_width);

struct TrainConfig {
  int days_per_encounter = 3;
  std::vector<double> reg_grid = {1e-3, 1e-2, 1e-1};
  double tolerance = 1e-8;
  int max_iterations = 5000;
  std::uint64_t seed = 1;
};

struct RiskModel {
  std::vector<std::string> base_columns;
  double intercept = 0.0;
  std::vector<double> shared;                     // size = base width
  std::vector<int> task_years;                    // ascending
  std::vector<std::vector<double>> task_weights;  // per year, size = base width
  double regularization = 0.0;
  Convergence convergence;
  std::uint64_t seed = 0;
  int days_per_encounter = 0;

  // Inference task: most recent training year <= year; clamped to the first.
  int task_for_year(int year) const;
};

// Pick days_per_encounter distinct rows per encounter, deterministic per
// (seed, encounter_id). Encounters with fewer rows raise
// InclusionViolationError; row order is preserved.
feat::FeatureMatrix subsample_days(const feat::FeatureMatrix& m, int days_per_encounter,
                                   std::uint64_t seed);

struct CvFold {
  double lambda = 0.0;
  int held_out_year = 0;
  std::optional<double> auroc;  // nullopt: undefined fold (single-class year)
};

struct CvResult {
  double chosen_lambda = 0.0;
  std::vector<CvFold> table;
};

// Leave-one-year-out CV over the regularization grid; selection by mean
// held-out encounter-level AUROC, ties toward the stronger penalty. Needs
// >= 2 training years (FoldError otherwise).
CvResult cross_validate(const feat::FeatureMatrix& m, const TrainConfig& cfg);

// Full training pipeline: subsample days, expand tasks, fit. Uses the single
// grid value directly, or cross-validates when the grid has several and the
// data has >= 2 years. Throws DegenerateLabelError on single-class labels.
RiskModel train(const feat::FeatureMatrix& m, const TrainConfig& cfg,
                CvResult* cv_out = nullptr);

// Daily probability for one row of base-width active columns.
double predict_day(const RiskModel& model, std::span<const std::uint32_t> active, DayIndex date);

// Encounter-level score: max over the stay's daily scores.
std::optional<double> encounter_max_score(std::span<const double> daily_scores);

// Score every row of a matrix (columns must match the model).
std::vector<double> score_rows(const RiskModel& model, const feat::FeatureMatrix& m);

}  // namespace shiftlab::model
