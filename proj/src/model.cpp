#include "shiftlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "shiftlab/errors.hpp"
#include "shiftlab/metrics.hpp"
#include "shiftlab/rng.hpp"
#include "shiftlab/stats.hpp"

namespace shiftlab::model {

namespace {

// softplus(z) = log(1 + e^z), numerically stable
double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
}

std::vector<double> logits(const LogisticProblem& p, std::span<const double> w) {
  std::vector<double> z(p.rows.size());
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    double s = w[0];
    for (std::uint32_t j : p.rows[i]) s += w[1 + j];
    z[i] = s;
  }
  return z;
}

}  // namespace

double logistic_loss(const LogisticProblem& p, std::span<const double> w) {
  const auto z = logits(p, w);
  double ce = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    ce += softplus(z[i]) - (p.labels[i] ? z[i] : 0.0);
  ce /= static_cast<double>(std::max<std::size_t>(1, z.size()));
  double reg = 0.0;
  for (std::size_t j = 1; j < w.size(); ++j) reg += w[j] * w[j];
  return ce + 0.5 * p.lambda * reg;
}

std::vector<double> logistic_grad(const LogisticProblem& p, std::span<const double> w) {
  const auto z = logits(p, w);
  const double inv_n = 1.0 / static_cast<double>(std::max<std::size_t>(1, z.size()));
  std::vector<double> g(w.size(), 0.0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = (sigmoid(z[i]) - (p.labels[i] ? 1.0 : 0.0)) * inv_n;
    g[0] += d;
    for (std::uint32_t j : p.rows[i]) g[1 + j] += d;
  }
  for (std::size_t j = 1; j < w.size(); ++j) g[j] += p.lambda * w[j];
  return g;
}

std::vector<double> minimize_logistic(const LogisticProblem& p, double tolerance,
                                      int max_iterations, Convergence* conv) {
  if (p.rows.size() != p.labels.size())
    throw DataError("logistic problem rows/labels size mismatch");
  for (const auto& row : p.rows)
    for (std::uint32_t j : row)
      if (j >= p.n_cols) throw DataError("logistic problem row index out of range");

  std::vector<double> w(1 + p.n_cols, 0.0);
  Convergence c;
  double step = 1.0;
  double loss = logistic_loss(p, w);
  auto g = logistic_grad(p, w);
  auto norm2 = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
  };
  double gn2 = norm2(g);
  std::vector<double> trial(w.size());
  bool loss_usable = true;
  for (int it = 0; it < max_iterations; ++it) {
    c.grad_norm = std::sqrt(gn2);
    c.iterations = it;
    if (c.grad_norm <= tolerance) {
      c.converged = true;
      break;
    }
    bool accepted = false;
    if (loss_usable) {
      // Armijo backtracking, warm-started from twice the last accepted step.
      // The decrease must be strict: once deltas shrink below double
      // precision the test would otherwise accept no-progress steps forever.
      double t = std::min(step * 2.0, 1e6);
      while (t > 1e-18) {
        for (std::size_t j = 0; j < w.size(); ++j) trial[j] = w[j] - t * g[j];
        const double lt = logistic_loss(p, trial);
        if (lt < loss && lt <= loss - 1e-4 * t * gn2) {
          w.swap(trial);
          loss = lt;
          step = t;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) loss_usable = false;
    }
    if (!accepted) {
      // Endgame: the loss is flat to machine precision, but the gradient norm
      // still measures progress. Step while it strictly decreases.
      double t = std::min(step * 2.0, 1e6);
      while (t > 1e-18) {
        for (std::size_t j = 0; j < w.size(); ++j) trial[j] = w[j] - t * g[j];
        auto gt = logistic_grad(p, trial);
        const double gt2 = norm2(gt);
        if (gt2 < gn2) {
          w.swap(trial);
          g.swap(gt);
          gn2 = gt2;
          step = t;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) break;  // gradient-norm floor: nothing left to gain
      continue;
    }
    g = logistic_grad(p, w);
    gn2 = norm2(g);
  }
  if (conv) *conv = c;
  return w;
}

std::vector<std::uint32_t> multitask_expand(std::span<const std::uint32_t> row, int task_index,
                                            int n_tasks, int base_width) {
  if (n_tasks <= 0 || base_width <= 0)
    throw TaskMappingError("multitask expand needs positive task count and width");
  if (task_index < 0 || task_index >= n_tasks)
    throw TaskMappingError("task index " + std::to_string(task_index) + " outside [0, " +
                           std::to_string(n_tasks) + ")");
  std::vector<std::uint32_t> out;
  out.reserve(row.size() * 2);
  for (std::uint32_t j : row) {
    if (j >= static_cast<std::uint32_t>(base_width))
      throw DataError("row column index exceeds base width");
    out.push_back(j);
  }
  const std::uint32_t offset =
      static_cast<std::uint32_t>(base_width) * (1u + static_cast<std::uint32_t>(task_index));
  for (std::uint32_t j : row) out.push_back(offset + j);
  return out;
}

int RiskModel::task_for_year(int year) const {
  if (task_years.empty()) throw TaskMappingError("model has no task years");
  int t = 0;
  for (std::size_t i = 0; i < task_years.size(); ++i)
    if (task_years[i] <= year) t = static_cast<int>(i);
  return t;  // years before the first task clamp to the first
}

feat::FeatureMatrix subsample_days(const feat::FeatureMatrix& m, int days_per_encounter,
                                   std::uint64_t seed) {
  if (days_per_encounter <= 0) throw ConfigError("days_per_encounter must be positive");
  // group row indices by encounter, preserving order
  std::vector<std::pair<std::string, std::vector<std::uint32_t>>> groups;
  std::map<std::string, std::size_t> where;
  for (std::uint32_t i = 0; i < m.rows.size(); ++i) {
    auto [it, inserted] = where.emplace(m.rows[i].encounter_id, groups.size());
    if (inserted) groups.push_back({m.rows[i].encounter_id, {}});
    groups[it->second].second.push_back(i);
  }

  std::vector<std::uint32_t> chosen;
  for (const auto& [enc, idx] : groups) {
    const std::size_t n = idx.size();
    if (n < static_cast<std::size_t>(days_per_encounter))
      throw InclusionViolationError("encounter '" + enc + "' has " + std::to_string(n) +
                                    " rows, needs >= " + std::to_string(days_per_encounter));
    Rng r(seed, {stream::kSubsample, fnv1a64(enc)});
    std::vector<std::uint32_t> local(idx);
    for (int i = 0; i < days_per_encounter; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) + r.below(n - static_cast<std::size_t>(i));
      std::swap(local[static_cast<std::size_t>(i)], local[j]);
    }
    local.resize(static_cast<std::size_t>(days_per_encounter));
    chosen.insert(chosen.end(), local.begin(), local.end());
  }
  std::sort(chosen.begin(), chosen.end());

  feat::FeatureMatrix out;
  out.columns = m.columns;
  out.rows.reserve(chosen.size());
  out.row_active.reserve(chosen.size());
  for (std::uint32_t i : chosen) {
    out.rows.push_back(m.rows[i]);
    out.row_active.push_back(m.row_active[i]);
  }
  return out;
}

namespace {

std::vector<int> distinct_years(const feat::FeatureMatrix& m) {
  std::set<int> y;
  for (const auto& r : m.rows) y.insert(r.admit_month.year);
  return {y.begin(), y.end()};
}

void check_config(const TrainConfig& cfg) {
  if (cfg.reg_grid.empty()) throw ConfigError("train.reg_grid empty");
  for (double l : cfg.reg_grid)
    if (!(l >= 0) || !std::isfinite(l)) throw ConfigError("train.reg_grid entry invalid");
  if (!(cfg.tolerance > 0)) throw ConfigError("train.tolerance must be positive");
  if (cfg.max_iterations < 1) throw ConfigError("train.max_iterations must be >= 1");
  if (cfg.days_per_encounter < 1) throw ConfigError("train.days_per_encounter must be >= 1");
}

void check_both_classes(const feat::FeatureMatrix& m) {
  bool pos = false, neg = false;
  for (const auto& r : m.rows) (r.label ? pos : neg) = true;
  if (!pos || !neg) throw DegenerateLabelError("training labels contain a single class");
}

RiskModel fit_multitask(const feat::FeatureMatrix& subsampled, const std::vector<int>& years,
                        double lambda, const TrainConfig& cfg) {
  const int base = static_cast<int>(subsampled.columns.size());
  const int n_tasks = static_cast<int>(years.size());
  std::map<int, int> task_of_year;
  for (int t = 0; t < n_tasks; ++t) task_of_year[years[static_cast<std::size_t>(t)]] = t;

  LogisticProblem prob;
  prob.n_cols = static_cast<std::size_t>(base) * (1u + static_cast<std::size_t>(n_tasks));
  prob.lambda = lambda;
  prob.rows.reserve(subsampled.rows.size());
  prob.labels.reserve(subsampled.rows.size());
  for (std::size_t i = 0; i < subsampled.rows.size(); ++i) {
    const int year = subsampled.rows[i].admit_month.year;
    auto it = task_of_year.find(year);
    if (it == task_of_year.end())
      throw TaskMappingError("row admit year " + std::to_string(year) + " has no task");
    prob.rows.push_back(multitask_expand(subsampled.row_active[i], it->second, n_tasks, base));
    prob.labels.push_back(subsampled.rows[i].label);
  }

  RiskModel model;
  model.base_columns = subsampled.columns;
  model.task_years = years;
  model.regularization = lambda;
  model.seed = cfg.seed;
  model.days_per_encounter = cfg.days_per_encounter;
  const auto w = minimize_logistic(prob, cfg.tolerance, cfg.max_iterations, &model.convergence);
  model.intercept = w[0];
  model.shared.assign(w.begin() + 1, w.begin() + 1 + base);
  for (int t = 0; t < n_tasks; ++t) {
    const std::size_t off = 1 + static_cast<std::size_t>(base) * (1 + static_cast<std::size_t>(t));
    model.task_weights.emplace_back(w.begin() + static_cast<std::ptrdiff_t>(off),
                                    w.begin() + static_cast<std::ptrdiff_t>(off + base));
  }
  return model;
}

double predict_year(const RiskModel& model, std::span<const std::uint32_t> active, int year) {
  const std::size_t base = model.base_columns.size();
  const int t = model.task_for_year(year);
  double z = model.intercept;
  for (std::uint32_t j : active) {
    if (j >= base) throw DataError("prediction row wider than the model's base width");
    z += model.shared[j] + model.task_weights[static_cast<std::size_t>(t)][j];
  }
  return sigmoid(z);
}

}  // namespace

CvResult cross_validate(const feat::FeatureMatrix& m, const TrainConfig& cfg) {
  check_config(cfg);
  check_both_classes(m);
  const auto years = distinct_years(m);
  if (years.size() < 2) throw FoldError("cross-validation needs >= 2 training years");

  const auto subsampled = subsample_days(m, cfg.days_per_encounter, cfg.seed);

  CvResult out;
  double best_mean = -1.0;
  for (double lambda : cfg.reg_grid) {
    double sum = 0.0;
    int defined = 0;
    for (int held : years) {
      CvFold fold;
      fold.lambda = lambda;
      fold.held_out_year = held;

      feat::FeatureMatrix tr;
      tr.columns = subsampled.columns;
      for (std::size_t i = 0; i < subsampled.rows.size(); ++i) {
        if (subsampled.rows[i].admit_month.year == held) continue;
        tr.rows.push_back(subsampled.rows[i]);
        tr.row_active.push_back(subsampled.row_active[i]);
      }
      std::vector<int> tr_years;
      for (int y : years)
        if (y != held) tr_years.push_back(y);

      bool pos = false, neg = false;
      for (const auto& r : tr.rows) (r.label ? pos : neg) = true;
      if (pos && neg) {
        const RiskModel fm = fit_multitask(tr, tr_years, lambda, cfg);
        // Evaluate on the held-out year's full (unsubsampled) rows.
        std::map<std::string, std::pair<double, std::uint8_t>> best_scores;
        for (std::size_t i = 0; i < m.rows.size(); ++i) {
          if (m.rows[i].admit_month.year != held) continue;
          const double s = predict_year(fm, m.row_active[i], held);
          auto [it, inserted] = best_scores.try_emplace(m.rows[i].encounter_id,
                                                        std::make_pair(s, m.rows[i].label));
          if (!inserted) it->second.first = std::max(it->second.first, s);
        }
        metrics::ScoreSet ss;
        for (const auto& [enc, sl] : best_scores)
          ss.push_back({enc, MonthKey{held, 1}, sl.first, sl.second});
        fold.auroc = metrics::auroc(ss);
      }
      if (fold.auroc) {
        sum += *fold.auroc;
        ++defined;
      }
      out.table.push_back(fold);
    }
    if (defined == 0) continue;
    const double mean = sum / defined;
    // >= prefers the later (larger) lambda on exact ties
    if (mean >= best_mean) {
      best_mean = mean;
      out.chosen_lambda = lambda;
    }
  }
  if (best_mean < 0) throw FoldError("no cross-validation fold produced a defined AUROC");
  return out;
}

RiskModel train(const feat::FeatureMatrix& m, const TrainConfig& cfg, CvResult* cv_out) {
  check_config(cfg);
  check_both_classes(m);
  const auto years = distinct_years(m);

  double lambda;
  if (cfg.reg_grid.size() == 1) {
    lambda = cfg.reg_grid[0];
  } else {
    if (years.size() < 2)
      throw FoldError("regularization grid needs >= 2 training years to cross-validate");
    CvResult cv = cross_validate(m, cfg);
    lambda = cv.chosen_lambda;
    if (cv_out) *cv_out = std::move(cv);
  }

  const auto subsampled = subsample_days(m, cfg.days_per_encounter, cfg.seed);
  return fit_multitask(subsampled, years, lambda, cfg);
}

double predict_day(const RiskModel& model, std::span<const std::uint32_t> active, DayIndex date) {
  return predict_year(model, active, civil_year(date));
}

std::optional<double> encounter_max_score(std::span<const double> daily_scores) {
  if (daily_scores.empty()) return std::nullopt;
  double best = daily_scores[0];
  for (double s : daily_scores) best = std::max(best, s);
  return best;
}

std::vector<double> score_rows(const RiskModel& model, const feat::FeatureMatrix& m) {
  if (m.columns != model.base_columns)
    throw SchemaError("matrix columns do not match the model's training columns");
  std::vector<double> out;
  out.reserve(m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i)
    out.push_back(predict_year(model, m.row_active[i], m.rows[i].admit_month.year));
  return out;
}

}  // namespace shiftlab::model
