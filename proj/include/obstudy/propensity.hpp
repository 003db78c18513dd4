#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "obstudy/model_spec.hpp"

namespace obstudy {

/// Maximum-likelihood logistic fit of the treatment indicator. Coefficients
/// are reported on the original column scale; `linear_scores` is the logit
/// (eta) used for subclassification and `probabilities` the fitted e_i.
struct PropensityFit {
  std::vector<std::string> labels;
  std::vector<double> coefficients;
  std::vector<double> standardized_coefficients;
  std::vector<double> linear_scores;
  std::vector<double> probabilities;
  double log_likelihood = 0.0;
  std::vector<double> log_likelihood_trace;
  int iterations = 0;
  bool converged = false;
  bool separation_flag = false;
};

struct LogisticOptions {
  int max_iterations = 50;
  int max_step_halvings = 10;
  double relative_loglik_tol = 1e-10;
  double score_tol = 1e-8;
};

PropensityFit fit_logistic(const DesignMatrix& design, std::span<const int> w,
                           const LogisticOptions& options = {});

PropensityFit fit_logistic(const Eigen::MatrixXd& x, std::span<const int> w,
                           std::vector<std::string> labels = {}, const LogisticOptions& options = {});

/// Convenience: expand the spec against the table and fit its treatment column.
PropensityFit fit_propensity(const StudyTable& design_table, const ModelSpec& spec,
                             const LogisticOptions& options = {});

/// Fit summary: term,coefficient (standard errors are not reported).
std::string fit_summary_csv(const PropensityFit& fit);

/// max_j |sum_i (w_i - e_i) x_ij| on the original design columns.
double max_score_component(const Eigen::MatrixXd& x, std::span<const int> w, const PropensityFit& fit);

struct SeparationReport {
  bool flagged = false;
  std::vector<std::size_t> degenerate_units;
  std::vector<std::string> suspect_terms;
  double coefficient_norm = 0.0;
};

/// Flags a fit whose probabilities reach within 1e-10 of 0 or 1 while the
/// coefficient norm exceeds 1e3, or which the fitter itself stopped for
/// divergence. Suspect terms are the columns whose standardized coefficients
/// dominate the divergent direction.
SeparationReport detect_separation(const PropensityFit& fit);

enum class BinTag { both_arms, treated_only, control_only, empty };

std::string_view to_string(BinTag tag);

struct OverlapBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  BinTag tag = BinTag::empty;
};

struct ScoreRange {
  double lo = 0.0;
  double hi = 0.0;
  BinTag tag = BinTag::empty;
};

struct OverlapReport {
  std::vector<OverlapBin> bins;
  /// Contiguous single-arm score ranges: outside common support, so no
  /// causal comparison is possible there without model assumptions.
  std::vector<ScoreRange> no_inference_ranges;
  bool degenerate = false;
};

OverlapReport overlap_histogram(std::span<const double> scores, std::span<const int> w, int n_bins);
OverlapReport overlap_histogram(const PropensityFit& fit, std::span<const int> w, int n_bins);

}  // namespace obstudy
