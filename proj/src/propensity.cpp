#include "obstudy/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "obstudy/error.hpp"
#include "obstudy/subclass.hpp"

namespace obstudy {

namespace {

constexpr double kExtremeProbability = 1e-10;
constexpr double kSeparationNorm = 1e3;

double log1p_exp(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& w) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += w(i) * eta(i) - log1p_exp(eta(i));
  return ll;
}

bool has_extreme(const Eigen::VectorXd& eta, double margin = kExtremeProbability) {
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    double e = logistic(eta(i));
    if (e < margin || e > 1.0 - margin) return true;
  }
  return false;
}

// Column centering/scaling used for conditioning. Constant columns are
// scaled to 1 and absorb the centering shifts when mapping back.
struct Standardizer {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  std::vector<bool> constant;
  Eigen::Index constant_col = -1;
};

Standardizer make_standardizer(const Eigen::MatrixXd& x) {
  Standardizer s;
  const Eigen::Index p = x.cols();
  s.center = Eigen::VectorXd::Zero(p);
  s.scale = Eigen::VectorXd::Ones(p);
  s.constant.assign(static_cast<std::size_t>(p), false);
  for (Eigen::Index j = 0; j < p; ++j) {
    if ((x.col(j).array() == x(0, j)).all()) {
      s.constant[static_cast<std::size_t>(j)] = true;
      if (s.constant_col < 0) s.constant_col = j;
    }
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    if (s.constant[static_cast<std::size_t>(j)]) {
      s.scale(j) = x(0, j) == 0.0 ? 1.0 : x(0, j);
      continue;
    }
    double m = s.constant_col >= 0 ? x.col(j).mean() : 0.0;
    double ss = std::sqrt((x.col(j).array() - m).square().mean());
    s.center(j) = m;
    s.scale(j) = ss > 0 ? ss : 1.0;
  }
  return s;
}

Eigen::VectorXd to_original(const Standardizer& s, const Eigen::VectorXd& gamma) {
  Eigen::VectorXd beta(gamma.size());
  double shift = 0.0;
  for (Eigen::Index j = 0; j < gamma.size(); ++j) {
    if (s.constant[static_cast<std::size_t>(j)]) continue;
    beta(j) = gamma(j) / s.scale(j);
    shift += gamma(j) * s.center(j) / s.scale(j);
  }
  for (Eigen::Index j = 0; j < gamma.size(); ++j)
    if (s.constant[static_cast<std::size_t>(j)])
      beta(j) = (gamma(j) - (j == s.constant_col ? shift : 0.0)) / s.scale(j);
  return beta;
}

}  // namespace

PropensityFit fit_logistic(const Eigen::MatrixXd& x, std::span<const int> w, std::vector<std::string> labels,
                           const LogisticOptions& options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (static_cast<std::size_t>(n) != w.size())
    fail(ErrorKind::domain, "design matrix has " + std::to_string(n) + " rows but treatment has " +
                                std::to_string(w.size()) + " entries");
  if (p == 0) fail(ErrorKind::spec, "design matrix has no columns");
  if (p > n) fail(ErrorKind::collinearity, "more design columns (" + std::to_string(p) + ") than units");
  if (labels.empty())
    for (Eigen::Index j = 0; j < p; ++j) labels.push_back("x" + std::to_string(j));

  Eigen::VectorXd wv(n);
  std::size_t n_treated = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    int wi = w[static_cast<std::size_t>(i)];
    if (wi != 0 && wi != 1) fail(ErrorKind::domain, "treatment indicator outside {0,1} at unit " + std::to_string(i));
    wv(i) = wi;
    n_treated += static_cast<std::size_t>(wi);
  }
  if (n_treated == 0 || n_treated == static_cast<std::size_t>(n))
    fail(ErrorKind::no_contrast, "all units are in one treatment arm");

  Standardizer st = make_standardizer(x);
  Eigen::MatrixXd z = x;
  for (Eigen::Index j = 0; j < p; ++j) z.col(j) = (x.col(j).array() - st.center(j)) / st.scale(j);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::string names;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < p; ++k) names += (names.empty() ? "" : ", ") + labels[perm(k)];
    fail(ErrorKind::collinearity, "design matrix is rank deficient; linearly dependent columns: " + names);
  }

  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = z * gamma;
  double ll = log_likelihood(eta, wv);

  PropensityFit fit;
  fit.labels = std::move(labels);
  fit.log_likelihood_trace.push_back(ll);

  for (int it = 1; it <= options.max_iterations; ++it) {
    Eigen::VectorXd e = eta.unaryExpr([](double v) { return logistic(v); });
    Eigen::VectorXd score = z.transpose() * (wv - e);
    Eigen::VectorXd weight = e.array() * (1.0 - e.array());
    Eigen::MatrixXd info = z.transpose() * weight.asDiagonal() * z;
    Eigen::VectorXd step = info.ldlt().solve(score);
    if (!step.allFinite()) step = info.completeOrthogonalDecomposition().solve(score);
    const double pre_score = score.cwiseAbs().maxCoeff();

    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd candidate;
    Eigen::VectorXd candidate_eta;
    double candidate_ll = ll;
    for (int h = 0; h <= options.max_step_halvings; ++h, t *= 0.5) {
      candidate = gamma + t * step;
      candidate_eta = z * candidate;
      candidate_ll = log_likelihood(candidate_eta, wv);
      if (candidate_ll >= ll) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      fit.converged = pre_score < 1e-6;
      break;
    }

    const double rel_change = std::abs(candidate_ll - ll) / std::max(std::abs(ll), std::numeric_limits<double>::min());
    const double step_size = (t * step).cwiseAbs().maxCoeff();
    const bool norm_grew = candidate.norm() > gamma.norm();
    gamma = candidate;
    eta = candidate_eta;
    ll = candidate_ll;
    fit.log_likelihood_trace.push_back(ll);
    fit.iterations = it;

    // Near-certain units shrink the score without a finite optimum (quasi
    // separation), so the score test alone cannot end the iteration there.
    if (pre_score < options.score_tol && !has_extreme(eta, 1e-6)) {
      fit.converged = true;
      break;
    }
    const bool extreme = has_extreme(eta);
    if (extreme && (norm_grew || to_original(st, gamma).norm() > kSeparationNorm)) {
      fit.separation_flag = true;
      break;
    }
    // A small likelihood gain only signals convergence when the step itself
    // is small; along a direction of recession the gain vanishes while the
    // step stays O(1).
    if (rel_change < options.relative_loglik_tol && step_size < 1e-4 * std::max(1.0, gamma.cwiseAbs().maxCoeff())) {
      fit.converged = true;
      break;
    }
  }

  Eigen::VectorXd beta = to_original(st, gamma);
  fit.coefficients.assign(beta.data(), beta.data() + beta.size());
  fit.standardized_coefficients.assign(gamma.data(), gamma.data() + gamma.size());
  fit.linear_scores.assign(eta.data(), eta.data() + eta.size());
  fit.probabilities.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) fit.probabilities[static_cast<std::size_t>(i)] = logistic(eta(i));
  fit.log_likelihood = ll;
  return fit;
}

PropensityFit fit_logistic(const DesignMatrix& design, std::span<const int> w, const LogisticOptions& options) {
  return fit_logistic(design.values, w, design.labels, options);
}

PropensityFit fit_propensity(const StudyTable& design_table, const ModelSpec& spec, const LogisticOptions& options) {
  design_table.require_no_outcomes("fit_propensity");
  DesignMatrix dm = expand_design_matrix(design_table, spec);
  auto w = design_table.treatment_indicator();
  return fit_logistic(dm, w, options);
}

std::string fit_summary_csv(const PropensityFit& fit) {
  std::string out = "term,coefficient\n";
  for (std::size_t j = 0; j < fit.labels.size(); ++j)
    out += csv_escape(fit.labels[j]) + "," + format_number(fit.coefficients[j]) + "\n";
  return out;
}

double max_score_component(const Eigen::MatrixXd& x, std::span<const int> w, const PropensityFit& fit) {
  Eigen::VectorXd resid(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    resid(i) = w[static_cast<std::size_t>(i)] - fit.probabilities[static_cast<std::size_t>(i)];
  return (x.transpose() * resid).cwiseAbs().maxCoeff();
}

SeparationReport detect_separation(const PropensityFit& fit) {
  SeparationReport report;
  for (double c : fit.coefficients) report.coefficient_norm += c * c;
  report.coefficient_norm = std::sqrt(report.coefficient_norm);
  for (std::size_t i = 0; i < fit.probabilities.size(); ++i) {
    double e = fit.probabilities[i];
    if (e < kExtremeProbability || e > 1.0 - kExtremeProbability) report.degenerate_units.push_back(i);
  }
  report.flagged = fit.separation_flag ||
                   (!report.degenerate_units.empty() && report.coefficient_norm > kSeparationNorm);
  if (!report.flagged) return report;

  double largest = 0.0;
  for (std::size_t j = 0; j < fit.standardized_coefficients.size(); ++j)
    if (fit.labels[j] != "(intercept)") largest = std::max(largest, std::abs(fit.standardized_coefficients[j]));
  for (std::size_t j = 0; j < fit.standardized_coefficients.size(); ++j)
    if (fit.labels[j] != "(intercept)" && largest > 0 && std::abs(fit.standardized_coefficients[j]) >= 0.5 * largest)
      report.suspect_terms.push_back(fit.labels[j]);
  return report;
}

std::string_view to_string(BinTag tag) {
  switch (tag) {
    case BinTag::both_arms: return "both_arms";
    case BinTag::treated_only: return "treated_only";
    case BinTag::control_only: return "control_only";
    case BinTag::empty: return "empty";
  }
  return "empty";
}

OverlapReport overlap_histogram(std::span<const double> scores, std::span<const int> w, int n_bins) {
  if (n_bins < 2) fail(ErrorKind::domain, "overlap histogram needs at least 2 bins");
  if (scores.size() != w.size()) fail(ErrorKind::domain, "scores and treatment differ in length");
  if (scores.empty()) fail(ErrorKind::domain, "no units");

  auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it;
  const double hi = *hi_it;

  auto tag_of = [](std::size_t t, std::size_t c) {
    if (t && c) return BinTag::both_arms;
    if (t) return BinTag::treated_only;
    if (c) return BinTag::control_only;
    return BinTag::empty;
  };

  OverlapReport report;
  if (lo == hi) {
    report.degenerate = true;
    OverlapBin bin{lo, hi, 0, 0, BinTag::empty};
    for (int wi : w) (wi ? bin.n_treated : bin.n_control)++;
    bin.tag = tag_of(bin.n_treated, bin.n_control);
    report.bins.push_back(bin);
  } else {
    SubclassAssignment bins = subclassify_equal_width(scores, n_bins, "linear_score");
    report.bins.resize(static_cast<std::size_t>(n_bins));
    for (int k = 0; k < n_bins; ++k) {
      auto& b = report.bins[static_cast<std::size_t>(k)];
      b.lo = k == 0 ? lo : bins.boundaries[static_cast<std::size_t>(k - 1)];
      b.hi = k == n_bins - 1 ? hi : bins.boundaries[static_cast<std::size_t>(k)];
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
      auto& b = report.bins[static_cast<std::size_t>(bins.labels[i] - 1)];
      (w[i] ? b.n_treated : b.n_control)++;
    }
    for (auto& b : report.bins) b.tag = tag_of(b.n_treated, b.n_control);
  }

  for (const auto& b : report.bins) {
    if (b.tag != BinTag::treated_only && b.tag != BinTag::control_only) continue;
    if (!report.no_inference_ranges.empty() && report.no_inference_ranges.back().tag == b.tag &&
        report.no_inference_ranges.back().hi == b.lo) {
      report.no_inference_ranges.back().hi = b.hi;
    } else {
      report.no_inference_ranges.push_back({b.lo, b.hi, b.tag});
    }
  }
  return report;
}

OverlapReport overlap_histogram(const PropensityFit& fit, std::span<const int> w, int n_bins) {
  return overlap_histogram(fit.linear_scores, w, n_bins);
}

}  // namespace obstudy
