#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "abi/num/rng.hpp"
#include "abi/num/tensor.hpp"

namespace abi::diag {

// All diagnostics take posterior draws as (datasets, draws, variables) and
// ground truth as (datasets, variables), both f64, and are pure functions of
// their inputs (rank tie-breaking reads the caller's stream).

// rank = (#draws < truth + u * #draws == truth) / draws, u ~ U(0,1).
// Uniform ranks over datasets indicate a calibrated posterior.
num::TensorD fractional_ranks(const num::TensorD& estimates, const num::TensorD& targets,
                              num::RngStream& tie_break);

// Rank ECDF per variable on K = min(datasets, 100) grid points in (0,1) with
// simultaneous Monte Carlo confidence bands for the uniform null. In
// difference mode the diagonal is subtracted from series and bands.
struct EcdfDiagnostic {
    std::vector<double> grid;
    std::vector<std::vector<double>> ecdf;  // [variable][grid point]
    std::vector<double> lower, upper;       // same mode as ecdf
    bool difference = false;
};
EcdfDiagnostic calibration_ecdf(const num::TensorD& ranks, double band_alpha, bool difference = false);

// ln of the smallest two-sided binomial tail probability of the rank ECDF
// counts over the evaluation grid, per variable. Small values flag
// miscalibration; compare against the simulated null quantile below.
std::vector<double> calibration_log_gamma(const num::TensorD& ranks);
double log_gamma_null_quantile(std::int64_t num_datasets, double quantile = 0.05);

// Mean absolute difference between empirical coverage of central credible
// intervals and their nominal level, per variable. Intervals come from
// linearly interpolated sample quantiles of the draws.
std::vector<double> calibration_error(const num::TensorD& estimates, const num::TensorD& targets,
                                      const std::vector<double>& alpha_grid);
std::vector<double> default_alpha_grid();  // 0.05, 0.10, ..., 0.95

// 1 - mean over datasets of posterior variance / prior variance.
std::vector<double> posterior_contraction(const num::TensorD& estimates,
                                          const std::vector<double>& prior_variance);
std::vector<double> posterior_contraction(const num::TensorD& estimates, const num::TensorD& prior_samples);

// Root mean squared error over datasets divided by the target range.
std::vector<double> nrmse(const num::TensorD& point_estimates, const num::TensorD& targets);

// Scatter series per variable: truth against posterior median with a central
// 50% interval, plus the Pearson correlation of truth and median.
struct RecoverySeries {
    std::vector<double> truth, median, lower, upper;
    double correlation = 0.0;
};
std::vector<RecoverySeries> recovery(const num::TensorD& estimates, const num::TensorD& targets);
// Same series read off estimated quantiles (levels must be sorted and include
// 0.5; the outermost levels bound the interval).
std::vector<RecoverySeries> recovery_from_quantiles(const num::TensorD& quantiles, const num::TensorD& targets,
                                                    const std::vector<double>& levels);

// Per-dataset standardized error and variance reduction.
struct ZScoreContraction {
    std::vector<double> z;            // (posterior mean - truth) / posterior sd
    std::vector<double> contraction;  // 1 - posterior variance / prior variance
};
std::vector<ZScoreContraction> zscore_contraction(const num::TensorD& estimates, const num::TensorD& targets,
                                                  const std::vector<double>& prior_variance);

// Unbiased squared maximum mean discrepancy between two summary samples,
// Gaussian kernel, bandwidth = median pairwise distance of the pooled set.
double summary_mmd(const num::TensorD& reference, const num::TensorD& observed);

// sqrt((s-m)^T Sigma^-1 (s-m)) against the reference mean and covariance,
// ridge-regularized by 1e-6 * trace/dim. observed is (dim) or (1, dim).
double mahalanobis_score(const num::TensorD& reference, const num::TensorD& observed);

// Empirical P(truth <= estimated tau-quantile) per variable and level; a
// calibrated quantile head tracks the diagonal.
std::vector<std::vector<double>> quantile_coverage(const num::TensorD& quantiles, const num::TensorD& targets,
                                                   const std::vector<double>& levels);

// One-stop per-variable table plus the plot series behind it.
struct DiagnosticReport {
    std::vector<std::string> variables;
    std::vector<double> nrmse_values, log_gamma, calibration_errors, contraction;
    EcdfDiagnostic ecdf;  // difference mode, 95% simultaneous bands
    std::vector<RecoverySeries> recovery_series;
    std::vector<ZScoreContraction> zscore;
};
DiagnosticReport diagnostic_report(const std::vector<std::string>& variables, const num::TensorD& estimates,
                                   const num::TensorD& targets, const std::vector<double>& prior_variance,
                                   std::uint64_t tie_seed = 0, double band_alpha = 0.95,
                                   const std::vector<double>& alpha_grid = {});
// Header row plus one CSV row per variable.
std::string report_csv(const DiagnosticReport& report);

}  // namespace abi::diag
