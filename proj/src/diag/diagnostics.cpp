#include "abi/diag/diagnostics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace abi::diag {

namespace {

struct DrawsShape {
    std::int64_t datasets, draws, dim;
};

DrawsShape check_draws(const num::TensorD& estimates, const num::TensorD& targets, const std::string& op) {
    if (estimates.dim() != 3)
        throw std::invalid_argument(op + ": estimates must be (datasets, draws, variables), got shape " +
                                    num::shape_str(estimates.shape()));
    if (targets.dim() != 2)
        throw std::invalid_argument(op + ": targets must be (datasets, variables), got shape " +
                                    num::shape_str(targets.shape()));
    if (estimates.extent(0) != targets.extent(0) || estimates.extent(2) != targets.extent(1))
        throw std::invalid_argument(op + ": estimates " + num::shape_str(estimates.shape()) +
                                    " do not align with targets " + num::shape_str(targets.shape()));
    return {estimates.extent(0), estimates.extent(1), estimates.extent(2)};
}

// exp-sum in log space, tolerant of -inf
double log_add(double a, double b) {
    if (a < b) std::swap(a, b);
    if (b == -std::numeric_limits<double>::infinity()) return a;
    return a + std::log1p(std::exp(b - a));
}

std::vector<double> evaluation_grid(std::int64_t datasets) {
    const std::int64_t points = std::min<std::int64_t>(datasets, 100);
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (std::int64_t k = 0; k < points; ++k)
        grid[static_cast<std::size_t>(k)] = static_cast<double>(k + 1) / static_cast<double>(points + 1);
    return grid;
}

// Binomial log tail tables on the evaluation grid: log P[Bin(M, z) <= r] and
// log P[Bin(M, z) >= r] for every count r. Built once per dataset count.
struct TailTables {
    std::vector<double> grid;
    std::vector<std::vector<double>> log_le, log_ge;  // [grid point][count 0..M]
};

std::shared_ptr<const TailTables> tail_tables(std::int64_t datasets) {
    static std::mutex mutex;
    static std::map<std::int64_t, std::shared_ptr<const TailTables>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(datasets);
    if (it != cache.end()) return it->second;

    auto tables = std::make_shared<TailTables>();
    tables->grid = evaluation_grid(datasets);
    const auto m = static_cast<std::size_t>(datasets);
    std::vector<double> log_choose(m + 1);
    const double log_gamma_n = std::lgamma(static_cast<double>(datasets) + 1.0);
    for (std::size_t k = 0; k <= m; ++k)
        log_choose[k] = log_gamma_n - std::lgamma(static_cast<double>(k) + 1.0) -
                        std::lgamma(static_cast<double>(m - k) + 1.0);

    tables->log_le.resize(tables->grid.size());
    tables->log_ge.resize(tables->grid.size());
    std::vector<double> terms(m + 1);
    for (std::size_t g = 0; g < tables->grid.size(); ++g) {
        const double z = tables->grid[g];
        for (std::size_t k = 0; k <= m; ++k)
            terms[k] = log_choose[k] + static_cast<double>(k) * std::log(z) +
                       static_cast<double>(m - k) * std::log1p(-z);
        auto& le = tables->log_le[g];
        auto& ge = tables->log_ge[g];
        le.resize(m + 1);
        ge.resize(m + 1);
        le[0] = terms[0];
        for (std::size_t k = 1; k <= m; ++k) le[k] = log_add(le[k - 1], terms[k]);
        ge[m] = terms[m];
        for (std::size_t k = m; k-- > 0;) ge[k] = log_add(ge[k + 1], terms[k]);
    }
    cache.emplace(datasets, tables);
    return tables;
}

// counts[g] = number of ranks <= grid[g], from an ascending rank vector
std::vector<std::int64_t> grid_counts(const std::vector<double>& sorted_ranks, const std::vector<double>& grid) {
    std::vector<std::int64_t> counts(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g)
        counts[g] = std::upper_bound(sorted_ranks.begin(), sorted_ranks.end(), grid[g]) - sorted_ranks.begin();
    return counts;
}

double log_gamma_statistic(const TailTables& tables, const std::vector<std::int64_t>& counts) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < tables.grid.size(); ++g) {
        const auto r = static_cast<std::size_t>(counts[g]);
        const double tail = std::min(tables.log_le[g][r], tables.log_ge[g][r]);
        best = std::min(best, std::log(2.0) + tail);
    }
    return best;
}

double interp_quantile(const std::vector<double>& ascending, double p) {
    const auto n = ascending.size();
    const double position = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(position);
    if (lo + 1 >= n) return ascending.back();
    const double frac = position - static_cast<double>(lo);
    return ascending[lo] + frac * (ascending[lo + 1] - ascending[lo]);
}

// sup_z |ECDF(z) - z| of 1000 simulated uniform rank sets, quantile cached
// per (dataset count, level)
double band_epsilon(std::int64_t datasets, double band_alpha) {
    static std::mutex mutex;
    static std::map<std::pair<std::int64_t, std::int64_t>, double> cache;
    const std::pair<std::int64_t, std::int64_t> key{datasets, std::llround(band_alpha * 1e9)};
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    const std::vector<double> grid = evaluation_grid(datasets);
    num::RngStream rng(0xECDF, static_cast<std::uint64_t>(datasets));
    const int replicates = 1000;
    std::vector<double> sups(replicates);
    std::vector<double> ranks(static_cast<std::size_t>(datasets));
    for (int rep = 0; rep < replicates; ++rep) {
        for (auto& r : ranks) r = rng.uniform(0.0, 1.0);
        std::sort(ranks.begin(), ranks.end());
        const std::vector<std::int64_t> counts = grid_counts(ranks, grid);
        double sup = 0.0;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const double ecdf = static_cast<double>(counts[g]) / static_cast<double>(datasets);
            sup = std::max(sup, std::abs(ecdf - grid[g]));
        }
        sups[static_cast<std::size_t>(rep)] = sup;
    }
    std::sort(sups.begin(), sups.end());
    const double eps = interp_quantile(sups, band_alpha);
    cache.emplace(key, eps);
    return eps;
}

std::vector<double> column(const num::TensorD& matrix, std::int64_t col) {
    const std::int64_t rows = matrix.extent(0), cols = matrix.extent(1);
    std::vector<double> out(static_cast<std::size_t>(rows));
    auto values = matrix.data();
    for (std::int64_t r = 0; r < rows; ++r) out[static_cast<std::size_t>(r)] = values[r * cols + col];
    return out;
}

// draws of one dataset/variable cell from (datasets, draws, variables)
std::vector<double> cell_draws(const num::TensorD& estimates, std::int64_t dataset, std::int64_t variable) {
    const std::int64_t draws = estimates.extent(1), dim = estimates.extent(2);
    std::vector<double> out(static_cast<std::size_t>(draws));
    auto values = estimates.data();
    for (std::int64_t l = 0; l < draws; ++l)
        out[static_cast<std::size_t>(l)] = values[(dataset * draws + l) * dim + variable];
    return out;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = mean_of(a), mb = mean_of(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

void check_ranks(const num::TensorD& ranks, const std::string& op) {
    if (ranks.dim() != 2)
        throw std::invalid_argument(op + ": ranks must be (datasets, variables), got shape " +
                                    num::shape_str(ranks.shape()));
    if (ranks.extent(0) < 20)
        throw std::invalid_argument(op + ": needs at least 20 datasets, got " + std::to_string(ranks.extent(0)));
}

void check_levels(const std::vector<double>& levels, std::int64_t expected, const std::string& op) {
    if (levels.empty() || static_cast<std::int64_t>(levels.size()) != expected)
        throw std::invalid_argument(op + ": got " + std::to_string(expected) + " quantile columns for " +
                                    std::to_string(levels.size()) + " levels");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!(levels[i] > 0.0 && levels[i] < 1.0))
            throw std::invalid_argument(op + ": levels must lie in (0, 1)");
        if (i > 0 && levels[i] <= levels[i - 1])
            throw std::invalid_argument(op + ": levels must be sorted ascending");
    }
}

Eigen::MatrixXd to_matrix(const num::TensorD& t) {
    Eigen::MatrixXd out(t.extent(0), t.extent(1));
    auto values = t.data();
    for (std::int64_t r = 0; r < t.extent(0); ++r)
        for (std::int64_t c = 0; c < t.extent(1); ++c) out(r, c) = values[r * t.extent(1) + c];
    return out;
}

num::TensorD posterior_means(const num::TensorD& estimates) {
    const std::int64_t datasets = estimates.extent(0), dim = estimates.extent(2);
    num::TensorD out({datasets, dim});
    auto values = out.mutable_data();
    for (std::int64_t m = 0; m < datasets; ++m)
        for (std::int64_t v = 0; v < dim; ++v)
            values[static_cast<std::size_t>(m * dim + v)] = mean_of(cell_draws(estimates, m, v));
    return out;
}

}  // namespace

num::TensorD fractional_ranks(const num::TensorD& estimates, const num::TensorD& targets,
                              num::RngStream& tie_break) {
    const DrawsShape s = check_draws(estimates, targets, "fractional ranks");
    if (s.draws < 2) throw std::invalid_argument("fractional ranks: needs at least 2 posterior draws per dataset");

    num::TensorD out({s.datasets, s.dim});
    auto ranks = out.mutable_data();
    auto est = estimates.data();
    auto tgt = targets.data();
    for (std::int64_t m = 0; m < s.datasets; ++m) {
        for (std::int64_t v = 0; v < s.dim; ++v) {
            const double truth = tgt[m * s.dim + v];
            std::int64_t less = 0, equal = 0;
            for (std::int64_t l = 0; l < s.draws; ++l) {
                const double draw = est[(m * s.draws + l) * s.dim + v];
                if (draw < truth)
                    ++less;
                else if (draw == truth)
                    ++equal;
            }
            // the tie stream advances once per cell regardless of ties, so
            // outputs are bitwise reproducible for a given stream
            const double u = tie_break.uniform(0.0, 1.0);
            ranks[static_cast<std::size_t>(m * s.dim + v)] =
                (static_cast<double>(less) + u * static_cast<double>(equal)) / static_cast<double>(s.draws);
        }
    }
    return out;
}

EcdfDiagnostic calibration_ecdf(const num::TensorD& ranks, double band_alpha, bool difference) {
    check_ranks(ranks, "calibration ecdf");
    if (!(band_alpha > 0.0 && band_alpha < 1.0))
        throw std::invalid_argument("calibration ecdf: band_alpha must lie in (0, 1)");

    const std::int64_t datasets = ranks.extent(0), dim = ranks.extent(1);
    EcdfDiagnostic out;
    out.difference = difference;
    out.grid = evaluation_grid(datasets);
    const double eps = band_epsilon(datasets, band_alpha);

    out.ecdf.resize(static_cast<std::size_t>(dim));
    for (std::int64_t v = 0; v < dim; ++v) {
        std::vector<double> sorted = column(ranks, v);
        std::sort(sorted.begin(), sorted.end());
        const std::vector<std::int64_t> counts = grid_counts(sorted, out.grid);
        auto& series = out.ecdf[static_cast<std::size_t>(v)];
        series.resize(out.grid.size());
        for (std::size_t g = 0; g < out.grid.size(); ++g) {
            const double ecdf = static_cast<double>(counts[g]) / static_cast<double>(datasets);
            series[g] = difference ? ecdf - out.grid[g] : ecdf;
        }
    }
    out.lower.resize(out.grid.size());
    out.upper.resize(out.grid.size());
    for (std::size_t g = 0; g < out.grid.size(); ++g) {
        if (difference) {
            out.lower[g] = -eps;
            out.upper[g] = eps;
        } else {
            out.lower[g] = std::max(0.0, out.grid[g] - eps);
            out.upper[g] = std::min(1.0, out.grid[g] + eps);
        }
    }
    return out;
}

std::vector<double> calibration_log_gamma(const num::TensorD& ranks) {
    check_ranks(ranks, "calibration log gamma");
    const std::int64_t dim = ranks.extent(1);
    auto tables = tail_tables(ranks.extent(0));
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (std::int64_t v = 0; v < dim; ++v) {
        std::vector<double> sorted = column(ranks, v);
        std::sort(sorted.begin(), sorted.end());
        out[static_cast<std::size_t>(v)] = log_gamma_statistic(*tables, grid_counts(sorted, tables->grid));
    }
    return out;
}

double log_gamma_null_quantile(std::int64_t num_datasets, double quantile) {
    if (num_datasets < 20)
        throw std::invalid_argument("log gamma null: needs at least 20 datasets, got " +
                                    std::to_string(num_datasets));
    if (!(quantile > 0.0 && quantile < 1.0))
        throw std::invalid_argument("log gamma null: quantile must lie in (0, 1)");

    static std::mutex mutex;
    static std::map<std::pair<std::int64_t, std::int64_t>, double> cache;
    const std::pair<std::int64_t, std::int64_t> key{num_datasets, std::llround(quantile * 1e9)};
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    auto tables = tail_tables(num_datasets);
    num::RngStream rng(0x6A33A, static_cast<std::uint64_t>(num_datasets));
    const int replicates = 1000;
    std::vector<double> stats(replicates);
    std::vector<double> ranks(static_cast<std::size_t>(num_datasets));
    for (int rep = 0; rep < replicates; ++rep) {
        for (auto& r : ranks) r = rng.uniform(0.0, 1.0);
        std::sort(ranks.begin(), ranks.end());
        stats[static_cast<std::size_t>(rep)] = log_gamma_statistic(*tables, grid_counts(ranks, tables->grid));
    }
    std::sort(stats.begin(), stats.end());
    const double threshold = interp_quantile(stats, quantile);
    cache.emplace(key, threshold);
    return threshold;
}

std::vector<double> default_alpha_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 19; ++i) grid.push_back(static_cast<double>(i) * 0.05);
    return grid;
}

std::vector<double> calibration_error(const num::TensorD& estimates, const num::TensorD& targets,
                                      const std::vector<double>& alpha_grid) {
    const DrawsShape s = check_draws(estimates, targets, "calibration error");
    if (alpha_grid.empty()) throw std::invalid_argument("calibration error: empty alpha grid");
    double min_tail = 1.0;
    for (double alpha : alpha_grid) {
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("calibration error: alpha levels must lie in (0, 1)");
        min_tail = std::min(min_tail, (1.0 - alpha) / 2.0);
    }
    if (static_cast<double>(s.draws) * min_tail < 1.0) {
        char buffer[128];
        std::snprintf(buffer, sizeof(buffer),
                      "calibration error: %lld draws cannot resolve the %.4g quantile",
                      static_cast<long long>(s.draws), 1.0 - min_tail);
        throw std::invalid_argument(buffer);
    }

    auto tgt = targets.data();
    std::vector<double> out(static_cast<std::size_t>(s.dim), 0.0);
    for (std::int64_t v = 0; v < s.dim; ++v) {
        std::vector<std::int64_t> covered(alpha_grid.size(), 0);
        for (std::int64_t m = 0; m < s.datasets; ++m) {
            std::vector<double> draws = cell_draws(estimates, m, v);
            std::sort(draws.begin(), draws.end());
            const double truth = tgt[m * s.dim + v];
            for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
                const double lo = interp_quantile(draws, (1.0 - alpha_grid[a]) / 2.0);
                const double hi = interp_quantile(draws, (1.0 + alpha_grid[a]) / 2.0);
                if (truth >= lo && truth <= hi) ++covered[a];
            }
        }
        double err = 0.0;
        for (std::size_t a = 0; a < alpha_grid.size(); ++a)
            err += std::abs(static_cast<double>(covered[a]) / static_cast<double>(s.datasets) - alpha_grid[a]);
        out[static_cast<std::size_t>(v)] = err / static_cast<double>(alpha_grid.size());
    }
    return out;
}

std::vector<double> posterior_contraction(const num::TensorD& estimates,
                                          const std::vector<double>& prior_variance) {
    if (estimates.dim() != 3)
        throw std::invalid_argument("posterior contraction: estimates must be (datasets, draws, variables)");
    if (estimates.extent(1) < 2) throw std::invalid_argument("posterior contraction: needs at least 2 draws");
    const std::int64_t datasets = estimates.extent(0), dim = estimates.extent(2);
    if (static_cast<std::int64_t>(prior_variance.size()) != dim)
        throw std::invalid_argument("posterior contraction: prior variance size does not match variables");
    for (double v : prior_variance)
        if (!(v > 0.0)) throw std::invalid_argument("posterior contraction: zero prior variance");

    std::vector<double> out(static_cast<std::size_t>(dim));
    for (std::int64_t v = 0; v < dim; ++v) {
        double ratio = 0.0;
        for (std::int64_t m = 0; m < datasets; ++m)
            ratio += sample_variance(cell_draws(estimates, m, v)) / prior_variance[static_cast<std::size_t>(v)];
        out[static_cast<std::size_t>(v)] = 1.0 - ratio / static_cast<double>(datasets);
    }
    return out;
}

std::vector<double> posterior_contraction(const num::TensorD& estimates, const num::TensorD& prior_samples) {
    if (prior_samples.dim() != 2 || prior_samples.extent(0) < 2)
        throw std::invalid_argument("posterior contraction: prior samples must be (draws >= 2, variables)");
    std::vector<double> prior_variance(static_cast<std::size_t>(prior_samples.extent(1)));
    for (std::int64_t v = 0; v < prior_samples.extent(1); ++v)
        prior_variance[static_cast<std::size_t>(v)] = sample_variance(column(prior_samples, v));
    return posterior_contraction(estimates, prior_variance);
}

std::vector<double> nrmse(const num::TensorD& point_estimates, const num::TensorD& targets) {
    if (point_estimates.dim() != 2 || targets.dim() != 2 || point_estimates.shape() != targets.shape())
        throw std::invalid_argument("nrmse: estimates and targets must share a (datasets, variables) shape");
    const std::int64_t datasets = targets.extent(0), dim = targets.extent(1);
    if (datasets < 2) throw std::invalid_argument("nrmse: needs at least 2 datasets");

    auto est = point_estimates.data();
    auto tgt = targets.data();
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (std::int64_t v = 0; v < dim; ++v) {
        double lo = tgt[v], hi = tgt[v], sq = 0.0;
        for (std::int64_t m = 0; m < datasets; ++m) {
            const double t = tgt[m * dim + v];
            lo = std::min(lo, t);
            hi = std::max(hi, t);
            const double d = est[m * dim + v] - t;
            sq += d * d;
        }
        if (hi == lo) throw std::invalid_argument("nrmse: zero target range for variable " + std::to_string(v));
        out[static_cast<std::size_t>(v)] = std::sqrt(sq / static_cast<double>(datasets)) / (hi - lo);
    }
    return out;
}

std::vector<RecoverySeries> recovery(const num::TensorD& estimates, const num::TensorD& targets) {
    const DrawsShape s = check_draws(estimates, targets, "recovery");
    if (s.datasets < 2) throw std::invalid_argument("recovery: needs at least 2 datasets");

    std::vector<RecoverySeries> out(static_cast<std::size_t>(s.dim));
    for (std::int64_t v = 0; v < s.dim; ++v) {
        RecoverySeries& series = out[static_cast<std::size_t>(v)];
        series.truth = column(targets, v);
        series.median.resize(static_cast<std::size_t>(s.datasets));
        series.lower.resize(static_cast<std::size_t>(s.datasets));
        series.upper.resize(static_cast<std::size_t>(s.datasets));
        for (std::int64_t m = 0; m < s.datasets; ++m) {
            std::vector<double> draws = cell_draws(estimates, m, v);
            std::sort(draws.begin(), draws.end());
            series.median[static_cast<std::size_t>(m)] = interp_quantile(draws, 0.5);
            series.lower[static_cast<std::size_t>(m)] = interp_quantile(draws, 0.25);
            series.upper[static_cast<std::size_t>(m)] = interp_quantile(draws, 0.75);
        }
        series.correlation = pearson(series.truth, series.median);
    }
    return out;
}

std::vector<RecoverySeries> recovery_from_quantiles(const num::TensorD& quantiles, const num::TensorD& targets,
                                                    const std::vector<double>& levels) {
    if (quantiles.dim() != 3 || targets.dim() != 2 || quantiles.extent(0) != targets.extent(0) ||
        quantiles.extent(2) != targets.extent(1))
        throw std::invalid_argument("recovery: quantiles (datasets, levels, variables) do not align with targets");
    check_levels(levels, quantiles.extent(1), "recovery");
    std::int64_t median_index = -1;
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (std::abs(levels[i] - 0.5) < 1e-12) median_index = static_cast<std::int64_t>(i);
    if (median_index < 0) throw std::invalid_argument("recovery: quantile levels must include 0.5 for the median");

    const std::int64_t datasets = targets.extent(0), dim = targets.extent(1);
    const std::int64_t level_count = quantiles.extent(1);
    auto q = quantiles.data();
    std::vector<RecoverySeries> out(static_cast<std::size_t>(dim));
    for (std::int64_t v = 0; v < dim; ++v) {
        RecoverySeries& series = out[static_cast<std::size_t>(v)];
        series.truth = column(targets, v);
        series.median.resize(static_cast<std::size_t>(datasets));
        series.lower.resize(static_cast<std::size_t>(datasets));
        series.upper.resize(static_cast<std::size_t>(datasets));
        for (std::int64_t m = 0; m < datasets; ++m) {
            auto at = [&](std::int64_t level) { return q[(m * level_count + level) * dim + v]; };
            series.median[static_cast<std::size_t>(m)] = at(median_index);
            series.lower[static_cast<std::size_t>(m)] = at(0);
            series.upper[static_cast<std::size_t>(m)] = at(level_count - 1);
        }
        series.correlation = pearson(series.truth, series.median);
    }
    return out;
}

std::vector<ZScoreContraction> zscore_contraction(const num::TensorD& estimates, const num::TensorD& targets,
                                                  const std::vector<double>& prior_variance) {
    const DrawsShape s = check_draws(estimates, targets, "zscore contraction");
    if (s.draws < 2) throw std::invalid_argument("zscore contraction: needs at least 2 draws");
    if (static_cast<std::int64_t>(prior_variance.size()) != s.dim)
        throw std::invalid_argument("zscore contraction: prior variance size does not match variables");
    for (double v : prior_variance)
        if (!(v > 0.0)) throw std::invalid_argument("zscore contraction: zero prior variance");

    auto tgt = targets.data();
    std::vector<ZScoreContraction> out(static_cast<std::size_t>(s.dim));
    for (std::int64_t v = 0; v < s.dim; ++v) {
        auto& series = out[static_cast<std::size_t>(v)];
        series.z.resize(static_cast<std::size_t>(s.datasets));
        series.contraction.resize(static_cast<std::size_t>(s.datasets));
        for (std::int64_t m = 0; m < s.datasets; ++m) {
            const std::vector<double> draws = cell_draws(estimates, m, v);
            const double mean = mean_of(draws);
            const double variance = sample_variance(draws);
            if (!(variance > 0.0))
                throw std::invalid_argument("zscore contraction: zero posterior sd in dataset " + std::to_string(m));
            series.z[static_cast<std::size_t>(m)] = (mean - tgt[m * s.dim + v]) / std::sqrt(variance);
            series.contraction[static_cast<std::size_t>(m)] =
                1.0 - variance / prior_variance[static_cast<std::size_t>(v)];
        }
    }
    return out;
}

double summary_mmd(const num::TensorD& reference, const num::TensorD& observed) {
    if (reference.dim() != 2 || observed.dim() != 2 || reference.extent(1) != observed.extent(1))
        throw std::invalid_argument("summary mmd: both sets must be (rows, features) with equal feature counts");
    const std::int64_t n = reference.extent(0), m = observed.extent(0);
    if (n < 2 || m < 2)
        throw std::invalid_argument("summary mmd: the unbiased estimate needs at least 2 rows per set");

    Eigen::MatrixXd pooled(n + m, reference.extent(1));
    pooled.topRows(n) = to_matrix(reference);
    pooled.bottomRows(m) = to_matrix(observed);
    const Eigen::VectorXd sq = pooled.rowwise().squaredNorm();
    const Eigen::MatrixXd gram = pooled * pooled.transpose();

    auto sq_dist = [&](std::int64_t i, std::int64_t j) {
        return std::max(0.0, sq(i) + sq(j) - 2.0 * gram(i, j));
    };

    std::vector<double> distances;
    distances.reserve(static_cast<std::size_t>((n + m) * (n + m - 1) / 2));
    for (std::int64_t i = 0; i < n + m; ++i)
        for (std::int64_t j = i + 1; j < n + m; ++j) distances.push_back(std::sqrt(sq_dist(i, j)));
    const std::size_t mid = distances.size() / 2;
    std::nth_element(distances.begin(), distances.begin() + static_cast<std::ptrdiff_t>(mid), distances.end());
    double bandwidth = distances[mid];
    if (bandwidth == 0.0) bandwidth = 1.0;  // all points coincide; every kernel value is 1 either way
    const double scale = 1.0 / (2.0 * bandwidth * bandwidth);

    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = i + 1; j < n; ++j) kxx += std::exp(-sq_dist(i, j) * scale);
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = i + 1; j < m; ++j) kyy += std::exp(-sq_dist(n + i, n + j) * scale);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j) kxy += std::exp(-sq_dist(i, n + j) * scale);

    const double nn = static_cast<double>(n), mm = static_cast<double>(m);
    return 2.0 * kxx / (nn * (nn - 1.0)) + 2.0 * kyy / (mm * (mm - 1.0)) - 2.0 * kxy / (nn * mm);
}

double mahalanobis_score(const num::TensorD& reference, const num::TensorD& observed) {
    if (reference.dim() != 2)
        throw std::invalid_argument("mahalanobis: reference must be (rows, features), got shape " +
                                    num::shape_str(reference.shape()));
    const std::int64_t n = reference.extent(0), d = reference.extent(1);
    num::TensorD point = observed;
    if (point.dim() == 2 && point.extent(0) == 1) point = point.reshaped_view({point.extent(1)});
    if (point.dim() != 1 || point.extent(0) != d)
        throw std::invalid_argument("mahalanobis: observed summary must have " + std::to_string(d) + " features");
    if (n <= d)
        throw std::invalid_argument("mahalanobis: needs more reference rows than feature dimensions (got " +
                                    std::to_string(n) + " rows for " + std::to_string(d) + " features)");

    const Eigen::MatrixXd refs = to_matrix(reference);
    const Eigen::VectorXd mean = refs.colwise().mean();
    const Eigen::MatrixXd centered = refs.rowwise() - mean.transpose();
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
    cov.diagonal().array() += 1e-6 * cov.trace() / static_cast<double>(d);

    Eigen::VectorXd delta(d);
    auto values = point.data();
    for (std::int64_t i = 0; i < d; ++i) delta(i) = values[i] - mean(i);
    const Eigen::LDLT<Eigen::MatrixXd> solver(cov);
    const bool invertible = solver.info() == Eigen::Success && solver.vectorD().minCoeff() > 0.0;
    const double q = invertible ? delta.dot(solver.solve(delta)) : -1.0;
    if (!std::isfinite(q) || q < 0.0)
        throw std::runtime_error("mahalanobis: reference covariance is singular after regularization");
    return std::sqrt(q);
}

std::vector<std::vector<double>> quantile_coverage(const num::TensorD& quantiles, const num::TensorD& targets,
                                                   const std::vector<double>& levels) {
    if (quantiles.dim() != 3 || targets.dim() != 2 || quantiles.extent(0) != targets.extent(0) ||
        quantiles.extent(2) != targets.extent(1))
        throw std::invalid_argument(
            "quantile coverage: quantiles (datasets, levels, variables) do not align with targets");
    check_levels(levels, quantiles.extent(1), "quantile coverage");

    const std::int64_t datasets = targets.extent(0), dim = targets.extent(1);
    const std::int64_t level_count = quantiles.extent(1);
    auto q = quantiles.data();
    auto tgt = targets.data();
    std::vector<std::vector<double>> out(static_cast<std::size_t>(dim),
                                         std::vector<double>(levels.size(), 0.0));
    for (std::int64_t v = 0; v < dim; ++v)
        for (std::int64_t l = 0; l < level_count; ++l) {
            std::int64_t hits = 0;
            for (std::int64_t m = 0; m < datasets; ++m)
                if (tgt[m * dim + v] <= q[(m * level_count + l) * dim + v]) ++hits;
            out[static_cast<std::size_t>(v)][static_cast<std::size_t>(l)] =
                static_cast<double>(hits) / static_cast<double>(datasets);
        }
    return out;
}

DiagnosticReport diagnostic_report(const std::vector<std::string>& variables, const num::TensorD& estimates,
                                   const num::TensorD& targets, const std::vector<double>& prior_variance,
                                   std::uint64_t tie_seed, double band_alpha,
                                   const std::vector<double>& alpha_grid) {
    const DrawsShape s = check_draws(estimates, targets, "diagnostic report");
    if (static_cast<std::int64_t>(variables.size()) != s.dim)
        throw std::invalid_argument("diagnostic report: got " + std::to_string(variables.size()) +
                                    " names for " + std::to_string(s.dim) + " variables");

    DiagnosticReport report;
    report.variables = variables;
    num::RngStream tie(tie_seed, 0);
    const num::TensorD ranks = fractional_ranks(estimates, targets, tie);
    report.nrmse_values = nrmse(posterior_means(estimates), targets);
    report.log_gamma = calibration_log_gamma(ranks);
    report.calibration_errors =
        calibration_error(estimates, targets, alpha_grid.empty() ? default_alpha_grid() : alpha_grid);
    report.contraction = posterior_contraction(estimates, prior_variance);
    report.ecdf = calibration_ecdf(ranks, band_alpha, true);
    report.recovery_series = recovery(estimates, targets);
    report.zscore = zscore_contraction(estimates, targets, prior_variance);
    return report;
}

std::string report_csv(const DiagnosticReport& report) {
    std::ostringstream out;
    out << "variable,nrmse,log_gamma,calibration_error,posterior_contraction\n";
    char buffer[64];
    for (std::size_t v = 0; v < report.variables.size(); ++v) {
        out << report.variables[v];
        for (double value : {report.nrmse_values[v], report.log_gamma[v], report.calibration_errors[v],
                             report.contraction[v]}) {
            std::snprintf(buffer, sizeof(buffer), ",%.6g", value);
            out << buffer;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace abi::diag
