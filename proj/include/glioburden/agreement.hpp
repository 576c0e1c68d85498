#pragma once

// Inter-rater agreement statistics: ICC(2,1), Spearman's rho, Bland-Altman.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/fisher_f.hpp>

#include "glioburden/error.hpp"

namespace glioburden {

/// n subjects x k raters, row-major.
class RatingsMatrix {
public:
    RatingsMatrix() = default;
    RatingsMatrix(std::size_t subjects, std::size_t raters, std::vector<double> values,
                  std::vector<std::string> rater_ids = {}, std::vector<std::string> subject_ids = {})
        : n_(subjects), k_(raters), values_(std::move(values)),
          rater_ids_(std::move(rater_ids)), subject_ids_(std::move(subject_ids)) {
        if (values_.size() != n_ * k_) throw validation_error("ratings matrix size mismatch");
        for (double v : values_)
            if (!std::isfinite(v)) throw validation_error("ratings must be finite (missing data rejected)");
        if (rater_ids_.empty())
            for (std::size_t j = 0; j < k_; ++j) rater_ids_.push_back("r" + std::to_string(j + 1));
        if (subject_ids_.empty())
            for (std::size_t i = 0; i < n_; ++i) subject_ids_.push_back(std::to_string(i + 1));
        if (rater_ids_.size() != k_ || subject_ids_.size() != n_)
            throw validation_error("ratings matrix identifier count mismatch");
    }

    std::size_t subjects() const { return n_; }
    std::size_t raters() const { return k_; }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * k_ + j]; }
    const std::vector<std::string>& rater_ids() const { return rater_ids_; }
    const std::vector<std::string>& subject_ids() const { return subject_ids_; }

    std::vector<double> column(std::size_t j) const {
        std::vector<double> out(n_);
        for (std::size_t i = 0; i < n_; ++i) out[i] = (*this)(i, j);
        return out;
    }

    std::size_t rater_index(std::string_view id) const {
        for (std::size_t j = 0; j < k_; ++j)
            if (rater_ids_[j] == id) return j;
        throw validation_error("unknown rater '" + std::string(id) + "'");
    }

private:
    std::size_t n_ = 0, k_ = 0;
    std::vector<double> values_;
    std::vector<std::string> rater_ids_;
    std::vector<std::string> subject_ids_;
};

struct IccResult {
    double icc = 1.0;
    double f_statistic = 0.0;
    double df1 = 0.0;
    double df2 = 0.0;
    double p_value = 0.0;
    double msr = 0.0, msc = 0.0, mse = 0.0;
    bool degenerate = false;  // zero total variance
};

/// Upper-tail probability of F(df1, df2) at `f`.
inline double f_upper_tail(double f, double df1, double df2) {
    if (std::isinf(f)) return 0.0;
    if (!(f > 0.0)) return 1.0;
    const boost::math::fisher_f_distribution<double> dist(df1, df2);
    return boost::math::cdf(boost::math::complement(dist, f));
}

/// Single-measurement, absolute-agreement, two-way random-effects ICC from
/// the two-way ANOVA mean squares.
inline IccResult icc_2_1(const RatingsMatrix& m) {
    const auto n = m.subjects(), k = m.raters();
    if (n < 2 || k < 2) throw validation_error("ICC needs at least 2 subjects and 2 raters");
    const double nd = static_cast<double>(n), kd = static_cast<double>(k);

    double grand = 0.0;
    std::vector<double> row(n, 0.0), col(k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            row[i] += m(i, j);
            col[j] += m(i, j);
            grand += m(i, j);
        }
    grand /= nd * kd;
    for (auto& r : row) r /= kd;
    for (auto& c : col) c /= nd;

    double ssr = 0.0, ssc = 0.0, sst = 0.0;
    for (double r : row) ssr += (r - grand) * (r - grand);
    for (double c : col) ssc += (c - grand) * (c - grand);
    ssr *= kd;
    ssc *= nd;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) sst += (m(i, j) - grand) * (m(i, j) - grand);
    const double sse = std::max(0.0, sst - ssr - ssc);

    IccResult out;
    out.df1 = nd - 1.0;
    out.df2 = (nd - 1.0) * (kd - 1.0);
    out.msr = ssr / out.df1;
    out.msc = ssc / (kd - 1.0);
    out.mse = sse / out.df2;
    if (sst == 0.0) {
        out.degenerate = true;
        out.icc = 1.0;
        out.f_statistic = std::numeric_limits<double>::quiet_NaN();
        out.p_value = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    const double denom = out.msr + (kd - 1.0) * out.mse + (kd / nd) * (out.msc - out.mse);
    out.icc = (out.msr - out.mse) / denom;
    out.f_statistic = out.mse > 0.0 ? out.msr / out.mse : std::numeric_limits<double>::infinity();
    out.p_value = f_upper_tail(out.f_statistic, out.df1, out.df2);
    return out;
}

/// Average ranks (1-based); ties share the mean of their positions.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw validation_error("correlation undefined for a constant series");
    return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw validation_error("spearman: series lengths differ");
    if (x.size() < 3) throw validation_error("spearman: at least 3 observations required");
    return std::clamp(pearson(average_ranks(x), average_ranks(y)), -1.0, 1.0);
}

struct BlandAltman {
    double bias = 0.0;
    double sd = 0.0;
    double loa_low = 0.0;
    double loa_high = 0.0;
    std::vector<std::pair<double, double>> points;  // (mean, difference) per subject
};

inline BlandAltman bland_altman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw validation_error("bland-altman: series lengths differ");
    if (x.size() < 2) throw validation_error("bland-altman: at least 2 observations required");
    BlandAltman out;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.points.emplace_back(0.5 * (x[i] + y[i]), x[i] - y[i]);
        out.bias += x[i] - y[i];
    }
    out.bias /= n;
    double ss = 0.0;
    for (const auto& p : out.points) ss += (p.second - out.bias) * (p.second - out.bias);
    out.sd = std::sqrt(ss / (n - 1.0));
    out.loa_low = out.bias - 1.96 * out.sd;
    out.loa_high = out.bias + 1.96 * out.sd;
    return out;
}

enum class AggregateMode { Average, WeightedAverage, Median, Min, Max };

inline AggregateMode parse_aggregate(std::string_view s) {
    if (s == "average") return AggregateMode::Average;
    if (s == "weighted_average" || s == "weighted") return AggregateMode::WeightedAverage;
    if (s == "median") return AggregateMode::Median;
    if (s == "min") return AggregateMode::Min;
    if (s == "max") return AggregateMode::Max;
    throw validation_error("unknown aggregate mode '" + std::string(s) + "'");
}

/// Per-subject aggregate over the selected rater columns (all by default).
inline std::vector<double> aggregate_ratings(const RatingsMatrix& m, AggregateMode mode,
                                             const std::vector<double>& weights = {},
                                             std::vector<std::size_t> columns = {}) {
    if (columns.empty())
        for (std::size_t j = 0; j < m.raters(); ++j) columns.push_back(j);
    if (mode == AggregateMode::WeightedAverage) {
        if (weights.size() != columns.size()) throw validation_error("weight count does not match raters");
        for (double w : weights)
            if (!(w > 0.0)) throw validation_error("weights must be positive");
    }
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<double> out;
    for (std::size_t i = 0; i < m.subjects(); ++i) {
        std::vector<double> r;
        for (auto j : columns) r.push_back(m(i, j));
        switch (mode) {
            case AggregateMode::Average:
                out.push_back(std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size()));
                break;
            case AggregateMode::WeightedAverage: {
                double s = 0.0;
                for (std::size_t t = 0; t < r.size(); ++t) s += r[t] * (weights[t] / wsum);
                out.push_back(s);
                break;
            }
            case AggregateMode::Median: {
                std::sort(r.begin(), r.end());
                const auto h = r.size() / 2;
                out.push_back(r.size() % 2 ? r[h] : 0.5 * (r[h - 1] + r[h]));
                break;
            }
            case AggregateMode::Min: out.push_back(*std::min_element(r.begin(), r.end())); break;
            case AggregateMode::Max: out.push_back(*std::max_element(r.begin(), r.end())); break;
        }
    }
    return out;
}

struct AgreementReport {
    std::string stat;
    std::size_t subjects = 0;
    std::size_t raters = 0;
    std::optional<IccResult> icc;
    std::optional<double> spearman_rho;
    std::optional<BlandAltman> bland_altman;
    std::vector<std::string> compared;  // column names used for two-series statistics
};

}  // namespace glioburden
