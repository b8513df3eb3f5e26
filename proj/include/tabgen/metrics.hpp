#pragma once

// Fidelity and privacy metrics for comparing a synthetic table against real
// data:
//   - Shape: per-column marginal error — Kolmogorov-Smirnov statistic (KST)
//     for numerical columns, total variation distance (TVD) for categorical.
//   - Trend: per-pair correlation error — half the absolute Pearson
//     difference for numerical pairs, half-L1 contingency distance for
//     categorical pairs. Mixed pairs discretize the numerical column into
//     min(10, distinct-value-count) quantile bins computed on the real
//     column, then score the pair as categorical.
//   - DCR: distance-to-closest-record privacy probe. Distance between rows
//     is the per-column average of |a-b|/range for numerical (range taken
//     over train+holdout combined; constant columns use range 1) and 0/1
//     mismatch for categorical. The score is the fraction of synthetic rows
//     strictly nearer to train than to holdout, counting exact ties as 1/2.
//     Near 0.5 means the synthesizer does not memorize its training rows.
//   - C2ST: classifier two-sample test. An in-repo logistic regression is
//     trained to tell real (label 0) from synthetic (label 1) rows on a
//     stratified half split; the score is 1 - 2|AUC - 0.5| on the held-out
//     half, so 1.0 means undetectable and 0.0 means trivially separable.
//     Features are numerical columns standardized over the pooled data plus
//     one-hot categorical indicators.
//
// All error values are fractions in [0, 1]; reports print them as percents.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tabgen/dataset.hpp"

#include <json.hpp>

namespace tabgen {

// sup_x |F_real(x) - F_synth(x)| over the pooled sample points.
double kst(const std::vector<double>& real, const std::vector<double>& synth);

// Half-L1 distance between empirical category frequencies; every code must
// lie in [0, vocabulary).
double tvd(const std::vector<int32_t>& real, const std::vector<int32_t>& synth,
           std::size_t vocabulary);

// Pearson correlation; constant input yields 0 and sets *degenerate when
// provided.
double pearson(const std::vector<double>& x, const std::vector<double>& y,
               bool* degenerate = nullptr);

struct ShapeReport {
    std::vector<std::pair<std::string, double>> columns;  // schema order
    double average = 0.0;
};

// KST per numerical column, TVD per categorical column, plus the mean over
// all columns.
ShapeReport shape_error(const Dataset& real, const Dataset& synth);

// |rho_real - rho_synth| / 2 for a pair of numerical slots.
double pearson_score(const Dataset& real, const Dataset& synth, std::size_t slot_a,
                     std::size_t slot_b, std::vector<std::string>* warnings = nullptr);

// Half-L1 distance between the joint frequency tables of two categorical
// slots.
double contingency_score(const Dataset& real, const Dataset& synth, std::size_t slot_a,
                         std::size_t slot_b);

// Quantile-bin edges for a numerical column: min(max_bins, distinct values)
// bins with edges at the evenly spaced interior quantiles of `values`.
// A value v falls into bin #{edges e : v > e}.
std::vector<double> quantile_bin_edges(const std::vector<double>& values,
                                       std::size_t max_bins = 10);
std::vector<int32_t> apply_bins(const std::vector<double>& values,
                                const std::vector<double>& edges);

struct TrendReport {
    struct Entry {
        std::string col_a;
        std::string col_b;
        double error = 0.0;
    };
    std::vector<Entry> pairs;  // all unordered pairs in schema order
    double average = 0.0;
    std::vector<std::string> warnings;
};

TrendReport trend_error(const Dataset& real, const Dataset& synth);

// Square matrix of pair errors (percent) with named rows/columns; diagonal 0.
void write_trend_heatmap(const TrendReport& trend, const TableSchema& schema,
                         std::ostream& os);

double dcr_score(const Dataset& train, const Dataset& holdout, const Dataset& synth,
                 std::size_t threads = 1);

double c2st(const Dataset& real, const Dataset& synth, uint64_t seed);

struct MetricReport {
    ShapeReport shape;
    TrendReport trend;
    double c2st_score = 0.0;
    std::optional<double> dcr;  // present only when train/holdout supplied
    std::size_t real_rows = 0;
    std::size_t synth_rows = 0;
    uint64_t seed = 0;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

// Full evaluation; train/holdout may be null (DCR is then omitted).
MetricReport evaluate(const Dataset& real, const Dataset& synth, const Dataset* train,
                      const Dataset* holdout, uint64_t seed, std::size_t threads = 1);

}  // namespace tabgen
