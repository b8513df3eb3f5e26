#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tabgen/dataset.hpp"

namespace tabgen {

// Per-column monotone map to standard-normal marginals, matching the usual
// quantile-transformer recipe: empirical quantiles at min(1000, rows) evenly
// spaced probability knots, linear interpolation between knots, then the
// normal inverse CDF.  Ties use the midpoint-rank convention (the forward
// CDF is averaged from both sides), so a constant column maps to 0.
class QuantileTransform {
  public:
    // Outputs are clipped to the normal quantiles of [kBound, 1 - kBound];
    // inverse inputs beyond that range snap back to the fitted min/max.
    static constexpr double kBound = 1e-7;

    QuantileTransform() = default;

    // Fits one knot table per numerical column.  Requires >= 2 rows.
    static QuantileTransform fit(const Dataset& data);

    // Per-value maps; `slot` indexes numerical columns in schema order.
    double transform_value(std::size_t slot, double v) const;
    double inverse_value(std::size_t slot, double z) const;

    // Whole-dataset maps; categorical columns pass through untouched.
    Dataset transform(const Dataset& data) const;
    Dataset inverse(const Dataset& data) const;

    std::size_t column_count() const { return knots_.size(); }
    std::size_t fitted_rows() const { return fitted_rows_; }
    const std::vector<double>& knots(std::size_t slot) const { return knots_[slot]; }
    const std::vector<std::string>& column_names() const { return names_; }

    // Checkpoint (de)serialization; validates that knot arrays are
    // non-decreasing on load.
    std::string to_json() const;
    static QuantileTransform from_json(const std::string& text);

    bool operator==(const QuantileTransform&) const = default;

  private:
    void check_compatible(const Dataset& data) const;

    std::vector<std::vector<double>> knots_;  // [slot][knot], non-decreasing
    std::vector<std::string> names_;          // numerical column names, fit order
    std::size_t fitted_rows_ = 0;
};

}  // namespace tabgen
