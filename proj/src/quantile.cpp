#include "tabgen/quantile.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "tabgen/error.hpp"
#include "tabgen/mathutil.hpp"

namespace tabgen {

using nlohmann::json;

namespace {

// Probability knot i of n: evenly spaced on [0, 1].
double reference(std::size_t i, std::size_t n) {
    return static_cast<double>(i) / static_cast<double>(n - 1);
}

std::vector<double> references(std::size_t n) {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = reference(i, n);
    return r;
}

}  // namespace

QuantileTransform QuantileTransform::fit(const Dataset& data) {
    if (data.rows < 2)
        throw ValidationError("quantile transform needs at least 2 rows");
    QuantileTransform qt;
    qt.fitted_rows_ = data.rows;
    const std::size_t n_knots = std::min<std::size_t>(1000, data.rows);
    const std::size_t slots = data.schema.num_count();
    auto positions = data.schema.numerical_positions();
    for (std::size_t s = 0; s < slots; ++s) {
        qt.names_.push_back(data.schema.columns[positions[s]].name);
        std::vector<double> sorted(data.num.begin() + s * data.rows,
                                   data.num.begin() + (s + 1) * data.rows);
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> knots(n_knots);
        for (std::size_t i = 0; i < n_knots; ++i)
            knots[i] = quantile_sorted(sorted, reference(i, n_knots));
        qt.knots_.push_back(std::move(knots));
    }
    return qt;
}

double QuantileTransform::transform_value(std::size_t slot, double v) const {
    const auto& q = knots_[slot];
    const std::size_t n = q.size();
    auto refs = references(n);

    // Forward CDF averaged from both sides: at tied knots this lands on the
    // midpoint rank, making the map symmetric under negation of the data.
    std::vector<double> neg_q(n), neg_r(n);
    for (std::size_t i = 0; i < n; ++i) {
        neg_q[i] = -q[n - 1 - i];
        neg_r[i] = -refs[n - 1 - i];
    }
    double p = 0.5 * (interp(v, q, refs) - interp(-v, neg_q, neg_r));

    const double z_lo = inv_norm_cdf(kBound - 2.220446049250313e-16);
    const double z_hi = -z_lo;
    if (p <= 0.0) return z_lo;
    if (p >= 1.0) return z_hi;
    return std::clamp(inv_norm_cdf(p), z_lo, z_hi);
}

double QuantileTransform::inverse_value(std::size_t slot, double z) const {
    const auto& q = knots_[slot];
    double p = norm_cdf(z);
    // Beyond the working range the interpolation would chase CDF round-off,
    // so snap to the fitted extremes (also catches +-inf inputs).
    if (p < kBound) return q.front();
    if (p > 1.0 - kBound) return q.back();
    return interp(p, references(q.size()), q);
}

void QuantileTransform::check_compatible(const Dataset& data) const {
    if (data.schema.num_count() != knots_.size())
        throw ValidationError("quantile transform fitted on a different schema");
    auto positions = data.schema.numerical_positions();
    for (std::size_t s = 0; s < names_.size(); ++s)
        if (data.schema.columns[positions[s]].name != names_[s])
            throw ValidationError("quantile transform column '" + names_[s] +
                                  "' does not match dataset column '" +
                                  data.schema.columns[positions[s]].name + "'");
}

Dataset QuantileTransform::transform(const Dataset& data) const {
    check_compatible(data);
    Dataset out = data;
    for (std::size_t s = 0; s < knots_.size(); ++s)
        for (std::size_t r = 0; r < data.rows; ++r)
            out.num_at(s, r) = transform_value(s, data.num_at(s, r));
    return out;
}

Dataset QuantileTransform::inverse(const Dataset& data) const {
    check_compatible(data);
    Dataset out = data;
    for (std::size_t s = 0; s < knots_.size(); ++s)
        for (std::size_t r = 0; r < data.rows; ++r)
            out.num_at(s, r) = inverse_value(s, data.num_at(s, r));
    return out;
}

std::string QuantileTransform::to_json() const {
    json root;
    root["fitted_rows"] = fitted_rows_;
    root["columns"] = json::array();
    for (std::size_t s = 0; s < knots_.size(); ++s) {
        json col;
        col["name"] = names_[s];
        col["knots"] = knots_[s];
        root["columns"].push_back(col);
    }
    return root.dump();
}

QuantileTransform QuantileTransform::from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("quantile transform: invalid JSON: ") + e.what());
    }
    QuantileTransform qt;
    qt.fitted_rows_ = root.at("fitted_rows").get<std::size_t>();
    for (const auto& col : root.at("columns")) {
        qt.names_.push_back(col.at("name").get<std::string>());
        auto knots = col.at("knots").get<std::vector<double>>();
        if (knots.empty() || !std::is_sorted(knots.begin(), knots.end()))
            throw ValidationError("quantile transform: knots must be non-decreasing");
        qt.knots_.push_back(std::move(knots));
    }
    return qt;
}

}  // namespace tabgen
