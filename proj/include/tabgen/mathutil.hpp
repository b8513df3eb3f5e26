#pragma once

#include <cstddef>
#include <vector>

namespace tabgen {

// Inverse of the standard normal CDF (Wichura's AS241, double precision).
double inv_norm_cdf(double p);

// Standard normal CDF.
double norm_cdf(double x);

// Regularized upper incomplete gamma Q(a, x); used for chi-square p-values.
double gamma_q(double a, double x);

// Survival function of the chi-square distribution with k degrees of freedom.
double chi2_sf(double x, int dof);

// Piecewise-linear interpolation with clamped ends; xs non-decreasing.
// At interior ties, takes the value attached to the last tied knot.
double interp(double v, const std::vector<double>& xs, const std::vector<double>& ys);

// Empirical quantile of sorted data at fraction p in [0,1], linear between
// order statistics.
double quantile_sorted(const std::vector<double>& sorted, double p);

// Softplus and its inverse, the positivity reparameterization for schedule
// parameters.
double softplus(double x);
double softplus_inv(double y);
double softplus_grad(double x);

}  // namespace tabgen
