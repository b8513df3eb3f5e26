#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tabgen/dataset.hpp"
#include "tabgen/denoiser.hpp"
#include "tabgen/quantile.hpp"
#include "tabgen/sampler.hpp"
#include "tabgen/schedule.hpp"

namespace tabgen {

struct GuidanceConfig {
    double omega = 0.6;
    std::vector<std::string> target_columns;

    void validate(const TableSchema& full_schema) const;
};

// (1 + omega) * conditional - omega * unconditional, elementwise.
double guided_eps(double eps_cond, double eps_uncond, double omega);

// Log-space interpolation of two category distributions, renormalized:
// exp((1 + omega) log p_cond - omega log p_uncond) / Z, with probabilities
// floored at 1e-12 before the logs.  omega = 0 returns p_cond unchanged
// (bit-for-bit, so ungided and guided paths coincide exactly).
void guided_cat_estimate(const double* p_cond, const double* p_uncond, std::size_t n,
                         double omega, double* out);

// Conditional generation of the target columns given the observed ones.
//
// The conditional estimate comes from the full-table model with observed
// columns clamped to their clean (transformed) values at every call; the
// unconditional estimate from a reduced model trained on the target columns
// alone.  Both estimates are combined per column before the backward move.
// Observed columns pass through to the output untouched.
Dataset impute(const Denoiser& cond_model, const ScheduleSet& cond_schedules,
               const QuantileTransform& qt, const Denoiser& uncond_model,
               const ScheduleSet& uncond_schedules, const Dataset& observed,
               const GuidanceConfig& gcfg, const SamplerConfig& scfg);

}  // namespace tabgen
