#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tabgen/dataset.hpp"
#include "tabgen/denoiser.hpp"
#include "tabgen/quantile.hpp"
#include "tabgen/rng.hpp"
#include "tabgen/schedule.hpp"

namespace tabgen {

enum class SamplerMode { Stochastic, Deterministic };

struct SamplerConfig {
    std::size_t steps = 50;                    // T
    SamplerMode mode = SamplerMode::Stochastic;
    double gamma = -1.0;                       // restart factor; < 0 means the 1/T default
    bool second_order = false;                 // extra model call per step (Heun)
    uint64_t seed = 0;

    double effective_gamma() const;
    void validate() const;
};

SamplerMode parse_sampler_mode(const std::string& name);
std::string sampler_mode_name(SamplerMode mode);

// Descending uniform grid 1 = t_T > ... > t_0 = 0 with t_i = i / T.
std::vector<double> time_grid(std::size_t T);

// One backward step of the whole batch from grid time t_cur to t_prev.
// Stochastic mode first restarts to t+ = min(t_cur + gamma * t_cur, 1):
// numerical cells gain sqrt(sigma(t+)^2 - sigma(t_cur)^2) of fresh noise and
// unmasked categorical cells re-mask with probability 1 - alpha(t+)/alpha(t_cur).
// Then one model call at t+, a numerical Euler move to t_prev along the
// noise estimate, and a posterior draw per masked categorical cell:
// unmask to category c with probability (alpha_prev - alpha_plus) mu_c /
// (1 - alpha_plus), else stay masked.  Per-row generators keep rows
// independent and reproducible.  Returns the model output of the (first)
// call, which the caller needs for terminal mask resolution.
DenoiserOutput step_stochastic(NoisyBatch& state, double t_cur, double t_prev, double gamma,
                               const Denoiser& model, const ScheduleSet& schedules,
                               std::vector<Philox>& row_rng);

// The gamma = 0 special case: no restart, still a stochastic categorical
// posterior draw (the discrete posterior is inherently a sampling step).
DenoiserOutput step_deterministic(NoisyBatch& state, double t_cur, double t_prev,
                                  const Denoiser& model, const ScheduleSet& schedules,
                                  std::vector<Philox>& row_rng);

// Full generation: prior draw (numerical sigma_max * N(0,1), categorical all
// masked), T steps down the grid, terminal argmax for any cell still masked,
// inverse quantile transform, decoded to original units.
Dataset sample_table(const Denoiser& model, const ScheduleSet& schedules,
                     const QuantileTransform& qt, std::size_t n_rows,
                     const SamplerConfig& cfg);

}  // namespace tabgen
