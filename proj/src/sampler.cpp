#include "tabgen/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "tabgen/error.hpp"

namespace tabgen {

double SamplerConfig::effective_gamma() const {
    if (mode == SamplerMode::Deterministic) return 0.0;
    return gamma < 0.0 ? 1.0 / static_cast<double>(steps) : gamma;
}

void SamplerConfig::validate() const {
    if (steps < 2) throw ValidationError("sampler: need at least 2 steps");
    if (gamma >= 0.0 && mode == SamplerMode::Deterministic && gamma != 0.0)
        throw ValidationError("sampler: deterministic mode requires gamma = 0");
}

SamplerMode parse_sampler_mode(const std::string& name) {
    if (name == "stochastic") return SamplerMode::Stochastic;
    if (name == "deterministic") return SamplerMode::Deterministic;
    throw ValidationError("sampler: unknown mode '" + name +
                          "' (expected stochastic|deterministic)");
}

std::string sampler_mode_name(SamplerMode mode) {
    return mode == SamplerMode::Stochastic ? "stochastic" : "deterministic";
}

std::vector<double> time_grid(std::size_t T) {
    if (T < 2) throw ValidationError("time_grid: need at least 2 steps");
    std::vector<double> grid(T + 1);
    for (std::size_t i = 0; i <= T; ++i)
        grid[i] = static_cast<double>(T - i) / static_cast<double>(T);
    return grid;
}

DenoiserOutput step_stochastic(NoisyBatch& state, double t_cur, double t_prev, double gamma,
                               const Denoiser& model, const ScheduleSet& schedules,
                               std::vector<Philox>& row_rng) {
    const std::size_t B = state.rows;
    const std::size_t Mn = model.num_cols();
    const std::size_t Mc = model.cat_cols();
    if (row_rng.size() != B) throw ValidationError("sampler: one generator per row required");
    if (!(t_prev < t_cur)) throw ValidationError("sampler: t_prev must be below t_cur");
    if (gamma < 0.0) throw ValidationError("sampler: gamma must be non-negative");

    const double t_plus = std::min(t_cur + gamma * t_cur, 1.0);
    const bool restart = t_plus > t_cur;

    std::vector<double> sig_cur(Mn), sig_plus(Mn), sig_prev(Mn);
    for (std::size_t i = 0; i < Mn; ++i) {
        sig_cur[i] = schedules.sigma(i, t_cur);
        sig_plus[i] = schedules.sigma(i, t_plus);
        sig_prev[i] = schedules.sigma(i, t_prev);
    }
    std::vector<double> a_cur(Mc), a_plus(Mc), a_prev(Mc);
    for (std::size_t j = 0; j < Mc; ++j) {
        a_cur[j] = schedules.alpha(j, t_cur);
        a_plus[j] = schedules.alpha(j, t_plus);
        a_prev[j] = schedules.alpha(j, t_prev);
    }

    // (a) + (b): forward perturbation to t+.
    if (restart) {
        for (std::size_t r = 0; r < B; ++r) {
            Philox& rng = row_rng[r];
            for (std::size_t i = 0; i < Mn; ++i) {
                double add = std::sqrt(sig_plus[i] * sig_plus[i] - sig_cur[i] * sig_cur[i]);
                state.num[r * Mn + i] += add * rng.normal();
            }
            for (std::size_t j = 0; j < Mc; ++j) {
                int32_t& cell = state.cat[r * Mc + j];
                if (cell == static_cast<int32_t>(model.cardinality(j))) continue;  // masked
                double remask = 1.0 - a_plus[j] / a_cur[j];
                if (rng.uniform() < remask) cell = static_cast<int32_t>(model.cardinality(j));
            }
        }
    }

    // (c): one model call at t+.
    std::fill(state.t.begin(), state.t.end(), t_plus);
    DenoiserOutput out = model.forward(state, schedules);

    // (d): numerical Euler move along the noise estimate.
    std::vector<double> num_prev(B * Mn);
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t i = 0; i < Mn; ++i) {
            std::size_t c = r * Mn + i;
            num_prev[c] = state.num[c] + (sig_prev[i] - sig_plus[i]) * out.eps_hat[c];
        }

    // (e): posterior draw per masked categorical cell.  Unmasked cells stay
    // fixed (the posterior is a point mass on their value).
    for (std::size_t r = 0; r < B; ++r) {
        Philox& rng = row_rng[r];
        for (std::size_t j = 0; j < Mc; ++j) {
            int32_t& cell = state.cat[r * Mc + j];
            if (cell != static_cast<int32_t>(model.cardinality(j))) continue;
            const double* mu = out.probs(r, j);
            const std::size_t cj = model.cardinality(j);
            const double denom = 1.0 - a_plus[j];
            const double unmask_scale = (a_prev[j] - a_plus[j]) / denom;
            double mu_sum = 0.0;
            for (std::size_t c = 0; c < cj; ++c) mu_sum += mu[c];
            double branch_sum = (1.0 - a_prev[j]) / denom + unmask_scale * mu_sum;
            if (std::fabs(branch_sum - 1.0) > 1e-9)
                throw ComputeError("sampler: categorical posterior does not normalize");
            double u = rng.uniform();
            double cum = 0.0;
            for (std::size_t c = 0; c < cj; ++c) {
                cum += unmask_scale * mu[c];
                if (u < cum) {
                    cell = static_cast<int32_t>(c);
                    break;
                }
            }
            // u beyond the category mass: the cell stays masked.
        }
    }

    state.num = std::move(num_prev);
    std::fill(state.t.begin(), state.t.end(), t_prev);
    return out;
}

DenoiserOutput step_deterministic(NoisyBatch& state, double t_cur, double t_prev,
                                  const Denoiser& model, const ScheduleSet& schedules,
                                  std::vector<Philox>& row_rng) {
    return step_stochastic(state, t_cur, t_prev, 0.0, model, schedules, row_rng);
}

Dataset sample_table(const Denoiser& model, const ScheduleSet& schedules,
                     const QuantileTransform& qt, std::size_t n_rows,
                     const SamplerConfig& cfg) {
    cfg.validate();
    const TableSchema& schema = model.schema();
    const std::size_t Mn = model.num_cols();
    const std::size_t Mc = model.cat_cols();

    Dataset out;
    out.schema = schema;
    out.rows = n_rows;
    out.num.assign(Mn * n_rows, 0.0);
    out.cat.assign(Mc * n_rows, 0);
    if (n_rows == 0) return out;

    std::vector<Philox> row_rng;
    row_rng.reserve(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r)
        row_rng.emplace_back(cfg.seed, Philox::substream(streams::kSampleRow, r));

    // Prior at t=1: wide Gaussian for numerical, everything masked for
    // categorical.
    NoisyBatch state;
    state.rows = n_rows;
    state.num.resize(n_rows * Mn);
    state.cat.resize(n_rows * Mc);
    state.t.assign(n_rows, 1.0);
    for (std::size_t r = 0; r < n_rows; ++r) {
        for (std::size_t i = 0; i < Mn; ++i)
            state.num[r * Mn + i] = schedules.sigma_max() * row_rng[r].normal();
        for (std::size_t j = 0; j < Mc; ++j)
            state.cat[r * Mc + j] = static_cast<int32_t>(model.cardinality(j));
    }

    const auto grid = time_grid(cfg.steps);
    const double gamma = cfg.effective_gamma();
    DenoiserOutput last;
    for (std::size_t s = 0; s < cfg.steps; ++s) {
        bool final_step = (s + 1 == cfg.steps);
        double g = final_step ? 0.0 : gamma;  // no restart on the last iteration
        last = step_stochastic(state, grid[s], grid[s + 1], g, model, schedules, row_rng);

        if (cfg.second_order) {
            // Heun correction for the numerical part: re-evaluate at the
            // Euler proposal and average the two slopes.
            NoisyBatch probe = state;  // already at t_prev with drawn categories
            DenoiserOutput second = model.forward(probe, schedules);
            for (std::size_t r = 0; r < n_rows; ++r)
                for (std::size_t i = 0; i < Mn; ++i) {
                    std::size_t c = r * Mn + i;
                    double dsig =
                        schedules.sigma(i, grid[s + 1]) -
                        schedules.sigma(i, std::min(grid[s] + g * grid[s], 1.0));
                    // Undo the Euler move's slope half and add the average.
                    state.num[c] += dsig * 0.5 * (second.eps_hat[c] - last.eps_hat[c]);
                }
        }
    }

    // Terminal cleanup: any still-masked cell takes the argmax of the final
    // estimate.
    for (std::size_t r = 0; r < n_rows; ++r)
        for (std::size_t j = 0; j < Mc; ++j) {
            int32_t& cell = state.cat[r * Mc + j];
            if (cell != static_cast<int32_t>(model.cardinality(j))) continue;
            const double* mu = last.probs(r, j);
            std::size_t best = 0;
            for (std::size_t c = 1; c < model.cardinality(j); ++c)
                if (mu[c] > mu[best]) best = c;
            cell = static_cast<int32_t>(best);
        }

    // Back to column-major and original units.
    for (std::size_t i = 0; i < Mn; ++i)
        for (std::size_t r = 0; r < n_rows; ++r) out.num_at(i, r) = state.num[r * Mn + i];
    for (std::size_t j = 0; j < Mc; ++j)
        for (std::size_t r = 0; r < n_rows; ++r) out.cat_at(j, r) = state.cat[r * Mc + j];
    return qt.inverse(out);
}

}  // namespace tabgen
