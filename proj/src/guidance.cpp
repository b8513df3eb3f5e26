#include "tabgen/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tabgen/error.hpp"

namespace tabgen {

namespace {
constexpr double kProbFloor = 1e-12;
}

void GuidanceConfig::validate(const TableSchema& full_schema) const {
    if (!(omega >= 0.0) || !std::isfinite(omega))
        throw ValidationError("guidance: omega must be finite and >= 0");
    if (target_columns.empty()) throw ValidationError("guidance: no target columns given");
    std::set<std::string> seen;
    for (const auto& name : target_columns) {
        full_schema.position_of(name);  // throws when absent
        if (!seen.insert(name).second)
            throw ValidationError("guidance: duplicate target column '" + name + "'");
    }
    if (seen.size() >= full_schema.columns.size())
        throw ValidationError("guidance: target columns must be a proper subset of the schema");
}

double guided_eps(double eps_cond, double eps_uncond, double omega) {
    return (1.0 + omega) * eps_cond - omega * eps_uncond;
}

void guided_cat_estimate(const double* p_cond, const double* p_uncond, std::size_t n,
                         double omega, double* out) {
    if (omega == 0.0) {  // exact passthrough: exp(log p) would perturb bits
        std::copy(p_cond, p_cond + n, out);
        return;
    }
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        double lc = std::log(std::max(p_cond[c], kProbFloor));
        double lu = std::log(std::max(p_uncond[c], kProbFloor));
        out[c] = std::exp((1.0 + omega) * lc - omega * lu);
        z += out[c];
    }
    if (!(z > 0.0) || !std::isfinite(z))
        throw ComputeError("guidance: degenerate categorical interpolation");
    for (std::size_t c = 0; c < n; ++c) out[c] /= z;
}

Dataset impute(const Denoiser& cond_model, const ScheduleSet& cond_schedules,
               const QuantileTransform& qt, const Denoiser& uncond_model,
               const ScheduleSet& uncond_schedules, const Dataset& observed,
               const GuidanceConfig& gcfg, const SamplerConfig& scfg) {
    scfg.validate();
    const TableSchema& schema = cond_model.schema();
    gcfg.validate(schema);
    if (observed.schema != schema)
        throw ValidationError("impute: input schema does not match the conditional model");
    TableSchema target_schema = schema.subset(gcfg.target_columns);
    if (uncond_model.schema() != target_schema)
        throw ValidationError(
            "impute: unconditional model schema does not match the target columns");

    const std::size_t R = observed.rows;
    const std::size_t Mn = cond_model.num_cols();
    const std::size_t Mc = cond_model.cat_cols();
    const bool use_uncond = gcfg.omega != 0.0;

    // Map the target model's slots onto the full model's slots.
    std::set<std::string> target_set(gcfg.target_columns.begin(), gcfg.target_columns.end());
    std::vector<std::size_t> tgt_num, tgt_cat;  // full-model slot per target slot
    std::vector<uint8_t> num_is_target(Mn, 0), cat_is_target(Mc, 0);
    {
        std::size_t ni = 0, ci = 0;
        for (const auto& col : schema.columns) {
            bool tgt = target_set.count(col.name) != 0;
            if (col.kind == ColumnKind::Numerical) {
                if (tgt) {
                    tgt_num.push_back(ni);
                    num_is_target[ni] = 1;
                }
                ++ni;
            } else {
                if (tgt) {
                    tgt_cat.push_back(ci);
                    cat_is_target[ci] = 1;
                }
                ++ci;
            }
        }
    }
    const std::size_t Un = tgt_num.size(), Uc = tgt_cat.size();

    // Observed columns enter the model in the same normalized space the
    // conditional model was trained in.
    Dataset transformed = qt.transform(observed);

    Dataset out = observed;  // observed cells pass through untouched
    if (R == 0) return out;

    std::vector<Philox> row_rng;
    row_rng.reserve(R);
    for (std::size_t r = 0; r < R; ++r)
        row_rng.emplace_back(scfg.seed, Philox::substream(streams::kImputeRow, r));

    // Full-table state: observed columns clamped to clean values throughout;
    // target columns start from the prior.
    NoisyBatch state;
    state.rows = R;
    state.num.resize(R * Mn);
    state.cat.resize(R * Mc);
    state.t.assign(R, 1.0);
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t i = 0; i < Mn; ++i)
            state.num[r * Mn + i] = num_is_target[i]
                                        ? cond_schedules.sigma_max() * row_rng[r].normal()
                                        : transformed.num_at(i, r);
        for (std::size_t j = 0; j < Mc; ++j)
            state.cat[r * Mc + j] = cat_is_target[j]
                                        ? static_cast<int32_t>(cond_model.cardinality(j))
                                        : observed.cat_at(j, r);
    }

    auto target_view = [&](const NoisyBatch& full, double t) {
        NoisyBatch v;
        v.rows = R;
        v.t.assign(R, t);
        v.num.resize(R * Un);
        v.cat.resize(R * Uc);
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t u = 0; u < Un; ++u) v.num[r * Un + u] = full.num[r * Mn + tgt_num[u]];
            for (std::size_t u = 0; u < Uc; ++u) v.cat[r * Uc + u] = full.cat[r * Mc + tgt_cat[u]];
        }
        return v;
    };

    // Guided estimates for the target columns at time t_plus, stored in
    // target-slot order.
    std::vector<double> eps_tilde(R * Un);
    std::vector<double> mu_tilde;
    std::vector<std::size_t> mu_offset(Uc, 0);
    std::size_t mu_stride = 0;
    for (std::size_t u = 0; u < Uc; ++u) {
        mu_offset[u] = mu_stride;
        mu_stride += cond_model.cardinality(tgt_cat[u]);
    }
    mu_tilde.resize(R * mu_stride);

    auto guided_call = [&](double t) {
        std::fill(state.t.begin(), state.t.end(), t);
        DenoiserOutput cond_out = cond_model.forward(state, cond_schedules);
        DenoiserOutput uncond_out;
        if (use_uncond) {
            NoisyBatch v = target_view(state, t);
            uncond_out = uncond_model.forward(v, uncond_schedules);
        }
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t u = 0; u < Un; ++u) {
                double ec = cond_out.eps_hat[r * Mn + tgt_num[u]];
                double eu = use_uncond ? uncond_out.eps_hat[r * Un + u] : 0.0;
                eps_tilde[r * Un + u] =
                    use_uncond ? guided_eps(ec, eu, gcfg.omega) : ec;
            }
            for (std::size_t u = 0; u < Uc; ++u) {
                const double* pc = cond_out.probs(r, tgt_cat[u]);
                double* dst = mu_tilde.data() + r * mu_stride + mu_offset[u];
                std::size_t cj = cond_model.cardinality(tgt_cat[u]);
                if (use_uncond)
                    guided_cat_estimate(pc, uncond_out.probs(r, u), cj, gcfg.omega, dst);
                else
                    std::copy(pc, pc + cj, dst);
            }
        }
    };

    const auto grid = time_grid(scfg.steps);
    const double gamma = scfg.effective_gamma();
    for (std::size_t s = 0; s < scfg.steps; ++s) {
        const double t_cur = grid[s], t_prev = grid[s + 1];
        const bool final_step = (s + 1 == scfg.steps);
        const double g = final_step ? 0.0 : gamma;
        const double t_plus = std::min(t_cur + g * t_cur, 1.0);
        const bool restart = t_plus > t_cur;

        if (restart) {
            for (std::size_t r = 0; r < R; ++r) {
                Philox& rng = row_rng[r];
                for (std::size_t u = 0; u < Un; ++u) {
                    std::size_t i = tgt_num[u];
                    double sc = cond_schedules.sigma(i, t_cur);
                    double sp = cond_schedules.sigma(i, t_plus);
                    state.num[r * Mn + i] += std::sqrt(sp * sp - sc * sc) * rng.normal();
                }
                for (std::size_t u = 0; u < Uc; ++u) {
                    std::size_t j = tgt_cat[u];
                    int32_t& cell = state.cat[r * Mc + j];
                    if (cell == static_cast<int32_t>(cond_model.cardinality(j))) continue;
                    double remask =
                        1.0 - cond_schedules.alpha(j, t_plus) / cond_schedules.alpha(j, t_cur);
                    if (rng.uniform() < remask)
                        cell = static_cast<int32_t>(cond_model.cardinality(j));
                }
            }
        }

        guided_call(t_plus);

        // Numerical Euler move on targets.
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t u = 0; u < Un; ++u) {
                std::size_t i = tgt_num[u];
                double dsig = cond_schedules.sigma(i, t_prev) - cond_schedules.sigma(i, t_plus);
                state.num[r * Mn + i] += dsig * eps_tilde[r * Un + u];
            }

        // Posterior draw on masked target cells using the guided estimate.
        for (std::size_t r = 0; r < R; ++r) {
            Philox& rng = row_rng[r];
            for (std::size_t u = 0; u < Uc; ++u) {
                std::size_t j = tgt_cat[u];
                int32_t& cell = state.cat[r * Mc + j];
                if (cell != static_cast<int32_t>(cond_model.cardinality(j))) continue;
                double a_plus = cond_schedules.alpha(j, t_plus);
                double a_prev = cond_schedules.alpha(j, t_prev);
                const double* mu = mu_tilde.data() + r * mu_stride + mu_offset[u];
                std::size_t cj = cond_model.cardinality(j);
                double denom = 1.0 - a_plus;
                double unmask_scale = (a_prev - a_plus) / denom;
                double mu_sum = 0.0;
                for (std::size_t c = 0; c < cj; ++c) mu_sum += mu[c];
                double branch_sum = (1.0 - a_prev) / denom + unmask_scale * mu_sum;
                if (std::fabs(branch_sum - 1.0) > 1e-9)
                    throw ComputeError("impute: categorical posterior does not normalize");
                double uu = rng.uniform();
                double cum = 0.0;
                for (std::size_t c = 0; c < cj; ++c) {
                    cum += unmask_scale * mu[c];
                    if (uu < cum) {
                        cell = static_cast<int32_t>(c);
                        break;
                    }
                }
            }
        }

        if (scfg.second_order) {
            // Heun re-evaluation at the Euler proposal for the numerical
            // targets.
            std::vector<double> first = eps_tilde;
            guided_call(t_prev);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t u = 0; u < Un; ++u) {
                    std::size_t i = tgt_num[u];
                    double dsig =
                        cond_schedules.sigma(i, t_prev) - cond_schedules.sigma(i, t_plus);
                    state.num[r * Mn + i] +=
                        dsig * 0.5 * (eps_tilde[r * Un + u] - first[r * Un + u]);
                }
        }
    }

    // Terminal argmax over the last guided estimates for leftover masks.
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t u = 0; u < Uc; ++u) {
            std::size_t j = tgt_cat[u];
            int32_t& cell = state.cat[r * Mc + j];
            if (cell != static_cast<int32_t>(cond_model.cardinality(j))) continue;
            const double* mu = mu_tilde.data() + r * mu_stride + mu_offset[u];
            std::size_t best = 0;
            for (std::size_t c = 1; c < cond_model.cardinality(j); ++c)
                if (mu[c] > mu[best]) best = c;
            cell = static_cast<int32_t>(best);
        }

    // Write target columns back in original units; observed columns keep
    // their exact input values.
    Dataset sampled = out;
    for (std::size_t u = 0; u < Un; ++u) {
        std::size_t i = tgt_num[u];
        for (std::size_t r = 0; r < R; ++r)
            sampled.num_at(i, r) = qt.inverse_value(i, state.num[r * Mn + i]);
    }
    for (std::size_t u = 0; u < Uc; ++u) {
        std::size_t j = tgt_cat[u];
        for (std::size_t r = 0; r < R; ++r) sampled.cat_at(j, r) = state.cat[r * Mc + j];
    }
    return sampled;
}

}  // namespace tabgen
