#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tabgen/dataset.hpp"
#include "tabgen/denoiser.hpp"
#include "tabgen/rng.hpp"
#include "tabgen/schedule.hpp"
#include "tabgen/tensor.hpp"

namespace tabgen {

// --- forward process -------------------------------------------------------

// x_t = x0 + sigma_i(t) * eps, row-major [rows x M_num], per-row t.
std::vector<double> perturb_numerical(const std::vector<double>& x0,
                                      const std::vector<double>& t,
                                      const std::vector<double>& eps,
                                      const ScheduleSet& schedules, std::size_t rows);

// Each cell keeps its category with probability alpha_j(t) and otherwise
// flips to the mask index C_j.  x0 must be mask-free.
std::vector<int32_t> perturb_categorical(const std::vector<int32_t>& x0,
                                         const std::vector<double>& t,
                                         const ScheduleSet& schedules,
                                         const std::vector<std::size_t>& cardinalities,
                                         std::size_t rows, Philox& rng);

// --- loss terms (the contract the fused training path must match) ----------

// Mean over rows of the squared noise-estimate residual summed over columns.
double loss_num(const std::vector<double>& eps_hat, const std::vector<double>& eps,
                std::size_t rows);

// Mean over rows of sum over masked cells of weight(t) * log(prob of the
// true category); weight = alpha'/(1-alpha) < 0 and log <= 0, so >= 0.
// Masked cells are those where xt_cat carries the mask index.
double loss_cat(const DenoiserOutput& out, const std::vector<int32_t>& x0_cat,
                const std::vector<int32_t>& xt_cat, const std::vector<double>& t,
                const ScheduleSet& schedules, const std::vector<std::size_t>& cardinalities);

double total_loss(double l_num, double l_cat, double lambda_num, double lambda_cat);

// Linear decay of the numerical loss weight: 1 - step/total (step counted
// from 1, so the weight reaches 0 exactly at the last step).
double lambda_num_at(std::size_t step, std::size_t total_steps);

// --- training loop ----------------------------------------------------------

struct TrainingConfig {
    std::size_t epochs = 8000;
    std::size_t batch_size = 4096;
    double lambda_cat = 1.0;
    AdamConfig adam;  // lr default 1e-3
    uint64_t seed = 0;
    std::size_t checkpoint_every = 0;  // epochs between periodic snapshots; 0 = off
    bool learn_schedules = true;       // false freezes rho/k at their init values

    void validate() const;
};

struct HistoryRow {
    std::size_t epoch = 0;
    double loss_num = 0.0;
    double loss_cat = 0.0;
    double total = 0.0;
    std::vector<double> rho;
    std::vector<double> k;
};

struct TrainResult {
    std::vector<double> best_params;  // denoiser parameters at the best epoch
    ScheduleSet best_schedules;
    double best_loss = 0.0;
    std::size_t best_epoch = 0;
    std::vector<HistoryRow> history;
};

// Runs the training loop on an already-transformed dataset (numerical
// columns in normal space).  Each step: shuffle-derived batch, per-row
// t ~ U(0,1), Gaussian and mask draws, exact gradients, one Adam update over
// denoiser parameters and schedule parameters jointly.  `on_snapshot` (if
// set) fires every checkpoint_every epochs with the current state.
TrainResult train(
    Denoiser& model, ScheduleSet& schedules, const Dataset& data, const TrainingConfig& cfg,
    const std::function<void(std::size_t epoch, const Denoiser&, const ScheduleSet&)>&
        on_snapshot = nullptr);

// Loss history as a plain-text table: one row per epoch with the losses and
// the current schedule parameters.
void write_history(const std::string& path, const std::vector<HistoryRow>& history);

}  // namespace tabgen
