#include "tabgen/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "tabgen/error.hpp"
#include "tabgen/rng.hpp"

namespace tabgen {

std::vector<double> perturb_numerical(const std::vector<double>& x0,
                                      const std::vector<double>& t,
                                      const std::vector<double>& eps,
                                      const ScheduleSet& schedules, std::size_t rows) {
    const std::size_t cols = schedules.num_cols();
    if (x0.size() != rows * cols || eps.size() != rows * cols || t.size() != rows)
        throw ValidationError("perturb_numerical: shape mismatch");
    std::vector<double> xt(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < cols; ++i)
            xt[r * cols + i] = x0[r * cols + i] + schedules.sigma(i, t[r]) * eps[r * cols + i];
    return xt;
}

std::vector<int32_t> perturb_categorical(const std::vector<int32_t>& x0,
                                         const std::vector<double>& t,
                                         const ScheduleSet& schedules,
                                         const std::vector<std::size_t>& cardinalities,
                                         std::size_t rows, Philox& rng) {
    const std::size_t cols = schedules.cat_cols();
    if (x0.size() != rows * cols || t.size() != rows || cardinalities.size() != cols)
        throw ValidationError("perturb_categorical: shape mismatch");
    std::vector<int32_t> xt(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j) {
            std::size_t c = r * cols + j;
            if (x0[c] < 0 || static_cast<std::size_t>(x0[c]) >= cardinalities[j])
                throw ValidationError("perturb_categorical: x0 must be mask-free");
            bool keep = rng.uniform() < schedules.alpha(j, t[r]);
            xt[c] = keep ? x0[c] : static_cast<int32_t>(cardinalities[j]);
        }
    return xt;
}

double loss_num(const std::vector<double>& eps_hat, const std::vector<double>& eps,
                std::size_t rows) {
    if (eps_hat.size() != eps.size() || rows == 0)
        throw ValidationError("loss_num: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        double r = eps_hat[i] - eps[i];
        acc += r * r;
    }
    return acc / static_cast<double>(rows);
}

double loss_cat(const DenoiserOutput& out, const std::vector<int32_t>& x0_cat,
                const std::vector<int32_t>& xt_cat, const std::vector<double>& t,
                const ScheduleSet& schedules, const std::vector<std::size_t>& cardinalities) {
    const std::size_t rows = out.rows;
    const std::size_t cols = cardinalities.size();
    if (x0_cat.size() != rows * cols || xt_cat.size() != rows * cols || t.size() != rows)
        throw ValidationError("loss_cat: shape mismatch");
    double acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j) {
            std::size_t c = r * cols + j;
            if (xt_cat[c] != static_cast<int32_t>(cardinalities[j])) continue;  // not masked
            double p = out.probs(r, j)[x0_cat[c]];
            acc += schedules.weight(j, t[r]) * std::log(std::max(p, 1e-12));
        }
    return acc / static_cast<double>(rows);
}

double total_loss(double l_num, double l_cat, double lambda_num, double lambda_cat) {
    return lambda_num * l_num + lambda_cat * l_cat;
}

double lambda_num_at(std::size_t step, std::size_t total_steps) {
    return 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
}

void TrainingConfig::validate() const {
    if (epochs == 0 || batch_size == 0)
        throw ValidationError("training config: epochs and batch_size must be positive");
    if (!(lambda_cat >= 0.0 && lambda_cat <= 1.0))
        throw ValidationError("training config: lambda_cat must lie in [0, 1]");
    if (!(adam.lr > 0.0)) throw ValidationError("training config: learning rate must be positive");
}

namespace {

// Row-major copies of the encoded table, the layout the model consumes.
struct RowMajorData {
    std::size_t rows = 0, num_cols = 0, cat_cols = 0;
    std::vector<double> num;
    std::vector<int32_t> cat;
};

RowMajorData to_row_major(const Dataset& ds) {
    RowMajorData d;
    d.rows = ds.rows;
    d.num_cols = ds.schema.num_count();
    d.cat_cols = ds.schema.cat_count();
    d.num.resize(d.rows * d.num_cols);
    d.cat.resize(d.rows * d.cat_cols);
    for (std::size_t s = 0; s < d.num_cols; ++s)
        for (std::size_t r = 0; r < d.rows; ++r) d.num[r * d.num_cols + s] = ds.num_at(s, r);
    for (std::size_t s = 0; s < d.cat_cols; ++s)
        for (std::size_t r = 0; r < d.rows; ++r) d.cat[r * d.cat_cols + s] = ds.cat_at(s, r);
    return d;
}

}  // namespace

TrainResult train(
    Denoiser& model, ScheduleSet& schedules, const Dataset& data, const TrainingConfig& cfg,
    const std::function<void(std::size_t epoch, const Denoiser&, const ScheduleSet&)>&
        on_snapshot) {
    cfg.validate();
    if (data.rows == 0) throw ValidationError("train: empty dataset");
    if (model.num_cols() != schedules.num_cols() || model.cat_cols() != schedules.cat_cols())
        throw ValidationError("train: schedule shape does not match model");

    const RowMajorData rm = to_row_major(data);
    const std::size_t R = rm.rows;
    const std::size_t Mn = rm.num_cols, Mc = rm.cat_cols;
    const std::size_t batches_per_epoch = (R + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = cfg.epochs * batches_per_epoch;

    Adam opt(model.param_count() + Mn + Mc, cfg.adam);
    const std::size_t rho_off = model.param_count();
    const std::size_t k_off = rho_off + Mn;

    TrainResult result;
    result.best_loss = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(R);
    for (std::size_t i = 0; i < R; ++i) order[i] = i;

    std::vector<double> drho, dk;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Per-epoch shuffle with its own stream, so batch membership depends
        // only on (seed, epoch).
        Philox shuffle_rng(cfg.seed, Philox::substream(streams::kShuffle, epoch));
        for (std::size_t i = R; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double epoch_num = 0.0, epoch_cat = 0.0, epoch_total = 0.0;
        std::size_t epoch_rows = 0;

        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            std::size_t lo = b * cfg.batch_size;
            std::size_t hi = std::min(lo + cfg.batch_size, R);
            std::size_t B = hi - lo;
            ++step;
            double lambda_num = lambda_num_at(step, total_steps);

            FrozenBatch batch;
            batch.rows = B;
            batch.x0_num.resize(B * Mn);
            batch.x0_cat.resize(B * Mc);
            batch.t.resize(B);
            batch.eps.resize(B * Mn);
            batch.masked.resize(B * Mc);
            for (std::size_t p = 0; p < B; ++p) {
                std::size_t row = order[lo + p];
                // One stream per (epoch, slot): draws do not depend on how
                // rows are sharded across batches or threads.
                Philox rng(cfg.seed, Philox::substream(Philox::substream(streams::kTrainRow,
                                                                         epoch),
                                                       lo + p));
                double t = rng.uniform_pos();  // (0, 1]: loss weights need t > 0
                batch.t[p] = t;
                for (std::size_t i = 0; i < Mn; ++i) {
                    batch.x0_num[p * Mn + i] = rm.num[row * Mn + i];
                    batch.eps[p * Mn + i] = rng.normal();
                }
                for (std::size_t j = 0; j < Mc; ++j) {
                    batch.x0_cat[p * Mc + j] = rm.cat[row * Mc + j];
                    batch.masked[p * Mc + j] = rng.uniform() >= schedules.alpha(j, t);
                }
            }

            LossParts parts;
            try {
                parts = model.loss_and_gradients(batch, schedules, lambda_num, cfg.lambda_cat,
                                                 cfg.learn_schedules ? &drho : nullptr,
                                                 cfg.learn_schedules ? &dk : nullptr);
            } catch (const ComputeError& e) {
                throw ComputeError("training aborted at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(step) + ": " + e.what());
            }

            opt.begin_step();
            opt.update(model.params().values().data(), model.params().grads().data(), 0,
                       model.param_count());
            if (cfg.learn_schedules) {
                if (Mn) opt.update(schedules.rho_raw().data(), drho.data(), rho_off, Mn);
                if (Mc) opt.update(schedules.k_raw().data(), dk.data(), k_off, Mc);
            }

            epoch_num += parts.num * static_cast<double>(B);
            epoch_cat += parts.cat * static_cast<double>(B);
            epoch_total += parts.total * static_cast<double>(B);
            epoch_rows += B;
        }

        HistoryRow row;
        row.epoch = epoch;
        row.loss_num = epoch_num / static_cast<double>(epoch_rows);
        row.loss_cat = epoch_cat / static_cast<double>(epoch_rows);
        row.total = epoch_total / static_cast<double>(epoch_rows);
        row.rho = schedules.rho_values();
        row.k = schedules.k_values();
        result.history.push_back(row);

        if (row.total < result.best_loss) {
            result.best_loss = row.total;
            result.best_epoch = epoch;
            result.best_params = model.params().values();
            result.best_schedules = schedules;
        }
        if (on_snapshot && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
            on_snapshot(epoch, model, schedules);
    }
    return result;
}

void write_history(const std::string& path, const std::vector<HistoryRow>& history) {
    std::ofstream out(path);
    if (!out) throw ComputeError("cannot write history file: " + path);
    out << "epoch\tloss_num\tloss_cat\ttotal";
    if (!history.empty()) {
        for (std::size_t i = 0; i < history.front().rho.size(); ++i) out << "\trho_" << i;
        for (std::size_t j = 0; j < history.front().k.size(); ++j) out << "\tk_" << j;
    }
    out << "\n";
    for (const auto& row : history) {
        out << row.epoch << '\t' << format_double(row.loss_num) << '\t'
            << format_double(row.loss_cat) << '\t' << format_double(row.total);
        for (double v : row.rho) out << '\t' << format_double(v);
        for (double v : row.k) out << '\t' << format_double(v);
        out << "\n";
    }
}

}  // namespace tabgen
