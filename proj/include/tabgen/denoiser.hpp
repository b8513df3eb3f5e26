#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tabgen/schedule.hpp"
#include "tabgen/schema.hpp"
#include "tabgen/tensor.hpp"

namespace tabgen {

// Architecture knobs.  Defaults give the full-size model: per-column linear
// projections into a shared token space, a two-layer transformer over the
// column tokens, a five-layer MLP conditioned on a sinusoidal time
// embedding, one more transformer layer, and per-column output heads.
struct DenoiserConfig {
    std::size_t embed_dim = 4;     // token width d
    std::size_t layers_in = 2;     // transformer layers before the MLP
    std::size_t mlp_layers = 5;    // linear layers in the time-conditioned MLP
    std::size_t mlp_hidden = 256;  // MLP hidden width
    std::size_t layers_out = 1;    // transformer layers after the MLP
    std::size_t time_dim = 16;     // sinusoidal time-feature width (even)

    void validate() const;
    std::string to_json() const;
    static DenoiserConfig from_json(const std::string& text);
    bool operator==(const DenoiserConfig&) const = default;
};

// A batch of noisy rows, row-major: num[r * M_num + i], cat[r * M_cat + j].
// Categorical entries may carry the mask index C_j.
struct NoisyBatch {
    std::size_t rows = 0;
    std::vector<double> num;
    std::vector<int32_t> cat;
    std::vector<double> t;  // one time per row
};

// Everything the stochastic training loss depends on besides the
// parameters.  Freezing these draws makes the loss a deterministic function
// of (theta, rho, k), which is what finite-difference gradient checks and
// exact backprop both need.  The mask pattern is frozen as drawn (not the
// uniforms behind it): the k-gradient flows only through the analytic loss
// weight, treating the pattern as given.
struct FrozenBatch {
    std::size_t rows = 0;
    std::vector<double> x0_num;   // clean numerical values, row-major
    std::vector<int32_t> x0_cat;  // clean categories (mask-free), row-major
    std::vector<double> t;        // per-row time in (0, 1]
    std::vector<double> eps;      // the Gaussian draws behind x_t^num
    std::vector<uint8_t> masked;  // 1 where the categorical cell was masked
};

// Per-row noise estimates and clean-category distributions.
struct DenoiserOutput {
    std::size_t rows = 0;
    std::vector<double> eps_hat;    // [rows x M_num], row-major
    std::vector<double> cat_probs;  // [rows x sum_j C_j]; see prob_offset

    // Start of column j's probabilities within a row's slice.
    std::vector<std::size_t> prob_offset;
    std::size_t prob_stride = 0;

    const double* probs(std::size_t row, std::size_t cat_slot) const {
        return cat_probs.data() + row * prob_stride + prob_offset[cat_slot];
    }
};

struct LossParts {
    double num = 0.0;
    double cat = 0.0;
    double total = 0.0;
};

// The mixed-type denoising network with hand-written exact backprop.
//
// Numerical inputs are scaled by 1/sqrt(1 + sigma^2) before projection so
// token magnitudes stay O(1) across the whole noise range; categorical
// inputs use a learned embedding with a dedicated mask row at index C_j.
// Heads emit the per-column noise estimate (numerical) and a softmax over
// the C_j real categories (the mask state is never predicted).
class Denoiser {
  public:
    Denoiser(const TableSchema& schema, const DenoiserConfig& cfg);

    // Fills all weight tensors from per-tensor seeded streams.
    void init_params(uint64_t seed);

    const DenoiserConfig& config() const { return cfg_; }
    const TableSchema& schema() const { return schema_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }

    // Deterministic forward pass; safe to call concurrently (read-only on
    // parameters).  Throws on shape mismatch.
    DenoiserOutput forward(const NoisyBatch& batch, const ScheduleSet& schedules) const;

    // One stochastic-loss evaluation on frozen draws: mean over rows, sum
    // over columns, lambda-weighted.  Numerical term: squared error of the
    // noise estimate.  Categorical term: -weight(t) * log(prob of the true
    // category) summed over masked cells, with weight = alpha'/(1-alpha) < 0,
    // so the term is non-negative.
    LossParts loss(const FrozenBatch& batch, const ScheduleSet& schedules, double lambda_num,
                   double lambda_cat) const;

    // Same loss, plus exact gradients: parameter gradients accumulate into
    // params().grads() (zeroed first); schedule gradients (with respect to
    // the unconstrained raw values) into drho_raw/dk_raw.  The rho path runs
    // through x_t and the input scaling; the k path through the loss weight.
    LossParts loss_and_gradients(const FrozenBatch& batch, const ScheduleSet& schedules,
                                 double lambda_num, double lambda_cat,
                                 std::vector<double>* drho_raw, std::vector<double>* dk_raw);

    // Layout helpers shared with samplers and losses.
    std::size_t num_cols() const { return num_cols_; }
    std::size_t cat_cols() const { return cat_cols_; }
    std::size_t cardinality(std::size_t j) const { return card_[j]; }

  private:
    struct Workspace;
    void run_forward(const NoisyBatch& batch, const ScheduleSet& schedules, Workspace& ws) const;
    LossParts loss_from_ws(const FrozenBatch& batch, const ScheduleSet& schedules,
                           double lambda_num, double lambda_cat, const Workspace& ws,
                           std::vector<double>* dk_raw) const;
    NoisyBatch perturb(const FrozenBatch& batch, const ScheduleSet& schedules) const;

    TableSchema schema_;
    DenoiserConfig cfg_;
    ParamStore params_;

    std::size_t num_cols_ = 0, cat_cols_ = 0, tokens_ = 0;
    std::vector<std::size_t> card_;        // C_j per categorical slot
    std::vector<std::size_t> num_pos_;     // token position of numerical slot i
    std::vector<std::size_t> cat_pos_;     // token position of categorical slot j
    std::vector<std::size_t> prob_offset_;
    std::size_t prob_stride_ = 0;
};

// Sinusoidal features of t: interleaved (sin, cos) pairs at log-spaced
// frequencies; dim must be even.
void time_features(double t, std::size_t dim, double* out);

}  // namespace tabgen
