#pragma once

// Run configuration for the command-line tool: one JSON document with
// sections mirroring the module configs. Unknown keys are rejected at every
// level so typos fail loudly instead of silently using defaults.
//
//   {
//     "data": "train.csv",            required
//     "schema": "schema.json",        required
//     "out_dir": "runs/example",      required
//     "seed": 1,                      required (no ambient entropy)
//     "training": { "epochs", "batch_size", "lambda_cat", "lr", "beta1",
//                   "beta2", "eps", "checkpoint_every", "learn_schedules" },
//     "model":    { "embed_dim", "layers_in", "mlp_layers", "mlp_hidden",
//                   "layers_out", "time_dim" },
//     "schedule": { "rho_init", "k_init", "sigma_min", "sigma_max", "delta" },
//     "sampler":  { "steps", "mode", "gamma", "second_order" },
//     "guidance": { "omega", "target_columns" }
//   }

#include <cstdint>
#include <string>

#include "tabgen/denoiser.hpp"
#include "tabgen/diffusion.hpp"
#include "tabgen/guidance.hpp"
#include "tabgen/sampler.hpp"

namespace tabgen {

struct ScheduleConfig {
    double rho_init = 7.0;
    double k_init = 1.0;
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double delta = 1e-3;

    void validate() const;
    ScheduleSet make(std::size_t num_cols, std::size_t cat_cols) const;
};

struct RunConfig {
    std::string data_path;
    std::string schema_path;
    std::string out_dir;
    uint64_t seed = 0;

    TrainingConfig training;  // training.seed mirrors seed
    DenoiserConfig model;
    ScheduleConfig schedule;
    SamplerConfig sampler;  // sampler.seed mirrors seed
    GuidanceConfig guidance;

    static RunConfig from_json(const std::string& text);
    static RunConfig load(const std::string& path);

    // Re-points every sampler/training seed at the run seed.
    void set_seed(uint64_t s);

    // Field-level checks plus existence of the referenced input files.
    void validate(bool check_paths = true) const;
};

}  // namespace tabgen
