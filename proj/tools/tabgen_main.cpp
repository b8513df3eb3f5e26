// Command-line front end: train | sample | impute | eval.
//
// Exit codes: 0 success, 2 validation error (bad flags, bad config, bad
// input data), 3 runtime/compute error. Every command takes an explicit
// --seed; nothing reads system entropy. TABGEN_THREADS bounds internal
// parallelism (currently the nearest-record privacy scan); TABGEN_ISA
// selects the kernel implementation (scalar|avx2).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tabgen/checkpoint.hpp"
#include "tabgen/config.hpp"
#include "tabgen/dataset.hpp"
#include "tabgen/diffusion.hpp"
#include "tabgen/error.hpp"
#include "tabgen/guidance.hpp"
#include "tabgen/metrics.hpp"
#include "tabgen/quantile.hpp"
#include "tabgen/sampler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::size_t env_threads() {
    const char* v = std::getenv("TABGEN_THREADS");
    if (!v || !*v) return 1;
    char* end = nullptr;
    unsigned long n = std::strtoul(v, &end, 10);
    if (end == v || *end != '\0' || n == 0)
        throw tabgen::ValidationError("TABGEN_THREADS must be a positive integer");
    return static_cast<std::size_t>(n);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw tabgen::ValidationError("cannot create output directory '" + dir +
                                      "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw tabgen::ValidationError("cannot open '" + path + "' for writing");
    os << text;
    if (!os) throw tabgen::ComputeError("short write to '" + path + "'");
}

void write_manifest(const std::string& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
};

int cmd_train(const TrainArgs& a) {
    tabgen::RunConfig cfg = tabgen::RunConfig::load(a.config_path);
    if (a.seed) cfg.set_seed(*a.seed);
    if (a.out_dir) cfg.out_dir = *a.out_dir;
    cfg.validate(true);

    tabgen::TableSchema schema = tabgen::TableSchema::load(cfg.schema_path);
    tabgen::Dataset data = tabgen::load_dataset(cfg.data_path, schema);
    tabgen::QuantileTransform qt = tabgen::QuantileTransform::fit(data);
    tabgen::Dataset transformed = qt.transform(data);

    tabgen::ScheduleSet schedules =
        cfg.schedule.make(data.schema.num_count(), data.schema.cat_count());
    tabgen::Denoiser model(data.schema, cfg.model);
    model.init_params(cfg.seed);

    ensure_dir(cfg.out_dir);
    auto snapshot_path = [&](std::size_t epoch) {
        return (fs::path(cfg.out_dir) / ("checkpoint_epoch" + std::to_string(epoch) + ".tabck"))
            .string();
    };
    auto on_snapshot = [&](std::size_t epoch, const tabgen::Denoiser& m,
                           const tabgen::ScheduleSet& s) {
        tabgen::Checkpoint ck{data.schema, qt,      s,
                              cfg.model,   m.params().values(),
                              cfg.seed,    static_cast<int64_t>(epoch),
                              0.0};
        ck.save(snapshot_path(epoch));
    };

    tabgen::TrainResult result =
        tabgen::train(model, schedules, transformed, cfg.training, on_snapshot);

    tabgen::Checkpoint best{data.schema, qt,
                            result.best_schedules, cfg.model,
                            result.best_params,    cfg.seed,
                            static_cast<int64_t>(result.best_epoch), result.best_loss};
    std::string model_path = (fs::path(cfg.out_dir) / "model.tabck").string();
    best.save(model_path);
    tabgen::write_history((fs::path(cfg.out_dir) / "history.tsv").string(), result.history);

    json manifest = {{"command", "train"},
                     {"config", a.config_path},
                     {"data", cfg.data_path},
                     {"schema", cfg.schema_path},
                     {"seed", cfg.seed},
                     {"epochs", cfg.training.epochs},
                     {"best_epoch", result.best_epoch},
                     {"best_loss", result.best_loss},
                     {"checkpoint", "model.tabck"}};
    write_manifest((fs::path(cfg.out_dir) / "manifest.json").string(), manifest);

    std::cout << "trained " << cfg.training.epochs << " epochs; best epoch "
              << result.best_epoch << " loss " << result.best_loss << "\n"
              << "checkpoint: " << model_path << "\n";
    return 0;
}

// --- sample -----------------------------------------------------------------

struct SampleArgs {
    std::string checkpoint;
    std::size_t n = 0;
    std::string out;
    uint64_t seed = 0;
    std::size_t steps = 50;
    std::string mode = "stochastic";
    double gamma = -1.0;
    bool second_order = false;
};

tabgen::SamplerConfig sampler_config(std::size_t steps, const std::string& mode, double gamma,
                                     bool second_order, uint64_t seed) {
    tabgen::SamplerConfig scfg;
    scfg.steps = steps;
    scfg.mode = tabgen::parse_sampler_mode(mode);
    scfg.gamma = gamma;
    scfg.second_order = second_order;
    scfg.seed = seed;
    scfg.validate();
    return scfg;
}

int cmd_sample(const SampleArgs& a) {
    tabgen::Checkpoint ck = tabgen::Checkpoint::load(a.checkpoint);
    tabgen::Denoiser model = ck.make_denoiser();
    tabgen::SamplerConfig scfg =
        sampler_config(a.steps, a.mode, a.gamma, a.second_order, a.seed);

    tabgen::Dataset synth = tabgen::sample_table(model, ck.schedules, ck.qt, a.n, scfg);
    if (fs::path(a.out).has_parent_path()) ensure_dir(fs::path(a.out).parent_path().string());
    tabgen::write_csv(synth, a.out);

    json manifest = {{"command", "sample"},
                     {"checkpoint", a.checkpoint},
                     {"rows", a.n},
                     {"seed", a.seed},
                     {"steps", a.steps},
                     {"mode", tabgen::sampler_mode_name(scfg.mode)},
                     {"gamma", scfg.effective_gamma()},
                     {"second_order", a.second_order}};
    write_manifest(a.out + ".manifest.json", manifest);
    std::cout << "wrote " << a.n << " rows to " << a.out << "\n";
    return 0;
}

// --- impute -----------------------------------------------------------------

struct ImputeArgs {
    std::string cond_path;
    std::string uncond_path;
    std::string input;
    std::string out;
    double omega = 0.6;
    uint64_t seed = 0;
    std::size_t steps = 50;
    std::string mode = "stochastic";
    double gamma = -1.0;
    bool second_order = false;
};

int cmd_impute(const ImputeArgs& a) {
    tabgen::Checkpoint cond_ck = tabgen::Checkpoint::load(a.cond_path);
    tabgen::Checkpoint uncond_ck = tabgen::Checkpoint::load(a.uncond_path);
    tabgen::Denoiser cond_model = cond_ck.make_denoiser();
    tabgen::Denoiser uncond_model = uncond_ck.make_denoiser();

    std::vector<std::string> targets;
    for (const auto& col : uncond_ck.schema.columns) targets.push_back(col.name);

    const tabgen::TableSchema& schema = cond_ck.schema;
    tabgen::RawTable raw = tabgen::load_csv(a.input);
    {
        std::vector<std::string> want;
        for (const auto& col : schema.columns) want.push_back(col.name);
        if (raw.header != want)
            throw tabgen::ValidationError(
                "impute: input header does not match the checkpoint schema");
    }

    // Target cells must be blank; observed cells must not be.
    std::vector<uint8_t> is_target(schema.columns.size(), 0);
    for (const auto& name : targets) is_target[schema.position_of(name)] = 1;
    tabgen::RawTable filled = raw;
    for (std::size_t r = 0; r < raw.rows(); ++r)
        for (std::size_t p = 0; p < schema.columns.size(); ++p) {
            const auto& col = schema.columns[p];
            if (is_target[p]) {
                if (!raw.missing[r][p])
                    throw tabgen::ValidationError("impute: target column '" + col.name +
                                                  "' has a non-blank cell in row " +
                                                  std::to_string(r + 1));
                // Placeholder; the sampler overwrites every target cell.
                filled.missing[r][p] = 0;
                filled.cells[r][p] =
                    col.kind == tabgen::ColumnKind::Numerical ? "0" : col.categories.front();
            } else if (raw.missing[r][p]) {
                throw tabgen::ValidationError("impute: observed column '" + col.name +
                                              "' has a blank cell in row " +
                                              std::to_string(r + 1));
            }
        }
    tabgen::Dataset observed = tabgen::encode(filled, schema);
    if (observed.schema != schema)
        throw tabgen::ValidationError("impute: input data does not fit the checkpoint schema");

    tabgen::GuidanceConfig gcfg;
    gcfg.omega = a.omega;
    gcfg.target_columns = targets;
    tabgen::SamplerConfig scfg =
        sampler_config(a.steps, a.mode, a.gamma, a.second_order, a.seed);

    tabgen::Dataset completed =
        tabgen::impute(cond_model, cond_ck.schedules, cond_ck.qt, uncond_model,
                       uncond_ck.schedules, observed, gcfg, scfg);

    // Observed cells are copied from the input text untouched; only target
    // cells are rendered from the imputed values.
    std::ostringstream os;
    for (std::size_t p = 0; p < schema.columns.size(); ++p)
        os << (p ? "," : "") << csv_field(schema.columns[p].name);
    os << '\n';
    for (std::size_t r = 0; r < raw.rows(); ++r) {
        for (std::size_t p = 0; p < schema.columns.size(); ++p) {
            if (p) os << ',';
            const auto& col = schema.columns[p];
            if (!is_target[p]) {
                os << csv_field(raw.cells[r][p]);
            } else if (col.kind == tabgen::ColumnKind::Numerical) {
                std::size_t slot = schema.kind_slot(p);
                os << csv_field(tabgen::format_double(completed.num_at(slot, r)));
            } else {
                std::size_t slot = schema.kind_slot(p);
                os << csv_field(col.categories.at(
                    static_cast<std::size_t>(completed.cat_at(slot, r))));
            }
        }
        os << '\n';
    }
    if (fs::path(a.out).has_parent_path()) ensure_dir(fs::path(a.out).parent_path().string());
    write_text(a.out, os.str());

    json manifest = {{"command", "impute"},
                     {"conditional", a.cond_path},
                     {"unconditional", a.uncond_path},
                     {"input", a.input},
                     {"target_columns", targets},
                     {"omega", a.omega},
                     {"seed", a.seed},
                     {"steps", a.steps},
                     {"mode", tabgen::sampler_mode_name(scfg.mode)},
                     {"second_order", a.second_order}};
    write_manifest(a.out + ".manifest.json", manifest);
    std::cout << "imputed " << targets.size() << " column(s) over " << raw.rows()
              << " rows to " << a.out << "\n";
    return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
    std::string real_path;
    std::string synth_path;
    std::string schema_path;
    std::string train_path;
    std::string holdout_path;
    std::string out_dir;
    uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
    if (a.train_path.empty() != a.holdout_path.empty())
        throw tabgen::ValidationError("eval: --train and --holdout must be given together");

    tabgen::TableSchema schema = tabgen::TableSchema::load(a.schema_path);
    tabgen::Dataset real = tabgen::load_dataset(a.real_path, schema);
    tabgen::Dataset synth = tabgen::load_dataset(a.synth_path, schema);

    std::optional<tabgen::Dataset> train, holdout;
    if (!a.train_path.empty()) {
        train = tabgen::load_dataset(a.train_path, schema);
        holdout = tabgen::load_dataset(a.holdout_path, schema);
    }

    tabgen::MetricReport rep =
        tabgen::evaluate(real, synth, train ? &*train : nullptr,
                         holdout ? &*holdout : nullptr, a.seed, env_threads());

    ensure_dir(a.out_dir);
    write_text((fs::path(a.out_dir) / "report.json").string(), rep.to_json().dump(2) + "\n");
    std::string text = rep.to_text();
    write_text((fs::path(a.out_dir) / "report.txt").string(), text);
    std::ostringstream heat;
    tabgen::write_trend_heatmap(rep.trend, real.schema, heat);
    write_text((fs::path(a.out_dir) / "trend_heatmap.csv").string(), heat.str());

    std::cout << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tabgen: mixed-type tabular data synthesizer (train, sample, impute, eval)"};
    app.require_subcommand(1);

    TrainArgs train_args;
    uint64_t train_seed = 0;
    std::string train_out;
    auto* train_cmd = app.add_subcommand("train", "Fit a model to a CSV dataset");
    train_cmd->add_option("--config", train_args.config_path, "Run configuration (JSON)")
        ->required();
    auto* ts = train_cmd->add_option("--seed", train_seed, "Override the config seed");
    auto* to = train_cmd->add_option("--out", train_out, "Override the output directory");

    SampleArgs sample_args;
    auto* sample_cmd = app.add_subcommand("sample", "Generate rows from a checkpoint");
    sample_cmd->add_option("--checkpoint", sample_args.checkpoint, "Trained model file")
        ->required();
    sample_cmd->add_option("--n", sample_args.n, "Number of rows")->required();
    sample_cmd->add_option("--out", sample_args.out, "Output CSV path")->required();
    sample_cmd->add_option("--seed", sample_args.seed, "Sampling seed (default 0)");
    sample_cmd->add_option("--steps", sample_args.steps, "Backward steps T (default 50)");
    sample_cmd->add_option("--mode", sample_args.mode, "stochastic|deterministic");
    sample_cmd->add_option("--gamma", sample_args.gamma, "Restart factor (default 1/T)");
    sample_cmd->add_flag("--second-order", sample_args.second_order,
                         "Heun correction for numerical columns");

    ImputeArgs impute_args;
    auto* impute_cmd =
        app.add_subcommand("impute", "Fill blank target columns conditioned on the rest");
    impute_cmd->add_option("--cond", impute_args.cond_path, "Full-schema checkpoint")
        ->required();
    impute_cmd->add_option("--uncond", impute_args.uncond_path, "Target-columns checkpoint")
        ->required();
    impute_cmd->add_option("--input", impute_args.input, "CSV with blank target cells")
        ->required();
    impute_cmd->add_option("--out", impute_args.out, "Output CSV path")->required();
    impute_cmd->add_option("--omega", impute_args.omega, "Guidance strength (default 0.6)");
    impute_cmd->add_option("--seed", impute_args.seed, "Sampling seed (default 0)");
    impute_cmd->add_option("--steps", impute_args.steps, "Backward steps T (default 50)");
    impute_cmd->add_option("--mode", impute_args.mode, "stochastic|deterministic");
    impute_cmd->add_option("--gamma", impute_args.gamma, "Restart factor (default 1/T)");
    impute_cmd->add_flag("--second-order", impute_args.second_order,
                         "Heun correction for numerical columns");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Score synthetic data against real data");
    eval_cmd->add_option("--real", eval_args.real_path, "Real data CSV")->required();
    eval_cmd->add_option("--synth", eval_args.synth_path, "Synthetic data CSV")->required();
    eval_cmd->add_option("--schema", eval_args.schema_path, "Schema JSON")->required();
    eval_cmd->add_option("--train", eval_args.train_path,
                         "Training split (enables the nearest-record privacy score)");
    eval_cmd->add_option("--holdout", eval_args.holdout_path, "Holdout split");
    eval_cmd->add_option("--out", eval_args.out_dir, "Report directory")->required();
    eval_cmd->add_option("--seed", eval_args.seed, "Detector seed (default 0)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train_cmd->parsed()) {
            if (ts->count()) train_args.seed = train_seed;
            if (to->count()) train_args.out_dir = train_out;
            return cmd_train(train_args);
        }
        if (sample_cmd->parsed()) return cmd_sample(sample_args);
        if (impute_cmd->parsed()) return cmd_impute(impute_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
    } catch (const tabgen::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
