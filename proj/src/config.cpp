#include "tabgen/config.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <json.hpp>

#include "tabgen/error.hpp"

namespace tabgen {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ValidationError("config: '" + where + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) {
                ok = true;
                break;
            }
        if (!ok) throw ValidationError("config: unknown key '" + where + "." + key + "'");
    }
}

template <typename T>
T field(const json& j, const std::string& where, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("config: bad value for '" + where + "." + std::string(key) + "'");
    }
}

template <typename T>
T required(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key))
        throw ValidationError("config: missing required key '" + where + "." +
                              std::string(key) + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("config: bad value for '" + where + "." + std::string(key) + "'");
    }
}

}  // namespace

void ScheduleConfig::validate() const {
    if (!(rho_init > 0.0) || !(k_init > 0.0))
        throw ValidationError("schedule: rho_init and k_init must be positive");
    if (!(sigma_min > 0.0) || !(sigma_max > sigma_min))
        throw ValidationError("schedule: need 0 < sigma_min < sigma_max");
    if (!(delta > 0.0) || !(delta < 0.5))
        throw ValidationError("schedule: delta must lie in (0, 0.5)");
}

ScheduleSet ScheduleConfig::make(std::size_t num_cols, std::size_t cat_cols) const {
    validate();
    return ScheduleSet(num_cols, cat_cols, rho_init, k_init, sigma_min, sigma_max, delta);
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: parse error: ") + e.what());
    }
    check_keys(j, "config",
               {"data", "schema", "out_dir", "seed", "training", "model", "schedule",
                "sampler", "guidance"});

    RunConfig cfg;
    cfg.data_path = required<std::string>(j, "config", "data");
    cfg.schema_path = required<std::string>(j, "config", "schema");
    cfg.out_dir = required<std::string>(j, "config", "out_dir");
    cfg.seed = required<uint64_t>(j, "config", "seed");

    if (j.contains("training")) {
        const json& t = j.at("training");
        check_keys(t, "training",
                   {"epochs", "batch_size", "lambda_cat", "lr", "beta1", "beta2", "eps",
                    "checkpoint_every", "learn_schedules"});
        cfg.training.epochs = field<std::size_t>(t, "training", "epochs", cfg.training.epochs);
        cfg.training.batch_size =
            field<std::size_t>(t, "training", "batch_size", cfg.training.batch_size);
        cfg.training.lambda_cat =
            field<double>(t, "training", "lambda_cat", cfg.training.lambda_cat);
        cfg.training.adam.lr = field<double>(t, "training", "lr", cfg.training.adam.lr);
        cfg.training.adam.beta1 = field<double>(t, "training", "beta1", cfg.training.adam.beta1);
        cfg.training.adam.beta2 = field<double>(t, "training", "beta2", cfg.training.adam.beta2);
        cfg.training.adam.eps = field<double>(t, "training", "eps", cfg.training.adam.eps);
        cfg.training.checkpoint_every =
            field<std::size_t>(t, "training", "checkpoint_every", cfg.training.checkpoint_every);
        cfg.training.learn_schedules =
            field<bool>(t, "training", "learn_schedules", cfg.training.learn_schedules);
    }
    if (j.contains("model")) {
        // DenoiserConfig::from_json owns the key checking for this section.
        cfg.model = DenoiserConfig::from_json(j.at("model").dump());
    }
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        check_keys(s, "schedule", {"rho_init", "k_init", "sigma_min", "sigma_max", "delta"});
        cfg.schedule.rho_init = field<double>(s, "schedule", "rho_init", cfg.schedule.rho_init);
        cfg.schedule.k_init = field<double>(s, "schedule", "k_init", cfg.schedule.k_init);
        cfg.schedule.sigma_min =
            field<double>(s, "schedule", "sigma_min", cfg.schedule.sigma_min);
        cfg.schedule.sigma_max =
            field<double>(s, "schedule", "sigma_max", cfg.schedule.sigma_max);
        cfg.schedule.delta = field<double>(s, "schedule", "delta", cfg.schedule.delta);
    }
    if (j.contains("sampler")) {
        const json& s = j.at("sampler");
        check_keys(s, "sampler", {"steps", "mode", "gamma", "second_order"});
        cfg.sampler.steps = field<std::size_t>(s, "sampler", "steps", cfg.sampler.steps);
        if (s.contains("mode"))
            cfg.sampler.mode = parse_sampler_mode(required<std::string>(s, "sampler", "mode"));
        cfg.sampler.gamma = field<double>(s, "sampler", "gamma", cfg.sampler.gamma);
        cfg.sampler.second_order =
            field<bool>(s, "sampler", "second_order", cfg.sampler.second_order);
    }
    if (j.contains("guidance")) {
        const json& g = j.at("guidance");
        check_keys(g, "guidance", {"omega", "target_columns"});
        cfg.guidance.omega = field<double>(g, "guidance", "omega", cfg.guidance.omega);
        cfg.guidance.target_columns = field<std::vector<std::string>>(
            g, "guidance", "target_columns", cfg.guidance.target_columns);
    }

    cfg.set_seed(cfg.seed);
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return from_json(buf.str());
}

void RunConfig::set_seed(uint64_t s) {
    seed = s;
    training.seed = s;
    sampler.seed = s;
}

void RunConfig::validate(bool check_paths) const {
    training.validate();
    model.validate();
    schedule.validate();
    sampler.validate();
    if (check_paths) {
        if (!std::filesystem::exists(data_path))
            throw ValidationError("config: data file '" + data_path + "' does not exist");
        if (!std::filesystem::exists(schema_path))
            throw ValidationError("config: schema file '" + schema_path + "' does not exist");
    }
}

}  // namespace tabgen
