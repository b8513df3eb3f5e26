#include <doctest.h>

#include <string>

#include "tabgen/config.hpp"
#include "tabgen/error.hpp"

using namespace tabgen;
using doctest::Approx;

namespace {

const char* kFullDoc = R"({
  "data": "train.csv",
  "schema": "schema.json",
  "out_dir": "runs/example",
  "seed": 17,
  "training": {
    "epochs": 250,
    "batch_size": 512,
    "lambda_cat": 0.8,
    "lr": 0.002,
    "beta1": 0.88,
    "beta2": 0.995,
    "eps": 1e-9,
    "checkpoint_every": 50,
    "learn_schedules": false
  },
  "model": {
    "embed_dim": 8,
    "layers_in": 1,
    "mlp_layers": 3,
    "mlp_hidden": 64,
    "layers_out": 2,
    "time_dim": 8
  },
  "schedule": {
    "rho_init": 5.0,
    "k_init": 2.0,
    "sigma_min": 0.01,
    "sigma_max": 40.0,
    "delta": 0.002
  },
  "sampler": {
    "steps": 25,
    "mode": "deterministic",
    "gamma": 0.0,
    "second_order": true
  },
  "guidance": {
    "omega": 1.5,
    "target_columns": ["income", "age"]
  }
})";

}  // namespace

TEST_CASE("full document parses into every section") {
    RunConfig cfg = RunConfig::from_json(kFullDoc);
    CHECK(cfg.data_path == "train.csv");
    CHECK(cfg.schema_path == "schema.json");
    CHECK(cfg.out_dir == "runs/example");
    CHECK(cfg.seed == 17);

    CHECK(cfg.training.epochs == 250);
    CHECK(cfg.training.batch_size == 512);
    CHECK(cfg.training.lambda_cat == 0.8);
    CHECK(cfg.training.adam.lr == 0.002);
    CHECK(cfg.training.adam.beta1 == 0.88);
    CHECK(cfg.training.adam.beta2 == 0.995);
    CHECK(cfg.training.adam.eps == 1e-9);
    CHECK(cfg.training.checkpoint_every == 50);
    CHECK_FALSE(cfg.training.learn_schedules);

    CHECK(cfg.model.embed_dim == 8);
    CHECK(cfg.model.layers_in == 1);
    CHECK(cfg.model.mlp_layers == 3);
    CHECK(cfg.model.mlp_hidden == 64);
    CHECK(cfg.model.layers_out == 2);
    CHECK(cfg.model.time_dim == 8);

    CHECK(cfg.schedule.rho_init == 5.0);
    CHECK(cfg.schedule.k_init == 2.0);
    CHECK(cfg.schedule.sigma_min == 0.01);
    CHECK(cfg.schedule.sigma_max == 40.0);
    CHECK(cfg.schedule.delta == 0.002);

    CHECK(cfg.sampler.steps == 25);
    CHECK(cfg.sampler.mode == SamplerMode::Deterministic);
    CHECK(cfg.sampler.gamma == 0.0);
    CHECK(cfg.sampler.second_order);

    CHECK(cfg.guidance.omega == 1.5);
    CHECK(cfg.guidance.target_columns == std::vector<std::string>{"income", "age"});

    // The run seed propagates into the seeded subsystems.
    CHECK(cfg.training.seed == 17);
    CHECK(cfg.sampler.seed == 17);
}

TEST_CASE("minimal document gets defaults everywhere else") {
    RunConfig cfg = RunConfig::from_json(
        R"({"data": "d.csv", "schema": "s.json", "out_dir": "o", "seed": 3})");
    CHECK(cfg.training.epochs == 8000);
    CHECK(cfg.training.batch_size == 4096);
    CHECK(cfg.training.lambda_cat == 1.0);
    CHECK(cfg.training.adam.lr == 1e-3);
    CHECK(cfg.training.learn_schedules);
    CHECK(cfg.model.embed_dim == 4);
    CHECK(cfg.model.mlp_hidden == 256);
    CHECK(cfg.schedule.rho_init == 7.0);
    CHECK(cfg.schedule.k_init == 1.0);
    CHECK(cfg.schedule.sigma_min == 0.002);
    CHECK(cfg.schedule.sigma_max == 80.0);
    CHECK(cfg.schedule.delta == 1e-3);
    CHECK(cfg.sampler.steps == 50);
    CHECK(cfg.sampler.mode == SamplerMode::Stochastic);
    CHECK(cfg.sampler.gamma == -1.0);  // resolves to 1/steps at run time
    CHECK(cfg.guidance.omega == 0.6);
    CHECK(cfg.guidance.target_columns.empty());
    CHECK(cfg.training.seed == 3);
    CHECK(cfg.sampler.seed == 3);
}

TEST_CASE("missing required keys are named in the error") {
    auto expect_error = [](const std::string& doc, const std::string& needle) {
        try {
            RunConfig::from_json(doc);
            FAIL("expected ValidationError for: " << doc);
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_error(R"({"schema": "s", "out_dir": "o", "seed": 1})", "config.data");
    expect_error(R"({"data": "d", "out_dir": "o", "seed": 1})", "config.schema");
    expect_error(R"({"data": "d", "schema": "s", "seed": 1})", "config.out_dir");
    expect_error(R"({"data": "d", "schema": "s", "out_dir": "o"})", "config.seed");
}

TEST_CASE("unknown keys are rejected at every level") {
    auto expect_error = [](const std::string& doc, const std::string& needle) {
        try {
            RunConfig::from_json(doc);
            FAIL("expected ValidationError for: " << doc);
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_error(R"({"data": "d", "schema": "s", "out_dir": "o", "seed": 1, "typo": 1})",
                 "config.typo");
    expect_error(
        R"({"data": "d", "schema": "s", "out_dir": "o", "seed": 1, "training": {"epoch": 5}})",
        "training.epoch");
    expect_error(
        R"({"data": "d", "schema": "s", "out_dir": "o", "seed": 1, "schedule": {"rho": 5}})",
        "schedule.rho");
    expect_error(
        R"({"data": "d", "schema": "s", "out_dir": "o", "seed": 1, "sampler": {"step": 5}})",
        "sampler.step");
    expect_error(
        R"({"data": "d", "schema": "s", "out_dir": "o", "seed": 1, "guidance": {"w": 1}})",
        "guidance.w");
    // The model section is checked by its own parser.
    CHECK_THROWS_AS(RunConfig::from_json(R"({"data": "d", "schema": "s", "out_dir": "o",
                                             "seed": 1, "model": {"width": 4}})"),
                    ValidationError);
}

TEST_CASE("malformed values are rejected with the field name") {
    try {
        RunConfig::from_json(
            R"({"data": "d", "schema": "s", "out_dir": "o", "seed": 1,
                "training": {"epochs": "many"}})");
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("training.epochs") != std::string::npos);
    }
    CHECK_THROWS_AS(RunConfig::from_json("not json at all"), ValidationError);
    CHECK_THROWS_AS(
        RunConfig::from_json(R"({"data": "d", "schema": "s", "out_dir": "o", "seed": 1,
                                 "sampler": {"mode": "magic"}})"),
        ValidationError);
}

TEST_CASE("set_seed repoints all seeded subsystems") {
    RunConfig cfg = RunConfig::from_json(
        R"({"data": "d.csv", "schema": "s.json", "out_dir": "o", "seed": 3})");
    cfg.set_seed(41);
    CHECK(cfg.seed == 41);
    CHECK(cfg.training.seed == 41);
    CHECK(cfg.sampler.seed == 41);
}

TEST_CASE("schedule config validation and construction") {
    ScheduleConfig sc;
    CHECK_NOTHROW(sc.validate());
    auto sched = sc.make(2, 3);
    CHECK(sched.num_cols() == 2);
    CHECK(sched.cat_cols() == 3);
    CHECK(sched.rho(0) == Approx(7.0).epsilon(1e-12));
    CHECK(sched.k(2) == Approx(1.0).epsilon(1e-12));
    CHECK(sched.sigma_min() == 0.002);
    CHECK(sched.sigma_max() == 80.0);
    CHECK(sched.delta() == 1e-3);

    sc.rho_init = -1.0;
    CHECK_THROWS_AS(sc.validate(), ValidationError);
    sc = ScheduleConfig{};
    sc.sigma_min = 0.5;
    sc.sigma_max = 0.4;
    CHECK_THROWS_AS(sc.validate(), ValidationError);
    sc = ScheduleConfig{};
    sc.delta = 0.5;
    CHECK_THROWS_AS(sc.validate(), ValidationError);
}

TEST_CASE("path validation distinguishes missing inputs") {
    RunConfig cfg = RunConfig::from_json(
        R"({"data": "/nonexistent/d.csv", "schema": "/nonexistent/s.json",
            "out_dir": "o", "seed": 3})");
    CHECK_NOTHROW(cfg.validate(false));
    CHECK_THROWS_AS(cfg.validate(true), ValidationError);
    CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json"), ValidationError);
}
