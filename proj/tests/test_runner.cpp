#include "core/runner.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>

#include "doctest.h"

using namespace mim;
using namespace mim::runner;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json base_config() {
    return json{
        {"dataset",
         {{"kind", "synthetic"},
          {"num_classes", 2},
          {"n_per_class", 10},
          {"radius", 2.0},
          {"sigma", 0.4},
          {"seed", 5}}},
        {"architecture", {{"kind", "mlp"}, {"hidden", {8}}}},
        {"pretrain", {{"epochs", 5}, {"lr", 0.1}, {"batch_size", 8}, {"seed", 1}}},
        {"finetune",
         {{"lr", 0.001},
          {"batch_size", 8},
          {"seed", 2},
          {"mixup", {{"k", 3}}},
          {"augment",
           {{"target_hw", {1, 2}},
            {"rotation_degrees", {0, 0}},
            {"translate_frac", {0, 0}}}}}},
        {"detectors", {"msp", "energy"}},
        {"output_dir", "test_runner_out"},
    };
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config parsing is strict") {
    CHECK_NOTHROW(ExperimentConfig::from_json(base_config()));

    auto j = base_config();
    j["extra"] = 1;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

    j = base_config();
    j["finetune"]["mixup"]["kk"] = 2;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

    j = base_config();
    j["dataset"]["radius_typo"] = 1.0;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

    j = base_config();
    j["detectors"] = {"msp", "svm"};
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

    j = base_config();
    j["positive_class"] = "neither";
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

    j = base_config();
    j["finetune"]["mixup"]["k"] = 99;  // exceeds finetune batch_size
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

    j = base_config();
    j["dataset"]["kind"] = "parquet";
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

    j = base_config();
    j["energy_temperature"] = -1.0;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
}

TEST_CASE("config defaults") {
    json j{{"dataset", {{"kind", "synthetic"}}}};
    auto cfg = ExperimentConfig::from_json(j);
    CHECK(cfg.finetune.lr == 0.0001);
    CHECK(cfg.finetune.momentum == 0.9);
    CHECK(cfg.finetune.batch_size == 32);
    CHECK(cfg.pretrain.epochs == 30);
    CHECK(cfg.detectors == std::vector<std::string>{"msp"});
    CHECK(cfg.positive_class == "id");
}

TEST_CASE("config file loading") {
    const std::string path = "test_runner_cfg.json";
    {
        std::ofstream os(path);
        os << base_config().dump();
    }
    CHECK_NOTHROW(ExperimentConfig::from_file(path));
    {
        std::ofstream os(path, std::ios::trunc);
        os << "{not json";
    }
    CHECK_THROWS_AS(ExperimentConfig::from_file(path), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_file("missing.json"), ConfigError);
    std::remove(path.c_str());
}

TEST_CASE("finetune epoch visits every row once and traces every batch") {
    auto cfg = ExperimentConfig::from_json(base_config());
    auto d = load_data(cfg);
    const std::size_t n = d.id_train.size();  // 16
    REQUIRE(n == 16);

    nn::Classifier m(resolve_architecture(cfg, d.id_train), 3);
    auto before = m.parameters()[0].second.values();

    FinetuneConfig ft = cfg.finetune;
    ft.batch_size = 5;
    ft.lr = 1e-9;  // near no-op so the parameters barely move
    auto trace = mim_finetune_epoch(m, d.id_train, ft);

    CHECK(trace.per_batch.size() == 4);  // ceil(16 / 5)
    for (auto visits : trace.sample_visits) CHECK(visits == 1);
    for (const auto& b : trace.per_batch) {
        CHECK(b.l_id > 0.0);
        CHECK(b.l_ood >= std::log(2.0) - 1e-9);  // uniform loss floor at ln C
        CHECK(b.total == doctest::Approx(b.l_id + b.l_ood).epsilon(1e-12));
    }
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(std::fabs(m.parameters()[0].second.values()[i] - before[i]) < 1e-6);
}

TEST_CASE("pretraining fits the synthetic task") {
    auto j = base_config();
    j["dataset"]["n_per_class"] = 30;
    j["pretrain"]["epochs"] = 30;
    auto cfg = ExperimentConfig::from_json(j);
    auto d = load_data(cfg);
    auto m = pretrain(cfg, d);

    auto report = evaluate(m, d.id_train, d.id_test, d.ood_sets, cfg, "eval");
    CHECK(report.id_accuracy > 0.8);
    CHECK(report.rows.size() == 2);  // 1 ood set x 2 detectors
    CHECK(report.rows[0].phase == "eval");
}

TEST_CASE("metric orientation flip keeps auroc and changes the pr baseline") {
    auto cfg = ExperimentConfig::from_json(base_config());
    auto d = load_data(cfg);
    auto m = pretrain(cfg, d);

    auto as_id = evaluate(m, d.id_train, d.id_test, d.ood_sets, cfg, "eval");
    auto flipped_cfg = cfg;
    flipped_cfg.positive_class = "ood";
    auto as_ood = evaluate(m, d.id_train, d.id_test, d.ood_sets, flipped_cfg, "eval");
    for (std::size_t i = 0; i < as_id.rows.size(); ++i) {
        CHECK(as_ood.rows[i].auroc == doctest::Approx(as_id.rows[i].auroc).epsilon(1e-12));
    }
}

TEST_CASE("report csv round trip and formatting") {
    std::vector<eval::ReportRow> rows = {
        {"synth-id", "synth-ood", "msp", "before", 1.0, 0.1234564999},
        {"synth-id", "synth-ood", "energy", "after", 0.5, 0.75},
    };
    const std::string path = "test_runner_report.csv";
    write_report_csv(rows, path);

    std::ifstream is(path);
    std::string header, line1;
    std::getline(is, header);
    std::getline(is, line1);
    CHECK(header == "id_dataset,ood_dataset,detector,phase,auroc,aupr");
    CHECK(line1 == "synth-id,synth-ood,msp,before,1.000000,0.123456");

    auto back = read_report_csv(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].detector == "msp");
    CHECK(back[0].auroc == 1.0);
    CHECK(back[1].phase == "after");
    CHECK(back[1].aupr == 0.75);

    {
        std::ofstream os(path, std::ios::trunc);
        os << "wrong,header\n";
    }
    CHECK_THROWS_AS(read_report_csv(path), DataError);
    std::remove(path.c_str());
}

TEST_CASE("run_experiment writes the full artifact set") {
    TempDir dir("test_runner_out");
    auto cfg = ExperimentConfig::from_json(base_config());
    auto mf = run_experiment(cfg);

    CHECK(fs::exists(mf.model_pre_path));
    CHECK(fs::exists(mf.model_post_path));
    CHECK(fs::exists(mf.report_path));
    CHECK(fs::exists(mf.losses_path));
    CHECK(fs::exists(mf.manifest_path));
    CHECK(mf.model_pre_hash == file_hash(mf.model_pre_path));
    CHECK(mf.model_post_hash == file_hash(mf.model_post_path));

    // 2 phases x 2 detectors x 1 ood set
    auto rows = read_report_csv(mf.report_path);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].phase == "before");
    CHECK(rows[2].phase == "after");
    const std::regex metric("^[0-9]+\\.[0-9]{6}$");
    std::ifstream is(mf.report_path);
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        const auto a = line.rfind(',');
        const auto b = line.rfind(',', a - 1);
        CHECK(std::regex_match(line.substr(b + 1, a - b - 1), metric));
        CHECK(std::regex_match(line.substr(a + 1), metric));
    }

    // losses.csv has one line per batch (16 rows / batch 8 = 2) plus a header
    std::ifstream ls(mf.losses_path);
    std::size_t lines = 0;
    while (std::getline(ls, line)) ++lines;
    CHECK(lines == 3);

    json manifest;
    std::ifstream(mf.manifest_path) >> manifest;
    CHECK(manifest.at("model_pretrained_hash") == mf.model_pre_hash);
    CHECK(manifest.at("seeds").at("finetune") == 2);
    CHECK(manifest.at("id_accuracy_before").is_number());
}

TEST_CASE("reruns are byte-identical") {
    TempDir dir_a("test_runner_rerun_a");
    TempDir dir_b("test_runner_rerun_b");
    auto cfg = ExperimentConfig::from_json(base_config());
    cfg.output_dir = dir_a.path.string();
    auto a = run_experiment(cfg);
    cfg.output_dir = dir_b.path.string();
    auto b = run_experiment(cfg);

    CHECK(file_hash(a.report_path) == file_hash(b.report_path));
    CHECK(file_hash(a.losses_path) == file_hash(b.losses_path));
    CHECK(a.model_pre_hash == b.model_pre_hash);
    CHECK(a.model_post_hash == b.model_post_hash);
}

TEST_CASE("subcommand flows") {
    TempDir dir("test_runner_flows");
    auto j = base_config();
    j["output_dir"] = dir.path.string();
    auto cfg = ExperimentConfig::from_json(j);

    const auto pre = pretrain_to_dir(cfg);
    CHECK(fs::exists(pre));
    const auto post = finetune_from_file(cfg, pre);
    CHECK(fs::exists(post));
    CHECK(fs::exists(dir.path / "losses.csv"));
    const auto report = evaluate_from_file(cfg, post);
    auto rows = read_report_csv(report);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].phase == "eval");
}

TEST_CASE("gen_synth emits loadable MIMD files") {
    TempDir dir("test_runner_gen");
    auto cfg = ExperimentConfig::from_json(base_config());
    gen_synth(cfg, dir.path.string());

    auto train = data::load_raw_dataset((dir.path / "id_train.mimd").string());
    auto test = data::load_raw_dataset((dir.path / "id_test.mimd").string());
    auto ood = data::load_raw_dataset((dir.path / "ood_test.mimd").string());
    CHECK(train.size() == 16);
    CHECK(test.size() == 4);
    CHECK(ood.size() == 4);
    CHECK(train.labels.has_value());
    CHECK_FALSE(ood.labels.has_value());

    auto raw_cfg = cfg;
    raw_cfg.dataset.kind = DatasetSpec::Kind::Raw;
    CHECK_THROWS_AS(gen_synth(raw_cfg, dir.path.string()), ConfigError);
}

TEST_CASE("MIM_OUT_DIR overrides the configured output directory") {
    auto cfg = ExperimentConfig::from_json(base_config());
    CHECK(resolve_output_dir(cfg) == "test_runner_out");
    setenv("MIM_OUT_DIR", "elsewhere", 1);
    CHECK(resolve_output_dir(cfg) == "elsewhere");
    unsetenv("MIM_OUT_DIR");
    CHECK(resolve_output_dir(cfg) == "test_runner_out");
}
