#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/eval.hpp"
#include "core/nn.hpp"
#include "core/synth.hpp"

#include "json.hpp"

namespace mim::runner {

struct PretrainConfig {
    std::size_t epochs = 30;
    double lr = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
};

struct FinetuneConfig {
    double lr = 0.0001;  // Algorithm defaults: alpha = 0.0001, mu = 0.9
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    synth::MixupConfig mixup;
    synth::AugmentConfig augment;
};

struct DatasetSpec {
    enum class Kind { Synthetic, Cifar10, Raw } kind = Kind::Synthetic;
    data::SynthConfig synth;                       // Synthetic
    std::string cifar_dir;                         // Cifar10
    std::string raw_id_train, raw_id_test;         // Raw
    std::vector<std::pair<std::string, std::string>> ood_paths;  // name, path (Cifar10/Raw)
};

struct ExperimentConfig {
    DatasetSpec dataset;
    nlohmann::json architecture;  // {"kind":"mlp"|"cnn"|"custom", ...}
    PretrainConfig pretrain;
    FinetuneConfig finetune;
    std::vector<std::string> detectors = {"msp"};
    double energy_temperature = 1.0;
    std::string positive_class = "id";  // metric orientation
    std::string output_dir = "out";

    // Strict parse: unknown keys anywhere are rejected.
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
};

struct LoadedData {
    data::Dataset id_train;
    data::Dataset id_test;
    std::vector<data::Dataset> ood_sets;
};

LoadedData load_data(const ExperimentConfig& cfg);
nn::ArchDescriptor resolve_architecture(const ExperimentConfig& cfg, const data::Dataset& id_train);

// Standard multi-epoch CE training on the ID train split.
nn::Classifier pretrain(const ExperimentConfig& cfg, const LoadedData& data);

struct FinetuneTrace {
    std::vector<nn::LossBreakdown> per_batch;
    std::vector<std::size_t> sample_visits;  // times each ID train row was used
};

// One pass of the mixup fine-tuning loop over id_train.
FinetuneTrace mim_finetune_epoch(nn::Classifier& m, const data::Dataset& id_train,
                                 const FinetuneConfig& cfg);

// Scores id_test against every OOD set with every configured detector.
// Fitted detectors are fit on id_train outputs of the same model.
eval::EvalReport evaluate(const nn::Classifier& m, const data::Dataset& id_train,
                          const data::Dataset& id_test,
                          const std::vector<data::Dataset>& ood_sets,
                          const ExperimentConfig& cfg, const std::string& phase);

struct RunManifest {
    std::string config_hash;
    std::uint64_t pretrain_seed = 0;
    std::uint64_t finetune_seed = 0;
    std::string model_pre_path;
    std::string model_post_path;
    std::string model_pre_hash;
    std::string model_post_hash;
    std::string report_path;
    std::string losses_path;
    std::string manifest_path;
    double id_accuracy_before = 0.0;
    double id_accuracy_after = 0.0;
    double pretrain_seconds = 0.0;
    double finetune_seconds = 0.0;
    double evaluate_seconds = 0.0;
};

// Full pipeline: load -> pretrain -> evaluate(before) -> finetune ->
// evaluate(after) -> emit report + manifest + loss trace.
RunManifest run_experiment(const ExperimentConfig& cfg);

// Standalone subcommand flows backing the CLI.
// Trains and saves model_pretrained.mim1; returns its path.
std::string pretrain_to_dir(const ExperimentConfig& cfg);
// One MIM epoch on a saved model; writes model_finetuned.mim1 + losses.csv.
std::string finetune_from_file(const ExperimentConfig& cfg, const std::string& model_path);
// Single-phase evaluation of a saved model; writes report.csv.
std::string evaluate_from_file(const ExperimentConfig& cfg, const std::string& model_path);
// Writes the synthetic benchmark as MIMD files into out_dir.
void gen_synth(const ExperimentConfig& cfg, const std::string& out_dir);

void write_report_csv(const std::vector<eval::ReportRow>& rows, const std::string& path);
std::vector<eval::ReportRow> read_report_csv(const std::string& path);
void write_losses_csv(const std::vector<nn::LossBreakdown>& trace, const std::string& path);

// FNV-1a over a file's bytes, hex string.
std::string file_hash(const std::string& path);

// Resolved output directory: MIM_OUT_DIR env var wins over the config.
std::string resolve_output_dir(const ExperimentConfig& cfg);

}  // namespace mim::runner
