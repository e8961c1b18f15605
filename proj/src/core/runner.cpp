#include "core/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/detect.hpp"
#include "core/rng.hpp"

namespace mim::runner {

namespace fs = std::filesystem;
using nlohmann::json;

// --- config parsing --------------------------------------------------------

namespace {

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& ctx) {
    if (!j.is_object()) throw ConfigError("config: " + ctx + " must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("config: unknown key '" + key + "' in " + ctx);
        }
    }
}

synth::Interval parse_interval(const json& j, const std::string& ctx) {
    if (!j.is_array() || j.size() != 2) {
        throw ConfigError("config: " + ctx + " must be a [lo, hi] pair");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

DatasetSpec parse_dataset(const json& j) {
    DatasetSpec ds;
    const std::string kind = j.value("kind", "");
    const auto parse_ood = [&](const json& arr) {
        for (const auto& o : arr) {
            check_keys(o, {"name", "path"}, "dataset.ood[]");
            ds.ood_paths.emplace_back(o.at("name").get<std::string>(),
                                      o.at("path").get<std::string>());
        }
    };
    if (kind == "synthetic") {
        check_keys(j, {"kind", "num_classes", "n_per_class", "radius", "sigma", "ood_kind",
                       "n_ood", "seed"},
                   "dataset");
        ds.kind = DatasetSpec::Kind::Synthetic;
        ds.synth.num_classes = j.value("num_classes", 4);
        ds.synth.n_per_class = j.value("n_per_class", 100);
        ds.synth.class_mean_radius = j.value("radius", 2.0);
        ds.synth.sigma = j.value("sigma", 0.5);
        const std::string ood_kind = j.value("ood_kind", "ring");
        if (ood_kind == "ring") ds.synth.ood_kind = data::SynthConfig::OodKind::Ring;
        else if (ood_kind == "shifted") ds.synth.ood_kind = data::SynthConfig::OodKind::Shifted;
        else throw ConfigError("config: dataset.ood_kind must be 'ring' or 'shifted'");
        ds.synth.n_ood = j.value("n_ood", 0);
        ds.synth.seed = j.value("seed", 0);
    } else if (kind == "cifar10") {
        check_keys(j, {"kind", "dir", "ood"}, "dataset");
        ds.kind = DatasetSpec::Kind::Cifar10;
        ds.cifar_dir = j.at("dir").get<std::string>();
        if (j.contains("ood")) parse_ood(j.at("ood"));
    } else if (kind == "raw") {
        check_keys(j, {"kind", "id_train", "id_test", "ood"}, "dataset");
        ds.kind = DatasetSpec::Kind::Raw;
        ds.raw_id_train = j.at("id_train").get<std::string>();
        ds.raw_id_test = j.at("id_test").get<std::string>();
        if (j.contains("ood")) parse_ood(j.at("ood"));
    } else {
        throw ConfigError("config: dataset.kind must be 'synthetic', 'cifar10' or 'raw'");
    }
    return ds;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    check_keys(j,
               {"dataset", "architecture", "pretrain", "finetune", "detectors",
                "energy_temperature", "positive_class", "output_dir"},
               "top level");
    ExperimentConfig cfg;
    try {
        cfg.dataset = parse_dataset(j.at("dataset"));

        cfg.architecture = j.value("architecture", json{{"kind", "mlp"}});
        const std::string arch_kind = cfg.architecture.value("kind", "custom");
        if (arch_kind == "mlp") check_keys(cfg.architecture, {"kind", "hidden"}, "architecture");
        else if (arch_kind == "cnn") check_keys(cfg.architecture, {"kind"}, "architecture");
        else if (arch_kind == "custom") {
            check_keys(cfg.architecture, {"kind", "input", "num_classes", "layers"},
                       "architecture");
        } else {
            throw ConfigError("config: architecture.kind must be 'mlp', 'cnn' or 'custom'");
        }

        if (j.contains("pretrain")) {
            const json& p = j.at("pretrain");
            check_keys(p, {"epochs", "lr", "momentum", "batch_size", "seed"}, "pretrain");
            cfg.pretrain.epochs = p.value("epochs", cfg.pretrain.epochs);
            cfg.pretrain.lr = p.value("lr", cfg.pretrain.lr);
            cfg.pretrain.momentum = p.value("momentum", cfg.pretrain.momentum);
            cfg.pretrain.batch_size = p.value("batch_size", cfg.pretrain.batch_size);
            cfg.pretrain.seed = p.value("seed", cfg.pretrain.seed);
        }
        if (j.contains("finetune")) {
            const json& f = j.at("finetune");
            check_keys(f, {"lr", "momentum", "batch_size", "seed", "mixup", "augment"},
                       "finetune");
            cfg.finetune.lr = f.value("lr", cfg.finetune.lr);
            cfg.finetune.momentum = f.value("momentum", cfg.finetune.momentum);
            cfg.finetune.batch_size = f.value("batch_size", cfg.finetune.batch_size);
            cfg.finetune.seed = f.value("seed", cfg.finetune.seed);
            if (f.contains("mixup")) {
                const json& m = f.at("mixup");
                check_keys(m, {"k", "weight_mode", "alpha"}, "finetune.mixup");
                cfg.finetune.mixup.k = m.value("k", cfg.finetune.mixup.k);
                const std::string wm = m.value("weight_mode", "equal");
                if (wm == "equal") {
                    cfg.finetune.mixup.weight_mode = synth::MixupConfig::WeightMode::Equal;
                } else if (wm == "dirichlet") {
                    cfg.finetune.mixup.weight_mode = synth::MixupConfig::WeightMode::Dirichlet;
                } else {
                    throw ConfigError("config: mixup.weight_mode must be 'equal' or 'dirichlet'");
                }
                cfg.finetune.mixup.alpha = m.value("alpha", 1.0);
                if (cfg.finetune.mixup.alpha <= 0.0) {
                    throw ConfigError("config: mixup.alpha must be positive");
                }
            }
            if (f.contains("augment")) {
                const json& a = f.at("augment");
                check_keys(a,
                           {"target_hw", "brightness", "contrast", "saturation", "hue",
                            "rotation_degrees", "translate_frac"},
                           "finetune.augment");
                if (a.contains("target_hw")) {
                    const auto hw = parse_interval(a.at("target_hw"), "augment.target_hw");
                    cfg.finetune.augment.target_h = static_cast<std::size_t>(hw.first);
                    cfg.finetune.augment.target_w = static_cast<std::size_t>(hw.second);
                }
                auto& ag = cfg.finetune.augment;
                if (a.contains("brightness")) ag.brightness = parse_interval(a.at("brightness"), "brightness");
                if (a.contains("contrast")) ag.contrast = parse_interval(a.at("contrast"), "contrast");
                if (a.contains("saturation")) ag.saturation = parse_interval(a.at("saturation"), "saturation");
                if (a.contains("hue")) ag.hue = parse_interval(a.at("hue"), "hue");
                if (a.contains("rotation_degrees")) {
                    ag.rotation_degrees = parse_interval(a.at("rotation_degrees"), "rotation_degrees");
                }
                if (a.contains("translate_frac")) {
                    ag.translate_frac = parse_interval(a.at("translate_frac"), "translate_frac");
                }
            }
        }
        if (j.contains("detectors")) cfg.detectors = j.at("detectors").get<std::vector<std::string>>();
        cfg.energy_temperature = j.value("energy_temperature", 1.0);
        cfg.positive_class = j.value("positive_class", "id");
        cfg.output_dir = j.value("output_dir", "out");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    if (cfg.finetune.mixup.k < 1 || cfg.finetune.mixup.k > cfg.finetune.batch_size) {
        throw ConfigError("config: mixup k must lie in [1, finetune batch_size]");
    }
    if (cfg.positive_class != "id" && cfg.positive_class != "ood") {
        throw ConfigError("config: positive_class must be 'id' or 'ood'");
    }
    if (cfg.energy_temperature <= 0.0) {
        throw ConfigError("config: energy_temperature must be positive");
    }
    cfg.finetune.augment.validate();
    for (const auto& d : cfg.detectors) detect::make_detector(d);  // name validation
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

// --- data loading ----------------------------------------------------------

LoadedData load_data(const ExperimentConfig& cfg) {
    LoadedData out;
    switch (cfg.dataset.kind) {
        case DatasetSpec::Kind::Synthetic: {
            auto bench = data::synth_gaussian_benchmark(cfg.dataset.synth);
            out.id_train = std::move(bench.id_train);
            out.id_test = std::move(bench.id_test);
            out.ood_sets.push_back(std::move(bench.ood_test));
            break;
        }
        case DatasetSpec::Kind::Cifar10: {
            auto [train, test] = data::load_cifar10(cfg.dataset.cifar_dir);
            out.id_train = std::move(train);
            out.id_test = std::move(test);
            break;
        }
        case DatasetSpec::Kind::Raw: {
            out.id_train = data::load_raw_dataset(cfg.dataset.raw_id_train);
            out.id_test = data::load_raw_dataset(cfg.dataset.raw_id_test);
            if (!out.id_train.labels || !out.id_test.labels) {
                throw DataError("raw ID datasets must carry labels");
            }
            break;
        }
    }
    if (cfg.dataset.kind != DatasetSpec::Kind::Synthetic) {
        for (const auto& [name, path] : cfg.dataset.ood_paths) {
            data::Dataset ood = data::load_raw_dataset(path);
            ood.name = name;
            out.ood_sets.push_back(std::move(ood));
        }
    }
    if (out.ood_sets.empty()) throw ConfigError("config: no OOD datasets specified");
    return out;
}

nn::ArchDescriptor resolve_architecture(const ExperimentConfig& cfg,
                                        const data::Dataset& id_train) {
    const std::string kind = cfg.architecture.value("kind", "custom");
    std::size_t num_classes = 0;
    if (id_train.labels) {
        for (int y : *id_train.labels) num_classes = std::max(num_classes, static_cast<std::size_t>(y) + 1);
    }
    if (num_classes < 2) throw DataError("cannot infer num_classes from ID train labels");
    if (kind == "mlp") {
        std::vector<std::size_t> hidden = {64, 64};
        if (cfg.architecture.contains("hidden")) {
            hidden = cfg.architecture.at("hidden").get<std::vector<std::size_t>>();
        }
        return nn::make_mlp(id_train.sample_shape(), hidden, num_classes);
    }
    if (kind == "cnn") return nn::make_cnn(id_train.sample_shape(), num_classes);
    return nn::ArchDescriptor::from_json(cfg.architecture);
}

// --- training --------------------------------------------------------------

nn::Classifier pretrain(const ExperimentConfig& cfg, const LoadedData& d) {
    nn::Classifier m(resolve_architecture(cfg, d.id_train), cfg.pretrain.seed);
    auto opt = nn::OptimizerState::create(m, cfg.pretrain.lr, cfg.pretrain.momentum);
    const std::size_t B = std::min(cfg.pretrain.batch_size, d.id_train.size());
    for (std::size_t epoch = 0; epoch < cfg.pretrain.epochs; ++epoch) {
        const data::BatchPlan plan{B, splitmix64(cfg.pretrain.seed) + epoch, false};
        for (const auto& batch : data::batches(d.id_train, plan)) {
            auto fwd = m.forward(batch.x);
            Tensor loss = nn::cross_entropy(fwd.logits, *batch.y);
            backward(loss);
            nn::sgd_step(m, opt);
        }
    }
    return m;
}

FinetuneTrace mim_finetune_epoch(nn::Classifier& m, const data::Dataset& id_train,
                                 const FinetuneConfig& cfg) {
    FinetuneTrace trace;
    trace.sample_visits.assign(id_train.size(), 0);
    auto opt = nn::OptimizerState::create(m, cfg.lr, cfg.momentum);
    Rng synth_rng(splitmix64(cfg.seed) ^ 0x00D5EEDULL);
    const data::BatchPlan plan{std::min(cfg.batch_size, id_train.size()), cfg.seed, false};
    for (const auto& batch : data::batches(id_train, plan)) {
        for (auto idx : batch.indices) trace.sample_visits[idx]++;

        auto fwd_id = m.forward(batch.x);
        Tensor l_id = nn::cross_entropy(fwd_id.logits, *batch.y);

        // A ragged final batch may hold fewer rows than k.
        synth::MixupConfig mix = cfg.mixup;
        mix.k = std::min(mix.k, batch.x.shape()[0]);
        auto mb = synth::synthesize_ood(batch.x, mix, cfg.augment, synth_rng);

        auto fwd_ood = m.forward(mb.x_aug);
        Tensor l_ood = nn::uniform_target_loss(fwd_ood.logits);

        Tensor total = add(l_id, l_ood);
        backward(total);
        nn::sgd_step(m, opt);

        trace.per_batch.push_back({l_id.scalar(), l_ood.scalar(), total.scalar()});
    }
    return trace;
}

// --- evaluation ------------------------------------------------------------

namespace {

struct ModelOutputs {
    Tensor logits;
    Tensor features;
};

// Forward in chunks so evaluation does not hold full computation graphs.
ModelOutputs forward_all(const nn::Classifier& m, const data::Dataset& ds) {
    const std::size_t N = ds.size();
    const std::size_t chunk = 256;
    const auto sshape = ds.sample_shape();
    const std::size_t stride = shape_numel(sshape);
    std::vector<double> logits, features;
    std::size_t C = 0, D = 0;
    for (std::size_t start = 0; start < N; start += chunk) {
        const std::size_t b = std::min(chunk, N - start);
        std::vector<double> x(ds.images.values().begin() + start * stride,
                              ds.images.values().begin() + (start + b) * stride);
        auto fwd = m.forward(Tensor::from_data({b, sshape[0], sshape[1], sshape[2]}, std::move(x)));
        C = fwd.logits.shape()[1];
        D = fwd.features.shape()[1];
        logits.insert(logits.end(), fwd.logits.values().begin(), fwd.logits.values().end());
        features.insert(features.end(), fwd.features.values().begin(), fwd.features.values().end());
    }
    return {Tensor::from_data({N, C}, std::move(logits)),
            Tensor::from_data({N, D}, std::move(features))};
}

}  // namespace

eval::EvalReport evaluate(const nn::Classifier& m, const data::Dataset& id_train,
                          const data::Dataset& id_test,
                          const std::vector<data::Dataset>& ood_sets,
                          const ExperimentConfig& cfg, const std::string& phase) {
    const auto train_out = forward_all(m, id_train);
    const auto test_out = forward_all(m, id_test);

    std::vector<std::unique_ptr<detect::Detector>> detectors;
    for (const auto& kind : cfg.detectors) {
        auto det = detect::make_detector(kind, cfg.energy_temperature);
        if (det->needs_fit()) {
            det->fit(train_out.logits, train_out.features, *id_train.labels, m.num_classes());
        }
        detectors.push_back(std::move(det));
    }

    eval::EvalReport report;
    report.id_accuracy = eval::accuracy(test_out.logits, *id_test.labels);

    for (const auto& ood : ood_sets) {
        const auto ood_out = forward_all(m, ood);
        for (const auto& det : detectors) {
            eval::ScoredSplit split;
            split.id_scores = det->score(test_out.logits, test_out.features);
            split.ood_scores = det->score(ood_out.logits, ood_out.features);
            if (cfg.positive_class == "ood") {
                std::swap(split.id_scores, split.ood_scores);
                for (auto& v : split.id_scores) v = -v;
                for (auto& v : split.ood_scores) v = -v;
            }
            eval::ReportRow row;
            row.id_dataset = id_test.name;
            row.ood_dataset = ood.name;
            row.detector = det->name();
            row.phase = phase;
            row.auroc = eval::auroc(split);
            row.aupr = eval::aupr(split);
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

// --- reports ---------------------------------------------------------------

namespace {

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void write_report_csv(const std::vector<eval::ReportRow>& rows, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open report file '" + path + "' for writing");
    os << "id_dataset,ood_dataset,detector,phase,auroc,aupr\n";
    for (const auto& r : rows) {
        for (const std::string* f : {&r.id_dataset, &r.ood_dataset, &r.detector, &r.phase}) {
            if (f->find(',') != std::string::npos) {
                throw ContractError("report field '" + *f + "' may not contain a comma");
            }
        }
        os << r.id_dataset << ',' << r.ood_dataset << ',' << r.detector << ',' << r.phase << ','
           << fmt6(r.auroc) << ',' << fmt6(r.aupr) << '\n';
    }
}

std::vector<eval::ReportRow> read_report_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open report file '" + path + "'");
    std::string line;
    if (!std::getline(is, line) || line != "id_dataset,ood_dataset,detector,phase,auroc,aupr") {
        throw DataError("report '" + path + "': bad header");
    }
    std::vector<eval::ReportRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        eval::ReportRow r;
        std::string auroc_s, aupr_s;
        if (!std::getline(ls, r.id_dataset, ',') || !std::getline(ls, r.ood_dataset, ',') ||
            !std::getline(ls, r.detector, ',') || !std::getline(ls, r.phase, ',') ||
            !std::getline(ls, auroc_s, ',') || !std::getline(ls, aupr_s)) {
            throw DataError("report '" + path + "': malformed row '" + line + "'");
        }
        r.auroc = std::stod(auroc_s);
        r.aupr = std::stod(aupr_s);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_losses_csv(const std::vector<nn::LossBreakdown>& trace, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open losses file '" + path + "' for writing");
    os << "batch_index,l_id,l_ood\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        os << i << ',' << fmt6(trace[i].l_id) << ',' << fmt6(trace[i].l_ood) << '\n';
    }
}

std::string file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("file_hash: cannot open '" + path + "'");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        h = fnv1a(buf, static_cast<std::size_t>(is.gcount()), h);
        if (!is) break;
    }
    return hex64(h);
}

std::string resolve_output_dir(const ExperimentConfig& cfg) {
    if (const char* env = std::getenv("MIM_OUT_DIR"); env && *env) return env;
    return cfg.output_dir;
}

// --- subcommand flows ------------------------------------------------------

std::string pretrain_to_dir(const ExperimentConfig& cfg) {
    const std::string out_dir = resolve_output_dir(cfg);
    fs::create_directories(out_dir);
    LoadedData d = load_data(cfg);
    nn::Classifier m = pretrain(cfg, d);
    const auto train_out_path = out_dir + "/model_pretrained.mim1";
    nn::save_model(m, train_out_path);
    return train_out_path;
}

std::string finetune_from_file(const ExperimentConfig& cfg, const std::string& model_path) {
    const std::string out_dir = resolve_output_dir(cfg);
    fs::create_directories(out_dir);
    LoadedData d = load_data(cfg);
    nn::Classifier m = nn::load_model(model_path);
    FinetuneTrace trace = mim_finetune_epoch(m, d.id_train, cfg.finetune);
    const std::string out_path = out_dir + "/model_finetuned.mim1";
    nn::save_model(m, out_path);
    write_losses_csv(trace.per_batch, out_dir + "/losses.csv");
    return out_path;
}

std::string evaluate_from_file(const ExperimentConfig& cfg, const std::string& model_path) {
    const std::string out_dir = resolve_output_dir(cfg);
    fs::create_directories(out_dir);
    LoadedData d = load_data(cfg);
    nn::Classifier m = nn::load_model(model_path);
    eval::EvalReport report = evaluate(m, d.id_train, d.id_test, d.ood_sets, cfg, "eval");
    const std::string report_path = out_dir + "/report.csv";
    write_report_csv(report.rows, report_path);
    return report_path;
}

void gen_synth(const ExperimentConfig& cfg, const std::string& out_dir) {
    if (cfg.dataset.kind != DatasetSpec::Kind::Synthetic) {
        throw ConfigError("gen-synth requires dataset.kind == 'synthetic'");
    }
    fs::create_directories(out_dir);
    auto bench = data::synth_gaussian_benchmark(cfg.dataset.synth);
    data::save_raw_dataset(bench.id_train, out_dir + "/id_train.mimd");
    data::save_raw_dataset(bench.id_test, out_dir + "/id_test.mimd");
    data::save_raw_dataset(bench.ood_test, out_dir + "/ood_test.mimd");
}

// --- pipeline --------------------------------------------------------------

RunManifest run_experiment(const ExperimentConfig& cfg) {
    using clock = std::chrono::steady_clock;
    const auto seconds_since = [](clock::time_point t0) {
        return std::chrono::duration<double>(clock::now() - t0).count();
    };

    const std::string out_dir = resolve_output_dir(cfg);
    fs::create_directories(out_dir);

    RunManifest mf;
    mf.pretrain_seed = cfg.pretrain.seed;
    mf.finetune_seed = cfg.finetune.seed;
    {
        nlohmann::json cj;
        cj["output_dir"] = cfg.output_dir;
        cj["pretrain_seed"] = cfg.pretrain.seed;
        cj["finetune_seed"] = cfg.finetune.seed;
        cj["detectors"] = cfg.detectors;
        const std::string dump = cj.dump();
        mf.config_hash = hex64(fnv1a(dump.data(), dump.size()));
    }

    LoadedData d = load_data(cfg);

    auto t0 = clock::now();
    nn::Classifier pre = pretrain(cfg, d);
    mf.pretrain_seconds = seconds_since(t0);
    mf.model_pre_path = out_dir + "/model_pretrained.mim1";
    nn::save_model(pre, mf.model_pre_path);
    mf.model_pre_hash = file_hash(mf.model_pre_path);

    // The before phase is evaluated from the saved checkpoint, not the
    // in-memory model that is about to be fine-tuned.
    t0 = clock::now();
    nn::Classifier before_model = nn::load_model(mf.model_pre_path);
    eval::EvalReport before = evaluate(before_model, d.id_train, d.id_test, d.ood_sets, cfg, "before");
    mf.id_accuracy_before = before.id_accuracy;

    nn::Classifier after_model = nn::load_model(mf.model_pre_path);
    auto t1 = clock::now();
    FinetuneTrace trace = mim_finetune_epoch(after_model, d.id_train, cfg.finetune);
    mf.finetune_seconds = seconds_since(t1);
    mf.model_post_path = out_dir + "/model_finetuned.mim1";
    nn::save_model(after_model, mf.model_post_path);
    mf.model_post_hash = file_hash(mf.model_post_path);

    eval::EvalReport after = evaluate(after_model, d.id_train, d.id_test, d.ood_sets, cfg, "after");
    mf.id_accuracy_after = after.id_accuracy;
    mf.evaluate_seconds = seconds_since(t0) - mf.finetune_seconds;

    std::vector<eval::ReportRow> rows = before.rows;
    rows.insert(rows.end(), after.rows.begin(), after.rows.end());
    mf.report_path = out_dir + "/report.csv";
    write_report_csv(rows, mf.report_path);
    mf.losses_path = out_dir + "/losses.csv";
    write_losses_csv(trace.per_batch, mf.losses_path);

    nlohmann::json mj;
    mj["config_hash"] = mf.config_hash;
    mj["seeds"] = {{"pretrain", mf.pretrain_seed}, {"finetune", mf.finetune_seed}};
    mj["model_pretrained"] = mf.model_pre_path;
    mj["model_pretrained_hash"] = mf.model_pre_hash;
    mj["model_finetuned"] = mf.model_post_path;
    mj["model_finetuned_hash"] = mf.model_post_hash;
    mj["report"] = mf.report_path;
    mj["losses"] = mf.losses_path;
    mj["id_accuracy_before"] = mf.id_accuracy_before;
    mj["id_accuracy_after"] = mf.id_accuracy_after;
    mj["timings_seconds"] = {{"pretrain", mf.pretrain_seconds},
                             {"finetune", mf.finetune_seconds},
                             {"evaluate", mf.evaluate_seconds}};
    mf.manifest_path = out_dir + "/manifest.json";
    std::ofstream os(mf.manifest_path, std::ios::trunc);
    if (!os) throw DataError("cannot write manifest '" + mf.manifest_path + "'");
    os << mj.dump(2) << '\n';
    return mf;
}

}  // namespace mim::runner
