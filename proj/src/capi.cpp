#include "mim/mim.h"

#include <cstring>
#include <string>

#include "core/detect.hpp"
#include "core/errors.hpp"
#include "core/nn.hpp"
#include "core/runner.hpp"

namespace {

thread_local std::string g_last_error;

template <typename Fn>
mim_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return MIM_OK;
    } catch (const mim::ConfigError& e) {
        g_last_error = e.what();
        return MIM_ERR_CONFIG;
    } catch (const mim::DataError& e) {
        g_last_error = e.what();
        return MIM_ERR_DATA;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MIM_ERR_NUMERIC;
    }
}

mim_status require(bool ok, const char* message) {
    if (ok) return MIM_OK;
    g_last_error = message;
    return MIM_ERR_CONFIG;
}

}  // namespace

struct mim_model {
    mim::nn::Classifier classifier;
};

extern "C" {

const char* mim_last_error(void) { return g_last_error.c_str(); }

const char* mim_version(void) { return "1.0.0"; }

mim_status mim_run(const char* config_path) {
    if (auto st = require(config_path != nullptr, "config_path is NULL"); st != MIM_OK) return st;
    return guarded([&] {
        auto cfg = mim::runner::ExperimentConfig::from_file(config_path);
        mim::runner::run_experiment(cfg);
    });
}

mim_status mim_pretrain(const char* config_path) {
    if (auto st = require(config_path != nullptr, "config_path is NULL"); st != MIM_OK) return st;
    return guarded([&] {
        auto cfg = mim::runner::ExperimentConfig::from_file(config_path);
        mim::runner::pretrain_to_dir(cfg);
    });
}

mim_status mim_finetune(const char* config_path, const char* model_path) {
    if (auto st = require(config_path && model_path, "config_path or model_path is NULL");
        st != MIM_OK) {
        return st;
    }
    return guarded([&] {
        auto cfg = mim::runner::ExperimentConfig::from_file(config_path);
        mim::runner::finetune_from_file(cfg, model_path);
    });
}

mim_status mim_evaluate(const char* config_path, const char* model_path) {
    if (auto st = require(config_path && model_path, "config_path or model_path is NULL");
        st != MIM_OK) {
        return st;
    }
    return guarded([&] {
        auto cfg = mim::runner::ExperimentConfig::from_file(config_path);
        mim::runner::evaluate_from_file(cfg, model_path);
    });
}

mim_status mim_gen_synth(const char* config_path, const char* out_dir) {
    if (auto st = require(config_path && out_dir, "config_path or out_dir is NULL");
        st != MIM_OK) {
        return st;
    }
    return guarded([&] {
        auto cfg = mim::runner::ExperimentConfig::from_file(config_path);
        mim::runner::gen_synth(cfg, out_dir);
    });
}

mim_status mim_model_load(const char* path, mim_model** out) {
    if (auto st = require(path && out, "path or out is NULL"); st != MIM_OK) return st;
    return guarded([&] { *out = new mim_model{mim::nn::load_model(path)}; });
}

void mim_model_free(mim_model* model) { delete model; }

uint32_t mim_model_num_classes(const mim_model* model) {
    return model ? static_cast<uint32_t>(model->classifier.num_classes()) : 0;
}

mim_status mim_model_score(const mim_model* model, const double* pixels, uint32_t n, uint32_t c,
                           uint32_t h, uint32_t w, const char* detector, double* scores_out) {
    if (auto st = require(model && pixels && detector && scores_out && n > 0,
                          "mim_model_score: NULL argument or empty batch");
        st != MIM_OK) {
        return st;
    }
    return guarded([&] {
        const std::size_t len = static_cast<std::size_t>(n) * c * h * w;
        std::vector<double> data(pixels, pixels + len);
        auto x = mim::Tensor::from_data({n, c, h, w}, std::move(data));
        auto fwd = model->classifier.forward(x);
        auto det = mim::detect::make_detector(detector);
        if (det->needs_fit()) {
            throw mim::ConfigError("mim_model_score: detector '" + std::string(detector) +
                                   "' requires fitting; use the evaluate pipeline");
        }
        const auto scores = det->score(fwd.logits, fwd.features);
        std::memcpy(scores_out, scores.data(), scores.size() * sizeof(double));
    });
}

}  // extern "C"
