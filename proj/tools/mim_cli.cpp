// Command-line front end; links only the public C API.
#include <cstdio>

#include "CLI11.hpp"
#include "mim/mim.h"

namespace {

int finish(mim_status st, const char* what) {
    if (st == MIM_OK) {
        std::printf("%s: ok\n", what);
        return 0;
    }
    std::fprintf(stderr, "%s failed (%d): %s\n", what, static_cast<int>(st), mim_last_error());
    return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MIM out-of-distribution detection toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", mim_version());

    std::string config, model, out_dir;

    auto* run = app.add_subcommand("run", "Full pipeline: pretrain, evaluate, fine-tune, evaluate");
    run->add_option("--config", config, "Experiment config (JSON)")->required();

    auto* pre = app.add_subcommand("pretrain", "Train the base classifier and save it");
    pre->add_option("--config", config, "Experiment config (JSON)")->required();

    auto* fin = app.add_subcommand("finetune", "One MIM fine-tuning epoch on a saved model");
    fin->add_option("--config", config, "Experiment config (JSON)")->required();
    fin->add_option("--model", model, "Saved MIM1 model file")->required();

    auto* ev = app.add_subcommand("evaluate", "Evaluate a saved model on the configured datasets");
    ev->add_option("--config", config, "Experiment config (JSON)")->required();
    ev->add_option("--model", model, "Saved MIM1 model file")->required();

    auto* gen = app.add_subcommand("gen-synth", "Write the synthetic benchmark as MIMD files");
    gen->add_option("--config", config, "Experiment config (JSON)")->required();
    gen->add_option("--out", out_dir, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return finish(mim_run(config.c_str()), "run");
    if (pre->parsed()) return finish(mim_pretrain(config.c_str()), "pretrain");
    if (fin->parsed()) return finish(mim_finetune(config.c_str(), model.c_str()), "finetune");
    if (ev->parsed()) return finish(mim_evaluate(config.c_str(), model.c_str()), "evaluate");
    if (gen->parsed()) return finish(mim_gen_synth(config.c_str(), out_dir.c_str()), "gen-synth");
    return 1;
}
