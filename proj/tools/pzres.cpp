// SPDX-License-Identifier: Apache-2.0
//
// pzres degrade | train | infer | eval
//
// Every flag --some-key VALUE maps to the config key some_key. A --config
// file supplies defaults for the same keys; flags on the command line win.

#include <iostream>
#include <map>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "pzres/commands.hpp"

namespace {

using Command = int (*)(const pzres::RunConfig&, std::ostream&);

struct Subcommand {
    Subcommand(Command r, std::set<std::string> k) : run(r), keys(std::move(k)) {}

    CLI::App* app = nullptr;
    Command run = nullptr;
    std::set<std::string> keys;
    std::map<std::string, std::string> values;
    std::string config_path;
};

const std::map<std::string, std::string> kHelp{
    {"bands", "hyperspectral bands S (default 31)"},
    {"band", "write the error map of this band only"},
    {"batch", "crops per step (default 1)"},
    {"beta1", "ADAM beta1 (default 0.9)"},
    {"beta2", "ADAM beta2 (default 0.999)"},
    {"blocks_per_stage", "dense blocks before each stage's final block (default 7)"},
    {"checkpoint", "checkpoint written by train"},
    {"crop", "HR crop side (default 64)"},
    {"dense", "dense connections inside a stage (default true)"},
    {"emit_coarse", "also write the pre-refinement cube here"},
    {"eps", "ADAM epsilon (default 1e-8)"},
    {"ergas_mean", "ERGAS band mean from 'reconstruction' (default) or 'ground_truth'"},
    {"error_maps", "directory for per-band PGM error maps"},
    {"eval_every", "held-out PSNR every N iterations, 0 disables (default 100)"},
    {"gain", "error map gain (default 1)"},
    {"growth_factor", "stage width multiplier (default 2)"},
    {"gt", "ground-truth HR cube(s), comma separated for train"},
    {"history", "training history CSV (default OUT.history.csv)"},
    {"input", "HR cube to degrade"},
    {"iters", "cosine schedule length (default 2000)"},
    {"kernel_size", "odd spatial kernel size (default 3)"},
    {"lambda", "weight of the refined-output L1 term (default 1)"},
    {"lr0", "initial learning rate (default 1e-3)"},
    {"lr_final", "final learning rate (default 1e-5)"},
    {"lr_hsi", "LR hyperspectral cube(s), comma separated for train"},
    {"msi", "HR multispectral cube(s), comma separated for train"},
    {"msi_bands", "multispectral channels s (default 3)"},
    {"noise_lr", "Gaussian noise std on the LR cube (default 0)"},
    {"noise_msi", "Gaussian noise std on the MSI (default 0)"},
    {"noise_seed", "noise seed (default 0)"},
    {"out", "output path"},
    {"out_gt", "output path for the HR cube"},
    {"out_lr", "output path for the LR hyperspectral cube"},
    {"out_msi", "output path for the HR multispectral cube"},
    {"phase", "decimation offset in [0, scale) (default 0)"},
    {"pred", "reconstructed cube"},
    {"refinement", "refinement head (default true)"},
    {"report", "metric CSV output"},
    {"response", "spectral response CSV or 'identity'; synthetic when omitted"},
    {"resume", "checkpoint to continue from"},
    {"scale", "spatial scale factor r"},
    {"seed", "initialisation and sampling seed (default 0)"},
    {"sigma", "blur std (default scale / 2)"},
    {"stages", "progressive stages (default 3)"},
    {"steps", "iterations to run in this invocation (default iters)"},
    {"synth", "synthesise the HR cube: S,H,W,endmembers,seed"},
    {"upsample", "bilinear (default) or bicubic"},
    {"zm_norm", "zero-mean normalisation (default true)"},
};

std::string flag_name(std::string key) {
    for (auto& ch : key) {
        if (ch == '_') ch = '-';
    }
    return "--" + key;
}

void add_subcommand(CLI::App& root, Subcommand& sub, const std::string& name, const std::string& help) {
    sub.app = root.add_subcommand(name, help);
    sub.app->add_option("--config", sub.config_path, "key = value file with defaults for this command");
    for (const auto& key : sub.keys) {
        const auto help = kHelp.find(key);
        sub.app->add_option(flag_name(key), sub.values[key], help == kHelp.end() ? "" : help->second);
    }
}

pzres::RunConfig resolve(const Subcommand& sub) {
    pzres::RunConfig rc;
    if (!sub.config_path.empty()) rc = pzres::RunConfig::load(sub.config_path, sub.keys);
    for (const auto& key : sub.keys) {
        if (sub.app->count(flag_name(key)) > 0) rc.set(key, sub.values.at(key));
    }
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PZRes-Net hyperspectral super-resolution"};
    app.require_subcommand(1);

    Subcommand degrade(pzres::cmd_degrade, pzres::keys::degrade_command());
    Subcommand train(pzres::cmd_train, pzres::keys::train_command());
    Subcommand infer(pzres::cmd_infer, pzres::keys::infer_command());
    Subcommand eval(pzres::cmd_eval, pzres::keys::eval_command());
    add_subcommand(app, degrade, "degrade", "simulate LR-HSI and HR-MSI observations from an HR cube");
    add_subcommand(app, train, "train", "train a network and write a checkpoint");
    add_subcommand(app, infer, "infer", "reconstruct an HR-HSI from a checkpoint");
    add_subcommand(app, eval, "eval", "compare a reconstruction with ground truth");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? pzres::kExitOk : pzres::kExitInput;
    }

    for (Subcommand* sub : {&degrade, &train, &infer, &eval}) {
        if (!sub->app->parsed()) continue;
        pzres::RunConfig rc;
        try {
            rc = resolve(*sub);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return pzres::kExitInput;
        }
        return pzres::run_command(sub->run, rc, std::cout, std::cerr);
    }
    return pzres::kExitInput;
}
