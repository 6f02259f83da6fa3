// SPDX-License-Identifier: Apache-2.0
//
// The four end-user commands. Each takes a RunConfig whose keys are the
// command's flags with '-' replaced by '_', so a config file and the command
// line share one vocabulary.
#pragma once

#include <charconv>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "pzres/config.hpp"
#include "pzres/degrade.hpp"
#include "pzres/error.hpp"
#include "pzres/io.hpp"
#include "pzres/metrics.hpp"
#include "pzres/network.hpp"
#include "pzres/trainer.hpp"

namespace pzres {

enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitNumerical = 3 };

namespace keys {

inline std::set<std::string> degrade_command() {
    std::set<std::string> k = degrade();
    k.insert({"input", "synth", "response", "msi_bands", "out_lr", "out_msi", "out_gt"});
    return k;
}

inline std::set<std::string> train_command() {
    std::set<std::string> k = network();
    k.insert(train().begin(), train().end());
    k.insert({"lr_hsi", "msi", "gt", "out", "history", "resume", "steps"});
    return k;
}

inline std::set<std::string> infer_command() { return {"checkpoint", "lr_hsi", "msi", "out", "emit_coarse"}; }

inline std::set<std::string> eval_command() {
    return {"gt", "pred", "scale", "report", "error_maps", "band", "gain", "ergas_mean"};
}

}  // namespace keys

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (const auto& f : split_csv_line(s)) {
        if (!f.empty()) out.push_back(f);
    }
    return out;
}

inline std::vector<std::uint64_t> parse_uint_list(const std::string& s, const std::string& what) {
    std::vector<std::uint64_t> out;
    for (const auto& f : split_list(s)) {
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc{} || ptr != f.data() + f.size()) {
            throw InputError(what + ": expected a non-negative integer, got '" + f + "'");
        }
        out.push_back(v);
    }
    return out;
}

inline void write_text(const std::string& path, const std::string& text) { io::write_file(path, text); }

}  // namespace detail

// ---------------------------------------------------------------------------

/// --input cube | --synth S,H,W,E,seed; --response csv | identity, or a
/// synthetic response with --msi-bands channels (default 3).
inline int cmd_degrade(const RunConfig& rc, std::ostream& log) {
    const DegradeConfig dcfg = degrade_config_from(rc);
    if (rc.has("input") == rc.has("synth")) throw InputError("degrade: give exactly one of --input or --synth");

    HsiCube<float> x;
    if (rc.has("input")) {
        x = read_cube(rc.require_string("input"));
    } else {
        const auto v = detail::parse_uint_list(rc.require_string("synth"), "--synth");
        if (v.size() != 5) throw InputError("--synth expects S,H,W,E,seed");
        x = synth_scene<float>(v[0], v[1], v[2], v[3], v[4]);
    }
    const std::size_t S = x.channels();

    SpectralResponse R;
    const std::string response = rc.get_string("response", "");
    if (response == "identity") {
        R = SpectralResponse::identity(S);
    } else if (!response.empty()) {
        R = load_spectral_response(response, S);
    } else {
        R = synthetic_response(S, rc.get_uint("msi_bands", 3));
    }
    if (rc.has("response") && rc.has("msi_bands") && rc.get_uint("msi_bands", 0) != R.channels) {
        throw InputError("degrade: --msi-bands disagrees with the response file");
    }

    const std::string out_lr = rc.require_string("out_lr");
    const std::string out_msi = rc.require_string("out_msi");
    const auto lr = blur_decimate(x, dcfg);
    const auto msi = apply_spectral_response(x, R, dcfg.noise_msi, dcfg.noise_seed + 1);
    write_cube(out_lr, lr);
    write_cube(out_msi, msi);
    if (auto gt = rc.get("out_gt")) write_cube(*gt, x);
    log << "degrade: HR " << S << "x" << x.height() << "x" << x.width() << " -> LR " << to_string(lr.dims())
        << ", MSI " << to_string(msi.dims()) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<TrainingPair> load_training_pairs(const RunConfig& rc) {
    const auto lr = split_list(rc.require_string("lr_hsi"));
    const auto msi = split_list(rc.require_string("msi"));
    const auto gt = split_list(rc.require_string("gt"));
    if (lr.size() != msi.size() || lr.size() != gt.size()) {
        throw InputError("train: --lr-hsi, --msi and --gt must list the same number of files");
    }
    std::vector<TrainingPair> pairs;
    for (std::size_t i = 0; i < lr.size(); ++i) pairs.push_back({read_cube(lr[i]), read_cube(msi[i]), read_cube(gt[i])});
    return pairs;
}

/// Settings given alongside --resume must agree with the checkpoint.
inline void check_resume_settings(const RunConfig& rc, const Checkpoint& ck) {
    RunConfig saved, requested;
    write_config(saved, ck.network);
    write_config(saved, ck.train);
    write_config(requested, network_config_from(rc, ck.network));
    write_config(requested, train_config_from(rc, ck.train));
    for (const auto& [k, v] : saved.entries()) {
        if (requested.get(k) != v) {
            throw InputError("train: '" + k + "' is " + *requested.get(k) + " but the resumed checkpoint has " + v);
        }
    }
}

}  // namespace detail

/// Trains until the schedule length (--iters) is reached or --steps more steps
/// have run. --resume continues from a checkpoint, including its RNG stream
/// and history. On a non-finite loss the last good state is written before
/// the error propagates.
inline int cmd_train(const RunConfig& rc, std::ostream& log) {
    const auto pairs = detail::load_training_pairs(rc);
    const std::string out = rc.require_string("out");
    const std::string history_path = rc.get_string("history", out + ".history.csv");

    NetworkConfig ncfg = network_config_from(rc);
    TrainConfig tcfg = train_config_from(rc);
    std::optional<Checkpoint> resumed;
    if (auto path = rc.get("resume")) {
        resumed = load_checkpoint(*path);
        detail::check_resume_settings(rc, *resumed);
        ncfg = resumed->network;
        tcfg = resumed->train;
    }
    ncfg.validate();

    Trainer trainer(ncfg, tcfg, pairs);
    if (resumed) trainer.restore(resumed->state);
    const std::uint64_t steps = rc.get_uint("steps", tcfg.iterations);

    auto save = [&] {
        save_checkpoint(out, make_checkpoint(trainer));
        detail::write_text(history_path, format_history(trainer.history()));
    };

    log << "train: " << trainer.network().num_parameters() << " parameters, scale " << trainer.scale()
        << ", iteration " << trainer.iteration() << " of " << tcfg.iterations << "\n";
    try {
        trainer.run(steps, [&](const HistoryRecord& h) {
            if (!std::isnan(h.psnr)) {
                log << "iter " << h.iteration << " loss " << format_double(h.loss) << " lr " << format_double(h.lr)
                    << " held-out PSNR " << format_double(h.psnr) << "\n";
            }
        });
    } catch (const NumericalError&) {
        save();
        log << "train: aborted, last good state (iteration " << trainer.iteration() << ") written to " << out << "\n";
        throw;
    }
    save();
    log << "train: wrote " << out << " at iteration " << trainer.iteration() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

inline int cmd_infer(const RunConfig& rc, std::ostream& log) {
    const Checkpoint ck = load_checkpoint(rc.require_string("checkpoint"));
    const auto net = network_from_checkpoint(ck);
    const auto lr = read_cube(rc.require_string("lr_hsi"));
    const auto msi = read_cube(rc.require_string("msi"));
    const auto& cfg = ck.network;
    if (lr.channels() != cfg.bands) {
        throw InputError("infer: LR-HSI has " + std::to_string(lr.channels()) + " bands, checkpoint expects " +
                         std::to_string(cfg.bands));
    }
    if (msi.channels() != cfg.msi_bands) {
        throw InputError("infer: MSI has " + std::to_string(msi.channels()) + " bands, checkpoint expects " +
                         std::to_string(cfg.msi_bands));
    }
    const std::size_t r = infer_scale(lr.dims(), msi.dims());
    const auto result = net.forward(upsample_lr_hsi(lr, r, cfg.upsample), msi);
    write_cube(rc.require_string("out"), result.refined);
    if (auto path = rc.get("emit_coarse")) write_cube(*path, result.coarse);
    log << "infer: wrote " << to_string(result.refined.dims()) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

inline ErgasMean parse_ergas_mean(const std::string& s) {
    if (s == "reconstruction") return ErgasMean::reconstruction;
    if (s == "ground_truth") return ErgasMean::ground_truth;
    throw InputError("ergas_mean must be 'reconstruction' or 'ground_truth', got '" + s + "'");
}

inline int cmd_eval(const RunConfig& rc, std::ostream& log) {
    const auto gt = read_cube(rc.require_string("gt"));
    const auto pred = read_cube(rc.require_string("pred"));
    if (!(gt.dims() == pred.dims())) {
        throw InputError("eval: ground truth " + to_string(gt.dims()) + " and prediction " + to_string(pred.dims()) +
                         " differ");
    }
    const double scale = rc.get_double("scale", 1.0);
    const auto report = evaluate(gt, pred, scale, parse_ergas_mean(rc.get_string("ergas_mean", "reconstruction")));
    if (auto path = rc.get("report")) detail::write_text(*path, format_report_csv(report));
    log << format_report(report);

    if (auto dir = rc.get("error_maps")) {
        const double gain = rc.get_double("gain", 1.0);
        std::vector<std::size_t> bands;
        if (rc.has("band")) {
            bands.push_back(rc.get_uint("band", 0));
            if (bands.back() >= gt.channels()) throw InputError("eval: --band is out of range");
        } else {
            for (std::size_t k = 0; k < gt.channels(); ++k) bands.push_back(k);
        }
        for (std::size_t k : bands) {
            const auto img = error_map<float>(gt.plane(0, k), pred.plane(0, k), gt.height(), gt.width(), gain);
            write_pgm((std::filesystem::path(*dir) / ("error_band_" + std::to_string(k) + ".pgm")).string(), img);
        }
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

/// Runs a command, reporting failures on `err` and mapping them to exit codes.
inline int run_command(const std::function<int(const RunConfig&, std::ostream&)>& command, const RunConfig& rc,
                       std::ostream& log, std::ostream& err) {
    try {
        return command(rc, log);
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }
}

}  // namespace pzres
