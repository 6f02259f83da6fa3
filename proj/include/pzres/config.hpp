// SPDX-License-Identifier: Apache-2.0
//
// Plain-text run configuration: one `key = value` per line, `#` starts a
// comment. Keys outside the allowed set are rejected.
#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "pzres/degrade.hpp"
#include "pzres/error.hpp"
#include "pzres/network.hpp"
#include "pzres/trainer.hpp"

namespace pzres {

namespace keys {

inline const std::set<std::string>& network() {
    static const std::set<std::string> k{"bands",       "msi_bands", "stages", "growth_factor", "blocks_per_stage",
                                         "kernel_size", "zm_norm",   "refinement", "dense",     "upsample",
                                         "seed"};
    return k;
}

inline const std::set<std::string>& degrade() {
    static const std::set<std::string> k{"scale", "sigma", "phase", "noise_lr", "noise_msi", "noise_seed"};
    return k;
}

inline const std::set<std::string>& train() {
    static const std::set<std::string> k{"iters",     "batch", "crop",     "eval_every", "beta1",
                                         "beta2",     "eps",   "lr0",      "lr_final",   "lambda"};
    return k;
}

}  // namespace keys

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

class RunConfig {
public:
    RunConfig() = default;

    static RunConfig parse(std::istream& in, const std::set<std::string>& allowed, const std::string& source = "config") {
        RunConfig cfg;
        std::string line;
        std::size_t row = 0;
        while (std::getline(in, line)) {
            ++row;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const std::string body = detail::trim(line);
            if (body.empty()) continue;
            const auto eq = body.find('=');
            const std::string where = source + " line " + std::to_string(row);
            if (eq == std::string::npos) throw InputError(where + ": expected key = value");
            const std::string key = detail::trim(std::string_view(body).substr(0, eq));
            const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
            if (key.empty()) throw InputError(where + ": empty key");
            if (!allowed.empty() && !allowed.contains(key)) throw InputError(where + ": unknown key '" + key + "'");
            if (cfg.entries_.contains(key)) throw InputError(where + ": duplicate key '" + key + "'");
            cfg.entries_[key] = value;
        }
        return cfg;
    }

    static RunConfig parse_string(const std::string& text, const std::set<std::string>& allowed,
                                  const std::string& source = "config") {
        std::istringstream is(text);
        return parse(is, allowed, source);
    }

    static RunConfig load(const std::string& path, const std::set<std::string>& allowed) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open config file '" + path + "'");
        return parse(in, allowed, path);
    }

    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    void set(const std::string& key, const char* value) { entries_[key] = value; }
    void set(const std::string& key, double value) { entries_[key] = format_double(value); }
    void set(const std::string& key, std::uint64_t value) { entries_[key] = std::to_string(value); }
    void set(const std::string& key, bool value) { entries_[key] = value ? "true" : "false"; }

    bool has(const std::string& key) const { return entries_.contains(key); }
    const std::map<std::string, std::string>& entries() const { return entries_; }

    std::optional<std::string> get(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        return get(key).value_or(fallback);
    }

    std::string require_string(const std::string& key) const {
        auto v = get(key);
        if (!v || v->empty()) throw InputError("missing required setting '" + key + "'");
        return *v;
    }

    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        std::uint64_t out = 0;
        auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || ptr != v->data() + v->size() || v->empty()) {
            throw InputError("setting '" + key + "': expected a non-negative integer, got '" + *v + "'");
        }
        return out;
    }

    double get_double(const std::string& key, double fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        return detail::parse_double(*v, "setting '" + key + "'");
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "on" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "off" || *v == "no") return false;
        throw InputError("setting '" + key + "': expected a boolean, got '" + *v + "'");
    }

    /// Sorted `key=value` lines.
    std::string serialize() const {
        std::string out;
        for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
        return out;
    }

    /// Entries of `other` replace entries here.
    void merge(const RunConfig& other) {
        for (const auto& [k, v] : other.entries_) entries_[k] = v;
    }

private:
    std::map<std::string, std::string> entries_;
};

// ---------------------------------------------------------------------------

inline NetworkConfig network_config_from(const RunConfig& rc, NetworkConfig cfg = {}) {
    cfg.bands = rc.get_uint("bands", cfg.bands);
    cfg.msi_bands = rc.get_uint("msi_bands", cfg.msi_bands);
    cfg.stages = rc.get_uint("stages", cfg.stages);
    cfg.growth_factor = rc.get_uint("growth_factor", cfg.growth_factor);
    cfg.blocks_per_stage = rc.get_uint("blocks_per_stage", cfg.blocks_per_stage);
    cfg.kernel_size = rc.get_uint("kernel_size", cfg.kernel_size);
    cfg.zm_norm = rc.get_bool("zm_norm", cfg.zm_norm);
    cfg.refinement = rc.get_bool("refinement", cfg.refinement);
    cfg.dense = rc.get_bool("dense", cfg.dense);
    if (auto m = rc.get("upsample")) cfg.upsample = parse_upsample_mode(*m);
    cfg.seed = rc.get_uint("seed", cfg.seed);
    return cfg;
}

inline void write_config(RunConfig& rc, const NetworkConfig& cfg) {
    rc.set("bands", std::uint64_t{cfg.bands});
    rc.set("msi_bands", std::uint64_t{cfg.msi_bands});
    rc.set("stages", std::uint64_t{cfg.stages});
    rc.set("growth_factor", std::uint64_t{cfg.growth_factor});
    rc.set("blocks_per_stage", std::uint64_t{cfg.blocks_per_stage});
    rc.set("kernel_size", std::uint64_t{cfg.kernel_size});
    rc.set("zm_norm", cfg.zm_norm);
    rc.set("refinement", cfg.refinement);
    rc.set("dense", cfg.dense);
    rc.set("upsample", to_string(cfg.upsample));
    rc.set("seed", cfg.seed);
}

inline TrainConfig train_config_from(const RunConfig& rc, TrainConfig cfg = {}) {
    cfg.iterations = rc.get_uint("iters", cfg.iterations);
    cfg.batch = rc.get_uint("batch", cfg.batch);
    cfg.crop = rc.get_uint("crop", cfg.crop);
    cfg.eval_every = rc.get_uint("eval_every", cfg.eval_every);
    cfg.adam.beta1 = rc.get_double("beta1", cfg.adam.beta1);
    cfg.adam.beta2 = rc.get_double("beta2", cfg.adam.beta2);
    cfg.adam.eps = rc.get_double("eps", cfg.adam.eps);
    cfg.adam.lr0 = rc.get_double("lr0", cfg.adam.lr0);
    cfg.adam.lr_final = rc.get_double("lr_final", cfg.adam.lr_final);
    cfg.loss.lambda = rc.get_double("lambda", cfg.loss.lambda);
    if (!(cfg.loss.lambda > 0.0)) throw InputError("setting 'lambda' must be > 0");
    return cfg;
}

inline void write_config(RunConfig& rc, const TrainConfig& cfg) {
    rc.set("iters", cfg.iterations);
    rc.set("batch", std::uint64_t{cfg.batch});
    rc.set("crop", std::uint64_t{cfg.crop});
    rc.set("eval_every", std::uint64_t{cfg.eval_every});
    rc.set("beta1", cfg.adam.beta1);
    rc.set("beta2", cfg.adam.beta2);
    rc.set("eps", cfg.adam.eps);
    rc.set("lr0", cfg.adam.lr0);
    rc.set("lr_final", cfg.adam.lr_final);
    rc.set("lambda", cfg.loss.lambda);
}

inline DegradeConfig degrade_config_from(const RunConfig& rc, DegradeConfig cfg = {}) {
    cfg.scale = rc.get_uint("scale", cfg.scale);
    if (rc.has("sigma")) cfg.sigma = rc.get_double("sigma", 0.0);
    cfg.phase = rc.get_uint("phase", cfg.phase);
    cfg.noise_lr = rc.get_double("noise_lr", cfg.noise_lr);
    cfg.noise_msi = rc.get_double("noise_msi", cfg.noise_msi);
    cfg.noise_seed = rc.get_uint("noise_seed", cfg.noise_seed);
    return cfg;
}

}  // namespace pzres
