#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "rse/data.hpp"
#include "rse/error.hpp"
#include "rse/rl.hpp"
#include "rse/train.hpp"

namespace rse {

/// Bad configuration (unknown preset, unknown key, wrong type). Maps to exit code 2.
class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

struct RunConfig {
    std::string preset = "celeba-synth";
    std::uint64_t seed = 0;
    TrainConfig train;
    rl::SacConfig sac;
    int recursive_rounds = 0;
    double holdout = 0.2;  // fraction of pairs kept for evaluation

    void set_seed(std::uint64_t s) {
        seed = s;
        train.seed = s;
        sac.seed = s;
    }

    nlohmann::json to_json() const {
        return {{"preset", preset},
                {"seed", seed},
                {"train", train},
                {"rl", sac},
                {"recursive_rounds", recursive_rounds},
                {"holdout", holdout}};
    }
};

/// Geometry, epoch budget and target PSNR of a named preset.
inline RunConfig preset_config(const std::string& name) {
    RunConfig rc;
    rc.preset = name;
    if (name == "celeba-synth") {
        rc.train.patch = 16;
        rc.train.overlap = 4;
        rc.train.epochs = 50;
        rc.sac.psnr_target = 30.0;
    } else if (name == "sidd-style") {
        rc.train.patch = 24;
        rc.train.overlap = 8;
        rc.train.epochs = 20;
        rc.sac.psnr_target = 34.0;
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected celeba-synth or sidd-style)");
    }
    rc.train.sigma = kCalibratedSigma;
    return rc;
}

namespace detail {

template <class T>
T toml_get(const toml::node& node, const std::string& key) {
    if constexpr (std::is_same_v<T, double>) {
        if (auto v = node.value<double>()) return *v;
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (auto v = node.value<std::string>()) return *v;
    } else {
        if (auto v = node.value<std::int64_t>()) {
            if constexpr (std::is_unsigned_v<T>)
                if (*v < 0) throw ConfigError("'" + key + "' must be non-negative");
            return static_cast<T>(*v);
        }
    }
    throw ConfigError("'" + key + "' has the wrong type");
}

template <class T>
void read_key(const toml::table& tbl, const std::string& section, const std::string& key, T& out,
              std::set<std::string>& seen) {
    seen.insert(key);
    if (const toml::node* n = tbl.get(key)) out = toml_get<T>(*n, section.empty() ? key : section + "." + key);
}

inline void reject_unknown(const toml::table& tbl, const std::set<std::string>& known, const std::string& section) {
    for (const auto& [k, v] : tbl) {
        const std::string key(k.str());
        if (!known.count(key))
            throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
    }
}

} // namespace detail

/// Defaults, then the preset (flag beats file), then the remaining file keys.
inline RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                                 const std::optional<std::string>& preset_flag) {
    toml::table doc;
    if (file) {
        try {
            doc = toml::parse_file(file->string());
        } catch (const toml::parse_error& e) {
            throw ConfigError("cannot parse " + file->string() + ": " + std::string(e.description()));
        }
    }
    std::string preset = "celeba-synth";
    if (auto p = doc["preset"].value<std::string>()) preset = *p;
    if (preset_flag) preset = *preset_flag;
    RunConfig rc = preset_config(preset);

    using detail::read_key;
    std::set<std::string> top{"preset"};
    std::uint64_t seed = rc.seed;
    read_key(doc, "", "seed", seed, top);
    rc.set_seed(seed);
    read_key(doc, "", "recursive_rounds", rc.recursive_rounds, top);
    read_key(doc, "", "holdout", rc.holdout, top);

    top.insert({"train", "rl", "data"});
    detail::reject_unknown(doc, top, "");

    if (const toml::table* t = doc["train"].as_table()) {
        std::set<std::string> seen;
        read_key(*t, "train", "patch", rc.train.patch, seen);
        read_key(*t, "train", "overlap", rc.train.overlap, seen);
        read_key(*t, "train", "latent", rc.train.latent, seen);
        read_key(*t, "train", "batch", rc.train.batch, seen);
        read_key(*t, "train", "epochs", rc.train.epochs, seen);
        read_key(*t, "train", "base_lr", rc.train.base_lr, seen);
        read_key(*t, "train", "lr_decay", rc.train.lr_decay, seen);
        read_key(*t, "train", "decay_steps", rc.train.decay_steps, seen);
        read_key(*t, "train", "lambda_reg", rc.train.lambda_reg, seen);
        detail::reject_unknown(*t, seen, "train");
    }
    if (const toml::table* t = doc["rl"].as_table()) {
        std::set<std::string> seen;
        read_key(*t, "rl", "alpha", rc.sac.alpha, seen);
        read_key(*t, "rl", "gamma", rc.sac.gamma, seen);
        read_key(*t, "rl", "k", rc.sac.k, seen);
        read_key(*t, "rl", "c", rc.sac.c, seen);
        read_key(*t, "rl", "psnr_target", rc.sac.psnr_target, seen);
        read_key(*t, "rl", "episode_length", rc.sac.episode_length, seen);
        read_key(*t, "rl", "replay_capacity", rc.sac.replay_capacity, seen);
        read_key(*t, "rl", "polyak", rc.sac.polyak, seen);
        read_key(*t, "rl", "hidden", rc.sac.hidden, seen);
        read_key(*t, "rl", "batch", rc.sac.batch, seen);
        read_key(*t, "rl", "lr", rc.sac.lr, seen);
        read_key(*t, "rl", "epochs", rc.sac.epochs, seen);
        detail::reject_unknown(*t, seen, "rl");
    }
    if (const toml::table* t = doc["data"].as_table()) {
        std::set<std::string> seen;
        read_key(*t, "data", "sigma", rc.train.sigma, seen);
        detail::reject_unknown(*t, seen, "data");
    }
    return rc;
}

inline void validate(const RunConfig& rc) {
    try {
        rc.train.validate();
        rc.sac.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    if (rc.recursive_rounds < 0) throw ConfigError("recursive_rounds must be non-negative");
    if (!(rc.holdout > 0 && rc.holdout < 1)) throw ConfigError("holdout must lie in (0, 1)");
}

} // namespace rse
