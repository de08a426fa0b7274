#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rse/error.hpp"
#include "rse/model.hpp"
#include "rse/nn/adam.hpp"

namespace rse {

inline constexpr const char* kCheckpointFormat = "rse-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Hash of the canonical (sorted-key, compact) JSON form of a config.
inline std::string config_hash(const nlohmann::json& config) { return hex64(fnv1a(config.dump())); }

struct Checkpoint {
    Vae model;
    nn::Adam optimizer;
    nlohmann::json config = nlohmann::json::object();  // training configuration
    std::int64_t step = 0;
    std::string rng_state;
    nlohmann::json rl_meta;  // null unless the transforms were tuned by the agent
};

namespace detail {

inline void write_block(std::ofstream& os, const Matrix& m) {
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

inline void read_block(std::ifstream& is, Matrix& m, const std::string& what) {
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) throw FormatError("checkpoint blob truncated while reading " + what);
}

} // namespace detail

/// Writes <dir>/manifest.json and <dir>/params.bin.
///
/// The blob holds every parameter tensor as little-endian float64 in manifest
/// order, followed by the Adam first and second moments when present.
inline void save_checkpoint(const std::filesystem::path& dir, Vae& model, const nn::Adam& opt,
                            const nlohmann::json& config, const std::string& rng_state,
                            const nlohmann::json& rl_meta = nullptr) {
    std::filesystem::create_directories(dir);
    auto named = model.named_params();

    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& np : named) {
        const auto& v = np.param->value;
        tensors.push_back({{"name", np.name}, {"shape", {v.rows(), v.cols()}}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(v.size()) * sizeof(double);
    }
    const bool has_moments = !opt.first_moments().empty();
    if (has_moments && opt.first_moments().size() != named.size())
        throw ShapeError("optimizer state does not match the model parameters");

    const auto& mc = model.config();
    nlohmann::json manifest = {
        {"format", kCheckpointFormat},
        {"version", kCheckpointVersion},
        {"dtype", "float64"},
        {"byte_order", "little"},
        {"model", {{"patch", mc.patch}, {"latent", mc.latent}, {"seed", mc.seed}}},
        {"config", config},
        {"config_hash", config_hash(config)},
        {"step", opt.step_count()},
        {"rng_state", rng_state},
        {"tensors", tensors},
        {"adam", {{"moments", has_moments}, {"offset", offset}}},
        {"rl_meta", rl_meta},
    };

    std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw FormatError("cannot write " + (dir / "params.bin").string());
    for (const auto& np : named) detail::write_block(bin, np.param->value);
    if (has_moments) {
        for (const auto& m : opt.first_moments()) detail::write_block(bin, m);
        for (const auto& m : opt.second_moments()) detail::write_block(bin, m);
    }
    if (!bin) throw FormatError("failed writing checkpoint blob");

    std::ofstream js(dir / "manifest.json", std::ios::trunc);
    if (!js) throw FormatError("cannot write " + (dir / "manifest.json").string());
    js << manifest.dump(2) << '\n';
}

inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
    std::ifstream js(dir / "manifest.json");
    if (!js) throw FormatError("checkpoint manifest not found in " + dir.string());
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed checkpoint manifest: ") + e.what());
    }
    if (m.value("format", "") != kCheckpointFormat) throw FormatError("not a checkpoint manifest");
    if (m.value("version", 0) != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
    if (m.value("dtype", "") != "float64") throw FormatError("unsupported checkpoint dtype");
    return m;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    const nlohmann::json m = read_manifest(dir);
    Checkpoint ck;
    try {
        ModelConfig mc;
        mc.patch = m.at("model").at("patch");
        mc.latent = m.at("model").at("latent");
        mc.seed = m.at("model").at("seed");
        ck.model = Vae(mc);
        ck.config = m.at("config");
        ck.step = m.at("step");
        ck.rng_state = m.at("rng_state");
        ck.rl_meta = m.at("rl_meta");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("incomplete checkpoint manifest: ") + e.what());
    }
    if (m.at("config_hash") != config_hash(ck.config)) throw FormatError("checkpoint config hash mismatch");

    auto named = ck.model.named_params();
    const auto& tensors = m.at("tensors");
    if (tensors.size() != named.size()) throw FormatError("checkpoint tensor count does not match the model");
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& v = named[i].param->value;
        const auto& t = tensors[i];
        if (t.at("name") != named[i].name) throw FormatError("unexpected tensor '" + t.at("name").get<std::string>() + "'");
        if (t.at("shape")[0] != v.rows() || t.at("shape")[1] != v.cols())
            throw FormatError("shape mismatch for tensor " + named[i].name);
    }

    std::ifstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw FormatError("checkpoint blob not found in " + dir.string());
    for (auto& np : named) detail::read_block(bin, np.param->value, np.name);

    ck.optimizer = nn::Adam();
    if (m.at("adam").at("moments").get<bool>()) {
        auto& m1 = ck.optimizer.first_moments();
        auto& m2 = ck.optimizer.second_moments();
        for (auto& np : named) m1.push_back(Matrix::Zero(np.param->value.rows(), np.param->value.cols()));
        m2 = m1;
        for (std::size_t i = 0; i < named.size(); ++i) detail::read_block(bin, m1[i], "adam m " + named[i].name);
        for (std::size_t i = 0; i < named.size(); ++i) detail::read_block(bin, m2[i], "adam v " + named[i].name);
    }
    ck.optimizer.set_step_count(ck.step);
    bin.peek();
    if (!bin.eof()) throw FormatError("checkpoint blob has trailing bytes");
    return ck;
}

} // namespace rse
