// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "manifest.hpp"

#include "gaussadv/error.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <memory>

namespace gaussadv::cli {

namespace {

struct DigestCtx {
    EVP_MD_CTX *ctx = EVP_MD_CTX_new();
    ~DigestCtx() { EVP_MD_CTX_free(ctx); }
};

std::string hex(const unsigned char *data, unsigned len) {
    static const char *digits = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 15]);
    }
    return out;
}

} // namespace

std::string sha256_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::IoFailure, "cannot read '" + path.string() + "' for hashing");
    DigestCtx d;
    if (!d.ctx || EVP_DigestInit_ex(d.ctx, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorKind::IoFailure, "SHA-256 initialization failed");
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0)
            EVP_DigestUpdate(d.ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(d.ctx, md, &len);
    return hex(md, len);
}

std::string sha256_bytes(const std::string &bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorKind::IoFailure, "SHA-256 failed");
    return hex(md, len);
}

RunManifest::RunManifest(std::string command, const Settings &settings)
    : mCommand(std::move(command)), mSettings(settings) {}

void RunManifest::add_input(const std::filesystem::path &path) {
    mInputs.emplace_back(path.string(), sha256_file(path));
}

void RunManifest::add_output(const std::filesystem::path &path) { mOutputs.push_back(path); }

void RunManifest::remove_outputs() {
    for (const auto &p : mOutputs) {
        std::error_code ec;
        std::filesystem::remove(p, ec);
    }
    mOutputs.clear();
}

std::string RunManifest::to_json(const std::string &status, int exit_code, const std::string &error_kind,
                                 const std::string &error_message) const {
    nlohmann::ordered_json j;
    j["tool"] = "gaussadv";
    j["version"] = GAUSSADV_VERSION;
    j["command"] = mCommand;
    j["status"] = status;
    j["exit_code"] = exit_code;
    if (!error_kind.empty())
        j["error"] = {{"kind", error_kind}, {"message", error_message}};

    nlohmann::ordered_json modules;
    for (const char *m : {"gs-core", "renderer", "filtering", "augmentation", "attack", "victim", "metrics", "cli"})
        modules[m] = GAUSSADV_VERSION;
    j["modules"] = modules;

    nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
    for (const auto &[name, value] : mSeeds)
        seeds[name] = value;
    j["seeds"] = seeds;

    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    for (const auto &def : option_registry())
        config[def.section][def.key] = mSettings.raw(def.id());
    j["config"] = config;

    j["inputs"] = nlohmann::ordered_json::array();
    for (const auto &[path, hash] : mInputs)
        j["inputs"].push_back({{"path", path}, {"sha256", hash}});
    j["outputs"] = nlohmann::ordered_json::array();
    for (const auto &p : mOutputs)
        if (std::filesystem::exists(p))
            j["outputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});

    nlohmann::ordered_json timings = nlohmann::ordered_json::object();
    for (const auto &[stage, ms] : mTimings)
        timings[stage] = ms;
    j["timings_ms"] = timings;

    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    for (const auto &[key, value] : mSummary)
        summary[key] = nlohmann::ordered_json::parse(value);
    j["summary"] = summary;
    return j.dump(2) + "\n";
}

void apply_manifest_config(Settings &settings, const std::string &manifest_text, const std::string &origin) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(manifest_text);
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorKind::ConfigError, origin + ": not valid JSON: " + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object())
        throw Error(ErrorKind::ConfigError, origin + ": manifest has no 'config' object");
    for (const auto &[section, keys] : j["config"].items()) {
        if (!keys.is_object())
            throw Error(ErrorKind::ConfigError, origin + ": config." + section + " is not an object");
        for (const auto &[key, value] : keys.items()) {
            if (!value.is_string())
                throw Error(ErrorKind::ConfigError, origin + ": config." + section + "." + key + " is not a string");
            settings.set(section + "." + key, value.get<std::string>(), origin);
        }
    }
}

} // namespace gaussadv::cli
