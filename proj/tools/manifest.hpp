// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "cli_config.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace gaussadv::cli {

/// Lowercase hex SHA-256 of a file's bytes. Throws IoFailure.
std::string sha256_file(const std::filesystem::path &path);
std::string sha256_bytes(const std::string &bytes);

/// Record of one command invocation: config snapshot, seeds, versions,
/// hashed inputs/outputs and stage timings.
class RunManifest {
public:
    RunManifest(std::string command, const Settings &settings);

    void add_input(const std::filesystem::path &path);
    /// Registers a written artifact; hashed when the manifest is finalized.
    void add_output(const std::filesystem::path &path);
    void add_seed(const std::string &name, std::uint64_t value) { mSeeds.emplace_back(name, value); }
    void add_timing(const std::string &stage, double ms) { mTimings.emplace_back(stage, ms); }
    void add_summary(const std::string &key, const std::string &json_value) { mSummary[key] = json_value; }

    const std::vector<std::filesystem::path> &outputs() const { return mOutputs; }

    /// Deletes every registered output that exists and forgets them.
    void remove_outputs();

    std::string to_json(const std::string &status, int exit_code, const std::string &error_kind,
                        const std::string &error_message) const;

private:
    std::string mCommand;
    Settings mSettings;
    std::vector<std::pair<std::string, std::string>> mInputs; ///< path, hash
    std::vector<std::filesystem::path> mOutputs;
    std::vector<std::pair<std::string, std::uint64_t>> mSeeds;
    std::vector<std::pair<std::string, double>> mTimings;
    std::map<std::string, std::string> mSummary;
};

/// Restores the settings recorded in a manifest written by `to_json`.
void apply_manifest_config(Settings &settings, const std::string &manifest_text, const std::string &origin);

} // namespace gaussadv::cli
