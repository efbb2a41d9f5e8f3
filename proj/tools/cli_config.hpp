// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
// Option registry shared by the INI config reader and the command-line
// parser. Every config key `[section] key` has exactly one flag.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gaussadv::cli {

enum Command : unsigned {
    kGen = 1u << 0,
    kFilter = 1u << 1,
    kAttack = 1u << 2,
    kRender = 1u << 3,
    kEval = 1u << 4,
    kAllCommands = kGen | kFilter | kAttack | kRender | kEval,
};

enum class ValueKind { String, Int, Real, Bool, RealList };

struct OptionDef {
    std::string section;
    std::string key;
    std::string flag; ///< long flag with leading dashes
    ValueKind kind;
    std::string default_value;
    std::string help;
    unsigned commands;

    std::string id() const { return section + "." + key; }
};

const std::vector<OptionDef> &option_registry();
const OptionDef *find_option(const std::string &section, const std::string &key);

/// Resolved option values keyed by "section.key".
class Settings {
public:
    Settings();

    /// Applies an INI document; unknown sections/keys and malformed lines
    /// throw ConfigError naming the line.
    void apply_ini(const std::string &text, const std::string &origin);
    void apply_ini_file(const std::string &path);
    /// Sets one value, checking that it parses as the registered kind.
    void set(const std::string &id, const std::string &value, const std::string &origin);

    const std::string &raw(const std::string &id) const;
    std::string str(const std::string &id) const { return raw(id); }
    long integer(const std::string &id) const;
    std::uint64_t unsigned_integer(const std::string &id) const;
    double real(const std::string &id) const;
    bool boolean(const std::string &id) const;
    std::vector<double> real_list(const std::string &id) const;

    /// Snapshot as INI text, registry order.
    std::string to_ini() const;
    const std::map<std::string, std::string> &values() const { return mValues; }

private:
    std::map<std::string, std::string> mValues;
};

/// Checks `value` against a kind; returns an error message or "".
std::string check_value(ValueKind kind, const std::string &value);

} // namespace gaussadv::cli
