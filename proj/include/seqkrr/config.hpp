#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqkrr/ntk.hpp"
#include "seqkrr/simulate.hpp"

namespace seqkrr {

/// Parsed key-value config with [section] headers, '#' comments and
/// comma-separated lists. Keys remember their line for diagnostics.
class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text, const std::string& name = "<string>");

    bool has(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    std::int64_t get_int(const std::string& section, const std::string& key) const;
    std::int64_t get_int(const std::string& section, const std::string& key,
                         std::int64_t fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    std::vector<std::int64_t> get_int_list(const std::string& section,
                                           const std::string& key) const;
    std::vector<double> get_double_list(const std::string& section, const std::string& key) const;

    /// Reject keys outside the known set, with file:line diagnostics.
    void require_known_keys(
        const std::map<std::string, std::vector<std::string>>& known) const;

    const std::string& name() const { return name_; }
    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return raw_;
    }

private:
    struct Entry {
        std::string value;
        int line = 0;
    };
    [[noreturn]] void fail(const std::string& section, const std::string& key,
                           const std::string& what) const;
    const Entry* find(const std::string& section, const std::string& key) const;

    std::string name_;
    std::map<std::string, std::map<std::string, Entry>> entries_;
    std::map<std::string, std::map<std::string, std::string>> raw_;
};

/// Fully resolved run settings shared by the CLI subcommands.
struct RunConfig {
    DotProductKernel kernel;
    int k_max = 100;
    int r = 1000;
    std::optional<std::string> spectrum_csv;  // load instead of decompose
    ExperimentSpec experiment;

    static RunConfig from_config(const ConfigFile& cfg);
};

/// Manifest accompanying every output CSV: resolved config snapshot, seed,
/// version, per-stage timings, output paths.
struct RunManifest {
    std::string command;
    std::string config_path;
    std::uint64_t seed = 0;
    int threads = 1;
    std::map<std::string, std::map<std::string, std::string>> config;
    std::vector<std::pair<std::string, double>> timings_sec;
    std::vector<std::string> outputs;

    void save(const std::string& path) const;
};

/// Throws ConfigError if required manifest fields are missing or malformed.
void validate_manifest_file(const std::string& path);

}  // namespace seqkrr
