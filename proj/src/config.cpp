#include "seqkrr/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace seqkrr {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& name) {
    ConfigFile cfg;
    cfg.name_ = name;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(name + ":" + std::to_string(lineno) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError(name + ":" + std::to_string(lineno) + ": empty section name");
            cfg.entries_[section];
            cfg.raw_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(name + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(name + ":" + std::to_string(lineno) + ": empty key");
        if (section.empty())
            throw ConfigError(name + ":" + std::to_string(lineno) + ": key '" + key +
                              "' outside any [section]");
        if (cfg.entries_[section].count(key))
            throw ConfigError(name + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                              "' in [" + section + "]");
        cfg.entries_[section][key] = {value, lineno};
        cfg.raw_[section][key] = value;
    }
    return cfg;
}

const ConfigFile::Entry* ConfigFile::find(const std::string& section,
                                          const std::string& key) const {
    const auto sit = entries_.find(section);
    if (sit == entries_.end()) return nullptr;
    const auto kit = sit->second.find(key);
    return kit == sit->second.end() ? nullptr : &kit->second;
}

void ConfigFile::fail(const std::string& section, const std::string& key,
                      const std::string& what) const {
    const Entry* e = find(section, key);
    const std::string loc = e ? name_ + ":" + std::to_string(e->line) : name_;
    throw ConfigError(loc + ": [" + section + "] " + key + ": " + what);
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key) const {
    const Entry* e = find(section, key);
    if (!e) fail(section, key, "missing required key");
    return e->value;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
    const Entry* e = find(section, key);
    return e ? e->value : fallback;
}

std::int64_t ConfigFile::get_int(const std::string& section, const std::string& key) const {
    const Entry* e = find(section, key);
    if (!e) fail(section, key, "missing required key");
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(e->value, &pos);
        if (pos != e->value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        fail(section, key, "expected integer, got '" + e->value + "'");
    }
}

std::int64_t ConfigFile::get_int(const std::string& section, const std::string& key,
                                 std::int64_t fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key) const {
    const Entry* e = find(section, key);
    if (!e) fail(section, key, "missing required key");
    try {
        std::size_t pos = 0;
        const double v = std::stod(e->value, &pos);
        if (pos != e->value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        fail(section, key, "expected real number, got '" + e->value + "'");
    }
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}

namespace {

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::istringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

}  // namespace

std::vector<std::int64_t> ConfigFile::get_int_list(const std::string& section,
                                                   const std::string& key) const {
    const Entry* e = find(section, key);
    if (!e) fail(section, key, "missing required key");
    std::vector<std::int64_t> out;
    for (const auto& item : split_list(e->value)) {
        // "5x100" repeats the value: five tasks of size 100.
        const auto x = item.find('x');
        try {
            if (x != std::string::npos) {
                const long reps = std::stol(item.substr(0, x));
                const std::int64_t v = std::stoll(item.substr(x + 1));
                if (reps < 1) throw std::invalid_argument("");
                out.insert(out.end(), reps, v);
            } else {
                out.push_back(std::stoll(item));
            }
        } catch (const std::exception&) {
            fail(section, key, "expected integer list, bad item '" + item + "'");
        }
    }
    if (out.empty()) fail(section, key, "empty list");
    return out;
}

std::vector<double> ConfigFile::get_double_list(const std::string& section,
                                                const std::string& key) const {
    const Entry* e = find(section, key);
    if (!e) fail(section, key, "missing required key");
    std::vector<double> out;
    for (const auto& item : split_list(e->value)) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            fail(section, key, "expected real list, bad item '" + item + "'");
        }
    }
    if (out.empty()) fail(section, key, "empty list");
    return out;
}

void ConfigFile::require_known_keys(
    const std::map<std::string, std::vector<std::string>>& known) const {
    for (const auto& [section, kv] : entries_) {
        const auto sit = known.find(section);
        if (sit == known.end())
            throw ConfigError(name_ + ": unknown section [" + section + "]");
        for (const auto& [key, entry] : kv) {
            if (std::find(sit->second.begin(), sit->second.end(), key) == sit->second.end())
                throw ConfigError(name_ + ":" + std::to_string(entry.line) + ": unknown key '" +
                                  key + "' in [" + section + "]");
        }
    }
}

RunConfig RunConfig::from_config(const ConfigFile& cfg) {
    cfg.require_known_keys({
        {"kernel", {"type", "L", "sigma_w_sq", "sigma_b_sq", "D", "degree"}},
        {"spectrum", {"k_max", "r", "csv"}},
        {"experiment",
         {"protocol", "N_A", "N_B", "N_A_list", "N_B_list", "N_list", "rho", "rho_list",
          "sigma_sq", "sigma_sq_list", "trials", "n_test", "P_prime", "seed"}},
    });

    RunConfig rc;
    const std::string type = cfg.get_string("kernel", "type", "ntk");
    const int D = static_cast<int>(cfg.get_int("kernel", "D"));
    if (type == "ntk") {
        KernelParams params;
        params.depth = static_cast<int>(cfg.get_int("kernel", "L", 3));
        params.sigma_w_sq = cfg.get_double("kernel", "sigma_w_sq", 2.0);
        params.sigma_b_sq = cfg.get_double("kernel", "sigma_b_sq", 0.0);
        params.input_dim = D;
        rc.kernel = DotProductKernel::relu_ntk(params);
    } else if (type == "monomial") {
        rc.kernel = DotProductKernel::monomial(
            static_cast<int>(cfg.get_int("kernel", "degree", 1)), D);
    } else {
        throw ConfigError(cfg.name() + ": [kernel] type: expected 'ntk' or 'monomial', got '" +
                          type + "'");
    }

    rc.k_max = static_cast<int>(cfg.get_int("spectrum", "k_max", 100));
    rc.r = static_cast<int>(cfg.get_int("spectrum", "r", 1000));
    if (cfg.has("spectrum", "csv")) rc.spectrum_csv = cfg.get_string("spectrum", "csv");

    ExperimentSpec& ex = rc.experiment;
    ex.protocol = protocol_from_string(cfg.get_string("experiment", "protocol", "transfer"));
    if (cfg.has("experiment", "N_A_list"))
        ex.n_a_grid = cfg.get_int_list("experiment", "N_A_list");
    else
        ex.n_a_grid = {cfg.get_int("experiment", "N_A", 100)};
    if (cfg.has("experiment", "N_B_list"))
        ex.n_b_grid = cfg.get_int_list("experiment", "N_B_list");
    else
        ex.n_b_grid = {cfg.get_int("experiment", "N_B", 100)};
    if (cfg.has("experiment", "N_list")) ex.n_list = cfg.get_int_list("experiment", "N_list");
    if (cfg.has("experiment", "rho_list"))
        ex.rho_grid = cfg.get_double_list("experiment", "rho_list");
    else
        ex.rho_grid = {cfg.get_double("experiment", "rho", 1.0)};
    if (cfg.has("experiment", "sigma_sq_list"))
        ex.sigma_sq_grid = cfg.get_double_list("experiment", "sigma_sq_list");
    else
        ex.sigma_sq_grid = {cfg.get_double("experiment", "sigma_sq", 0.0)};
    ex.trials = static_cast<int>(cfg.get_int("experiment", "trials", 50));
    ex.n_test = static_cast<int>(cfg.get_int("experiment", "n_test", 4000));
    ex.p_prime = static_cast<int>(cfg.get_int("experiment", "P_prime", 10000));
    ex.seed = static_cast<std::uint64_t>(cfg.get_int("experiment", "seed", 1));

    for (double rho : ex.rho_grid)
        if (std::abs(rho) > 1.0)
            throw ConfigError(cfg.name() + ": [experiment] rho values must lie in [-1, 1]");
    for (double s : ex.sigma_sq_grid)
        if (s < 0.0) throw ConfigError(cfg.name() + ": [experiment] sigma_sq must be >= 0");
    return rc;
}

void RunManifest::save(const std::string& path) const {
    nlohmann::json j;
    j["tool"] = "seqkrr";
    j["version"] = "0.1.0";
    j["command"] = command;
    j["config_path"] = config_path;
    j["seed"] = seed;
    j["threads"] = threads;
    j["config"] = config;
    nlohmann::json timings = nlohmann::json::object();
    for (const auto& [stage, sec] : timings_sec) timings[stage] = sec;
    j["timings_sec"] = timings;
    j["outputs"] = outputs;
    std::ofstream out(path);
    if (!out) throw ConfigError("manifest: cannot open " + path);
    out << j.dump(2) << "\n";
}

void validate_manifest_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("manifest: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("manifest: " + path + ": invalid JSON: " + e.what());
    }
    for (const char* key : {"tool", "version", "command", "config", "seed", "threads",
                            "timings_sec", "outputs"})
        if (!j.contains(key))
            throw ConfigError("manifest: " + path + ": missing field '" + std::string(key) + "'");
    if (!j["config"].is_object() || !j["timings_sec"].is_object() || !j["outputs"].is_array())
        throw ConfigError("manifest: " + path + ": malformed field types");
}

}  // namespace seqkrr
