#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hdtreat/common.hpp"

namespace hdtreat {

// Flat `key = value` configuration with dotted keys. '#' starts a comment.
// Every key must be consumed by the command that runs; leftovers are
// reported as unknown keys.
class RunConfig {
public:
    RunConfig() = default;
    static RunConfig from_file(const std::string& path);
    static RunConfig from_string(const std::string& text);

    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const;
    // Space- or comma-separated list of reals.
    std::vector<double> get_doubles(const std::string& key) const;
    std::vector<std::string> get_words(const std::string& key) const;

    // Throws invalid_input listing any key never read by a getter.
    void ensure_all_consumed() const;

private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> consumed_;
};

}  // namespace hdtreat
