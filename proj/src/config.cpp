#include "hdtreat/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace hdtreat {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
}

RunConfig RunConfig::from_string(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw invalid_input("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw invalid_input("config line " + std::to_string(lineno) + ": empty key");
        cfg.values_[key] = value;
    }
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key.empty()) throw invalid_input("config override: empty key");
    values_[key] = value;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
    consumed_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string RunConfig::require_string(const std::string& key) const {
    consumed_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) throw invalid_input("config: missing required key '" + key + "'");
    return it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    consumed_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    double v = 0;
    auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
    if (ec != std::errc{} || p != it->second.data() + it->second.size())
        throw invalid_input("config: '" + key + "' is not a number: " + it->second);
    return v;
}

long long RunConfig::get_int(const std::string& key, long long fallback) const {
    const double v = get_double(key, static_cast<double>(fallback));
    const long long r = static_cast<long long>(v);
    if (static_cast<double>(r) != v)
        throw invalid_input("config: '" + key + "' must be an integer");
    return r;
}

std::uint64_t RunConfig::get_uint64(const std::string& key, std::uint64_t fallback) const {
    consumed_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
    if (ec != std::errc{} || p != it->second.data() + it->second.size())
        throw invalid_input("config: '" + key + "' is not an unsigned integer: " + it->second);
    return v;
}

std::vector<std::string> RunConfig::get_words(const std::string& key) const {
    consumed_.insert(key);
    const auto it = values_.find(key);
    std::vector<std::string> out;
    if (it == values_.end()) return out;
    std::string token;
    for (char c : it->second) {
        if (c == ' ' || c == '\t' || c == ',') {
            if (!token.empty()) out.push_back(token);
            token.clear();
        } else {
            token.push_back(c);
        }
    }
    if (!token.empty()) out.push_back(token);
    return out;
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& w : get_words(key)) {
        double v = 0;
        auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
        if (ec != std::errc{} || p != w.data() + w.size())
            throw invalid_input("config: '" + key + "' contains a non-number: " + w);
        out.push_back(v);
    }
    return out;
}

void RunConfig::ensure_all_consumed() const {
    std::string unknown;
    for (const auto& [key, value] : values_) {
        if (!consumed_.count(key)) {
            if (!unknown.empty()) unknown += ", ";
            unknown += key;
        }
    }
    if (!unknown.empty()) throw invalid_input("config: unknown keys: " + unknown);
}

}  // namespace hdtreat
