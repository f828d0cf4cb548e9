#include "giftlab/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace giftlab {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
    throw std::invalid_argument("config: key '" + key + "' holds '" + value + "', expected " +
                                want);
}

}  // namespace

KVConfig KVConfig::parse_string(const std::string& text) {
    KVConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " has no '=': " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config: line " + std::to_string(lineno) + " has no key");
        if (cfg.entries_.count(key))
            throw std::invalid_argument("config: duplicate key '" + key + "'");
        cfg.entries_[key] = value;
    }
    return cfg;
}

KVConfig KVConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

std::string KVConfig::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

int KVConfig::get_int(const std::string& key, int fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        size_t used = 0;
        const int v = std::stoi(it->second, &used);
        if (used != it->second.size()) bad_value(key, it->second, "an integer");
        return v;
    } catch (const std::invalid_argument&) {
        bad_value(key, it->second, "an integer");
    } catch (const std::out_of_range&) {
        bad_value(key, it->second, "an integer in range");
    }
}

uint64_t KVConfig::get_u64(const std::string& key, uint64_t fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        size_t used = 0;
        const unsigned long long v = std::stoull(it->second, &used);
        if (used != it->second.size()) bad_value(key, it->second, "an unsigned integer");
        return v;
    } catch (const std::invalid_argument&) {
        bad_value(key, it->second, "an unsigned integer");
    } catch (const std::out_of_range&) {
        bad_value(key, it->second, "an unsigned integer in range");
    }
}

double KVConfig::get_double(const std::string& key, double fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size()) bad_value(key, it->second, "a number");
        return v;
    } catch (const std::invalid_argument&) {
        bad_value(key, it->second, "a number");
    } catch (const std::out_of_range&) {
        bad_value(key, it->second, "a number in range");
    }
}

bool KVConfig::get_bool(const std::string& key, bool fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    bad_value(key, it->second, "true or false");
}

void KVConfig::set(const std::string& key, const std::string& value) {
    if (key.empty()) throw std::invalid_argument("config: empty key");
    entries_[key] = value;
}

std::string KVConfig::serialize() const {
    std::ostringstream out;
    for (const auto& [key, value] : entries_) out << key << " = " << value << "\n";
    return out.str();
}

void KVConfig::write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("config: cannot write " + path);
    out << serialize();
    if (!out) throw std::runtime_error("config: write failed for " + path);
}

}  // namespace giftlab
