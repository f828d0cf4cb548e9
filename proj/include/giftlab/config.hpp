#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace giftlab {

// Flat key=value config. Lines hold `key = value`; '#' starts a comment.
// Keys are unique; serialization is sorted so snapshots are deterministic.
class KVConfig {
  public:
    static KVConfig parse_string(const std::string& text);
    static KVConfig parse_file(const std::string& path);

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    // Typed getters fall back to the default when the key is absent and
    // throw when a present value does not parse.
    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    void set(const std::string& key, const std::string& value);

    const std::map<std::string, std::string>& entries() const { return entries_; }

    std::string serialize() const;
    void write_file(const std::string& path) const;

  private:
    std::map<std::string, std::string> entries_;
};

}  // namespace giftlab
