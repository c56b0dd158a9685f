#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace landseg {

// Flat key-value configuration with namespaced keys (`train.lr`,
// `hf.mask_ratio`, ...). File format: one `key = value` per line,
// `#` starts a comment. Parse errors carry line numbers.
class Config {
public:
    static Config parse_file(const std::filesystem::path& path);
    static Config parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long get_int(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    void set_double(const std::string& key, double value);
    void set_int(const std::string& key, long value);
    void set_bool(const std::string& key, bool value);

    // Keys from `other` override this config's keys.
    void merge(const Config& other);

    std::string serialize() const;  // sorted, round-trippable
    void save(const std::filesystem::path& path) const;

    const std::map<std::string, std::string>& items() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace landseg
