#pragma once

#include "plbk/tensor.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace plbk {

// Flat key-value run configuration: one `key = value` per line, `#`
// comments, and `preset = <name>` lines that splice in a named preset
// (later keys override). Unknown keys are validation errors.
class KVConfig {
public:
    static KVConfig parse_file(const std::string& path);
    static KVConfig parse_text(const std::string& text, const std::string& origin = "<text>");
    static const std::map<std::string, std::string>& preset(const std::string& name);
    static std::vector<std::string> preset_names();

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_real(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key) const; // comma separated

    // every present key must match the schema (exact or "prefix.*")
    void validate_keys(const std::set<std::string>& schema) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
    std::string origin_;
};

} // namespace plbk
