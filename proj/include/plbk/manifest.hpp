#pragma once

#include "plbk/config.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace plbk {

constexpr const char* kToolVersion = "plbk 0.1.0";

// Snapshot of everything a command needs to reproduce its artifacts:
// resolved config, seed, input digests, output paths.
struct RunManifest {
    std::string command;
    std::string version = kToolVersion;
    uint64_t seed = 0;
    std::map<std::string, std::string> config;       // resolved key-value snapshot
    std::map<std::string, std::string> input_digests; // path -> fnv1a64 hex
    std::vector<std::string> outputs;

    void add_input(const std::string& path);
    std::string to_json() const;
    void write(const std::string& path) const;
};

uint64_t fnv1a64_file(const std::string& path);
std::string fnv1a64_hex(uint64_t digest);

} // namespace plbk
