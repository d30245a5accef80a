#include "plbk/manifest.hpp"

#include "json.hpp"

#include <fstream>

namespace plbk {

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot digest missing file: " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[8192];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!in) break;
    }
    return h;
}

std::string fnv1a64_hex(uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
    return std::string(buf);
}

void RunManifest::add_input(const std::string& path) {
    input_digests[path] = fnv1a64_hex(fnv1a64_file(path));
}

std::string RunManifest::to_json() const {
    nlohmann::ordered_json obj;
    obj["command"] = command;
    obj["version"] = version;
    obj["seed"] = seed;
    obj["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config) obj["config"][k] = v;
    obj["inputs"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : input_digests) obj["inputs"][k] = v;
    obj["outputs"] = outputs;
    return obj.dump(2);
}

void RunManifest::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << to_json() << "\n";
}

} // namespace plbk
