#include "plbk/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace plbk {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::map<std::string, std::map<std::string, std::string>> build_presets() {
    std::map<std::string, std::map<std::string, std::string>> presets;

    // small enough to overfit on a laptop in minutes
    presets["desk"] = {
        {"model.enc_layers", "2"},
        {"model.dec_layers", "2"},
        {"model.d_model", "64"},
        {"model.heads", "4"},
        {"model.d_ff", "128"},
        {"model.max_positions", "256"},
        {"model.dropout", "0.1"},
        {"model.final_layer_norm", "true"},
        {"tokenizer.vocab_size", "2000"},
        {"tokenizer.sample_fraction", "0.2"},
        {"noise.mask_ratio", "0.35"},
        {"noise.poisson_lambda", "3.5"},
        {"noise.w_masking", "1"},
        {"noise.w_deletion", "1"},
        {"noise.w_infilling", "1"},
        {"noise.max_span_attempts_factor", "10"},
        {"sample.alpha", "0.3"},
        {"train.total_steps", "300"},
        {"train.warmup_steps", "0"},
        {"train.peak_lr", "3e-4"},
        {"train.batch_size", "8"},
        {"train.beta1", "0.9"},
        {"train.beta2", "0.98"},
        {"train.adam_eps", "1e-6"},
        {"train.dropout_start", "0.1"},
        {"train.dropout_points", "0.5:0.05,0.8:0.0"},
        {"train.max_seq_len", "128"},
        {"train.checkpoint_every", "100"},
        {"train.eval_every", "50"},
        {"train.log_every", "10"},
        {"train.seed", "1"},
    };

    // the published pre-training recipe
    presets["paper-pretrain"] = {
        {"model.enc_layers", "6"},
        {"model.dec_layers", "6"},
        {"model.d_model", "768"},
        {"model.heads", "12"},
        {"model.d_ff", "3072"},
        {"model.max_positions", "1024"},
        {"model.dropout", "0.1"},
        {"model.final_layer_norm", "true"},
        {"tokenizer.vocab_size", "50000"},
        {"tokenizer.sample_fraction", "0.2"},
        {"noise.mask_ratio", "0.35"},
        {"noise.poisson_lambda", "3.5"},
        {"noise.w_masking", "1"},
        {"noise.w_deletion", "1"},
        {"noise.w_infilling", "1"},
        {"noise.max_span_attempts_factor", "10"},
        {"sample.alpha", "0.3"},
        {"train.total_steps", "100000"},
        {"train.warmup_steps", "0"},
        {"train.peak_lr", "5e-5"},
        {"train.batch_size", "2048"},
        {"train.beta1", "0.9"},
        {"train.beta2", "0.98"},
        {"train.adam_eps", "1e-6"},
        {"train.dropout_start", "0.1"},
        {"train.dropout_points", "0.5:0.05,0.8:0.0"},
        {"train.max_seq_len", "512"},
        {"train.checkpoint_every", "5000"},
        {"train.eval_every", "5000"},
        {"train.log_every", "100"},
        {"train.seed", "1"},
    };

    // fine-tuning: 2500 warm-up steps, constant dropout 0.1, peak lr 3e-5
    // (the alternative 5e-5 is one override away)
    presets["paper-finetune"] = presets["paper-pretrain"];
    presets["paper-finetune"]["train.total_steps"] = "100000";
    presets["paper-finetune"]["train.warmup_steps"] = "2500";
    presets["paper-finetune"]["train.peak_lr"] = "3e-5";
    presets["paper-finetune"]["train.batch_size"] = "32";
    presets["paper-finetune"]["train.dropout_points"] = "";
    presets["paper-finetune"]["train.max_seq_len"] = "512";

    return presets;
}

const std::map<std::string, std::map<std::string, std::string>>& presets() {
    static const auto p = build_presets();
    return p;
}

} // namespace

const std::map<std::string, std::string>& KVConfig::preset(const std::string& name) {
    auto it = presets().find(name);
    if (it == presets().end()) {
        std::string names;
        for (const auto& [n, kv] : presets()) names += (names.empty() ? "" : ", ") + n;
        throw Error("unknown preset '" + name + "' (available: " + names + ")");
    }
    return it->second;
}

std::vector<std::string> KVConfig::preset_names() {
    std::vector<std::string> names;
    for (const auto& [n, kv] : presets()) names.push_back(n);
    return names;
}

KVConfig KVConfig::parse_text(const std::string& text, const std::string& origin) {
    KVConfig cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw Error(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw Error(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        if (key == "preset") {
            for (const auto& [k, v] : preset(value)) cfg.entries_[k] = v;
        } else {
            cfg.entries_[key] = value;
        }
    }
    return cfg;
}

KVConfig KVConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("config file not found: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str(), path);
}

void KVConfig::set(const std::string& key, const std::string& value) { entries_[key] = value; }

bool KVConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KVConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

std::string KVConfig::require_string(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw Error(origin_ + ": missing required key '" + key + "'");
    return it->second;
}

int64_t KVConfig::get_int(const std::string& key, int64_t fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw Error(origin_ + ": key '" + key + "' is not an integer: " + it->second);
    }
}

double KVConfig::get_real(const std::string& key, double fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw Error(origin_ + ": key '" + key + "' is not a number: " + it->second);
    }
}

bool KVConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw Error(origin_ + ": key '" + key + "' is not a boolean: " + it->second);
}

std::vector<std::string> KVConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    auto it = entries_.find(key);
    if (it == entries_.end()) return out;
    std::string token;
    std::istringstream in(it->second);
    while (std::getline(in, token, ',')) {
        const std::string t = trim(token);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

void KVConfig::validate_keys(const std::set<std::string>& schema) const {
    for (const auto& [key, value] : entries_) {
        if (schema.count(key)) continue;
        bool wildcard_ok = false;
        for (const auto& s : schema) {
            if (s.size() > 2 && s.compare(s.size() - 2, 2, ".*") == 0 &&
                key.compare(0, s.size() - 1, s.substr(0, s.size() - 1)) == 0) {
                wildcard_ok = true;
                break;
            }
        }
        if (!wildcard_ok) {
            throw Error(origin_ + ": unknown config key '" + key + "'");
        }
    }
}

} // namespace plbk
