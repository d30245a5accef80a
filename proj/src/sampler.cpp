#include "plbk/sampler.hpp"

#include <cmath>
#include <cstdio>

namespace plbk {

SamplingPlan compute_plan(const CorpusStats& stats, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must be in [0, 1]");
    if (stats.counts.empty()) throw Error("sampling plan needs at least one language");
    double total = 0.0;
    for (const auto& [lang, n] : stats.counts) {
        if (n <= 0) {
            throw Error("language '" + lang + "' has zero instances; its share p_i would be "
                        "zero and the resampling weight 1/p_i is undefined");
        }
        total += static_cast<double>(n);
    }

    SamplingPlan plan;
    plan.alpha = alpha;
    double denom = 0.0;
    for (const auto& [lang, n] : stats.counts) {
        const double p = static_cast<double>(n) / total;
        plan.p[lang] = p;
        denom += std::pow(p, alpha);
    }
    for (const auto& [lang, p] : plan.p) {
        const double sel = std::pow(p, alpha) / denom;
        plan.select[lang] = sel;
        plan.q[lang] = sel / p;
    }
    return plan;
}

std::string SamplingPlan::to_json() const {
    auto fmt = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return std::string(buf);
    };
    std::string out = "{\n  \"alpha\": " + fmt(alpha) + ",\n";
    auto emit_map = [&](const char* name, const std::map<std::string, double>& m, bool last) {
        out += "  \"";
        out += name;
        out += "\": {";
        bool first = true;
        for (const auto& [k, v] : m) {
            out += first ? "\n" : ",\n";
            out += "    \"" + k + "\": " + fmt(v);
            first = false;
        }
        out += "\n  }";
        out += last ? "\n" : ",\n";
    };
    emit_map("p", p, false);
    emit_map("q", q, false);
    emit_map("select", select, true);
    out += "}";
    return out;
}

BatchStream::BatchStream(const SamplingPlan& plan,
                         const std::map<std::string, int64_t>& dataset_sizes, int64_t batch_size,
                         uint64_t seed)
    : batch_size_(batch_size), rng_(seed) {
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    double cum = 0.0;
    for (const auto& [lang, sel] : plan.select) {
        auto it = dataset_sizes.find(lang);
        if (it == dataset_sizes.end() || it->second <= 0) {
            throw Error("batch stream: empty dataset for language '" + lang + "'");
        }
        languages_.push_back(lang);
        sizes_.push_back(it->second);
        cum += sel;
        cumulative_.push_back(cum);
    }
    cumulative_.back() = 1.0; // guard against rounding in the final bucket
}

BatchStream::Draw BatchStream::next() {
    const double u = rng_.uniform();
    size_t lang = 0;
    while (lang + 1 < cumulative_.size() && u >= cumulative_[lang]) ++lang;
    const int64_t inst = static_cast<int64_t>(rng_.below(static_cast<uint64_t>(sizes_[lang])));
    return Draw{static_cast<int>(lang), inst};
}

std::vector<BatchStream::Draw> BatchStream::next_batch() {
    std::vector<Draw> batch;
    batch.reserve(static_cast<size_t>(batch_size_));
    for (int64_t i = 0; i < batch_size_; ++i) batch.push_back(next());
    return batch;
}

} // namespace plbk
