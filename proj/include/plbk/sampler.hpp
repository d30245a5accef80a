#pragma once

#include "plbk/corpus.hpp"
#include "plbk/rng.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace plbk {

// Smoothed multinomial up/down-sampling across languages:
//   p_i = n_i / sum_j n_j
//   q_i = (1/p_i) * p_i^alpha / sum_j p_j^alpha
//   select_i = p_i^alpha / sum_j p_j^alpha  (= p_i * q_i)
struct SamplingPlan {
    double alpha = 0.3;
    std::map<std::string, double> p;
    std::map<std::string, double> q;
    std::map<std::string, double> select;

    std::string to_json() const; // 12 significant digits
};

SamplingPlan compute_plan(const CorpusStats& stats, double alpha);

// Unbounded mixed-batch stream: draw a language ~ select, then an instance
// uniformly with replacement within it. Single consumer; independent
// streams need distinct seeds.
class BatchStream {
public:
    struct Draw {
        int language; // index into languages()
        int64_t instance;
    };

    BatchStream(const SamplingPlan& plan, const std::map<std::string, int64_t>& dataset_sizes,
                int64_t batch_size, uint64_t seed);

    std::vector<Draw> next_batch();
    Draw next();

    const std::vector<std::string>& languages() const { return languages_; }
    int64_t batch_size() const { return batch_size_; }

    std::array<uint64_t, 4> rng_state() const { return rng_.state(); }
    void set_rng_state(const std::array<uint64_t, 4>& s) { rng_.set_state(s); }

private:
    std::vector<std::string> languages_;
    std::vector<double> cumulative_;
    std::vector<int64_t> sizes_;
    int64_t batch_size_;
    Rng rng_;
};

} // namespace plbk
