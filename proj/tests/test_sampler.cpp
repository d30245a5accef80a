#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "plbk/sampler.hpp"

#include <cmath>

using namespace plbk;

namespace {

CorpusStats stats_of(const std::map<std::string, int64_t>& counts) {
    CorpusStats stats;
    stats.counts = counts;
    return stats;
}

} // namespace

TEST_CASE("14:1 plan matches the high-precision formula oracle") {
    const auto plan = compute_plan(stats_of({{"pl", 14}, {"nl", 1}}), 0.3);
    // frozen from two independent evaluations of q_i = (1/p_i) p_i^a / sum p_j^a
    CHECK(std::fabs(plan.q.at("pl") - 0.737357065181556) < 1e-6);
    CHECK(std::fabs(plan.q.at("nl") - 4.67700108745822) < 1e-6);
    CHECK(std::fabs(plan.select.at("pl") - 0.688199927502786) < 1e-6);
    CHECK(std::fabs(plan.select.at("nl") - 0.311800072497214) < 1e-6);
}

TEST_CASE("equal counts give q = 1 for every language and alpha") {
    for (double alpha : {0.0, 0.3, 0.7, 1.0}) {
        const auto plan = compute_plan(stats_of({{"a", 5}, {"b", 5}, {"c", 5}}), alpha);
        for (const auto& [lang, q] : plan.q) CHECK(q == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("algebraic limits: alpha 1 means no resampling, alpha 0 uniform selection") {
    const auto plan1 = compute_plan(stats_of({{"a", 40}, {"b", 10}}), 1.0);
    CHECK(plan1.q.at("a") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(plan1.q.at("b") == doctest::Approx(1.0).epsilon(1e-12));

    const auto plan0 = compute_plan(stats_of({{"a", 40}, {"b", 10}}), 0.0);
    CHECK(plan0.select.at("a") == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(plan0.select.at("b") == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("p*q equals select to 1e-12 and probabilities sum to 1") {
    const auto plan = compute_plan(stats_of({{"a", 17}, {"b", 3}, {"c", 111}}), 0.3);
    double p_sum = 0.0, sel_sum = 0.0;
    for (const auto& [lang, p] : plan.p) {
        p_sum += p;
        sel_sum += plan.select.at(lang);
        CHECK(std::fabs(p * plan.q.at(lang) - plan.select.at(lang)) < 1e-12);
    }
    CHECK(std::fabs(p_sum - 1.0) < 1e-12);
    CHECK(std::fabs(sel_sum - 1.0) < 1e-12);
}

TEST_CASE("scale invariance: multiplying all counts changes nothing") {
    const auto a = compute_plan(stats_of({{"x", 14}, {"y", 1}}), 0.3);
    const auto b = compute_plan(stats_of({{"x", 1400}, {"y", 100}}), 0.3);
    for (const auto& [lang, q] : a.q) {
        CHECK(std::fabs(q - b.q.at(lang)) < 1e-12);
        CHECK(std::fabs(a.select.at(lang) - b.select.at(lang)) < 1e-12);
    }
}

TEST_CASE("monotone smoothing: the largest language is downsampled, the smallest upsampled") {
    for (double alpha : {0.0, 0.3, 0.9}) {
        const auto plan = compute_plan(stats_of({{"big", 100}, {"mid", 10}, {"small", 2}}), alpha);
        CHECK(plan.q.at("big") < 1.0);
        CHECK(plan.q.at("small") > 1.0);
    }
}

TEST_CASE("zero-count language is fatal and names the language") {
    try {
        compute_plan(stats_of({{"good", 5}, {"empty", 0}}), 0.3);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("empty") != std::string::npos);
    }
    CHECK_THROWS_AS(compute_plan(stats_of({{"a", 1}}), 1.5), Error);
}

TEST_CASE("plan JSON prints 12 significant digits") {
    const auto plan = compute_plan(stats_of({{"pl", 14}, {"nl", 1}}), 0.3);
    const std::string json = plan.to_json();
    CHECK(json.find("0.737357065182") != std::string::npos);
    CHECK(json.find("4.67700108746") != std::string::npos);
}

TEST_CASE("stream draws languages with plan frequencies") {
    const auto plan = compute_plan(stats_of({{"pl", 14}, {"nl", 1}}), 0.3);
    BatchStream stream(plan, {{"pl", 140}, {"nl", 10}}, 32, 5);
    int64_t pl = 0, total = 0;
    for (int b = 0; b < 3000; ++b) {
        for (const auto& draw : stream.next_batch()) {
            ++total;
            if (stream.languages()[static_cast<size_t>(draw.language)] == "pl") ++pl;
        }
    }
    CHECK(total == 3000 * 32);
    CHECK(std::fabs(static_cast<double>(pl) / static_cast<double>(total) - 0.688199927502786) <
          0.005);
}

TEST_CASE("single language stream draws only that language, batches are fixed-size") {
    const auto plan = compute_plan(stats_of({{"only", 7}}), 0.3);
    BatchStream stream(plan, {{"only", 7}}, 2048, 1);
    const auto batch = stream.next_batch();
    CHECK(batch.size() == 2048);
    for (const auto& draw : batch) {
        CHECK(draw.language == 0);
        CHECK(draw.instance >= 0);
        CHECK(draw.instance < 7);
    }
}

TEST_CASE("stream determinism under a fixed seed") {
    const auto plan = compute_plan(stats_of({{"a", 3}, {"b", 9}}), 0.3);
    BatchStream s1(plan, {{"a", 30}, {"b", 90}}, 16, 77);
    BatchStream s2(plan, {{"a", 30}, {"b", 90}}, 16, 77);
    for (int i = 0; i < 20; ++i) {
        const auto b1 = s1.next_batch();
        const auto b2 = s2.next_batch();
        for (size_t j = 0; j < b1.size(); ++j) {
            CHECK(b1[j].language == b2[j].language);
            CHECK(b1[j].instance == b2[j].instance);
        }
    }
}

TEST_CASE("empty dataset for a planned language is fatal at construction") {
    const auto plan = compute_plan(stats_of({{"a", 3}, {"b", 9}}), 0.3);
    CHECK_THROWS_AS(BatchStream(plan, {{"a", 30}}, 4, 1), Error);
    CHECK_THROWS_AS(BatchStream(plan, {{"a", 30}, {"b", 0}}, 4, 1), Error);
    CHECK_THROWS_AS(BatchStream(plan, {{"a", 30}, {"b", 9}}, 0, 1), Error);
}
