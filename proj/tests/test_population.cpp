#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cpclab/corpus.hpp"
#include "cpclab/population.hpp"
#include "cpclab/rng.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <set>

using namespace cpclab;

namespace {

std::vector<ArticleRecord> tiny_corpus(int n, std::uint64_t seed) {
    CorpusConfig cfg;
    cfg.n_articles = n;
    cfg.token_count = 3;
    cfg.token_dim = 4;
    cfg.seed = seed;
    return generate_corpus(cfg);
}

UserBiasMatrix constant_ub(double value) {
    UserBiasMatrix ub;
    ub.user_id = 0;
    ub.typology = "test";
    ub.b = Mat::Constant(kNumTopics, kNumBiasScores, value);
    return ub;
}

}  // namespace

TEST_CASE("default profiles are valid and cover all nine typologies") {
    auto profiles = default_profiles();
    REQUIRE(profiles.size() == kNumTypologies);
    CHECK(profiles[0].name == "bystanders");
    CHECK(profiles[1].name == "solid liberals");
    CHECK(profiles[8].name == "core conservatives");
    double total = 0.0;
    for (const auto& p : profiles) total += p.population_share;
    CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("profile validation catches inconsistent decay and agreement") {
    auto profiles = default_profiles();
    TypologyProfile p = profiles[0];

    p.topics[3].agreement = 0.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);

    p = profiles[0];
    p.topics[0].decay = {0.5, 0.9, 0.2, 0.1};  // not non-increasing
    CHECK_THROWS_AS(p.validate(), ValidationError);

    p = profiles[0];
    p.topics[0].dominant_index = 5;
    CHECK_THROWS_AS(p.validate(), ValidationError);

    auto bad = profiles;
    bad[0].population_share += 0.5;
    CHECK_THROWS_AS(validate_profiles(bad), ValidationError);
}

TEST_CASE("sampled bias rows peak at the dominant index and follow the decay") {
    auto profiles = default_profiles();
    Rng rng(404);
    auto ub = sample_user_bias_matrix(profiles[1], rng, 9);  // solid liberals
    CHECK(ub.user_id == 9);
    CHECK(ub.typology == "solid liberals");

    for (int t = 0; t < kNumTopics; ++t) {
        const auto& e = profiles[1].topics[t];
        double peak = ub.b(t, e.dominant_index);
        CHECK(peak > 0.0);
        CHECK(peak <= 1.0);
        for (int s = 0; s < kNumBiasScores; ++s) {
            int offset = std::abs(s - e.dominant_index);
            double expected = offset == 0 ? peak : peak * e.decay[offset - 1];
            CHECK(ub.b(t, s) == expected);
            CHECK(ub.b(t, s) <= peak);
        }
    }
}

TEST_CASE("interaction probability averages the planted coordinates") {
    UserBiasMatrix ub = constant_ub(0.0);
    ub.b(2, 4) = 0.94;  // guns, +2
    ub.b(5, 4) = 0.10;  // LGBTQ, +2
    ub.b(7, 1) = 0.50;  // taxes, -1

    ArticleRecord a;
    a.topics = {2};
    a.bias_score = 2;
    CHECK(interaction_probability(ub, a) == doctest::Approx(0.94));

    a.topics = {2, 5};
    CHECK(interaction_probability(ub, a) == doctest::Approx(0.52));

    a.topics = {7};
    a.bias_score = -1;
    CHECK(interaction_probability(ub, a) == doctest::Approx(0.50));

    a.bias_score = 2;
    CHECK(interaction_probability(ub, a) == doctest::Approx(0.0));
}

TEST_CASE("history simulation draws exactly h interactions without repeats") {
    auto corpus = tiny_corpus(200, 5);
    UserBiasMatrix ub = constant_ub(1.0);
    ub.user_id = 3;
    Rng draw(1), split(2);
    auto log = simulate_history(ub, corpus, 20, draw, split);

    CHECK(log.user_id == 3);
    REQUIRE(log.entries.size() == 20);
    CHECK(log.holdout_count() == 10);
    CHECK(log.observed_count() == 10);

    std::set<int> seen;
    for (const auto& e : log.entries) {
        CHECK(seen.insert(e.article_id).second);
        CHECK(e.rating == 1.0);  // constant-one bias matrix accepts everything
    }
}

TEST_CASE("ratings equal the acceptance probability that generated them") {
    auto corpus = tiny_corpus(300, 8);
    auto profiles = default_profiles();
    Rng ub_rng(21), draw(22), split(23);
    auto ub = sample_user_bias_matrix(profiles[8], ub_rng, 0);
    auto log = simulate_history(ub, corpus, 20, draw, split);
    for (const auto& e : log.entries) {
        const auto& a = corpus[e.article_id];
        CHECK(e.rating == interaction_probability(ub, a));
        CHECK(e.rating > 0.0);
    }
}

TEST_CASE("history simulation reports failure when the corpus cannot supply h") {
    auto corpus = tiny_corpus(50, 5);
    UserBiasMatrix zero = constant_ub(0.0);
    Rng draw(1), split(2);
    CHECK_THROWS_AS(simulate_history(zero, corpus, 20, draw, split), SimulationError);

    UserBiasMatrix one = constant_ub(1.0);
    Rng d2(1), s2(2);
    CHECK_THROWS_AS(simulate_history(one, corpus, 19, d2, s2), ValidationError);  // odd h
    CHECK_THROWS_AS(simulate_history(one, corpus, 60, d2, s2), ValidationError);  // corpus too small
}

TEST_CASE("population counts follow largest-remainder apportionment") {
    auto profiles = default_profiles();
    auto corpus = tiny_corpus(400, 9);

    auto pop = build_population(profiles, 97, corpus, 10, 77);
    REQUIRE(pop.users.size() == 97);
    REQUIRE(pop.logs.size() == 97);

    std::map<std::string, int> counts;
    for (const auto& u : pop.users) counts[u.typology]++;
    CHECK(counts["bystanders"] == 5);
    CHECK(counts["solid liberals"] == 19);
    CHECK(counts["opportunity democrats"] == 12);
    CHECK(counts["disaffected democrats"] == 12);
    CHECK(counts["devout and diverse"] == 8);
    CHECK(counts["new era enterprisers"] == 10);
    CHECK(counts["market skeptic republicans"] == 11);
    CHECK(counts["country first conservatives"] == 6);
    CHECK(counts["core conservatives"] == 14);

    // ids are dense and grouped in profile order
    for (int u = 0; u < 97; ++u) CHECK(pop.users[u].user_id == u);
    CHECK(pop.users[0].typology == "bystanders");
    CHECK(pop.users[96].typology == "core conservatives");
}

TEST_CASE("population build is seed-deterministic") {
    auto profiles = default_profiles();
    auto corpus = tiny_corpus(400, 9);
    auto a = build_population(profiles, 30, corpus, 10, 123);
    auto b = build_population(profiles, 30, corpus, 10, 123);
    auto c = build_population(profiles, 30, corpus, 10, 124);

    bool same = true, diff = false;
    for (int u = 0; u < 30; ++u) {
        same = same && a.users[u].b == b.users[u].b;
        for (std::size_t i = 0; i < a.logs[u].entries.size(); ++i) {
            same = same && a.logs[u].entries[i].article_id == b.logs[u].entries[i].article_id &&
                   a.logs[u].entries[i].holdout == b.logs[u].entries[i].holdout;
        }
        diff = diff || a.users[u].b != c.users[u].b;
    }
    CHECK(same);
    CHECK(diff);
}

TEST_CASE("landmarks average their typology and carry a history") {
    auto profiles = default_profiles();
    auto corpus = tiny_corpus(400, 9);
    auto pop = build_population(profiles, 97, corpus, 10, 77);
    auto landmarks = build_landmarks(profiles, pop, corpus, 10, 77);

    REQUIRE(landmarks.size() == kNumTypologies);
    for (std::size_t i = 0; i < landmarks.size(); ++i) {
        CHECK(landmarks[i].typology == profiles[i].name);
        CHECK(landmarks[i].ub.user_id < 0);  // distinct from real users
        CHECK(landmarks[i].log.entries.size() == 10);
    }

    Mat sum = Mat::Zero(kNumTopics, kNumBiasScores);
    int n = 0;
    for (const auto& u : pop.users)
        if (u.typology == "solid liberals") {
            sum += u.b;
            ++n;
        }
    REQUIRE(n == 19);
    CHECK((landmarks[1].ub.b - sum / n).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("landmark build fails loudly for an unpopulated typology") {
    std::vector<TypologyProfile> two;
    auto defaults = default_profiles();
    two.push_back(defaults[1]);
    two.push_back(defaults[8]);
    two[0].population_share = 0.999;
    two[1].population_share = 0.001;
    auto corpus = tiny_corpus(300, 4);
    auto pop = build_population(two, 10, corpus, 10, 5);
    CHECK_THROWS_AS(build_landmarks(two, pop, corpus, 10, 5), ValidationError);
}

TEST_CASE("profiles survive a save/load round trip") {
    auto profiles = default_profiles();
    std::string path = "/tmp/cpclab_test_profiles.json";
    save_profiles(path, profiles);
    auto back = load_profiles(path);
    REQUIRE(back.size() == profiles.size());
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        CHECK(back[i].name == profiles[i].name);
        CHECK(back[i].population_share == profiles[i].population_share);
        for (int t = 0; t < kNumTopics; ++t) {
            CHECK(back[i].topics[t].dominant_index == profiles[i].topics[t].dominant_index);
            CHECK(back[i].topics[t].agreement == profiles[i].topics[t].agreement);
            CHECK(back[i].topics[t].decay == profiles[i].topics[t].decay);
        }
    }
    std::remove(path.c_str());
}

TEST_CASE("shipped default profile file matches the built-in defaults") {
    auto embedded = default_profiles();
    auto shipped = load_profiles(std::string(CPCLAB_SOURCE_DIR) + "/data/profiles_default.json");
    REQUIRE(shipped.size() == embedded.size());
    for (std::size_t i = 0; i < embedded.size(); ++i) {
        CHECK(shipped[i].name == embedded[i].name);
        CHECK(shipped[i].population_share == embedded[i].population_share);
        for (int t = 0; t < kNumTopics; ++t) {
            CHECK(shipped[i].topics[t].dominant_index == embedded[i].topics[t].dominant_index);
            CHECK(shipped[i].topics[t].agreement == embedded[i].topics[t].agreement);
            CHECK(shipped[i].topics[t].decay == embedded[i].topics[t].decay);
        }
    }
}
