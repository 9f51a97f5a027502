#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cpclab/corpus.hpp"
#include "cpclab/rng.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>

using namespace cpclab;

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/cpclab_test_") + name;
}

}  // namespace

TEST_CASE("config validation rejects bad setups") {
    CorpusConfig cfg;
    CHECK_NOTHROW(cfg.validate());

    CorpusConfig empty = cfg;
    empty.n_articles = 0;
    CHECK_THROWS_AS(empty.validate(), ValidationError);

    CorpusConfig badsum = cfg;
    badsum.topic_distribution[0] += 0.1;
    CHECK_THROWS_AS(badsum.validate(), ValidationError);

    CorpusConfig neg = cfg;
    neg.bias_distribution[1] = -0.2;
    neg.bias_distribution[2] = 0.6;
    CHECK_THROWS_AS(neg.validate(), ValidationError);

    CorpusConfig badsnr = cfg;
    badsnr.signal_to_noise = 0.0;
    CHECK_THROWS_AS(badsnr.validate(), ValidationError);
}

TEST_CASE("generated articles satisfy structural invariants") {
    CorpusConfig cfg;
    cfg.n_articles = 500;
    cfg.seed = 31;
    auto corpus = generate_corpus(cfg);
    REQUIRE(corpus.size() == 500);

    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& a = corpus[i];
        CHECK(a.article_id == static_cast<int>(i));
        REQUIRE(!a.topics.empty());
        REQUIRE(a.topics.size() <= 3);
        int prev = -1;
        for (int t : a.topics) {
            CHECK(t > prev);  // sorted, unique
            CHECK(t >= 0);
            CHECK(t < kNumTopics);
            prev = t;
        }
        CHECK(a.bias_score >= -2);
        CHECK(a.bias_score <= 2);
        CHECK(a.bias_class == bias_class_of(a.bias_score));
        CHECK(a.token_features.rows() == cfg.token_count);
        CHECK(a.token_features.cols() == cfg.token_dim);

        // binary indicator at planted coordinates, zero elsewhere
        REQUIRE(a.article_matrix.rows() == kNumTopics);
        REQUIRE(a.article_matrix.cols() == kNumBiasScores);
        for (int t = 0; t < kNumTopics; ++t)
            for (int s = 0; s < kNumBiasScores; ++s) {
                bool planted = std::find(a.topics.begin(), a.topics.end(), t) != a.topics.end() &&
                               s == a.bias_score + 2;
                CHECK(a.article_matrix(t, s) == (planted ? 1.0 : 0.0));
            }
    }
}

TEST_CASE("topic and bias frequencies track the configured distributions") {
    CorpusConfig cfg;
    cfg.seed = 7;
    auto corpus = generate_corpus(cfg);
    REQUIRE(corpus.size() == 4000);

    std::array<int, kNumTopics> topic_slots{};
    std::array<int, kNumBiasScores> bias_counts{};
    int total_slots = 0;
    for (const auto& a : corpus) {
        for (int t : a.topics) {
            topic_slots[t]++;
            total_slots++;
        }
        bias_counts[a.bias_score + 2]++;
    }

    // index 11 carries the largest configured topic weight (0.153)
    double military_share = static_cast<double>(topic_slots[11]) / total_slots;
    CHECK(std::abs(military_share - 0.153) < 0.02);

    for (int s = 0; s < kNumBiasScores; ++s) {
        CHECK(bias_counts[s] > 720);
        CHECK(bias_counts[s] < 880);
    }
}

TEST_CASE("same seed reproduces the corpus bitwise, different seed does not") {
    CorpusConfig cfg;
    cfg.n_articles = 50;
    cfg.seed = 12;
    auto a = generate_corpus(cfg);
    auto b = generate_corpus(cfg);
    cfg.seed = 13;
    auto c = generate_corpus(cfg);

    REQUIRE(a.size() == b.size());
    bool identical = true, differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        identical = identical && a[i].topics == b[i].topics && a[i].bias_score == b[i].bias_score &&
                    a[i].token_features == b[i].token_features;
        differs = differs || a[i].token_features != c[i].token_features;
    }
    CHECK(identical);
    CHECK(differs);
}

TEST_CASE("export then ingest reproduces every field exactly") {
    CorpusConfig cfg;
    cfg.n_articles = 40;
    cfg.token_count = 5;
    cfg.token_dim = 7;
    cfg.seed = 3;
    auto corpus = generate_corpus(cfg);

    std::string path = temp_path("roundtrip.txt");
    export_articles(path, corpus);
    auto back = ingest_articles(path);

    REQUIRE(back.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(back[i].article_id == corpus[i].article_id);
        CHECK(back[i].topics == corpus[i].topics);
        CHECK(back[i].bias_score == corpus[i].bias_score);
        CHECK(back[i].bias_class == corpus[i].bias_class);
        CHECK(back[i].token_features == corpus[i].token_features);
        CHECK(back[i].article_matrix == corpus[i].article_matrix);
    }
    std::remove(path.c_str());
}

TEST_CASE("ingest rejects malformed input with a diagnostic naming the record") {
    auto write_and_ingest = [](const char* name, const std::string& body) {
        std::string path = temp_path(name);
        std::ofstream f(path);
        f << body;
        f.close();
        auto result = [&]() { return ingest_articles(path); };
        std::string msg;
        try {
            result();
        } catch (const IngestError& e) {
            msg = e.what();
        }
        std::remove(path.c_str());
        return msg;
    };

    CHECK(write_and_ingest("badheader", "tokens=2\n") != "");
    CHECK(write_and_ingest("badbias", "d_tok=2 T=1\n0,3;5,7\n0.5,0.5\n").find("0") != std::string::npos);
    CHECK(write_and_ingest("duptopic", "d_tok=2 T=1\n0,3;3,1\n0.5,0.5\n") != "");
    CHECK(write_and_ingest("trunc", "d_tok=2 T=2\n0,3,1\n0.5,0.5\n") != "");
    CHECK(write_and_ingest("notnum", "d_tok=2 T=1\n0,3,1\n0.5,zebra\n") != "");
    CHECK(write_and_ingest("badtopic", "d_tok=2 T=1\n0,19,1\n0.5,0.5\n") != "");
    CHECK(write_and_ingest("emptytopics", "d_tok=2 T=1\n0,,1\n0.5,0.5\n") != "");
}

TEST_CASE("planted signal dominates at high signal-to-noise") {
    // with SNR >> 1, articles sharing topic and bias have near-identical
    // mean token vectors; unrelated ones do not
    CorpusConfig cfg;
    cfg.n_articles = 200;
    cfg.signal_to_noise = 100.0;
    cfg.seed = 17;
    auto corpus = generate_corpus(cfg);

    const ArticleRecord* first = nullptr;
    const ArticleRecord* same = nullptr;
    const ArticleRecord* other = nullptr;
    for (const auto& a : corpus) {
        if (a.topics.size() != 1) continue;
        if (!first) {
            first = &a;
            continue;
        }
        if (!same && a.topics == first->topics && a.bias_score == first->bias_score) same = &a;
        if (!other && a.topics[0] != first->topics[0] && a.bias_score != first->bias_score)
            other = &a;
        if (same && other) break;
    }
    REQUIRE(first);
    REQUIRE(same);
    REQUIRE(other);

    auto flatten = [](const ArticleRecord& a) {
        Vec v(a.token_features.size());
        int k = 0;
        for (int i = 0; i < a.token_features.rows(); ++i)
            for (int j = 0; j < a.token_features.cols(); ++j) v[k++] = a.token_features(i, j);
        return v;
    };
    Vec f = flatten(*first), s = flatten(*same), o = flatten(*other);
    CHECK((f - s).norm() < 0.1 * (f - o).norm());
}
