#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cpclab/cpc.hpp"

#include <cmath>
#include <cstdio>

using namespace cpclab;

namespace {

// hand-built table: article id i maps to a fixed vector
DpTable toy_table(const std::vector<Vec>& cols) {
    DpTable t;
    t.dp.resize(cols[0].size(), static_cast<int>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) {
        t.dp.col(static_cast<int>(i)) = cols[i];
        t.column_of[static_cast<int>(i)] = static_cast<int>(i);
    }
    return t;
}

InteractionLog log_of(int user, std::vector<std::tuple<int, double, bool>> entries) {
    InteractionLog log;
    log.user_id = user;
    for (auto& [id, rating, holdout] : entries) log.entries.push_back({id, rating, holdout});
    return log;
}

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

}  // namespace

TEST_CASE("single observed article gives its D_p back") {
    DpTable t = toy_table({v2(0.3, -0.7), v2(1.0, 2.0)});
    auto emb = polarized_embedding(t, log_of(5, {{1, 0.42, false}}));
    CHECK(emb.user_id == 5);
    CHECK(emb.w == v2(1.0, 2.0));
}

TEST_CASE("equal ratings give the midpoint") {
    DpTable t = toy_table({v2(0.0, 0.0), v2(1.0, 4.0)});
    auto emb = polarized_embedding(t, log_of(0, {{0, 0.5, false}, {1, 0.5, false}}));
    CHECK((emb.w - v2(0.5, 2.0)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("ratings weight the convex combination") {
    DpTable t = toy_table({v2(1.0, 0.0), v2(0.0, 1.0)});
    auto emb = polarized_embedding(t, log_of(0, {{0, 0.9, false}, {1, 0.1, false}}));
    CHECK(std::abs(emb.w[0] - 0.9) < 1e-15);
    CHECK(std::abs(emb.w[1] - 0.1) < 1e-15);
}

TEST_CASE("holdout entries are excluded from the embedding") {
    DpTable t = toy_table({v2(1.0, 0.0), v2(0.0, 1.0)});
    auto emb = polarized_embedding(t, log_of(0, {{0, 0.5, false}, {1, 0.9, true}}));
    CHECK(emb.w == v2(1.0, 0.0));
}

TEST_CASE("embedding undefined without positive observed ratings") {
    DpTable t = toy_table({v2(1.0, 0.0), v2(0.0, 1.0)});
    CHECK_THROWS_AS(polarized_embedding(t, log_of(3, {{0, 0.0, false}, {1, 0.8, true}})),
                    NumericError);
}

TEST_CASE("positive rescaling of one user's ratings is exactly invariant") {
    DpTable t = toy_table({v2(0.37, -1.2), v2(2.25, 0.5), v2(-0.75, 3.125)});
    auto base = log_of(0, {{0, 0.9375, false}, {1, 0.3125, false}, {2, 0.5625, false}});

    auto doubled = base;
    for (auto& e : doubled.entries) e.rating *= 2.0;  // exact in binary floating point
    CHECK(polarized_embedding(t, doubled).w == polarized_embedding(t, base).w);

    auto scaled = base;
    for (auto& e : scaled.entries) e.rating *= 1.7;
    CHECK((polarized_embedding(t, scaled).w - polarized_embedding(t, base).w)
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

namespace {

std::vector<Landmark> toy_landmarks(const std::vector<Vec>& dps) {
    // each landmark reads exactly one article with rating 1
    std::vector<Landmark> lms(dps.size());
    for (std::size_t i = 0; i < dps.size(); ++i) {
        lms[i].typology = "type" + std::to_string(i);
        lms[i].log = log_of(-static_cast<int>(i) - 1, {{static_cast<int>(i), 1.0, false}});
    }
    return lms;
}

}  // namespace

TEST_CASE("landmark set computes per-dimension ranges with flooring") {
    DpTable t = toy_table({v2(0.0, 5.0), v2(1.0, 5.0), v2(0.25, 5.0)});
    auto ls = build_landmark_set(t, toy_landmarks({v2(0, 0), v2(0, 0), v2(0, 0)}));
    CHECK(ls.embeddings.size() == 3);
    CHECK(ls.ranges[0] == 1.0);          // dim 0 spans [0, 1]
    CHECK(ls.ranges[1] == kRangeFloor);  // dim 1 degenerate
}

TEST_CASE("identical landmarks are rejected as a degenerate AABB") {
    DpTable t = toy_table({v2(0.5, 0.5), v2(0.5, 0.5)});
    CHECK_THROWS_AS(build_landmark_set(t, toy_landmarks({v2(0, 0), v2(0, 0)})), ValidationError);
}

TEST_CASE("cpc coordinates measure normalized landmark distances") {
    // landmarks at (0,0) and (1,2): ranges (1,2)
    DpTable t = toy_table({v2(0.0, 0.0), v2(1.0, 2.0)});
    auto ls = build_landmark_set(t, toy_landmarks({v2(0, 0), v2(0, 0)}));

    PolarizedEmbedding user;
    user.user_id = 42;
    user.w = v2(0.0, 0.0);
    CpcVector c = cpc_vector(user, ls);
    CHECK(c.coords[0] == 0.0);                              // at landmark 0
    CHECK(std::abs(c.coords[1] - std::sqrt(2.0)) < 1e-15);  // all components exactly 1

    // user outside the box: 2x the range below the min-side landmark in dim 0
    user.w = v2(-2.0, 0.0);
    c = cpc_vector(user, ls);
    CHECK(std::abs(c.coords[0] - 2.0) < 1e-15);
}

TEST_CASE("each landmark's own cpc coordinate is zero") {
    DpTable t = toy_table({v2(0.0, 1.0), v2(2.0, 0.5), v2(-1.0, 3.0), v2(0.7, 0.7)});
    auto lms = toy_landmarks({v2(0, 0), v2(0, 0), v2(0, 0), v2(0, 0)});
    auto ls = build_landmark_set(t, lms);
    for (std::size_t l = 0; l < lms.size(); ++l) {
        CpcVector c = cpc_vector(ls.embeddings[l], ls);
        CHECK(c.coords[static_cast<int>(l)] == 0.0);
    }
}

namespace {

CpcVector cpc_of(int id, std::vector<double> xs) {
    CpcVector c;
    c.user_id = id;
    c.coords.resize(static_cast<int>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) c.coords[static_cast<int>(i)] = xs[i];
    return c;
}

}  // namespace

TEST_CASE("correlation matrix is symmetric with unit diagonal and affine invariance") {
    std::vector<CpcVector> cpcs = {cpc_of(0, {1, 2, 3, 4, 5, 6, 7, 8, 9}),
                                   cpc_of(1, {2, 4, 6, 8, 10, 12, 14, 16, 18}),     // 2x
                                   cpc_of(2, {4, 3.5, 3, 2.5, 2, 1.5, 1, 0.5, 0}),  // -x/2 + 4.5
                                   cpc_of(3, {5, 1, 4, 1, 5, 9, 2, 6, 5})};
    Mat corr = cpc_correlation(cpcs);

    REQUIRE(corr.rows() == 4);
    for (int i = 0; i < 4; ++i) CHECK(corr(i, i) == 1.0);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            CHECK(corr(i, j) == corr(j, i));
            CHECK(corr(i, j) >= -1.0 - 1e-12);
            CHECK(corr(i, j) <= 1.0 + 1e-12);
        }
    CHECK(std::abs(corr(0, 1) - 1.0) < 1e-12);   // positive affine image
    CHECK(std::abs(corr(0, 2) + 1.0) < 1e-12);   // negative affine image
}

TEST_CASE("duplicated user correlates at exactly the duplicate's value") {
    std::vector<CpcVector> cpcs = {cpc_of(0, {1, 3, 2, 5, 4, 7, 6, 9, 8}),
                                   cpc_of(1, {1, 3, 2, 5, 4, 7, 6, 9, 8})};
    Mat corr = cpc_correlation(cpcs);
    CHECK(std::abs(corr(0, 1) - 1.0) < 1e-12);
}

TEST_CASE("zero-variance profiles correlate zero") {
    std::vector<CpcVector> cpcs = {cpc_of(0, {2, 2, 2, 2, 2, 2, 2, 2, 2}),
                                   cpc_of(1, {1, 3, 2, 5, 4, 7, 6, 9, 8})};
    Mat corr = cpc_correlation(cpcs);
    CHECK(corr(0, 1) == 0.0);
    CHECK(corr(1, 0) == 0.0);
    CHECK(corr(0, 0) == 1.0);
}

TEST_CASE("csv exports are written and carry one row per entity") {
    DpTable t = toy_table({v2(0.0, 0.0), v2(1.0, 2.0)});
    auto ls = build_landmark_set(t, toy_landmarks({v2(0, 0), v2(0, 0)}));
    save_landmarks_csv("/tmp/cpclab_test_lm.csv", ls);

    std::vector<CpcVector> cpcs = {cpc_of(0, {1, 2}), cpc_of(1, {3, 4})};
    cpcs[0].typology = "solid liberals";
    save_cpc_csv("/tmp/cpclab_test_cpc.csv", cpcs);

    std::ifstream lm("/tmp/cpclab_test_lm.csv");
    std::string line;
    int lm_lines = 0;
    while (std::getline(lm, line)) ++lm_lines;
    CHECK(lm_lines == 4);  // header + 2 landmarks + range row

    std::ifstream cp("/tmp/cpclab_test_cpc.csv");
    int cp_lines = 0;
    bool has_typology = false;
    while (std::getline(cp, line)) {
        if (line.find("solid liberals") != std::string::npos) has_typology = true;
        ++cp_lines;
    }
    CHECK(cp_lines == 3);
    CHECK(has_typology);
    std::remove("/tmp/cpclab_test_lm.csv");
    std::remove("/tmp/cpclab_test_cpc.csv");
}

TEST_CASE("dp table round trip against direct embedding on a real model") {
    CorpusConfig ccfg;
    ccfg.n_articles = 12;
    ccfg.token_count = 4;
    ccfg.token_dim = 8;
    ccfg.seed = 5;
    auto corpus = generate_corpus(ccfg);

    DisentanglerConfig dcfg;
    dcfg.model_dim = 16;
    dcfg.latent_dim = 8;
    dcfg.heads = 2;
    dcfg.seed = 6;
    Disentangler model(8, dcfg);

    DpTable table = build_dp_table(model, corpus, 2);
    REQUIRE(table.dp.cols() == 12);
    for (int i = 0; i < 12; ++i) CHECK(table.dp.col(i) == model.embed(corpus[i]).dp);

    InteractionLog log = log_of(9, {{3, 0.5, false}, {7, 0.25, false}});
    auto via_table = polarized_embedding(table, log);
    auto direct = polarized_embedding(model, log, corpus);
    CHECK(via_table.w == direct.w);
}
