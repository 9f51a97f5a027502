#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cpclab/common.hpp"
#include "cpclab/rng.hpp"

#include <cmath>
#include <cstdlib>
#include <set>
#include <vector>

using namespace cpclab;

TEST_CASE("fnv1a64 matches published vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("mix_seed separates stages and entities") {
    std::uint64_t s = 42;
    CHECK(mix_seed(s, "corpus") != mix_seed(s, "population"));
    CHECK(mix_seed(s, 1) != mix_seed(s, 2));
    CHECK(mix_seed(s, "corpus") == mix_seed(s, "corpus"));
    CHECK(mix_seed(s, "corpus") != mix_seed(s + 1, "corpus"));
}

TEST_CASE("uniform01 stays in [0,1) with the right mean") {
    Rng rng(123);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        double u = rng.uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / 100000.0 - 0.5) < 0.01);
}

TEST_CASE("normal draws have unit variance") {
    Rng rng(99);
    double sum = 0.0, sumsq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        sum += x;
        sumsq += x * x;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("beta(a,1) mean matches a/(a+1)") {
    Rng rng(7);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.beta_a1(0.92);
        REQUIRE(x >= 0.0);
        REQUIRE(x <= 1.0);
        sum += x;
    }
    CHECK(std::abs(sum / n - 0.92 / 1.92) < 0.005);
    CHECK_THROWS_AS(rng.beta_a1(0.0), ValidationError);
    CHECK_THROWS_AS(rng.beta_a1(-1.0), ValidationError);
}

TEST_CASE("identical seeds replay identical streams") {
    Rng a(555), b(555), c(556);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 1000; ++i) {
        double x = a.uniform01(), y = b.uniform01(), z = c.uniform01();
        all_equal = all_equal && (x == y);
        any_diff = any_diff || (x != z);
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("shuffle is a permutation and seed-stable") {
    std::vector<int> v(100), w(100);
    for (int i = 0; i < 100; ++i) v[i] = w[i] = i;
    Rng a(1), b(1);
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    std::set<int> seen(v.begin(), v.end());
    CHECK(seen.size() == 100);
}

TEST_CASE("pick_weighted respects the weights") {
    Rng rng(11);
    std::vector<double> onehot = {0.0, 0.0, 1.0, 0.0};
    for (int i = 0; i < 100; ++i) CHECK(rng.pick_weighted(onehot) == 2);

    std::vector<double> w = {1.0, 3.0};
    int hits = 0;
    for (int i = 0; i < 40000; ++i) hits += rng.pick_weighted(w);
    CHECK(std::abs(hits / 40000.0 - 0.75) < 0.01);

    std::vector<double> zeros = {0.0, 0.0};
    CHECK_THROWS_AS(rng.pick_weighted(zeros), ValidationError);
    std::vector<double> neg = {0.5, -0.1};
    CHECK_THROWS_AS(rng.pick_weighted(neg), ValidationError);
}

TEST_CASE("format_double round-trips exactly") {
    Rng rng(2024);
    std::vector<double> cases = {0.0, 1.0, -1.0, 0.1, 1e-300, -1e300, 3.141592653589793,
                                 0.92 / 1.92, 1.0 / 3.0};
    for (int i = 0; i < 1000; ++i) cases.push_back((rng.uniform01() - 0.5) * std::pow(10.0, rng.uniform_int(40) - 20));
    for (double x : cases) {
        std::string s = format_double(x);
        double back = std::strtod(s.c_str(), nullptr);
        CHECK(back == x);
    }
}

TEST_CASE("parallel_for output does not depend on thread count") {
    const int n = 10000;
    std::vector<double> one(n), four(n);
    auto fill = [](std::vector<double>& out) {
        return [&out](int i) {
            Rng r(mix_seed(9, static_cast<std::uint64_t>(i)));
            out[i] = r.normal();
        };
    };
    parallel_for(n, 1, fill(one));
    parallel_for(n, 4, fill(four));
    CHECK(one == four);
}
