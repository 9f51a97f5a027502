#pragma once

#include "cpclab/common.hpp"
#include "cpclab/corpus.hpp"
#include "cpclab/rng.hpp"

#include <array>
#include <string>
#include <vector>

namespace cpclab {

struct TopicTendency {
    int dominant_index = 2;              // 0..4 (= bias score + 2)
    double agreement = 0.5;              // Beta(agreement, 1) peak draw, in (0, 1]
    std::array<double, 4> decay = {0.85, 0.69, 0.22, 0.11};  // offsets 1..4 from the peak
};

struct TypologyProfile {
    std::string name;
    double population_share = 0.0;
    std::array<TopicTendency, kNumTopics> topics;

    void validate() const;
};

// Shares must sum to 1 across the list.
void validate_profiles(const std::vector<TypologyProfile>& profiles);

// The 9-typology default population, Table-II row order. Identical to the
// shipped data/profiles_default.json (pinned by test).
std::vector<TypologyProfile> default_profiles();

std::vector<TypologyProfile> load_profiles(const std::string& path);
void save_profiles(const std::string& path, const std::vector<TypologyProfile>& profiles);

struct UserBiasMatrix {
    int user_id = 0;
    std::string typology;
    Mat b;  // 14 x 5, entries in [0, 1]
};

struct InteractionEntry {
    int article_id = 0;
    double rating = 0.0;  // p_uv at log time
    bool holdout = false;
};

struct InteractionLog {
    int user_id = 0;
    std::vector<InteractionEntry> entries;

    int observed_count() const;
    int holdout_count() const;
};

struct Landmark {
    std::string typology;
    UserBiasMatrix ub;
    InteractionLog log;
};

// Peak b_{t,d} ~ Beta(p_t, 1); neighbors at offset k get peak * decay[k-1].
UserBiasMatrix sample_user_bias_matrix(const TypologyProfile& profile, Rng& rng, int user_id = 0);

// Mean of b over the article's topics at the article's bias column.
double interaction_probability(const UserBiasMatrix& ub, const ArticleRecord& article);

// Uniform draws without replacement over the corpus; an article is logged
// with probability p_uv and rated p_uv. Exactly h entries on success, h/2 of
// them holdout-tagged (chosen by split_rng).
InteractionLog simulate_history(const UserBiasMatrix& ub, const std::vector<ArticleRecord>& corpus,
                                int h, Rng& draw_rng, Rng& split_rng);

struct Population {
    std::vector<UserBiasMatrix> users;
    std::vector<InteractionLog> logs;  // parallel to users
};

// Typology counts by largest-remainder rounding of shares * n_users.
Population build_population(const std::vector<TypologyProfile>& profiles, int n_users,
                            const std::vector<ArticleRecord>& corpus, int h, std::uint64_t seed);

// One landmark per typology: the mean user bias matrix of that typology,
// with a history simulated at the same h.
std::vector<Landmark> build_landmarks(const std::vector<TypologyProfile>& profiles,
                                      const Population& population,
                                      const std::vector<ArticleRecord>& corpus, int h,
                                      std::uint64_t seed);

// Lossless JSON round-trips (doubles kept bit-exact).
void save_population(const std::string& path, const Population& pop);
Population load_population(const std::string& path);
void save_landmark_list(const std::string& path, const std::vector<Landmark>& landmarks);
std::vector<Landmark> load_landmark_list(const std::string& path);

}  // namespace cpclab
