#pragma once

#include "cpclab/corpus.hpp"
#include "cpclab/population.hpp"
#include "cpclab/recommender.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cpclab {

struct BiasDistribution {
    std::array<double, kNumBiasScores> masses = {};  // score b at index b+2

    void validate() const;  // nonnegative, sums to 1 within 1e-9
};

// Normalized histogram of bias scores among the given articles covering t.
BiasDistribution topic_bias_distribution(const std::vector<ArticleRecord>& corpus,
                                         const std::vector<int>& article_ids, int topic);

// Sum over the 5 support points of |cumulative difference|; a metric in [0, 4].
double wasserstein(const BiasDistribution& u, const BiasDistribution& r);

struct UserWd {
    bool defined = false;  // false when history and recs share no topic
    double mean = 0.0;
    std::map<int, double> per_topic;
};

// Mean topic-wise distance between the bias distribution of the full history
// (observed and holdout alike; the metric is post-hoc) and the recommended
// set, over topics present in both.
UserWd user_wd(const std::vector<ArticleRecord>& corpus, const std::vector<int>& history_ids,
               const std::vector<int>& rec_ids);

// Expected click-through: mean interaction probability of the recommended
// articles. Throws on an empty set (aggregation excludes those users).
double ctr(const UserBiasMatrix& ub, const RecommendationSet& recs,
           const std::vector<ArticleRecord>& corpus);

// Shannon entropy of the shares divided by log 5, in [0, 1]; 0 log 0 = 0.
double normalized_entropy(const BiasDistribution& q);

// Entropy of the column sums of UB: how evenly the user's appetite spreads
// over the five bias scores.
double political_tolerance(const UserBiasMatrix& ub);

// Per recommended topic, the mean bias score of recommended articles covering
// it; then the unweighted mean over those topics. Signed, in [-2, 2].
double average_bias(const RecommendationSet& recs, const std::vector<ArticleRecord>& corpus);

// Row t: how the furthest neighbors of typology-t users distribute over the 9
// typologies (per-user normalized histograms, averaged). Zero row when the
// typology has no users.
Mat fn_distribution(const NeighborGraph& f, const std::vector<std::string>& user_typologies,
                    const std::vector<std::string>& typology_order);

struct MetricStat {
    double mean = 0.0;
    double sd = 0.0;  // across contributing users
    int count = 0;
};

struct TypologyRow {
    std::string typology;
    int users = 0;
    double share = 0.0;  // fraction of the population
    MetricStat pt;
    std::map<Method, MetricStat> ctr, wd, ne, ab;
    std::map<Method, int> wd_excluded;  // users with no shared topic
    std::map<Method, int> empty_recs;
    std::map<Method, Vec> fn;  // only for methods with a furthest graph
};

struct UserRaw {
    int user_id = 0;
    std::string typology;
    double pt = 0.0;
    std::map<Method, double> ctr, ne, ab;
    std::map<Method, std::optional<double>> wd;
    std::map<Method, std::map<int, double>> wd_topics;
};

// Global row: per-typology means combined with share weights (renormalized
// over typologies that contributed); its AB uses absolute per-typology values,
// its sd column is the share-weighted mean of the per-typology sds.
struct MetricsReport {
    std::vector<std::string> typology_order;
    std::vector<Method> methods;  // the ones that ran, report column order
    std::vector<TypologyRow> rows;
    TypologyRow global;  // labeled "Avg."
    std::vector<UserRaw> per_user;
};

MetricsReport build_report(const Population& pop, const std::vector<ArticleRecord>& corpus,
                           const std::vector<std::pair<Method, const MethodResult*>>& runs,
                           const std::vector<std::string>& typology_order, int threads = 1);

// Table-layout CSV: typology, CTR_NN, CTR_FNPC, WD_NN, WD_FNPC, PT, NE_NN,
// NE_FNNN, NE_FNPC, AB_NN, AB_FNNN, AB_FNPC (columns only for methods that
// ran), then the "Avg." row. CTR/WD columns exist for NN and FNPC only.
void save_report_csv(const std::string& path, const MetricsReport& report);

// Everything: per-typology stats with sds and counts, exclusion counts,
// fn-distributions, and per-user raw values.
void save_report_json(const std::string& path, const MetricsReport& report);
MetricsReport load_report_json(const std::string& path);

void save_fn_distribution_csv(const std::string& path, const Mat& dist,
                              const std::vector<std::string>& typology_order);

}  // namespace cpclab
