#pragma once

#include "cpclab/common.hpp"
#include "cpclab/population.hpp"

#include <Eigen/SparseCore>

#include <string>
#include <vector>

namespace cpclab {

using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Method { Nn, FnNn, Fnpc };

std::string method_name(Method m);  // "NN" / "FN-NN" / "FNPC"
Method method_from_name(const std::string& name);

// Observed ratings only; holdout entries are deliberately absent so they can
// serve as training targets later.
struct RatingMatrix {
    SpMat x;  // |U| x |V|, row u = user at logs[u], column = article_id

    int users() const { return static_cast<int>(x.rows()); }
    int items() const { return static_cast<int>(x.cols()); }
};

RatingMatrix build_rating_matrix(const std::vector<InteractionLog>& logs, int n_items);

// Pearson between full rating rows (zeros at unrated positions). valid[u] is
// false for zero-variance rows, whose correlations are reported as 0.
struct RatingCorrelation {
    Mat corr;                 // symmetric, unit diagonal
    std::vector<char> valid;  // per user
};

RatingCorrelation rating_pearson(const RatingMatrix& x);

enum class GraphKind { Nearest, Furthest };
enum class GraphSource { Cpc, Ratings };

struct NeighborGraph {
    GraphKind kind = GraphKind::Nearest;
    GraphSource source = GraphSource::Ratings;
    SpMat m;  // at most n retained correlations per row, diagonal excluded
};

struct GraphPair {
    NeighborGraph f;  // furthest: the n most negative correlations per row
    NeighborGraph n;  // nearest: the n largest
};

// Ties break toward the lower user index. Rows flagged invalid (and columns
// pointing at invalid users) are skipped during selection and only used as
// zero-weight filler when fewer than n real candidates exist.
GraphPair build_graphs(const Mat& corr, int n, GraphSource source,
                       const std::vector<char>* valid = nullptr);

struct RecommenderConfig {
    int hops = 5;       // k: highest power of the neighbor matrix
    int neighbors = 8;  // n: retained entries per graph row
    int steps = 40;
    double lr = 0.05;   // halved (and the step rejected) on loss increase
    int top_r = 10;
    int threads = 1;

    void validate() const;  // throws ValidationError
};

// For FN-NN/FNPC the outer scale h_1 and the inner h_2..h_k are only jointly
// identified (scaling h_1 by c and the rest by 1/c predicts the same); they
// are trained jointly anyway and no normalization is imposed.
struct GcfWeights {
    int user_id = 0;
    Method method = Method::Nn;
    Vec h;                 // h_0..h_k; h_0 stays 0 for FN-NN/FNPC
    bool trained = false;  // false when the user had no holdout ratings
};

struct ScoredArticle {
    int article_id = 0;
    double rating = 0.0;  // unclipped; ranking uses raw predictions
};

struct RecommendationSet {
    int user_id = 0;
    Method method = Method::Nn;
    std::vector<ScoredArticle> items;  // descending rating, ties by lower id
    bool truncated = false;            // fewer unread articles than requested
};

// x_hat = sum_{j=0}^{k} h_j B^j x_i, by iterated sparse products.
Vec predict_nn(const Vec& h, const SpMat& b, const Vec& x_i);

// x_hat = h_1 * F * (sum_{j=2}^{k} h_j N^{j-1}) x_i; throws for k < 2.
Vec predict_fnpc(const Vec& h, const SpMat& f, const SpMat& n, const Vec& x_i);

// Per-item hop features for one user: phi(j, i) is the item-i feature that
// multiplies h_j. Row j holds X^T (B^T)^j e_u, i.e. phi(j, i) = (B^j x_i)_u,
// so predictions for every item cost one pass over X per hop instead of a
// graph traversal per item.
Mat nn_hop_features(const SpMat& b, const SpMat& x, int user, int hops);

// FN variant: rows 2..k hold X^T (N^T)^{j-1} F^T e_u; rows 0 and 1 stay zero
// because the model has no self or one-hop term (h_1 acts as the outer scale).
Mat fn_hop_features(const SpMat& f, const SpMat& n, const SpMat& x, int user, int hops);

// Predictions for every item: phi^T h for NN, h_1 * (phi^T h) for the rest.
Vec combine_hops(Method m, const Vec& h, const Mat& phi);

// Full-batch gradient descent on mean squared error over the user's holdout
// items (phi columns paired with targets y). Deterministic; the gradient is
// exact. Empty y keeps the initial h (h_1 = 1, rest 0) and warns.
GcfWeights train_weights(Method m, int user_id, const Mat& phi, const Vec& y,
                         const RecommenderConfig& cfg);

// Top-R unread articles by predicted rating; nothing from the user's full log
// (observed or holdout) is ever recommended.
RecommendationSet recommend(const GcfWeights& w, const Mat& phi, const InteractionLog& log,
                            int top_r);

struct MethodResult {
    Method method = Method::Nn;
    GraphPair graphs;
    std::vector<GcfWeights> weights;       // parallel to logs
    std::vector<RecommendationSet> recs;   // parallel to logs
};

// NN: one graph family from rating-Pearson, predictions over the nearest
// graph. FN-NN: both graphs from rating-Pearson. FNPC: both graphs from the
// supplied coordinate correlation matrix (required for that method only).
MethodResult run_method(Method m, const std::vector<InteractionLog>& logs, const RatingMatrix& x,
                        const Mat* cpc_corr, const RecommenderConfig& cfg);

void save_recommendations_csv(const std::string& path, const std::vector<RecommendationSet>& recs);
std::vector<RecommendationSet> load_recommendations_csv(const std::string& path);
void save_graph_csv(const std::string& path, const NeighborGraph& g);
// Both graphs in one file, furthest rows first; the kind column tells them apart.
void save_graph_pair_csv(const std::string& path, const GraphPair& gp);
GraphPair load_graph_pair_csv(const std::string& path, int n_users);
void save_gcf_weights_csv(const std::string& path, const std::vector<GcfWeights>& ws);

}  // namespace cpclab
