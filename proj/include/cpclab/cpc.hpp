#pragma once

#include "cpclab/disentangler.hpp"
#include "cpclab/population.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace cpclab {

struct PolarizedEmbedding {
    int user_id = 0;
    Vec w;  // model_dim/2
};

struct LandmarkSet {
    std::vector<std::string> typologies;         // canonical report order
    std::vector<PolarizedEmbedding> embeddings;  // one per typology
    Vec ranges;                                  // per-dim AABB extent, floored at kRangeFloor
};

constexpr double kRangeFloor = 1e-9;

struct CpcVector {
    int user_id = 0;
    std::string typology;
    Vec coords;  // one distance per landmark
};

// bias-predictive halves of every article, column k for corpus[k]
struct DpTable {
    Mat dp;
    std::unordered_map<int, int> column_of;  // article_id -> column
};

DpTable build_dp_table(const Disentangler& model, const std::vector<ArticleRecord>& corpus,
                       int threads = 1);

// Interaction-probability-weighted mean of D_p over the observed (non-holdout)
// part of the history.
PolarizedEmbedding polarized_embedding(const DpTable& table, const InteractionLog& log);
PolarizedEmbedding polarized_embedding(const Disentangler& model, const InteractionLog& log,
                                       const std::vector<ArticleRecord>& corpus);

LandmarkSet build_landmark_set(const DpTable& table, const std::vector<Landmark>& landmarks);

CpcVector cpc_vector(const PolarizedEmbedding& user, const LandmarkSet& ls);

// Pearson over coordinate profiles; zero-variance profiles correlate 0.
Mat cpc_correlation(const std::vector<CpcVector>& cpcs);

void save_cpc_csv(const std::string& path, const std::vector<CpcVector>& cpcs);
std::vector<CpcVector> load_cpc_csv(const std::string& path);
void save_landmarks_csv(const std::string& path, const LandmarkSet& ls);

}  // namespace cpclab
