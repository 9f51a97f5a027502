#pragma once

#include "cpclab/common.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cpclab {

struct ArticleRecord {
    int article_id = 0;
    std::vector<int> topics;   // sorted, unique, in [0, 13]
    int bias_score = 0;        // in {-2,-1,0,1,2}
    int bias_class = 0;        // sign(bias_score)
    Mat token_features;        // T x d_tok
    Mat article_matrix;        // binary 14 x 5, a_ij = 1 iff topic i, column bias+2
};

Mat build_article_matrix(const std::vector<int>& topics, int bias_score);

struct CorpusConfig {
    int n_articles = 4000;
    std::array<double, kNumTopics> topic_distribution = {
        0.028, 0.035, 0.037, 0.109, 0.098, 0.025, 0.082,
        0.057, 0.027, 0.048, 0.118, 0.153, 0.145, 0.038};
    std::array<double, kNumBiasScores> bias_distribution = {0.2, 0.2, 0.2, 0.2, 0.2};
    int token_count = 20;
    int token_dim = 64;
    double signal_to_noise = 4.0;
    std::uint64_t seed = 0;

    void validate() const;  // throws ValidationError
};

// Synthetic corpus with planted topic and bias structure in the token
// features, so that bias is linearly recoverable downstream.
std::vector<ArticleRecord> generate_corpus(const CorpusConfig& config);

// Text format: header "d_tok=<int> T=<int>", then per record a line
// "id,topic;topic;...,bias" followed by T lines of d_tok comma-separated
// decimals. export_articles is the exact inverse of ingest_articles.
std::vector<ArticleRecord> ingest_articles(const std::string& path);
void export_articles(const std::string& path, const std::vector<ArticleRecord>& articles);

}  // namespace cpclab
