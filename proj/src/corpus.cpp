#include "cpclab/corpus.hpp"
#include "cpclab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cpclab {

namespace {

void check_distribution(const double* p, int n, const char* name) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (p[i] < 0.0) throw ValidationError(std::string(name) + ": negative entry");
        sum += p[i];
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError(std::string(name) + ": entries must sum to 1");
}

// Draws up to m distinct topic indices, weighted without replacement.
std::vector<int> draw_topics(const std::array<double, kNumTopics>& dist, int m, Rng& rng) {
    std::vector<double> weights(dist.begin(), dist.end());
    int available = 0;
    for (double w : weights)
        if (w > 0.0) ++available;
    m = std::min(m, available);
    std::vector<int> topics;
    topics.reserve(m);
    for (int i = 0; i < m; ++i) {
        std::size_t t = rng.pick_weighted(weights);
        topics.push_back(static_cast<int>(t));
        weights[t] = 0.0;
    }
    std::sort(topics.begin(), topics.end());
    return topics;
}

}  // namespace

// Bias carries a deliberately small share of the planted token variance: the
// signal stays trivially linearly separable (it is coherent across all T*d_tok
// features while noise is iid), but the polarity-free half of the autoencoder
// can shed it during reconstruction without losing much of the input.
constexpr double kBiasSignalScale = 0.08;

Mat build_article_matrix(const std::vector<int>& topics, int bias_score) {
    Mat a = Mat::Zero(kNumTopics, kNumBiasScores);
    for (int t : topics) a(t, bias_score + 2) = 1.0;
    return a;
}

void CorpusConfig::validate() const {
    if (n_articles <= 0) throw ValidationError("corpus: n_articles must be positive (empty corpus)");
    check_distribution(topic_distribution.data(), kNumTopics, "topic_distribution");
    check_distribution(bias_distribution.data(), kNumBiasScores, "bias_distribution");
    if (token_count <= 0 || token_dim <= 0)
        throw ValidationError("corpus: token_count and token_dim must be positive");
    if (!(signal_to_noise > 0.0)) throw ValidationError("corpus: signal_to_noise must be positive");
}

std::vector<ArticleRecord> generate_corpus(const CorpusConfig& config) {
    config.validate();

    // Fixed seeded linear maps shared by all articles. The topic map sees the
    // normalized topic indicator, the bias map a one-hot encoding of the
    // 5-point score. Every token row carries the same article-level signal
    // (plus its own noise), so pooling across tokens averages the noise away
    // while leaving the low-rank signal intact.
    Rng map_rng(mix_seed(config.seed, "corpus/maps"));
    Mat topic_map(config.token_dim, kNumTopics);
    Mat bias_map(config.token_dim, kNumBiasScores);
    for (int i = 0; i < config.token_dim; ++i)
        for (int j = 0; j < kNumTopics; ++j) topic_map(i, j) = map_rng.normal();
    for (int i = 0; i < config.token_dim; ++i)
        for (int j = 0; j < kNumBiasScores; ++j) bias_map(i, j) = map_rng.normal();

    const double noise_scale = 1.0 / config.signal_to_noise;
    std::vector<double> bias_weights(config.bias_distribution.begin(),
                                     config.bias_distribution.end());

    std::vector<ArticleRecord> articles(config.n_articles);
    for (int id = 0; id < config.n_articles; ++id) {
        Rng rng(mix_seed(config.seed, mix_seed(0x41525449434c45ULL, static_cast<std::uint64_t>(id))));
        ArticleRecord& a = articles[id];
        a.article_id = id;
        int m = 1 + static_cast<int>(rng.uniform_int(3));
        a.topics = draw_topics(config.topic_distribution, m, rng);
        a.bias_score = static_cast<int>(rng.pick_weighted(bias_weights)) - 2;
        a.bias_class = bias_class_of(a.bias_score);
        a.article_matrix = build_article_matrix(a.topics, a.bias_score);

        Vec topic_ind = Vec::Zero(kNumTopics);
        for (int t : a.topics) topic_ind(t) = 1.0 / static_cast<double>(a.topics.size());
        Vec bias_onehot = Vec::Zero(kNumBiasScores);
        bias_onehot(a.bias_score + 2) = 1.0;

        Vec signal = topic_map * topic_ind + kBiasSignalScale * (bias_map * bias_onehot);
        a.token_features.resize(config.token_count, config.token_dim);
        for (int r = 0; r < config.token_count; ++r)
            for (int c = 0; c < config.token_dim; ++c)
                a.token_features(r, c) = signal(c) + noise_scale * rng.normal();
    }
    return articles;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<ArticleRecord> ingest_articles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open article file: " + path);

    std::string header;
    if (!std::getline(in, header)) throw IngestError("article file is empty: " + path);
    int d_tok = -1, t_count = -1;
    if (std::sscanf(header.c_str(), "d_tok=%d T=%d", &d_tok, &t_count) != 2 || d_tok <= 0 ||
        t_count <= 0)
        throw IngestError("bad header line, expected 'd_tok=<int> T=<int>': " + header);

    std::vector<ArticleRecord> articles;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::stringstream ls(line);
        std::string id_s, topics_s, bias_s;
        if (!std::getline(ls, id_s, ',') || !std::getline(ls, topics_s, ',') ||
            !std::getline(ls, bias_s))
            throw IngestError("malformed record line: '" + line + "'");

        ArticleRecord a;
        try {
            a.article_id = std::stoi(trim(id_s));
            a.bias_score = std::stoi(trim(bias_s));
        } catch (const std::exception&) {
            throw IngestError("record '" + trim(id_s) + "': non-numeric id or bias");
        }
        std::string rec = "record " + std::to_string(a.article_id);
        if (a.bias_score < -2 || a.bias_score > 2)
            throw IngestError(rec + ": bias_score " + std::to_string(a.bias_score) +
                              " out of range [-2, 2]");

        std::stringstream ts(trim(topics_s));
        std::string tok;
        while (std::getline(ts, tok, ';')) {
            tok = trim(tok);
            if (tok.empty()) continue;
            int t;
            try {
                t = std::stoi(tok);
            } catch (const std::exception&) {
                throw IngestError(rec + ": non-numeric topic '" + tok + "'");
            }
            if (t < 0 || t >= kNumTopics)
                throw IngestError(rec + ": topic " + std::to_string(t) + " out of range [0, 13]");
            a.topics.push_back(t);
        }
        if (a.topics.empty()) throw IngestError(rec + ": empty topic set");
        std::sort(a.topics.begin(), a.topics.end());
        if (std::adjacent_find(a.topics.begin(), a.topics.end()) != a.topics.end())
            throw IngestError(rec + ": duplicate topic");

        a.token_features.resize(t_count, d_tok);
        for (int r = 0; r < t_count; ++r) {
            if (!std::getline(in, line))
                throw IngestError(rec + ": truncated, expected " + std::to_string(t_count) +
                                  " token rows");
            std::stringstream rs(line);
            std::string cell;
            int c = 0;
            while (std::getline(rs, cell, ',')) {
                if (c >= d_tok) break;
                try {
                    a.token_features(r, c) = std::stod(trim(cell));
                } catch (const std::exception&) {
                    throw IngestError(rec + ": non-numeric feature '" + trim(cell) + "'");
                }
                ++c;
            }
            if (c != d_tok || std::getline(rs, cell))
                throw IngestError(rec + ": token row has wrong dimension, expected " +
                                  std::to_string(d_tok));
        }
        a.bias_class = bias_class_of(a.bias_score);
        a.article_matrix = build_article_matrix(a.topics, a.bias_score);
        articles.push_back(std::move(a));
    }
    return articles;
}

void export_articles(const std::string& path, const std::vector<ArticleRecord>& articles) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot open file for export: " + path);
    if (articles.empty()) throw ValidationError("export_articles: empty corpus");
    const int t_count = static_cast<int>(articles.front().token_features.rows());
    const int d_tok = static_cast<int>(articles.front().token_features.cols());
    out << "d_tok=" << d_tok << " T=" << t_count << "\n";
    for (const auto& a : articles) {
        if (a.token_features.rows() != t_count || a.token_features.cols() != d_tok)
            throw ValidationError("export_articles: inconsistent token dimensions in record " +
                                  std::to_string(a.article_id));
        out << a.article_id << ",";
        for (std::size_t i = 0; i < a.topics.size(); ++i) {
            if (i) out << ";";
            out << a.topics[i];
        }
        out << "," << a.bias_score << "\n";
        for (int r = 0; r < t_count; ++r) {
            for (int c = 0; c < d_tok; ++c) {
                if (c) out << ",";
                out << format_double(a.token_features(r, c));
            }
            out << "\n";
        }
    }
    if (!out) throw IngestError("write failed: " + path);
}

}  // namespace cpclab
