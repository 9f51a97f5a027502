#include "cpclab/cpc.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace cpclab {

DpTable build_dp_table(const Disentangler& model, const std::vector<ArticleRecord>& corpus,
                       int threads) {
    if (corpus.empty()) throw ValidationError("dp table: empty corpus");
    DpTable table;
    const int half = model.config().model_dim / 2;
    table.dp.resize(half, static_cast<int>(corpus.size()));
    parallel_for(static_cast<int>(corpus.size()), threads,
                 [&](int i) { table.dp.col(i) = model.embed(corpus[i]).dp; });
    for (std::size_t i = 0; i < corpus.size(); ++i)
        table.column_of[corpus[i].article_id] = static_cast<int>(i);
    if (table.column_of.size() != corpus.size())
        throw ValidationError("dp table: duplicate article ids in corpus");
    return table;
}

PolarizedEmbedding polarized_embedding(const DpTable& table, const InteractionLog& log) {
    PolarizedEmbedding out;
    out.user_id = log.user_id;
    Vec acc = Vec::Zero(table.dp.rows());
    double total = 0.0;
    for (const auto& e : log.entries) {
        if (e.holdout) continue;
        auto it = table.column_of.find(e.article_id);
        if (it == table.column_of.end())
            throw ValidationError("user " + std::to_string(log.user_id) + ": article " +
                                  std::to_string(e.article_id) + " missing from corpus");
        acc += e.rating * table.dp.col(it->second);
        total += e.rating;
    }
    if (total <= 0.0)
        throw NumericError("user " + std::to_string(log.user_id) +
                           ": polarized embedding undefined (no positive observed ratings)");
    out.w = acc / total;
    return out;
}

PolarizedEmbedding polarized_embedding(const Disentangler& model, const InteractionLog& log,
                                       const std::vector<ArticleRecord>& corpus) {
    return polarized_embedding(build_dp_table(model, corpus), log);
}

LandmarkSet build_landmark_set(const DpTable& table, const std::vector<Landmark>& landmarks) {
    if (landmarks.empty()) throw ValidationError("landmark set: no landmarks");
    LandmarkSet ls;
    for (const auto& lm : landmarks) {
        ls.typologies.push_back(lm.typology);
        ls.embeddings.push_back(polarized_embedding(table, lm.log));
    }

    int distinct = 1;
    for (std::size_t i = 1; i < ls.embeddings.size(); ++i)
        if (ls.embeddings[i].w != ls.embeddings[0].w) ++distinct;
    if (distinct < 2)
        throw ValidationError("landmark set: degenerate AABB (all landmark embeddings identical)");

    const auto dims = ls.embeddings[0].w.size();
    Vec lo = ls.embeddings[0].w, hi = ls.embeddings[0].w;
    for (const auto& e : ls.embeddings) {
        lo = lo.cwiseMin(e.w);
        hi = hi.cwiseMax(e.w);
    }
    ls.ranges = (hi - lo).cwiseMax(Vec::Constant(dims, kRangeFloor));
    return ls;
}

CpcVector cpc_vector(const PolarizedEmbedding& user, const LandmarkSet& ls) {
    if (user.w.size() != ls.ranges.size())
        throw ValidationError("cpc vector: embedding dim mismatch");
    CpcVector out;
    out.user_id = user.user_id;
    out.coords.resize(static_cast<int>(ls.embeddings.size()));
    for (std::size_t l = 0; l < ls.embeddings.size(); ++l)
        out.coords[static_cast<int>(l)] =
            ((user.w - ls.embeddings[l].w).cwiseQuotient(ls.ranges)).norm();
    return out;
}

Mat cpc_correlation(const std::vector<CpcVector>& cpcs) {
    const int n = static_cast<int>(cpcs.size());
    if (n < 2) throw ValidationError("cpc correlation: needs at least 2 users");
    const int d = static_cast<int>(cpcs[0].coords.size());

    // standardized profiles; zero-variance users become zero columns
    Mat S(d, n);
    for (int i = 0; i < n; ++i) {
        if (cpcs[i].coords.size() != d)
            throw ValidationError("cpc correlation: inconsistent coord dims");
        Vec c = cpcs[i].coords;
        double mean = c.mean();
        Vec centered = c.array() - mean;
        double norm = centered.norm();
        if (norm < 1e-15) {
            std::cerr << "warning: user " << cpcs[i].user_id
                      << " has a zero-variance coordinate profile; correlations set to 0\n";
            S.col(i).setZero();
        } else {
            S.col(i) = centered / norm;
        }
    }

    Mat corr(n, n);
    for (int i = 0; i < n; ++i) {
        corr(i, i) = 1.0;
        for (int j = i + 1; j < n; ++j) {
            double v = S.col(i).dot(S.col(j));
            corr(i, j) = v;
            corr(j, i) = v;
        }
    }
    return corr;
}

void save_cpc_csv(const std::string& path, const std::vector<CpcVector>& cpcs) {
    std::ofstream f(path);
    if (!f) throw PipelineError("cannot write cpc csv: " + path);
    f << "user_id,typology";
    if (!cpcs.empty())
        for (int l = 0; l < cpcs[0].coords.size(); ++l) f << ",coord_" << l;
    f << "\n";
    for (const auto& c : cpcs) {
        f << c.user_id << "," << c.typology;
        for (int l = 0; l < c.coords.size(); ++l) f << "," << format_double(c.coords[l]);
        f << "\n";
    }
}

std::vector<CpcVector> load_cpc_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IngestError("cannot open cpc csv: " + path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("user_id,typology", 0) != 0)
        throw IngestError("cpc csv: bad header in " + path);
    int dims = 0;
    for (char c : line) dims += (c == ',');
    dims -= 1;  // the typology column

    std::vector<CpcVector> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::vector<std::string> fields;
        std::string field;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (static_cast<int>(fields.size()) != dims + 2)
            throw IngestError("cpc csv: expected " + std::to_string(dims + 2) +
                              " fields in '" + line + "'");
        CpcVector c;
        c.typology = fields[1];
        c.coords = Vec(dims);
        try {
            c.user_id = std::stoi(fields[0]);
            for (int l = 0; l < dims; ++l) c.coords[l] = std::stod(fields[l + 2]);
        } catch (const std::exception&) {
            throw IngestError("cpc csv: non-numeric field in '" + line + "'");
        }
        out.push_back(std::move(c));
    }
    return out;
}

void save_landmarks_csv(const std::string& path, const LandmarkSet& ls) {
    std::ofstream f(path);
    if (!f) throw PipelineError("cannot write landmark csv: " + path);
    f << "typology";
    for (int i = 0; i < ls.ranges.size(); ++i) f << ",dim_" << i;
    f << "\n";
    for (std::size_t l = 0; l < ls.embeddings.size(); ++l) {
        f << ls.typologies[l];
        for (int i = 0; i < ls.embeddings[l].w.size(); ++i)
            f << "," << format_double(ls.embeddings[l].w[i]);
        f << "\n";
    }
    f << "range";
    for (int i = 0; i < ls.ranges.size(); ++i) f << "," << format_double(ls.ranges[i]);
    f << "\n";
}

}  // namespace cpclab
