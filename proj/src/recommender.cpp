#include "cpclab/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace cpclab {

std::string method_name(Method m) {
    switch (m) {
        case Method::Nn: return "NN";
        case Method::FnNn: return "FN-NN";
        case Method::Fnpc: return "FNPC";
    }
    throw ValidationError("unknown method tag");
}

Method method_from_name(const std::string& name) {
    if (name == "NN") return Method::Nn;
    if (name == "FN-NN") return Method::FnNn;
    if (name == "FNPC") return Method::Fnpc;
    throw ValidationError("unknown method name: '" + name + "'");
}

void RecommenderConfig::validate() const {
    if (hops < 1) throw ValidationError("recommender config: hops must be >= 1");
    if (neighbors < 1) throw ValidationError("recommender config: neighbors must be >= 1");
    if (steps < 0) throw ValidationError("recommender config: steps must be >= 0");
    if (!(lr > 0.0) || !std::isfinite(lr))
        throw ValidationError("recommender config: lr must be positive and finite");
    if (top_r < 0) throw ValidationError("recommender config: top_r must be >= 0");
    if (threads < 1) throw ValidationError("recommender config: threads must be >= 1");
}

RatingMatrix build_rating_matrix(const std::vector<InteractionLog>& logs, int n_items) {
    if (n_items <= 0) throw ValidationError("rating matrix: n_items must be positive");
    const int n_users = static_cast<int>(logs.size());
    std::vector<Eigen::Triplet<double>> trips;
    for (int u = 0; u < n_users; ++u) {
        for (const auto& e : logs[u].entries) {
            if (e.holdout) continue;  // holdout ratings are training targets, not inputs
            if (e.article_id < 0 || e.article_id >= n_items)
                throw ValidationError("rating matrix: article id " + std::to_string(e.article_id) +
                                      " outside corpus of " + std::to_string(n_items));
            if (e.rating < 0.0 || e.rating > 1.0)
                throw ValidationError("rating matrix: rating outside [0, 1] for user " +
                                      std::to_string(logs[u].user_id));
            trips.emplace_back(u, e.article_id, e.rating);
        }
    }
    RatingMatrix out;
    out.x.resize(n_users, n_items);
    out.x.setFromTriplets(trips.begin(), trips.end());
    return out;
}

RatingCorrelation rating_pearson(const RatingMatrix& x) {
    const int n_users = x.users();
    const int n_items = x.items();
    if (n_users < 2) throw ValidationError("rating pearson: needs at least 2 users");

    // Per-row sparse entries plus the centered-norm pieces of full-row Pearson:
    // cov(u, v) = sum x_u x_v - V mu_u mu_v over all V positions.
    std::vector<std::vector<std::pair<int, double>>> rows(n_users);
    std::vector<double> mean(n_users), cnorm(n_users);
    RatingCorrelation rc;
    rc.valid.assign(n_users, 1);
    for (int u = 0; u < n_users; ++u) {
        double sum = 0.0, sumsq = 0.0;
        for (SpMat::InnerIterator it(x.x, u); it; ++it) {
            rows[u].emplace_back(static_cast<int>(it.col()), it.value());
            sum += it.value();
            sumsq += it.value() * it.value();
        }
        mean[u] = sum / n_items;
        double c2 = sumsq - n_items * mean[u] * mean[u];
        cnorm[u] = c2 > 0.0 ? std::sqrt(c2) : 0.0;
        if (cnorm[u] < 1e-12) {
            rc.valid[u] = 0;
            std::cerr << "warning: user row " << u
                      << " has zero rating variance; correlations set to 0\n";
        }
    }

    rc.corr = Mat::Zero(n_users, n_users);
    for (int u = 0; u < n_users; ++u) {
        rc.corr(u, u) = 1.0;
        if (!rc.valid[u]) continue;
        for (int v = u + 1; v < n_users; ++v) {
            if (!rc.valid[v]) continue;
            double dot = 0.0;
            std::size_t i = 0, j = 0;
            while (i < rows[u].size() && j < rows[v].size()) {
                if (rows[u][i].first < rows[v][j].first) ++i;
                else if (rows[u][i].first > rows[v][j].first) ++j;
                else dot += rows[u][i++].second * rows[v][j++].second;
            }
            double c = (dot - n_items * mean[u] * mean[v]) / (cnorm[u] * cnorm[v]);
            rc.corr(u, v) = c;
            rc.corr(v, u) = c;
        }
    }
    return rc;
}

namespace {

struct Candidate {
    double value;
    int index;
    bool present;  // false when either endpoint has no defined correlation
};

// One graph row: the n best candidates under cmp, defined pairs first, ties
// toward the lower index. Missing pairs only pad when real ones run out.
template <typename Better>
void select_row(const Mat& corr, const std::vector<char>* valid, int row, int n, Better better,
                std::vector<Eigen::Triplet<double>>& out) {
    const int n_users = static_cast<int>(corr.rows());
    std::vector<Candidate> cand;
    cand.reserve(n_users - 1);
    bool row_ok = !valid || (*valid)[row];
    for (int j = 0; j < n_users; ++j) {
        if (j == row) continue;
        bool present = row_ok && (!valid || (*valid)[j]);
        cand.push_back({present ? corr(row, j) : 0.0, j, present});
    }
    auto cmp = [&](const Candidate& a, const Candidate& b) {
        if (a.present != b.present) return a.present;
        if (a.present && a.value != b.value) return better(a.value, b.value);
        return a.index < b.index;
    };
    int keep = std::min<int>(n, static_cast<int>(cand.size()));
    std::partial_sort(cand.begin(), cand.begin() + keep, cand.end(), cmp);
    for (int i = 0; i < keep; ++i) out.emplace_back(row, cand[i].index, cand[i].value);
}

}  // namespace

GraphPair build_graphs(const Mat& corr, int n, GraphSource source,
                       const std::vector<char>* valid) {
    const int n_users = static_cast<int>(corr.rows());
    if (corr.cols() != n_users) throw ValidationError("build graphs: correlation matrix not square");
    if (n < 1) throw ValidationError("build graphs: n must be >= 1");
    if (n >= n_users)
        throw ValidationError("build graphs: n=" + std::to_string(n) + " needs more than " +
                              std::to_string(n_users) + " users");
    if (valid && static_cast<int>(valid->size()) != n_users)
        throw ValidationError("build graphs: validity mask size mismatch");
    for (int i = 0; i < n_users; ++i) {
        if (std::abs(corr(i, i) - 1.0) > 1e-9)
            throw ValidationError("build graphs: diagonal not 1 at row " + std::to_string(i));
        for (int j = i + 1; j < n_users; ++j)
            if (std::abs(corr(i, j) - corr(j, i)) > 1e-9)
                throw ValidationError("build graphs: correlation matrix not symmetric");
    }

    std::vector<Eigen::Triplet<double>> ftrips, ntrips;
    for (int row = 0; row < n_users; ++row) {
        select_row(corr, valid, row, n, [](double a, double b) { return a < b; }, ftrips);
        select_row(corr, valid, row, n, [](double a, double b) { return a > b; }, ntrips);
    }
    GraphPair g;
    g.f.kind = GraphKind::Furthest;
    g.n.kind = GraphKind::Nearest;
    g.f.source = g.n.source = source;
    g.f.m.resize(n_users, n_users);
    g.n.m.resize(n_users, n_users);
    g.f.m.setFromTriplets(ftrips.begin(), ftrips.end());
    g.n.m.setFromTriplets(ntrips.begin(), ntrips.end());
    return g;
}

Vec predict_nn(const Vec& h, const SpMat& b, const Vec& x_i) {
    if (b.rows() != b.cols() || b.cols() != x_i.size())
        throw ValidationError("predict nn: dimension mismatch");
    if (h.size() < 1) throw ValidationError("predict nn: empty weights");
    Vec acc = h(0) * x_i;
    Vec v = x_i;
    for (int j = 1; j < h.size(); ++j) {
        v = b * v;
        acc += h(j) * v;
    }
    return acc;
}

Vec predict_fnpc(const Vec& h, const SpMat& f, const SpMat& n, const Vec& x_i) {
    if (f.rows() != f.cols() || n.rows() != n.cols() || f.rows() != n.rows() ||
        n.cols() != x_i.size())
        throw ValidationError("predict fnpc: dimension mismatch");
    const int k = static_cast<int>(h.size()) - 1;
    if (k < 2) throw ValidationError("predict fnpc: needs k >= 2");
    Vec v = n * x_i;
    Vec s = h(2) * v;
    for (int j = 3; j <= k; ++j) {
        v = n * v;
        s += h(j) * v;
    }
    return h(1) * (f * s);
}

Mat nn_hop_features(const SpMat& b, const SpMat& x, int user, int hops) {
    if (b.rows() != b.cols() || b.rows() != x.rows())
        throw ValidationError("hop features: dimension mismatch");
    if (user < 0 || user >= b.rows()) throw ValidationError("hop features: user out of range");
    Mat phi(hops + 1, x.cols());
    Vec w = Vec::Zero(b.rows());
    w(user) = 1.0;
    phi.row(0) = x.transpose() * w;
    for (int j = 1; j <= hops; ++j) {
        w = b.transpose() * w;
        phi.row(j) = x.transpose() * w;
    }
    return phi;
}

Mat fn_hop_features(const SpMat& f, const SpMat& n, const SpMat& x, int user, int hops) {
    if (f.rows() != f.cols() || n.rows() != n.cols() || f.rows() != n.rows() ||
        f.rows() != x.rows())
        throw ValidationError("hop features: dimension mismatch");
    if (user < 0 || user >= f.rows()) throw ValidationError("hop features: user out of range");
    if (hops < 2) throw ValidationError("hop features: fn methods need hops >= 2");
    Mat phi = Mat::Zero(hops + 1, x.cols());
    Vec e = Vec::Zero(f.rows());
    e(user) = 1.0;
    Vec v = f.transpose() * e;
    for (int j = 2; j <= hops; ++j) {
        v = n.transpose() * v;
        phi.row(j) = x.transpose() * v;
    }
    return phi;
}

Vec combine_hops(Method m, const Vec& h, const Mat& phi) {
    if (phi.rows() != h.size()) throw ValidationError("combine hops: weight/feature mismatch");
    Vec scores = phi.transpose() * h;
    if (m != Method::Nn) scores *= h(1);
    return scores;
}

GcfWeights train_weights(Method m, int user_id, const Mat& phi, const Vec& y,
                         const RecommenderConfig& cfg) {
    cfg.validate();
    if (m != Method::Nn && cfg.hops < 2)
        throw ValidationError("train weights: fn methods need hops >= 2");
    GcfWeights w;
    w.user_id = user_id;
    w.method = m;
    w.h = Vec::Zero(cfg.hops + 1);
    w.h(1) = 1.0;  // pure one-hop aggregator at init
    if (y.size() == 0) {
        std::cerr << "warning: user " << user_id
                  << " has no holdout ratings; keeping initial gcf weights\n";
        return w;
    }
    if (phi.rows() != cfg.hops + 1 || phi.cols() != y.size())
        throw ValidationError("train weights: feature matrix shape mismatch");

    const double inv = 1.0 / static_cast<double>(y.size());
    auto residual = [&](const Vec& h) -> Vec { return combine_hops(m, h, phi) - y; };
    double lr = cfg.lr;
    double loss = residual(w.h).squaredNorm() * inv;
    for (int s = 0; s < cfg.steps; ++s) {
        Vec r = residual(w.h);
        Vec g;
        if (m == Method::Nn) {
            g = phi * r * (2.0 * inv);
        } else {
            // x_hat = h_1 * sum_{j>=2} h_j psi_j: rows 0..1 of phi are zero,
            // so phi * r covers the h_j directions and h_1 needs its own term.
            Vec lin = phi.transpose() * w.h;
            g = phi * r * (2.0 * inv * w.h(1));
            g(1) = 2.0 * inv * r.dot(lin);
            g(0) = 0.0;
        }
        Vec trial = w.h - lr * g;
        double next = residual(trial).squaredNorm() * inv;
        if (next > loss) {
            lr *= 0.5;  // step rejected: loss stays monotone non-increasing
        } else {
            w.h = trial;
            loss = next;
        }
    }
    if (!w.h.allFinite())
        throw NumericError("train weights: non-finite h for user " + std::to_string(user_id));
    w.trained = true;
    return w;
}

RecommendationSet recommend(const GcfWeights& w, const Mat& phi, const InteractionLog& log,
                            int top_r) {
    if (top_r < 0) throw ValidationError("recommend: top_r must be >= 0");
    Vec scores = combine_hops(w.method, w.h, phi);
    std::vector<char> read(static_cast<std::size_t>(scores.size()), 0);
    for (const auto& e : log.entries) {
        if (e.article_id >= 0 && e.article_id < scores.size()) read[e.article_id] = 1;
    }
    std::vector<ScoredArticle> cand;
    cand.reserve(scores.size());
    for (int i = 0; i < scores.size(); ++i)
        if (!read[i]) cand.push_back({i, scores(i)});

    RecommendationSet out;
    out.user_id = log.user_id;
    out.method = w.method;
    out.truncated = static_cast<int>(cand.size()) < top_r;
    int keep = std::min<int>(top_r, static_cast<int>(cand.size()));
    std::partial_sort(cand.begin(), cand.begin() + keep, cand.end(),
                      [](const ScoredArticle& a, const ScoredArticle& b) {
                          if (a.rating != b.rating) return a.rating > b.rating;
                          return a.article_id < b.article_id;
                      });
    out.items.assign(cand.begin(), cand.begin() + keep);
    return out;
}

MethodResult run_method(Method m, const std::vector<InteractionLog>& logs, const RatingMatrix& x,
                        const Mat* cpc_corr, const RecommenderConfig& cfg) {
    cfg.validate();
    const int n_users = static_cast<int>(logs.size());
    if (x.users() != n_users) throw ValidationError("run method: log/rating matrix user mismatch");

    MethodResult res;
    res.method = m;
    if (m == Method::Fnpc) {
        if (!cpc_corr) throw ValidationError("run method: FNPC needs a coordinate correlation matrix");
        if (cpc_corr->rows() != n_users || cpc_corr->cols() != n_users)
            throw ValidationError("run method: coordinate correlation matrix has wrong shape");
        res.graphs = build_graphs(*cpc_corr, cfg.neighbors, GraphSource::Cpc);
    } else {
        RatingCorrelation rc = rating_pearson(x);
        res.graphs = build_graphs(rc.corr, cfg.neighbors, GraphSource::Ratings, &rc.valid);
    }

    // validate up front: worker threads must not throw
    for (const auto& log : logs)
        for (const auto& e : log.entries)
            if (e.article_id < 0 || e.article_id >= x.items())
                throw ValidationError("run method: article id " + std::to_string(e.article_id) +
                                      " in user " + std::to_string(log.user_id) +
                                      "'s log is outside the corpus");

    res.weights.resize(n_users);
    res.recs.resize(n_users);
    std::vector<std::string> errors(n_users);  // workers must not throw across threads
    parallel_for(static_cast<std::size_t>(n_users), cfg.threads, [&](std::size_t u) {
        try {
            const auto& log = logs[u];
            Mat phi = m == Method::Nn
                          ? nn_hop_features(res.graphs.n.m, x.x, static_cast<int>(u), cfg.hops)
                          : fn_hop_features(res.graphs.f.m, res.graphs.n.m, x.x,
                                            static_cast<int>(u), cfg.hops);
            int n_hold = log.holdout_count();
            Mat phi_h(phi.rows(), n_hold);
            Vec y(n_hold);
            int c = 0;
            for (const auto& e : log.entries) {
                if (!e.holdout) continue;
                phi_h.col(c) = phi.col(e.article_id);
                y(c) = e.rating;
                ++c;
            }
            res.weights[u] = train_weights(m, log.user_id, phi_h, y, cfg);
            res.recs[u] = recommend(res.weights[u], phi, log, cfg.top_r);
        } catch (const std::exception& e) {
            errors[u] = e.what();
        }
    });
    for (const auto& e : errors)
        if (!e.empty()) throw NumericError("run method: " + e);
    return res;
}

namespace {

const char* kind_name(GraphKind k) { return k == GraphKind::Nearest ? "nearest" : "furthest"; }
const char* source_name(GraphSource s) { return s == GraphSource::Cpc ? "cpc" : "ratings"; }

}  // namespace

void save_recommendations_csv(const std::string& path,
                              const std::vector<RecommendationSet>& recs) {
    std::ofstream f(path);
    if (!f) throw PipelineError("cannot write recommendations csv: " + path);
    f << "user_id,rank,article_id,predicted_rating,method\n";
    for (const auto& r : recs) {
        int rank = 1;
        for (const auto& it : r.items)
            f << r.user_id << "," << rank++ << "," << it.article_id << ","
              << format_double(it.rating) << "," << method_name(r.method) << "\n";
    }
}

std::vector<RecommendationSet> load_recommendations_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IngestError("cannot open recommendations csv: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "user_id,rank,article_id,predicted_rating,method")
        throw IngestError("recommendations csv: bad header in " + path);

    std::vector<RecommendationSet> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string user_s, rank_s, art_s, rating_s, method_s;
        if (!std::getline(ls, user_s, ',') || !std::getline(ls, rank_s, ',') ||
            !std::getline(ls, art_s, ',') || !std::getline(ls, rating_s, ',') ||
            !std::getline(ls, method_s))
            throw IngestError("recommendations csv: malformed line '" + line + "'");
        int user_id, rank, article_id;
        double rating;
        try {
            user_id = std::stoi(user_s);
            rank = std::stoi(rank_s);
            article_id = std::stoi(art_s);
            rating = std::stod(rating_s);
        } catch (const std::exception&) {
            throw IngestError("recommendations csv: non-numeric field in '" + line + "'");
        }
        Method m = method_from_name(method_s);
        if (out.empty() || out.back().user_id != user_id || out.back().method != m) {
            if (rank != 1)
                throw IngestError("recommendations csv: user " + std::to_string(user_id) +
                                  " does not start at rank 1");
            out.push_back({user_id, m, {}, false});
        } else if (rank != static_cast<int>(out.back().items.size()) + 1) {
            throw IngestError("recommendations csv: rank gap at user " + std::to_string(user_id));
        }
        out.back().items.push_back({article_id, rating});
    }
    return out;
}

void save_graph_csv(const std::string& path, const NeighborGraph& g) {
    std::ofstream f(path);
    if (!f) throw PipelineError("cannot write graph csv: " + path);
    f << "row,col,weight,kind,source\n";
    for (int r = 0; r < g.m.outerSize(); ++r)
        for (SpMat::InnerIterator it(g.m, r); it; ++it)
            f << r << "," << it.col() << "," << format_double(it.value()) << ","
              << kind_name(g.kind) << "," << source_name(g.source) << "\n";
}

void save_graph_pair_csv(const std::string& path, const GraphPair& gp) {
    std::ofstream f(path);
    if (!f) throw PipelineError("cannot write graph csv: " + path);
    f << "row,col,weight,kind,source\n";
    for (const NeighborGraph* g : {&gp.f, &gp.n})
        for (int r = 0; r < g->m.outerSize(); ++r)
            for (SpMat::InnerIterator it(g->m, r); it; ++it)
                f << r << "," << it.col() << "," << format_double(it.value()) << ","
                  << kind_name(g->kind) << "," << source_name(g->source) << "\n";
}

GraphPair load_graph_pair_csv(const std::string& path, int n_users) {
    std::ifstream f(path);
    if (!f) throw IngestError("cannot open graph csv: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "row,col,weight,kind,source")
        throw IngestError("graph csv: bad header in " + path);

    GraphPair gp;
    gp.f.kind = GraphKind::Furthest;
    gp.n.kind = GraphKind::Nearest;
    std::vector<Eigen::Triplet<double>> ft, nt;
    bool have_source = false;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string row_s, col_s, w_s, kind_s, source_s;
        if (!std::getline(ls, row_s, ',') || !std::getline(ls, col_s, ',') ||
            !std::getline(ls, w_s, ',') || !std::getline(ls, kind_s, ',') ||
            !std::getline(ls, source_s))
            throw IngestError("graph csv: malformed line '" + line + "'");
        int r, c;
        double w;
        try {
            r = std::stoi(row_s);
            c = std::stoi(col_s);
            w = std::stod(w_s);
        } catch (const std::exception&) {
            throw IngestError("graph csv: non-numeric field in '" + line + "'");
        }
        if (r < 0 || r >= n_users || c < 0 || c >= n_users)
            throw IngestError("graph csv: index out of range in '" + line + "'");
        GraphSource src;
        if (source_s == "cpc")
            src = GraphSource::Cpc;
        else if (source_s == "ratings")
            src = GraphSource::Ratings;
        else
            throw IngestError("graph csv: unknown source '" + source_s + "'");
        if (!have_source) {
            gp.f.source = gp.n.source = src;
            have_source = true;
        } else if (src != gp.f.source) {
            throw IngestError("graph csv: mixed sources in " + path);
        }
        if (kind_s == "furthest")
            ft.emplace_back(r, c, w);
        else if (kind_s == "nearest")
            nt.emplace_back(r, c, w);
        else
            throw IngestError("graph csv: unknown kind '" + kind_s + "'");
    }
    gp.f.m = SpMat(n_users, n_users);
    gp.n.m = SpMat(n_users, n_users);
    gp.f.m.setFromTriplets(ft.begin(), ft.end());
    gp.n.m.setFromTriplets(nt.begin(), nt.end());
    return gp;
}

void save_gcf_weights_csv(const std::string& path, const std::vector<GcfWeights>& ws) {
    std::ofstream f(path);
    if (!f) throw PipelineError("cannot write gcf weights csv: " + path);
    f << "user_id,method,trained";
    if (!ws.empty())
        for (int j = 0; j < ws[0].h.size(); ++j) f << ",h_" << j;
    f << "\n";
    for (const auto& w : ws) {
        f << w.user_id << "," << method_name(w.method) << "," << (w.trained ? 1 : 0);
        for (int j = 0; j < w.h.size(); ++j) f << "," << format_double(w.h(j));
        f << "\n";
    }
}

}  // namespace cpclab
