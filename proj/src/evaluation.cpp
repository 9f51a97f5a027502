#include "cpclab/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

namespace cpclab {

using nlohmann::json;

void BiasDistribution::validate() const {
    double total = 0.0;
    for (double m : masses) {
        if (!(m >= 0.0)) throw ValidationError("bias distribution: negative or NaN mass");
        total += m;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ValidationError("bias distribution: masses sum to " + format_double(total));
}

namespace {

const ArticleRecord& article_at(const std::vector<ArticleRecord>& corpus, int id) {
    if (id < 0 || id >= static_cast<int>(corpus.size()))
        throw ValidationError("article id " + std::to_string(id) + " outside corpus");
    return corpus[id];
}

bool covers(const ArticleRecord& a, int topic) {
    return std::binary_search(a.topics.begin(), a.topics.end(), topic);
}

}  // namespace

BiasDistribution topic_bias_distribution(const std::vector<ArticleRecord>& corpus,
                                         const std::vector<int>& article_ids, int topic) {
    if (topic < 0 || topic >= kNumTopics)
        throw ValidationError("topic " + std::to_string(topic) + " out of range");
    BiasDistribution d;
    int covering = 0;
    for (int id : article_ids) {
        const ArticleRecord& a = article_at(corpus, id);
        if (!covers(a, topic)) continue;
        d.masses[a.bias_score + 2] += 1.0;
        ++covering;
    }
    if (covering == 0)
        throw ValidationError("no article covers topic " + std::to_string(topic));
    for (double& m : d.masses) m /= covering;
    return d;
}

double wasserstein(const BiasDistribution& u, const BiasDistribution& r) {
    u.validate();
    r.validate();
    double cu = 0.0, cr = 0.0, wd = 0.0;
    for (int b = 0; b < kNumBiasScores; ++b) {
        cu += u.masses[b];
        cr += r.masses[b];
        wd += std::abs(cu - cr);
    }
    return wd;
}

UserWd user_wd(const std::vector<ArticleRecord>& corpus, const std::vector<int>& history_ids,
               const std::vector<int>& rec_ids) {
    std::set<int> hist_topics, rec_topics;
    for (int id : history_ids)
        for (int t : article_at(corpus, id).topics) hist_topics.insert(t);
    for (int id : rec_ids)
        for (int t : article_at(corpus, id).topics) rec_topics.insert(t);

    UserWd out;
    double sum = 0.0;
    for (int t : hist_topics) {
        if (!rec_topics.count(t)) continue;
        double wd = wasserstein(topic_bias_distribution(corpus, history_ids, t),
                                topic_bias_distribution(corpus, rec_ids, t));
        out.per_topic[t] = wd;
        sum += wd;
    }
    if (out.per_topic.empty()) return out;
    out.defined = true;
    out.mean = sum / static_cast<double>(out.per_topic.size());
    return out;
}

double ctr(const UserBiasMatrix& ub, const RecommendationSet& recs,
           const std::vector<ArticleRecord>& corpus) {
    if (recs.items.empty()) throw ValidationError("ctr: empty recommendation set");
    double sum = 0.0;
    for (const auto& it : recs.items)
        sum += interaction_probability(ub, article_at(corpus, it.article_id));
    return sum / static_cast<double>(recs.items.size());
}

double normalized_entropy(const BiasDistribution& q) {
    q.validate();
    double h = 0.0;
    for (double m : q.masses)
        if (m > 0.0) h -= m * std::log(m);
    return h / std::log(static_cast<double>(kNumBiasScores));
}

double political_tolerance(const UserBiasMatrix& ub) {
    if (ub.b.rows() != kNumTopics || ub.b.cols() != kNumBiasScores)
        throw ValidationError("political tolerance: UB has wrong shape");
    Vec sums = ub.b.colwise().sum();
    double total = sums.sum();
    if (!(total > 0.0))
        throw ValidationError("political tolerance: user " + std::to_string(ub.user_id) +
                              " has an all-zero bias matrix");
    BiasDistribution q;
    for (int j = 0; j < kNumBiasScores; ++j) q.masses[j] = sums(j) / total;
    return normalized_entropy(q);
}

double average_bias(const RecommendationSet& recs, const std::vector<ArticleRecord>& corpus) {
    if (recs.items.empty()) throw ValidationError("average bias: empty recommendation set");
    std::map<int, std::pair<double, int>> by_topic;  // topic -> (bias sum, count)
    for (const auto& it : recs.items) {
        const ArticleRecord& a = article_at(corpus, it.article_id);
        for (int t : a.topics) {
            by_topic[t].first += a.bias_score;
            by_topic[t].second += 1;
        }
    }
    double sum = 0.0;
    for (const auto& [t, acc] : by_topic) sum += acc.first / acc.second;
    return sum / static_cast<double>(by_topic.size());
}

Mat fn_distribution(const NeighborGraph& f, const std::vector<std::string>& user_typologies,
                    const std::vector<std::string>& typology_order) {
    const int n_types = static_cast<int>(typology_order.size());
    const int n_users = static_cast<int>(user_typologies.size());
    if (f.m.rows() != n_users)
        throw ValidationError("fn distribution: typology labels do not match graph rows");
    std::unordered_map<std::string, int> index;
    for (int t = 0; t < n_types; ++t) index[typology_order[t]] = t;
    auto type_of = [&](int u) {
        auto it = index.find(user_typologies[u]);
        if (it == index.end())
            throw ValidationError("fn distribution: unknown typology '" + user_typologies[u] +
                                  "'");
        return it->second;
    };

    Mat dist = Mat::Zero(n_types, n_types);
    std::vector<int> counted(n_types, 0);
    for (int u = 0; u < n_users; ++u) {
        Vec hist = Vec::Zero(n_types);
        int neighbors = 0;
        for (SpMat::InnerIterator it(f.m, u); it; ++it) {
            hist(type_of(static_cast<int>(it.col()))) += 1.0;
            ++neighbors;
        }
        if (neighbors == 0) continue;
        dist.row(type_of(u)) += hist.transpose() / neighbors;
        ++counted[type_of(u)];
    }
    for (int t = 0; t < n_types; ++t)
        if (counted[t] > 0) dist.row(t) /= counted[t];
    return dist;
}

namespace {

// canonical method order for reports
const Method kMethodOrder[] = {Method::Nn, Method::FnNn, Method::Fnpc};

std::string column_suffix(Method m) {
    switch (m) {
        case Method::Nn: return "NN";
        case Method::FnNn: return "FNNN";
        case Method::Fnpc: return "FNPC";
    }
    throw ValidationError("unknown method tag");
}

MetricStat stat_of(const std::vector<double>& xs) {
    MetricStat s;
    s.count = static_cast<int>(xs.size());
    if (xs.empty()) return s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / xs.size();
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / xs.size());
    return s;
}

// share-weighted combination over typologies that contributed
MetricStat combine(const std::vector<TypologyRow>& rows,
                   const std::function<const MetricStat*(const TypologyRow&)>& pick,
                   bool absolute) {
    MetricStat g;
    double weight = 0.0;
    for (const auto& row : rows) {
        const MetricStat* s = pick(row);
        if (!s || s->count == 0) continue;
        weight += row.share;
        g.mean += row.share * (absolute ? std::abs(s->mean) : s->mean);
        g.sd += row.share * s->sd;
        g.count += s->count;
    }
    if (weight > 0.0) {
        g.mean /= weight;
        g.sd /= weight;
    }
    return g;
}

}  // namespace

MetricsReport build_report(const Population& pop, const std::vector<ArticleRecord>& corpus,
                           const std::vector<std::pair<Method, const MethodResult*>>& runs,
                           const std::vector<std::string>& typology_order, int threads) {
    const int n_users = static_cast<int>(pop.users.size());
    if (n_users == 0) throw ValidationError("report: empty population");
    if (pop.logs.size() != pop.users.size())
        throw ValidationError("report: population users/logs mismatch");
    if (runs.empty()) throw ValidationError("report: no method results");
    for (const auto& [m, res] : runs) {
        if (!res) throw ValidationError("report: null result for " + method_name(m));
        if (res->method != m)
            throw ValidationError("report: result tagged " + method_name(res->method) +
                                  " passed as " + method_name(m));
        if (static_cast<int>(res->recs.size()) != n_users)
            throw ValidationError("report: " + method_name(m) + " covers " +
                                  std::to_string(res->recs.size()) + " users, population has " +
                                  std::to_string(n_users));
    }

    MetricsReport rep;
    rep.typology_order = typology_order;
    for (Method m : kMethodOrder)
        for (const auto& [rm, res] : runs)
            if (rm == m && std::find(rep.methods.begin(), rep.methods.end(), m) ==
                               rep.methods.end())
                rep.methods.push_back(m);

    auto result_of = [&](Method m) -> const MethodResult* {
        for (const auto& [rm, res] : runs)
            if (rm == m) return res;
        return nullptr;
    };

    // per-user raw metrics, parallel by user
    rep.per_user.resize(n_users);
    std::vector<std::string> errors(n_users);
    parallel_for(static_cast<std::size_t>(n_users), threads, [&](std::size_t u) {
        try {
            UserRaw& raw = rep.per_user[u];
            raw.user_id = pop.users[u].user_id;
            raw.typology = pop.users[u].typology;
            raw.pt = political_tolerance(pop.users[u]);
            std::vector<int> history;
            for (const auto& e : pop.logs[u].entries) history.push_back(e.article_id);
            for (Method m : rep.methods) {
                const RecommendationSet& recs = result_of(m)->recs[u];
                if (recs.items.empty()) continue;  // excluded, counted below
                raw.ctr[m] = ctr(pop.users[u], recs, corpus);
                BiasDistribution q;
                std::vector<int> rec_ids;
                for (const auto& it : recs.items) {
                    q.masses[article_at(corpus, it.article_id).bias_score + 2] += 1.0;
                    rec_ids.push_back(it.article_id);
                }
                for (double& mass : q.masses) mass /= recs.items.size();
                raw.ne[m] = normalized_entropy(q);
                raw.ab[m] = average_bias(recs, corpus);
                UserWd wd = user_wd(corpus, history, rec_ids);
                if (wd.defined) {
                    raw.wd[m] = wd.mean;
                    raw.wd_topics[m] = wd.per_topic;
                } else {
                    raw.wd[m] = std::nullopt;
                }
            }
        } catch (const std::exception& e) {
            errors[u] = e.what();
        }
    });
    for (const auto& e : errors)
        if (!e.empty()) throw ValidationError("report: " + e);

    // aggregate per typology in canonical order
    std::unordered_map<std::string, int> row_of;
    for (const auto& name : typology_order) {
        if (row_of.count(name)) throw ValidationError("report: duplicate typology " + name);
        row_of[name] = static_cast<int>(rep.rows.size());
        TypologyRow row;
        row.typology = name;
        rep.rows.push_back(row);
    }
    std::vector<std::vector<double>> pt_vals(rep.rows.size());
    std::map<Method, std::vector<std::vector<double>>> ctr_vals, wd_vals, ne_vals, ab_vals;
    for (Method m : rep.methods) {
        ctr_vals[m].resize(rep.rows.size());
        wd_vals[m].resize(rep.rows.size());
        ne_vals[m].resize(rep.rows.size());
        ab_vals[m].resize(rep.rows.size());
    }
    for (const UserRaw& raw : rep.per_user) {
        auto it = row_of.find(raw.typology);
        if (it == row_of.end())
            throw ValidationError("report: user " + std::to_string(raw.user_id) +
                                  " has unknown typology '" + raw.typology + "'");
        TypologyRow& row = rep.rows[it->second];
        ++row.users;
        pt_vals[it->second].push_back(raw.pt);
        for (Method m : rep.methods) {
            if (!raw.ctr.count(m)) {
                ++row.empty_recs[m];
                continue;
            }
            ctr_vals[m][it->second].push_back(raw.ctr.at(m));
            ne_vals[m][it->second].push_back(raw.ne.at(m));
            ab_vals[m][it->second].push_back(raw.ab.at(m));
            if (raw.wd.at(m).has_value())
                wd_vals[m][it->second].push_back(*raw.wd.at(m));
            else
                ++row.wd_excluded[m];
        }
    }
    for (std::size_t t = 0; t < rep.rows.size(); ++t) {
        TypologyRow& row = rep.rows[t];
        row.share = static_cast<double>(row.users) / n_users;
        row.pt = stat_of(pt_vals[t]);
        for (Method m : rep.methods) {
            row.ctr[m] = stat_of(ctr_vals[m][t]);
            row.wd[m] = stat_of(wd_vals[m][t]);
            row.ne[m] = stat_of(ne_vals[m][t]);
            row.ab[m] = stat_of(ab_vals[m][t]);
            if (!row.wd_excluded.count(m)) row.wd_excluded[m] = 0;
            if (!row.empty_recs.count(m)) row.empty_recs[m] = 0;
        }
    }

    // furthest-neighbor typology mixes, for the methods that use an F graph
    std::vector<std::string> labels;
    for (const auto& u : pop.users) labels.push_back(u.typology);
    for (Method m : rep.methods) {
        if (m == Method::Nn) continue;
        Mat dist = fn_distribution(result_of(m)->graphs.f, labels, typology_order);
        for (std::size_t t = 0; t < rep.rows.size(); ++t)
            rep.rows[t].fn[m] = dist.row(t).transpose();
    }

    // global row: share-weighted over contributing typologies
    rep.global.typology = "Avg.";
    rep.global.users = n_users;
    rep.global.share = 1.0;
    rep.global.pt =
        combine(rep.rows, [](const TypologyRow& r) { return &r.pt; }, false);
    for (Method m : rep.methods) {
        rep.global.ctr[m] = combine(
            rep.rows, [&](const TypologyRow& r) { return &r.ctr.at(m); }, false);
        rep.global.wd[m] = combine(
            rep.rows, [&](const TypologyRow& r) { return &r.wd.at(m); }, false);
        rep.global.ne[m] = combine(
            rep.rows, [&](const TypologyRow& r) { return &r.ne.at(m); }, false);
        rep.global.ab[m] = combine(
            rep.rows, [&](const TypologyRow& r) { return &r.ab.at(m); }, true);
        int wdex = 0, empty = 0;
        for (const auto& row : rep.rows) {
            wdex += row.wd_excluded.at(m);
            empty += row.empty_recs.at(m);
        }
        rep.global.wd_excluded[m] = wdex;
        rep.global.empty_recs[m] = empty;
        if (m != Method::Nn) {
            Vec g = Vec::Zero(static_cast<int>(typology_order.size()));
            double weight = 0.0;
            for (const auto& row : rep.rows) {
                if (row.users == 0) continue;
                g += row.share * row.fn.at(m);
                weight += row.share;
            }
            if (weight > 0.0) g /= weight;
            rep.global.fn[m] = g;
        }
    }
    return rep;
}

void save_report_csv(const std::string& path, const MetricsReport& report) {
    std::ofstream f(path);
    if (!f) throw PipelineError("cannot write report csv: " + path);

    auto has = [&](Method m) {
        return std::find(report.methods.begin(), report.methods.end(), m) !=
               report.methods.end();
    };
    std::vector<std::pair<std::string, std::function<double(const TypologyRow&)>>> cols;
    for (Method m : {Method::Nn, Method::Fnpc})
        if (has(m))
            cols.emplace_back("CTR_" + column_suffix(m),
                              [m](const TypologyRow& r) { return r.ctr.at(m).mean; });
    for (Method m : {Method::Nn, Method::Fnpc})
        if (has(m))
            cols.emplace_back("WD_" + column_suffix(m),
                              [m](const TypologyRow& r) { return r.wd.at(m).mean; });
    cols.emplace_back("PT", [](const TypologyRow& r) { return r.pt.mean; });
    for (Method m : kMethodOrder)
        if (has(m))
            cols.emplace_back("NE_" + column_suffix(m),
                              [m](const TypologyRow& r) { return r.ne.at(m).mean; });
    for (Method m : kMethodOrder)
        if (has(m))
            cols.emplace_back("AB_" + column_suffix(m),
                              [m](const TypologyRow& r) { return r.ab.at(m).mean; });

    f << "typology";
    for (const auto& [name, fn] : cols) f << "," << name;
    f << "\n";
    auto write_row = [&](const TypologyRow& row) {
        f << row.typology;
        for (const auto& [name, fn] : cols) f << "," << format_double(fn(row));
        f << "\n";
    };
    for (const auto& row : report.rows) write_row(row);
    write_row(report.global);
}

namespace {

json stat_json(const MetricStat& s) {
    return json{{"mean", s.mean}, {"sd", s.sd}, {"count", s.count}};
}

json row_json(const TypologyRow& row, const std::vector<Method>& methods) {
    json metrics = json::object();
    for (Method m : methods) {
        json mj{{"ctr", stat_json(row.ctr.at(m))},
                {"wd", stat_json(row.wd.at(m))},
                {"ne", stat_json(row.ne.at(m))},
                {"ab", stat_json(row.ab.at(m))},
                {"wd_excluded", row.wd_excluded.at(m)},
                {"empty_recs", row.empty_recs.at(m)}};
        if (row.fn.count(m)) {
            json fn = json::array();
            const Vec& v = row.fn.at(m);
            for (int i = 0; i < v.size(); ++i) fn.push_back(v(i));
            mj["fn_distribution"] = fn;
        }
        metrics[method_name(m)] = mj;
    }
    return json{{"typology", row.typology}, {"users", row.users},     {"share", row.share},
                {"pt", stat_json(row.pt)},  {"metrics", metrics}};
}

}  // namespace

void save_report_json(const std::string& path, const MetricsReport& report) {
    std::ofstream f(path);
    if (!f) throw PipelineError("cannot write report json: " + path);
    json out;
    json methods = json::array();
    for (Method m : report.methods) methods.push_back(method_name(m));
    out["methods"] = methods;
    json rows = json::array();
    for (const auto& row : report.rows) rows.push_back(row_json(row, report.methods));
    out["typologies"] = rows;
    out["global"] = row_json(report.global, report.methods);

    json users = json::array();
    for (const auto& raw : report.per_user) {
        json uj{{"user_id", raw.user_id}, {"typology", raw.typology}, {"pt", raw.pt}};
        json per_method = json::object();
        for (const auto& [m, v] : raw.ctr) {
            json mj{{"ctr", v}, {"ne", raw.ne.at(m)}, {"ab", raw.ab.at(m)}};
            if (raw.wd.at(m).has_value()) {
                mj["wd"] = *raw.wd.at(m);
                json topics = json::object();
                for (const auto& [t, w] : raw.wd_topics.at(m))
                    topics[std::to_string(t)] = w;
                mj["wd_topics"] = topics;
            } else {
                mj["wd"] = nullptr;
            }
            per_method[method_name(m)] = mj;
        }
        uj["methods"] = per_method;
        users.push_back(uj);
    }
    out["per_user"] = users;
    f << out.dump(2) << "\n";
}

namespace {

MetricStat stat_from_json(const json& j) {
    return {j.at("mean").get<double>(), j.at("sd").get<double>(), j.at("count").get<int>()};
}

TypologyRow row_from_json(const json& j, const std::vector<Method>& methods) {
    TypologyRow row;
    row.typology = j.at("typology").get<std::string>();
    row.users = j.at("users").get<int>();
    row.share = j.at("share").get<double>();
    row.pt = stat_from_json(j.at("pt"));
    for (Method m : methods) {
        const json& mj = j.at("metrics").at(method_name(m));
        row.ctr[m] = stat_from_json(mj.at("ctr"));
        row.wd[m] = stat_from_json(mj.at("wd"));
        row.ne[m] = stat_from_json(mj.at("ne"));
        row.ab[m] = stat_from_json(mj.at("ab"));
        row.wd_excluded[m] = mj.at("wd_excluded").get<int>();
        row.empty_recs[m] = mj.at("empty_recs").get<int>();
        if (mj.contains("fn_distribution")) {
            const auto& fj = mj.at("fn_distribution");
            Vec v(static_cast<int>(fj.size()));
            for (int i = 0; i < v.size(); ++i) v(i) = fj.at(i).get<double>();
            row.fn[m] = std::move(v);
        }
    }
    return row;
}

}  // namespace

MetricsReport load_report_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open report json: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IngestError("report json " + path + ": " + e.what());
    }
    MetricsReport report;
    try {
        for (const auto& mj : j.at("methods"))
            report.methods.push_back(method_from_name(mj.get<std::string>()));
        for (const auto& rj : j.at("typologies")) {
            report.rows.push_back(row_from_json(rj, report.methods));
            report.typology_order.push_back(report.rows.back().typology);
        }
        report.global = row_from_json(j.at("global"), report.methods);
        for (const auto& uj : j.at("per_user")) {
            UserRaw raw;
            raw.user_id = uj.at("user_id").get<int>();
            raw.typology = uj.at("typology").get<std::string>();
            raw.pt = uj.at("pt").get<double>();
            for (Method m : report.methods) {
                const json& mj = uj.at("methods").at(method_name(m));
                raw.ctr[m] = mj.at("ctr").get<double>();
                raw.ne[m] = mj.at("ne").get<double>();
                raw.ab[m] = mj.at("ab").get<double>();
                if (mj.at("wd").is_null()) {
                    raw.wd[m] = std::nullopt;
                    raw.wd_topics[m] = {};
                } else {
                    raw.wd[m] = mj.at("wd").get<double>();
                    std::map<int, double> topics;
                    for (const auto& [key, val] : mj.at("wd_topics").items())
                        topics[std::stoi(key)] = val.get<double>();
                    raw.wd_topics[m] = std::move(topics);
                }
            }
            report.per_user.push_back(std::move(raw));
        }
    } catch (const json::exception& e) {
        throw IngestError("report json " + path + ": " + e.what());
    }
    return report;
}

void save_fn_distribution_csv(const std::string& path, const Mat& dist,
                              const std::vector<std::string>& typology_order) {
    const int n = static_cast<int>(typology_order.size());
    if (dist.rows() != n || dist.cols() != n)
        throw ValidationError("fn distribution csv: matrix does not match typology order");
    std::ofstream f(path);
    if (!f) throw PipelineError("cannot write fn distribution csv: " + path);
    f << "typology";
    for (const auto& name : typology_order) f << "," << name;
    f << "\n";
    for (int t = 0; t < n; ++t) {
        f << typology_order[t];
        for (int j = 0; j < n; ++j) f << "," << format_double(dist(t, j));
        f << "\n";
    }
}

}  // namespace cpclab
