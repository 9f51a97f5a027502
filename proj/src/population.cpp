#include "cpclab/population.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace cpclab {

using nlohmann::json;

void TypologyProfile::validate() const {
    if (name.empty()) throw ValidationError("profile: empty name");
    if (population_share < 0.0 || population_share > 1.0)
        throw ValidationError("profile " + name + ": share out of [0, 1]");
    for (int t = 0; t < kNumTopics; ++t) {
        const auto& e = topics[t];
        if (e.dominant_index < 0 || e.dominant_index >= kNumBiasScores)
            throw ValidationError("profile " + name + ": dominant_index out of range");
        if (!(e.agreement > 0.0) || e.agreement > 1.0)
            throw ValidationError("profile " + name + ": agreement must be in (0, 1]");
        double prev = 1.0;
        for (double d : e.decay) {
            if (d < 0.0 || d > 1.0) throw ValidationError("profile " + name + ": decay out of [0, 1]");
            if (d > prev + 1e-12)
                throw ValidationError("profile " + name + ": decay must be non-increasing");
            prev = d;
        }
    }
}

void validate_profiles(const std::vector<TypologyProfile>& profiles) {
    if (profiles.empty()) throw ValidationError("profiles: empty list");
    double total = 0.0;
    for (const auto& p : profiles) {
        p.validate();
        total += p.population_share;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ValidationError("profiles: population shares must sum to 1");
}

namespace {

TypologyProfile make_profile(std::string name, double share, const std::array<double, 4>& decay,
                             const std::array<int, kNumTopics>& dominant,
                             const std::array<double, kNumTopics>& agreement) {
    TypologyProfile p;
    p.name = std::move(name);
    p.population_share = share;
    for (int t = 0; t < kNumTopics; ++t) {
        p.topics[t].dominant_index = dominant[t];
        p.topics[t].agreement = agreement[t];
        p.topics[t].decay = decay;
    }
    return p;
}

std::array<double, kNumTopics> flat(double v) {
    std::array<double, kNumTopics> a;
    a.fill(v);
    return a;
}

}  // namespace

// Topic order: abortion, environment, guns, health care, immigration, LGBTQ,
// racism, taxes, technology, trade, Trump impeachment, US military,
// US 2020 election, welfare.
std::vector<TypologyProfile> default_profiles() {
    std::vector<TypologyProfile> v;

    v.push_back(make_profile("bystanders", 0.05, {0.85, 0.69, 0.22, 0.11},
                             {2, 1, 2, 2, 2, 2, 1, 2, 2, 2, 2, 2, 2, 2}, flat(0.50)));

    v.push_back(make_profile("solid liberals", 0.20, {0.80, 0.60, 0.18, 0.08},
                             {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0},
                             {0.92, 0.90, 0.88, 0.90, 0.88, 0.92, 0.90, 0.85, 0.82, 0.84, 0.93,
                              0.85, 0.92, 0.89}));

    v.push_back(make_profile("opportunity democrats", 0.13, {0.85, 0.69, 0.22, 0.11},
                             {0, 1, 1, 0, 1, 0, 0, 3, 3, 1, 0, 2, 1, 0},
                             {0.85, 0.75, 0.75, 0.85, 0.78, 0.85, 0.85, 0.75, 0.75, 0.72, 0.85,
                              0.65, 0.80, 0.82}));

    v.push_back(make_profile("disaffected democrats", 0.12, {0.88, 0.72, 0.30, 0.15},
                             {1, 1, 1, 0, 1, 1, 0, 1, 2, 2, 1, 2, 1, 0}, flat(0.70)));

    v.push_back(make_profile("devout and diverse", 0.08, {0.90, 0.78, 0.45, 0.30},
                             {3, 2, 2, 0, 3, 3, 0, 3, 2, 3, 2, 3, 2, 0}, flat(0.60)));

    v.push_back(make_profile("new era enterprisers", 0.10, {0.88, 0.72, 0.30, 0.15},
                             {2, 2, 3, 3, 1, 2, 2, 4, 4, 3, 3, 3, 3, 3}, flat(0.72)));

    {
        auto p = flat(0.72);
        p[7] = 0.75;   // taxes
        p[8] = 0.85;   // technology
        v.push_back(make_profile("market skeptic republicans", 0.11, {0.88, 0.72, 0.30, 0.15},
                                 {3, 3, 3, 3, 3, 3, 3, 1, 0, 2, 3, 3, 3, 2}, p));
    }

    {
        auto p = flat(0.80);
        p[4] = 0.92;   // immigration
        p[5] = 0.90;   // LGBTQ
        p[6] = 0.90;   // racism
        v.push_back(make_profile("country first conservatives", 0.06, {0.82, 0.64, 0.20, 0.10},
                                 {4, 3, 4, 3, 4, 4, 4, 3, 2, 3, 4, 4, 4, 3}, p));
    }

    v.push_back(make_profile("core conservatives", 0.15, {0.83, 0.66, 0.20, 0.09},
                             {4, 3, 4, 4, 4, 4, 4, 4, 3, 3, 4, 4, 4, 4},
                             {0.88, 0.78, 0.88, 0.85, 0.86, 0.84, 0.85, 0.87, 0.75, 0.78, 0.90,
                              0.88, 0.90, 0.82}));

    validate_profiles(v);
    return v;
}

std::vector<TypologyProfile> load_profiles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open profiles file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("profiles file " + path + ": " + e.what());
    }
    if (!j.contains("typologies") || !j["typologies"].is_array())
        throw ValidationError("profiles file " + path + ": missing 'typologies' array");

    std::vector<TypologyProfile> profiles;
    for (const auto& tj : j["typologies"]) {
        TypologyProfile p;
        try {
            p.name = tj.at("name").get<std::string>();
            p.population_share = tj.at("share").get<double>();
            const auto& entries = tj.at("topics");
            if (entries.size() != kNumTopics)
                throw ValidationError("profile " + p.name + ": expected 14 topic entries");
            for (int t = 0; t < kNumTopics; ++t) {
                const auto& e = entries.at(t);
                p.topics[t].dominant_index = e.at("dominant_index").get<int>();
                p.topics[t].agreement = e.at("agreement").get<double>();
                const auto& d = e.at("decay");
                if (d.size() != 4)
                    throw ValidationError("profile " + p.name + ": decay must have 4 entries");
                for (int k = 0; k < 4; ++k) p.topics[t].decay[k] = d.at(k).get<double>();
            }
        } catch (const json::exception& e) {
            throw ValidationError("profiles file " + path + ": " + e.what());
        }
        profiles.push_back(std::move(p));
    }
    validate_profiles(profiles);
    return profiles;
}

void save_profiles(const std::string& path, const std::vector<TypologyProfile>& profiles) {
    json out;
    out["typologies"] = json::array();
    for (const auto& p : profiles) {
        json tj;
        tj["name"] = p.name;
        tj["share"] = p.population_share;
        tj["topics"] = json::array();
        for (int t = 0; t < kNumTopics; ++t) {
            const auto& e = p.topics[t];
            tj["topics"].push_back({{"topic", topic_names()[t]},
                                    {"dominant_index", e.dominant_index},
                                    {"agreement", e.agreement},
                                    {"decay", e.decay}});
        }
        out["typologies"].push_back(std::move(tj));
    }
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot write profiles file: " + path);
    f << out.dump(2) << "\n";
}

int InteractionLog::observed_count() const {
    return static_cast<int>(std::count_if(entries.begin(), entries.end(),
                                          [](const InteractionEntry& e) { return !e.holdout; }));
}

int InteractionLog::holdout_count() const {
    return static_cast<int>(entries.size()) - observed_count();
}

UserBiasMatrix sample_user_bias_matrix(const TypologyProfile& profile, Rng& rng, int user_id) {
    profile.validate();
    UserBiasMatrix ub;
    ub.user_id = user_id;
    ub.typology = profile.name;
    ub.b = Mat::Zero(kNumTopics, kNumBiasScores);
    for (int t = 0; t < kNumTopics; ++t) {
        const auto& e = profile.topics[t];
        double peak = rng.beta_a1(e.agreement);
        ub.b(t, e.dominant_index) = peak;
        for (int offset = 1; offset <= 4; ++offset) {
            double v = peak * e.decay[offset - 1];
            int lo = e.dominant_index - offset;
            int hi = e.dominant_index + offset;
            if (lo >= 0) ub.b(t, lo) = v;
            if (hi < kNumBiasScores) ub.b(t, hi) = v;
        }
    }
    return ub;
}

double interaction_probability(const UserBiasMatrix& ub, const ArticleRecord& article) {
    double sum = 0.0;
    for (int t : article.topics) sum += ub.b(t, article.bias_score + 2);
    return sum / static_cast<double>(article.topics.size());
}

InteractionLog simulate_history(const UserBiasMatrix& ub, const std::vector<ArticleRecord>& corpus,
                                int h, Rng& draw_rng, Rng& split_rng) {
    if (h <= 0 || h % 2 != 0) throw ValidationError("history length must be positive and even");
    if (static_cast<int>(corpus.size()) < h)
        throw ValidationError("corpus smaller than requested history length");

    std::vector<int> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    draw_rng.shuffle(order);

    InteractionLog log;
    log.user_id = ub.user_id;
    for (int idx : order) {
        if (static_cast<int>(log.entries.size()) == h) break;
        double p = interaction_probability(ub, corpus[idx]);
        if (draw_rng.uniform01() < p)
            log.entries.push_back({corpus[idx].article_id, p, false});
    }
    if (static_cast<int>(log.entries.size()) < h)
        throw SimulationError("user " + std::to_string(ub.user_id) + ": corpus exhausted after " +
                              std::to_string(log.entries.size()) + " of " + std::to_string(h) +
                              " interactions");

    std::vector<int> pos(h);
    std::iota(pos.begin(), pos.end(), 0);
    split_rng.shuffle(pos);
    for (int i = 0; i < h / 2; ++i) log.entries[pos[i]].holdout = true;
    return log;
}

namespace {

std::vector<int> largest_remainder_counts(const std::vector<TypologyProfile>& profiles, int n) {
    std::vector<int> counts(profiles.size());
    std::vector<std::pair<double, std::size_t>> rema;
    int assigned = 0;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        double exact = profiles[i].population_share * n;
        counts[i] = static_cast<int>(std::floor(exact));
        assigned += counts[i];
        rema.push_back({exact - counts[i], i});
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int r = 0; r < n - assigned; ++r) counts[rema[r % rema.size()].second]++;
    return counts;
}

}  // namespace

Population build_population(const std::vector<TypologyProfile>& profiles, int n_users,
                            const std::vector<ArticleRecord>& corpus, int h, std::uint64_t seed) {
    validate_profiles(profiles);
    Population pop;
    if (n_users < 0) throw ValidationError("n_users must be nonnegative");
    if (n_users == 0) return pop;

    std::vector<int> counts = largest_remainder_counts(profiles, n_users);
    pop.users.resize(n_users);
    pop.logs.resize(n_users);

    std::vector<std::size_t> profile_of(n_users);
    int uid = 0;
    for (std::size_t i = 0; i < profiles.size(); ++i)
        for (int k = 0; k < counts[i]; ++k) profile_of[uid++] = i;

    for (int u = 0; u < n_users; ++u) {
        std::uint64_t user_seed = mix_seed(seed, mix_seed(0x55534552ULL, static_cast<std::uint64_t>(u)));
        Rng ub_rng(mix_seed(user_seed, "ub"));
        Rng draw_rng(mix_seed(user_seed, "draw"));
        Rng split_rng(mix_seed(user_seed, "split"));
        pop.users[u] = sample_user_bias_matrix(profiles[profile_of[u]], ub_rng, u);
        pop.logs[u] = simulate_history(pop.users[u], corpus, h, draw_rng, split_rng);
    }
    return pop;
}

std::vector<Landmark> build_landmarks(const std::vector<TypologyProfile>& profiles,
                                      const Population& population,
                                      const std::vector<ArticleRecord>& corpus, int h,
                                      std::uint64_t seed) {
    std::vector<Landmark> landmarks;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const std::string& name = profiles[i].name;
        Mat sum = Mat::Zero(kNumTopics, kNumBiasScores);
        int count = 0;
        for (const auto& u : population.users) {
            if (u.typology == name) {
                sum += u.b;
                ++count;
            }
        }
        if (count == 0)
            throw ValidationError("landmark: typology '" + name + "' has no users");

        Landmark lm;
        lm.typology = name;
        lm.ub.user_id = -static_cast<int>(i) - 1;
        lm.ub.typology = name;
        lm.ub.b = sum / static_cast<double>(count);

        std::uint64_t lm_seed = mix_seed(seed, "landmark/" + name);
        Rng draw_rng(mix_seed(lm_seed, "draw"));
        Rng split_rng(mix_seed(lm_seed, "split"));
        lm.log = simulate_history(lm.ub, corpus, h, draw_rng, split_rng);
        landmarks.push_back(std::move(lm));
    }
    return landmarks;
}

namespace {

json ub_to_json(const UserBiasMatrix& ub) {
    json rows = json::array();
    for (int t = 0; t < kNumTopics; ++t) {
        json row = json::array();
        for (int b = 0; b < kNumBiasScores; ++b) row.push_back(ub.b(t, b));
        rows.push_back(std::move(row));
    }
    return {{"user_id", ub.user_id}, {"typology", ub.typology}, {"b", std::move(rows)}};
}

UserBiasMatrix ub_from_json(const json& j) {
    UserBiasMatrix ub;
    ub.user_id = j.at("user_id").get<int>();
    ub.typology = j.at("typology").get<std::string>();
    const auto& rows = j.at("b");
    if (rows.size() != kNumTopics) throw ValidationError("user bias matrix: expected 14 rows");
    ub.b = Mat(kNumTopics, kNumBiasScores);
    for (int t = 0; t < kNumTopics; ++t) {
        const auto& row = rows.at(t);
        if (row.size() != kNumBiasScores)
            throw ValidationError("user bias matrix: expected 5 columns");
        for (int b = 0; b < kNumBiasScores; ++b) ub.b(t, b) = row.at(b).get<double>();
    }
    return ub;
}

json log_to_json(const InteractionLog& log) {
    json entries = json::array();
    for (const auto& e : log.entries)
        entries.push_back({{"article_id", e.article_id}, {"rating", e.rating}, {"holdout", e.holdout}});
    return {{"user_id", log.user_id}, {"entries", std::move(entries)}};
}

InteractionLog log_from_json(const json& j) {
    InteractionLog log;
    log.user_id = j.at("user_id").get<int>();
    for (const auto& ej : j.at("entries")) {
        InteractionEntry e;
        e.article_id = ej.at("article_id").get<int>();
        e.rating = ej.at("rating").get<double>();
        e.holdout = ej.at("holdout").get<bool>();
        log.entries.push_back(e);
    }
    return log;
}

json read_json_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ValidationError(std::string("cannot open ") + what + " file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError(std::string(what) + " file " + path + ": " + e.what());
    }
    return j;
}

void write_json_file(const std::string& path, const json& j, const char* what) {
    std::ofstream f(path);
    if (!f) throw ValidationError(std::string("cannot write ") + what + " file: " + path);
    f << j.dump(2) << "\n";
}

}  // namespace

void save_population(const std::string& path, const Population& pop) {
    json out;
    out["users"] = json::array();
    out["logs"] = json::array();
    for (const auto& u : pop.users) out["users"].push_back(ub_to_json(u));
    for (const auto& l : pop.logs) out["logs"].push_back(log_to_json(l));
    write_json_file(path, out, "population");
}

Population load_population(const std::string& path) {
    json j = read_json_file(path, "population");
    Population pop;
    try {
        for (const auto& uj : j.at("users")) pop.users.push_back(ub_from_json(uj));
        for (const auto& lj : j.at("logs")) pop.logs.push_back(log_from_json(lj));
    } catch (const json::exception& e) {
        throw ValidationError("population file " + path + ": " + e.what());
    }
    if (pop.users.size() != pop.logs.size())
        throw ValidationError("population file " + path + ": users/logs size mismatch");
    return pop;
}

void save_landmark_list(const std::string& path, const std::vector<Landmark>& landmarks) {
    json out;
    out["landmarks"] = json::array();
    for (const auto& lm : landmarks)
        out["landmarks"].push_back(
            {{"typology", lm.typology}, {"ub", ub_to_json(lm.ub)}, {"log", log_to_json(lm.log)}});
    write_json_file(path, out, "landmarks");
}

std::vector<Landmark> load_landmark_list(const std::string& path) {
    json j = read_json_file(path, "landmarks");
    std::vector<Landmark> landmarks;
    try {
        for (const auto& lj : j.at("landmarks")) {
            Landmark lm;
            lm.typology = lj.at("typology").get<std::string>();
            lm.ub = ub_from_json(lj.at("ub"));
            lm.log = log_from_json(lj.at("log"));
            landmarks.push_back(std::move(lm));
        }
    } catch (const json::exception& e) {
        throw ValidationError("landmarks file " + path + ": " + e.what());
    }
    return landmarks;
}

}  // namespace cpclab
