#include "cpclab/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace cpclab {

using nlohmann::json;

void RunConfig::validate() const {
    corpus.validate();
    disentangler.validate();
    if (n_users < 2) throw ValidationError("run config: n_users must be at least 2");
    if (history < 1) throw ValidationError("run config: history must be positive");
    if (neighbors < 1 || neighbors >= n_users)
        throw ValidationError("run config: neighbors must be in [1, n_users)");
    if (hops < 1) throw ValidationError("run config: hops must be positive");
    if (sgd_steps < 0) throw ValidationError("run config: sgd_steps must be nonnegative");
    if (top_r < 0) throw ValidationError("run config: top_r must be nonnegative");
    if (threads < 1) throw ValidationError("run config: threads must be positive");
    if (out_dir.empty()) throw ValidationError("run config: out_dir must be set");
    if (methods.empty()) throw ValidationError("run config: at least one method");
    for (std::size_t i = 0; i < methods.size(); ++i) {
        for (std::size_t j = i + 1; j < methods.size(); ++j)
            if (methods[i] == methods[j])
                throw ValidationError("run config: duplicate method " +
                                      std::string(method_name(methods[i])));
        if (methods[i] != Method::Nn && hops < 2)
            throw ValidationError("run config: furthest-first methods need at least 2 hops");
    }
}

RecommenderConfig RunConfig::recommender_config() const {
    RecommenderConfig rc;
    rc.hops = hops;
    rc.neighbors = neighbors;
    rc.steps = sgd_steps;
    rc.top_r = top_r;
    rc.threads = threads;
    return rc;
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> known, const char* where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(known.begin(), known.end(),
                         [&](const char* k) { return key == k; }) == known.end())
            throw ValidationError(std::string("run config: unknown key '") + key + "' in " +
                                  where);
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

template <std::size_t N>
void get_dist(const json& j, const char* key, std::array<double, N>& out) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    if (a.size() != N)
        throw ValidationError(std::string("run config: ") + key + " must have " +
                              std::to_string(N) + " entries");
    for (std::size_t i = 0; i < N; ++i) out[i] = a.at(i).get<double>();
}

void parse_corpus(const json& j, CorpusConfig& c) {
    check_keys(j,
               {"n_articles", "topic_distribution", "bias_distribution", "token_count",
                "token_dim", "signal_to_noise"},
               "corpus");
    get_if(j, "n_articles", c.n_articles);
    get_dist(j, "topic_distribution", c.topic_distribution);
    get_dist(j, "bias_distribution", c.bias_distribution);
    get_if(j, "token_count", c.token_count);
    get_if(j, "token_dim", c.token_dim);
    get_if(j, "signal_to_noise", c.signal_to_noise);
}

void parse_disentangler(const json& j, DisentanglerConfig& d) {
    check_keys(j,
               {"model_dim", "latent_dim", "heads", "dropout", "lr", "batch_size", "epochs",
                "epoch_size", "pretrain_steps", "pretrain_pairs", "pretrain_articles",
                "prob_clamp", "holdout_fraction", "disc_weight", "adv_period",
                "disc_weight_decay", "skip_pretrain"},
               "disentangler");
    get_if(j, "model_dim", d.model_dim);
    get_if(j, "latent_dim", d.latent_dim);
    get_if(j, "heads", d.heads);
    get_if(j, "dropout", d.dropout);
    get_if(j, "lr", d.lr);
    get_if(j, "batch_size", d.batch_size);
    get_if(j, "epochs", d.epochs);
    get_if(j, "epoch_size", d.epoch_size);
    get_if(j, "pretrain_steps", d.pretrain_steps);
    get_if(j, "pretrain_pairs", d.pretrain_pairs);
    get_if(j, "pretrain_articles", d.pretrain_articles);
    get_if(j, "prob_clamp", d.prob_clamp);
    get_if(j, "holdout_fraction", d.holdout_fraction);
    get_if(j, "disc_weight", d.disc_weight);
    get_if(j, "adv_period", d.adv_period);
    get_if(j, "disc_weight_decay", d.disc_weight_decay);
    get_if(j, "skip_pretrain", d.skip_pretrain);
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open run config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("run config " + path + ": " + e.what());
    }

    RunConfig cfg;
    try {
        check_keys(j,
                   {"seed", "corpus", "profile_file", "n_users", "history", "neighbors",
                    "hops", "sgd_steps", "top_r", "disentangler", "methods", "out_dir",
                    "threads"},
                   "top level");
        get_if(j, "seed", cfg.seed);
        if (j.contains("corpus")) parse_corpus(j.at("corpus"), cfg.corpus);
        get_if(j, "profile_file", cfg.profile_file);
        get_if(j, "n_users", cfg.n_users);
        get_if(j, "history", cfg.history);
        get_if(j, "neighbors", cfg.neighbors);
        get_if(j, "hops", cfg.hops);
        get_if(j, "sgd_steps", cfg.sgd_steps);
        get_if(j, "top_r", cfg.top_r);
        if (j.contains("disentangler")) parse_disentangler(j.at("disentangler"), cfg.disentangler);
        if (j.contains("methods")) {
            cfg.methods.clear();
            for (const auto& mj : j.at("methods"))
                cfg.methods.push_back(method_from_name(mj.get<std::string>()));
        }
        get_if(j, "out_dir", cfg.out_dir);
        get_if(j, "threads", cfg.threads);
    } catch (const json::exception& e) {
        throw ValidationError("run config " + path + ": " + e.what());
    }
    cfg.validate();
    return cfg;
}

void apply_paper_scale(RunConfig& cfg) {
    cfg.n_users = 1000;
    cfg.corpus.n_articles = 4000;
    cfg.disentangler.epochs = 32;
    cfg.disentangler.epoch_size = 1000;
    cfg.disentangler.pretrain_steps = 200;
    cfg.disentangler.pretrain_articles = 3000;
}

void apply_desk_scale(RunConfig& cfg) {
    cfg.n_users = 50;
    cfg.corpus.n_articles = 200;
    cfg.history = 10;  // a 200-article corpus cannot reliably feed 20 accepts
    cfg.disentangler.epochs = 2;
    cfg.disentangler.epoch_size = 200;
    cfg.disentangler.pretrain_steps = 20;
    cfg.disentangler.pretrain_articles = 150;
}

std::string method_file_tag(Method m) {
    switch (m) {
        case Method::Nn: return "nn";
        case Method::FnNn: return "fnnn";
        case Method::Fnpc: return "fnpc";
    }
    throw ValidationError("unknown method");
}

namespace {

// Rethrow anything a stage body raises with the stage name attached; partial
// artifacts stay on disk for inspection.
template <class F>
bool run_stage(const std::string& name, F&& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        throw PipelineError("stage " + name + ": " + e.what());
    }
}

std::optional<std::uint64_t> file_hash(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) return std::nullopt;
    std::ostringstream buf;
    buf << f.rdbuf();
    const std::string bytes = buf.str();
    return fnv1a64(bytes.data(), bytes.size());
}

json profiles_to_json(const std::vector<TypologyProfile>& profiles) {
    json out = json::array();
    for (const auto& p : profiles) {
        json topics = json::array();
        for (int t = 0; t < kNumTopics; ++t)
            topics.push_back({{"dominant_index", p.topics[t].dominant_index},
                              {"agreement", p.topics[t].agreement},
                              {"decay", p.topics[t].decay}});
        out.push_back({{"name", p.name}, {"share", p.population_share}, {"topics", topics}});
    }
    return out;
}

json corpus_slice(const CorpusConfig& c) {
    return {{"n_articles", c.n_articles},
            {"topic_distribution", c.topic_distribution},
            {"bias_distribution", c.bias_distribution},
            {"token_count", c.token_count},
            {"token_dim", c.token_dim},
            {"signal_to_noise", c.signal_to_noise}};
}

json disentangler_slice(const DisentanglerConfig& d) {
    return {{"model_dim", d.model_dim},
            {"latent_dim", d.latent_dim},
            {"heads", d.heads},
            {"dropout", d.dropout},
            {"lr", d.lr},
            {"batch_size", d.batch_size},
            {"epochs", d.epochs},
            {"epoch_size", d.epoch_size},
            {"pretrain_steps", d.pretrain_steps},
            {"pretrain_pairs", d.pretrain_pairs},
            {"pretrain_articles", d.pretrain_articles},
            {"prob_clamp", d.prob_clamp},
            {"holdout_fraction", d.holdout_fraction},
            {"disc_weight", d.disc_weight},
            {"adv_period", d.adv_period},
            {"disc_weight_decay", d.disc_weight_decay},
            {"skip_pretrain", d.skip_pretrain}};
}

std::uint64_t slice_hash(const json& j) { return fnv1a64(j.dump()); }

std::filesystem::path manifest_path(const std::filesystem::path& artifact) {
    std::filesystem::path p = artifact;
    p += ".manifest.json";
    return p;
}

}  // namespace

Pipeline::Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    profiles_ = cfg_.profile_file.empty() ? default_profiles() : load_profiles(cfg_.profile_file);
    validate_profiles(profiles_);
    out_ = cfg_.out_dir;
    std::filesystem::create_directories(out_);
}

std::vector<std::string> Pipeline::typology_order() const {
    std::vector<std::string> order;
    for (const auto& p : profiles_) order.push_back(p.name);
    return order;
}

std::filesystem::path Pipeline::artifact(const std::string& name) const { return out_ / name; }

std::filesystem::path Pipeline::require(const std::string& name,
                                        const std::string& producer) const {
    std::filesystem::path p = out_ / name;
    if (!std::filesystem::exists(p))
        throw PipelineError("missing artifact " + name + " in " + out_.string() +
                            "; run `cpclab " + producer + "` first");
    return p;
}

Pipeline::StageKey Pipeline::corpus_key() const {
    return {"corpus", mix_seed(cfg_.seed, "corpus"), slice_hash(corpus_slice(cfg_.corpus)), {}};
}

Pipeline::StageKey Pipeline::population_key() const {
    json slice{{"n_users", cfg_.n_users},
               {"history", cfg_.history},
               {"profiles", profiles_to_json(profiles_)}};
    return {"population", mix_seed(cfg_.seed, "population"), slice_hash(slice), {"corpus.txt"}};
}

Pipeline::StageKey Pipeline::landmarks_key() const {
    json slice{{"history", cfg_.history}, {"profiles", profiles_to_json(profiles_)}};
    return {"landmarks", mix_seed(cfg_.seed, "landmarks"), slice_hash(slice),
            {"corpus.txt", "population.json"}};
}

Pipeline::StageKey Pipeline::disentangler_key() const {
    return {"disentangler", mix_seed(cfg_.seed, "disentangler"),
            slice_hash(disentangler_slice(cfg_.disentangler)), {"corpus.txt"}};
}

Pipeline::StageKey Pipeline::cpc_key() const {
    return {"cpc", mix_seed(cfg_.seed, "cpc"), slice_hash(json::object()),
            {"corpus.txt", "population.json", "landmarks.json", "model.bin", "model.json"}};
}

Pipeline::StageKey Pipeline::recommend_key(Method m) const {
    json slice{{"neighbors", cfg_.neighbors},
               {"hops", cfg_.hops},
               {"sgd_steps", cfg_.sgd_steps},
               {"top_r", cfg_.top_r},
               {"n_articles", cfg_.corpus.n_articles}};
    const std::string stage = "recommend/" + method_file_tag(m);
    std::vector<std::string> inputs{"population.json"};
    if (m == Method::Fnpc) inputs.push_back("cpc.csv");
    return {stage, mix_seed(cfg_.seed, stage), slice_hash(slice), std::move(inputs)};
}

Pipeline::StageKey Pipeline::evaluate_key() const {
    json names = json::array();
    for (Method m : cfg_.methods) names.push_back(method_name(m));
    json slice{{"methods", names}, {"profiles", profiles_to_json(profiles_)}};
    std::vector<std::string> inputs{"corpus.txt", "population.json"};
    for (Method m : cfg_.methods) {
        inputs.push_back("graphs_" + method_file_tag(m) + ".csv");
        inputs.push_back("recommendations_" + method_file_tag(m) + ".csv");
    }
    return {"evaluate", mix_seed(cfg_.seed, "evaluate"), slice_hash(slice), std::move(inputs)};
}

bool Pipeline::fresh(const StageKey& key, const std::vector<std::string>& outputs) const {
    json inputs = json::object();
    for (const auto& name : key.inputs) {
        auto h = file_hash(out_ / name);
        if (!h) return false;
        inputs[name] = hex64(*h);
    }
    for (const auto& name : outputs) {
        const std::filesystem::path p = out_ / name;
        auto content = file_hash(p);
        if (!content) return false;
        std::ifstream mf(manifest_path(p));
        if (!mf) return false;
        json m;
        try {
            mf >> m;
        } catch (const json::exception&) {
            return false;
        }
        if (m.value("stage", "") != key.stage) return false;
        if (m.value("seed", "") != hex64(key.seed)) return false;
        if (m.value("config", "") != hex64(key.config)) return false;
        if (!m.contains("inputs") || m["inputs"] != inputs) return false;
        if (m.value("content", "") != hex64(*content)) return false;
    }
    return true;
}

void Pipeline::write_manifests(const StageKey& key,
                               const std::vector<std::string>& outputs) const {
    json inputs = json::object();
    for (const auto& name : key.inputs) {
        auto h = file_hash(out_ / name);
        if (!h) throw PipelineError("stage " + key.stage + ": input " + name + " vanished");
        inputs[name] = hex64(*h);
    }
    for (const auto& name : outputs) {
        const std::filesystem::path p = out_ / name;
        auto content = file_hash(p);
        if (!content) throw PipelineError("stage " + key.stage + ": output " + name + " missing");
        json m{{"stage", key.stage},
               {"seed", hex64(key.seed)},
               {"config", hex64(key.config)},
               {"inputs", inputs},
               {"content", hex64(*content)}};
        std::ofstream f(manifest_path(p));
        if (!f) throw PipelineError("cannot write manifest for " + name);
        f << m.dump(2) << "\n";
    }
}

const std::vector<ArticleRecord>& Pipeline::corpus() {
    if (!corpus_) corpus_ = ingest_articles(require("corpus.txt", "gen-corpus").string());
    return *corpus_;
}

const Population& Pipeline::population() {
    if (!population_) population_ = load_population(require("population.json", "simulate").string());
    return *population_;
}

const std::vector<Landmark>& Pipeline::landmarks() {
    if (!landmarks_)
        landmarks_ = load_landmark_list(require("landmarks.json", "simulate").string());
    return *landmarks_;
}

const Disentangler& Pipeline::model() {
    if (!model_)
        model_ = Disentangler::load(require("model.bin", "train-disentangler").string(),
                                    require("model.json", "train-disentangler").string());
    return *model_;
}

const std::vector<CpcVector>& Pipeline::cpc_vectors() {
    if (!cpcs_) cpcs_ = load_cpc_csv(require("cpc.csv", "build-cpc").string());
    return *cpcs_;
}

const MethodResult& Pipeline::method_result(Method m) {
    auto it = results_.find(m);
    if (it != results_.end()) return it->second;

    const std::string tag = method_file_tag(m);
    const std::string producer = "recommend --method " + std::string(method_name(m));
    const auto recs_path = require("recommendations_" + tag + ".csv", producer);
    const auto graphs_path = require("graphs_" + tag + ".csv", producer);
    const int n_users = static_cast<int>(population().users.size());

    MethodResult r;
    r.method = m;
    r.graphs = load_graph_pair_csv(graphs_path.string(), n_users);
    r.recs.resize(n_users);
    for (int u = 0; u < n_users; ++u) {
        r.recs[u].user_id = u;
        r.recs[u].method = m;
    }
    for (auto& set : load_recommendations_csv(recs_path.string())) {
        if (set.method != m)
            throw PipelineError("recommendations_" + tag + ".csv holds " +
                                method_name(set.method) + " rows");
        if (set.user_id < 0 || set.user_id >= n_users)
            throw PipelineError("recommendations_" + tag + ".csv: user " +
                                std::to_string(set.user_id) + " outside the population");
        r.recs[set.user_id] = std::move(set);
    }
    return results_.emplace(m, std::move(r)).first->second;
}

const MetricsReport& Pipeline::report() {
    if (!report_) report_ = load_report_json(require("report.json", "evaluate").string());
    return *report_;
}

bool Pipeline::gen_corpus() {
    return run_stage("gen-corpus", [&]() -> bool {
        StageKey key = corpus_key();
        if (fresh(key, {"corpus.txt"})) {
            std::cerr << "[gen-corpus] cached\n";
            return false;
        }
        CorpusConfig cc = cfg_.corpus;
        cc.seed = key.seed;
        corpus_ = generate_corpus(cc);
        export_articles(artifact("corpus.txt").string(), *corpus_);
        write_manifests(key, {"corpus.txt"});
        std::cerr << "[gen-corpus] " << corpus_->size() << " articles\n";
        return true;
    });
}

bool Pipeline::simulate() {
    return run_stage("simulate", [&]() -> bool {
        bool did = false;
        StageKey pk = population_key();
        if (!fresh(pk, {"population.json"})) {
            population_ =
                build_population(profiles_, cfg_.n_users, corpus(), cfg_.history, pk.seed);
            save_population(artifact("population.json").string(), *population_);
            write_manifests(pk, {"population.json"});
            did = true;
        }
        StageKey lk = landmarks_key();
        if (!fresh(lk, {"landmarks.json"})) {
            landmarks_ = build_landmarks(profiles_, population(), corpus(), cfg_.history, lk.seed);
            save_landmark_list(artifact("landmarks.json").string(), *landmarks_);
            write_manifests(lk, {"landmarks.json"});
            did = true;
        }
        std::cerr << (did ? "[simulate] population + landmarks\n" : "[simulate] cached\n");
        return did;
    });
}

bool Pipeline::train_disentangler() {
    return run_stage("train-disentangler", [&]() -> bool {
        StageKey key = disentangler_key();
        const std::vector<std::string> outs{"model.bin", "model.json", "training_curve.csv",
                                            "training_eval.json"};
        if (fresh(key, outs)) {
            std::cerr << "[train-disentangler] cached\n";
            return false;
        }
        const auto& articles = corpus();
        DisentanglerConfig dc = cfg_.disentangler;
        dc.seed = key.seed;
        model_.emplace(static_cast<int>(articles.at(0).token_features.cols()), dc);
        TrainReport tr = model_->train(articles);
        model_->save(artifact("model.bin").string(), artifact("model.json").string());

        std::ofstream curve(artifact("training_curve.csv"));
        if (!curve) throw PipelineError("cannot write training_curve.csv");
        curve << "epoch,total,cls,conf,recon,disc\n";
        for (std::size_t e = 0; e < tr.curve.size(); ++e)
            curve << e << "," << format_double(tr.curve[e].total) << ","
                  << format_double(tr.curve[e].cls) << "," << format_double(tr.curve[e].conf)
                  << "," << format_double(tr.curve[e].recon) << ","
                  << format_double(tr.curve[e].disc) << "\n";
        curve.close();

        EvalReport ev = model_->evaluate(articles, tr.holdout);
        json evj{{"acc_p", ev.acc_p},         {"acc_f", ev.acc_f}, {"recon_mse", ev.recon_mse},
                 {"c_variance", ev.c_variance}, {"n", ev.n},       {"holdout", tr.holdout}};
        std::ofstream evf(artifact("training_eval.json"));
        if (!evf) throw PipelineError("cannot write training_eval.json");
        evf << evj.dump(2) << "\n";
        evf.close();

        write_manifests(key, outs);
        std::cerr << "[train-disentangler] acc_p=" << ev.acc_p << " acc_f=" << ev.acc_f
                  << " recon=" << ev.recon_mse << "\n";
        return true;
    });
}

bool Pipeline::build_cpc() {
    return run_stage("build-cpc", [&]() -> bool {
        StageKey key = cpc_key();
        const std::vector<std::string> outs{"cpc.csv", "cpc_landmarks.csv"};
        if (fresh(key, outs)) {
            std::cerr << "[build-cpc] cached\n";
            return false;
        }
        DpTable table = build_dp_table(model(), corpus(), cfg_.threads);
        LandmarkSet ls = build_landmark_set(table, landmarks());
        const Population& pop = population();
        std::vector<CpcVector> cpcs(pop.users.size());
        for (std::size_t u = 0; u < pop.users.size(); ++u) {
            cpcs[u] = cpc_vector(polarized_embedding(table, pop.logs[u]), ls);
            cpcs[u].typology = pop.users[u].typology;
        }
        cpcs_ = std::move(cpcs);
        save_cpc_csv(artifact("cpc.csv").string(), *cpcs_);
        save_landmarks_csv(artifact("cpc_landmarks.csv").string(), ls);
        write_manifests(key, outs);
        std::cerr << "[build-cpc] " << cpcs_->size() << " vectors\n";
        return true;
    });
}

bool Pipeline::recommend(Method m) {
    const std::string tag = method_file_tag(m);
    return run_stage("recommend/" + tag, [&]() -> bool {
        StageKey key = recommend_key(m);
        const std::vector<std::string> outs{"graphs_" + tag + ".csv",
                                            "gcf_weights_" + tag + ".csv",
                                            "recommendations_" + tag + ".csv"};
        if (fresh(key, outs)) {
            std::cerr << "[recommend/" << tag << "] cached\n";
            return false;
        }
        const Population& pop = population();
        RatingMatrix x = build_rating_matrix(pop.logs, cfg_.corpus.n_articles);
        std::optional<Mat> corr;
        if (m == Method::Fnpc) corr = cpc_correlation(cpc_vectors());
        MethodResult r =
            run_method(m, pop.logs, x, corr ? &*corr : nullptr, cfg_.recommender_config());
        save_graph_pair_csv(artifact(outs[0]).string(), r.graphs);
        save_gcf_weights_csv(artifact(outs[1]).string(), r.weights);
        save_recommendations_csv(artifact(outs[2]).string(), r.recs);
        results_[m] = std::move(r);
        write_manifests(key, outs);
        std::cerr << "[recommend/" << tag << "] " << pop.users.size() << " users\n";
        return true;
    });
}

bool Pipeline::recommend_all() {
    bool did = false;
    for (Method m : cfg_.methods) did = recommend(m) || did;
    return did;
}

bool Pipeline::evaluate() {
    return run_stage("evaluate", [&]() -> bool {
        StageKey key = evaluate_key();
        std::vector<std::string> outs{"report.csv", "report.json"};
        for (Method m : cfg_.methods)
            if (m != Method::Nn) outs.push_back("fn_distribution_" + method_file_tag(m) + ".csv");
        if (fresh(key, outs)) {
            std::cerr << "[evaluate] cached\n";
            return false;
        }
        std::vector<std::pair<Method, const MethodResult*>> runs;
        for (Method m : cfg_.methods) runs.emplace_back(m, &method_result(m));
        report_ = build_report(population(), corpus(), runs, typology_order(), cfg_.threads);
        save_report_csv(artifact("report.csv").string(), *report_);
        save_report_json(artifact("report.json").string(), *report_);

        std::vector<std::string> user_typologies;
        for (const auto& u : population().users) user_typologies.push_back(u.typology);
        for (Method m : cfg_.methods) {
            if (m == Method::Nn) continue;
            Mat fd = fn_distribution(method_result(m).graphs.f, user_typologies, typology_order());
            save_fn_distribution_csv(
                artifact("fn_distribution_" + method_file_tag(m) + ".csv").string(), fd,
                typology_order());
        }
        write_manifests(key, outs);
        std::cerr << "[evaluate] report over " << report_->per_user.size() << " users\n";
        return true;
    });
}

MetricsReport Pipeline::run_all() {
    gen_corpus();
    simulate();
    train_disentangler();
    build_cpc();
    recommend_all();
    evaluate();
    return report();
}

MetricsReport run_pipeline(const RunConfig& cfg) {
    Pipeline p(cfg);
    return p.run_all();
}

}  // namespace cpclab
