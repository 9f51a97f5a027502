#pragma once

#include "cpclab/cpc.hpp"
#include "cpclab/disentangler.hpp"
#include "cpclab/evaluation.hpp"
#include "cpclab/population.hpp"
#include "cpclab/recommender.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cpclab {

// Full experiment configuration. Every stage seed derives from `seed` via a
// fixed label, so adding a stage never perturbs the ones before it.
struct RunConfig {
    std::uint64_t seed = 0;
    CorpusConfig corpus;        // corpus.seed is derived from `seed`, never read
    std::string profile_file;   // empty -> built-in default profiles
    int n_users = 1000;
    int history = 20;           // interactions simulated per user
    int neighbors = 8;          // retained per graph row
    int hops = 5;
    int sgd_steps = 40;
    int top_r = 10;
    DisentanglerConfig disentangler;  // .seed likewise derived
    std::vector<Method> methods{Method::Nn, Method::FnNn, Method::Fnpc};
    std::string out_dir = "out";
    int threads = 1;  // wall time only; artifact bytes never depend on it

    void validate() const;
    RecommenderConfig recommender_config() const;
};

// JSON object mirroring the field names above ("corpus" and "disentangler" as
// nested objects, "methods" as an array of method names). Absent keys keep
// their defaults; unknown keys are rejected.
RunConfig load_run_config(const std::string& path);

void apply_paper_scale(RunConfig& cfg);  // 1000 users / 4000 articles
void apply_desk_scale(RunConfig& cfg);   // 50 users / 200 articles / 2 epochs

std::string method_file_tag(Method m);  // "nn" / "fnnn" / "fnpc"

// Orchestrates the stages over one output directory. Each stage runner reuses
// the on-disk artifacts when their manifests still match (same stage seed,
// same config slice, same upstream bytes) and recomputes otherwise; it returns
// true when it recomputed. Accessors load artifacts lazily and throw
// PipelineError naming the producing subcommand when one is missing. Stage
// errors are rethrown tagged with the stage name; partial artifacts are left
// in place.
class Pipeline {
public:
    explicit Pipeline(RunConfig cfg);

    const RunConfig& config() const { return cfg_; }
    const std::vector<TypologyProfile>& profiles() const { return profiles_; }
    std::vector<std::string> typology_order() const;
    std::filesystem::path artifact(const std::string& name) const;

    bool gen_corpus();
    bool simulate();  // population + landmark users
    bool train_disentangler();
    bool build_cpc();
    bool recommend(Method m);
    bool recommend_all();
    bool evaluate();

    MetricsReport run_all();

    const std::vector<ArticleRecord>& corpus();
    const Population& population();
    const std::vector<Landmark>& landmarks();
    const Disentangler& model();
    const std::vector<CpcVector>& cpc_vectors();
    const MethodResult& method_result(Method m);
    const MetricsReport& report();

private:
    struct StageKey {
        std::string stage;
        std::uint64_t seed = 0;
        std::uint64_t config = 0;
        std::vector<std::string> inputs;  // artifact names this stage consumes
    };

    StageKey corpus_key() const;
    StageKey population_key() const;
    StageKey landmarks_key() const;
    StageKey disentangler_key() const;
    StageKey cpc_key() const;
    StageKey recommend_key(Method m) const;
    StageKey evaluate_key() const;

    bool fresh(const StageKey& key, const std::vector<std::string>& outputs) const;
    void write_manifests(const StageKey& key, const std::vector<std::string>& outputs) const;
    std::filesystem::path require(const std::string& name, const std::string& producer) const;

    RunConfig cfg_;
    std::vector<TypologyProfile> profiles_;
    std::filesystem::path out_;

    std::optional<std::vector<ArticleRecord>> corpus_;
    std::optional<Population> population_;
    std::optional<std::vector<Landmark>> landmarks_;
    std::optional<Disentangler> model_;
    std::optional<std::vector<CpcVector>> cpcs_;
    std::map<Method, MethodResult> results_;
    std::optional<MetricsReport> report_;
};

// One-shot convenience: all stages in order, returning the final report.
MetricsReport run_pipeline(const RunConfig& cfg);

}  // namespace cpclab
