#include "cpclab/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct GlobalFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> threads;
    bool paper_scale = false;
    bool desk = false;
};

cpclab::RunConfig resolve_config(const GlobalFlags& g) {
    cpclab::RunConfig cfg;
    if (!g.config_path.empty()) cfg = cpclab::load_run_config(g.config_path);
    if (g.paper_scale) cpclab::apply_paper_scale(cfg);
    if (g.desk) cpclab::apply_desk_scale(cfg);
    if (g.seed) cfg.seed = *g.seed;
    if (g.out_dir) cfg.out_dir = *g.out_dir;
    if (g.threads) cfg.threads = *g.threads;
    cfg.validate();
    return cfg;
}

void print_summary(const cpclab::MetricsReport& report) {
    const auto& g = report.global;
    std::cout << "global (" << g.users << " users):";
    for (cpclab::Method m : report.methods) {
        std::cout << " " << cpclab::method_name(m) << "[ctr=" << g.ctr.at(m).mean
                  << " wd=" << g.wd.at(m).mean << " ne=" << g.ne.at(m).mean
                  << " ab=" << g.ab.at(m).mean << "]";
    }
    std::cout << " pt=" << g.pt.mean << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"political-typology recommendation laboratory"};
    app.require_subcommand(1);

    GlobalFlags g;
    app.add_option("--config", g.config_path, "JSON run configuration");
    std::uint64_t seed_val = 0;
    auto* seed_opt = app.add_option("--seed", seed_val, "override the run seed");
    std::string out_val;
    auto* out_opt = app.add_option("--out", out_val, "override the output directory");
    int threads_val = 1;
    auto* threads_opt = app.add_option("--threads", threads_val, "worker threads (1 = serial)");
    app.add_flag("--paper-scale", g.paper_scale, "1000 users / 4000 articles");
    app.add_flag("--desk", g.desk, "small smoke scale: 50 users / 200 articles / 2 epochs");

    auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus");
    auto* sim = app.add_subcommand("simulate", "simulate the population and landmark users");
    auto* train = app.add_subcommand("train-disentangler", "train the bias disentangler");
    auto* cpc = app.add_subcommand("build-cpc", "build coordinate vectors and landmark table");
    auto* rec = app.add_subcommand("recommend", "train recommenders and emit top-R lists");
    std::string method_arg;
    rec->add_option("--method", method_arg, "NN, FN-NN or FNPC (default: all configured)");
    auto* eval = app.add_subcommand("evaluate", "compute the metrics report");
    auto* all = app.add_subcommand("run-all", "every stage in order");
    auto* exp = app.add_subcommand("export-profiles", "write the built-in typology profiles");
    std::string profile_out = "profiles.json";
    exp->add_option("--to", profile_out, "destination path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (exp->parsed()) {
            cpclab::save_profiles(profile_out, cpclab::default_profiles());
            std::cerr << "wrote " << profile_out << "\n";
            return 0;
        }

        if (*seed_opt) g.seed = seed_val;
        if (*out_opt) g.out_dir = out_val;
        if (*threads_opt) g.threads = threads_val;
        cpclab::Pipeline pipeline(resolve_config(g));

        if (gen->parsed()) {
            pipeline.gen_corpus();
        } else if (sim->parsed()) {
            pipeline.simulate();
        } else if (train->parsed()) {
            pipeline.train_disentangler();
        } else if (cpc->parsed()) {
            pipeline.build_cpc();
        } else if (rec->parsed()) {
            if (method_arg.empty())
                pipeline.recommend_all();
            else
                pipeline.recommend(cpclab::method_from_name(method_arg));
        } else if (eval->parsed()) {
            pipeline.evaluate();
            print_summary(pipeline.report());
        } else if (all->parsed()) {
            print_summary(pipeline.run_all());
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
