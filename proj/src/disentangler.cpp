#include "cpclab/disentangler.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace cpclab {

using nlohmann::json;
using nn::Activation;

void DisentanglerConfig::validate() const {
    if (model_dim <= 0 || model_dim % 2 != 0)
        throw ValidationError("disentangler: model_dim must be positive and even");
    if (latent_dim <= 0) throw ValidationError("disentangler: latent_dim must be positive");
    if (heads <= 0 || model_dim % heads != 0)
        throw ValidationError("disentangler: heads must divide model_dim");
    if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("disentangler: dropout out of [0,1)");
    if (lr <= 0.0) throw ValidationError("disentangler: learning rate must be positive");
    if (batch_size <= 0 || epochs <= 0 || epoch_size <= 0)
        throw ValidationError("disentangler: batch_size/epochs/epoch_size must be positive");
    if (pretrain_steps < 0 || pretrain_pairs <= 0 || pretrain_articles <= 0)
        throw ValidationError("disentangler: invalid pretraining sizes");
    if (prob_clamp <= 0.0 || prob_clamp >= 0.5)
        throw ValidationError("disentangler: prob_clamp out of (0, 0.5)");
    if (holdout_fraction < 0.0 || holdout_fraction > 0.5)
        throw ValidationError("disentangler: holdout_fraction out of [0, 0.5]");
    if (disc_weight < 0.0) throw ValidationError("disentangler: disc_weight must be non-negative");
    if (adv_period <= 0) throw ValidationError("disentangler: adv_period must be positive");
    if (disc_weight_decay < 0.0 || lr * disc_weight_decay >= 1.0)
        throw ValidationError("disentangler: disc_weight_decay out of range");
}

namespace {

int hidden_width(int in, int out) { return (in + out) / 2; }

}  // namespace

Disentangler::Disentangler(int token_dim, const DisentanglerConfig& cfg)
    : cfg_(cfg), token_dim_(token_dim) {
    cfg_.validate();
    if (token_dim <= 0) throw ValidationError("disentangler: token_dim must be positive");
    const int M = cfg_.model_dim;
    const int m = cfg_.latent_dim;
    const int half = M / 2;
    Rng rng(mix_seed(cfg_.seed, "disentangler/init"));
    attention = nn::AttentionPool(token_dim, M, cfg_.heads, cfg_.dropout, rng);
    encoder = nn::DenseNet::stack(M, hidden_width(M, m), m, Activation::Linear, rng);
    decoder_p = nn::DenseNet::stack(m, hidden_width(m, half), half, Activation::Linear, rng);
    decoder_f = nn::DenseNet::stack(m, hidden_width(m, half), half, Activation::Linear, rng);
    classifier = nn::DenseNet::stack(half, hidden_width(half, 3), 3, Activation::Softmax, rng);
}

Embedding Disentangler::embed(const ArticleRecord& article) const {
    nn::AttentionPool::Cache cache;
    Embedding e;
    e.c = attention.forward(article.token_features, cache);
    Mat z = encoder.infer(e.c);
    e.dp = decoder_p.infer(z).col(0);
    e.df = decoder_f.infer(z).col(0);
    return e;
}

std::vector<Embedding> Disentangler::embed_all(const std::vector<ArticleRecord>& articles,
                                               int threads) const {
    std::vector<Embedding> out(articles.size());
    parallel_for(static_cast<int>(articles.size()), threads,
                 [&](int i) { out[i] = embed(articles[i]); });
    return out;
}

namespace {

double clamp_prob(double p, double eps) { return std::min(std::max(p, eps), 1.0 - eps); }

void require_finite(double v, const char* term) {
    if (!std::isfinite(v)) throw NumericError(std::string(term) + " is non-finite");
}

}  // namespace

Disentangler::LossParts Disentangler::loss(const std::vector<const ArticleRecord*>& batch) {
    if (batch.empty()) throw ValidationError("disentangler loss: empty batch");
    const int B = static_cast<int>(batch.size());
    const int M = cfg_.model_dim;
    const double eps = cfg_.prob_clamp;

    Mat C(M, B);
    nn::AttentionPool::Cache cache;
    for (int i = 0; i < B; ++i) C.col(i) = attention.forward(batch[i]->token_features, cache);
    Mat Z = encoder.infer(C);
    Mat P = decoder_p.infer(Z);
    Mat F = decoder_f.infer(Z);
    Mat Yp = classifier.infer(P);
    Mat Yf = classifier.infer(F);

    LossParts parts;
    for (int i = 0; i < B; ++i) {
        int j = bias_label_index(*batch[i]);
        parts.cls += -std::log(std::max(Yp(j, i), eps));
        parts.conf += -1.0 / std::log(clamp_prob(Yf(j, i), eps));
        parts.disc += -cfg_.disc_weight * std::log(std::max(Yf(j, i), eps));
        Vec chat(M);
        chat << P.col(i), F.col(i);
        parts.recon += 0.5 * (C.col(i) - chat).squaredNorm();
    }
    parts.cls /= B;
    parts.conf /= B;
    parts.recon /= B;
    parts.disc /= B;
    require_finite(parts.cls, "L_class");
    require_finite(parts.conf, "L_conf");
    require_finite(parts.recon, "L_recon");
    require_finite(parts.disc, "discriminator cross-entropy");
    parts.total = parts.cls + parts.conf + parts.recon;
    return parts;
}

Disentangler::LossParts Disentangler::train_step(const std::vector<const ArticleRecord*>& batch,
                                                 Rng* dropout_rng, nn::Optimizer* opt,
                                                 bool adversarial) {
    if (batch.empty()) throw ValidationError("disentangler train_step: empty batch");
    const int B = static_cast<int>(batch.size());
    const int M = cfg_.model_dim;
    const int half = M / 2;
    const double eps = cfg_.prob_clamp;

    encoder.zero_grads();
    decoder_p.zero_grads();
    decoder_f.zero_grads();
    classifier.zero_grads();

    Mat C(M, B);
    nn::AttentionPool::Cache cache;  // attention is frozen here; caches are throwaway
    for (int i = 0; i < B; ++i)
        C.col(i) = attention.forward(batch[i]->token_features, cache, dropout_rng);

    Mat Z = encoder.forward(C);
    Mat P = decoder_p.forward(Z);
    Mat F = decoder_f.forward(Z);

    LossParts parts;

    // confusion term first: the generators get the reciprocal-loss gradient,
    // the classifier's credit from that path is discarded
    Mat Yf = classifier.forward(F);
    Mat dYf = Mat::Zero(3, B);
    for (int i = 0; i < B; ++i) {
        int j = bias_label_index(*batch[i]);
        double p = Yf(j, i);
        parts.conf += -1.0 / std::log(clamp_prob(p, eps));
        if (p > eps && p < 1.0 - eps) {
            double lg = std::log(p);
            dYf(j, i) = 1.0 / (p * lg * lg) / B;
        }
    }
    Mat dF_conf = classifier.backward(dYf);
    classifier.zero_grads();

    // discriminator defense: plain cross-entropy on the polarity-free half,
    // applied to the classifier alone (caches from the F forward still valid)
    Mat dYf_ce = Mat::Zero(3, B);
    for (int i = 0; i < B; ++i) {
        int j = bias_label_index(*batch[i]);
        double p = Yf(j, i);
        parts.disc += -cfg_.disc_weight * std::log(std::max(p, eps));
        if (p > eps) dYf_ce(j, i) = -cfg_.disc_weight / p / B;
    }
    if (adversarial)
        classifier.backward(dYf_ce);  // returned input gradient deliberately dropped

    Mat Yp = classifier.forward(P);
    Mat dYp = Mat::Zero(3, B);
    for (int i = 0; i < B; ++i) {
        int j = bias_label_index(*batch[i]);
        double p = Yp(j, i);
        parts.cls += -std::log(std::max(p, eps));
        if (p > eps) dYp(j, i) = -1.0 / p / B;
    }
    Mat dP_class = classifier.backward(dYp);

    Mat Chat(M, B);
    Chat.topRows(half) = P;
    Chat.bottomRows(half) = F;
    Mat diff = Chat - C;
    for (int i = 0; i < B; ++i) parts.recon += 0.5 * diff.col(i).squaredNorm();

    Mat dP = dP_class + diff.topRows(half) / B;
    Mat dF = diff.bottomRows(half) / B;
    if (adversarial) dF += dF_conf;
    Mat dZ = decoder_p.backward(dP) + decoder_f.backward(dF);
    encoder.backward(dZ);

    parts.cls /= B;
    parts.conf /= B;
    parts.recon /= B;
    parts.disc /= B;
    require_finite(parts.cls, "L_class");
    require_finite(parts.conf, "L_conf");
    require_finite(parts.recon, "L_recon");
    require_finite(parts.disc, "discriminator cross-entropy");
    parts.total = parts.cls + parts.conf + parts.recon;

    if (opt) {
        std::vector<Mat*> params, grads;
        for (nn::DenseNet* net : {&encoder, &decoder_p, &decoder_f, &classifier}) {
            for (Mat* p : net->params()) params.push_back(p);
            for (Mat* g : net->grads()) grads.push_back(g);
        }
        opt->step(params, grads);
        if (cfg_.disc_weight_decay > 0.0) {
            double keep = 1.0 - cfg_.lr * cfg_.disc_weight_decay;
            for (auto& layer : classifier.layers) layer.W *= keep;
        }
    }
    return parts;
}

double Disentangler::pretrain_pass(const std::vector<const ArticleRecord*>& pairs_flat,
                                   Rng* dropout_rng) {
    if (pairs_flat.empty() || pairs_flat.size() % 2 != 0)
        throw ValidationError("pretrain_pass: needs a flat nonempty list of pairs");
    const int pairs = static_cast<int>(pairs_flat.size()) / 2;
    const int M = cfg_.model_dim;

    std::vector<nn::AttentionPool::Cache> caches(2 * pairs);
    Mat C(M, 2 * pairs);
    for (int k = 0; k < 2 * pairs; ++k)
        C.col(k) = attention.forward(pairs_flat[k]->token_features, caches[k], dropout_rng);

    attention.zero_grads();
    encoder.zero_grads();
    Mat Z = encoder.forward(C);

    // mean squared cosine between opposing-polarity latents
    double loss = 0.0;
    Mat dZ = Mat::Zero(Z.rows(), Z.cols());
    for (int k = 0; k < pairs; ++k) {
        Vec a = Z.col(2 * k), b = Z.col(2 * k + 1);
        double na = a.norm(), nb = b.norm();
        if (na < 1e-12 || nb < 1e-12) continue;
        double cosab = a.dot(b) / (na * nb);
        loss += cosab * cosab / pairs;
        Vec dcos_da = b / (na * nb) - cosab * a / (na * na);
        Vec dcos_db = a / (na * nb) - cosab * b / (nb * nb);
        double w = 2.0 * cosab / pairs;
        dZ.col(2 * k) += w * dcos_da;
        dZ.col(2 * k + 1) += w * dcos_db;
    }
    Mat dC = encoder.backward(dZ);
    for (int k = 0; k < 2 * pairs; ++k) attention.backward(caches[k], dC.col(k));
    require_finite(loss, "pretraining orthogonality loss");
    return loss;
}

void Disentangler::pretrain(const std::vector<ArticleRecord>& articles, int steps) {
    if (steps < 0) throw ValidationError("pretrain: negative step count");
    std::vector<int> lefts, rights;
    for (std::size_t i = 0; i < articles.size(); ++i) {
        if (articles[i].bias_class < 0) lefts.push_back(static_cast<int>(i));
        if (articles[i].bias_class > 0) rights.push_back(static_cast<int>(i));
    }
    if (lefts.empty() || rights.empty())
        throw ValidationError("pretrain: needs articles of both polarities");

    Rng pair_rng(mix_seed(cfg_.seed, "disentangler/pretrain/pairs"));
    Rng dropout_rng(mix_seed(cfg_.seed, "disentangler/pretrain/dropout"));
    nn::Optimizer opt(nn::OptimizerKind::Adam, cfg_.lr);

    for (int step = 0; step < steps; ++step) {
        std::vector<const ArticleRecord*> flat;
        flat.reserve(2 * cfg_.pretrain_pairs);
        for (int k = 0; k < cfg_.pretrain_pairs; ++k) {
            flat.push_back(&articles[lefts[pair_rng.uniform_int(static_cast<int>(lefts.size()))]]);
            flat.push_back(&articles[rights[pair_rng.uniform_int(static_cast<int>(rights.size()))]]);
        }
        pretrain_pass(flat, cfg_.dropout > 0.0 ? &dropout_rng : nullptr);

        std::vector<Mat*> params = attention.params(), grads = attention.grads();
        for (Mat* p : encoder.params()) params.push_back(p);
        for (Mat* g : encoder.grads()) grads.push_back(g);
        opt.step(params, grads);
    }
    attention_frozen_ = true;
}

TrainReport Disentangler::train(const std::vector<ArticleRecord>& articles) {
    if (articles.empty()) throw ValidationError("disentangler train: empty corpus");

    TrainReport report;
    const int N = static_cast<int>(articles.size());
    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    Rng holdout_rng(mix_seed(cfg_.seed, "disentangler/holdout"));
    holdout_rng.shuffle(order);
    int n_holdout = static_cast<int>(std::lround(cfg_.holdout_fraction * N));
    report.holdout.assign(order.begin(), order.begin() + n_holdout);
    report.train_pool.assign(order.begin() + n_holdout, order.end());
    if (report.train_pool.empty()) throw ValidationError("disentangler train: empty training pool");

    if (!attention_frozen_ && !cfg_.skip_pretrain) {
        std::vector<ArticleRecord> subset;
        int take = std::min<int>(cfg_.pretrain_articles, static_cast<int>(report.train_pool.size()));
        subset.reserve(take);
        for (int i = 0; i < take; ++i) subset.push_back(articles[report.train_pool[i]]);
        pretrain(subset, cfg_.pretrain_steps);
    }
    attention_frozen_ = true;

    Rng shuffle_rng(mix_seed(cfg_.seed, "disentangler/train/shuffle"));
    nn::Optimizer opt(nn::OptimizerKind::Adam, cfg_.lr);

    std::vector<int> cycle = report.train_pool;
    shuffle_rng.shuffle(cycle);
    std::size_t cursor = 0;
    auto next_article = [&]() {
        if (cursor == cycle.size()) {
            shuffle_rng.shuffle(cycle);
            cursor = 0;
        }
        return cycle[cursor++];
    };

    int divergent_streak = 0;
    double initial_total = 0.0;
    long step_index = 0;
    const int epoch_size = std::min<int>(cfg_.epoch_size, static_cast<int>(cycle.size()));
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        EpochStats stats;
        int done = 0;
        while (done < epoch_size) {
            int b = std::min(cfg_.batch_size, epoch_size - done);
            std::vector<const ArticleRecord*> batch;
            batch.reserve(b);
            for (int i = 0; i < b; ++i) batch.push_back(&articles[next_article()]);
            bool adversarial = step_index++ % cfg_.adv_period == 0;
            // attention is frozen here, so it runs in inference mode: no dropout
            LossParts parts = train_step(batch, nullptr, &opt, adversarial);
            stats.total += parts.total * b;
            stats.cls += parts.cls * b;
            stats.conf += parts.conf * b;
            stats.recon += parts.recon * b;
            stats.disc += parts.disc * b;
            done += b;
        }
        stats.total /= epoch_size;
        stats.cls /= epoch_size;
        stats.conf /= epoch_size;
        stats.recon /= epoch_size;
        stats.disc /= epoch_size;
        report.curve.push_back(stats);

        if (epoch == 0) initial_total = stats.total;
        divergent_streak = stats.total > 10.0 * initial_total ? divergent_streak + 1 : 0;
        if (divergent_streak >= 3) {
            std::ostringstream msg;
            msg << "disentangler training diverged; loss curve:";
            for (std::size_t e = 0; e < report.curve.size(); ++e)
                msg << " e" << e << "=" << format_double(report.curve[e].total);
            throw NumericError(msg.str());
        }
    }
    return report;
}

EvalReport Disentangler::evaluate(const std::vector<ArticleRecord>& articles,
                                  const std::vector<int>& indices) const {
    if (indices.empty()) throw ValidationError("disentangler evaluate: empty index set");
    EvalReport rep;
    rep.n = static_cast<int>(indices.size());
    const int M = cfg_.model_dim;

    Mat C(M, rep.n);
    int correct_p = 0, correct_f = 0;
    double sq_err = 0.0;
    for (int k = 0; k < rep.n; ++k) {
        const ArticleRecord& a = articles[indices[k]];
        Embedding e = embed(a);
        C.col(k) = e.c;
        Vec chat(M);
        chat << e.dp, e.df;
        sq_err += (e.c - chat).squaredNorm();

        Mat yp = classifier.infer(e.dp);
        Mat yf = classifier.infer(e.df);
        int pred_p = 0, pred_f = 0;
        yp.col(0).maxCoeff(&pred_p);
        yf.col(0).maxCoeff(&pred_f);
        int truth = bias_label_index(a);
        if (pred_p == truth) ++correct_p;
        if (pred_f == truth) ++correct_f;
    }
    rep.acc_p = static_cast<double>(correct_p) / rep.n;
    rep.acc_f = static_cast<double>(correct_f) / rep.n;
    rep.recon_mse = sq_err / (static_cast<double>(rep.n) * M);

    Vec mean = C.rowwise().mean();
    double var = 0.0;
    for (int k = 0; k < rep.n; ++k) var += (C.col(k) - mean).squaredNorm();
    rep.c_variance = var / (static_cast<double>(rep.n) * M);
    return rep;
}

void Disentangler::save(const std::string& bin_path, const std::string& manifest_path) const {
    json manifest;
    manifest["token_dim"] = token_dim_;
    manifest["attention_frozen"] = attention_frozen_;
    manifest["config"] = {{"model_dim", cfg_.model_dim},
                          {"latent_dim", cfg_.latent_dim},
                          {"heads", cfg_.heads},
                          {"dropout", cfg_.dropout},
                          {"lr", cfg_.lr},
                          {"batch_size", cfg_.batch_size},
                          {"epochs", cfg_.epochs},
                          {"epoch_size", cfg_.epoch_size},
                          {"pretrain_steps", cfg_.pretrain_steps},
                          {"pretrain_pairs", cfg_.pretrain_pairs},
                          {"pretrain_articles", cfg_.pretrain_articles},
                          {"prob_clamp", cfg_.prob_clamp},
                          {"holdout_fraction", cfg_.holdout_fraction},
                          {"disc_weight", cfg_.disc_weight},
                          {"adv_period", cfg_.adv_period},
                          {"disc_weight_decay", cfg_.disc_weight_decay},
                          {"skip_pretrain", cfg_.skip_pretrain},
                          {"seed", cfg_.seed}};

    Disentangler* self = const_cast<Disentangler*>(this);
    std::vector<const Mat*> mats;
    json shapes = json::array();
    auto add = [&](const std::string& name, std::vector<Mat*> params) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            mats.push_back(params[i]);
            shapes.push_back({{"name", name + "/" + std::to_string(i)},
                              {"rows", params[i]->rows()},
                              {"cols", params[i]->cols()}});
        }
    };
    add("attention", self->attention.params());
    add("encoder", self->encoder.params());
    add("decoder_p", self->decoder_p.params());
    add("decoder_f", self->decoder_f.params());
    add("classifier", self->classifier.params());
    manifest["matrices"] = shapes;

    std::ofstream mf(manifest_path);
    if (!mf) throw PipelineError("cannot write model manifest: " + manifest_path);
    mf << manifest.dump(2) << "\n";

    std::ofstream bf(bin_path, std::ios::binary);
    if (!bf) throw PipelineError("cannot write model parameters: " + bin_path);
    nn::write_matrices(bf, mats);
}

Disentangler Disentangler::load(const std::string& bin_path, const std::string& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw PipelineError("cannot open model manifest: " + manifest_path);
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw PipelineError(std::string("model manifest parse error: ") + e.what());
    }

    DisentanglerConfig cfg;
    try {
        const json& c = manifest.at("config");
        cfg.model_dim = c.at("model_dim").get<int>();
        cfg.latent_dim = c.at("latent_dim").get<int>();
        cfg.heads = c.at("heads").get<int>();
        cfg.dropout = c.at("dropout").get<double>();
        cfg.lr = c.at("lr").get<double>();
        cfg.batch_size = c.at("batch_size").get<int>();
        cfg.epochs = c.at("epochs").get<int>();
        cfg.epoch_size = c.at("epoch_size").get<int>();
        cfg.pretrain_steps = c.at("pretrain_steps").get<int>();
        cfg.pretrain_pairs = c.at("pretrain_pairs").get<int>();
        cfg.pretrain_articles = c.at("pretrain_articles").get<int>();
        cfg.prob_clamp = c.at("prob_clamp").get<double>();
        cfg.holdout_fraction = c.at("holdout_fraction").get<double>();
        cfg.disc_weight = c.at("disc_weight").get<double>();
        cfg.adv_period = c.at("adv_period").get<int>();
        cfg.disc_weight_decay = c.at("disc_weight_decay").get<double>();
        cfg.skip_pretrain = c.at("skip_pretrain").get<bool>();
        cfg.seed = c.at("seed").get<std::uint64_t>();

        Disentangler model(manifest.at("token_dim").get<int>(), cfg);
        model.attention_frozen_ = manifest.at("attention_frozen").get<bool>();

        std::vector<Mat*> mats;
        for (nn::AttentionPool* p : {&model.attention})
            for (Mat* m : p->params()) mats.push_back(m);
        for (nn::DenseNet* net :
             {&model.encoder, &model.decoder_p, &model.decoder_f, &model.classifier})
            for (Mat* m : net->params()) mats.push_back(m);

        const json& shapes = manifest.at("matrices");
        if (shapes.size() != mats.size())
            throw PipelineError("model manifest matrix count mismatch");
        for (std::size_t i = 0; i < mats.size(); ++i) {
            if (shapes.at(i).at("rows").get<long>() != mats[i]->rows() ||
                shapes.at(i).at("cols").get<long>() != mats[i]->cols())
                throw PipelineError("model manifest shape mismatch at block " + std::to_string(i));
        }

        std::ifstream bf(bin_path, std::ios::binary);
        if (!bf) throw PipelineError("cannot open model parameters: " + bin_path);
        nn::read_matrices(bf, mats);
        return model;
    } catch (const json::exception& e) {
        throw PipelineError(std::string("model manifest field error: ") + e.what());
    }
}

}  // namespace cpclab
