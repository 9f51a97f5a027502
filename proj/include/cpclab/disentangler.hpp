#pragma once

#include "cpclab/corpus.hpp"
#include "cpclab/nn.hpp"
#include "cpclab/rng.hpp"

#include <string>
#include <vector>

namespace cpclab {

struct DisentanglerConfig {
    int model_dim = 256;  // pooled embedding dim M
    int latent_dim = 128; // latent dim m; decoders emit M/2 each
    int heads = 8;
    double dropout = 0.1;
    double lr = 0.001;
    int batch_size = 50;
    int epochs = 32;
    int epoch_size = 1000;  // articles visited per epoch
    int pretrain_steps = 200;
    int pretrain_pairs = 32;      // opposing-polarity pairs per pretrain step
    int pretrain_articles = 3000; // subset drawn from the training pool
    double prob_clamp = 1e-6;
    double holdout_fraction = 0.1;
    // weight of the classifier's defensive cross-entropy on the polarity-free
    // half; balances the reciprocal confusion loss pushing the other way
    double disc_weight = 0.75;
    // the confusion/defense pair fires every adv_period-th batch while
    // reconstruction and classification train on all of them, keeping the
    // adversarial tug from swamping the autoencoder
    int adv_period = 1;
    // decoupled weight decay on the classifier keeps its Lipschitz scale — and
    // with it the size of the confusion gradient reaching the free decoder —
    // bounded; argmax accuracy is scale-free, so classification is unhurt
    double disc_weight_decay = 0.05;
    bool skip_pretrain = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Embedding {
    Vec c;   // model_dim
    Vec dp;  // model_dim/2, bias-predictive half
    Vec df;  // model_dim/2, polarity-free half
};

struct EpochStats {
    double total = 0.0, cls = 0.0, conf = 0.0, recon = 0.0;
    double disc = 0.0;  // discriminator cross-entropy on the polarity-free half
};

struct TrainReport {
    std::vector<EpochStats> curve;
    std::vector<int> holdout;     // article indices never trained on
    std::vector<int> train_pool;
};

struct EvalReport {
    double acc_p = 0.0;       // classifier accuracy fed the polarized half
    double acc_f = 0.0;       // classifier accuracy fed the polarity-free half
    double recon_mse = 0.0;   // per-dim reconstruction error
    double c_variance = 0.0;  // per-dim variance of the pooled embedding
    int n = 0;
};

class Disentangler {
public:
    Disentangler(int token_dim, const DisentanglerConfig& cfg);

    Embedding embed(const ArticleRecord& article) const;
    std::vector<Embedding> embed_all(const std::vector<ArticleRecord>& articles,
                                     int threads = 1) const;

    struct LossParts {
        double total = 0.0, cls = 0.0, conf = 0.0, recon = 0.0;
        double disc = 0.0;  // not part of total; classifier-only objective
    };
    // evaluation-only loss (no dropout, no gradient side effects)
    LossParts loss(const std::vector<const ArticleRecord*>& batch);

    // One adversarial training pass. L_class credits classifier/decoder_p/encoder;
    // L_conf credits decoder_f/encoder while the classifier defends with plain
    // cross-entropy on the polarity-free half (discriminator update, no gradient
    // into the generators); L_recon credits encoder and both decoders.
    // All loss components are always reported; the confusion/defense gradients
    // are applied only when adversarial is true. Gradients stay in the nets
    // when opt is null.
    LossParts train_step(const std::vector<const ArticleRecord*>& batch, Rng* dropout_rng,
                         nn::Optimizer* opt, bool adversarial = true);

    // squared-cosine orthogonality loss over (left,right) article pairs laid out
    // flat as [l0 r0 l1 r1 ...]; fills attention+encoder gradients
    double pretrain_pass(const std::vector<const ArticleRecord*>& pairs_flat, Rng* dropout_rng);

    void pretrain(const std::vector<ArticleRecord>& articles, int steps);
    TrainReport train(const std::vector<ArticleRecord>& articles);
    EvalReport evaluate(const std::vector<ArticleRecord>& articles,
                        const std::vector<int>& indices) const;

    void save(const std::string& bin_path, const std::string& manifest_path) const;
    static Disentangler load(const std::string& bin_path, const std::string& manifest_path);

    bool attention_frozen() const { return attention_frozen_; }
    int token_dim() const { return token_dim_; }
    const DisentanglerConfig& config() const { return cfg_; }

    nn::AttentionPool attention;
    nn::DenseNet encoder, decoder_p, decoder_f, classifier;

private:
    DisentanglerConfig cfg_;
    int token_dim_ = 0;
    bool attention_frozen_ = false;
};

// true bias label index for the 3-way classifier
inline int bias_label_index(const ArticleRecord& a) { return a.bias_class + 1; }

}  // namespace cpclab
