#pragma once

#include "cpclab/common.hpp"
#include "cpclab/rng.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace cpclab {
namespace nn {

enum class Activation { Linear, LeakyRelu, Softmax };

constexpr double kLeakySlope = 0.01;

// One affine layer, columns of the input are samples. With `residual` set the
// input is added to the pre-activation, which requires a square weight matrix.
struct DenseLayer {
    Mat W;  // out x in
    Mat b;  // out x 1
    Activation act = Activation::Linear;
    bool residual = false;

    Mat gW;
    Mat gb;

    Mat x_cache, z_cache, y_cache;
    bool has_cache = false;

    DenseLayer() = default;
    DenseLayer(int in, int out, Activation a, bool res, Rng& rng);

    Mat forward(const Mat& x);
    Mat infer(const Mat& x) const;  // cache-free, safe to share across threads
    Mat backward(const Mat& dy);    // returns dL/dx, accumulates gW/gb
    void zero_grads();
};

struct DenseNet {
    std::vector<DenseLayer> layers;

    // in -> hidden (leaky) -> hidden (leaky, residual) -> out
    static DenseNet stack(int in, int hidden, int out, Activation out_act, Rng& rng);

    Mat forward(const Mat& x);
    Mat infer(const Mat& x) const;
    Mat backward(const Mat& dy);
    void zero_grads();
    int input_dim() const;
    int output_dim() const;
    std::vector<Mat*> params();
    std::vector<Mat*> grads();
};

// Learned-query multi-head attention pooling a T x d_tok token matrix into a
// single vector of dim model_dim. Dropout acts on the attention weights and is
// live only when a dropout rng is supplied.
struct AttentionPool {
    int heads = 8;
    int model_dim = 256;
    double dropout = 0.1;

    Mat Wk, Wv;  // d_tok x model_dim, heads as column blocks
    Mat q;       // model_dim x 1
    Mat Wo;      // model_dim x model_dim
    Mat bo;      // model_dim x 1

    Mat gWk, gWv, gWo;
    Mat gq, gbo;

    struct Cache {
        Mat X;              // T x d_tok
        Mat K, V;           // T x model_dim
        Mat alpha;          // T x heads, softmax output
        Mat mask;           // T x heads, inverted-dropout scale
        Vec concat;         // model_dim
    };

    AttentionPool() = default;
    AttentionPool(int token_dim, int model_dim_, int heads_, double dropout_, Rng& rng);

    Vec forward(const Mat& tokens, Cache& cache, Rng* dropout_rng = nullptr) const;
    void backward(const Cache& cache, const Vec& dc);
    void zero_grads();
    std::vector<Mat*> params();
    std::vector<Mat*> grads();
};

enum class OptimizerKind { Adam, Sgd };

class Optimizer {
public:
    Optimizer(OptimizerKind kind, double lr, double beta1 = 0.9, double beta2 = 0.999,
              double eps = 1e-8)
        : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Mat*>& params, const std::vector<Mat*>& grads);
    long step_count() const { return t_; }
    void set_learning_rate(double lr) { lr_ = lr; }
    double learning_rate() const { return lr_; }

private:
    OptimizerKind kind_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Mat> m_, v_;
};

void glorot_init(Mat& w, Rng& rng);

// Flat 64-bit little-endian parameter dump; shapes travel separately.
void write_matrices(std::ostream& out, const std::vector<const Mat*>& mats);
void read_matrices(std::istream& in, const std::vector<Mat*>& mats);

}  // namespace nn
}  // namespace cpclab
