#include "cpclab/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace cpclab {
namespace nn {

void glorot_init(Mat& w, Rng& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (int j = 0; j < w.cols(); ++j)
        for (int i = 0; i < w.rows(); ++i) w(i, j) = (2.0 * rng.uniform01() - 1.0) * limit;
}

DenseLayer::DenseLayer(int in, int out, Activation a, bool res, Rng& rng)
    : act(a), residual(res) {
    if (in <= 0 || out <= 0) throw ValidationError("layer dims must be positive");
    if (residual && in != out)
        throw ValidationError("residual layer requires matching input/output dims");
    W.resize(out, in);
    glorot_init(W, rng);
    b = Mat::Zero(out, 1);
    zero_grads();
}

void DenseLayer::zero_grads() {
    gW = Mat::Zero(W.rows(), W.cols());
    gb = Mat::Zero(b.rows(), 1);
}

namespace {

Mat softmax_columns(const Mat& z) {
    Mat y(z.rows(), z.cols());
    for (int c = 0; c < z.cols(); ++c) {
        Vec col = z.col(c);
        double mx = col.maxCoeff();
        Vec e = (col.array() - mx).exp();
        y.col(c) = e / e.sum();
    }
    return y;
}

}  // namespace

Mat DenseLayer::infer(const Mat& x) const {
    if (x.rows() != W.cols())
        throw ValidationError("layer forward: input dim " + std::to_string(x.rows()) +
                              " != " + std::to_string(W.cols()));
    Mat z = W * x;
    z.colwise() += b.col(0);
    if (residual) z += x;
    switch (act) {
        case Activation::LeakyRelu:
            return z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
        case Activation::Softmax: return softmax_columns(z);
        case Activation::Linear: break;
    }
    return z;
}

Mat DenseLayer::forward(const Mat& x) {
    if (x.rows() != W.cols())
        throw ValidationError("layer forward: input dim " + std::to_string(x.rows()) +
                              " != " + std::to_string(W.cols()));
    Mat z = W * x;
    z.colwise() += b.col(0);
    if (residual) z += x;
    Mat y;
    switch (act) {
        case Activation::Linear: y = z; break;
        case Activation::LeakyRelu:
            y = z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
            break;
        case Activation::Softmax: y = softmax_columns(z); break;
    }
    x_cache = x;
    z_cache = z;
    y_cache = y;
    has_cache = true;
    return y;
}

Mat DenseLayer::backward(const Mat& dy) {
    if (!has_cache) throw NumericError("layer backward called before forward");
    if (dy.rows() != W.rows() || dy.cols() != x_cache.cols())
        throw ValidationError("layer backward: gradient shape mismatch");

    Mat dz;
    switch (act) {
        case Activation::Linear: dz = dy; break;
        case Activation::LeakyRelu:
            dz = dy.cwiseProduct(
                z_cache.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; }));
            break;
        case Activation::Softmax: {
            dz.resize(dy.rows(), dy.cols());
            for (int c = 0; c < dy.cols(); ++c) {
                Vec y = y_cache.col(c);
                Vec g = dy.col(c);
                double dot = y.dot(g);
                dz.col(c) = y.cwiseProduct(g.array().matrix() - Vec::Constant(y.size(), dot));
            }
            break;
        }
    }

    gW += dz * x_cache.transpose();
    gb.col(0) += dz.rowwise().sum();
    Mat dx = W.transpose() * dz;
    if (residual) dx += dz;
    return dx;
}

DenseNet DenseNet::stack(int in, int hidden, int out, Activation out_act, Rng& rng) {
    DenseNet net;
    net.layers.emplace_back(in, hidden, Activation::LeakyRelu, false, rng);
    net.layers.emplace_back(hidden, hidden, Activation::LeakyRelu, true, rng);
    net.layers.emplace_back(hidden, out, out_act, false, rng);
    return net;
}

Mat DenseNet::forward(const Mat& x) {
    Mat cur = x;
    for (auto& l : layers) cur = l.forward(cur);
    return cur;
}

Mat DenseNet::infer(const Mat& x) const {
    Mat cur = x;
    for (const auto& l : layers) cur = l.infer(cur);
    return cur;
}

Mat DenseNet::backward(const Mat& dy) {
    Mat cur = dy;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) cur = it->backward(cur);
    return cur;
}

void DenseNet::zero_grads() {
    for (auto& l : layers) l.zero_grads();
}

int DenseNet::input_dim() const { return static_cast<int>(layers.front().W.cols()); }
int DenseNet::output_dim() const { return static_cast<int>(layers.back().W.rows()); }

std::vector<Mat*> DenseNet::params() {
    std::vector<Mat*> out;
    for (auto& l : layers) {
        out.push_back(&l.W);
        out.push_back(&l.b);
    }
    return out;
}

std::vector<Mat*> DenseNet::grads() {
    std::vector<Mat*> out;
    for (auto& l : layers) {
        out.push_back(&l.gW);
        out.push_back(&l.gb);
    }
    return out;
}

AttentionPool::AttentionPool(int token_dim, int model_dim_, int heads_, double dropout_, Rng& rng)
    : heads(heads_), model_dim(model_dim_), dropout(dropout_) {
    if (model_dim % heads != 0) throw ValidationError("model_dim must be a multiple of heads");
    if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("dropout must be in [0, 1)");
    Wk.resize(token_dim, model_dim);
    Wv.resize(token_dim, model_dim);
    Wo.resize(model_dim, model_dim);
    glorot_init(Wk, rng);
    glorot_init(Wv, rng);
    glorot_init(Wo, rng);
    q.resize(model_dim, 1);
    glorot_init(q, rng);
    bo = Mat::Zero(model_dim, 1);
    zero_grads();
}

void AttentionPool::zero_grads() {
    gWk = Mat::Zero(Wk.rows(), Wk.cols());
    gWv = Mat::Zero(Wv.rows(), Wv.cols());
    gWo = Mat::Zero(Wo.rows(), Wo.cols());
    gq = Mat::Zero(q.rows(), 1);
    gbo = Mat::Zero(bo.rows(), 1);
}

Vec AttentionPool::forward(const Mat& tokens, Cache& cache, Rng* dropout_rng) const {
    if (tokens.cols() != Wk.rows())
        throw ValidationError("attention forward: token dim " + std::to_string(tokens.cols()) +
                              " != " + std::to_string(Wk.rows()));
    const int T = static_cast<int>(tokens.rows());
    const int dh = model_dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    cache.X = tokens;
    cache.K = tokens * Wk;
    cache.V = tokens * Wv;
    cache.alpha.resize(T, heads);
    cache.mask = Mat::Ones(T, heads);
    cache.concat.resize(model_dim);

    for (int h = 0; h < heads; ++h) {
        Vec scores = cache.K.middleCols(h * dh, dh) * q.col(0).segment(h * dh, dh) * scale;
        double mx = scores.maxCoeff();
        Vec e = (scores.array() - mx).exp();
        Vec alpha = e / e.sum();
        cache.alpha.col(h) = alpha;
        if (dropout_rng && dropout > 0.0) {
            for (int t = 0; t < T; ++t)
                cache.mask(t, h) =
                    dropout_rng->uniform01() < dropout ? 0.0 : 1.0 / (1.0 - dropout);
        }
        Vec kept = alpha.cwiseProduct(cache.mask.col(h));
        cache.concat.segment(h * dh, dh) = cache.V.middleCols(h * dh, dh).transpose() * kept;
    }
    return Wo * cache.concat + bo.col(0);
}

void AttentionPool::backward(const Cache& cache, const Vec& dc) {
    const int dh = model_dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    gWo += dc * cache.concat.transpose();
    gbo.col(0) += dc;
    Vec dconcat = Wo.transpose() * dc;

    Mat dK = Mat::Zero(cache.K.rows(), model_dim);
    Mat dV = Mat::Zero(cache.V.rows(), model_dim);
    for (int h = 0; h < heads; ++h) {
        Vec dhead = dconcat.segment(h * dh, dh);
        Vec alpha = cache.alpha.col(h);
        Vec kept = alpha.cwiseProduct(cache.mask.col(h));
        dV.middleCols(h * dh, dh) = kept * dhead.transpose();
        Vec dkept = cache.V.middleCols(h * dh, dh) * dhead;
        Vec dalpha = dkept.cwiseProduct(cache.mask.col(h));
        double dot = alpha.dot(dalpha);
        Vec ds = alpha.cwiseProduct(dalpha - Vec::Constant(alpha.size(), dot));
        gq.col(0).segment(h * dh, dh) += cache.K.middleCols(h * dh, dh).transpose() * ds * scale;
        dK.middleCols(h * dh, dh) = ds * q.col(0).segment(h * dh, dh).transpose() * scale;
    }
    gWk += cache.X.transpose() * dK;
    gWv += cache.X.transpose() * dV;
}

std::vector<Mat*> AttentionPool::params() { return {&Wk, &Wv, &q, &Wo, &bo}; }
std::vector<Mat*> AttentionPool::grads() { return {&gWk, &gWv, &gq, &gWo, &gbo}; }

void Optimizer::step(const std::vector<Mat*>& params, const std::vector<Mat*>& grads) {
    if (params.size() != grads.size())
        throw ValidationError("optimizer: parameter/gradient count mismatch");
    if (m_.empty() && kind_ == OptimizerKind::Adam) {
        for (const Mat* p : params) {
            m_.push_back(Mat::Zero(p->rows(), p->cols()));
            v_.push_back(Mat::Zero(p->rows(), p->cols()));
        }
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i]->allFinite())
            throw NumericError("non-finite gradient in parameter block " + std::to_string(i));
        if (grads[i]->rows() != params[i]->rows() || grads[i]->cols() != params[i]->cols())
            throw ValidationError("optimizer: gradient shape mismatch in block " +
                                  std::to_string(i));
    }
    ++t_;
    if (kind_ == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) *params[i] -= lr_ * *grads[i];
        return;
    }
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * *grads[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i]->cwiseProduct(*grads[i]);
        Mat mhat = m_[i] / bc1;
        Mat vhat = v_[i] / bc2;
        *params[i] -=
            lr_ * mhat.cwiseQuotient(vhat.cwiseSqrt() + Mat::Constant(vhat.rows(), vhat.cols(), eps_));
    }
}

void write_matrices(std::ostream& out, const std::vector<const Mat*>& mats) {
    for (const Mat* m : mats)
        out.write(reinterpret_cast<const char*>(m->data()),
                  static_cast<std::streamsize>(sizeof(double) * m->size()));
    if (!out) throw PipelineError("parameter serialization failed");
}

void read_matrices(std::istream& in, const std::vector<Mat*>& mats) {
    for (Mat* m : mats) {
        in.read(reinterpret_cast<char*>(m->data()),
                static_cast<std::streamsize>(sizeof(double) * m->size()));
        if (!in) throw PipelineError("parameter deserialization failed: truncated stream");
    }
}

}  // namespace nn
}  // namespace cpclab
