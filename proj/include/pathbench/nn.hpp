#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pathbench/rng.hpp"

namespace pathbench {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Linear classifier over frozen features: logits = x W^T + b.
struct LinearProbe {
    MatrixXd W; // n_classes x dim
    VectorXd b; // n_classes

    /// U[-1/sqrt(dim), 1/sqrt(dim)] weights, zero bias, seeded draw order
    /// (W row-major).
    static LinearProbe init(int n_classes, int dim, Rng& rng);
};

MatrixXd linear_forward(const LinearProbe& m, const Eigen::Ref<const MatrixXd>& x);

struct LinearGrads {
    MatrixXd W;
    VectorXd b;
};

/// Gradients for logits = x W^T + b given dlogits.
LinearGrads linear_backward(const Eigen::Ref<const MatrixXd>& x,
                            const Eigen::Ref<const MatrixXd>& dlogits);

struct XentResult {
    double loss = 0.0;
    MatrixXd dlogits; // (softmax - onehot) / batch
};

/// Mean cross-entropy with max-subtracted softmax; labels index columns.
XentResult softmax_xent(const Eigen::Ref<const MatrixXd>& logits, const std::vector<int>& labels);

MatrixXd softmax_rows(const Eigen::Ref<const MatrixXd>& logits);

/// Gated attention pooling head: instance scores
/// e_k = w^T (tanh(V h_k) ⊙ sigmoid(U h_k)), bag embedding z = Σ softmax(e)_k h_k,
/// logits = W_c z + b_c.
struct AttentionMIL {
    MatrixXd V, U; // hidden x dim
    VectorXd w;    // hidden
    MatrixXd Wc;   // n_classes x dim
    VectorXd bc;   // n_classes

    static AttentionMIL init(int n_classes, int dim, int hidden, Rng& rng);
    int hidden() const { return int(w.size()); }
};

struct AttentionCache {
    MatrixXd H;    // n x dim
    MatrixXd T, S; // n x hidden (tanh / sigmoid activations)
    VectorXd e, a; // n (scores, attention weights)
    VectorXd z;    // dim
};

VectorXd attention_pool_forward(const AttentionMIL& m, const Eigen::Ref<const MatrixXd>& bag,
                                AttentionCache* cache = nullptr);

struct AttentionGrads {
    MatrixXd V, U;
    VectorXd w;
    MatrixXd Wc;
    VectorXd bc;
};

AttentionGrads attention_pool_backward(const AttentionMIL& m, const AttentionCache& cache,
                                       const Eigen::Ref<const VectorXd>& dlogits);

struct LrSchedule {
    double eta0 = 0.1;
    double eta_min = 0.0;
    long total_steps = 1;
};

/// eta_min + (eta0 - eta_min) * (1 + cos(pi t / T)) / 2; throws if t > T.
double cosine_lr(const LrSchedule& s, long t);

/// Momentum SGD: buf <- momentum * buf + grad; param <- param - lr * buf.
template <typename Mat>
void sgd_step(Mat& param, const Mat& grad, Mat& buf, double momentum, double lr) {
    buf = momentum * buf + grad;
    param -= lr * buf;
}

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Decoupled-weight-decay Adam; t is the 1-based step count after this update.
template <typename Mat>
void adamw_step(Mat& param, const Mat& grad, Mat& m, Mat& v, long t, const AdamWConfig& cfg,
                double lr) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
    param.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps) +
                           cfg.weight_decay * param.array());
}

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
};

/// Central finite differences (step 1e-5) against the analytic gradients of
/// the mean cross-entropy loss. Relative error uses
/// |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport grad_check_linear(const LinearProbe& m, const Eigen::Ref<const MatrixXd>& x,
                                  const std::vector<int>& labels, double tol);

GradCheckReport grad_check_attention(const AttentionMIL& m, const Eigen::Ref<const MatrixXd>& bag,
                                     int label, double tol);

/// Named-tensor checkpoint: JSON header (model kind, tensor shapes, meta
/// strings) followed by float64 row-major payloads in header order;
/// round-trips bit-exact.
struct Checkpoint {
    std::string model;
    std::vector<std::pair<std::string, MatrixXd>> tensors;
    std::map<std::string, std::string> meta;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const LinearProbe& m);
Checkpoint to_checkpoint(const AttentionMIL& m);
LinearProbe linear_probe_from_checkpoint(const Checkpoint& ckpt);
AttentionMIL attention_mil_from_checkpoint(const Checkpoint& ckpt);

} // namespace pathbench
