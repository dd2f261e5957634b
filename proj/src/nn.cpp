#include "pathbench/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint files are little-endian; big-endian hosts are unsupported");

namespace pathbench {

namespace {

MatrixXd uniform_init(int rows, int cols, double bound, Rng& rng) {
    MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
}

} // namespace

LinearProbe LinearProbe::init(int n_classes, int dim, Rng& rng) {
    if (n_classes < 1 || dim < 1)
        throw std::invalid_argument("LinearProbe::init: n_classes and dim must be >= 1");
    LinearProbe m;
    m.W = uniform_init(n_classes, dim, 1.0 / std::sqrt(double(dim)), rng);
    m.b = VectorXd::Zero(n_classes);
    return m;
}

MatrixXd linear_forward(const LinearProbe& m, const Eigen::Ref<const MatrixXd>& x) {
    if (x.cols() != m.W.cols())
        throw std::invalid_argument("linear_forward: dim mismatch (x has " +
                                    std::to_string(x.cols()) + " features, W expects " +
                                    std::to_string(m.W.cols()) + ")");
    return (x * m.W.transpose()).rowwise() + m.b.transpose();
}

LinearGrads linear_backward(const Eigen::Ref<const MatrixXd>& x,
                            const Eigen::Ref<const MatrixXd>& dlogits) {
    if (x.rows() != dlogits.rows())
        throw std::invalid_argument("linear_backward: batch mismatch");
    LinearGrads g;
    g.W = dlogits.transpose() * x;
    g.b = dlogits.colwise().sum().transpose();
    return g;
}

MatrixXd softmax_rows(const Eigen::Ref<const MatrixXd>& logits) {
    MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        p.row(i) = (logits.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

XentResult softmax_xent(const Eigen::Ref<const MatrixXd>& logits, const std::vector<int>& labels) {
    const Eigen::Index batch = logits.rows();
    if (Eigen::Index(labels.size()) != batch)
        throw std::invalid_argument("softmax_xent: label count must equal batch size");
    XentResult r;
    r.dlogits.resize(batch, logits.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < batch; ++i) {
        const int y = labels[std::size_t(i)];
        if (y < 0 || y >= logits.cols())
            throw std::invalid_argument("softmax_xent: label out of range");
        const double mx = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd shifted = logits.row(i).array() - mx;
        const double logsum = std::log(shifted.array().exp().sum());
        loss -= shifted[y] - logsum;
        r.dlogits.row(i) = (shifted.array() - logsum).exp().matrix();
        r.dlogits(i, y) -= 1.0;
    }
    r.loss = loss / double(batch);
    r.dlogits /= double(batch);
    return r;
}

AttentionMIL AttentionMIL::init(int n_classes, int dim, int hidden, Rng& rng) {
    if (n_classes < 1 || dim < 1 || hidden < 1)
        throw std::invalid_argument("AttentionMIL::init: sizes must be >= 1");
    AttentionMIL m;
    const double in_bound = 1.0 / std::sqrt(double(dim));
    m.V = uniform_init(hidden, dim, in_bound, rng);
    m.U = uniform_init(hidden, dim, in_bound, rng);
    m.w = uniform_init(hidden, 1, 1.0 / std::sqrt(double(hidden)), rng);
    m.Wc = uniform_init(n_classes, dim, in_bound, rng);
    m.bc = VectorXd::Zero(n_classes);
    return m;
}

VectorXd attention_pool_forward(const AttentionMIL& m, const Eigen::Ref<const MatrixXd>& bag,
                                AttentionCache* cache) {
    if (bag.rows() < 1) throw std::invalid_argument("attention_pool_forward: empty bag");
    if (bag.cols() != m.V.cols())
        throw std::invalid_argument("attention_pool_forward: dim mismatch");

    const MatrixXd T = (bag * m.V.transpose()).array().tanh().matrix();
    const MatrixXd Sig =
        (1.0 / (1.0 + (-(bag * m.U.transpose()).array()).exp())).matrix();
    const VectorXd e = (T.array() * Sig.array()).matrix() * m.w;

    // softmax over instance scores
    const double mx = e.maxCoeff();
    VectorXd a = (e.array() - mx).exp().matrix();
    a /= a.sum();

    const VectorXd z = bag.transpose() * a;
    VectorXd logits = m.Wc * z + m.bc;
    if (cache) {
        cache->H = bag;
        cache->T = T;
        cache->S = Sig;
        cache->e = e;
        cache->a = a;
        cache->z = z;
    }
    return logits;
}

AttentionGrads attention_pool_backward(const AttentionMIL& m, const AttentionCache& cache,
                                       const Eigen::Ref<const VectorXd>& dlogits) {
    AttentionGrads g;
    g.Wc = dlogits * cache.z.transpose();
    g.bc = dlogits;

    const VectorXd dz = m.Wc.transpose() * dlogits;
    const VectorXd da = cache.H * dz;
    const double dot = cache.a.dot(da);
    const VectorXd de = (cache.a.array() * (da.array() - dot)).matrix();

    const MatrixXd G = (cache.T.array() * cache.S.array()).matrix(); // gated activations
    g.w = G.transpose() * de;
    const MatrixXd dG = de * m.w.transpose(); // n x hidden
    const MatrixXd dPreV =
        (dG.array() * cache.S.array() * (1.0 - cache.T.array().square())).matrix();
    const MatrixXd dPreU =
        (dG.array() * cache.T.array() * cache.S.array() * (1.0 - cache.S.array())).matrix();
    g.V = dPreV.transpose() * cache.H;
    g.U = dPreU.transpose() * cache.H;
    return g;
}

double cosine_lr(const LrSchedule& s, long t) {
    if (s.total_steps < 1) throw std::invalid_argument("cosine_lr: total_steps must be >= 1");
    if (t < 0 || t > s.total_steps)
        throw std::invalid_argument("cosine_lr: step " + std::to_string(t) + " outside [0, " +
                                    std::to_string(s.total_steps) + "]");
    return s.eta_min +
           0.5 * (s.eta0 - s.eta_min) * (1.0 + std::cos(M_PI * double(t) / double(s.total_steps)));
}

namespace {

constexpr double kFdStep = 1e-5;

double rel_err(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// central differences over every entry of `param`, comparing with `analytic`
template <typename Loss>
void check_tensor(MatrixXd& param, const MatrixXd& analytic, const Loss& loss, double& max_err) {
    for (Eigen::Index i = 0; i < param.rows(); ++i) {
        for (Eigen::Index j = 0; j < param.cols(); ++j) {
            const double saved = param(i, j);
            param(i, j) = saved + kFdStep;
            const double up = loss();
            param(i, j) = saved - kFdStep;
            const double down = loss();
            param(i, j) = saved;
            const double numeric = (up - down) / (2.0 * kFdStep);
            max_err = std::max(max_err, rel_err(analytic(i, j), numeric));
        }
    }
}

} // namespace

GradCheckReport grad_check_linear(const LinearProbe& model, const Eigen::Ref<const MatrixXd>& x,
                                  const std::vector<int>& labels, double tol) {
    LinearProbe m = model;
    const XentResult base = softmax_xent(linear_forward(m, x), labels);
    const LinearGrads g = linear_backward(x, base.dlogits);
    auto loss = [&] { return softmax_xent(linear_forward(m, x), labels).loss; };

    GradCheckReport rep;
    check_tensor(m.W, g.W, loss, rep.max_rel_err);
    MatrixXd b_mat = m.b, gb_mat = g.b;
    // reuse the matrix walker for the bias column
    auto loss_b = [&] {
        m.b = b_mat;
        return softmax_xent(linear_forward(m, x), labels).loss;
    };
    check_tensor(b_mat, gb_mat, loss_b, rep.max_rel_err);
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

GradCheckReport grad_check_attention(const AttentionMIL& model,
                                     const Eigen::Ref<const MatrixXd>& bag, int label,
                                     double tol) {
    AttentionMIL m = model;
    const std::vector<int> labels = {label};
    AttentionCache cache;
    const VectorXd logits = attention_pool_forward(m, bag, &cache);
    const XentResult base = softmax_xent(logits.transpose(), labels);
    const AttentionGrads g =
        attention_pool_backward(m, cache, base.dlogits.row(0).transpose());

    auto loss = [&] {
        return softmax_xent(attention_pool_forward(m, bag).transpose(), labels).loss;
    };

    GradCheckReport rep;
    check_tensor(m.V, g.V, loss, rep.max_rel_err);
    check_tensor(m.U, g.U, loss, rep.max_rel_err);
    check_tensor(m.Wc, g.Wc, loss, rep.max_rel_err);
    MatrixXd w_mat = m.w, gw_mat = g.w;
    auto loss_w = [&] {
        m.w = w_mat;
        return softmax_xent(attention_pool_forward(m, bag).transpose(), labels).loss;
    };
    check_tensor(w_mat, gw_mat, loss_w, rep.max_rel_err);
    m.w = w_mat;
    MatrixXd bc_mat = m.bc, gbc_mat = g.bc;
    auto loss_bc = [&] {
        m.bc = bc_mat;
        return softmax_xent(attention_pool_forward(m, bag).transpose(), labels).loss;
    };
    check_tensor(bc_mat, gbc_mat, loss_bc, rep.max_rel_err);
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

namespace {

constexpr char kCkptMagic[4] = {'H', 'C', 'K', 'P'};
constexpr std::uint32_t kCkptVersion = 1;

} // namespace

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::json header;
    header["model"] = ckpt.model;
    header["meta"] = ckpt.meta;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, mat] : ckpt.tensors)
        tensors.push_back({{"name", name}, {"rows", mat.rows()}, {"cols", mat.cols()}});
    header["tensors"] = tensors;
    const std::string head = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    out.write(kCkptMagic, 4);
    const std::uint32_t version = kCkptVersion;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint64_t head_len = head.size();
    out.write(reinterpret_cast<const char*>(&head_len), 8);
    out.write(head.data(), std::streamsize(head.size()));
    for (const auto& [name, mat] : ckpt.tensors) {
        // row-major payload regardless of Eigen's storage order
        for (Eigen::Index i = 0; i < mat.rows(); ++i) {
            for (Eigen::Index j = 0; j < mat.cols(); ++j) {
                const double v = mat(i, j);
                out.write(reinterpret_cast<const char*>(&v), 8);
            }
        }
    }
    if (!out) throw std::runtime_error(path.string() + ": write failed");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path.string() + ": not found");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 16 || std::memcmp(buf.data(), kCkptMagic, 4) != 0)
        throw std::runtime_error(path.string() + ": bad magic");
    std::uint32_t version;
    std::memcpy(&version, buf.data() + 4, 4);
    if (version != kCkptVersion)
        throw std::runtime_error(path.string() + ": version mismatch");
    std::uint64_t head_len;
    std::memcpy(&head_len, buf.data() + 8, 8);
    if (16 + head_len > buf.size())
        throw std::runtime_error(path.string() + ": truncated payload");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.substr(16, head_len));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": corrupt header: " + e.what());
    }
    Checkpoint ckpt;
    ckpt.model = header.at("model").get<std::string>();
    if (header.contains("meta"))
        ckpt.meta = header["meta"].get<std::map<std::string, std::string>>();

    std::size_t off = 16 + head_len;
    for (const auto& t : header.at("tensors")) {
        const auto rows = t.at("rows").get<Eigen::Index>();
        const auto cols = t.at("cols").get<Eigen::Index>();
        if (rows < 0 || cols < 0)
            throw std::runtime_error(path.string() + ": corrupt header: negative shape");
        MatrixXd mat(rows, cols);
        const std::size_t bytes = 8 * std::size_t(rows) * std::size_t(cols);
        if (off + bytes > buf.size())
            throw std::runtime_error(path.string() + ": truncated payload");
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) {
                std::memcpy(&mat(i, j), buf.data() + off, 8);
                off += 8;
            }
        ckpt.tensors.emplace_back(t.at("name").get<std::string>(), std::move(mat));
    }
    if (off != buf.size())
        throw std::runtime_error(path.string() + ": trailing bytes after payload");
    return ckpt;
}

namespace {

const MatrixXd& find_tensor(const Checkpoint& ckpt, const std::string& name) {
    for (const auto& [n, m] : ckpt.tensors)
        if (n == name) return m;
    throw std::runtime_error("checkpoint: missing tensor " + name);
}

} // namespace

Checkpoint to_checkpoint(const LinearProbe& m) {
    Checkpoint c;
    c.model = "linear_probe";
    c.tensors.emplace_back("W", m.W);
    c.tensors.emplace_back("b", m.b);
    return c;
}

Checkpoint to_checkpoint(const AttentionMIL& m) {
    Checkpoint c;
    c.model = "attention_mil";
    c.tensors.emplace_back("V", m.V);
    c.tensors.emplace_back("U", m.U);
    c.tensors.emplace_back("w", m.w);
    c.tensors.emplace_back("Wc", m.Wc);
    c.tensors.emplace_back("bc", m.bc);
    return c;
}

LinearProbe linear_probe_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.model != "linear_probe")
        throw std::runtime_error("checkpoint: model kind is " + ckpt.model +
                                 ", expected linear_probe");
    LinearProbe m;
    m.W = find_tensor(ckpt, "W");
    m.b = find_tensor(ckpt, "b");
    return m;
}

AttentionMIL attention_mil_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.model != "attention_mil")
        throw std::runtime_error("checkpoint: model kind is " + ckpt.model +
                                 ", expected attention_mil");
    AttentionMIL m;
    m.V = find_tensor(ckpt, "V");
    m.U = find_tensor(ckpt, "U");
    m.w = find_tensor(ckpt, "w");
    m.Wc = find_tensor(ckpt, "Wc");
    m.bc = find_tensor(ckpt, "bc");
    return m;
}

} // namespace pathbench
