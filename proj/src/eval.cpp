#include "pathbench/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "pathbench/fsutil.hpp"
#include "pathbench/rng.hpp"

namespace pathbench {

namespace {

void check_ratios(const std::array<double, 3>& ratios) {
    double sum = 0.0;
    for (double r : ratios) {
        if (r < 0.0) throw std::invalid_argument("split: ratios must be nonnegative");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split: ratios must sum to 1");
}

// floor-then-distribute: floor(n*r) per bucket, leftovers to train then val
std::array<std::size_t, 3> bucket_sizes(std::size_t n, const std::array<double, 3>& ratios) {
    std::array<std::size_t, 3> sizes;
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        sizes[i] = std::size_t(std::floor(double(n) * ratios[i]));
        assigned += sizes[i];
    }
    std::size_t leftover = n - assigned;
    for (int i = 0; i < 3 && leftover > 0; ++i) {
        ++sizes[i];
        --leftover;
    }
    return sizes;
}

void split_indices(std::vector<std::size_t>& pool, const std::array<double, 3>& ratios, Rng& rng,
                   Split& out) {
    rng.shuffle(pool);
    const auto sizes = bucket_sizes(pool.size(), ratios);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < sizes[0]; ++i) out.train.push_back(pool[pos++]);
    for (std::size_t i = 0; i < sizes[1]; ++i) out.val.push_back(pool[pos++]);
    for (std::size_t i = 0; i < sizes[2]; ++i) out.test.push_back(pool[pos++]);
}

} // namespace

Split split_dataset(const std::vector<int>& labels, std::array<double, 3> ratios,
                    std::uint64_t seed, bool stratify) {
    if (labels.empty()) throw std::invalid_argument("split: empty dataset");
    check_ratios(ratios);

    Split split;
    split.seed = seed;
    split.ratios = ratios;
    Rng rng(seed);
    if (!stratify) {
        std::vector<std::size_t> pool(labels.size());
        std::iota(pool.begin(), pool.end(), 0);
        split_indices(pool, ratios, rng, split);
        return split;
    }

    const int n_classes = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::vector<std::size_t>> per_class;
    per_class.resize(std::size_t(n_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) throw std::invalid_argument("split: negative label");
        per_class[std::size_t(labels[i])].push_back(i);
    }
    for (int c = 0; c < n_classes; ++c) {
        if (per_class[std::size_t(c)].empty())
            throw std::invalid_argument("split: class " + std::to_string(c) +
                                        " has no items under stratification");
        split_indices(per_class[std::size_t(c)], ratios, rng, split);
    }
    return split;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_val(std::size_t n,
                                                                          double frac,
                                                                          std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("holdout_val: need at least 2 items");
    if (frac <= 0.0 || frac >= 1.0)
        throw std::invalid_argument("holdout_val: frac must be in (0, 1)");
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    Rng rng(seed);
    rng.shuffle(pool);
    const std::size_t n_val = std::max<std::size_t>(1, std::size_t(std::floor(double(n) * frac)));
    std::vector<std::size_t> val(pool.begin(), pool.begin() + std::ptrdiff_t(n_val));
    std::vector<std::size_t> train(pool.begin() + std::ptrdiff_t(n_val), pool.end());
    return {train, val};
}

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
    if (preds.empty()) throw std::invalid_argument("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
    return double(hits) / double(preds.size());
}

double auc_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc: length mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int y : labels) (y != 0 ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks over tie groups; rank sum of positives gives U
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (double(i + 1) + double(j)) / 2.0; // 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
        i = j;
    }
    const double u = rank_sum_pos - double(n_pos) * double(n_pos + 1) / 2.0;
    return u / (double(n_pos) * double(n_neg));
}

std::pair<double, std::vector<double>> auc_macro_ovr(const Eigen::Ref<const MatrixXd>& probs,
                                                     const std::vector<int>& labels) {
    if (probs.rows() != Eigen::Index(labels.size()))
        throw std::invalid_argument("auc_macro_ovr: row count mismatch");
    const int n_classes = int(probs.cols());
    std::vector<double> per_class;
    per_class.resize(std::size_t(n_classes));
    std::vector<double> scores(labels.size());
    std::vector<int> binary(labels.size());
    for (int c = 0; c < n_classes; ++c) {
        bool present = false;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            scores[i] = probs(Eigen::Index(i), c);
            binary[i] = labels[i] == c ? 1 : 0;
            present |= binary[i] != 0;
        }
        if (!present)
            throw std::invalid_argument("auc_macro_ovr: class " + std::to_string(c) +
                                        " missing from labels");
        per_class[std::size_t(c)] = auc_binary(scores, binary);
    }
    const double macro =
        std::accumulate(per_class.begin(), per_class.end(), 0.0) / double(n_classes);
    return {macro, per_class};
}

namespace {

std::string format_metric(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%#.6g", v);
    return buf;
}

void validate_report(const EvalReport& r) {
    if (r.protocol != "linear_probe" && r.protocol != "mil")
        throw std::invalid_argument("report: unknown protocol '" + r.protocol + "'");
    if (r.metrics.empty()) throw std::invalid_argument("report: missing metric map");
    for (const auto& [name, v] : r.metrics)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("report: metric " + name + " outside [0,1]");
    for (const auto& [name, v] : r.per_class_auc)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("report: per-class AUC " + name + " outside [0,1]");
    if (r.best_epoch < 1) throw std::invalid_argument("report: best_epoch must be >= 1");
    if (r.split_sizes.empty()) throw std::invalid_argument("report: missing split sizes");
}

} // namespace

std::string render_report(const EvalReport& r) {
    validate_report(r);
    // hand-rolled emission: std::map keeps keys sorted, floats go through
    // format_metric, so bytes are reproducible
    std::string out = "{\n";
    out += "  \"best_epoch\": " + std::to_string(r.best_epoch) + ",\n";
    out += "  \"config_hash\": \"" + r.config_hash + "\",\n";
    out += "  \"metrics\": {";
    bool first = true;
    for (const auto& [name, v] : r.metrics) {
        out += first ? "\n" : ",\n";
        out += "    \"" + name + "\": " + format_metric(v);
        first = false;
    }
    out += "\n  },\n";
    if (!r.per_class_auc.empty()) {
        out += "  \"per_class_auc\": {";
        first = true;
        for (const auto& [name, v] : r.per_class_auc) {
            out += first ? "\n" : ",\n";
            out += "    \"" + name + "\": " + format_metric(v);
            first = false;
        }
        out += "\n  },\n";
    }
    out += "  \"protocol\": \"" + r.protocol + "\",\n";
    out += "  \"seed\": " + std::to_string(r.seed) + ",\n";
    out += "  \"split_sizes\": {";
    first = true;
    for (const auto& [name, v] : r.split_sizes) {
        out += first ? "\n" : ",\n";
        out += "    \"" + name + "\": " + std::to_string(v);
        first = false;
    }
    out += "\n  }\n}\n";
    return out;
}

void emit_report(const EvalReport& report, const std::filesystem::path& path) {
    atomic_write_file(path, render_report(report));
}

EvalReport parse_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path.string() + ": not found");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": invalid report JSON: " + e.what());
    }
    EvalReport r;
    try {
        r.protocol = j.at("protocol").get<std::string>();
        r.best_epoch = j.at("best_epoch").get<int>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.config_hash = j.at("config_hash").get<std::string>();
        r.metrics = j.at("metrics").get<std::map<std::string, double>>();
        r.split_sizes = j.at("split_sizes").get<std::map<std::string, int>>();
        if (j.contains("per_class_auc"))
            r.per_class_auc = j["per_class_auc"].get<std::map<std::string, double>>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": invalid report schema: " + e.what());
    }
    validate_report(r);
    return r;
}

namespace {

std::vector<int> predict_classes(const MatrixXd& logits) {
    std::vector<int> preds(std::size_t(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index arg;
        logits.row(i).maxCoeff(&arg);
        preds[std::size_t(i)] = int(arg);
    }
    return preds;
}

void check_probe_data(const ProbeData& d, const char* name, int n_classes) {
    if (d.X.rows() == 0) throw std::invalid_argument(std::string("probe: empty ") + name + " split");
    if (d.X.rows() != Eigen::Index(d.y.size()))
        throw std::invalid_argument(std::string("probe: ") + name + " label count mismatch");
    for (int y : d.y)
        if (y < 0 || y >= n_classes)
            throw std::invalid_argument(std::string("probe: ") + name + " label out of range");
}

} // namespace

std::pair<LinearProbe, EvalReport> train_linear_probe(const ProbeData& train,
                                                      const ProbeData& val,
                                                      const ProbeData& test,
                                                      const ProbeConfig& cfg, int n_classes,
                                                      std::vector<double>* epoch_train_loss) {
    check_probe_data(train, "train", n_classes);
    check_probe_data(val, "val", n_classes);
    check_probe_data(test, "test", n_classes);
    if (val.X.cols() != train.X.cols() || test.X.cols() != train.X.cols())
        throw std::invalid_argument("probe: dim mismatch across splits");
    if (cfg.epochs < 1 || cfg.batch_size < 1)
        throw std::invalid_argument("probe: epochs and batch_size must be >= 1");

    const int dim = int(train.X.cols());
    Rng rng(cfg.seed);
    LinearProbe model = LinearProbe::init(n_classes, dim, rng);
    MatrixXd buf_w = MatrixXd::Zero(n_classes, dim);
    VectorXd buf_b = VectorXd::Zero(n_classes);

    const std::size_t n_train = std::size_t(train.X.rows());
    const long steps_per_epoch = long((n_train + std::size_t(cfg.batch_size) - 1) /
                                      std::size_t(cfg.batch_size));
    const LrSchedule schedule{cfg.lr0, cfg.eta_min, cfg.epochs * steps_per_epoch};

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);

    LinearProbe best = model;
    double best_val = -1.0;
    int best_epoch = 0;
    long step = 0;

    if (epoch_train_loss) epoch_train_loss->clear();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        long batches = 0;
        for (std::size_t start = 0; start < n_train; start += std::size_t(cfg.batch_size)) {
            const std::size_t count = std::min(std::size_t(cfg.batch_size), n_train - start);
            MatrixXd xb(Eigen::Index(count), dim);
            std::vector<int> yb(count);
            for (std::size_t i = 0; i < count; ++i) {
                xb.row(Eigen::Index(i)) = train.X.row(Eigen::Index(order[start + i]));
                yb[i] = train.y[order[start + i]];
            }
            const double lr = cosine_lr(schedule, step++);
            const XentResult res = softmax_xent(linear_forward(model, xb), yb);
            loss_sum += res.loss;
            ++batches;
            LinearGrads g = linear_backward(xb, res.dlogits);
            if (cfg.weight_decay > 0.0) {
                g.W += cfg.weight_decay * model.W;
                g.b += cfg.weight_decay * model.b;
            }
            sgd_step(model.W, g.W, buf_w, cfg.momentum, lr);
            sgd_step(model.b, g.b, buf_b, cfg.momentum, lr);
        }
        if (epoch_train_loss) epoch_train_loss->push_back(loss_sum / double(batches));
        const double val_acc = accuracy(predict_classes(linear_forward(model, val.X)), val.y);
        if (val_acc > best_val) {
            best_val = val_acc;
            best = model;
            best_epoch = epoch;
        }
    }

    const double test_acc = accuracy(predict_classes(linear_forward(best, test.X)), test.y);
    EvalReport report;
    report.protocol = "linear_probe";
    report.metrics["top1_accuracy"] = test_acc;
    report.metrics["val_top1_accuracy"] = best_val;
    report.best_epoch = best_epoch;
    report.split_sizes = {{"train", int(train.X.rows())},
                          {"val", int(val.X.rows())},
                          {"test", int(test.X.rows())}};
    report.seed = cfg.seed;
    return {best, report};
}

namespace {

void check_bags(const std::vector<Bag>& bags, const char* name, int n_classes, Eigen::Index dim) {
    if (bags.empty()) throw std::invalid_argument(std::string("mil: empty ") + name + " split");
    for (const auto& bag : bags) {
        if (bag.instances.rows() < 1)
            throw std::invalid_argument("mil: bag " + bag.slide_id + " has no instances");
        if (bag.instances.cols() != dim)
            throw std::invalid_argument("mil: bag " + bag.slide_id + " dim mismatch");
        if (bag.label < 0 || bag.label >= n_classes)
            throw std::invalid_argument("mil: bag " + bag.slide_id + " label out of range");
    }
}

// per-bag class probabilities, rows aligned with `bags`
MatrixXd mil_probs(const AttentionMIL& model, const std::vector<Bag>& bags) {
    MatrixXd probs(Eigen::Index(bags.size()), model.Wc.rows());
    for (std::size_t i = 0; i < bags.size(); ++i) {
        const VectorXd logits = attention_pool_forward(model, bags[i].instances);
        probs.row(Eigen::Index(i)) = softmax_rows(logits.transpose());
    }
    return probs;
}

std::vector<int> bag_labels(const std::vector<Bag>& bags) {
    std::vector<int> y(bags.size());
    for (std::size_t i = 0; i < bags.size(); ++i) y[i] = bags[i].label;
    return y;
}

} // namespace

std::pair<AttentionMIL, EvalReport> train_mil(const std::vector<Bag>& bags_train,
                                              const std::vector<Bag>& bags_val,
                                              const std::vector<Bag>& bags_test,
                                              const MilConfig& cfg, int n_classes) {
    if (n_classes < 2) throw std::invalid_argument("mil: need at least 2 classes");
    if (bags_train.empty()) throw std::invalid_argument("mil: empty train split");
    const Eigen::Index dim = bags_train.front().instances.cols();
    check_bags(bags_train, "train", n_classes, dim);
    check_bags(bags_val, "val", n_classes, dim);
    check_bags(bags_test, "test", n_classes, dim);
    {
        std::set<int> train_classes;
        for (const auto& b : bags_train) train_classes.insert(b.label);
        if (train_classes.size() < 2)
            throw std::invalid_argument("mil: single-class training set");
    }

    Rng rng(cfg.seed);
    AttentionMIL model = AttentionMIL::init(n_classes, int(dim), cfg.hidden, rng);
    AttentionMIL slots_m = model, slots_v = model; // same shapes, zeroed below
    slots_m.V.setZero(); slots_m.U.setZero(); slots_m.w.setZero();
    slots_m.Wc.setZero(); slots_m.bc.setZero();
    slots_v = slots_m;

    std::vector<std::size_t> order(bags_train.size());
    std::iota(order.begin(), order.end(), 0);

    AttentionMIL best = model;
    double best_val = -1.0;
    int best_epoch = 0;
    long t = 0;

    const std::vector<int> val_y = bag_labels(bags_val);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t idx : order) {
            const Bag& bag = bags_train[idx];
            AttentionCache cache;
            const VectorXd logits = attention_pool_forward(model, bag.instances, &cache);
            const XentResult res = softmax_xent(logits.transpose(), {bag.label});
            const AttentionGrads g =
                attention_pool_backward(model, cache, res.dlogits.row(0).transpose());
            ++t;
            adamw_step(model.V, g.V, slots_m.V, slots_v.V, t, cfg.adamw, cfg.lr);
            adamw_step(model.U, g.U, slots_m.U, slots_v.U, t, cfg.adamw, cfg.lr);
            adamw_step(model.w, g.w, slots_m.w, slots_v.w, t, cfg.adamw, cfg.lr);
            adamw_step(model.Wc, g.Wc, slots_m.Wc, slots_v.Wc, t, cfg.adamw, cfg.lr);
            adamw_step(model.bc, g.bc, slots_m.bc, slots_v.bc, t, cfg.adamw, cfg.lr);
        }
        const auto [val_macro, val_per_class] = auc_macro_ovr(mil_probs(model, bags_val), val_y);
        if (val_macro > best_val) {
            best_val = val_macro;
            best = model;
            best_epoch = epoch;
        }
    }

    const std::vector<int> test_y = bag_labels(bags_test);
    const MatrixXd test_probs = mil_probs(best, bags_test);
    const auto [macro, per_class] = auc_macro_ovr(test_probs, test_y);
    const double test_acc = accuracy(predict_classes(test_probs), test_y);

    EvalReport report;
    report.protocol = "mil";
    report.metrics["macro_auc"] = macro;
    report.metrics["accuracy"] = test_acc;
    report.metrics["val_macro_auc"] = best_val;
    if (!cfg.class_names.empty() && int(cfg.class_names.size()) != n_classes)
        throw std::invalid_argument("mil: class_names size must match n_classes");
    for (int c = 0; c < n_classes; ++c) {
        const std::string key = cfg.class_names.empty() ? "class_" + std::to_string(c)
                                                        : cfg.class_names[std::size_t(c)];
        report.per_class_auc[key] = per_class[std::size_t(c)];
    }
    report.best_epoch = best_epoch;
    report.split_sizes = {{"train", int(bags_train.size())},
                          {"val", int(bags_val.size())},
                          {"test", int(bags_test.size())}};
    report.seed = cfg.seed;
    return {best, report};
}

} // namespace pathbench
