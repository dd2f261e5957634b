#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "pathbench/eval.hpp"
#include "pathbench/rng.hpp"
#include "test_support.hpp"

using namespace pathbench;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// three well-separated Gaussian blobs in d dimensions
ProbeData gaussian_blobs(int per_class, int dim, std::uint64_t seed) {
    ProbeData d;
    d.X.resize(3 * per_class, dim);
    d.y.resize(std::size_t(3) * per_class);
    Rng rng(seed);
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < per_class; ++i) {
            const Eigen::Index row = c * per_class + i;
            for (int j = 0; j < dim; ++j) d.X(row, j) = rng.normal();
            d.X(row, c) += 6.0 / std::sqrt(2.0); // pairwise center distance 6 sigma
            d.y[std::size_t(row)] = c;
        }
    }
    return d;
}

// bags where positives hide a few shifted "witness" instances
std::vector<Bag> witness_bags(int n_bags, int instances, int dim, std::uint64_t seed) {
    std::vector<Bag> bags;
    Rng rng(seed);
    VectorXd signal(dim);
    for (int j = 0; j < dim; ++j) signal(j) = rng.normal();
    signal.normalize();
    for (int b = 0; b < n_bags; ++b) {
        Bag bag;
        bag.slide_id = "bag" + std::to_string(b);
        bag.label = b % 2;
        bag.instances.resize(instances, dim);
        for (int i = 0; i < instances; ++i)
            for (int j = 0; j < dim; ++j) bag.instances(i, j) = rng.normal();
        if (bag.label == 1) {
            const int witnesses = 2 + int(rng.below(3));
            for (int w = 0; w < witnesses; ++w) {
                const int slot = int(rng.below(std::uint64_t(instances)));
                bag.instances.row(slot) += 3.0 * signal.transpose();
            }
        }
        bags.push_back(std::move(bag));
    }
    return bags;
}

} // namespace

TEST_CASE("split sizes follow floor-then-distribute") {
    std::vector<int> labels(10, 0);
    Split s = split_dataset(labels, {0.8, 0.1, 0.1}, 1, false);
    CHECK(s.train.size() == 8);
    CHECK(s.val.size() == 1);
    CHECK(s.test.size() == 1);

    labels.assign(3, 0);
    s = split_dataset(labels, {1.0, 0.0, 0.0}, 1, false);
    CHECK(s.train.size() == 3);
    CHECK(s.val.empty());
    CHECK(s.test.empty());

    labels.assign(95, 0);
    s = split_dataset(labels, {0.8, 0.1, 0.1}, 1, false);
    CHECK(s.train.size() == 77); // floors 76/9/9, leftover 1 -> train
    CHECK(s.val.size() == 9);
    CHECK(s.test.size() == 9);
}

TEST_CASE("splits are disjoint, covering, and seeded") {
    Rng rng(2);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(200);
        double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
        const double sum = a + b + c;
        std::array<double, 3> ratios{a / sum, b / sum, c / sum};
        std::vector<int> labels(n, 0);
        const std::uint64_t seed = rng.next_u64();
        const Split s = split_dataset(labels, ratios, seed, false);
        std::set<std::size_t> seen;
        for (auto i : s.train) seen.insert(i);
        for (auto i : s.val) seen.insert(i);
        for (auto i : s.test) seen.insert(i);
        CHECK(seen.size() == n); // disjoint + covering
        const Split again = split_dataset(labels, ratios, seed, false);
        CHECK(again.train == s.train);
        CHECK(again.val == s.val);
        CHECK(again.test == s.test);
    }
}

TEST_CASE("stratified splits preserve per-class proportions") {
    Rng rng(3);
    std::vector<int> labels;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 40 + 10 * c; ++i) labels.push_back(c);
    const Split s = split_dataset(labels, {0.8, 0.1, 0.1}, 5, true);
    for (int c = 0; c < 3; ++c) {
        const double n_c = 40 + 10 * c;
        const auto count = [&](const std::vector<std::size_t>& idx) {
            return double(std::count_if(idx.begin(), idx.end(),
                                        [&](std::size_t i) { return labels[i] == c; }));
        };
        CHECK(std::abs(count(s.train) - 0.8 * n_c) <= 1.0);
        CHECK(std::abs(count(s.val) - 0.1 * n_c) <= 1.0);
        CHECK(std::abs(count(s.test) - 0.1 * n_c) <= 1.0);
    }

    CHECK_THROWS_AS(split_dataset({0, 0, 2}, {0.8, 0.1, 0.1}, 1, true), std::invalid_argument);
    CHECK_THROWS_AS(split_dataset({}, {0.8, 0.1, 0.1}, 1, false), std::invalid_argument);
    CHECK_THROWS_AS(split_dataset({0, 1}, {0.9, 0.2, 0.1}, 1, false), std::invalid_argument);
}

TEST_CASE("holdout_val carving") {
    auto [train, val] = holdout_val(100, 0.1, 7);
    CHECK(train.size() == 90);
    CHECK(val.size() == 10);

    auto [t2, v2] = holdout_val(2, 0.1, 7);
    CHECK(t2.size() == 1);
    CHECK(v2.size() == 1);

    auto [t3, v3] = holdout_val(100, 0.1, 7);
    CHECK(t3 == train);
    CHECK(v3 == val);

    CHECK_THROWS_AS(holdout_val(1, 0.1, 7), std::invalid_argument);
    CHECK_THROWS_AS(holdout_val(10, 0.0, 7), std::invalid_argument);
}

TEST_CASE("accuracy counts exact matches") {
    CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
    CHECK(accuracy({1, 2, 3}, {0, 0, 0}) == doctest::Approx(0.0));
    CHECK(accuracy({1, 2, 3, 4}, {1, 2, 3, 0}) == doctest::Approx(0.75));
    CHECK_THROWS_AS(accuracy({1}, {1, 2}), std::invalid_argument);
}

TEST_CASE("auc_binary pinned examples") {
    CHECK(auc_binary({0.0, 0.1, 0.9, 1.0}, {0, 0, 1, 1}) == doctest::Approx(1.0));
    CHECK(auc_binary({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == doctest::Approx(0.5));
    // pairs: (0.35 vs 0.1) win, (0.35 vs 0.4) loss, (0.8 vs both) wins -> 3/4
    CHECK(auc_binary({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
    CHECK_THROWS_AS(auc_binary({0.1, 0.2}, {1, 1}), std::invalid_argument);
}

TEST_CASE("auc_binary equals exhaustive pair counting") {
    Rng rng(4);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + rng.below(11);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            // coarse grid forces plenty of ties
            scores[i] = double(rng.below(5)) / 4.0;
            labels[i] = int(rng.below(2));
            (labels[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        CHECK(auc_binary(scores, labels) ==
              doctest::Approx(pbtest::auc_reference(scores, labels)).epsilon(1e-12));
    }
}

TEST_CASE("auc_binary invariances") {
    Rng rng(5);
    std::vector<double> scores(40);
    std::vector<int> labels(40);
    for (std::size_t i = 0; i < 40; ++i) {
        scores[i] = rng.uniform();
        labels[i] = int(rng.below(2));
    }
    labels[0] = 1;
    labels[1] = 0;
    const double base = auc_binary(scores, labels);

    // strictly monotone transform
    std::vector<double> warped = scores;
    for (auto& s : warped) s = std::exp(3.0 * s) - 0.5;
    CHECK(auc_binary(warped, labels) == doctest::Approx(base).epsilon(1e-12));

    // complement identity
    std::vector<int> flipped = labels;
    for (auto& y : flipped) y = 1 - y;
    CHECK(auc_binary(scores, labels) + auc_binary(scores, flipped) == doctest::Approx(1.0));
}

TEST_CASE("auc_macro_ovr basics") {
    // C=2: macro equals the class-1 binary AUC when probabilities sum to 1
    MatrixXd probs(4, 2);
    probs << 0.9, 0.1, 0.6, 0.4, 0.35, 0.65, 0.2, 0.8;
    const std::vector<int> labels = {0, 0, 1, 1};
    std::vector<double> p1 = {0.1, 0.4, 0.65, 0.8};
    const auto [macro, per_class] = auc_macro_ovr(probs, labels);
    CHECK(macro == doctest::Approx(auc_binary(p1, labels)).epsilon(1e-12));
    CHECK(per_class.size() == 2);

    // perfect one-hot probabilities
    MatrixXd onehot = MatrixXd::Zero(6, 3);
    std::vector<int> y3 = {0, 1, 2, 0, 1, 2};
    for (int i = 0; i < 6; ++i) onehot(i, y3[std::size_t(i)]) = 1.0;
    CHECK(auc_macro_ovr(onehot, y3).first == doctest::Approx(1.0));

    // hand-built 6-sample 3-class table against the pairwise oracle
    MatrixXd table(6, 3);
    table << 0.5, 0.3, 0.2,
             0.2, 0.5, 0.3,
             0.1, 0.2, 0.7,
             0.4, 0.4, 0.2,
             0.3, 0.3, 0.4,
             0.25, 0.5, 0.25;
    const std::vector<int> yt = {0, 1, 2, 0, 2, 1};
    const auto [m2, pc2] = auc_macro_ovr(table, yt);
    double expect_macro = 0.0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> sc(6);
        std::vector<int> bin(6);
        for (int i = 0; i < 6; ++i) {
            sc[std::size_t(i)] = table(i, c);
            bin[std::size_t(i)] = yt[std::size_t(i)] == c;
        }
        const double ref = pbtest::auc_reference(sc, bin);
        CHECK(pc2[std::size_t(c)] == doctest::Approx(ref).epsilon(1e-12));
        expect_macro += ref;
    }
    CHECK(m2 == doctest::Approx(expect_macro / 3.0).epsilon(1e-12));

    CHECK_THROWS_AS(auc_macro_ovr(onehot, std::vector<int>{0, 1, 0, 0, 1, 0}),
                    std::invalid_argument);
}

TEST_CASE("report emission is canonical") {
    pbtest::TempDir dir("report");
    EvalReport r;
    r.protocol = "linear_probe";
    r.metrics["top1_accuracy"] = 0.953;
    r.best_epoch = 7;
    r.split_sizes = {{"train", 600}, {"val", 100}, {"test", 100}};
    r.seed = 3;
    r.config_hash = "abc123";

    emit_report(r, dir / "a.json");
    emit_report(r, dir / "b.json");
    const std::string a = slurp(dir / "a.json");
    CHECK(a == slurp(dir / "b.json"));
    CHECK(a.find("0.953000") != std::string::npos); // 6 significant digits, zero-padded

    const EvalReport back = parse_report(dir / "a.json");
    CHECK(back.protocol == "linear_probe");
    CHECK(back.metrics.at("top1_accuracy") == doctest::Approx(0.953));
    CHECK(back.best_epoch == 7);

    EvalReport bad = r;
    bad.metrics.clear();
    CHECK_THROWS_WITH_AS(render_report(bad), doctest::Contains("metric"),
                         std::invalid_argument);
    EvalReport out_of_range = r;
    out_of_range.metrics["top1_accuracy"] = 1.5;
    CHECK_THROWS_AS(render_report(out_of_range), std::invalid_argument);
}

TEST_CASE("single-class probe is trivially perfect") {
    ProbeData d;
    d.X = MatrixXd::Random(20, 4);
    d.y.assign(20, 0);
    ProbeConfig cfg;
    cfg.epochs = 2;
    const auto [model, report] = train_linear_probe(d, d, d, cfg, 1);
    CHECK(report.metrics.at("top1_accuracy") == doctest::Approx(1.0));
}

TEST_CASE("linear probe separates Gaussian blobs") {
    const ProbeData train = gaussian_blobs(200, 64, 100);
    const ProbeData val = gaussian_blobs(34, 64, 101);
    const ProbeData test = gaussian_blobs(34, 64, 102);
    ProbeConfig cfg;
    cfg.epochs = 40;
    cfg.seed = 1;
    auto [model, report] = train_linear_probe(train, val, test, cfg, 3);
    CHECK(report.metrics.at("top1_accuracy") >= 0.99);
    CHECK(report.best_epoch >= 1);
    CHECK(report.best_epoch <= 40);

    // determinism: identical reports byte for byte
    auto [model2, report2] = train_linear_probe(train, val, test, cfg, 3);
    report.config_hash = report2.config_hash = "same";
    CHECK(render_report(report) == render_report(report2));
}

TEST_CASE("full-batch probe training loss is non-increasing") {
    // with one batch per epoch the recorded loss is the exact objective, so
    // a decaying-lr descent on this separable set must never move uphill
    const ProbeData train = gaussian_blobs(100, 16, 200);
    ProbeConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 300; // full batch
    cfg.momentum = 0.0;
    cfg.lr0 = 0.1;
    cfg.seed = 2;
    std::vector<double> losses;
    train_linear_probe(train, train, train, cfg, 3, &losses);
    REQUIRE(losses.size() == 60);
    for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1] + 1e-12);
    CHECK(losses.back() < 0.5 * losses.front());
}

TEST_CASE("best-checkpoint ties break toward the earliest epoch") {
    // lr == 0 never updates, so every epoch has the same validation accuracy
    const ProbeData d = gaussian_blobs(10, 8, 7);
    ProbeConfig cfg;
    cfg.epochs = 5;
    cfg.lr0 = 0.0;
    cfg.eta_min = 0.0;
    const auto [model, report] = train_linear_probe(d, d, d, cfg, 3);
    CHECK(report.best_epoch == 1);
}

TEST_CASE("attention MIL solves witness bags and is deterministic") {
    const auto bags = witness_bags(120, 12, 16, 500);
    std::vector<int> y(bags.size());
    for (std::size_t i = 0; i < bags.size(); ++i) y[i] = bags[i].label;
    const Split split = split_dataset(y, {0.7, 0.15, 0.15}, 9, true);
    auto gather = [&](const std::vector<std::size_t>& idx) {
        std::vector<Bag> out;
        for (auto i : idx) out.push_back(bags[i]);
        return out;
    };
    MilConfig cfg;
    cfg.epochs = 12;
    cfg.hidden = 8;
    cfg.seed = 2;
    auto [model, report] =
        train_mil(gather(split.train), gather(split.val), gather(split.test), cfg, 2);
    CHECK(report.metrics.at("macro_auc") >= 0.9);
    CHECK(report.per_class_auc.size() == 2);

    auto [model2, report2] =
        train_mil(gather(split.train), gather(split.val), gather(split.test), cfg, 2);
    report.config_hash = report2.config_hash = "same";
    CHECK(render_report(report) == render_report(report2));
}

TEST_CASE("train_mil input validation") {
    const auto bags = witness_bags(10, 4, 8, 42);
    std::vector<Bag> single_class;
    for (const auto& b : bags)
        if (b.label == 0) single_class.push_back(b);
    MilConfig cfg;
    cfg.epochs = 1;
    CHECK_THROWS_WITH_AS(train_mil(single_class, bags, bags, cfg, 2),
                         doctest::Contains("single-class"), std::invalid_argument);

    std::vector<Bag> with_empty = bags;
    with_empty[0].instances.resize(0, 8);
    CHECK_THROWS_WITH_AS(train_mil(with_empty, bags, bags, cfg, 2),
                         doctest::Contains("no instances"), std::invalid_argument);
}
