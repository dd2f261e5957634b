#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pathbench/embed.hpp"
#include "pathbench/nn.hpp"

namespace pathbench {

/// Disjoint train/val/test index lists over one dataset.
struct Split {
    std::vector<std::size_t> train, val, test;
    std::uint64_t seed = 0;
    std::array<double, 3> ratios{0.8, 0.1, 0.1};
};

/// Seeded shuffle, then sizes floor(n * r) with leftovers going to train
/// first, then val. Stratified mode applies the same rule per class and
/// requires every class to have at least one item.
Split split_dataset(const std::vector<int>& labels, std::array<double, 3> ratios,
                    std::uint64_t seed, bool stratify);

/// Carves a validation subset out of `n` training items:
/// val size = max(1, floor(n * frac)). Requires n >= 2 and 0 < frac < 1.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_val(std::size_t n,
                                                                          double frac,
                                                                          std::uint64_t seed);

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

/// Mann-Whitney AUC: fraction of (positive, negative) pairs where the
/// positive scores higher, ties counting one half. Computed by average
/// ranks, which matches pair counting exactly. Both classes must appear.
double auc_binary(const std::vector<double>& scores, const std::vector<int>& labels);

/// One-vs-rest AUC per class plus the unweighted macro mean. Every class
/// in [0, C) must appear in `labels`.
std::pair<double, std::vector<double>> auc_macro_ovr(const Eigen::Ref<const MatrixXd>& probs,
                                                     const std::vector<int>& labels);

struct EvalReport {
    std::string protocol; // "linear_probe" | "mil"
    std::map<std::string, double> metrics;
    std::map<std::string, double> per_class_auc; // MIL only
    int best_epoch = 0;                          // 1-based
    std::map<std::string, int> split_sizes;
    std::uint64_t seed = 0;
    std::string config_hash;
};

/// Canonical serialization: sorted keys, floats rendered with 6 significant
/// digits (trailing zeros kept), so identical reports are byte-identical.
/// Throws on an invalid report (empty metrics, metric outside [0, 1], ...).
std::string render_report(const EvalReport& report);

void emit_report(const EvalReport& report, const std::filesystem::path& path);

EvalReport parse_report(const std::filesystem::path& path);

/// Feature matrix + integer labels for one split.
struct ProbeData {
    MatrixXd X;
    std::vector<int> y;
};

struct ProbeConfig {
    int epochs = 100;
    int batch_size = 128;
    double lr0 = 0.1;
    double eta_min = 0.0;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
};

/// Linear probing: momentum SGD under a cosine schedule, best-val-accuracy
/// checkpoint (earliest on ties), test metrics from that checkpoint.
/// `epoch_train_loss`, when given, receives the mean batch loss per epoch.
std::pair<LinearProbe, EvalReport> train_linear_probe(const ProbeData& train,
                                                      const ProbeData& val,
                                                      const ProbeData& test,
                                                      const ProbeConfig& cfg, int n_classes,
                                                      std::vector<double>* epoch_train_loss =
                                                          nullptr);

struct MilConfig {
    int epochs = 30;
    int hidden = 128;
    double lr = 1e-3;
    AdamWConfig adamw{0.9, 0.999, 1e-8, 1e-4};
    std::uint64_t seed = 0;
    std::vector<std::string> class_names; // per-class report keys; "class_<i>" when empty
};

/// Attention-MIL: AdamW, one bag per step, frozen features, best-val-macro-
/// AUC checkpoint (earliest on ties); test macro/per-class AUC + accuracy.
std::pair<AttentionMIL, EvalReport> train_mil(const std::vector<Bag>& bags_train,
                                              const std::vector<Bag>& bags_val,
                                              const std::vector<Bag>& bags_test,
                                              const MilConfig& cfg, int n_classes);

} // namespace pathbench
