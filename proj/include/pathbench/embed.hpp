#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pathbench/image.hpp"
#include "pathbench/manifest.hpp"

namespace pathbench {

using MatrixXfRow = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-slide matrix of patch feature vectors. Row i belongs to keys[i];
/// keys are unique, values finite, dim >= 1.
struct EmbeddingSet {
    std::string slide_id;
    std::vector<std::string> keys;
    MatrixXfRow matrix; // n x dim, float32

    Eigen::Index dim() const { return matrix.cols(); }
    Eigen::Index size() const { return matrix.rows(); }
};

/// Canonical patch key "(level,x,y)".
std::string patch_key(int level, long x, long y);

/// Deterministic stand-in feature extractor: a fixed seeded Gaussian
/// projection of a 262-dim descriptor (per-channel mean and population
/// std over 255, plus a 16x16 area-averaged luma grid over 255).
class ToyEncoder {
public:
    ToyEncoder(std::uint64_t seed, int dim);
    Eigen::VectorXf encode(const RGBImage& patch) const;
    int dim() const { return int(projection_.rows()); }

    static constexpr int kDescriptorDim = 262;

private:
    Eigen::MatrixXd projection_; // dim x 262, entries N(0,1)/sqrt(262)
};

Eigen::VectorXf toy_encode(const RGBImage& patch, std::uint64_t seed, int dim);

/// Single-file container, little-endian, bit-exact:
///   magic "HEMB" | u32 version=1 | u32 dim | u64 n | u64 key_block_len |
///   key block (JSON array of key strings, UTF-8) | n*dim float32 row-major.
/// The slide id is carried by the file name (<slide_id>.hemb).
void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

EmbeddingSet read_embeddings(const std::filesystem::path& path);

/// MIL bag: one slide's instances (widened to float64) plus its label.
struct Bag {
    std::string slide_id;
    Eigen::MatrixXd instances; // n x dim, n >= 1
    int label = 0;
};

/// One bag per manifest slide, instance rows in manifest record order.
/// Throws on a missing slide/key (naming both) or a dim mismatch.
std::vector<Bag> assemble_bags(const PatchManifest& manifest,
                               const std::map<std::string, EmbeddingSet>& embeddings,
                               const std::map<std::string, int>& labels);

} // namespace pathbench
