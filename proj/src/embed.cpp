#include "pathbench/embed.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "pathbench/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "embedding files are little-endian; big-endian hosts are unsupported");

namespace pathbench {

std::string patch_key(int level, long x, long y) {
    return "(" + std::to_string(level) + "," + std::to_string(x) + "," + std::to_string(y) + ")";
}

ToyEncoder::ToyEncoder(std::uint64_t seed, int dim) {
    if (dim < 1) throw std::invalid_argument("toy_encode: dim must be >= 1");
    Rng rng(seed);
    projection_.resize(dim, kDescriptorDim);
    const double scale = 1.0 / std::sqrt(double(kDescriptorDim));
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < kDescriptorDim; ++j)
            projection_(i, j) = rng.normal() * scale;
}

Eigen::VectorXf ToyEncoder::encode(const RGBImage& patch) const {
    Eigen::VectorXd v(kDescriptorDim);
    const std::size_t n = std::size_t(patch.width) * patch.height;

    double mean[3] = {0, 0, 0};
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) mean[c] += patch.pixels[3 * i + c];
    for (int c = 0; c < 3; ++c) mean[c] /= double(n);
    double var[3] = {0, 0, 0};
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) {
            const double d = patch.pixels[3 * i + c] - mean[c];
            var[c] += d * d;
        }
    for (int c = 0; c < 3; ++c) {
        v[c] = mean[c] / 255.0;
        v[3 + c] = std::sqrt(var[c] / double(n)) / 255.0;
    }

    const Eigen::MatrixXd cells = box_average(luma(patch), 16, 16); // (row, col)
    for (int cy = 0; cy < 16; ++cy)
        for (int cx = 0; cx < 16; ++cx) v[6 + cy * 16 + cx] = cells(cy, cx) / 255.0;

    return (projection_ * v).cast<float>();
}

Eigen::VectorXf toy_encode(const RGBImage& patch, std::uint64_t seed, int dim) {
    return ToyEncoder(seed, dim).encode(patch);
}

namespace {

constexpr char kMagic[4] = {'H', 'E', 'M', 'B'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::string& buf, T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    buf.append(raw, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& off, const std::filesystem::path& path) {
    if (off + sizeof(T) > buf.size())
        throw std::runtime_error(path.string() + ": truncated payload");
    T value;
    std::memcpy(&value, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return value;
}

void validate_set(const EmbeddingSet& set) {
    if (set.matrix.cols() < 1) throw std::invalid_argument("embeddings: dim must be >= 1");
    if (Eigen::Index(set.keys.size()) != set.matrix.rows())
        throw std::invalid_argument("embeddings: key count must equal row count");
    if (!set.matrix.allFinite()) throw std::invalid_argument("embeddings: non-finite values");
    std::unordered_map<std::string, int> seen;
    for (const auto& k : set.keys)
        if (++seen[k] > 1) throw std::invalid_argument("embeddings: duplicate key " + k);
}

} // namespace

void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
    validate_set(set);
    nlohmann::json keys = nlohmann::json::array();
    for (const auto& k : set.keys) keys.push_back(k);
    const std::string key_block = keys.dump();

    std::string buf;
    buf.append(kMagic, 4);
    put<std::uint32_t>(buf, kFormatVersion);
    put<std::uint32_t>(buf, std::uint32_t(set.matrix.cols()));
    put<std::uint64_t>(buf, std::uint64_t(set.matrix.rows()));
    put<std::uint64_t>(buf, std::uint64_t(key_block.size()));
    buf.append(key_block);
    buf.append(reinterpret_cast<const char*>(set.matrix.data()),
               sizeof(float) * std::size_t(set.matrix.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw std::runtime_error(path.string() + ": write failed");
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path.string() + ": not found");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t off = 0;
    if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw std::runtime_error(path.string() + ": bad magic");
    off = 4;
    const auto version = take<std::uint32_t>(buf, off, path);
    if (version != kFormatVersion)
        throw std::runtime_error(path.string() + ": version mismatch (have " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kFormatVersion) + ")");
    const auto dim = take<std::uint32_t>(buf, off, path);
    const auto n = take<std::uint64_t>(buf, off, path);
    const auto key_len = take<std::uint64_t>(buf, off, path);
    if (dim < 1) throw std::runtime_error(path.string() + ": dim must be >= 1");
    if (off + key_len > buf.size()) throw std::runtime_error(path.string() + ": truncated payload");

    EmbeddingSet set;
    set.slide_id = path.stem().string();
    nlohmann::json keys;
    try {
        keys = nlohmann::json::parse(buf.substr(off, key_len));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": corrupt key block: " + e.what());
    }
    off += key_len;
    if (!keys.is_array() || keys.size() != n)
        throw std::runtime_error(path.string() + ": key-count mismatch");
    for (const auto& k : keys) set.keys.push_back(k.get<std::string>());

    const std::size_t payload = sizeof(float) * std::size_t(n) * dim;
    if (off + payload > buf.size())
        throw std::runtime_error(path.string() + ": truncated payload");
    if (off + payload < buf.size())
        throw std::runtime_error(path.string() + ": trailing bytes after payload");
    set.matrix.resize(Eigen::Index(n), Eigen::Index(dim));
    std::memcpy(set.matrix.data(), buf.data() + off, payload);
    validate_set(set);
    return set;
}

std::vector<Bag> assemble_bags(const PatchManifest& manifest,
                               const std::map<std::string, EmbeddingSet>& embeddings,
                               const std::map<std::string, int>& labels) {
    // group record indices per slide, in manifest order
    std::vector<std::string> slide_order;
    std::map<std::string, std::vector<std::size_t>> per_slide;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& id = manifest.records[i].slide_id;
        auto [it, fresh] = per_slide.try_emplace(id);
        if (fresh) slide_order.push_back(id);
        it->second.push_back(i);
    }

    std::vector<Bag> bags;
    Eigen::Index dim = -1;
    for (const auto& slide_id : slide_order) {
        auto set_it = embeddings.find(slide_id);
        if (set_it == embeddings.end())
            throw std::runtime_error("assemble_bags: no embeddings for slide " + slide_id);
        auto label_it = labels.find(slide_id);
        if (label_it == labels.end())
            throw std::runtime_error("assemble_bags: no label for slide " + slide_id);
        const EmbeddingSet& set = set_it->second;
        if (dim < 0) dim = set.dim();
        if (set.dim() != dim)
            throw std::runtime_error("assemble_bags: dim mismatch for slide " + slide_id +
                                     " (have " + std::to_string(set.dim()) + ", expected " +
                                     std::to_string(dim) + ")");
        std::unordered_map<std::string, Eigen::Index> row_of;
        for (std::size_t r = 0; r < set.keys.size(); ++r) row_of[set.keys[r]] = Eigen::Index(r);

        const auto& rows = per_slide[slide_id];
        Bag bag;
        bag.slide_id = slide_id;
        bag.label = label_it->second;
        bag.instances.resize(Eigen::Index(rows.size()), dim);
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const PatchRecord& rec = manifest.records[rows[k]];
            const std::string key = patch_key(rec.level, rec.x, rec.y);
            auto row_it = row_of.find(key);
            if (row_it == row_of.end())
                throw std::runtime_error("assemble_bags: slide " + slide_id + " missing key " + key);
            bag.instances.row(Eigen::Index(k)) = set.matrix.row(row_it->second).cast<double>();
        }
        bags.push_back(std::move(bag));
    }
    return bags;
}

} // namespace pathbench
