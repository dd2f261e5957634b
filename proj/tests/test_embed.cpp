#include <doctest.h>

#include <cstring>
#include <fstream>

#include "pathbench/embed.hpp"
#include "pathbench/rng.hpp"
#include "pathbench/sha256.hpp"
#include "test_support.hpp"

using namespace pathbench;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

EmbeddingSet small_set(const std::string& id, int n, int dim, std::uint64_t seed) {
    EmbeddingSet set;
    set.slide_id = id;
    Rng rng(seed);
    set.matrix.resize(n, dim);
    for (int i = 0; i < n; ++i) {
        set.keys.push_back(patch_key(0, i * 224L, 0));
        for (int j = 0; j < dim; ++j) set.matrix(i, j) = float(rng.normal());
    }
    return set;
}

} // namespace

TEST_CASE("patch keys are canonical") {
    CHECK(patch_key(0, 224, 448) == "(0,224,448)");
    CHECK(patch_key(2, 0, 0) == "(2,0,0)");
}

TEST_CASE("toy_encode is deterministic and zero for black input") {
    Rng rng(1);
    const RGBImage img = pbtest::random_image(32, 32, rng);
    const Eigen::VectorXf a = toy_encode(img, 7, 16);
    const Eigen::VectorXf b = toy_encode(img, 7, 16);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0f);
    const Eigen::VectorXf c = toy_encode(img, 8, 16);
    CHECK((a - c).cwiseAbs().maxCoeff() > 0.0f);

    const Eigen::VectorXf zero = toy_encode(RGBImage::filled(32, 32, 0, 0, 0), 7, 16);
    CHECK(zero.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("toy_encode sees only cell-level statistics") {
    // permuting pixels inside each 16x16-grid cell leaves the features as-is
    // (32x32 image -> 2x2-pixel cells)
    Rng rng(2);
    RGBImage img = pbtest::random_image(32, 32, rng);
    // make channels equal so per-channel stats survive the permutation
    for (std::size_t i = 0; i < img.pixels.size(); i += 3)
        img.pixels[i + 1] = img.pixels[i + 2] = img.pixels[i];

    RGBImage permuted = img;
    for (int cy = 0; cy < 16; ++cy)
        for (int cx = 0; cx < 16; ++cx) {
            // swap the two pixels of the top row of each 2x2 cell
            std::uint8_t tmp[3];
            std::memcpy(tmp, permuted.px(2 * cx, 2 * cy), 3);
            std::memcpy(permuted.px(2 * cx, 2 * cy), permuted.px(2 * cx + 1, 2 * cy), 3);
            std::memcpy(permuted.px(2 * cx + 1, 2 * cy), tmp, 3);
        }

    const Eigen::VectorXf a = toy_encode(img, 3, 24);
    const Eigen::VectorXf b = toy_encode(permuted, 3, 24);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("toy_encode is non-degenerate across a random corpus") {
    Rng rng(3);
    const ToyEncoder encoder(11, 8);
    Eigen::MatrixXd feats(20, 8);
    for (int i = 0; i < 20; ++i)
        feats.row(i) = encoder.encode(pbtest::random_image(16, 16, rng)).cast<double>();
    const Eigen::RowVectorXd mean = feats.colwise().mean();
    const double var = (feats.rowwise() - mean).squaredNorm() / 20.0;
    CHECK(var > 0.0);
}

TEST_CASE("hemb round trip is bit-exact") {
    pbtest::TempDir dir("hemb");
    const EmbeddingSet set = small_set("s1", 5, 7, 42);
    write_embeddings(set, dir / "s1.hemb");
    const EmbeddingSet back = read_embeddings(dir / "s1.hemb");
    CHECK(back.slide_id == "s1");
    CHECK(back.keys == set.keys);
    REQUIRE(back.matrix.rows() == set.matrix.rows());
    REQUIRE(back.matrix.cols() == set.matrix.cols());
    CHECK(std::memcmp(back.matrix.data(), set.matrix.data(),
                      sizeof(float) * std::size_t(set.matrix.size())) == 0);

    write_embeddings(set, dir / "again.hemb");
    const std::string b1 = slurp(dir / "s1.hemb");
    const std::string b2 = slurp(dir / "again.hemb");
    CHECK(b1 == b2);
    CHECK(Sha256::hex(b1) == Sha256::hex(b2));
}

TEST_CASE("hemb layout is frozen") {
    pbtest::TempDir dir("hembfrozen");
    EmbeddingSet set;
    set.slide_id = "f";
    set.keys = {"(0,0,0)", "(0,224,0)"};
    set.matrix.resize(2, 2);
    set.matrix << 1.0f, 2.0f, 3.0f, 4.0f;
    write_embeddings(set, dir / "f.hemb");
    const std::string bytes = slurp(dir / "f.hemb");
    REQUIRE(bytes.size() == 4 + 4 + 4 + 8 + 8 + 23 + 16);
    CHECK(bytes.substr(0, 4) == "HEMB");
    CHECK(bytes.substr(28, 23) == "[\"(0,0,0)\",\"(0,224,0)\"]");
    // whole-file hash pinned (independently derived from the layout
    // definition): changes to the byte format must be deliberate
    CHECK(Sha256::hex(bytes) ==
          "e93687613fa001888929212899da2c485f4b83f1f98650f9bb3e4395b2a51c1b");
}

TEST_CASE("hemb error paths") {
    pbtest::TempDir dir("hemberr");
    const EmbeddingSet set = small_set("x", 3, 4, 1);
    write_embeddings(set, dir / "x.hemb");
    const std::string good = slurp(dir / "x.hemb");

    auto write_bytes = [&](const std::string& name, const std::string& bytes) {
        std::ofstream out(dir / name, std::ios::binary);
        out.write(bytes.data(), std::streamsize(bytes.size()));
        return dir / name;
    };

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    CHECK_THROWS_WITH_AS(read_embeddings(write_bytes("magic.hemb", bad_magic)),
                         doctest::Contains("bad magic"), std::runtime_error);

    std::string bad_version = good;
    bad_version[4] = 9;
    CHECK_THROWS_WITH_AS(read_embeddings(write_bytes("ver.hemb", bad_version)),
                         doctest::Contains("version mismatch"), std::runtime_error);

    const std::string truncated = good.substr(0, good.size() - 1);
    CHECK_THROWS_WITH_AS(read_embeddings(write_bytes("trunc.hemb", truncated)),
                         doctest::Contains("truncated payload"), std::runtime_error);

    CHECK_THROWS_WITH_AS(read_embeddings(dir / "missing.hemb"), doctest::Contains("not found"),
                         std::runtime_error);

    // key block advertising the wrong count
    EmbeddingSet bad = set;
    bad.keys.push_back("(0,999,999)");
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> grown(4, 4);
    grown.topRows(3) = bad.matrix;
    grown.row(3).setZero();
    bad.matrix = grown;
    write_embeddings(bad, dir / "four.hemb");
    std::string mismatched = slurp(dir / "four.hemb");
    // shrink the declared row count from 4 to 3 but keep 4 keys
    mismatched[12] = 3;
    mismatched.resize(mismatched.size() - 4 * sizeof(float));
    CHECK_THROWS_WITH_AS(read_embeddings(write_bytes("count.hemb", mismatched)),
                         doctest::Contains("key-count mismatch"), std::runtime_error);
}

TEST_CASE("write_embeddings validates invariants") {
    pbtest::TempDir dir("hembval");
    EmbeddingSet dupe = small_set("d", 2, 3, 5);
    dupe.keys[1] = dupe.keys[0];
    CHECK_THROWS_WITH_AS(write_embeddings(dupe, dir / "d.hemb"),
                         doctest::Contains("duplicate key"), std::invalid_argument);

    EmbeddingSet inf = small_set("i", 2, 3, 6);
    inf.matrix(0, 0) = std::numeric_limits<float>::infinity();
    CHECK_THROWS_WITH_AS(write_embeddings(inf, dir / "i.hemb"),
                         doctest::Contains("non-finite"), std::invalid_argument);
}

TEST_CASE("assemble_bags follows manifest order and validates") {
    PatchManifest manifest;
    for (int i = 0; i < 3; ++i) {
        PatchRecord r;
        r.slide_id = "s1";
        r.level = 0;
        r.x = i * 224L;
        r.y = 0;
        r.size = 224;
        manifest.records.push_back(r);
    }
    normalize_manifest(manifest);

    std::map<std::string, EmbeddingSet> embeddings;
    embeddings["s1"] = small_set("s1", 3, 4, 9);
    std::map<std::string, int> labels{{"s1", 1}};

    const auto bags = assemble_bags(manifest, embeddings, labels);
    REQUIRE(bags.size() == 1);
    CHECK(bags[0].slide_id == "s1");
    CHECK(bags[0].label == 1);
    REQUIRE(bags[0].instances.rows() == 3);
    // row i corresponds to manifest record i
    for (int i = 0; i < 3; ++i)
        CHECK(bags[0].instances(i, 0) ==
              doctest::Approx(double(embeddings["s1"].matrix(i, 0))));

    SUBCASE("missing key names slide and key") {
        PatchRecord extra;
        extra.slide_id = "s1";
        extra.level = 0;
        extra.x = 999;
        extra.y = 224;
        extra.size = 224;
        manifest.records.push_back(extra);
        normalize_manifest(manifest);
        CHECK_THROWS_WITH_AS(assemble_bags(manifest, embeddings, labels),
                             doctest::Contains("s1 missing key (0,999,224)"),
                             std::runtime_error);
    }

    SUBCASE("missing slide embedding") {
        PatchRecord other;
        other.slide_id = "s2";
        other.level = 0;
        other.size = 224;
        manifest.records.push_back(other);
        normalize_manifest(manifest);
        labels["s2"] = 0;
        CHECK_THROWS_WITH_AS(assemble_bags(manifest, embeddings, labels),
                             doctest::Contains("no embeddings for slide s2"),
                             std::runtime_error);
    }

    SUBCASE("dim mismatch across slides") {
        PatchRecord other;
        other.slide_id = "s2";
        other.level = 0;
        other.size = 224;
        manifest.records.push_back(other);
        normalize_manifest(manifest);
        EmbeddingSet s2 = small_set("s2", 1, 6, 10);
        s2.keys[0] = patch_key(0, 0, 0);
        embeddings["s2"] = s2;
        labels["s2"] = 0;
        CHECK_THROWS_WITH_AS(assemble_bags(manifest, embeddings, labels),
                             doctest::Contains("dim mismatch"), std::runtime_error);
    }
}
