#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "pathbench/embed.hpp"
#include "pathbench/eval.hpp"
#include "pathbench/manifest.hpp"
#include "pathbench/png_io.hpp"
#include "pathbench/rng.hpp"
#include "pathbench/synthetic.hpp"
#include "test_support.hpp"

using namespace pathbench;

namespace {

std::string pathbench_bin() {
    const char* bin = std::getenv("PATHBENCH_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "PATHBENCH_BIN must point at the pathbench binary");
    return bin;
}

int run(const std::string& args, const std::filesystem::path& log) {
    const std::string cmd = pathbench_bin() + " " + args + " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("help exits 0 with usage text") {
    pbtest::TempDir dir("clihelp");
    CHECK(run("--help", dir / "log.txt") == 0);
    CHECK(slurp(dir / "log.txt").find("Usage") != std::string::npos);
    CHECK(run("tile --help", dir / "tlog.txt") == 0);
    const std::string tile_help = slurp(dir / "tlog.txt");
    CHECK(tile_help.find("--patch-size") != std::string::npos);
}

TEST_CASE("validation failures exit 2 without writing outputs") {
    pbtest::TempDir dir("clivalidate");
    write_png(RGBImage::filled(64, 64, 255, 255, 255), dir / "s.png");
    const auto out = dir / "m.jsonl";

    CHECK(run("tile --input " + (dir / "s.png").string() + " --min-tissue 1.5 --out " +
                  out.string(),
              dir / "log1.txt") == 2);
    CHECK_FALSE(std::filesystem::exists(out));

    CHECK(run("tile --input " + (dir / "s.png").string() + " --out " + out.string() +
                  " --definitely-not-a-flag",
              dir / "log2.txt") == 2);
    CHECK_FALSE(std::filesystem::exists(out));

    CHECK(run("tile --input " + (dir / "missing.png").string() + " --out " + out.string(),
              dir / "log3.txt") == 2);
    CHECK_FALSE(std::filesystem::exists(out));

    CHECK(run("frobnicate", dir / "log4.txt") == 2);
}

TEST_CASE("tile then embed then probe end to end") {
    pbtest::TempDir dir("clipipe");
    const RGBImage slide = synthetic_slide(1024, 1024, 5);
    write_png(slide, dir / "sl.png");

    const auto manifest_path = dir / "m.jsonl";
    CHECK(run("tile --input " + (dir / "sl.png").string() + " --patch-size 128 --out " +
                  manifest_path.string() + " --seed 3",
              dir / "tile.txt") == 0);
    REQUIRE(std::filesystem::exists(manifest_path));
    const PatchManifest manifest = read_manifest(manifest_path);
    CHECK(manifest.records.size() > 4);
    CHECK(manifest.seed == 3);

    // byte-identical on a second run
    CHECK(run("tile --input " + (dir / "sl.png").string() + " --patch-size 128 --out " +
                  (dir / "m2.jsonl").string() + " --seed 3",
              dir / "tile2.txt") == 0);
    CHECK(slurp(manifest_path) == slurp(dir / "m2.jsonl"));

    CHECK(run("stainfit --manifest " + manifest_path.string() + " --slides " +
                  dir.path().string() + " --space lab --max-patches 16 --out " +
                  (dir / "tpl.json").string() + " --seed 3",
              dir / "stain.txt") == 0);
    CHECK(std::filesystem::exists(dir / "tpl.json"));

    // augment one patch of the slide
    {
        const Slide s = Slide::open(dir / "sl.png");
        const auto& rec = manifest.records.front();
        write_png(s.read_region(0, int(rec.x), int(rec.y), rec.size, rec.size),
                  dir / "patch.png");
    }
    CHECK(run("augment --in " + (dir / "patch.png").string() + " --template " +
                  (dir / "tpl.json").string() + " --seed 7 --out " + (dir / "view.png").string(),
              dir / "aug.txt") == 0);
    const RGBImage view = read_png(dir / "view.png");
    CHECK(view.width == manifest.records.front().size);

    CHECK(run("embed --manifest " + manifest_path.string() + " --slides " +
                  dir.path().string() + " --encoder toy --dim 16 --out " +
                  (dir / "feats").string() + " --seed 3",
              dir / "embed.txt") == 0);
    REQUIRE(std::filesystem::exists(dir / "feats" / "sl.hemb"));
    REQUIRE(std::filesystem::exists(dir / "feats" / "index.json"));
    const EmbeddingSet set = read_embeddings(dir / "feats" / "sl.hemb");
    CHECK(set.size() == Eigen::Index(manifest.records.size()));
    CHECK(set.dim() == 16);

    // dataset with labels derived from tissue fraction
    std::string ds;
    for (const auto& rec : manifest.records) {
        nlohmann::json j = {{"key", patch_key(rec.level, rec.x, rec.y)},
                            {"slide_id", rec.slide_id},
                            {"label", rec.tissue_fraction >= 0.5 ? "dense" : "sparse"}};
        ds += j.dump() + "\n";
    }
    std::ofstream(dir / "ds.jsonl") << ds;

    const auto report_path = dir / "report.json";
    CHECK(run("probe --features " + (dir / "feats").string() + " --dataset " +
                  (dir / "ds.jsonl").string() + " --classes dense,sparse --out " +
                  report_path.string() + " --probe.epochs=10 --seed 3",
              dir / "probe.txt") == 0);
    const EvalReport report = parse_report(report_path);
    CHECK(report.protocol == "linear_probe");
    CHECK(report.split_sizes.at("train") > 0);

    CHECK(run("report --in " + report_path.string(), dir / "report.txt") == 0);
    CHECK(slurp(dir / "report.txt").find("linear_probe") != std::string::npos);
}

TEST_CASE("mil subcommand over crafted bags") {
    pbtest::TempDir dir("climil");
    std::filesystem::create_directories(dir / "bags");
    Rng rng(77);
    nlohmann::json labels;
    for (int b = 0; b < 40; ++b) {
        EmbeddingSet set;
        set.slide_id = "s" + std::to_string(100 + b); // zero-padded sort order
        const int label = b % 2;
        set.matrix.resize(10, 8);
        for (int i = 0; i < 10; ++i) {
            set.keys.push_back(patch_key(0, i * 224L, 0));
            for (int j = 0; j < 8; ++j) set.matrix(i, j) = float(rng.normal());
        }
        if (label == 1)
            for (int w = 0; w < 3; ++w) set.matrix(int(rng.below(10)), 0) += 4.0f;
        write_embeddings(set, dir / "bags" / (set.slide_id + ".hemb"));
        labels[set.slide_id] = label ? "pos" : "neg";
    }
    std::ofstream(dir / "labels.json") << labels.dump(2);

    const auto report_path = dir / "mil.json";
    CHECK(run("mil --bags " + (dir / "bags").string() + " --labels " +
                  (dir / "labels.json").string() + " --ratios 0.6,0.2,0.2 --seed 1 --out " +
                  report_path.string() + " --mil.epochs=6 --mil.hidden=8 --save-model " +
                  (dir / "mil.ckpt").string(),
              dir / "mil.txt") == 0);
    const EvalReport report = parse_report(report_path);
    CHECK(report.protocol == "mil");
    CHECK(report.per_class_auc.count("pos") == 1);
    CHECK(report.per_class_auc.count("neg") == 1);
    CHECK(std::filesystem::exists(dir / "mil.ckpt"));

    // corrupt one bag: runtime failure exits 1
    {
        std::ofstream bad(dir / "bags" / "s100.hemb", std::ios::binary);
        bad << "HEMBgarbage";
    }
    CHECK(run("mil --bags " + (dir / "bags").string() + " --labels " +
                  (dir / "labels.json").string() + " --out " + (dir / "mil2.json").string(),
              dir / "mil2.txt") == 1);
}

TEST_CASE("config file drives subcommands and flags win") {
    pbtest::TempDir dir("clicfg");
    write_png(synthetic_slide(512, 512, 2), dir / "sl.png");
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "[tile]\npatch_size = 64\nmin_tissue = 0.05\n";
    }
    CHECK(run("--config " + (dir / "run.cfg").string() + " tile --input " +
                  (dir / "sl.png").string() + " --out " + (dir / "a.jsonl").string(),
              dir / "a.txt") == 0);
    const PatchManifest a = read_manifest(dir / "a.jsonl");
    CHECK(a.records.front().size == 64);

    CHECK(run("--config " + (dir / "run.cfg").string() + " tile --input " +
                  (dir / "sl.png").string() + " --patch-size 128 --out " +
                  (dir / "b.jsonl").string(),
              dir / "b.txt") == 0);
    const PatchManifest b = read_manifest(dir / "b.jsonl");
    CHECK(b.records.front().size == 128);
}

TEST_CASE("PATHBENCH_SEED is the seed fallback") {
    pbtest::TempDir dir("cliseed");
    write_png(synthetic_slide(512, 512, 3), dir / "sl.png");
    const std::string base = "tile --input " + (dir / "sl.png").string() + " --out ";
    const std::string cmd = "PATHBENCH_SEED=123 " + pathbench_bin() + " " + base +
                            (dir / "env.jsonl").string() + " >" + (dir / "e.txt").string() +
                            " 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(read_manifest(dir / "env.jsonl").seed == 123);

    // explicit flag wins over the environment
    const std::string cmd2 = "PATHBENCH_SEED=123 " + pathbench_bin() + " " + base +
                             (dir / "flag.jsonl").string() + " --seed 9 >" +
                             (dir / "f.txt").string() + " 2>&1";
    REQUIRE(std::system(cmd2.c_str()) == 0);
    CHECK(read_manifest(dir / "flag.jsonl").seed == 9);
}
