#include <doctest.h>

#include <fstream>

#include "pathbench/config.hpp"
#include "test_support.hpp"

using namespace pathbench;

TEST_CASE("defaults validate and hash deterministically") {
    RunConfig cfg = RunConfig::defaults();
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.hash() == RunConfig::defaults().hash());
    CHECK(cfg.hash().size() == 64);
}

TEST_CASE("set rejects unknown keys and changes the hash") {
    RunConfig cfg = RunConfig::defaults();
    const std::string before = cfg.hash();
    cfg.set("tile.patch_size", "256");
    CHECK(cfg.get_int("tile.patch_size") == 256);
    CHECK(cfg.hash() != before);
    CHECK_THROWS_AS(cfg.set("tile.nonsense", "1"), ValidationError);
}

TEST_CASE("config file parsing with sections and comments") {
    pbtest::TempDir dir("cfg");
    {
        std::ofstream out(dir / "run.cfg");
        out << "# comment line\n";
        out << "[tile]\n";
        out << "patch_size = 112   # trailing comment\n";
        out << "min_tissue = 0.25\n";
        out << "\n";
        out << "probe.epochs = 5\n";
    }
    RunConfig cfg = RunConfig::defaults();
    cfg.load_file(dir / "run.cfg");
    CHECK(cfg.get_int("tile.patch_size") == 112);
    CHECK(cfg.get_real("tile.min_tissue") == doctest::Approx(0.25));
    CHECK(cfg.get_int("probe.epochs") == 5);

    {
        std::ofstream out(dir / "bad.cfg");
        out << "no equals sign here\n";
    }
    RunConfig cfg2 = RunConfig::defaults();
    CHECK_THROWS_AS(cfg2.load_file(dir / "bad.cfg"), ValidationError);
    CHECK_THROWS_AS(cfg2.load_file(dir / "missing.cfg"), ValidationError);
}

TEST_CASE("typed getters validate") {
    RunConfig cfg = RunConfig::defaults();
    cfg.set("tile.patch_size", "not-a-number");
    CHECK_THROWS_AS(cfg.get_int("tile.patch_size"), ValidationError);
    cfg.set("tile.min_tissue", "0.5x");
    CHECK_THROWS_AS(cfg.get_real("tile.min_tissue"), ValidationError);
    cfg.set("split.stratify", "maybe");
    CHECK_THROWS_AS(cfg.get_bool("split.stratify"), ValidationError);
}

TEST_CASE("range validation catches out-of-range values") {
    RunConfig cfg = RunConfig::defaults();
    cfg.set("tile.min_tissue", "1.5");
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("tile.min_tissue"), ValidationError);

    RunConfig cfg2 = RunConfig::defaults();
    cfg2.set("split.train", "0.9"); // ratios no longer sum to 1
    CHECK_THROWS_WITH_AS(cfg2.validate(), doctest::Contains("sum to 1"), ValidationError);

    RunConfig cfg3 = RunConfig::defaults();
    cfg3.set("tile.thumb_max", "8");
    CHECK_THROWS_AS(cfg3.validate(), ValidationError);
}

TEST_CASE("canonical serialization is sorted and stable") {
    RunConfig cfg = RunConfig::defaults();
    const std::string canon = cfg.canonical();
    CHECK(canon.find("tile.patch_size=224\n") != std::string::npos);
    // sorted: augment.* precedes tile.*
    CHECK(canon.find("augment.brightness") < canon.find("tile.patch_size"));
}
