#include "pathbench/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pathbench/augment.hpp"
#include "pathbench/config.hpp"
#include "pathbench/embed.hpp"
#include "pathbench/eval.hpp"
#include "pathbench/fsutil.hpp"
#include "pathbench/manifest.hpp"
#include "pathbench/parallel.hpp"
#include "pathbench/png_io.hpp"
#include "pathbench/slide.hpp"
#include "pathbench/synthetic.hpp"
#include "pathbench/tissue.hpp"
#include "pathbench/version.hpp"

namespace fs = std::filesystem;

namespace pathbench {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void require_exists(const fs::path& path, const char* what) {
    if (!fs::exists(path))
        throw ValidationError(std::string(what) + " not found: " + path.string());
}

bool is_pyramid_dir(const fs::path& p) {
    return fs::is_directory(p) && fs::exists(p / "meta.json");
}

bool is_raster_file(const fs::path& p) {
    if (!fs::is_regular_file(p)) return false;
    const auto ext = p.extension().string();
    return ext == ".png" || ext == ".ppm";
}

// --input may be one slide (raster file or pyramid dir) or a directory of them
std::vector<fs::path> discover_slides(const fs::path& input) {
    require_exists(input, "input");
    if (is_pyramid_dir(input) || is_raster_file(input)) return {input};
    if (!fs::is_directory(input))
        throw ValidationError("input is not a slide or slide directory: " + input.string());
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(input)) {
        if (is_pyramid_dir(entry.path()) || is_raster_file(entry.path()))
            found.push_back(entry.path());
    }
    std::sort(found.begin(), found.end());
    if (found.empty())
        throw ValidationError("no slides (*.png, *.ppm, pyramid dirs) in " + input.string());
    return found;
}

fs::path resolve_slide_source(const fs::path& slides_dir, const std::string& slide_id) {
    for (const auto& candidate :
         {slides_dir / (slide_id + ".png"), slides_dir / (slide_id + ".ppm"),
          slides_dir / slide_id}) {
        if (fs::exists(candidate)) return candidate;
    }
    throw ValidationError("slide '" + slide_id + "' not found under " + slides_dir.string());
}

TilingConfig tiling_config(const RunConfig& cfg) {
    TilingConfig t;
    t.patch_size = int(cfg.get_int("tile.patch_size"));
    t.min_tissue_fraction = cfg.get_real("tile.min_tissue");
    t.thumbnail_max_dim = int(cfg.get_int("tile.thumb_max"));
    t.level = int(cfg.get_int("tile.level"));
    t.jobs = int(cfg.get_int("run.jobs"));
    return t;
}

AugmentConfig augment_config(const RunConfig& cfg) {
    AugmentConfig a;
    a.rotation = cfg.get_bool("augment.rotation");
    a.p_hflip = cfg.get_real("augment.p_hflip");
    a.p_vflip = cfg.get_real("augment.p_vflip");
    a.p_stain = cfg.get_real("augment.p_stain");
    a.jitter = JitterParams{cfg.get_real("augment.brightness"), cfg.get_real("augment.contrast"),
                            cfg.get_real("augment.saturation"), cfg.get_real("augment.hue")};
    return a;
}

ProbeConfig probe_config(const RunConfig& cfg) {
    ProbeConfig p;
    p.epochs = int(cfg.get_int("probe.epochs"));
    p.batch_size = int(cfg.get_int("probe.batch_size"));
    p.lr0 = cfg.get_real("probe.lr");
    p.eta_min = cfg.get_real("probe.eta_min");
    p.momentum = cfg.get_real("probe.momentum");
    p.weight_decay = cfg.get_real("probe.weight_decay");
    p.seed = cfg.get_u64("run.seed");
    return p;
}

MilConfig mil_config(const RunConfig& cfg) {
    MilConfig m;
    m.epochs = int(cfg.get_int("mil.epochs"));
    m.hidden = int(cfg.get_int("mil.hidden"));
    m.lr = cfg.get_real("mil.lr");
    m.adamw = AdamWConfig{cfg.get_real("mil.beta1"), cfg.get_real("mil.beta2"),
                          cfg.get_real("mil.eps"), cfg.get_real("mil.weight_decay")};
    m.seed = cfg.get_u64("run.seed");
    return m;
}

std::array<double, 3> split_ratios(const RunConfig& cfg) {
    return {cfg.get_real("split.train"), cfg.get_real("split.val"), cfg.get_real("split.test")};
}

struct TileOutcome {
    PatchManifest manifest;
    std::size_t grid_total = 0;
};

TileOutcome tile_slides(const std::vector<fs::path>& sources, const RunConfig& cfg) {
    const TilingConfig tcfg = tiling_config(cfg);
    TileOutcome outcome;
    outcome.manifest.config_hash = cfg.hash();
    outcome.manifest.seed = cfg.get_u64("run.seed");
    for (const auto& src : sources) {
        const Slide slide = Slide::open(src);
        PatchManifest one = build_manifest(slide, tcfg);
        const LevelInfo& lv = slide.levels()[std::size_t(tcfg.level)];
        outcome.grid_total += tile_grid(lv.width, lv.height, tcfg.patch_size).size();
        outcome.manifest.records.insert(outcome.manifest.records.end(),
                                        std::make_move_iterator(one.records.begin()),
                                        std::make_move_iterator(one.records.end()));
    }
    normalize_manifest(outcome.manifest);
    return outcome;
}

int cmd_tile(const RunConfig& cfg, const fs::path& input, const fs::path& out) {
    const auto sources = discover_slides(input);
    const TileOutcome outcome = tile_slides(sources, cfg);
    atomic_write_with(out, [&](const fs::path& tmp) { write_manifest(outcome.manifest, tmp); });
    std::cout << "tile: kept " << outcome.manifest.records.size() << " of " << outcome.grid_total
              << " grid patches across " << sources.size() << " slide(s) -> " << out.string()
              << "\n";
    return 0;
}

// open-once slide cache for manifest-driven patch reads
class SlidePool {
public:
    explicit SlidePool(fs::path slides_dir) : slides_dir_(std::move(slides_dir)) {}

    const Slide& get(const std::string& slide_id) {
        auto it = slides_.find(slide_id);
        if (it == slides_.end()) {
            Slide s = Slide::open(resolve_slide_source(slides_dir_, slide_id));
            it = slides_.emplace(slide_id, std::move(s)).first;
        }
        return it->second;
    }

private:
    fs::path slides_dir_;
    std::map<std::string, Slide> slides_;
};

int cmd_stainfit(const RunConfig& cfg, const fs::path& manifest_path, const fs::path& slides_dir,
                 const fs::path& out) {
    require_exists(manifest_path, "manifest");
    const PatchManifest manifest = read_manifest(manifest_path);
    if (manifest.records.empty()) throw ValidationError("manifest has no patches");

    const std::size_t want =
        std::min<std::size_t>(std::size_t(cfg.get_int("stain.max_patches")),
                              manifest.records.size());
    const auto picked = sample_unique(manifest, want, cfg.get_u64("run.seed"));

    SlidePool pool(slides_dir);
    StainFitter fitter(color_space_from_string(cfg.get("stain.space")));
    for (const auto& rec : picked) {
        const Slide& slide = pool.get(rec.slide_id);
        fitter.add(slide.read_region(rec.level, int(rec.x), int(rec.y), rec.size, rec.size));
    }
    const StainTemplate tpl = fitter.finish();
    atomic_write_with(out, [&](const fs::path& tmp) { write_stain_template(tpl, tmp, cfg.hash()); });
    std::cout << "stainfit: fitted " << tpl.n_fitted << " patches in " << to_string(tpl.space)
              << " -> " << out.string() << "\n";
    return 0;
}

int cmd_augment(const RunConfig& cfg, const fs::path& in, const fs::path& template_path,
                const fs::path& out) {
    require_exists(in, "input patch");
    const RGBImage patch = load_image(in);
    const AugmentConfig acfg = augment_config(cfg);
    if (acfg.rotation && patch.width != patch.height)
        throw ValidationError("rotation requires a square patch (got " +
                              std::to_string(patch.width) + "x" + std::to_string(patch.height) +
                              "); pass --augment.rotation=false for non-square input");

    std::optional<StainTemplate> tpl;
    if (!template_path.empty()) {
        require_exists(template_path, "stain template");
        tpl = read_stain_template(template_path);
    }
    Rng rng(cfg.get_u64("run.seed"));
    const RGBImage view = augment_view(patch, acfg, tpl ? &*tpl : nullptr, rng);
    atomic_write_with(out, [&](const fs::path& tmp) { save_image(view, tmp); });
    std::cout << "augment: " << in.string() << " -> " << out.string() << "\n";
    return 0;
}

int cmd_embed(const RunConfig& cfg, const fs::path& manifest_path, const fs::path& slides_dir,
              const fs::path& out_dir) {
    require_exists(manifest_path, "manifest");
    const PatchManifest manifest = read_manifest(manifest_path);
    if (manifest.records.empty()) throw ValidationError("manifest has no patches");
    fs::create_directories(out_dir);

    const int dim = int(cfg.get_int("embed.dim"));
    const std::uint64_t seed = cfg.get_u64("run.seed");
    const int jobs = int(cfg.get_int("run.jobs"));
    const ToyEncoder encoder(seed, dim);

    // records grouped per slide, preserving manifest order
    std::vector<std::string> slide_order;
    std::map<std::string, std::vector<const PatchRecord*>> per_slide;
    for (const auto& rec : manifest.records) {
        auto [it, fresh] = per_slide.try_emplace(rec.slide_id);
        if (fresh) slide_order.push_back(rec.slide_id);
        it->second.push_back(&rec);
    }

    SlidePool pool(slides_dir);
    nlohmann::json sidecar_slides = nlohmann::json::array();
    for (const auto& slide_id : slide_order) {
        const Slide& slide = pool.get(slide_id);
        const auto& recs = per_slide[slide_id];
        EmbeddingSet set;
        set.slide_id = slide_id;
        set.keys.resize(recs.size());
        set.matrix.resize(Eigen::Index(recs.size()), dim);
        parallel_for(recs.size(), jobs, [&](std::size_t i) {
            const PatchRecord& rec = *recs[i];
            const RGBImage patch =
                slide.read_region(rec.level, int(rec.x), int(rec.y), rec.size, rec.size);
            set.keys[i] = patch_key(rec.level, rec.x, rec.y);
            set.matrix.row(Eigen::Index(i)) = encoder.encode(patch).transpose();
        });
        const fs::path out_file = out_dir / (slide_id + ".hemb");
        atomic_write_with(out_file, [&](const fs::path& tmp) { write_embeddings(set, tmp); });
        sidecar_slides.push_back(
            {{"id", slide_id}, {"file", slide_id + ".hemb"}, {"patches", recs.size()}});
    }

    nlohmann::json sidecar = {{"config_hash", cfg.hash()},
                              {"seed", seed},
                              {"version", kVersion},
                              {"dim", dim},
                              {"encoder", cfg.get("embed.encoder")},
                              {"slides", sidecar_slides}};
    atomic_write_file(out_dir / "index.json", sidecar.dump(2) + "\n");
    std::cout << "embed: " << manifest.records.size() << " patches, dim " << dim << " -> "
              << out_dir.string() << "\n";
    return 0;
}

struct DatasetItem {
    std::string key;
    std::string slide_id; // may be empty
    std::string label;
    std::string split; // "", "train", "val", "test"
};

std::vector<DatasetItem> read_dataset(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path.string() + ": dataset not found");
    std::vector<DatasetItem> items;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": bad JSON: " + e.what());
        }
        DatasetItem item;
        item.key = j.at("key").get<std::string>();
        if (j.contains("slide_id")) item.slide_id = j["slide_id"].get<std::string>();
        if (j.at("label").is_string())
            item.label = j["label"].get<std::string>();
        else
            item.label = std::to_string(j["label"].get<long>());
        if (j.contains("split")) {
            item.split = j["split"].get<std::string>();
            if (item.split != "train" && item.split != "val" && item.split != "test")
                throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                      ": split must be train/val/test");
        }
        items.push_back(std::move(item));
    }
    if (items.empty()) throw ValidationError(path.string() + ": empty dataset");
    return items;
}

std::vector<std::string> class_order(const std::string& classes_flag,
                                     const std::set<std::string>& seen) {
    std::vector<std::string> names;
    if (!classes_flag.empty()) {
        std::stringstream ss(classes_flag);
        std::string name;
        while (std::getline(ss, name, ',')) {
            if (name.empty()) throw ValidationError("--classes: empty class name");
            names.push_back(name);
        }
        for (const auto& s : seen)
            if (std::find(names.begin(), names.end(), s) == names.end())
                throw ValidationError("label '" + s + "' not listed in --classes");
    } else {
        names.assign(seen.begin(), seen.end());
    }
    return names;
}

// key -> (set index, row) over every .hemb in a directory
struct FeatureIndex {
    std::vector<EmbeddingSet> sets;
    std::map<std::string, std::size_t> set_of_slide;
    std::map<std::string, std::pair<std::size_t, Eigen::Index>> global_rows; // key -> (set,row)
    bool global_unique = true;
};

FeatureIndex load_features(const fs::path& dir) {
    require_exists(dir, "features directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".hemb") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("no .hemb files in " + dir.string());

    FeatureIndex index;
    for (const auto& file : files) {
        EmbeddingSet set = read_embeddings(file);
        const std::size_t si = index.sets.size();
        index.set_of_slide[set.slide_id] = si;
        for (std::size_t r = 0; r < set.keys.size(); ++r) {
            auto [it, fresh] =
                index.global_rows.try_emplace(set.keys[r], si, Eigen::Index(r));
            if (!fresh) index.global_unique = false;
        }
        index.sets.push_back(std::move(set));
    }
    return index;
}

int cmd_probe(const RunConfig& cfg, const fs::path& features_dir, const fs::path& dataset_path,
              const std::string& classes_flag, const fs::path& out,
              const fs::path& save_model) {
    const auto items = read_dataset(dataset_path);
    const FeatureIndex index = load_features(features_dir);

    std::set<std::string> seen;
    for (const auto& item : items) seen.insert(item.label);
    const auto names = class_order(classes_flag, seen);
    std::map<std::string, int> class_id;
    for (std::size_t i = 0; i < names.size(); ++i) class_id[names[i]] = int(i);

    // resolve every item to a feature row
    const Eigen::Index dim = index.sets.front().dim();
    for (const auto& set : index.sets)
        if (set.dim() != dim) throw ValidationError("feature dim mismatch across .hemb files");
    MatrixXd X(Eigen::Index(items.size()), dim);
    std::vector<int> y(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        const DatasetItem& item = items[i];
        const EmbeddingSet* set = nullptr;
        Eigen::Index row = -1;
        if (!item.slide_id.empty()) {
            auto sit = index.set_of_slide.find(item.slide_id);
            if (sit == index.set_of_slide.end())
                throw ValidationError("no embeddings for slide " + item.slide_id);
            set = &index.sets[sit->second];
            const auto kit = std::find(set->keys.begin(), set->keys.end(), item.key);
            if (kit == set->keys.end())
                throw ValidationError("slide " + item.slide_id + " missing key " + item.key);
            row = Eigen::Index(kit - set->keys.begin());
        } else {
            if (!index.global_unique)
                throw ValidationError("dataset items omit slide_id but keys are not globally "
                                      "unique across .hemb files");
            auto git = index.global_rows.find(item.key);
            if (git == index.global_rows.end())
                throw ValidationError("no embedding row for key " + item.key);
            set = &index.sets[git->second.first];
            row = git->second.second;
        }
        X.row(Eigen::Index(i)) = set->matrix.row(row).cast<double>();
        y[i] = class_id.at(item.label);
    }

    // split selection: explicit split fields win, otherwise seeded ratios
    std::vector<std::size_t> train_idx, val_idx, test_idx;
    const bool any_split = std::any_of(items.begin(), items.end(),
                                       [](const DatasetItem& it) { return !it.split.empty(); });
    if (any_split) {
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (items[i].split == "train") train_idx.push_back(i);
            else if (items[i].split == "val") val_idx.push_back(i);
            else if (items[i].split == "test") test_idx.push_back(i);
            else throw ValidationError("item " + items[i].key + " lacks a split assignment");
        }
        if (test_idx.empty()) throw ValidationError("dataset has no test items");
        if (val_idx.empty()) {
            // only train/test provided: carve validation out of train
            auto [tr, va] = holdout_val(train_idx.size(), cfg.get_real("probe.val_frac"),
                                        cfg.get_u64("run.seed"));
            std::vector<std::size_t> new_train, new_val;
            for (auto i : tr) new_train.push_back(train_idx[i]);
            for (auto i : va) new_val.push_back(train_idx[i]);
            train_idx = std::move(new_train);
            val_idx = std::move(new_val);
        }
    } else {
        const Split split = split_dataset(y, split_ratios(cfg), cfg.get_u64("run.seed"),
                                          cfg.get_bool("split.stratify"));
        train_idx = split.train;
        val_idx = split.val;
        test_idx = split.test;
    }

    auto gather = [&](const std::vector<std::size_t>& idx) {
        ProbeData d;
        d.X.resize(Eigen::Index(idx.size()), dim);
        d.y.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            d.X.row(Eigen::Index(i)) = X.row(Eigen::Index(idx[i]));
            d.y[i] = y[idx[i]];
        }
        return d;
    };

    auto [model, report] = train_linear_probe(gather(train_idx), gather(val_idx),
                                              gather(test_idx), probe_config(cfg),
                                              int(names.size()));
    report.config_hash = cfg.hash();
    emit_report(report, out);
    if (!save_model.empty()) {
        Checkpoint ckpt = to_checkpoint(model);
        ckpt.meta["seed"] = std::to_string(report.seed);
        ckpt.meta["best_epoch"] = std::to_string(report.best_epoch);
        atomic_write_with(save_model, [&](const fs::path& tmp) { write_checkpoint(ckpt, tmp); });
    }
    std::cout << "probe: test top-1 accuracy "
              << report.metrics.at("top1_accuracy") << " (best epoch " << report.best_epoch
              << ") -> " << out.string() << "\n";
    return 0;
}

int cmd_mil(const RunConfig& cfg, const fs::path& bags_dir, const fs::path& labels_path,
            const std::string& classes_flag, const fs::path& out, const fs::path& save_model) {
    require_exists(labels_path, "labels file");
    std::ifstream in(labels_path);
    nlohmann::json labels_json;
    try {
        in >> labels_json;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(labels_path.string() + ": bad labels JSON: " + e.what());
    }
    if (!labels_json.is_object() || labels_json.empty())
        throw ValidationError(labels_path.string() + ": labels must map slide_id to class name");

    std::set<std::string> seen;
    for (const auto& [slide, name] : labels_json.items())
        seen.insert(name.get<std::string>());
    const auto names = class_order(classes_flag, seen);
    std::map<std::string, int> class_id;
    for (std::size_t i = 0; i < names.size(); ++i) class_id[names[i]] = int(i);

    const FeatureIndex index = load_features(bags_dir);
    std::vector<Bag> bags;
    for (const auto& set : index.sets) {
        if (!labels_json.contains(set.slide_id))
            throw ValidationError("no label for slide " + set.slide_id);
        Bag bag;
        bag.slide_id = set.slide_id;
        bag.label = class_id.at(labels_json[set.slide_id].get<std::string>());
        bag.instances = set.matrix.cast<double>();
        bags.push_back(std::move(bag));
    }

    std::vector<int> y(bags.size());
    for (std::size_t i = 0; i < bags.size(); ++i) y[i] = bags[i].label;
    const Split split = split_dataset(y, split_ratios(cfg), cfg.get_u64("run.seed"),
                                      cfg.get_bool("split.stratify"));
    auto gather = [&](const std::vector<std::size_t>& idx) {
        std::vector<Bag> out_bags;
        out_bags.reserve(idx.size());
        for (auto i : idx) out_bags.push_back(bags[i]);
        return out_bags;
    };

    MilConfig mcfg = mil_config(cfg);
    mcfg.class_names = names;
    auto [model, report] =
        train_mil(gather(split.train), gather(split.val), gather(split.test), mcfg,
                  int(names.size()));
    report.config_hash = cfg.hash();
    emit_report(report, out);
    if (!save_model.empty()) {
        Checkpoint ckpt = to_checkpoint(model);
        ckpt.meta["seed"] = std::to_string(report.seed);
        ckpt.meta["best_epoch"] = std::to_string(report.best_epoch);
        atomic_write_with(save_model, [&](const fs::path& tmp) { write_checkpoint(ckpt, tmp); });
    }
    std::cout << "mil: test macro AUC " << report.metrics.at("macro_auc") << " (best epoch "
              << report.best_epoch << ") -> " << out.string() << "\n";
    return 0;
}

int cmd_report(const fs::path& in, const fs::path& out) {
    const EvalReport report = parse_report(in);
    std::cout << "protocol:   " << report.protocol << "\n";
    std::cout << "best epoch: " << report.best_epoch << "\n";
    std::cout << "seed:       " << report.seed << "\n";
    for (const auto& [name, v] : report.metrics) std::cout << name << ": " << v << "\n";
    for (const auto& [name, v] : report.per_class_auc)
        std::cout << "auc[" << name << "]: " << v << "\n";
    std::string sizes = "splits:     ";
    for (const auto& [name, v] : report.split_sizes)
        sizes += name + "=" + std::to_string(v) + " ";
    std::cout << sizes << "\n";
    if (!out.empty()) emit_report(report, out);
    return 0;
}

int cmd_selftest(RunConfig cfg, const fs::path& workdir, int size) {
    const auto total_start = std::chrono::steady_clock::now();
    if (size < 512) throw ValidationError("selftest size must be >= 512");
    fs::create_directories(workdir);
    const std::uint64_t seed = cfg.get_u64("run.seed");

    auto stage_start = std::chrono::steady_clock::now();
    const fs::path slide_path = workdir / "slide.png";
    const RGBImage slide_img = synthetic_slide(size, size, seed + 1);
    atomic_write_with(slide_path, [&](const fs::path& tmp) { write_png(slide_img, tmp); });
    std::cout << "[selftest] slide: " << size << "x" << size << " synthetic -> "
              << slide_path.string() << " (" << seconds_since(stage_start) << " s)\n";

    stage_start = std::chrono::steady_clock::now();
    const TileOutcome outcome = tile_slides({slide_path}, cfg);
    const fs::path manifest_path = workdir / "manifest.jsonl";
    atomic_write_with(manifest_path,
                      [&](const fs::path& tmp) { write_manifest(outcome.manifest, tmp); });
    std::cout << "[selftest] tile: kept " << outcome.manifest.records.size() << " of "
              << outcome.grid_total << " patches (" << seconds_since(stage_start) << " s)\n";
    if (outcome.manifest.records.size() < 8)
        throw std::runtime_error("selftest: tiling kept too few patches");

    stage_start = std::chrono::steady_clock::now();
    cfg.set("stain.max_patches", "32");
    cmd_stainfit(cfg, manifest_path, workdir, workdir / "template.json");
    const PatchManifest manifest = read_manifest(manifest_path);
    {
        const Slide slide = Slide::open(slide_path);
        const PatchRecord& rec = manifest.records.front();
        const RGBImage patch =
            slide.read_region(rec.level, int(rec.x), int(rec.y), rec.size, rec.size);
        const StainTemplate tpl = read_stain_template(workdir / "template.json");
        Rng rng(seed);
        const RGBImage view = augment_view(patch, augment_config(cfg), &tpl, rng);
        atomic_write_with(workdir / "view.png",
                          [&](const fs::path& tmp) { write_png(view, tmp); });
    }
    std::cout << "[selftest] stainfit+augment: template.json, view.png ("
              << seconds_since(stage_start) << " s)\n";

    stage_start = std::chrono::steady_clock::now();
    const fs::path feats_dir = workdir / "feats";
    cmd_embed(cfg, manifest_path, workdir, feats_dir);
    std::cout << "[selftest] embed (" << seconds_since(stage_start) << " s)\n";

    // synthetic patch-level labels from the manifest itself: patches more
    // than half covered by tissue vs peripheral ones
    stage_start = std::chrono::steady_clock::now();
    std::string ds;
    std::size_t dense = 0;
    for (const auto& rec : manifest.records) {
        nlohmann::json j = {{"key", patch_key(rec.level, rec.x, rec.y)},
                            {"slide_id", rec.slide_id},
                            {"label", rec.tissue_fraction >= 0.5 ? "dense" : "sparse"}};
        dense += rec.tissue_fraction >= 0.5;
        ds += j.dump() + "\n";
    }
    if (dense == 0 || dense == manifest.records.size())
        throw std::runtime_error("selftest: degenerate synthetic labels");
    const fs::path ds_path = workdir / "dataset.jsonl";
    atomic_write_file(ds_path, ds);

    const fs::path report_path = workdir / "report.json";
    cmd_probe(cfg, feats_dir, ds_path, "dense,sparse", report_path, fs::path());
    const EvalReport report = parse_report(report_path); // schema check
    std::cout << "[selftest] probe: test top-1 accuracy "
              << report.metrics.at("top1_accuracy") << " (" << seconds_since(stage_start)
              << " s)\n";
    std::cout << "[selftest] PASS (total " << seconds_since(total_start) << " s)\n";
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"pathbench: patch tiling, stain augmentation, and frozen-feature "
                 "benchmarking for pathology slides"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file;
    app.add_option("--config", config_file, "key=value config file (flags win)");
    std::string seed_flag, jobs_flag;
    app.add_option("--seed", seed_flag, "global seed for every stochastic stage");
    app.add_option("--jobs", jobs_flag, "worker thread cap (0 = hardware)");

    // every config key is overridable as --section.key=value
    RunConfig cfg = RunConfig::defaults();
    std::map<std::string, std::string> overrides;
    for (const auto& [key, value] : cfg.entries())
        app.add_option("--" + key, overrides[key])->group("Config overrides");

    auto* tile = app.add_subcommand("tile", "tile slides into a filtered patch manifest");
    std::string tile_input, tile_out;
    std::string patch_size_flag, min_tissue_flag, level_flag, thumb_flag;
    tile->add_option("--input", tile_input, "slide file/pyramid dir, or directory of slides")
        ->required();
    tile->add_option("--out", tile_out, "output manifest (.jsonl)")->required();
    tile->add_option("--patch-size", patch_size_flag, "patch edge in pixels");
    tile->add_option("--min-tissue", min_tissue_flag, "minimum tissue fraction to keep");
    tile->add_option("--level", level_flag, "pyramid level to tile");
    tile->add_option("--thumb-max", thumb_flag, "thumbnail longest side for the tissue mask");

    auto* stainfit = app.add_subcommand("stainfit", "fit a stain template from manifest patches");
    std::string sf_manifest, sf_slides = ".", sf_out, sf_space, sf_max;
    stainfit->add_option("--manifest", sf_manifest, "patch manifest")->required();
    stainfit->add_option("--slides", sf_slides, "directory with the slides (default .)");
    stainfit->add_option("--space", sf_space, "lab or hsv");
    stainfit->add_option("--max-patches", sf_max, "sample at most this many patches");
    stainfit->add_option("--out", sf_out, "output template JSON")->required();

    auto* augment = app.add_subcommand("augment", "apply one augmentation view to a patch");
    std::string aug_in, aug_tpl, aug_out;
    augment->add_option("--in", aug_in, "input patch (PNG/PPM)")->required();
    augment->add_option("--template", aug_tpl, "stain template JSON (optional)");
    augment->add_option("--out", aug_out, "output image")->required();

    auto* embed = app.add_subcommand("embed", "encode manifest patches into .hemb files");
    std::string em_manifest, em_slides = ".", em_out, em_encoder, em_dim;
    embed->add_option("--manifest", em_manifest, "patch manifest")->required();
    embed->add_option("--slides", em_slides, "directory with the slides (default .)");
    embed->add_option("--encoder", em_encoder, "feature encoder (toy)");
    embed->add_option("--dim", em_dim, "feature dimension");
    embed->add_option("--out", em_out, "output directory (one .hemb per slide)")->required();

    auto* probe = app.add_subcommand("probe", "linear probing over frozen features");
    std::string pr_features, pr_dataset, pr_classes, pr_out = "report.json", pr_model;
    probe->add_option("--features", pr_features, "directory of .hemb files")->required();
    probe->add_option("--dataset", pr_dataset, "dataset manifest (.jsonl)")->required();
    probe->add_option("--classes", pr_classes, "comma-separated class order");
    probe->add_option("--out", pr_out, "output report JSON");
    probe->add_option("--save-model", pr_model, "also write the best checkpoint here");

    auto* mil = app.add_subcommand("mil", "attention-pooling MIL over slide bags");
    std::string mil_bags, mil_labels, mil_classes, mil_ratios, mil_out = "report.json", mil_model;
    mil->add_option("--bags", mil_bags, "directory of .hemb files (one per slide)")->required();
    mil->add_option("--labels", mil_labels, "JSON map slide_id -> class name")->required();
    mil->add_option("--classes", mil_classes, "comma-separated class order");
    mil->add_option("--ratios", mil_ratios, "train,val,test ratios (default 0.8,0.1,0.1)");
    mil->add_option("--out", mil_out, "output report JSON");
    mil->add_option("--save-model", mil_model, "also write the best checkpoint here");

    auto* report_cmd = app.add_subcommand("report", "validate and summarize a report");
    std::string rp_in, rp_out;
    report_cmd->add_option("--in", rp_in, "report JSON")->required();
    report_cmd->add_option("--out", rp_out, "re-emit canonical bytes here");

    auto* selftest = app.add_subcommand("selftest", "zero-data smoke test of the full pipeline");
    std::string st_workdir = "pathbench-selftest";
    int st_size = 4096;
    selftest->add_option("--workdir", st_workdir, "working directory for artifacts");
    selftest->add_option("--size", st_size, "synthetic slide edge in pixels");

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e);
            return code == 0 ? 0 : 2; // help exits 0, bad flags/values exit 2
        }

        // layering: defaults < PATHBENCH_SEED < config file < flags
        if (const char* env_seed = std::getenv("PATHBENCH_SEED"))
            cfg.set("run.seed", env_seed);
        if (!config_file.empty()) cfg.load_file(config_file);
        for (const auto& [key, value] : overrides)
            if (!value.empty()) cfg.set(key, value);
        auto set_if = [&](const std::string& key, const std::string& value) {
            if (!value.empty()) cfg.set(key, value);
        };
        set_if("run.seed", seed_flag);
        set_if("run.jobs", jobs_flag);
        set_if("tile.patch_size", patch_size_flag);
        set_if("tile.min_tissue", min_tissue_flag);
        set_if("tile.level", level_flag);
        set_if("tile.thumb_max", thumb_flag);
        set_if("stain.space", sf_space);
        set_if("stain.max_patches", sf_max);
        set_if("embed.encoder", em_encoder);
        set_if("embed.dim", em_dim);
        if (!mil_ratios.empty()) {
            std::stringstream ss(mil_ratios);
            std::string part;
            std::vector<std::string> parts;
            while (std::getline(ss, part, ',')) parts.push_back(part);
            if (parts.size() != 3)
                throw ValidationError("--ratios expects three comma-separated values");
            cfg.set("split.train", parts[0]);
            cfg.set("split.val", parts[1]);
            cfg.set("split.test", parts[2]);
        }
        cfg.validate();

        if (tile->parsed()) return cmd_tile(cfg, tile_input, tile_out);
        if (stainfit->parsed()) return cmd_stainfit(cfg, sf_manifest, sf_slides, sf_out);
        if (augment->parsed()) return cmd_augment(cfg, aug_in, aug_tpl, aug_out);
        if (embed->parsed()) return cmd_embed(cfg, em_manifest, em_slides, em_out);
        if (probe->parsed()) return cmd_probe(cfg, pr_features, pr_dataset, pr_classes, pr_out,
                                              pr_model);
        if (mil->parsed()) return cmd_mil(cfg, mil_bags, mil_labels, mil_classes, mil_out,
                                          mil_model);
        if (report_cmd->parsed()) return cmd_report(rp_in, rp_out);
        if (selftest->parsed()) return cmd_selftest(cfg, st_workdir, st_size);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace pathbench
