#include "pathbench/slide.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <stdexcept>

#include <json.hpp>

#include "pathbench/png_io.hpp"

namespace pathbench {

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error(what); }

} // namespace

struct Slide::Impl {
    std::string id;
    std::vector<LevelInfo> levels;
    std::vector<std::filesystem::path> level_files; // one per level

    mutable std::mutex cache_mutex;
    mutable std::vector<std::shared_ptr<const RGBImage>> cache;

    const RGBImage& level_image(int level) const {
        std::lock_guard<std::mutex> lock(cache_mutex);
        auto& slot = cache[level];
        if (!slot) {
            auto img = std::make_shared<RGBImage>(load_image(level_files[level]));
            const auto& want = levels[level];
            if (img->width != want.width || img->height != want.height)
                fail(level_files[level].string() + ": level dimensions " +
                     std::to_string(img->width) + "x" + std::to_string(img->height) +
                     " do not match metadata " + std::to_string(want.width) + "x" +
                     std::to_string(want.height));
            slot = std::move(img);
        }
        return *slot;
    }
};

Slide Slide::open(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) fail(path.string() + ": not found");

    auto impl = std::make_shared<Impl>();
    if (fs::is_directory(path)) {
        fs::path meta_path = path / "meta.json";
        if (!fs::exists(meta_path))
            fail(path.string() + ": missing pyramid metadata file meta.json");
        std::ifstream in(meta_path);
        nlohmann::json meta;
        try {
            in >> meta;
        } catch (const nlohmann::json::exception& e) {
            fail(meta_path.string() + ": corrupt metadata: " + e.what());
        }
        if (!meta.contains("id") || !meta.contains("levels") || !meta["levels"].is_array() ||
            meta["levels"].empty())
            fail(meta_path.string() + ": corrupt metadata: need id and non-empty levels");
        impl->id = meta["id"].get<std::string>();
        for (const auto& lv : meta["levels"]) {
            LevelInfo info;
            info.width = lv.at("width").get<int>();
            info.height = lv.at("height").get<int>();
            if (info.width < 1 || info.height < 1)
                fail(meta_path.string() + ": corrupt metadata: level dimensions must be >= 1");
            impl->levels.push_back(info);
            impl->level_files.push_back(path / lv.at("file").get<std::string>());
        }
        const auto& l0 = impl->levels.front();
        for (std::size_t i = 0; i < impl->levels.size(); ++i) {
            auto& lv = impl->levels[i];
            lv.downsample = double(l0.width) / lv.width;
            if (i > 0 && lv.downsample <= impl->levels[i - 1].downsample + 1e-9)
                fail(meta_path.string() + ": corrupt metadata: levels must have ascending downsample");
        }
    } else {
        // flat raster: decode eagerly, it defines the only level
        auto img = std::make_shared<RGBImage>(load_image(path));
        impl->id = path.stem().string();
        impl->levels.push_back(LevelInfo{img->width, img->height, 1.0});
        impl->level_files.push_back(path);
        impl->cache.push_back(std::move(img));
    }
    impl->cache.resize(impl->levels.size());
    return Slide(std::move(impl));
}

const std::string& Slide::id() const { return impl_->id; }

const std::vector<LevelInfo>& Slide::levels() const { return impl_->levels; }

RGBImage Slide::read_region(int level, int x, int y, int w, int h) const {
    if (level < 0 || std::size_t(level) >= impl_->levels.size())
        fail("read_region: invalid level index " + std::to_string(level));
    if (w < 1 || h < 1) fail("read_region: empty region");
    const LevelInfo& info = impl_->levels[level];
    if (x < 0 || y < 0 || x + w > info.width || y + h > info.height)
        fail("read_region: rectangle out of bounds");

    const RGBImage& src = impl_->level_image(level);
    RGBImage out;
    out.width = w;
    out.height = h;
    out.pixels.resize(std::size_t(3) * w * h);
    for (int row = 0; row < h; ++row)
        std::copy_n(src.px(x, y + row), std::size_t(3) * w, out.px(0, row));
    return out;
}

std::pair<RGBImage, double> Slide::thumbnail(int max_dim) const {
    if (max_dim < 16) fail("thumbnail: max_dim must be >= 16");
    const LevelInfo& l0 = impl_->levels.front();
    int out_w = l0.width, out_h = l0.height;
    const int longest = std::max(l0.width, l0.height);
    if (longest > max_dim) {
        const double scale = double(longest) / max_dim;
        out_w = std::max(1, int(std::lround(l0.width / scale)));
        out_h = std::max(1, int(std::lround(l0.height / scale)));
    }
    // smallest level that still covers the target
    int pick = 0;
    for (int i = int(impl_->levels.size()) - 1; i >= 0; --i) {
        if (impl_->levels[i].width >= out_w && impl_->levels[i].height >= out_h) {
            pick = i;
            break;
        }
    }
    RGBImage img = box_resize(impl_->level_image(pick), out_w, out_h);
    return {std::move(img), double(l0.width) / out_w};
}

} // namespace pathbench
