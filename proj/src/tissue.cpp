#include "pathbench/tissue.hpp"

#include <cmath>
#include <stdexcept>

#include "pathbench/parallel.hpp"
#include "pathbench/rng.hpp"

namespace pathbench {

Histogram256 histogram(const GrayImage& gray) {
    Histogram256 h{};
    for (auto v : gray.values) ++h[v];
    return h;
}

namespace {

// Between-class variance ranking, exact. With N pixels total, N0/S0 the
// count/value sum of class 0 (values <= t) and S the full sum,
//   sigma_b^2(t) = (S0*N - S*N0)^2 / (N^2 * N0 * (N - N0)),
// so candidates compare as a^2/d with a = S0*N - S*N0 (<= 2^63 for any
// 8-bit image below ~2^26 pixels) and d = N0*(N-N0). Cross-multiplying
// a1^2 * d2 needs up to 192 bits; compare (u128 * u64) as hi/lo limbs.
struct Wide192 {
    unsigned __int128 hi;
    std::uint64_t lo;
};

Wide192 mul_u128_u64(unsigned __int128 a, std::uint64_t b) {
    const std::uint64_t a_hi = std::uint64_t(a >> 64);
    const std::uint64_t a_lo = std::uint64_t(a);
    const unsigned __int128 lo = (unsigned __int128)a_lo * b;
    const unsigned __int128 hi = (unsigned __int128)a_hi * b + (lo >> 64);
    return {hi, std::uint64_t(lo)};
}

// true iff a1^2/d1 > a2^2/d2 (d1, d2 > 0)
bool variance_greater(std::uint64_t a1, std::uint64_t d1, std::uint64_t a2, std::uint64_t d2) {
    const Wide192 lhs = mul_u128_u64((unsigned __int128)a1 * a1, d2);
    const Wide192 rhs = mul_u128_u64((unsigned __int128)a2 * a2, d1);
    if (lhs.hi != rhs.hi) return lhs.hi > rhs.hi;
    return lhs.lo > rhs.lo;
}

} // namespace

OtsuThreshold otsu_from_histogram(const Histogram256& hist) {
    std::uint64_t n_total = 0, s_total = 0;
    for (int v = 0; v < 256; ++v) {
        n_total += hist[v];
        s_total += hist[v] * std::uint64_t(v);
    }
    if (n_total == 0) throw std::invalid_argument("otsu: empty image");

    OtsuThreshold best; // degenerate until a strictly positive variance shows up
    std::uint64_t best_a = 0, best_d = 1;
    std::uint64_t n0 = 0, s0 = 0;
    for (int t = 0; t < 256; ++t) {
        n0 += hist[t];
        s0 += hist[t] * std::uint64_t(t);
        const std::uint64_t n1 = n_total - n0;
        if (n0 == 0 || n1 == 0) continue;
        const __int128 a_signed = (__int128)s0 * n_total - (__int128)s_total * n0;
        const std::uint64_t a = std::uint64_t(a_signed < 0 ? -a_signed : a_signed);
        if (a == 0) continue; // equal class means, zero variance
        const std::uint64_t d = n0 * n1;
        if (best.degenerate || variance_greater(a, d, best_a, best_d)) {
            best = OtsuThreshold{false, t};
            best_a = a;
            best_d = d;
        }
    }
    return best;
}

OtsuThreshold otsu_threshold(const GrayImage& gray) {
    if (gray.values.empty()) throw std::invalid_argument("otsu: empty image");
    return otsu_from_histogram(histogram(gray));
}

TissueMask tissue_mask(const GrayImage& gray, OtsuThreshold threshold, double scale_factor) {
    TissueMask mask;
    mask.width = gray.width;
    mask.height = gray.height;
    mask.threshold = threshold;
    mask.scale_factor = scale_factor;
    mask.bits.assign(std::size_t(gray.width) * gray.height, 0);
    if (!threshold.degenerate) {
        for (std::size_t i = 0; i < gray.values.size(); ++i)
            mask.bits[i] = gray.values[i] <= threshold.value ? 1 : 0;
    }
    return mask;
}

std::vector<std::pair<long, long>> tile_grid(long level_width, long level_height, int patch_size) {
    if (patch_size < 1) throw std::invalid_argument("tile_grid: patch_size must be >= 1");
    const long nx = level_width / patch_size;
    const long ny = level_height / patch_size;
    std::vector<std::pair<long, long>> coords;
    coords.reserve(std::size_t(std::max(0L, nx)) * std::size_t(std::max(0L, ny)));
    for (long j = 0; j < ny; ++j)
        for (long i = 0; i < nx; ++i)
            coords.emplace_back(i * patch_size, j * patch_size);
    return coords;
}

double patch_tissue_fraction(const TissueMask& mask, long x0, long y0, long size0) {
    const double s = mask.scale_factor;
    long mx0 = long(std::floor(x0 / s));
    long my0 = long(std::floor(y0 / s));
    long mx1 = long(std::ceil((x0 + size0) / s));
    long my1 = long(std::ceil((y0 + size0) / s));
    mx0 = std::max(mx0, 0L);
    my0 = std::max(my0, 0L);
    mx1 = std::min<long>(mx1, mask.width);
    my1 = std::min<long>(my1, mask.height);
    if (mx0 >= mx1 || my0 >= my1)
        throw std::runtime_error("patch_tissue_fraction: footprint outside mask");

    std::uint64_t hit = 0;
    for (long y = my0; y < my1; ++y)
        for (long x = mx0; x < mx1; ++x)
            hit += mask.bits[std::size_t(y) * mask.width + x];
    return double(hit) / (double(mx1 - mx0) * double(my1 - my0));
}

PatchManifest build_manifest(const Slide& slide, const TilingConfig& cfg) {
    if (cfg.patch_size < 1) throw std::invalid_argument("build_manifest: patch_size must be >= 1");
    if (cfg.min_tissue_fraction < 0.0 || cfg.min_tissue_fraction > 1.0)
        throw std::invalid_argument("build_manifest: min_tissue_fraction must be in [0,1]");
    if (cfg.level < 0 || std::size_t(cfg.level) >= slide.levels().size())
        throw std::invalid_argument("build_manifest: invalid level index");

    auto [thumb, scale] = slide.thumbnail(cfg.thumbnail_max_dim);
    const GrayImage gray = luma(thumb);
    const TissueMask mask = tissue_mask(gray, otsu_threshold(gray), scale);

    const LevelInfo& lv = slide.levels()[cfg.level];
    const auto grid = tile_grid(lv.width, lv.height, cfg.patch_size);

    std::vector<double> fraction(grid.size());
    parallel_for(grid.size(), cfg.jobs, [&](std::size_t i) {
        const auto [x, y] = grid[i];
        const long x0 = std::lround(x * lv.downsample);
        const long y0 = std::lround(y * lv.downsample);
        const long size0 = std::lround(cfg.patch_size * lv.downsample);
        fraction[i] = patch_tissue_fraction(mask, x0, y0, size0);
    });

    PatchManifest m;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (fraction[i] < cfg.min_tissue_fraction) continue;
        PatchRecord r;
        r.slide_id = slide.id();
        r.level = cfg.level;
        r.x = grid[i].first;
        r.y = grid[i].second;
        r.size = cfg.patch_size;
        r.tissue_fraction = fraction[i];
        m.records.push_back(std::move(r));
    }
    normalize_manifest(m);
    return m;
}

std::vector<PatchRecord> sample_unique(const PatchManifest& manifest, std::size_t n,
                                       std::uint64_t seed) {
    if (n > manifest.records.size())
        throw std::invalid_argument("sample_unique: n exceeds available records");
    std::vector<std::size_t> idx(manifest.records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    // partial Fisher-Yates: the first n slots are a uniform sample
    for (std::size_t i = 0; i < n; ++i)
        std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    std::vector<PatchRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(manifest.records[idx[i]]);
    return out;
}

} // namespace pathbench
