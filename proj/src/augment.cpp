#include "pathbench/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "pathbench/version.hpp"

namespace pathbench {

namespace {

constexpr double kSigmaFloor = 1e-6;

inline std::uint8_t clamp_u8(double v) {
    return std::uint8_t(std::clamp(std::lround(v), 0L, 255L));
}

// symmetric reflection: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

double pixel_luma(const std::uint8_t* p) {
    return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
}

RGBImage rotate_exact_quarter(const RGBImage& img, int quarter_turns) {
    const int w = img.width, h = img.height;
    RGBImage out;
    out.width = w;
    out.height = h;
    out.pixels.resize(img.pixels.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int sx, sy;
            switch (quarter_turns) {
                case 1: sx = w - 1 - y; sy = x; break;
                case 2: sx = w - 1 - x; sy = h - 1 - y; break;
                case 3: sx = y; sy = h - 1 - x; break;
                default: sx = x; sy = y; break;
            }
            std::copy_n(img.px(sx, sy), 3, out.px(x, y));
        }
    }
    return out;
}

} // namespace

RGBImage rotate(const RGBImage& img, double angle_deg) {
    if (img.width != img.height)
        throw std::invalid_argument("rotate: square image required");

    const double quarter = angle_deg / 90.0;
    if (quarter == std::floor(quarter)) {
        int turns = int(std::fmod(quarter, 4.0));
        if (turns < 0) turns += 4;
        return rotate_exact_quarter(img, turns);
    }

    const int n = img.width;
    const double c = (n - 1) / 2.0;
    const double rad = angle_deg * M_PI / 180.0;
    const double cos_t = std::cos(rad), sin_t = std::sin(rad);

    RGBImage out;
    out.width = n;
    out.height = n;
    out.pixels.resize(img.pixels.size());
    for (int y = 0; y < n; ++y) {
        const double v = y - c;
        for (int x = 0; x < n; ++x) {
            const double u = x - c;
            const double sx = c + u * cos_t - v * sin_t;
            const double sy = c + u * sin_t + v * cos_t;
            const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            const int xa = reflect_index(x0, n), xb = reflect_index(x0 + 1, n);
            const int ya = reflect_index(y0, n), yb = reflect_index(y0 + 1, n);
            const std::uint8_t* p00 = img.px(xa, ya);
            const std::uint8_t* p10 = img.px(xb, ya);
            const std::uint8_t* p01 = img.px(xa, yb);
            const std::uint8_t* p11 = img.px(xb, yb);
            std::uint8_t* q = out.px(x, y);
            for (int ch = 0; ch < 3; ++ch) {
                const double top = p00[ch] * (1 - fx) + p10[ch] * fx;
                const double bot = p01[ch] * (1 - fx) + p11[ch] * fx;
                q[ch] = clamp_u8(top * (1 - fy) + bot * fy);
            }
        }
    }
    return out;
}

RGBImage flip(const RGBImage& img, FlipAxis axis) {
    RGBImage out;
    out.width = img.width;
    out.height = img.height;
    out.pixels.resize(img.pixels.size());
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const int sx = axis == FlipAxis::Horizontal ? img.width - 1 - x : x;
            const int sy = axis == FlipAxis::Vertical ? img.height - 1 - y : y;
            std::copy_n(img.px(sx, sy), 3, out.px(x, y));
        }
    }
    return out;
}

RGBImage jitter_brightness(const RGBImage& img, double factor) {
    RGBImage out = img;
    for (auto& v : out.pixels) v = clamp_u8(v * factor);
    return out;
}

RGBImage jitter_contrast(const RGBImage& img, double factor) {
    double mean = 0.0;
    const std::size_t n = std::size_t(img.width) * img.height;
    for (std::size_t i = 0; i < n; ++i) mean += pixel_luma(img.pixels.data() + 3 * i);
    mean /= double(n);
    RGBImage out = img;
    for (auto& v : out.pixels) v = clamp_u8((v - mean) * factor + mean);
    return out;
}

RGBImage jitter_saturation(const RGBImage& img, double factor) {
    RGBImage out = img;
    for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
        std::uint8_t* p = out.pixels.data() + i;
        const double g = pixel_luma(p);
        for (int c = 0; c < 3; ++c) p[c] = clamp_u8(g + (p[c] - g) * factor);
    }
    return out;
}

RGBImage jitter_hue(const RGBImage& img, double shift) {
    RGBImage out = img;
    for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
        std::uint8_t* p = out.pixels.data() + i;
        Eigen::Vector3d hsv = rgb_to_hsv(p[0], p[1], p[2]);
        hsv[0] += shift;
        hsv[0] -= std::floor(hsv[0]);
        hsv_to_rgb(hsv, p[0], p[1], p[2]);
    }
    return out;
}

RGBImage color_jitter(const RGBImage& img, const JitterParams& params, Rng& rng) {
    const double fb = rng.uniform(1.0 - params.brightness, 1.0 + params.brightness);
    const double fc = rng.uniform(1.0 - params.contrast, 1.0 + params.contrast);
    const double fs = rng.uniform(1.0 - params.saturation, 1.0 + params.saturation);
    const double dh = rng.uniform(-params.hue, params.hue);

    std::array<int, 4> order = {0, 1, 2, 3};
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);

    RGBImage out = img;
    for (int op : order) {
        switch (op) {
            case 0: out = jitter_brightness(out, fb); break;
            case 1: out = jitter_contrast(out, fc); break;
            case 2: out = jitter_saturation(out, fs); break;
            default: out = jitter_hue(out, dh); break;
        }
    }
    return out;
}

namespace {

std::pair<Eigen::Vector3d, Eigen::Vector3d> plane_stats(const Eigen::MatrixX3d& planes) {
    const Eigen::Vector3d mu = planes.colwise().mean().transpose();
    const Eigen::Vector3d var =
        (planes.rowwise() - mu.transpose()).array().square().colwise().mean().transpose();
    return {mu, var.cwiseSqrt()};
}

} // namespace

std::pair<Eigen::Vector3d, Eigen::Vector3d> stain_stats(const RGBImage& img, ColorSpace space) {
    return plane_stats(image_to_planes(img, space));
}

void StainFitter::add(const RGBImage& img) {
    auto [mu, sigma] = stain_stats(img, space_);
    means_.push_back(mu);
    stds_.push_back(sigma);
}

StainTemplate StainFitter::finish() const {
    if (means_.empty()) throw std::invalid_argument("fit_stain_template: empty corpus");
    const double n = double(means_.size());
    StainTemplate tpl;
    tpl.space = space_;
    tpl.n_fitted = means_.size();
    for (const auto& m : means_) tpl.mean_of_means += m;
    for (const auto& s : stds_) tpl.mean_of_stds += s;
    tpl.mean_of_means /= n;
    tpl.mean_of_stds /= n;
    Eigen::Vector3d var_mu = Eigen::Vector3d::Zero(), var_sigma = Eigen::Vector3d::Zero();
    for (const auto& m : means_) var_mu += (m - tpl.mean_of_means).cwiseAbs2();
    for (const auto& s : stds_) var_sigma += (s - tpl.mean_of_stds).cwiseAbs2();
    tpl.std_of_means = (var_mu / n).cwiseSqrt();
    tpl.std_of_stds = (var_sigma / n).cwiseSqrt();
    return tpl;
}

StainTemplate fit_stain_template(const std::vector<RGBImage>& corpus, ColorSpace space) {
    StainFitter fitter(space);
    for (const auto& img : corpus) fitter.add(img);
    return fitter.finish();
}

void write_stain_template(const StainTemplate& tpl, const std::filesystem::path& path,
                          const std::string& config_hash) {
    nlohmann::json j;
    j["color_space"] = to_string(tpl.space);
    j["n_fitted"] = tpl.n_fitted;
    j["config_hash"] = config_hash;
    j["version"] = kVersion;
    nlohmann::json channels = nlohmann::json::array();
    for (int c = 0; c < 3; ++c)
        channels.push_back({tpl.mean_of_means[c], tpl.std_of_means[c], tpl.mean_of_stds[c],
                            tpl.std_of_stds[c]});
    j["channels"] = channels;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    out << j.dump(2) << "\n";
}

StainTemplate read_stain_template(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path.string() + ": not found");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": corrupt template: " + e.what());
    }
    StainTemplate tpl;
    tpl.space = color_space_from_string(j.at("color_space").get<std::string>());
    tpl.n_fitted = j.at("n_fitted").get<std::size_t>();
    const auto& channels = j.at("channels");
    if (!channels.is_array() || channels.size() != 3)
        throw std::runtime_error(path.string() + ": corrupt template: need 3 channel arrays");
    for (int c = 0; c < 3; ++c) {
        const auto& ch = channels[c];
        if (!ch.is_array() || ch.size() != 4)
            throw std::runtime_error(path.string() + ": corrupt template: channel array size");
        tpl.mean_of_means[c] = ch[0].get<double>();
        tpl.std_of_means[c] = ch[1].get<double>();
        tpl.mean_of_stds[c] = ch[2].get<double>();
        tpl.std_of_stds[c] = ch[3].get<double>();
        if (tpl.std_of_means[c] < 0 || tpl.mean_of_stds[c] < 0 || tpl.std_of_stds[c] < 0)
            throw std::runtime_error(path.string() + ": corrupt template: negative spread");
    }
    if (tpl.n_fitted < 1) throw std::runtime_error(path.string() + ": corrupt template: n_fitted");
    return tpl;
}

Eigen::MatrixX3d stain_transfer(const Eigen::MatrixX3d& planes, const Eigen::Vector3d& mu_in,
                                const Eigen::Vector3d& sigma_in, const Eigen::Vector3d& mu_tgt,
                                const Eigen::Vector3d& sigma_tgt) {
    Eigen::MatrixX3d out(planes.rows(), 3);
    for (int c = 0; c < 3; ++c) {
        const double denom = std::max(sigma_in[c], kSigmaFloor);
        out.col(c) = (planes.col(c).array() - mu_in[c]) / denom * sigma_tgt[c] + mu_tgt[c];
    }
    return out;
}

RGBImage randstainna(const RGBImage& img, const StainTemplate& tpl, Rng& rng) {
    Eigen::Vector3d mu_tgt, sigma_tgt;
    for (int c = 0; c < 3; ++c) {
        mu_tgt[c] = rng.normal(tpl.mean_of_means[c], tpl.std_of_means[c]);
        sigma_tgt[c] = std::max(rng.normal(tpl.mean_of_stds[c], tpl.std_of_stds[c]), kSigmaFloor);
    }
    const Eigen::MatrixX3d planes = image_to_planes(img, tpl.space);
    const auto [mu_in, sigma_in] = plane_stats(planes);
    const Eigen::MatrixX3d shifted = stain_transfer(planes, mu_in, sigma_in, mu_tgt, sigma_tgt);
    return planes_to_image(shifted, img.width, img.height, tpl.space);
}

RGBImage augment_view(const RGBImage& img, const AugmentConfig& cfg, const StainTemplate* tpl,
                      Rng& rng) {
    // gate draws in fixed order so the stream shape is config-independent
    const double angle = rng.uniform(0.0, 360.0);
    const double u_hflip = rng.uniform();
    const double u_vflip = rng.uniform();
    const double u_stain = rng.uniform();

    RGBImage out = cfg.rotation ? rotate(img, angle) : img;
    if (u_hflip < cfg.p_hflip) out = flip(out, FlipAxis::Horizontal);
    if (u_vflip < cfg.p_vflip) out = flip(out, FlipAxis::Vertical);
    if (tpl != nullptr && u_stain < cfg.p_stain) out = randstainna(out, *tpl, rng);
    return color_jitter(out, cfg.jitter, rng);
}

} // namespace pathbench
