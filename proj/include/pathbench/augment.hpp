#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "pathbench/colorspace.hpp"
#include "pathbench/image.hpp"
#include "pathbench/rng.hpp"

namespace pathbench {

/// Rotation about the pixel-grid center ((W-1)/2, (H-1)/2), counter-
/// clockwise, bilinear interpolation with symmetric-reflect padding,
/// same-size output. Exact multiples of 90 degrees take the exact
/// grid-permutation path. Square images only.
RGBImage rotate(const RGBImage& img, double angle_deg);

enum class FlipAxis { Horizontal, Vertical };

RGBImage flip(const RGBImage& img, FlipAxis axis);

/// Max relative deltas; a factor for channel c is drawn from
/// U[1 - c, 1 + c], the hue shift from U[-hue, hue] in turns.
struct JitterParams {
    double brightness = 0.0;
    double contrast = 0.0;
    double saturation = 0.0;
    double hue = 0.0;
};

// Deterministic sub-transforms; each quantizes back to 8-bit on exit.
RGBImage jitter_brightness(const RGBImage& img, double factor);
RGBImage jitter_contrast(const RGBImage& img, double factor);   // pivots on mean luma
RGBImage jitter_saturation(const RGBImage& img, double factor); // blends toward per-pixel luma
RGBImage jitter_hue(const RGBImage& img, double shift);         // HSV hue + shift mod 1

/// Draws the four factors (brightness, contrast, saturation, hue — in that
/// order), then applies the sub-transforms in a seeded random order.
RGBImage color_jitter(const RGBImage& img, const JitterParams& params, Rng& rng);

/// Per-channel color statistics of one image population: mean/std of the
/// per-image channel means, and mean/std of the per-image channel stds,
/// in the channel-native units of the fitted color space.
struct StainTemplate {
    ColorSpace space = ColorSpace::Lab;
    Eigen::Vector3d mean_of_means = Eigen::Vector3d::Zero();
    Eigen::Vector3d std_of_means = Eigen::Vector3d::Zero();
    Eigen::Vector3d mean_of_stds = Eigen::Vector3d::Zero();
    Eigen::Vector3d std_of_stds = Eigen::Vector3d::Zero();
    std::size_t n_fitted = 0;
};

/// Per-channel mean and population standard deviation in `space`.
std::pair<Eigen::Vector3d, Eigen::Vector3d> stain_stats(const RGBImage& img, ColorSpace space);

/// Streaming template fit over an image corpus.
class StainFitter {
public:
    explicit StainFitter(ColorSpace space) : space_(space) {}
    void add(const RGBImage& img);
    /// Throws if no image was added. Spread parameters are population stds
    /// (zero for a single image).
    StainTemplate finish() const;

private:
    ColorSpace space_;
    std::vector<Eigen::Vector3d> means_;
    std::vector<Eigen::Vector3d> stds_;
};

StainTemplate fit_stain_template(const std::vector<RGBImage>& corpus, ColorSpace space);

void write_stain_template(const StainTemplate& tpl, const std::filesystem::path& path,
                          const std::string& config_hash);
StainTemplate read_stain_template(const std::filesystem::path& path);

/// Core per-channel transfer in template space:
/// out_c = (in_c - mu_in_c) / max(sigma_in_c, eps) * sigma_tgt_c + mu_tgt_c.
Eigen::MatrixX3d stain_transfer(const Eigen::MatrixX3d& planes, const Eigen::Vector3d& mu_in,
                                const Eigen::Vector3d& sigma_in, const Eigen::Vector3d& mu_tgt,
                                const Eigen::Vector3d& sigma_tgt);

/// Re-normalizes the image's channel statistics toward a virtual template
/// sampled from tpl: per channel, mu* ~ N(m_mu, s_mu) and
/// sigma* ~ N(m_sigma, s_sigma) clamped to >= 1e-6, drawn in channel order
/// (mu then sigma per channel).
RGBImage randstainna(const RGBImage& img, const StainTemplate& tpl, Rng& rng);

struct AugmentConfig {
    bool rotation = true;
    double p_hflip = 0.5;
    double p_vflip = 0.5;
    double p_stain = 0.5;
    JitterParams jitter{0.1, 0.1, 0.1, 0.02};
};

/// One training view: random rotation (angle ~ U[0, 360)), independent
/// flips, stain resampling with probability p_stain (when a template is
/// given), then color jitter. Gate draws happen in that fixed order
/// regardless of configuration, so a seed fully determines the output.
RGBImage augment_view(const RGBImage& img, const AugmentConfig& cfg, const StainTemplate* tpl,
                      Rng& rng);

} // namespace pathbench
