#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cfstress {

// Row-major raster of intensities in [0, 1]; rows = height, cols = width.
using PixelArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ImageGray {
    PixelArray pixels;

    ImageGray() = default;
    ImageGray(Eigen::Index height, Eigen::Index width) : pixels(height, width) {}
    explicit ImageGray(PixelArray p) : pixels(std::move(p)) {}

    Eigen::Index width() const { return pixels.cols(); }
    Eigen::Index height() const { return pixels.rows(); }
};

using ImageStore = std::map<std::string, ImageGray, std::less<>>;

/// Binary PGM (P5, maxval 255). Stored byte v maps to intensity v / 255.
ImageGray decode_pgm(std::string_view bytes);

/// Intensity t maps to byte round(t * 255), half away from zero, clamped.
std::string encode_pgm(const ImageGray& img);

ImageGray apply_gamma(const ImageGray& img, double gamma);

/// Pixel t -> clamp(pivot + factor * (t - pivot)); pivot defaults to the
/// image mean, with a fixed-pivot variant for toolkits that use 0.5.
ImageGray apply_contrast(const ImageGray& img, double factor,
                         std::optional<double> pivot = std::nullopt);

ImageGray apply_brightness(const ImageGray& img, double factor);

/// Blend against a 3x3 [[1,1,1],[1,5,1],[1,1,1]]/13 smoothing of the image;
/// border pixels of the smoothed image are copied from the input.
ImageGray apply_sharpness(const ImageGray& img, double factor);

/// Normalized 1-D Gaussian taps, w_i proportional to exp(-i^2 / (2 sigma^2))
/// for offsets in [-(k-1)/2, (k-1)/2]; sums to 1 exactly.
Eigen::VectorXd gaussian_kernel(int kernel_size, double sigma);

/// Separable convolution (horizontal then vertical) with reflect-101 borders.
ImageGray apply_gaussian_blur(const ImageGray& img, int kernel_size, double sigma);

enum class PerturbationKind {
    GammaCorrection,
    ContrastChange,
    BrightnessChange,
    SharpnessChange,
    GaussianBlur,
};

PerturbationKind parse_perturbation_kind(std::string_view tag);

// Parameter defaults: GC gamma 1.7, CC factor 1.7, BC factor 1.5,
// SC factor 2.5, GB kernel 7 / sigma 1.5.
struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::GammaCorrection;
    double gamma = 1.7;
    double contrast_factor = 1.7;
    std::optional<double> contrast_pivot;  // unset -> image mean
    double brightness_factor = 1.5;
    double sharpness_factor = 2.5;
    int kernel_size = 7;
    double sigma = 1.5;

    void validate() const;
    std::string_view tag() const;  // GC / CC / BC / SC / GB
};

ImageGray apply_perturbation(const ImageGray& img, const PerturbationSpec& spec);

}  // namespace cfstress
