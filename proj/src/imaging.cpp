#include "cfstress/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "cfstress/error.hpp"

namespace cfstress {

namespace {

void require_valid(const ImageGray& img, const char* op) {
    if (img.width() < 1 || img.height() < 1) {
        throw DataError(std::string(op) + ": empty image");
    }
}

PixelArray clamp01(PixelArray a) {
    return a.min(1.0).max(0.0);
}

// PGM header tokens are separated by whitespace; '#' starts a comment that
// runs to end of line.
class PgmScanner {
  public:
    explicit PgmScanner(std::string_view bytes) : bytes_(bytes) {}

    std::string_view token() {
        skip_space_and_comments();
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            ++pos_;
        }
        if (start == pos_) throw DataError("PGM: truncated header");
        return bytes_.substr(start, pos_ - start);
    }

    int int_token(const char* what) {
        const auto tok = token();
        int value = 0;
        for (char ch : tok) {
            if (ch < '0' || ch > '9') {
                throw DataError(std::string("PGM: malformed ") + what);
            }
            value = value * 10 + (ch - '0');
            if (value > 1'000'000) throw DataError(std::string("PGM: oversized ") + what);
        }
        return value;
    }

    // consume exactly one whitespace byte after maxval, then return payload
    std::string_view payload() {
        if (pos_ >= bytes_.size() ||
            !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            throw DataError("PGM: missing separator before payload");
        }
        ++pos_;
        return bytes_.substr(pos_);
    }

  private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

ImageGray decode_pgm(std::string_view bytes) {
    PgmScanner scan(bytes);
    if (scan.token() != "P5") throw DataError("PGM: wrong magic (expected P5)");
    const int width = scan.int_token("width");
    const int height = scan.int_token("height");
    const int maxval = scan.int_token("maxval");
    if (width < 1 || height < 1) throw DataError("PGM: non-positive dimensions");
    if (maxval != 255) {
        throw DataError("PGM: unsupported maxval " + std::to_string(maxval) +
                        " (expected 255)");
    }
    const auto payload = scan.payload();
    const std::size_t expected = static_cast<std::size_t>(width) * height;
    if (payload.size() < expected) {
        throw DataError("PGM: truncated payload (" + std::to_string(payload.size()) +
                        " of " + std::to_string(expected) + " bytes)");
    }
    ImageGray img(height, width);
    for (Eigen::Index r = 0; r < height; ++r) {
        for (Eigen::Index c = 0; c < width; ++c) {
            const auto v = static_cast<unsigned char>(
                payload[static_cast<std::size_t>(r) * width + c]);
            img.pixels(r, c) = static_cast<double>(v) / 255.0;
        }
    }
    return img;
}

std::string encode_pgm(const ImageGray& img) {
    require_valid(img, "encode_pgm");
    std::string out = "P5\n" + std::to_string(img.width()) + " " +
                      std::to_string(img.height()) + "\n255\n";
    out.reserve(out.size() + static_cast<std::size_t>(img.width() * img.height()));
    for (Eigen::Index r = 0; r < img.height(); ++r) {
        for (Eigen::Index c = 0; c < img.width(); ++c) {
            // llround rounds half away from zero
            const long long v = std::llround(img.pixels(r, c) * 255.0);
            out.push_back(static_cast<char>(std::clamp<long long>(v, 0, 255)));
        }
    }
    return out;
}

ImageGray apply_gamma(const ImageGray& img, double gamma) {
    require_valid(img, "apply_gamma");
    if (!(gamma > 0.0)) throw ConfigError("apply_gamma requires gamma > 0");
    if (gamma == 1.0) return img;
    return ImageGray(clamp01(img.pixels.pow(gamma)));
}

ImageGray apply_contrast(const ImageGray& img, double factor,
                         std::optional<double> pivot) {
    require_valid(img, "apply_contrast");
    if (factor < 0.0) throw ConfigError("apply_contrast requires factor >= 0");
    if (factor == 1.0) return img;
    const double mu = pivot.value_or(img.pixels.mean());
    return ImageGray(clamp01(mu + factor * (img.pixels - mu)));
}

ImageGray apply_brightness(const ImageGray& img, double factor) {
    require_valid(img, "apply_brightness");
    if (factor < 0.0) throw ConfigError("apply_brightness requires factor >= 0");
    if (factor == 1.0) return img;
    return ImageGray(clamp01(factor * img.pixels));
}

ImageGray apply_sharpness(const ImageGray& img, double factor) {
    require_valid(img, "apply_sharpness");
    if (factor < 0.0) throw ConfigError("apply_sharpness requires factor >= 0");
    if (factor == 1.0) return img;
    const Eigen::Index h = img.height();
    const Eigen::Index w = img.width();
    PixelArray smooth = img.pixels;  // borders stay copies of the input
    for (Eigen::Index r = 1; r + 1 < h; ++r) {
        for (Eigen::Index c = 1; c + 1 < w; ++c) {
            const auto& p = img.pixels;
            smooth(r, c) = (p(r - 1, c - 1) + p(r - 1, c) + p(r - 1, c + 1) +
                            p(r, c - 1) + 5.0 * p(r, c) + p(r, c + 1) +
                            p(r + 1, c - 1) + p(r + 1, c) + p(r + 1, c + 1)) /
                           13.0;
        }
    }
    return ImageGray(clamp01(smooth + factor * (img.pixels - smooth)));
}

Eigen::VectorXd gaussian_kernel(int kernel_size, double sigma) {
    if (kernel_size < 1 || kernel_size % 2 == 0) {
        throw ConfigError("gaussian_kernel requires an odd kernel_size >= 1");
    }
    if (!(sigma > 0.0)) throw ConfigError("gaussian_kernel requires sigma > 0");
    const int half = (kernel_size - 1) / 2;
    Eigen::VectorXd w(kernel_size);
    for (int i = -half; i <= half; ++i) {
        w[i + half] = std::exp(-static_cast<double>(i) * i / (2.0 * sigma * sigma));
    }
    w /= w.sum();
    // force an exact unit sum after the division
    w[half] += 1.0 - w.sum();
    return w;
}

namespace {

// reflect-101: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
Eigen::Index mirror_index(Eigen::Index i, Eigen::Index n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

}  // namespace

ImageGray apply_gaussian_blur(const ImageGray& img, int kernel_size, double sigma) {
    require_valid(img, "apply_gaussian_blur");
    const Eigen::VectorXd w = gaussian_kernel(kernel_size, sigma);
    const int half = (kernel_size - 1) / 2;
    const Eigen::Index h = img.height();
    const Eigen::Index wd = img.width();

    PixelArray horiz(h, wd);
    for (Eigen::Index r = 0; r < h; ++r) {
        for (Eigen::Index c = 0; c < wd; ++c) {
            double acc = 0.0;
            for (int k = -half; k <= half; ++k) {
                acc += w[k + half] * img.pixels(r, mirror_index(c + k, wd));
            }
            horiz(r, c) = acc;
        }
    }
    PixelArray out(h, wd);
    for (Eigen::Index r = 0; r < h; ++r) {
        for (Eigen::Index c = 0; c < wd; ++c) {
            double acc = 0.0;
            for (int k = -half; k <= half; ++k) {
                acc += w[k + half] * horiz(mirror_index(r + k, h), c);
            }
            out(r, c) = acc;
        }
    }
    return ImageGray(clamp01(std::move(out)));
}

PerturbationKind parse_perturbation_kind(std::string_view tag) {
    if (tag == "GC") return PerturbationKind::GammaCorrection;
    if (tag == "CC") return PerturbationKind::ContrastChange;
    if (tag == "BC") return PerturbationKind::BrightnessChange;
    if (tag == "SC") return PerturbationKind::SharpnessChange;
    if (tag == "GB") return PerturbationKind::GaussianBlur;
    throw ConfigError("unknown perturbation kind '" + std::string(tag) +
                      "' (expected GC, CC, BC, SC or GB)");
}

void PerturbationSpec::validate() const {
    if (!(gamma > 0.0)) throw ConfigError("PerturbationSpec: gamma must be > 0");
    if (contrast_factor < 0.0 || brightness_factor < 0.0 || sharpness_factor < 0.0) {
        throw ConfigError("PerturbationSpec: factors must be >= 0");
    }
    if (kernel_size < 1 || kernel_size % 2 == 0) {
        throw ConfigError("PerturbationSpec: kernel_size must be odd and >= 1");
    }
    if (!(sigma > 0.0)) throw ConfigError("PerturbationSpec: sigma must be > 0");
}

std::string_view PerturbationSpec::tag() const {
    switch (kind) {
        case PerturbationKind::GammaCorrection: return "GC";
        case PerturbationKind::ContrastChange: return "CC";
        case PerturbationKind::BrightnessChange: return "BC";
        case PerturbationKind::SharpnessChange: return "SC";
        case PerturbationKind::GaussianBlur: return "GB";
    }
    return "GC";
}

ImageGray apply_perturbation(const ImageGray& img, const PerturbationSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case PerturbationKind::GammaCorrection:
            return apply_gamma(img, spec.gamma);
        case PerturbationKind::ContrastChange:
            return apply_contrast(img, spec.contrast_factor, spec.contrast_pivot);
        case PerturbationKind::BrightnessChange:
            return apply_brightness(img, spec.brightness_factor);
        case PerturbationKind::SharpnessChange:
            return apply_sharpness(img, spec.sharpness_factor);
        case PerturbationKind::GaussianBlur:
            return apply_gaussian_blur(img, spec.kernel_size, spec.sigma);
    }
    throw ConfigError("apply_perturbation: invalid kind");
}

}  // namespace cfstress
