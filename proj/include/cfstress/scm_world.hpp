#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfstress/imaging.hpp"
#include "cfstress/manifest.hpp"

namespace cfstress {

struct ScannerDomain {
    std::string name;
    double transfer_exponent = 1.0;  // g > 0
    double bias_amplitude = 0.0;     // b in [0, 0.2]
};

struct SexDomain {
    std::string name;
    double torso_aspect = 0.8;  // width/height ratio of the torso ellipse
};

struct WorldConfig {
    int image_size = 64;
    std::vector<ScannerDomain> scanner_domains;
    std::vector<SexDomain> sex_domains = {{"M", 0.95}, {"F", 0.70}};
    double base_prevalence = 0.3;
    // optional per-(scanner, sex) override, keyed "scanner/sex"
    std::map<std::string, double> subgroup_prevalence;
    // upper cutpoints on texture amplitude for the 4 density classes
    std::array<double, 4> density_cutpoints = {0.015, 0.020, 0.025, 0.030};
    double noise_floor = 0.0;  // additive observation noise range, [0, 0.05]
    std::uint64_t seed = 0;
    std::string task = "lesion";  // lesion (binary) or density (4-class)

    void validate() const;
    const ScannerDomain& scanner(std::string_view name) const;
    const SexDomain& sex(std::string_view name) const;
    double prevalence(const std::string& scanner_name, const std::string& sex_name) const;
};

WorldConfig world_config_from_json(const nlohmann::json& j);
nlohmann::json world_config_to_json(const WorldConfig& cfg);

// Exogenous factors of one record: everything the generator draws besides
// the parent attributes. Held fixed under interventions.
struct ExogenousNoise {
    struct Shape {
        double center_x = 0.5, center_y = 0.5;
        double size = 0.33;         // torso semi-axis along y, in [0,1] units
        double orientation = 0.0;   // radians
    } shape;
    struct Lesion {
        double offset_radius = 0.0;  // polar offset from torso center
        double offset_angle = 0.0;
        double radius = 0.05;
        double contrast = 0.2;
    } lesion;
    struct Texture {
        std::uint64_t seed = 0;
        double amplitude = 0.1;
    } texture;
    std::uint64_t observation_seed = 0;
};

nlohmann::json noise_to_json(const ExogenousNoise& u);
ExogenousNoise noise_from_json(const nlohmann::json& j);

using NoiseStore = std::map<std::string, ExogenousNoise, std::less<>>;

struct SampledWorld {
    RecordManifest manifest;
    ImageStore images;
    NoiseStore noise;
};

/// Fixed low-order cosine bias pattern with values in [-1, 1];
/// u, v are normalized pixel-center coordinates in (0, 1).
double bias_field(double u, double v);

/// Draws n records (scanner, sex, label, density, age, exogenous noise) and
/// renders their observations. Pure function of (cfg, n).
SampledWorld sample_world(const WorldConfig& cfg, int n);

/// Deterministic anatomy render: elliptical torso with a sex-specific aspect
/// ratio, a smooth texture field, and a circular lucent lesion iff label is
/// positive. Noise-free intensities stay within [0.12, 0.95].
ImageGray render_anatomy(const ExogenousNoise& u, const SexDomain& sex, int label,
                         int image_size);

/// Pixelwise x = clamp(a^g + b * B(p)); strictly monotone in a wherever the
/// clamp is inactive.
ImageGray scanner_transfer(const ImageGray& anatomy, std::string_view scanner,
                           const WorldConfig& cfg);

/// Exact preimage a = clamp(x - b * B(p))^(1/g); pixels whose forward value
/// clamped recover the clamp-boundary preimage.
ImageGray invert_scanner_transfer(const ImageGray& observed, std::string_view scanner,
                                  const WorldConfig& cfg);

/// Image-only scanner counterfactual: abduct anatomy from `from`, re-apply
/// the `to` mechanism. No stored noise required.
ImageGray counterfactual_scanner(const ImageGray& observed, std::string_view from,
                                 std::string_view to, const WorldConfig& cfg);

struct CounterfactualPair {
    enum class Provenance { AnalyticScanner, OracleNoise, External };

    ImageRecord factual_record;
    ImageGray factual;
    ImageGray twin;
    std::string intervention_attribute;  // comma-joined for composites
    std::string intervention_value;
    Provenance provenance = Provenance::External;
};

std::string_view provenance_name(CounterfactualPair::Provenance p);

/// Abduction-action-prediction with stored exogenous noise: re-renders with
/// u fixed and the intervened attributes replaced, then applies the factual
/// (or intervened) scanner transfer and the stored observation noise.
CounterfactualPair counterfactual_oracle(
    const ImageRecord& record, const ExogenousNoise& u,
    const std::vector<std::pair<std::string, std::string>>& interventions,
    const WorldConfig& cfg);

CounterfactualPair counterfactual_oracle(const ImageRecord& record,
                                         const ExogenousNoise& u,
                                         std::string_view attribute,
                                         std::string_view value,
                                         const WorldConfig& cfg);

/// Validates externally generated pairs listed as
/// `factual_id,twin_source,attribute,value` rows. Twins are looked up by
/// twin_source and must match the factual dimensions; intervention values
/// must be allowed by the schema.
std::vector<CounterfactualPair> ingest_counterfactual_pairs(
    std::string_view pairs_csv, const RecordManifest& manifest,
    const ImageStore& factual_images, const ImageStore& twin_images);

}  // namespace cfstress
