#include "cfstress/scm_world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "cfstress/csv.hpp"
#include "cfstress/error.hpp"
#include "cfstress/rng.hpp"

namespace cfstress {

namespace {

constexpr double kBackground = 0.15;
constexpr double kTorsoBase = 0.30;
constexpr double kAnatomyCeiling = 0.95;
// Keeps every anatomy value invertible under the strongest allowed scanner:
// 0.12^1.4 exceeds the largest possible negative bias contribution.
constexpr double kAnatomyFloor = 0.12;
constexpr double kPi = 3.14159265358979323846;

// Lesions are placed within 0.10 * torso size of the center so they stay
// inside the ellipse for every aspect ratio >= 0.65.
constexpr double kMinAspect = 0.65;
constexpr double kLesionOffsetFrac = 0.15;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

struct TextureField {
    std::array<double, 4> fx{}, fy{}, phase{};
    double amplitude = 0.0;

    explicit TextureField(const ExogenousNoise::Texture& t) : amplitude(t.amplitude) {
        Rng rng(derive_seed(t.seed, 0x746578ULL));
        for (int k = 0; k < 4; ++k) {
            fx[k] = rng.uniform(0.5, 3.0);
            fy[k] = rng.uniform(0.5, 3.0);
            phase[k] = rng.uniform(0.0, 2.0 * kPi);
        }
    }

    double operator()(double u, double v) const {
        double s = 0.0;
        for (int k = 0; k < 4; ++k)
            s += std::cos(2.0 * kPi * (fx[k] * u + fy[k] * v) + phase[k]);
        return 0.25 * s;
    }
};

std::string format_id(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%06d", prefix, i);
    return buf;
}

int density_class(double amplitude, const std::array<double, 4>& cutpoints) {
    for (int k = 0; k < 3; ++k)
        if (amplitude <= cutpoints[static_cast<std::size_t>(k)]) return k;
    return 3;
}

void add_observation_noise(ImageGray& img, std::uint64_t observation_seed,
                           double noise_floor) {
    if (noise_floor <= 0.0) return;
    Rng rng(derive_seed(observation_seed, 0x6f6273ULL));
    const Eigen::Index h = img.height(), w = img.width();
    for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index x = 0; x < w; ++x)
            img.pixels(y, x) = clamp01(img.pixels(y, x) + rng.uniform(0.0, noise_floor));
}

ImageGray render_observation(const ExogenousNoise& u, const SexDomain& sex, int label,
                             std::string_view scanner, const WorldConfig& cfg) {
    ImageGray img = scanner_transfer(render_anatomy(u, sex, label, cfg.image_size),
                                     scanner, cfg);
    add_observation_noise(img, u.observation_seed, cfg.noise_floor);
    return img;
}

int lesion_bit(const ImageRecord& rec) {
    const std::string* v = rec.attribute("lesion");
    if (v == nullptr)
        throw DataError("record '" + rec.image_id + "' lacks a lesion column");
    if (*v == "0") return 0;
    if (*v == "1") return 1;
    throw DataError("record '" + rec.image_id + "' has lesion value '" + *v +
                    "', expected 0 or 1");
}

}  // namespace

void WorldConfig::validate() const {
    if (image_size < 8 || image_size > 1024)
        throw ConfigError("image_size must lie in [8, 1024]");
    if (scanner_domains.empty()) throw ConfigError("at least one scanner domain required");
    std::set<std::string> seen;
    for (const auto& s : scanner_domains) {
        if (s.name.empty()) throw ConfigError("scanner domain with empty name");
        if (!seen.insert(s.name).second)
            throw ConfigError("duplicate scanner domain '" + s.name + "'");
        if (!(s.transfer_exponent > 0.0))
            throw ConfigError("scanner '" + s.name + "': transfer exponent must be positive");
        if (s.bias_amplitude < 0.0 || s.bias_amplitude > 0.2)
            throw ConfigError("scanner '" + s.name + "': bias amplitude must lie in [0, 0.2]");
    }
    if (sex_domains.empty()) throw ConfigError("at least one sex domain required");
    seen.clear();
    for (const auto& s : sex_domains) {
        if (s.name.empty()) throw ConfigError("sex domain with empty name");
        if (!seen.insert(s.name).second)
            throw ConfigError("duplicate sex domain '" + s.name + "'");
        if (s.torso_aspect < kMinAspect || s.torso_aspect > 1.2)
            throw ConfigError("sex '" + s.name + "': torso aspect must lie in [0.65, 1.2]");
    }
    auto check_prev = [](double p, const std::string& what) {
        if (p < 0.0 || p > 1.0) throw ConfigError(what + " must lie in [0, 1]");
    };
    check_prev(base_prevalence, "base_prevalence");
    for (const auto& [key, p] : subgroup_prevalence) {
        check_prev(p, "subgroup_prevalence['" + key + "']");
        if (key.find('/') == std::string::npos)
            throw ConfigError("subgroup_prevalence key '" + key +
                              "' must look like scanner/sex");
    }
    for (int k = 0; k + 1 < 4; ++k)
        if (!(density_cutpoints[static_cast<std::size_t>(k)] <
              density_cutpoints[static_cast<std::size_t>(k) + 1]))
            throw ConfigError("density cutpoints must be strictly increasing");
    if (noise_floor < 0.0 || noise_floor > 0.05)
        throw ConfigError("noise_floor must lie in [0, 0.05]");
    if (task != "lesion" && task != "density")
        throw ConfigError("task must be lesion or density");
}

const ScannerDomain& WorldConfig::scanner(std::string_view name) const {
    for (const auto& s : scanner_domains)
        if (s.name == name) return s;
    throw DataError("unknown scanner '" + std::string(name) + "'");
}

const SexDomain& WorldConfig::sex(std::string_view name) const {
    for (const auto& s : sex_domains)
        if (s.name == name) return s;
    throw DataError("unknown sex '" + std::string(name) + "'");
}

double WorldConfig::prevalence(const std::string& scanner_name,
                               const std::string& sex_name) const {
    auto it = subgroup_prevalence.find(scanner_name + "/" + sex_name);
    return it == subgroup_prevalence.end() ? base_prevalence : it->second;
}

WorldConfig world_config_from_json(const nlohmann::json& j) {
    WorldConfig cfg;
    cfg.image_size = j.value("image_size", cfg.image_size);
    if (!j.contains("scanners") || !j.at("scanners").is_array())
        throw ConfigError("world config requires a scanners array");
    for (const auto& js : j.at("scanners")) {
        ScannerDomain s;
        s.name = js.at("name").get<std::string>();
        s.transfer_exponent = js.value("transfer_exponent", 1.0);
        s.bias_amplitude = js.value("bias_amplitude", 0.0);
        cfg.scanner_domains.push_back(std::move(s));
    }
    if (j.contains("sexes")) {
        cfg.sex_domains.clear();
        for (const auto& js : j.at("sexes")) {
            SexDomain s;
            s.name = js.at("name").get<std::string>();
            s.torso_aspect = js.value("torso_aspect", 0.8);
            cfg.sex_domains.push_back(std::move(s));
        }
    }
    cfg.base_prevalence = j.value("base_prevalence", cfg.base_prevalence);
    if (j.contains("subgroup_prevalence"))
        for (const auto& [key, val] : j.at("subgroup_prevalence").items())
            cfg.subgroup_prevalence[key] = val.get<double>();
    if (j.contains("density_cutpoints")) {
        const auto& arr = j.at("density_cutpoints");
        if (!arr.is_array() || arr.size() != 4)
            throw ConfigError("density_cutpoints must hold 4 values");
        for (std::size_t k = 0; k < 4; ++k) cfg.density_cutpoints[k] = arr[k].get<double>();
    }
    cfg.noise_floor = j.value("noise_floor", cfg.noise_floor);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.task = j.value("task", cfg.task);
    cfg.validate();
    return cfg;
}

nlohmann::json world_config_to_json(const WorldConfig& cfg) {
    nlohmann::json j;
    j["image_size"] = cfg.image_size;
    j["scanners"] = nlohmann::json::array();
    for (const auto& s : cfg.scanner_domains)
        j["scanners"].push_back({{"name", s.name},
                                 {"transfer_exponent", s.transfer_exponent},
                                 {"bias_amplitude", s.bias_amplitude}});
    j["sexes"] = nlohmann::json::array();
    for (const auto& s : cfg.sex_domains)
        j["sexes"].push_back({{"name", s.name}, {"torso_aspect", s.torso_aspect}});
    j["base_prevalence"] = cfg.base_prevalence;
    if (!cfg.subgroup_prevalence.empty()) j["subgroup_prevalence"] = cfg.subgroup_prevalence;
    j["density_cutpoints"] = cfg.density_cutpoints;
    j["noise_floor"] = cfg.noise_floor;
    j["seed"] = cfg.seed;
    j["task"] = cfg.task;
    return j;
}

nlohmann::json noise_to_json(const ExogenousNoise& u) {
    return {{"shape",
             {{"center_x", u.shape.center_x},
              {"center_y", u.shape.center_y},
              {"size", u.shape.size},
              {"orientation", u.shape.orientation}}},
            {"lesion",
             {{"offset_radius", u.lesion.offset_radius},
              {"offset_angle", u.lesion.offset_angle},
              {"radius", u.lesion.radius},
              {"contrast", u.lesion.contrast}}},
            {"texture", {{"seed", u.texture.seed}, {"amplitude", u.texture.amplitude}}},
            {"observation_seed", u.observation_seed}};
}

ExogenousNoise noise_from_json(const nlohmann::json& j) {
    ExogenousNoise u;
    const auto& s = j.at("shape");
    u.shape.center_x = s.at("center_x").get<double>();
    u.shape.center_y = s.at("center_y").get<double>();
    u.shape.size = s.at("size").get<double>();
    u.shape.orientation = s.at("orientation").get<double>();
    const auto& l = j.at("lesion");
    u.lesion.offset_radius = l.at("offset_radius").get<double>();
    u.lesion.offset_angle = l.at("offset_angle").get<double>();
    u.lesion.radius = l.at("radius").get<double>();
    u.lesion.contrast = l.at("contrast").get<double>();
    const auto& t = j.at("texture");
    u.texture.seed = t.at("seed").get<std::uint64_t>();
    u.texture.amplitude = t.at("amplitude").get<double>();
    u.observation_seed = j.at("observation_seed").get<std::uint64_t>();
    return u;
}

double bias_field(double u, double v) {
    return 0.7 * std::cos(2.0 * kPi * u) * std::cos(kPi * v) +
           0.3 * std::cos(kPi * u + 2.0 * kPi * v);
}

ImageGray render_anatomy(const ExogenousNoise& u, const SexDomain& sex, int label,
                         int image_size) {
    if (image_size < 1) throw ConfigError("image_size must be positive");
    const TextureField texture(u.texture);
    const double ct = std::cos(u.shape.orientation), st = std::sin(u.shape.orientation);
    const double ax = u.shape.size * sex.torso_aspect, ay = u.shape.size;
    const bool lesion = label != 0;
    const double lcx = u.shape.center_x + u.lesion.offset_radius * std::cos(u.lesion.offset_angle);
    const double lcy = u.shape.center_y + u.lesion.offset_radius * std::sin(u.lesion.offset_angle);

    ImageGray img;
    img.pixels.resize(image_size, image_size);
    const double inv = 1.0 / image_size;
    for (int y = 0; y < image_size; ++y) {
        const double pv = (y + 0.5) * inv;
        for (int x = 0; x < image_size; ++x) {
            const double pu = (x + 0.5) * inv;
            const double dx = pu - u.shape.center_x, dy = pv - u.shape.center_y;
            const double xr = ct * dx + st * dy, yr = -st * dx + ct * dy;
            const double q = (xr / ax) * (xr / ax) + (yr / ay) * (yr / ay);
            double val = kBackground;
            if (q <= 1.0) {
                val = kTorsoBase + texture.amplitude * texture(pu, pv);
                if (lesion) {
                    // lucent (dark) lesion: lives in the low-intensity range
                    // where a gamma transfer genuinely compresses contrast
                    const double d = std::hypot(pu - lcx, pv - lcy);
                    const double t = d / u.lesion.radius;
                    if (t < 1.0) val -= u.lesion.contrast * (1.0 - t * t);
                }
                val = std::max(val, kAnatomyFloor);
            }
            img.pixels(y, x) = std::min(val, kAnatomyCeiling);
        }
    }
    return img;
}

ImageGray scanner_transfer(const ImageGray& anatomy, std::string_view scanner,
                           const WorldConfig& cfg) {
    const ScannerDomain& dom = cfg.scanner(scanner);
    const double g = dom.transfer_exponent, b = dom.bias_amplitude;
    const Eigen::Index h = anatomy.height(), w = anatomy.width();
    ImageGray out;
    out.pixels.resize(h, w);
    for (Eigen::Index y = 0; y < h; ++y) {
        const double pv = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
        for (Eigen::Index x = 0; x < w; ++x) {
            const double pu = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
            double val = anatomy.pixels(y, x);
            if (g != 1.0) val = std::pow(val, g);
            if (b != 0.0) val += b * bias_field(pu, pv);
            out.pixels(y, x) = clamp01(val);
        }
    }
    return out;
}

ImageGray invert_scanner_transfer(const ImageGray& observed, std::string_view scanner,
                                  const WorldConfig& cfg) {
    const ScannerDomain& dom = cfg.scanner(scanner);
    const double g = dom.transfer_exponent, b = dom.bias_amplitude;
    const Eigen::Index h = observed.height(), w = observed.width();
    ImageGray out;
    out.pixels.resize(h, w);
    for (Eigen::Index y = 0; y < h; ++y) {
        const double pv = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
        for (Eigen::Index x = 0; x < w; ++x) {
            const double pu = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
            double val = observed.pixels(y, x);
            if (b != 0.0) val = clamp01(val - b * bias_field(pu, pv));
            if (g != 1.0) val = std::pow(val, 1.0 / g);
            out.pixels(y, x) = val;
        }
    }
    return out;
}

ImageGray counterfactual_scanner(const ImageGray& observed, std::string_view from,
                                 std::string_view to, const WorldConfig& cfg) {
    return scanner_transfer(invert_scanner_transfer(observed, from, cfg), to, cfg);
}

std::string_view provenance_name(CounterfactualPair::Provenance p) {
    switch (p) {
        case CounterfactualPair::Provenance::AnalyticScanner: return "analytic_scanner";
        case CounterfactualPair::Provenance::OracleNoise: return "oracle";
        case CounterfactualPair::Provenance::External: return "external";
    }
    return "external";
}

SampledWorld sample_world(const WorldConfig& cfg, int n) {
    cfg.validate();
    if (n < 0) throw ConfigError("sample count must be non-negative");
    SampledWorld world;
    world.manifest.class_count = cfg.task == "lesion" ? 2 : 4;
    AttributeSchema& schema = world.manifest.attribute_schema;
    for (const auto& s : cfg.scanner_domains) schema.domains["scanner"].push_back(s.name);
    for (const auto& s : cfg.sex_domains) schema.domains["sex"].push_back(s.name);
    schema.domains["lesion"] = {"0", "1"};
    schema.domains["density"] = {"0", "1", "2", "3"};
    for (auto& [name, values] : schema.domains) std::sort(values.begin(), values.end());

    world.manifest.records.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(cfg.seed, 0x726563ULL, static_cast<std::uint64_t>(i)));
        ImageRecord rec;
        rec.image_id = format_id("img", i);
        rec.patient_id = format_id("pat", i);
        rec.source = "synthetic";
        rec.scanner = cfg.scanner_domains[rng.uniform_index(cfg.scanner_domains.size())].name;
        rec.sex = cfg.sex_domains[rng.uniform_index(cfg.sex_domains.size())].name;
        rec.age = rng.uniform(40.0, 80.0);

        ExogenousNoise u;
        u.shape.center_x = rng.uniform(0.48, 0.52);
        u.shape.center_y = rng.uniform(0.48, 0.52);
        u.shape.size = rng.uniform(0.30, 0.36);
        u.shape.orientation = rng.uniform(-0.05, 0.05);
        u.texture.amplitude = rng.uniform(0.01, 0.03);
        u.texture.seed = rng.next_u64();
        u.lesion.offset_radius =
            rng.uniform(0.0, kLesionOffsetFrac * kMinAspect * u.shape.size);
        u.lesion.offset_angle = rng.uniform(0.0, 2.0 * kPi);
        u.lesion.radius = rng.uniform(0.05, 0.08);
        u.lesion.contrast = rng.uniform(0.030, 0.042);
        u.observation_seed = rng.next_u64();

        const int lesion = rng.bernoulli(cfg.prevalence(rec.scanner, rec.sex)) ? 1 : 0;
        const int density = density_class(u.texture.amplitude, cfg.density_cutpoints);
        rec.label = cfg.task == "lesion" ? lesion : density;
        rec.extra.emplace_back("lesion", lesion ? "1" : "0");
        rec.extra.emplace_back("density", std::to_string(density));

        world.images.emplace(rec.image_id,
                             render_observation(u, cfg.sex(rec.sex), lesion, rec.scanner, cfg));
        world.noise.emplace(rec.image_id, u);
        world.manifest.records.push_back(std::move(rec));
    }
    return world;
}

CounterfactualPair counterfactual_oracle(
    const ImageRecord& record, const ExogenousNoise& u,
    const std::vector<std::pair<std::string, std::string>>& interventions,
    const WorldConfig& cfg) {
    std::string cf_scanner = record.scanner, cf_sex = record.sex;
    std::string attr_tag, value_tag;
    std::set<std::string> seen;
    for (const auto& [attribute, value] : interventions) {
        if (!seen.insert(attribute).second)
            throw DataError("duplicate intervention on attribute '" + attribute + "'");
        if (attribute == "scanner") {
            cfg.scanner(value);
            cf_scanner = value;
        } else if (attribute == "sex") {
            cfg.sex(value);
            cf_sex = value;
        } else {
            throw DataError("attribute '" + attribute + "' is not in the causal schema");
        }
        if (!attr_tag.empty()) {
            attr_tag += ',';
            value_tag += ',';
        }
        attr_tag += attribute;
        value_tag += value;
    }

    const int lesion = lesion_bit(record);
    CounterfactualPair pair;
    pair.factual_record = record;
    pair.factual = render_observation(u, cfg.sex(record.sex), lesion, record.scanner, cfg);
    pair.twin = render_observation(u, cfg.sex(cf_sex), lesion, cf_scanner, cfg);
    pair.intervention_attribute = std::move(attr_tag);
    pair.intervention_value = std::move(value_tag);
    pair.provenance = CounterfactualPair::Provenance::OracleNoise;
    return pair;
}

CounterfactualPair counterfactual_oracle(const ImageRecord& record,
                                         const ExogenousNoise& u,
                                         std::string_view attribute,
                                         std::string_view value,
                                         const WorldConfig& cfg) {
    return counterfactual_oracle(
        record, u, {{std::string(attribute), std::string(value)}}, cfg);
}

std::vector<CounterfactualPair> ingest_counterfactual_pairs(
    std::string_view pairs_csv, const RecordManifest& manifest,
    const ImageStore& factual_images, const ImageStore& twin_images) {
    const std::vector<std::vector<std::string>> rows = parse_csv(pairs_csv);
    if (rows.empty()) throw DataError("pairs file is empty");
    const std::vector<std::string> expected = {"factual_id", "twin_source", "attribute",
                                               "value"};
    if (rows.front() != expected)
        throw DataError("pairs header must be factual_id,twin_source,attribute,value");

    std::map<std::string_view, const ImageRecord*> by_id;
    for (const ImageRecord& rec : manifest.records) by_id.emplace(rec.image_id, &rec);

    std::vector<CounterfactualPair> pairs;
    pairs.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != 4)
            throw DataError("pairs row " + std::to_string(r + 1) + " has " +
                            std::to_string(row.size()) + " fields, expected 4");
        const std::string &factual_id = row[0], &twin_source = row[1];
        const std::string &attribute = row[2], &value = row[3];

        auto rec_it = by_id.find(factual_id);
        if (rec_it == by_id.end())
            throw DataError("pairs row " + std::to_string(r + 1) + ": unknown factual id '" +
                            factual_id + "'");
        auto fac_it = factual_images.find(factual_id);
        if (fac_it == factual_images.end())
            throw DataError("no factual image for '" + factual_id + "'");
        auto twin_it = twin_images.find(twin_source);
        if (twin_it == twin_images.end())
            throw DataError("no twin image '" + twin_source + "'");
        if (twin_it->second.width() != fac_it->second.width() ||
            twin_it->second.height() != fac_it->second.height())
            throw DataError("twin '" + twin_source + "' dimensions do not match '" +
                            factual_id + "'");

        // composite rows join attribute and value lists with commas
        std::vector<std::string> attrs, values;
        for (std::stringstream ss{attribute}; ss.good();) {
            std::string tok;
            std::getline(ss, tok, ',');
            attrs.push_back(tok);
        }
        for (std::stringstream ss{value}; ss.good();) {
            std::string tok;
            std::getline(ss, tok, ',');
            values.push_back(tok);
        }
        if (attrs.size() != values.size())
            throw DataError("pairs row " + std::to_string(r + 1) +
                            ": attribute and value counts differ");
        const AttributeSchema& schema = manifest.attribute_schema;
        for (std::size_t k = 0; k < attrs.size(); ++k) {
            if (!schema.declares(attrs[k]))
                throw DataError("attribute '" + attrs[k] + "' is not in the causal schema");
            if (!schema.allows(attrs[k], values[k]))
                throw DataError("value '" + values[k] + "' is outside the domain of '" +
                                attrs[k] + "'");
        }

        CounterfactualPair pair;
        pair.factual_record = *rec_it->second;
        pair.factual = fac_it->second;
        pair.twin = twin_it->second;
        pair.intervention_attribute = attribute;
        pair.intervention_value = value;
        pair.provenance = CounterfactualPair::Provenance::External;
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

}  // namespace cfstress
