#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfstress/error.hpp"
#include "cfstress/scm_world.hpp"

using namespace cfstress;

namespace {

WorldConfig two_scanner_config() {
    WorldConfig cfg;
    cfg.image_size = 32;
    cfg.scanner_domains = {{"A", 1.0, 0.0}, {"B", 1.4, 0.05}};
    cfg.base_prevalence = 0.4;
    cfg.seed = 77;
    return cfg;
}

bool same_pixels(const ImageGray& a, const ImageGray& b) {
    return a.height() == b.height() && a.width() == b.width() &&
           (a.pixels == b.pixels).all();
}

double max_abs_diff(const ImageGray& a, const ImageGray& b) {
    return (a.pixels - b.pixels).abs().maxCoeff();
}

ExogenousNoise lesion_noise() {
    ExogenousNoise u;
    u.shape.center_x = 0.5;
    u.shape.center_y = 0.5;
    u.shape.size = 0.33;
    u.shape.orientation = 0.0;
    u.lesion.offset_radius = 0.05;
    u.lesion.offset_angle = 1.0;
    u.lesion.radius = 0.05;
    u.lesion.contrast = 0.25;
    u.texture.seed = 99;
    u.texture.amplitude = 0.15;
    u.observation_seed = 123;
    return u;
}

}  // namespace

TEST_CASE("world config validation accepts the reference setup") {
    CHECK_NOTHROW(two_scanner_config().validate());
}

TEST_CASE("world config validation rejects each bad field") {
    const WorldConfig good = two_scanner_config();

    WorldConfig c = good;
    c.image_size = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = good;
    c.scanner_domains.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = good;
    c.scanner_domains.push_back({"A", 1.0, 0.0});
    CHECK_THROWS_AS(c.validate(), ConfigError);  // duplicate name
    c = good;
    c.scanner_domains[0].transfer_exponent = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = good;
    c.scanner_domains[0].bias_amplitude = 0.3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = good;
    c.sex_domains.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = good;
    c.sex_domains[0].torso_aspect = 0.5;  // below the lesion-containment bound
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = good;
    c.base_prevalence = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = good;
    c.subgroup_prevalence["AM"] = 0.5;  // key must be scanner/sex
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = good;
    c.subgroup_prevalence["A/M"] = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = good;
    c.density_cutpoints = {0.1, 0.1, 0.2, 0.25};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = good;
    c.noise_floor = 0.2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = good;
    c.task = "segmentation";
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("world config lookups and prevalence routing") {
    WorldConfig cfg = two_scanner_config();
    cfg.base_prevalence = 0.1;
    cfg.subgroup_prevalence["A/M"] = 0.9;
    CHECK(cfg.scanner("B").transfer_exponent == 1.4);
    CHECK(cfg.sex("F").torso_aspect == 0.70);
    CHECK_THROWS_AS(cfg.scanner("C"), DataError);
    CHECK_THROWS_AS(cfg.sex("X"), DataError);
    CHECK(cfg.prevalence("A", "M") == 0.9);
    CHECK(cfg.prevalence("A", "F") == 0.1);
    CHECK(cfg.prevalence("B", "M") == 0.1);
}

TEST_CASE("world config JSON round-trips") {
    WorldConfig cfg = two_scanner_config();
    cfg.subgroup_prevalence["B/F"] = 0.55;
    cfg.noise_floor = 0.02;
    cfg.task = "density";
    const WorldConfig back = world_config_from_json(world_config_to_json(cfg));
    CHECK(back.image_size == cfg.image_size);
    REQUIRE(back.scanner_domains.size() == 2);
    CHECK(back.scanner_domains[1].name == "B");
    CHECK(back.scanner_domains[1].transfer_exponent == 1.4);
    CHECK(back.scanner_domains[1].bias_amplitude == 0.05);
    REQUIRE(back.sex_domains.size() == 2);
    CHECK(back.sex_domains[0].torso_aspect == 0.95);
    CHECK(back.base_prevalence == cfg.base_prevalence);
    CHECK(back.subgroup_prevalence == cfg.subgroup_prevalence);
    CHECK(back.density_cutpoints == cfg.density_cutpoints);
    CHECK(back.noise_floor == 0.02);
    CHECK(back.seed == 77);
    CHECK(back.task == "density");

    // defaults fill unspecified fields; a scanners array is mandatory
    const WorldConfig minimal =
        world_config_from_json(nlohmann::json::parse(R"({"scanners": [{"name": "A"}]})"));
    CHECK(minimal.image_size == 64);
    CHECK(minimal.sex_domains.size() == 2);
    CHECK(minimal.scanner_domains[0].transfer_exponent == 1.0);
    CHECK_THROWS_AS(world_config_from_json(nlohmann::json::object()), ConfigError);
    // validation runs on parse: out-of-range bias must be rejected
    CHECK_THROWS_AS(world_config_from_json(nlohmann::json::parse(
                        R"({"scanners": [{"name": "A", "bias_amplitude": 0.5}]})")),
                    ConfigError);
}

TEST_CASE("exogenous noise JSON round-trips exactly") {
    ExogenousNoise u = lesion_noise();
    u.shape.orientation = -0.123456789123456789;
    u.texture.seed = 0xdeadbeefcafe1234ULL;
    const ExogenousNoise back = noise_from_json(noise_to_json(u));
    CHECK(back.shape.center_x == u.shape.center_x);
    CHECK(back.shape.center_y == u.shape.center_y);
    CHECK(back.shape.size == u.shape.size);
    CHECK(back.shape.orientation == u.shape.orientation);
    CHECK(back.lesion.offset_radius == u.lesion.offset_radius);
    CHECK(back.lesion.offset_angle == u.lesion.offset_angle);
    CHECK(back.lesion.radius == u.lesion.radius);
    CHECK(back.lesion.contrast == u.lesion.contrast);
    CHECK(back.texture.seed == u.texture.seed);
    CHECK(back.texture.amplitude == u.texture.amplitude);
    CHECK(back.observation_seed == u.observation_seed);
    CHECK_THROWS_AS(noise_from_json(nlohmann::json::object()), nlohmann::json::exception);
}

TEST_CASE("bias field is a fixed pattern within [-1, 1]") {
    // B(0, 0) = 0.7 + 0.3 exactly; B(1/2, 0) = -0.7 up to the cos(pi/2) residue
    CHECK(bias_field(0.0, 0.0) == 1.0);
    CHECK(std::abs(bias_field(0.5, 0.0) + 0.7) <= 1e-12);
    CHECK(std::abs(bias_field(0.25, 0.5) + 0.3 * 0.7071067811865476) <= 1e-12);
    for (int y = 0; y < 40; ++y) {
        for (int x = 0; x < 40; ++x) {
            const double v = bias_field((x + 0.5) / 40.0, (y + 0.5) / 40.0);
            CHECK(std::abs(v) <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("sample_world is deterministic and prefix-stable") {
    const WorldConfig cfg = two_scanner_config();
    const SampledWorld a = sample_world(cfg, 12);
    const SampledWorld b = sample_world(cfg, 12);
    CHECK(write_manifest_csv(a.manifest) == write_manifest_csv(b.manifest));
    for (const auto& [id, img] : a.images) CHECK(same_pixels(img, b.images.at(id)));

    // record i depends only on (seed, i): a longer draw shares its prefix
    const SampledWorld longer = sample_world(cfg, 20);
    for (std::size_t i = 0; i < a.manifest.records.size(); ++i) {
        CHECK(longer.manifest.records[i].image_id == a.manifest.records[i].image_id);
        CHECK(longer.manifest.records[i].scanner == a.manifest.records[i].scanner);
        CHECK(longer.manifest.records[i].label == a.manifest.records[i].label);
    }
    for (const auto& [id, img] : a.images) CHECK(same_pixels(img, longer.images.at(id)));
}

TEST_CASE("sample_world populates records, images, noise, and schema") {
    WorldConfig cfg = two_scanner_config();
    cfg.image_size = 16;
    const SampledWorld world = sample_world(cfg, 40);
    REQUIRE(world.manifest.records.size() == 40);
    CHECK(world.manifest.class_count == 2);
    CHECK(world.images.size() == 40);
    CHECK(world.noise.size() == 40);
    CHECK(world.manifest.records[0].image_id == "img_000000");
    CHECK(world.manifest.records[0].patient_id == "pat_000000");

    const auto& schema = world.manifest.attribute_schema;
    CHECK(schema.domains.at("scanner") == std::vector<std::string>{"A", "B"});
    CHECK(schema.domains.at("sex") == std::vector<std::string>{"F", "M"});
    CHECK(schema.domains.at("lesion") == std::vector<std::string>{"0", "1"});
    CHECK(schema.domains.at("density") == std::vector<std::string>{"0", "1", "2", "3"});

    std::set<std::string> patients;
    for (const auto& rec : world.manifest.records) {
        CHECK(patients.insert(rec.patient_id).second);  // one record per patient
        CHECK((rec.scanner == "A" || rec.scanner == "B"));
        CHECK((rec.sex == "M" || rec.sex == "F"));
        REQUIRE(rec.age.has_value());
        CHECK(*rec.age >= 40.0);
        CHECK(*rec.age < 80.0);
        CHECK(rec.source == "synthetic");
        CHECK(rec.split == Split::Unassigned);
        // lesion task: the label equals the lesion bit
        REQUIRE(rec.attribute("lesion") != nullptr);
        CHECK(std::to_string(rec.label) == *rec.attribute("lesion"));
        REQUIRE(rec.attribute("density") != nullptr);

        const ImageGray& img = world.images.at(rec.image_id);
        CHECK(img.height() == 16);
        CHECK(img.width() == 16);
        CHECK((img.pixels >= 0.0).all());
        CHECK((img.pixels <= 1.0).all());

        // density class re-derived from the stored texture amplitude
        const double amp = world.noise.at(rec.image_id).texture.amplitude;
        const auto& cut = cfg.density_cutpoints;
        const int expected = amp <= cut[0] ? 0 : amp <= cut[1] ? 1 : amp <= cut[2] ? 2 : 3;
        CHECK(*rec.attribute("density") == std::to_string(expected));
    }
    CHECK(sample_world(cfg, 0).manifest.records.empty());
    CHECK_THROWS_AS(sample_world(cfg, -1), ConfigError);
}

TEST_CASE("sample_world density task relabels from the texture amplitude") {
    WorldConfig cfg = two_scanner_config();
    cfg.image_size = 16;
    cfg.task = "density";
    const SampledWorld world = sample_world(cfg, 60);
    CHECK(world.manifest.class_count == 4);
    for (const auto& rec : world.manifest.records) {
        CHECK(std::to_string(rec.label) == *rec.attribute("density"));
        CHECK(rec.label >= 0);
        CHECK(rec.label <= 3);
    }
}

TEST_CASE("sample_world hits the configured prevalence within 3 sigma") {
    WorldConfig cfg = two_scanner_config();
    cfg.image_size = 16;
    cfg.base_prevalence = 0.3;
    const int n = 2000;
    const SampledWorld world = sample_world(cfg, n);
    double positives = 0;
    for (const auto& rec : world.manifest.records) positives += rec.label;
    const double expect = 0.3 * n;
    const double sigma = std::sqrt(n * 0.3 * 0.7);
    CHECK(std::abs(positives - expect) <= 3.0 * sigma);
}

TEST_CASE("sample_world honors subgroup prevalence overrides") {
    WorldConfig cfg = two_scanner_config();
    cfg.image_size = 16;
    cfg.scanner_domains = {{"A", 1.0, 0.0}};
    cfg.base_prevalence = 0.1;
    cfg.subgroup_prevalence["A/M"] = 0.9;
    const SampledWorld world = sample_world(cfg, 1500);
    std::map<std::string, std::pair<double, double>> by_sex;  // sex -> (positives, count)
    for (const auto& rec : world.manifest.records) {
        by_sex[rec.sex].first += rec.label;
        by_sex[rec.sex].second += 1.0;
    }
    const auto& [m_pos, m_n] = by_sex.at("M");
    const auto& [f_pos, f_n] = by_sex.at("F");
    CHECK(std::abs(m_pos / m_n - 0.9) <= 4.0 * std::sqrt(0.9 * 0.1 / m_n));
    CHECK(std::abs(f_pos / f_n - 0.1) <= 4.0 * std::sqrt(0.9 * 0.1 / f_n));
}

TEST_CASE("render_anatomy: background, range, and the intensity ceiling") {
    const ExogenousNoise u = lesion_noise();
    const SexDomain sex{"M", 0.95};
    const ImageGray img = render_anatomy(u, sex, 0, 64);
    CHECK(img.height() == 64);
    // corners lie outside the torso: exact background level
    CHECK(img.pixels(0, 0) == 0.15);
    CHECK(img.pixels(63, 63) == 0.15);
    CHECK((img.pixels >= 0.12).all());
    CHECK((img.pixels <= 0.95).all());
    CHECK(img.pixels.maxCoeff() > 0.15);  // a torso exists

    // an extreme texture saturates at the ceiling, never above
    ExogenousNoise hot = lesion_noise();
    hot.texture.amplitude = 3.0;
    const ImageGray capped = render_anatomy(hot, sex, 0, 64);
    CHECK(capped.pixels.maxCoeff() == 0.95);

    // a deep lesion bottoms out at the invertibility floor, never below
    ExogenousNoise deep = lesion_noise();
    deep.texture.amplitude = 0.0;
    deep.lesion.offset_radius = 0.0;
    deep.lesion.contrast = 0.6;
    const ImageGray floored = render_anatomy(deep, sex, 1, 64);
    CHECK(floored.pixels.minCoeff() == 0.12);

    // deterministic render
    CHECK(same_pixels(render_anatomy(u, sex, 0, 64), img));
    CHECK_THROWS_AS(render_anatomy(u, sex, 0, 0), ConfigError);
}

TEST_CASE("lesion presence only changes pixels inside the lesion disc") {
    const ExogenousNoise u = lesion_noise();
    const SexDomain sex{"M", 0.95};
    const ImageGray without = render_anatomy(u, sex, 0, 64);
    const ImageGray with = render_anatomy(u, sex, 1, 64);
    const double lcx = u.shape.center_x + u.lesion.offset_radius * std::cos(u.lesion.offset_angle);
    const double lcy = u.shape.center_y + u.lesion.offset_radius * std::sin(u.lesion.offset_angle);
    int changed = 0;
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            const double pu = (x + 0.5) / 64.0, pv = (y + 0.5) / 64.0;
            const double d = std::hypot(pu - lcx, pv - lcy);
            if (with.pixels(y, x) != without.pixels(y, x)) {
                ++changed;
                CHECK(d < u.lesion.radius);
                CHECK(with.pixels(y, x) < without.pixels(y, x));  // lucent lesion
                CHECK(with.pixels(y, x) >= 0.12);
            }
        }
    }
    CHECK(changed > 0);
}

TEST_CASE("sex intervention only toggles torso membership") {
    const ExogenousNoise u = lesion_noise();
    const ImageGray male = render_anatomy(u, {"M", 0.95}, 1, 64);
    const ImageGray female = render_anatomy(u, {"F", 0.70}, 1, 64);
    int changed = 0;
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            const double a = male.pixels(y, x), b = female.pixels(y, x);
            if (a != b) {
                ++changed;
                // the narrower torso exposes background where the wide one has tissue
                CHECK(b == 0.15);
                CHECK(a > 0.15);
            }
        }
    }
    CHECK(changed > 0);
}

TEST_CASE("scanner transfer matches the frozen power-law value") {
    WorldConfig cfg = two_scanner_config();
    ImageGray flat(8, 8);
    flat.pixels.setConstant(0.5);
    const ImageGray out = scanner_transfer(flat, "B", cfg);
    // 0.5^1.4 plus the bias term; check a pixel where B contributes too
    const double base = 0.37892914162759955;
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            const double expected =
                base + 0.05 * bias_field((x + 0.5) / 8.0, (y + 0.5) / 8.0);
            CHECK(std::abs(out.pixels(y, x) - expected) <= 1e-12);
        }
    }
    // the identity scanner returns its input bitwise
    CHECK(same_pixels(scanner_transfer(flat, "A", cfg), flat));
    CHECK_THROWS_AS(scanner_transfer(flat, "Z", cfg), DataError);
}

TEST_CASE("scanner transfer inverts exactly on the clamp-free range") {
    const WorldConfig cfg = two_scanner_config();
    const ImageGray anatomy = render_anatomy(lesion_noise(), {"M", 0.95}, 1, 32);
    for (const char* scanner : {"A", "B"}) {
        const ImageGray observed = scanner_transfer(anatomy, scanner, cfg);
        const ImageGray recovered = invert_scanner_transfer(observed, scanner, cfg);
        CHECK(max_abs_diff(recovered, anatomy) <= 1e-12);
    }
}

TEST_CASE("analytic scanner counterfactual satisfies the intervention axioms") {
    const WorldConfig cfg = two_scanner_config();
    const ImageGray anatomy = render_anatomy(lesion_noise(), {"F", 0.70}, 1, 32);
    const ImageGray on_a = scanner_transfer(anatomy, "A", cfg);
    const ImageGray on_b = scanner_transfer(anatomy, "B", cfg);

    // effectiveness: transporting A -> B reproduces the B observation
    CHECK(max_abs_diff(counterfactual_scanner(on_a, "A", "B", cfg), on_b) <= 1e-9);
    // reversibility: A -> B -> A returns the original observation
    const ImageGray there = counterfactual_scanner(on_a, "A", "B", cfg);
    CHECK(max_abs_diff(counterfactual_scanner(there, "B", "A", cfg), on_a) <= 1e-9);
    // null intervention: A -> A is the identity up to rounding
    CHECK(max_abs_diff(counterfactual_scanner(on_a, "A", "A", cfg), on_a) <= 1e-12);
}

TEST_CASE("counterfactual oracle reproduces the factual observation bitwise") {
    // with observation noise strictly positive, reproduction must still hold
    WorldConfig cfg = two_scanner_config();
    cfg.noise_floor = 0.02;
    const SampledWorld world = sample_world(cfg, 10);
    for (const auto& rec : world.manifest.records) {
        const auto& u = world.noise.at(rec.image_id);
        const auto pair = counterfactual_oracle(rec, u, "scanner", rec.scanner, cfg);
        CHECK(same_pixels(pair.factual, world.images.at(rec.image_id)));
        // intervening to the factual value makes the twin the factual image
        CHECK(same_pixels(pair.twin, pair.factual));
        CHECK(pair.provenance == CounterfactualPair::Provenance::OracleNoise);
        CHECK(pair.intervention_attribute == "scanner");
        CHECK(pair.factual_record.image_id == rec.image_id);
    }
}

TEST_CASE("counterfactual oracle rebuilds the twin from fixed exogenous noise") {
    WorldConfig cfg = two_scanner_config();
    cfg.noise_floor = 0.0;  // keep the expected twin expressible via public calls
    const SampledWorld world = sample_world(cfg, 8);
    for (const auto& rec : world.manifest.records) {
        const auto& u = world.noise.at(rec.image_id);
        const int lesion = *rec.attribute("lesion") == "1" ? 1 : 0;
        const std::string other_scanner = rec.scanner == "A" ? "B" : "A";
        const auto moved = counterfactual_oracle(rec, u, "scanner", other_scanner, cfg);
        const ImageGray expected = scanner_transfer(
            render_anatomy(u, cfg.sex(rec.sex), lesion, cfg.image_size), other_scanner, cfg);
        CHECK(same_pixels(moved.twin, expected));

        const std::string other_sex = rec.sex == "M" ? "F" : "M";
        const auto resexed = counterfactual_oracle(rec, u, "sex", other_sex, cfg);
        const ImageGray expected_sex = scanner_transfer(
            render_anatomy(u, cfg.sex(other_sex), lesion, cfg.image_size), rec.scanner, cfg);
        CHECK(same_pixels(resexed.twin, expected_sex));
        // pathology is part of the exogenous state: the lesion bit is unchanged
        CHECK(*resexed.factual_record.attribute("lesion") == *rec.attribute("lesion"));
    }
}

TEST_CASE("counterfactual oracle composite interventions and errors") {
    const WorldConfig cfg = two_scanner_config();
    const SampledWorld world = sample_world(cfg, 3);
    const auto& rec = world.manifest.records[0];
    const auto& u = world.noise.at(rec.image_id);

    const auto both = counterfactual_oracle(
        rec, u, {{"scanner", "B"}, {"sex", "F"}}, cfg);
    CHECK(both.intervention_attribute == "scanner,sex");
    CHECK(both.intervention_value == "B,F");
    const int lesion = *rec.attribute("lesion") == "1" ? 1 : 0;
    const ImageGray expected = scanner_transfer(
        render_anatomy(u, cfg.sex("F"), lesion, cfg.image_size), "B", cfg);
    CHECK(same_pixels(both.twin, expected));

    CHECK_THROWS_AS(counterfactual_oracle(rec, u, "age", "50", cfg), DataError);
    CHECK_THROWS_AS(counterfactual_oracle(rec, u, "scanner", "Z", cfg), DataError);
    CHECK_THROWS_AS(counterfactual_oracle(rec, u, "sex", "X", cfg), DataError);
    CHECK_THROWS_AS(counterfactual_oracle(
                        rec, u, {{"scanner", "A"}, {"scanner", "B"}}, cfg),
                    DataError);
    ImageRecord no_lesion = rec;
    no_lesion.extra.clear();
    CHECK_THROWS_AS(counterfactual_oracle(no_lesion, u, "scanner", "B", cfg), DataError);
}

TEST_CASE("ingest_counterfactual_pairs validates and assembles external twins") {
    const WorldConfig cfg = two_scanner_config();
    const SampledWorld world = sample_world(cfg, 4);
    const std::string id0 = world.manifest.records[0].image_id;
    const std::string id1 = world.manifest.records[1].image_id;

    ImageStore twins;
    twins.emplace("t0", world.images.at(id1));
    twins.emplace("t1", world.images.at(id0));

    const std::string csv =
        "factual_id,twin_source,attribute,value\n" +
        id0 + ",t0,scanner,B\n" +
        id1 + ",t1,\"scanner,sex\",\"B,F\"\n";
    const auto pairs = ingest_counterfactual_pairs(csv, world.manifest, world.images, twins);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].factual_record.image_id == id0);
    CHECK(same_pixels(pairs[0].factual, world.images.at(id0)));
    CHECK(same_pixels(pairs[0].twin, world.images.at(id1)));
    CHECK(pairs[0].intervention_attribute == "scanner");
    CHECK(pairs[0].provenance == CounterfactualPair::Provenance::External);
    CHECK(pairs[1].intervention_attribute == "scanner,sex");
    CHECK(pairs[1].intervention_value == "B,F");

    const std::string header = "factual_id,twin_source,attribute,value\n";
    CHECK_THROWS_AS(ingest_counterfactual_pairs("", world.manifest, world.images, twins),
                    DataError);
    CHECK_THROWS_AS(ingest_counterfactual_pairs("a,b,c\nrow\n", world.manifest,
                                                world.images, twins),
                    DataError);
    CHECK_THROWS_AS(ingest_counterfactual_pairs(header + "missing,t0,scanner,B\n",
                                                world.manifest, world.images, twins),
                    DataError);
    CHECK_THROWS_AS(ingest_counterfactual_pairs(header + id0 + ",zzz,scanner,B\n",
                                                world.manifest, world.images, twins),
                    DataError);
    CHECK_THROWS_AS(ingest_counterfactual_pairs(header + id0 + ",t0,modality,CT\n",
                                                world.manifest, world.images, twins),
                    DataError);
    CHECK_THROWS_AS(ingest_counterfactual_pairs(header + id0 + ",t0,scanner,Q\n",
                                                world.manifest, world.images, twins),
                    DataError);
    CHECK_THROWS_AS(
        ingest_counterfactual_pairs(header + id0 + ",t0,\"scanner,sex\",B\n",
                                    world.manifest, world.images, twins),
        DataError);
    CHECK_THROWS_AS(ingest_counterfactual_pairs(header + id0 + ",t0,scanner\n",
                                                world.manifest, world.images, twins),
                    DataError);

    ImageStore bad_twins;
    ImageGray small(4, 4);
    small.pixels.setConstant(0.5);
    bad_twins.emplace("t0", small);
    CHECK_THROWS_AS(ingest_counterfactual_pairs(header + id0 + ",t0,scanner,B\n",
                                                world.manifest, world.images, bad_twins),
                    DataError);
}

TEST_CASE("provenance names are stable") {
    CHECK(provenance_name(CounterfactualPair::Provenance::AnalyticScanner) ==
          "analytic_scanner");
    CHECK(provenance_name(CounterfactualPair::Provenance::OracleNoise) == "oracle");
    CHECK(provenance_name(CounterfactualPair::Provenance::External) == "external");
}
