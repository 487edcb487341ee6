#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "cfstress/error.hpp"
#include "cfstress/harness.hpp"

using namespace cfstress;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.world.image_size = 16;
    cfg.world.scanner_domains = {{"A", 1.0, 0.0}, {"B", 1.4, 0.05}};
    cfg.world.base_prevalence = 0.4;
    cfg.world.seed = 31;
    cfg.samples = 300;
    ShiftAxis axis;
    axis.components = {{"scanner", "A", "B"}};
    cfg.axes = {axis};
    PerturbationSpec gc;
    PerturbationSpec gb;
    gb.kind = PerturbationKind::GaussianBlur;
    cfg.perturbations = {gc, gb};
    ClassifierSpec clf;
    clf.input_side = 8;
    clf.learning_rate = 0.01;
    clf.batch_size = 16;
    clf.max_epochs = 6;
    clf.patience = 3;
    cfg.classifiers = {clf};
    cfg.seeds = {1, 2};
    cfg.out_dir = "scratch";
    return cfg;
}

const RunReport& small_report() {
    static const RunReport report = run_experiment(small_config());
    return report;
}

bool same_agreement(const AgreementRow& a, const AgreementRow& b) {
    return a.method == b.method && a.domain == b.domain && a.stats.n == b.stats.n &&
           a.stats.mae.mean == b.stats.mae.mean && a.stats.mae.stddev == b.stats.mae.stddev &&
           a.stats.pearson_r == b.stats.pearson_r && a.stats.pearson_p == b.stats.pearson_p &&
           a.stats.kendall_tau == b.stats.kendall_tau && a.stats.kendall_p == b.stats.kendall_p;
}

}  // namespace

TEST_CASE("shift axes name themselves") {
    ShiftAxis axis;
    axis.components = {{"scanner", "A", "B"}};
    CHECK(axis.name() == "scanner:A->B");
    axis.components.push_back({"sex", "M", "F"});
    CHECK(axis.name() == "scanner:A->B+sex:M->F");
}

TEST_CASE("experiment config validation rejects structural mistakes") {
    CHECK_NOTHROW(small_config().validate());

    ExperimentConfig bad = small_config();
    bad.samples = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.axes.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.axes[0].components.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.axes[0].components = {{"scanner", "A", "A"}};  // intervenes on nothing
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.axes[0].components = {{"scanner", "A", "B"}, {"scanner", "B", "A"}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.axes.push_back(bad.axes[0]);  // duplicate axis
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.classifiers.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.seeds.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.split_ratios = {0.5, 0.2, 0.2};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.split_ratios = {1.2, -0.1, -0.1};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.perturbations[0].gamma = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.classifiers[0].batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.matching.age_bin_width = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("perturbation specs round-trip through JSON") {
    // bare string form picks the kind with default parameters
    const PerturbationSpec gc = perturbation_from_json(nlohmann::json("GC"));
    CHECK(gc.kind == PerturbationKind::GammaCorrection);
    CHECK(gc.gamma == 1.7);

    for (const PerturbationKind kind :
         {PerturbationKind::GammaCorrection, PerturbationKind::ContrastChange,
          PerturbationKind::BrightnessChange, PerturbationKind::SharpnessChange,
          PerturbationKind::GaussianBlur}) {
        PerturbationSpec spec;
        spec.kind = kind;
        spec.gamma = 2.0;
        spec.contrast_factor = 0.5;
        spec.brightness_factor = 1.25;
        spec.sharpness_factor = 3.0;
        spec.kernel_size = 5;
        spec.sigma = 0.9;
        const PerturbationSpec back = perturbation_from_json(perturbation_to_json(spec));
        CHECK(back.kind == kind);
        switch (kind) {
            case PerturbationKind::GammaCorrection: CHECK(back.gamma == 2.0); break;
            case PerturbationKind::ContrastChange:
                CHECK(back.contrast_factor == 0.5);
                CHECK(!back.contrast_pivot.has_value());
                break;
            case PerturbationKind::BrightnessChange: CHECK(back.brightness_factor == 1.25); break;
            case PerturbationKind::SharpnessChange: CHECK(back.sharpness_factor == 3.0); break;
            case PerturbationKind::GaussianBlur:
                CHECK(back.kernel_size == 5);
                CHECK(back.sigma == 0.9);
                break;
        }
    }

    PerturbationSpec pivoted;
    pivoted.kind = PerturbationKind::ContrastChange;
    pivoted.contrast_pivot = 0.25;
    const PerturbationSpec back = perturbation_from_json(perturbation_to_json(pivoted));
    REQUIRE(back.contrast_pivot.has_value());
    CHECK(*back.contrast_pivot == 0.25);

    CHECK_THROWS_AS(perturbation_from_json(nlohmann::json("XX")), ConfigError);
    CHECK_THROWS_AS(perturbation_from_json(nlohmann::json::parse(R"({"kind":"GC","gamma":0})")),
                    ConfigError);
}

TEST_CASE("experiment configs round-trip through JSON") {
    ExperimentConfig cfg = small_config();
    cfg.axes[0].components.push_back({"sex", "M", "F"});
    cfg.matching.match_age = true;
    cfg.matching.age_bin_width = 10.0;
    cfg.metric = MetricKind::MacroOvrAuc;

    const nlohmann::json j = experiment_config_to_json(cfg);
    const ExperimentConfig back = experiment_config_from_json(j);
    CHECK(experiment_config_to_json(back).dump() == j.dump());
    CHECK(back.axes[0].name() == "scanner:A->B+sex:M->F");
    CHECK(back.metric == MetricKind::MacroOvrAuc);
    CHECK(back.matching.match_age);
    CHECK(back.matching.age_bin_width == 10.0);
    CHECK(back.out_dir == "scratch");

    nlohmann::json missing = j;
    missing.erase("axes");
    CHECK_THROWS_AS(experiment_config_from_json(missing), ConfigError);
    missing = j;
    missing.erase("world");
    CHECK_THROWS_AS(experiment_config_from_json(missing), ConfigError);
    missing = j;
    missing.erase("classifiers");
    CHECK_THROWS_AS(experiment_config_from_json(missing), ConfigError);
    missing = j;
    missing.erase("seeds");
    CHECK_THROWS_AS(experiment_config_from_json(missing), ConfigError);
    nlohmann::json bad = j;
    bad["split_ratios"] = {0.5, 0.5};
    CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
}

TEST_CASE("config digest keys the experiment, not its output directory") {
    const ExperimentConfig cfg = small_config();
    const std::string digest = config_digest(cfg);
    CHECK(digest.size() == 64);
    CHECK(config_digest(cfg) == digest);

    ExperimentConfig other = small_config();
    other.out_dir = "elsewhere";
    CHECK(config_digest(other) == digest);

    other = small_config();
    other.world.seed = 32;
    CHECK(config_digest(other) != digest);
    other = small_config();
    other.seeds = {1, 3};
    CHECK(config_digest(other) != digest);
}

TEST_CASE("config digest is independent of JSON key order") {
    const char* text_a = R"({
        "world": {"image_size": 16, "seed": 31,
                  "scanners": [{"name": "A"},
                               {"name": "B", "transfer_exponent": 1.4, "bias_amplitude": 0.05}]},
        "samples": 120,
        "axes": [{"attribute": "scanner", "train": "A", "eval": "B"}],
        "classifiers": [{"kind": "logistic", "input_side": 8}],
        "seeds": [1]
    })";
    const char* text_b = R"({
        "seeds": [1],
        "classifiers": [{"input_side": 8, "kind": "logistic"}],
        "axes": [{"eval": "B", "train": "A", "attribute": "scanner"}],
        "samples": 120,
        "world": {"scanners": [{"name": "A"},
                               {"bias_amplitude": 0.05, "transfer_exponent": 1.4, "name": "B"}],
                  "seed": 31, "image_size": 16}
    })";
    const ExperimentConfig a = experiment_config_from_json(nlohmann::json::parse(text_a));
    const ExperimentConfig b = experiment_config_from_json(nlohmann::json::parse(text_b));
    CHECK(config_digest(a) == config_digest(b));
}

TEST_CASE("run_experiment produces one row per condition and run") {
    const RunReport& report = small_report();
    CHECK(report.config_digest == config_digest(small_config()));
    CHECK(report.metric == MetricKind::AveragePrecision);
    CHECK(report.environment.count("version") == 1);

    // 1 axis x 1 classifier x 2 seeds x {IID, GC, GB, CF, OOD}; rows group by
    // model_id (which hashes the seed), so either seed block may come first
    REQUIRE(report.shifts.size() == 10);
    const std::vector<std::string> expected = {"IID", "GC", "GB", "CF", "OOD",
                                               "IID", "GC", "GB", "CF", "OOD"};
    for (std::size_t i = 0; i < report.shifts.size(); ++i) {
        const ShiftResult& s = report.shifts[i];
        CHECK(s.condition == expected[i]);
        CHECK(s.domain == "scanner:A->B");
        CHECK(s.seed == report.shifts[i < 5 ? 0 : 5].seed);
        CHECK(s.metric == MetricKind::AveragePrecision);
        CHECK(s.value >= 0.0);
        CHECK(s.value <= 1.0);
        CHECK(std::isfinite(s.delta_vs_iid));
    }
    const std::set<std::uint64_t> seeds = {report.shifts[0].seed, report.shifts[5].seed};
    CHECK(seeds == std::set<std::uint64_t>{1, 2});
    // deltas are against the IID row of the same run
    for (std::size_t base : {std::size_t{0}, std::size_t{5}}) {
        CHECK(report.shifts[base].delta_vs_iid == 0.0);
        for (std::size_t i = base + 1; i < base + 5; ++i) {
            CHECK(report.shifts[i].model_id == report.shifts[base].model_id);
            CHECK(report.shifts[i].delta_vs_iid ==
                  report.shifts[i].value - report.shifts[base].value);
        }
    }
}

TEST_CASE("report agreement matches a recomputation from its own shifts") {
    const RunReport& report = small_report();
    // methods in display order, each with a pooled and a per-domain row
    REQUIRE(report.agreement.size() == 6);
    const std::vector<std::string> methods = {"GC", "GC", "GB", "GB", "CF", "CF"};
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(report.agreement[i].method == methods[i]);
        CHECK(report.agreement[i].domain == (i % 2 == 0 ? "pooled" : "scanner:A->B"));
        CHECK(report.agreement[i].stats.n == 2);
        CHECK(!report.agreement[i].stats.pearson_r.has_value());  // needs n >= 3
        CHECK(report.agreement[i].stats.mae.mean >= 0.0);
    }
    const std::vector<AgreementRow> again = agreement_from_shifts(report.shifts);
    REQUIRE(again.size() == report.agreement.size());
    for (std::size_t i = 0; i < again.size(); ++i)
        CHECK(same_agreement(again[i], report.agreement[i]));
}

TEST_CASE("run_experiment is deterministic down to the emitted bytes") {
    const RunReport again = run_experiment(small_config());
    CHECK(emit_report_json(again) == emit_report_json(small_report()));
}

TEST_CASE("reports round-trip through JSON") {
    const RunReport& report = small_report();
    const nlohmann::json j = report_to_json(report);
    const RunReport back = report_from_json(j);
    CHECK(report_to_json(back).dump() == j.dump());
    CHECK(back.config_digest == report.config_digest);
    REQUIRE(back.shifts.size() == report.shifts.size());
    CHECK(back.shifts[3].value == report.shifts[3].value);
    REQUIRE(back.agreement.size() == report.agreement.size());
    for (std::size_t i = 0; i < back.agreement.size(); ++i)
        CHECK(same_agreement(back.agreement[i], report.agreement[i]));
    CHECK(emit_report_json(back) == emit_report_json(report));
}

TEST_CASE("emit_report_csv writes the three flat tables") {
    const auto files = emit_report_csv(small_report());
    REQUIRE(files.size() == 3);
    REQUIRE(files.count("shift_results.csv") == 1);
    REQUIRE(files.count("agreement_stats.csv") == 1);
    REQUIRE(files.count("agreement_matrix.csv") == 1);

    const std::string& shifts = files.at("shift_results.csv");
    CHECK(shifts.rfind("model_id,seed,domain,condition,metric,value,delta_vs_iid\n", 0) == 0);
    CHECK(std::count(shifts.begin(), shifts.end(), '\n') == 11);  // header + 10 rows
    CHECK(shifts.find(",IID,") != std::string::npos);
    CHECK(shifts.find(",OOD,") != std::string::npos);

    const std::string& agree = files.at("agreement_stats.csv");
    CHECK(std::count(agree.begin(), agree.end(), '\n') == 7);
    CHECK(agree.find("CF,pooled,") != std::string::npos);

    const std::string& matrix = files.at("agreement_matrix.csv");
    CHECK(matrix.rfind("method,scanner:A->B,pooled\n", 0) == 0);
    CHECK(std::count(matrix.begin(), matrix.end(), '\n') == 4);  // header + GC, GB, CF
    CHECK(matrix.find("+-") != std::string::npos);
}

TEST_CASE("emit_bar_chart renders a deterministic SVG per domain") {
    const std::string svg = emit_bar_chart(small_report(), "scanner:A->B");
    CHECK(svg.rfind("<svg ", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    for (const char* tag : {"IID", "GC", "GB", "CF", "OOD"})
        CHECK(svg.find(">" + std::string(tag) + "<") != std::string::npos);
    CHECK(svg.find("scanner:A-&gt;B") != std::string::npos);
    CHECK(emit_bar_chart(small_report(), "scanner:A->B") == svg);
    CHECK_THROWS_AS(emit_bar_chart(small_report(), "sex:M->F"), DataError);
}

TEST_CASE("composite axes and empty perturbation lists run end to end") {
    ExperimentConfig cfg = small_config();
    cfg.perturbations.clear();
    cfg.seeds = {1};
    cfg.classifiers[0].max_epochs = 3;
    ShiftAxis composite;
    composite.components = {{"scanner", "A", "B"}, {"sex", "M", "F"}};
    cfg.axes = {composite};

    const RunReport report = run_experiment(cfg);
    REQUIRE(report.shifts.size() == 3);  // IID, CF, OOD
    CHECK(report.shifts[0].condition == "IID");
    CHECK(report.shifts[1].condition == "CF");
    CHECK(report.shifts[2].condition == "OOD");
    for (const ShiftResult& s : report.shifts) CHECK(s.domain == "scanner:A->B+sex:M->F");

    REQUIRE(report.agreement.size() == 2);
    CHECK(report.agreement[0].method == "CF");
    CHECK(report.agreement[0].domain == "pooled");
    CHECK(report.agreement[1].domain == "scanner:A->B+sex:M->F");
    CHECK(report.agreement[0].stats.n == 1);

    CHECK_NOTHROW(emit_bar_chart(report, "scanner:A->B+sex:M->F"));
}
