#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfstress/classify.hpp"
#include "cfstress/imaging.hpp"
#include "cfstress/manifest.hpp"
#include "cfstress/metrics.hpp"
#include "cfstress/scm_world.hpp"

namespace cfstress {

inline constexpr std::string_view kCfCondition = "CF";
inline constexpr std::string_view kOodCondition = "OOD";

struct AxisComponent {
    std::string attribute;
    std::string train_value;
    std::string eval_value;
};

struct ShiftAxis {
    std::vector<AxisComponent> components;

    /// e.g. "scanner:A->B" or "scanner:A->B+sex:M->F"
    std::string name() const;
};

struct ExperimentConfig {
    WorldConfig world;
    int samples = 1000;
    std::array<double, 3> split_ratios = {0.6, 0.2, 0.2};
    std::vector<ShiftAxis> axes;
    std::vector<PerturbationSpec> perturbations;
    std::vector<ClassifierSpec> classifiers;
    std::vector<std::uint64_t> seeds;
    MetricKind metric = MetricKind::AveragePrecision;
    MatchSpec matching;
    std::string out_dir = "out";

    void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

/// SHA-256 of the canonicalized (re-serialized, key-sorted) config.
std::string config_digest(const ExperimentConfig& cfg);

nlohmann::json perturbation_to_json(const PerturbationSpec& spec);
PerturbationSpec perturbation_from_json(const nlohmann::json& j);

struct AgreementRow {
    std::string method;  // condition tag: GC/CC/BC/SC/GB/CF
    std::string domain;  // axis name, or "pooled"
    AgreementStats stats;
};

struct RunReport {
    std::string config_digest;
    MetricKind metric = MetricKind::AveragePrecision;
    std::vector<ShiftResult> shifts;
    std::vector<AgreementRow> agreement;
    std::map<std::string, std::string> environment;
};

/// Full pipeline: sample the world, split by patient, and for every
/// (classifier, seed, axis) train on the train-value subgroup and evaluate
/// IID, classical perturbations, counterfactual twins, and the matched real
/// OOD subset. Deterministic given cfg.
RunReport run_experiment(const ExperimentConfig& cfg);

/// Recomputes every agreement row from the report's own ShiftResults.
std::vector<AgreementRow> agreement_from_shifts(const std::vector<ShiftResult>& shifts);

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

std::string emit_report_json(const RunReport& report);

/// Flat CSV tables keyed by file name: shift_results.csv, agreement_stats.csv,
/// and agreement_matrix.csv (methods x domains of MAE mean+-std).
std::map<std::string, std::string> emit_report_csv(const RunReport& report);

/// Grouped bar chart (800x400 SVG) of mean delta per condition for one
/// domain, with +-std whiskers across runs and a zero baseline.
std::string emit_bar_chart(const RunReport& report, std::string_view domain);

}  // namespace cfstress
