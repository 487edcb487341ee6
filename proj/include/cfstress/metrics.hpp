#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cfstress {

struct ScoreTable;  // classify.hpp

enum class MetricKind { AveragePrecision, MacroOvrAuc };

MetricKind parse_metric_kind(std::string_view name);
std::string_view metric_kind_name(MetricKind kind);

/// Average precision over a descending-score ranking. Tied scores form a
/// single block evaluated at the block's end, so the result does not depend
/// on the input order of tied items.
double average_precision(Eigen::Ref<const Eigen::VectorXi> labels,
                         Eigen::Ref<const Eigen::VectorXd> scores);

/// Mann-Whitney AUC with tie correction:
///   AUC = [#(pos > neg) + 0.5 * #(pos = neg)] / (P * N).
/// Computed through average rank sums, which equals the pairwise definition
/// exactly (both numerators are sums of halves, exactly representable).
double roc_auc_binary(Eigen::Ref<const Eigen::VectorXi> labels,
                      Eigen::Ref<const Eigen::VectorXd> scores);

/// Unweighted mean of one-vs-rest binary AUCs over all classes. `scores` is
/// n x K with one column per class. Every class must occur in `labels`.
double macro_ovr_auc(Eigen::Ref<const Eigen::VectorXi> labels,
                     const Eigen::MatrixXd& scores);

struct Correlation {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Sample Pearson r with a two-sided p-value from the Student-t distribution
/// with n-2 degrees of freedom (regularized incomplete beta). |r| = 1 maps
/// to p = 0.
Correlation pearson_with_p(Eigen::Ref<const Eigen::VectorXd> x,
                           Eigen::Ref<const Eigen::VectorXd> y);

// Pair and tie-group tallies used by tau-b and its variance. Exposed so the
// O(n^2) enumeration oracle can be compared count-for-count.
struct KendallCounts {
    std::int64_t n = 0;
    std::int64_t concordant = 0;
    std::int64_t discordant = 0;
    std::int64_t tied_x = 0;     // pairs tied in x (including tied in both)
    std::int64_t tied_y = 0;     // pairs tied in y (including tied in both)
    std::int64_t tied_both = 0;  // pairs tied in x and y
    // tie-group sums feeding the tie-adjusted normal variance
    double x_v1 = 0.0, y_v1 = 0.0;  // sum t(t-1)(2t+5) over tie groups
    double x_v2 = 0.0, y_v2 = 0.0;  // sum t(t-1)(t-2)  over tie groups
};

/// O(n log n) concordant/discordant/tie tally (sort + merge inversion count).
KendallCounts kendall_counts(Eigen::Ref<const Eigen::VectorXd> x,
                             Eigen::Ref<const Eigen::VectorXd> y);

/// Kendall tau-b with tie corrections; two-sided p from the normal
/// approximation with tie-adjusted variance of C - D.
Correlation kendall_tau_b_with_p(Eigen::Ref<const Eigen::VectorXd> x,
                                 Eigen::Ref<const Eigen::VectorXd> y);

// --- special functions -------------------------------------------------

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
/// Absolute accuracy better than 1e-12 on the parameter ranges used here.
double regularized_incomplete_beta(double a, double b, double x);

double student_t_two_sided_p(double t, double dof);
double normal_two_sided_p(double z);

// --- shift bookkeeping --------------------------------------------------

/// One (condition, metric) observation for a trained model on one domain,
/// expressed as a delta against the paired IID value.
/// Condition tag carried by unperturbed in-distribution evaluations.
inline constexpr std::string_view kIidCondition = "IID";

struct ShiftResult {
    std::string model_id;
    std::uint64_t seed = 0;
    std::string domain;
    std::string condition;
    MetricKind metric = MetricKind::AveragePrecision;
    double value = 0.0;
    double delta_vs_iid = 0.0;
};

/// Per-(model, seed, condition) metric values and deltas against the IID
/// baseline rows of the same table. Labels are resolved per image id.
std::vector<ShiftResult> shift_deltas(const ScoreTable& scores,
                                      const std::map<std::string, int>& labels_by_image,
                                      MetricKind kind, std::string_view domain);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // population convention
};

/// Mean and population std of |delta_stress - delta_ood| over pairs matched
/// 1:1 on (model_id, seed, domain).
MeanStd mae_of_shifts(const std::vector<ShiftResult>& stress,
                      const std::vector<ShiftResult>& ood);

struct AgreementStats {
    MeanStd mae;
    std::optional<double> pearson_r, pearson_p;
    std::optional<double> kendall_tau, kendall_p;
    int n = 0;
};

/// MAE plus Pearson/Kendall agreement between stress deltas and OOD deltas.
/// Correlations are left unset when undefined (n too small, zero variance,
/// all-tied ranks).
AgreementStats agreement_stats(const std::vector<ShiftResult>& stress,
                               const std::vector<ShiftResult>& ood);

}  // namespace cfstress
