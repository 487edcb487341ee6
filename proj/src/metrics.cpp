#include "cfstress/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cfstress/error.hpp"

namespace cfstress {

namespace {

void require_binary_labels(Eigen::Ref<const Eigen::VectorXi> labels) {
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw DataError("binary metric requires 0/1 labels, got " +
                            std::to_string(labels[i]));
        }
    }
}

std::vector<Eigen::Index> order_by_score(Eigen::Ref<const Eigen::VectorXd> scores,
                                         bool descending) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(scores.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
        return descending ? scores[a] > scores[b] : scores[a] < scores[b];
    });
    return idx;
}

}  // namespace

MetricKind parse_metric_kind(std::string_view name) {
    if (name == "AP") return MetricKind::AveragePrecision;
    if (name == "AUC_macro_ovr") return MetricKind::MacroOvrAuc;
    throw ConfigError("unknown metric kind '" + std::string(name) +
                      "' (expected AP or AUC_macro_ovr)");
}

std::string_view metric_kind_name(MetricKind kind) {
    return kind == MetricKind::AveragePrecision ? "AP" : "AUC_macro_ovr";
}

double average_precision(Eigen::Ref<const Eigen::VectorXi> labels,
                         Eigen::Ref<const Eigen::VectorXd> scores) {
    if (labels.size() != scores.size()) {
        throw DataError("average_precision: label/score length mismatch");
    }
    require_binary_labels(labels);
    const double positives = static_cast<double>(labels.sum());
    if (positives == 0.0) {
        throw DataError("average_precision undefined: no positive labels");
    }

    const auto idx = order_by_score(scores, /*descending=*/true);
    double ap = 0.0;
    double prev_recall = 0.0;
    double tp = 0.0;
    const Eigen::Index n = scores.size();
    for (Eigen::Index i = 0; i < n; ++i) {
        tp += labels[idx[static_cast<std::size_t>(i)]];
        const bool block_end =
            i + 1 == n || scores[idx[static_cast<std::size_t>(i)]] !=
                              scores[idx[static_cast<std::size_t>(i + 1)]];
        if (!block_end) continue;
        const double recall = tp / positives;
        const double precision = tp / static_cast<double>(i + 1);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

double roc_auc_binary(Eigen::Ref<const Eigen::VectorXi> labels,
                      Eigen::Ref<const Eigen::VectorXd> scores) {
    if (labels.size() != scores.size()) {
        throw DataError("roc_auc_binary: label/score length mismatch");
    }
    require_binary_labels(labels);
    const Eigen::Index n = labels.size();
    const double pos = static_cast<double>(labels.sum());
    const double neg = static_cast<double>(n) - pos;
    if (pos == 0.0 || neg == 0.0) {
        throw DataError("roc_auc_binary undefined on single-class input");
    }

    // average ranks over tie blocks; rank sum of positives gives U exactly
    const auto idx = order_by_score(scores, /*descending=*/false);
    double pos_rank_sum = 0.0;
    Eigen::Index i = 0;
    while (i < n) {
        Eigen::Index j = i;
        while (j + 1 < n && scores[idx[static_cast<std::size_t>(j + 1)]] ==
                                scores[idx[static_cast<std::size_t>(i)]]) {
            ++j;
        }
        // 1-based ranks i+1 .. j+1 share the average (i + j + 2) / 2
        const double avg_rank = static_cast<double>(i + j + 2) / 2.0;
        for (Eigen::Index k = i; k <= j; ++k) {
            if (labels[idx[static_cast<std::size_t>(k)]] == 1) pos_rank_sum += avg_rank;
        }
        i = j + 1;
    }
    const double u = pos_rank_sum - pos * (pos + 1.0) / 2.0;
    return u / (pos * neg);
}

double macro_ovr_auc(Eigen::Ref<const Eigen::VectorXi> labels,
                     const Eigen::MatrixXd& scores) {
    const Eigen::Index n = labels.size();
    const Eigen::Index k = scores.cols();
    if (n != scores.rows()) {
        throw DataError("macro_ovr_auc: label/score row mismatch");
    }
    if (k < 2) throw DataError("macro_ovr_auc needs at least 2 classes");

    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= k) {
            throw DataError("macro_ovr_auc: label " + std::to_string(labels[i]) +
                            " outside [0, " + std::to_string(k) + ")");
        }
        ++counts[static_cast<std::size_t>(labels[i])];
    }
    std::string missing;
    for (Eigen::Index c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            if (!missing.empty()) missing += ", ";
            missing += std::to_string(c);
        }
    }
    if (!missing.empty()) {
        throw DataError("macro_ovr_auc: class(es) absent from labels: " + missing);
    }

    double total = 0.0;
    Eigen::VectorXi ovr(n);
    for (Eigen::Index c = 0; c < k; ++c) {
        for (Eigen::Index i = 0; i < n; ++i) ovr[i] = labels[i] == c ? 1 : 0;
        total += roc_auc_binary(ovr, scores.col(c));
    }
    return total / static_cast<double>(k);
}

Correlation pearson_with_p(Eigen::Ref<const Eigen::VectorXd> x,
                           Eigen::Ref<const Eigen::VectorXd> y) {
    const Eigen::Index n = x.size();
    if (n != y.size()) throw DataError("pearson_with_p: length mismatch");
    if (n < 3) throw DataError("pearson_with_p requires n >= 3");

    const Eigen::VectorXd dx = x.array() - x.mean();
    const Eigen::VectorXd dy = y.array() - y.mean();
    const double sxx = dx.squaredNorm();
    const double syy = dy.squaredNorm();
    if (sxx == 0.0 || syy == 0.0) {
        throw DataError("pearson_with_p undefined: zero variance input");
    }
    double r = dx.dot(dy) / std::sqrt(sxx * syy);
    r = std::clamp(r, -1.0, 1.0);

    const double one_minus_r2 = (1.0 - r) * (1.0 + r);
    Correlation out;
    out.statistic = r;
    if (one_minus_r2 <= 0.0) {
        out.p_value = 0.0;
        return out;
    }
    const double dof = static_cast<double>(n - 2);
    const double t = r * std::sqrt(dof / one_minus_r2);
    out.p_value = student_t_two_sided_p(t, dof);
    return out;
}

namespace {

// merge step of the inversion count; equal keys are not inversions
std::int64_t merge_count(std::vector<double>& v, std::vector<double>& buf,
                         std::size_t lo, std::size_t mid, std::size_t hi) {
    std::int64_t swaps = 0;
    std::size_t i = lo, j = mid, out = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            swaps += static_cast<std::int64_t>(mid - i);
            buf[out++] = v[j++];
        } else {
            buf[out++] = v[i++];
        }
    }
    while (i < mid) buf[out++] = v[i++];
    while (j < hi) buf[out++] = v[j++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo),
              buf.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

std::int64_t sort_counting_swaps(std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<double> buf(n);
    std::int64_t swaps = 0;
    for (std::size_t width = 1; width < n; width *= 2) {
        for (std::size_t lo = 0; lo + width < n; lo += 2 * width) {
            swaps += merge_count(v, buf, lo, lo + width, std::min(lo + 2 * width, n));
        }
    }
    return swaps;
}

// tie-group accumulation over a sorted range
template <typename Getter>
void accumulate_ties(std::size_t n, Getter key, std::int64_t& pairs, double& v1,
                     double& v2) {
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && key(j + 1) == key(i)) ++j;
        const double t = static_cast<double>(j - i + 1);
        pairs += static_cast<std::int64_t>(t * (t - 1.0) / 2.0);
        v1 += t * (t - 1.0) * (2.0 * t + 5.0);
        v2 += t * (t - 1.0) * (t - 2.0);
        i = j + 1;
    }
}

}  // namespace

KendallCounts kendall_counts(Eigen::Ref<const Eigen::VectorXd> x,
                             Eigen::Ref<const Eigen::VectorXd> y) {
    if (x.size() != y.size()) throw DataError("kendall_counts: length mismatch");
    const std::size_t n = static_cast<std::size_t>(x.size());
    KendallCounts c;
    c.n = static_cast<std::int64_t>(n);
    if (n < 2) return c;

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (x[static_cast<Eigen::Index>(a)] != x[static_cast<Eigen::Index>(b)])
            return x[static_cast<Eigen::Index>(a)] < x[static_cast<Eigen::Index>(b)];
        return y[static_cast<Eigen::Index>(a)] < y[static_cast<Eigen::Index>(b)];
    });

    const auto xs = [&](std::size_t i) { return x[static_cast<Eigen::Index>(idx[i])]; };
    const auto ys = [&](std::size_t i) { return y[static_cast<Eigen::Index>(idx[i])]; };

    accumulate_ties(n, xs, c.tied_x, c.x_v1, c.x_v2);

    // joint ties over the (x, y)-sorted sequence
    {
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && xs(j + 1) == xs(i) && ys(j + 1) == ys(i)) ++j;
            const std::int64_t t = static_cast<std::int64_t>(j - i + 1);
            c.tied_both += t * (t - 1) / 2;
            i = j + 1;
        }
    }

    std::vector<double> y_seq(n);
    for (std::size_t i = 0; i < n; ++i) y_seq[i] = ys(i);
    const std::int64_t swaps = sort_counting_swaps(y_seq);
    accumulate_ties(n, [&](std::size_t i) { return y_seq[i]; }, c.tied_y, c.y_v1,
                    c.y_v2);

    const std::int64_t n0 = c.n * (c.n - 1) / 2;
    const std::int64_t untied = n0 - c.tied_x - c.tied_y + c.tied_both;
    c.discordant = swaps;
    c.concordant = untied - swaps;
    return c;
}

Correlation kendall_tau_b_with_p(Eigen::Ref<const Eigen::VectorXd> x,
                                 Eigen::Ref<const Eigen::VectorXd> y) {
    const auto c = kendall_counts(x, y);
    if (c.n < 2) throw DataError("kendall_tau_b_with_p requires n >= 2");
    const double n0 = static_cast<double>(c.n) * (c.n - 1) / 2.0;
    const double dx = n0 - static_cast<double>(c.tied_x);
    const double dy = n0 - static_cast<double>(c.tied_y);
    if (dx == 0.0 || dy == 0.0) {
        throw DataError("kendall_tau_b_with_p undefined: all values tied in one input");
    }
    const double cmd = static_cast<double>(c.concordant - c.discordant);

    Correlation out;
    out.statistic = std::clamp(cmd / std::sqrt(dx * dy), -1.0, 1.0);

    // tie-adjusted variance of C - D (Kendall 1970)
    const double n = static_cast<double>(c.n);
    const double m = n * (n - 1.0);
    double var = (m * (2.0 * n + 5.0) - c.x_v1 - c.y_v1) / 18.0 +
                 2.0 * static_cast<double>(c.tied_x) *
                     static_cast<double>(c.tied_y) / m;
    if (c.n > 2) var += c.x_v2 * c.y_v2 / (9.0 * m * (n - 2.0));
    if (var <= 0.0) {
        out.p_value = 1.0;
        return out;
    }
    out.p_value = normal_two_sided_p(cmd / std::sqrt(var));
    return out;
}

namespace {

constexpr double kTiny = 1e-300;

double beta_continued_fraction(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) return h;
    }
    throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) {
        throw NumericError("regularized_incomplete_beta requires a, b > 0");
    }
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return bt * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - bt * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
    if (!(dof > 0.0)) throw NumericError("student_t_two_sided_p requires dof > 0");
    if (!std::isfinite(t)) return 0.0;
    const double x = dof / (dof + t * t);
    return std::clamp(regularized_incomplete_beta(dof / 2.0, 0.5, x), 0.0, 1.0);
}

double normal_two_sided_p(double z) {
    return std::clamp(std::erfc(std::abs(z) / std::sqrt(2.0)), 0.0, 1.0);
}

namespace {

struct PairKey {
    std::string model_id;
    std::uint64_t seed;
    std::string domain;
    bool operator<(const PairKey& o) const {
        if (model_id != o.model_id) return model_id < o.model_id;
        if (seed != o.seed) return seed < o.seed;
        return domain < o.domain;
    }
    std::string str() const {
        return model_id + "/" + std::to_string(seed) + "/" + domain;
    }
};

// 1:1 pairing on (model_id, seed, domain); throws on any mismatch
std::pair<Eigen::VectorXd, Eigen::VectorXd> paired_deltas(
    const std::vector<ShiftResult>& stress, const std::vector<ShiftResult>& ood) {
    std::map<PairKey, double> ood_by_key;
    for (const auto& s : ood) {
        PairKey k{s.model_id, s.seed, s.domain};
        if (!ood_by_key.emplace(k, s.delta_vs_iid).second) {
            throw DataError("mae_of_shifts: duplicate OOD pair key " + k.str());
        }
    }
    if (stress.size() != ood.size()) {
        throw DataError("mae_of_shifts: unmatched pair counts (" +
                        std::to_string(stress.size()) + " stress vs " +
                        std::to_string(ood.size()) + " OOD)");
    }
    Eigen::VectorXd a(static_cast<Eigen::Index>(stress.size()));
    Eigen::VectorXd b(static_cast<Eigen::Index>(stress.size()));
    Eigen::Index i = 0;
    std::map<PairKey, bool> seen;
    for (const auto& s : stress) {
        PairKey k{s.model_id, s.seed, s.domain};
        const auto it = ood_by_key.find(k);
        if (it == ood_by_key.end() || seen[k]) {
            throw DataError("mae_of_shifts: unmatched stress pair key " + k.str());
        }
        seen[k] = true;
        a[i] = s.delta_vs_iid;
        b[i] = it->second;
        ++i;
    }
    return {a, b};
}

}  // namespace

MeanStd mae_of_shifts(const std::vector<ShiftResult>& stress,
                      const std::vector<ShiftResult>& ood) {
    const auto [a, b] = paired_deltas(stress, ood);
    if (a.size() == 0) throw DataError("mae_of_shifts: no pairs");
    const Eigen::ArrayXd err = (a - b).array().abs();
    MeanStd out;
    out.mean = err.mean();
    out.stddev = std::sqrt((err - out.mean).square().mean());
    return out;
}

AgreementStats agreement_stats(const std::vector<ShiftResult>& stress,
                               const std::vector<ShiftResult>& ood) {
    const auto [a, b] = paired_deltas(stress, ood);
    AgreementStats out;
    out.n = static_cast<int>(a.size());
    if (out.n == 0) throw DataError("agreement_stats: no pairs");
    const Eigen::ArrayXd err = (a - b).array().abs();
    out.mae.mean = err.mean();
    out.mae.stddev = std::sqrt((err - out.mae.mean).square().mean());
    if (out.n >= 3) {
        try {
            const auto p = pearson_with_p(a, b);
            out.pearson_r = p.statistic;
            out.pearson_p = p.p_value;
        } catch (const DataError&) {
            // zero variance: correlation undefined, leave unset
        }
    }
    if (out.n >= 2) {
        try {
            const auto k = kendall_tau_b_with_p(a, b);
            out.kendall_tau = k.statistic;
            out.kendall_p = k.p_value;
        } catch (const DataError&) {
        }
    }
    return out;
}

}  // namespace cfstress
