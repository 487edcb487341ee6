#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cfstress/classify.hpp"
#include "cfstress/error.hpp"
#include "cfstress/metrics.hpp"

namespace cfstress {

namespace {

double metric_over_rows(const std::vector<const ScoreRow*>& rows,
                        const std::map<std::string, int>& labels_by_image,
                        MetricKind kind) {
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index k = rows.front()->scores.size();
    Eigen::VectorXi labels(n);
    Eigen::MatrixXd scores(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const ScoreRow& row = *rows[static_cast<std::size_t>(i)];
        auto it = labels_by_image.find(row.image_id);
        if (it == labels_by_image.end())
            throw DataError("no label known for image '" + row.image_id + "'");
        if (row.scores.size() != k)
            throw DataError("inconsistent score vector length for image '" + row.image_id + "'");
        labels(i) = it->second;
        scores.row(i) = row.scores.transpose();
    }
    if (kind == MetricKind::AveragePrecision) {
        if (k < 2) throw DataError("AP requires at least two score columns");
        return average_precision(labels, scores.col(1));
    }
    return macro_ovr_auc(labels, scores);
}

}  // namespace

std::vector<ShiftResult> shift_deltas(const ScoreTable& scores,
                                      const std::map<std::string, int>& labels_by_image,
                                      MetricKind kind, std::string_view domain) {
    // (model_id, seed) -> condition -> rows
    std::map<std::pair<std::string, std::uint64_t>,
             std::map<std::string, std::vector<const ScoreRow*>>>
        groups;
    for (const ScoreRow& row : scores.rows)
        groups[{row.model_id, row.seed}][row.condition].push_back(&row);

    std::vector<ShiftResult> out;
    for (const auto& [key, by_condition] : groups) {
        auto iid_it = by_condition.find(std::string(kIidCondition));
        if (iid_it == by_condition.end())
            throw DataError("missing IID baseline for model '" + key.first + "', seed " +
                            std::to_string(key.second));
        const double iid_value = metric_over_rows(iid_it->second, labels_by_image, kind);
        for (const auto& [condition, rows] : by_condition) {
            ShiftResult res;
            res.model_id = key.first;
            res.seed = key.second;
            res.domain = std::string(domain);
            res.condition = condition;
            res.metric = kind;
            res.value = condition == kIidCondition ? iid_value
                                                   : metric_over_rows(rows, labels_by_image, kind);
            res.delta_vs_iid = condition == kIidCondition ? 0.0 : res.value - iid_value;
            out.push_back(std::move(res));
        }
    }
    return out;
}

}  // namespace cfstress
