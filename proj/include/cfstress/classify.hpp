#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfstress/imaging.hpp"
#include "cfstress/manifest.hpp"

namespace cfstress {

enum class ClassifierKind { Logistic, Mlp };

ClassifierKind parse_classifier_kind(std::string_view name);
std::string_view classifier_kind_name(ClassifierKind kind);

struct ClassifierSpec {
    ClassifierKind kind = ClassifierKind::Logistic;
    int input_side = 32;
    int hidden_units = 64;  // mlp only
    int class_count = 2;
    double learning_rate = 1e-4;
    int batch_size = 32;
    int max_epochs = 200;
    int patience = 10;
    std::uint64_t seed = 0;
    bool augment = false;

    void validate() const;
    int feature_dim() const { return input_side * input_side; }
    int weight_count() const;
};

nlohmann::json classifier_spec_to_json(const ClassifierSpec& spec);
ClassifierSpec classifier_spec_from_json(const nlohmann::json& j);

/// Stable identifier: first 12 hex digits of the SHA-256 of the canonical
/// spec JSON (seed included).
std::string model_id(const ClassifierSpec& spec);

/// Area-averaged downsample to input_side x input_side followed by per-image
/// standardization (std below 1e-8 is replaced by 1).
Eigen::VectorXd extract_features(const ImageGray& img, int input_side);

struct AugmentOptions {
    double flip_prob = 0.5;
    double max_rotation_deg = 10.0;
    double brightness_lo = 0.9, brightness_hi = 1.1;
    double blur_prob = 0.25;
    double erase_prob = 0.25;

    static AugmentOptions disabled() {
        return {0.0, 0.0, 1.0, 1.0, 0.0, 0.0};
    }
};

/// Seeded augmentation pipeline: horizontal flip, small rotation (bilinear,
/// zero fill), brightness jitter, occasional 3x3 blur, occasional random
/// erasing. Output stays in [0, 1].
ImageGray augment(const ImageGray& img, std::uint64_t seed,
                  const AugmentOptions& opts = {});

struct TrainedModel {
    ClassifierSpec spec;
    Eigen::VectorXd weights;
    std::vector<double> val_loss_curve;
    int stopped_epoch = 0;  // 1-based epoch at which training halted
    int best_epoch = 0;     // epoch whose weights are returned
    std::vector<std::string> warnings;
};

/// Mean softmax cross-entropy and its analytic gradient at `weights`.
/// `features` is n x D, labels in [0, K).
double loss_and_gradient(const ClassifierSpec& spec, const Eigen::VectorXd& weights,
                         const Eigen::MatrixXd& features,
                         const Eigen::VectorXi& labels, Eigen::VectorXd* grad);

/// Softmax class probabilities, n x K.
Eigen::MatrixXd forward_probabilities(const ClassifierSpec& spec,
                                      const Eigen::VectorXd& weights,
                                      const Eigen::MatrixXd& features);

Eigen::VectorXd init_weights(const ClassifierSpec& spec);

/// Adam with early stopping on validation loss; weights restored from the
/// best-validation epoch. Deterministic given (records, images, spec): the
/// per-epoch permutation is drawn over the canonical image_id order, so the
/// storage order of `train` does not matter.
TrainedModel train_classifier(const std::vector<ImageRecord>& train,
                              const std::vector<ImageRecord>& val,
                              const ImageStore& images, const ClassifierSpec& spec);

struct ScoreRow {
    std::string image_id;
    std::string model_id;
    std::uint64_t seed = 0;
    std::string condition;
    Eigen::VectorXd scores;
};

struct ScoreTable {
    std::vector<ScoreRow> rows;

    int class_count() const;  // 0 when empty
};

ScoreTable predict_scores(const TrainedModel& model, const ImageStore& images,
                          std::string_view condition);

ScoreTable import_scores(std::string_view csv_text);
std::string export_scores(const ScoreTable& table);

void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace cfstress
