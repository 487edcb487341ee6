#include "cfstress/classify.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numeric>
#include <set>

#include "cfstress/csv.hpp"
#include "cfstress/error.hpp"
#include "cfstress/io.hpp"
#include "cfstress/rng.hpp"

namespace cfstress {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kAdamBeta1 = 0.9, kAdamBeta2 = 0.999, kAdamEps = 1e-8;
constexpr double kEarlyStopDelta = 1e-6;

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajorMatrix>;
using MatMap = Eigen::Map<RowMajorMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Softmax row-wise in place via log-sum-exp; returns per-row log normalizers.
Eigen::VectorXd softmax_rows(Eigen::MatrixXd& z) {
    Eigen::VectorXd lse(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double zmax = z.row(i).maxCoeff();
        const double sum = (z.row(i).array() - zmax).exp().sum();
        lse(i) = zmax + std::log(sum);
        z.row(i) = (z.row(i).array() - lse(i)).exp();
    }
    return lse;
}

struct LogisticView {
    ConstMatMap w;
    ConstVecMap b;
    LogisticView(const Eigen::VectorXd& weights, int feature_dim, int classes)
        : w(weights.data(), classes, feature_dim),
          b(weights.data() + static_cast<std::ptrdiff_t>(classes) * feature_dim, classes) {}
};

struct MlpView {
    ConstMatMap w1;
    ConstVecMap b1;
    ConstMatMap w2;
    ConstVecMap b2;
    MlpView(const Eigen::VectorXd& weights, int feature_dim, int hidden, int classes)
        : w1(weights.data(), hidden, feature_dim),
          b1(weights.data() + static_cast<std::ptrdiff_t>(hidden) * feature_dim, hidden),
          w2(weights.data() + static_cast<std::ptrdiff_t>(hidden) * feature_dim + hidden,
             classes, hidden),
          b2(weights.data() + static_cast<std::ptrdiff_t>(hidden) * feature_dim + hidden +
                 static_cast<std::ptrdiff_t>(classes) * hidden,
             classes) {}
};

Eigen::MatrixXd forward_logits(const ClassifierSpec& spec, const Eigen::VectorXd& weights,
                               const Eigen::MatrixXd& x,
                               Eigen::MatrixXd* hidden_out = nullptr) {
    const int d = spec.feature_dim(), k = spec.class_count;
    if (x.cols() != d)
        throw DataError("feature dimension " + std::to_string(x.cols()) +
                        " does not match spec input_side");
    if (weights.size() != spec.weight_count())
        throw DataError("weight vector has wrong length for spec");
    if (spec.kind == ClassifierKind::Logistic) {
        LogisticView v(weights, d, k);
        return ((x * v.w.transpose()).rowwise() + v.b.transpose()).eval();
    }
    MlpView v(weights, d, spec.hidden_units, k);
    Eigen::MatrixXd a = ((x * v.w1.transpose()).rowwise() + v.b1.transpose()).array().tanh();
    Eigen::MatrixXd z = (a * v.w2.transpose()).rowwise() + v.b2.transpose();
    if (hidden_out != nullptr) *hidden_out = std::move(a);
    return z;
}

ImageGray rotate_bilinear(const ImageGray& img, double degrees) {
    const double rad = degrees * kPi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const Eigen::Index h = img.height(), w = img.width();
    const double cy = 0.5 * static_cast<double>(h - 1), cx = 0.5 * static_cast<double>(w - 1);
    ImageGray out;
    out.pixels.setZero(h, w);
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            // inverse-rotate the output pixel into the source frame
            const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
            const double sx = c * dx + s * dy + cx;
            const double sy = -s * dx + c * dy + cy;
            const double fx = std::floor(sx), fy = std::floor(sy);
            const Eigen::Index x0 = static_cast<Eigen::Index>(fx);
            const Eigen::Index y0 = static_cast<Eigen::Index>(fy);
            const double tx = sx - fx, ty = sy - fy;
            auto at = [&](Eigen::Index yy, Eigen::Index xx) {
                return (yy >= 0 && yy < h && xx >= 0 && xx < w) ? img.pixels(yy, xx) : 0.0;
            };
            out.pixels(y, x) = (1.0 - ty) * ((1.0 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                               ty * ((1.0 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
        }
    }
    return out;
}

std::vector<ImageRecord> canonical_order(std::vector<ImageRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.image_id < b.image_id; });
    return records;
}

const ImageGray& image_for(const ImageStore& images, const std::string& id) {
    auto it = images.find(id);
    if (it == images.end()) throw DataError("no image stored for '" + id + "'");
    return it->second;
}

Eigen::MatrixXd feature_matrix(const std::vector<ImageRecord>& records,
                               const ImageStore& images, int input_side) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()), input_side * input_side);
    for (std::size_t i = 0; i < records.size(); ++i)
        x.row(static_cast<Eigen::Index>(i)) =
            extract_features(image_for(images, records[i].image_id), input_side).transpose();
    return x;
}

}  // namespace

ClassifierKind parse_classifier_kind(std::string_view name) {
    if (name == "logistic") return ClassifierKind::Logistic;
    if (name == "mlp") return ClassifierKind::Mlp;
    throw ConfigError("unknown classifier kind '" + std::string(name) + "'");
}

std::string_view classifier_kind_name(ClassifierKind kind) {
    return kind == ClassifierKind::Logistic ? "logistic" : "mlp";
}

void ClassifierSpec::validate() const {
    if (input_side < 1) throw ConfigError("input_side must be positive");
    if (kind == ClassifierKind::Mlp && hidden_units < 1)
        throw ConfigError("hidden_units must be positive");
    if (class_count < 2) throw ConfigError("class_count must be at least 2");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
    if (patience < 1) throw ConfigError("patience must be at least 1");
}

int ClassifierSpec::weight_count() const {
    const int d = feature_dim(), k = class_count;
    if (kind == ClassifierKind::Logistic) return k * d + k;
    return hidden_units * d + hidden_units + k * hidden_units + k;
}

nlohmann::json classifier_spec_to_json(const ClassifierSpec& spec) {
    nlohmann::json j;
    j["kind"] = classifier_kind_name(spec.kind);
    j["input_side"] = spec.input_side;
    if (spec.kind == ClassifierKind::Mlp) j["hidden_units"] = spec.hidden_units;
    j["class_count"] = spec.class_count;
    j["learning_rate"] = spec.learning_rate;
    j["batch_size"] = spec.batch_size;
    j["max_epochs"] = spec.max_epochs;
    j["patience"] = spec.patience;
    j["seed"] = spec.seed;
    j["augment"] = spec.augment;
    return j;
}

ClassifierSpec classifier_spec_from_json(const nlohmann::json& j) {
    ClassifierSpec spec;
    spec.kind = parse_classifier_kind(j.value("kind", "logistic"));
    spec.input_side = j.value("input_side", spec.input_side);
    spec.hidden_units = j.value("hidden_units", spec.hidden_units);
    spec.class_count = j.value("class_count", spec.class_count);
    spec.learning_rate = j.value("learning_rate", spec.learning_rate);
    spec.batch_size = j.value("batch_size", spec.batch_size);
    spec.max_epochs = j.value("max_epochs", spec.max_epochs);
    spec.patience = j.value("patience", spec.patience);
    spec.seed = j.value("seed", spec.seed);
    spec.augment = j.value("augment", spec.augment);
    spec.validate();
    return spec;
}

std::string model_id(const ClassifierSpec& spec) {
    return sha256_hex(classifier_spec_to_json(spec).dump()).substr(0, 12);
}

Eigen::VectorXd extract_features(const ImageGray& img, int input_side) {
    if (input_side < 1) throw ConfigError("input_side must be positive");
    const Eigen::Index h = img.height(), w = img.width();
    if (h == 0 || w == 0) throw DataError("cannot extract features from an empty image");

    const int s = input_side;
    Eigen::VectorXd out(static_cast<Eigen::Index>(s) * s);
    const double ry = static_cast<double>(h) / s, rx = static_cast<double>(w) / s;
    for (int i = 0; i < s; ++i) {
        const double sy = i * ry, ey = (i + 1) * ry;
        const Eigen::Index y_first = static_cast<Eigen::Index>(std::floor(sy));
        for (int j = 0; j < s; ++j) {
            const double sx = j * rx, ex = (j + 1) * rx;
            const Eigen::Index x_first = static_cast<Eigen::Index>(std::floor(sx));
            double acc = 0.0;
            for (Eigen::Index y = y_first; y < h && static_cast<double>(y) < ey; ++y) {
                const double wy = std::min(ey, static_cast<double>(y) + 1.0) -
                                  std::max(sy, static_cast<double>(y));
                if (wy <= 0.0) continue;
                for (Eigen::Index x = x_first; x < w && static_cast<double>(x) < ex; ++x) {
                    const double wx = std::min(ex, static_cast<double>(x) + 1.0) -
                                      std::max(sx, static_cast<double>(x));
                    if (wx <= 0.0) continue;
                    acc += wy * wx * img.pixels(y, x);
                }
            }
            out(static_cast<Eigen::Index>(i) * s + j) = acc / (ry * rx);
        }
    }

    const double mean = out.mean();
    double sd = std::sqrt((out.array() - mean).square().mean());
    if (sd < 1e-8) sd = 1.0;
    return (out.array() - mean) / sd;
}

ImageGray augment(const ImageGray& img, std::uint64_t seed, const AugmentOptions& opts) {
    Rng rng(derive_seed(seed, 0x61756721ULL));
    ImageGray out = img;

    if (rng.bernoulli(opts.flip_prob)) out.pixels = out.pixels.rowwise().reverse().eval();

    const double angle = rng.uniform(-opts.max_rotation_deg, opts.max_rotation_deg);
    if (angle != 0.0) out = rotate_bilinear(out, angle);

    const double factor = rng.uniform(opts.brightness_lo, opts.brightness_hi);
    if (factor != 1.0) out = apply_brightness(out, factor);

    if (rng.bernoulli(opts.blur_prob)) out = apply_gaussian_blur(out, 3, 0.7);

    if (rng.bernoulli(opts.erase_prob)) {
        const Eigen::Index h = out.height(), w = out.width();
        const double area = rng.uniform(0.02, 0.08) * static_cast<double>(h * w);
        const double aspect = rng.uniform(0.5, 2.0);
        Eigen::Index rw = std::clamp<Eigen::Index>(
            static_cast<Eigen::Index>(std::lround(std::sqrt(area * aspect))), 1, w);
        Eigen::Index rh = std::clamp<Eigen::Index>(
            static_cast<Eigen::Index>(std::lround(std::sqrt(area / aspect))), 1, h);
        const Eigen::Index x0 = static_cast<Eigen::Index>(
            rng.uniform_index(static_cast<std::size_t>(w - rw + 1)));
        const Eigen::Index y0 = static_cast<Eigen::Index>(
            rng.uniform_index(static_cast<std::size_t>(h - rh + 1)));
        out.pixels.block(y0, x0, rh, rw).setZero();
    }
    return out;
}

double loss_and_gradient(const ClassifierSpec& spec, const Eigen::VectorXd& weights,
                         const Eigen::MatrixXd& features, const Eigen::VectorXi& labels,
                         Eigen::VectorXd* grad) {
    const Eigen::Index n = features.rows();
    if (n == 0) throw DataError("loss requires at least one sample");
    if (labels.size() != n) throw DataError("label count does not match feature rows");
    const int k = spec.class_count;
    for (Eigen::Index i = 0; i < n; ++i)
        if (labels(i) < 0 || labels(i) >= k)
            throw DataError("label " + std::to_string(labels(i)) + " outside [0, " +
                            std::to_string(k) + ")");

    Eigen::MatrixXd hidden;
    Eigen::MatrixXd p = forward_logits(spec, weights, features,
                                       spec.kind == ClassifierKind::Mlp ? &hidden : nullptr);
    Eigen::MatrixXd logits = p;  // keep pre-softmax copy for the loss
    const Eigen::VectorXd lse = softmax_rows(p);

    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) loss += lse(i) - logits(i, labels(i));
    loss /= static_cast<double>(n);

    if (grad != nullptr) {
        Eigen::MatrixXd g = p;  // dL/dz = (softmax - onehot) / n
        for (Eigen::Index i = 0; i < n; ++i) g(i, labels(i)) -= 1.0;
        g /= static_cast<double>(n);

        grad->resize(spec.weight_count());
        const int d = spec.feature_dim();
        if (spec.kind == ClassifierKind::Logistic) {
            MatMap dw(grad->data(), k, d);
            VecMap db(grad->data() + static_cast<std::ptrdiff_t>(k) * d, k);
            dw = g.transpose() * features;
            db = g.colwise().sum().transpose();
        } else {
            const int hnum = spec.hidden_units;
            MlpView v(weights, d, hnum, k);
            MatMap dw1(grad->data(), hnum, d);
            VecMap db1(grad->data() + static_cast<std::ptrdiff_t>(hnum) * d, hnum);
            MatMap dw2(grad->data() + static_cast<std::ptrdiff_t>(hnum) * d + hnum, k, hnum);
            VecMap db2(grad->data() + static_cast<std::ptrdiff_t>(hnum) * d + hnum +
                           static_cast<std::ptrdiff_t>(k) * hnum,
                       k);
            dw2 = g.transpose() * hidden;
            db2 = g.colwise().sum().transpose();
            Eigen::MatrixXd dpre =
                (g * v.w2).array() * (1.0 - hidden.array().square());
            dw1 = dpre.transpose() * features;
            db1 = dpre.colwise().sum().transpose();
        }
    }
    return loss;
}

Eigen::MatrixXd forward_probabilities(const ClassifierSpec& spec,
                                      const Eigen::VectorXd& weights,
                                      const Eigen::MatrixXd& features) {
    Eigen::MatrixXd p = forward_logits(spec, weights, features);
    softmax_rows(p);
    return p;
}

Eigen::VectorXd init_weights(const ClassifierSpec& spec) {
    spec.validate();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(spec.weight_count());
    if (spec.kind == ClassifierKind::Mlp) {
        Rng rng(derive_seed(spec.seed, 0x696e6974ULL));
        const int d = spec.feature_dim(), hnum = spec.hidden_units, k = spec.class_count;
        const double r1 = std::sqrt(6.0 / (d + hnum));
        for (int i = 0; i < hnum * d; ++i) w(i) = rng.uniform(-r1, r1);
        const double r2 = std::sqrt(6.0 / (hnum + k));
        const int off = hnum * d + hnum;
        for (int i = 0; i < k * hnum; ++i) w(off + i) = rng.uniform(-r2, r2);
    }
    return w;
}

TrainedModel train_classifier(const std::vector<ImageRecord>& train,
                              const std::vector<ImageRecord>& val,
                              const ImageStore& images, const ClassifierSpec& spec) {
    spec.validate();
    if (train.empty()) throw DataError("training set is empty");
    if (val.empty()) throw DataError("validation set is empty");

    const std::vector<ImageRecord> train_sorted = canonical_order(train);
    const std::vector<ImageRecord> val_sorted = canonical_order(val);

    TrainedModel model;
    model.spec = spec;

    std::set<int> present;
    for (const ImageRecord& rec : train_sorted) {
        if (rec.label >= spec.class_count)
            throw DataError("record '" + rec.image_id + "' has label " +
                            std::to_string(rec.label) + " >= class_count");
        present.insert(rec.label);
    }
    for (const ImageRecord& rec : val_sorted)
        if (rec.label >= spec.class_count)
            throw DataError("record '" + rec.image_id + "' has label " +
                            std::to_string(rec.label) + " >= class_count");
    for (int c = 0; c < spec.class_count; ++c)
        if (present.count(c) == 0)
            model.warnings.push_back("class " + std::to_string(c) +
                                     " absent from training set");

    const Eigen::Index n = static_cast<Eigen::Index>(train_sorted.size());
    Eigen::VectorXi y_train(n);
    for (Eigen::Index i = 0; i < n; ++i) y_train(i) = train_sorted[static_cast<std::size_t>(i)].label;
    Eigen::MatrixXd x_train;
    if (!spec.augment) x_train = feature_matrix(train_sorted, images, spec.input_side);

    const Eigen::MatrixXd x_val = feature_matrix(val_sorted, images, spec.input_side);
    Eigen::VectorXi y_val(static_cast<Eigen::Index>(val_sorted.size()));
    for (Eigen::Index i = 0; i < y_val.size(); ++i)
        y_val(i) = val_sorted[static_cast<std::size_t>(i)].label;

    Eigen::VectorXd w = init_weights(spec);
    Eigen::VectorXd adam_m = Eigen::VectorXd::Zero(w.size());
    Eigen::VectorXd adam_v = Eigen::VectorXd::Zero(w.size());
    long step = 0;

    Eigen::VectorXd best_w = w;
    double best_val = std::numeric_limits<double>::infinity();
    int since_improve = 0;

    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    Eigen::VectorXd grad(w.size());
    for (int epoch = 1; epoch <= spec.max_epochs; ++epoch) {
        Rng perm_rng(derive_seed(spec.seed, 0x65706f63ULL, static_cast<std::uint64_t>(epoch)));
        perm_rng.shuffle(order);

        const Eigen::Index bsz = spec.batch_size;
        for (Eigen::Index start = 0, batch_no = 0; start < n; start += bsz, ++batch_no) {
            const Eigen::Index count = std::min<Eigen::Index>(bsz, n - start);
            Eigen::MatrixXd xb(count, spec.feature_dim());
            Eigen::VectorXi yb(count);
            for (Eigen::Index r = 0; r < count; ++r) {
                const std::size_t idx = order[static_cast<std::size_t>(start + r)];
                yb(r) = y_train(static_cast<Eigen::Index>(idx));
                if (spec.augment) {
                    const ImageRecord& rec = train_sorted[idx];
                    const std::uint64_t aug_seed = derive_seed(
                        derive_seed(spec.seed, 0x61756700ULL, static_cast<std::uint64_t>(epoch)),
                        static_cast<std::uint64_t>(idx));
                    xb.row(r) = extract_features(
                                    augment(image_for(images, rec.image_id), aug_seed),
                                    spec.input_side)
                                    .transpose();
                } else {
                    xb.row(r) = x_train.row(static_cast<Eigen::Index>(idx));
                }
            }

            const double loss = loss_and_gradient(spec, w, xb, yb, &grad);
            if (!std::isfinite(loss))
                throw NumericError("non-finite training loss at epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_no));

            ++step;
            adam_m = kAdamBeta1 * adam_m + (1.0 - kAdamBeta1) * grad;
            adam_v = kAdamBeta2 * adam_v.array() + (1.0 - kAdamBeta2) * grad.array().square();
            const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
            w.array() -= spec.learning_rate * (adam_m.array() / bc1) /
                         ((adam_v.array() / bc2).sqrt() + kAdamEps);
        }

        const double val_loss = loss_and_gradient(spec, w, x_val, y_val, nullptr);
        if (!std::isfinite(val_loss))
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        model.val_loss_curve.push_back(val_loss);

        if (val_loss < best_val - kEarlyStopDelta) {
            best_val = val_loss;
            best_w = w;
            model.best_epoch = epoch;
            since_improve = 0;
        } else {
            ++since_improve;
        }
        model.stopped_epoch = epoch;
        if (since_improve >= spec.patience) break;
    }

    model.weights = std::move(best_w);
    return model;
}

int ScoreTable::class_count() const {
    return rows.empty() ? 0 : static_cast<int>(rows.front().scores.size());
}

ScoreTable predict_scores(const TrainedModel& model, const ImageStore& images,
                          std::string_view condition) {
    const std::string id = model_id(model.spec);
    ScoreTable table;
    table.rows.reserve(images.size());
    for (const auto& [image_id, img] : images) {
        Eigen::MatrixXd x = extract_features(img, model.spec.input_side).transpose();
        Eigen::MatrixXd p = forward_probabilities(model.spec, model.weights, x);
        ScoreRow row;
        row.image_id = image_id;
        row.model_id = id;
        row.seed = model.spec.seed;
        row.condition = std::string(condition);
        row.scores = p.row(0).transpose();
        table.rows.push_back(std::move(row));
    }
    return table;
}

ScoreTable import_scores(std::string_view csv_text) {
    const std::vector<std::vector<std::string>> rows = parse_csv(csv_text);
    if (rows.empty()) throw DataError("score file is empty");
    const std::vector<std::string>& header = rows.front();
    if (header.size() < 6 || header[0] != "image_id" || header[1] != "model_id" ||
        header[2] != "seed" || header[3] != "condition")
        throw DataError("score header must be image_id,model_id,seed,condition,score_0,...");
    const int k = static_cast<int>(header.size()) - 4;
    for (int c = 0; c < k; ++c)
        if (header[static_cast<std::size_t>(4 + c)] != "score_" + std::to_string(c))
            throw DataError("score header column " + std::to_string(4 + c) +
                            " must be score_" + std::to_string(c));

    ScoreTable table;
    table.rows.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size())
            throw DataError("score row " + std::to_string(r + 1) + " has " +
                            std::to_string(row.size()) + " fields, expected " +
                            std::to_string(header.size()));
        ScoreRow out;
        out.image_id = row[0];
        out.model_id = row[1];
        try {
            out.seed = std::stoull(row[2]);
        } catch (const std::exception&) {
            throw DataError("score row " + std::to_string(r + 1) + ": bad seed '" + row[2] + "'");
        }
        out.condition = row[3];
        out.scores.resize(k);
        for (int c = 0; c < k; ++c) {
            const std::string& field = row[static_cast<std::size_t>(4 + c)];
            char* end = nullptr;
            const double v = std::strtod(field.c_str(), &end);
            if (end != field.c_str() + field.size() || field.empty())
                throw DataError("score row " + std::to_string(r + 1) + ": bad score '" +
                                field + "'");
            if (!std::isfinite(v))
                throw DataError("score row " + std::to_string(r + 1) +
                                ": non-finite score '" + field + "'");
            out.scores(c) = v;
        }
        table.rows.push_back(std::move(out));
    }
    return table;
}

std::string export_scores(const ScoreTable& table) {
    const int k = table.class_count();
    std::string out = "image_id,model_id,seed,condition";
    for (int c = 0; c < k; ++c) out += ",score_" + std::to_string(c);
    out += '\n';
    for (const ScoreRow& row : table.rows) {
        if (row.scores.size() != k)
            throw DataError("score row for '" + row.image_id +
                            "' has inconsistent class count");
        out += csv_field(row.image_id);
        out += ',';
        out += csv_field(row.model_id);
        out += ',';
        out += std::to_string(row.seed);
        out += ',';
        out += csv_field(row.condition);
        for (int c = 0; c < k; ++c) {
            out += ',';
            out += fmt17(row.scores(c));
        }
        out += '\n';
    }
    return out;
}

void save_model(const TrainedModel& model, const std::string& path) {
    std::string blob(static_cast<std::size_t>(model.weights.size()) * 8, '\0');
    for (Eigen::Index i = 0; i < model.weights.size(); ++i) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(model.weights(i));
        for (int b = 0; b < 8; ++b)
            blob[static_cast<std::size_t>(i) * 8 + static_cast<std::size_t>(b)] =
                static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    write_file(path, blob);

    nlohmann::json j;
    j["spec"] = classifier_spec_to_json(model.spec);
    j["val_loss_curve"] = model.val_loss_curve;
    j["stopped_epoch"] = model.stopped_epoch;
    j["best_epoch"] = model.best_epoch;
    j["warnings"] = model.warnings;
    j["weight_count"] = model.weights.size();
    write_file(path + ".json", j.dump(2) + "\n");
}

TrainedModel load_model(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path + ".json"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse model sidecar '" + path + ".json': " + e.what());
    }
    TrainedModel model;
    model.spec = classifier_spec_from_json(j.at("spec"));
    model.val_loss_curve = j.value("val_loss_curve", std::vector<double>{});
    model.stopped_epoch = j.value("stopped_epoch", 0);
    model.best_epoch = j.value("best_epoch", 0);
    model.warnings = j.value("warnings", std::vector<std::string>{});

    const std::string blob = read_file(path);
    const Eigen::Index count = j.at("weight_count").get<Eigen::Index>();
    if (blob.size() != static_cast<std::size_t>(count) * 8)
        throw DataError("model file '" + path + "' has " + std::to_string(blob.size()) +
                        " bytes, expected " + std::to_string(count * 8));
    model.weights.resize(count);
    for (Eigen::Index i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b)
            bits = (bits << 8) |
                   static_cast<std::uint8_t>(blob[static_cast<std::size_t>(i) * 8 +
                                                  static_cast<std::size_t>(b)]);
        model.weights(i) = std::bit_cast<double>(bits);
    }
    if (model.weights.size() != model.spec.weight_count())
        throw DataError("model weights do not match spec dimensions");
    return model;
}

}  // namespace cfstress
