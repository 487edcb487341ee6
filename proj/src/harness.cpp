#include "cfstress/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "cfstress/csv.hpp"
#include "cfstress/error.hpp"
#include "cfstress/io.hpp"
#include "cfstress/rng.hpp"
#include "cfstress/version.hpp"

namespace cfstress {

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// Fixed display/report row order; unknown tags sort after, alphabetically.
int condition_rank(std::string_view condition) {
    static constexpr std::string_view order[] = {kIidCondition, "GC", "CC", "BC",
                                                 "SC", "GB",    kCfCondition, kOodCondition};
    for (int i = 0; i < static_cast<int>(std::size(order)); ++i)
        if (condition == order[i]) return i;
    return static_cast<int>(std::size(order));
}

bool condition_less(std::string_view a, std::string_view b) {
    const int ra = condition_rank(a), rb = condition_rank(b);
    return ra != rb ? ra < rb : a < b;
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v.has_value() ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from_json(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

template <typename Fn>
auto with_run_coordinates(const std::string& coords, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(coords + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(coords + ": " + e.what());
    } catch (const NumericError& e) {
        throw NumericError(coords + ": " + e.what());
    }
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (const char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string ShiftAxis::name() const {
    std::string out;
    for (const AxisComponent& c : components) {
        if (!out.empty()) out += '+';
        out += c.attribute + ":" + c.train_value + "->" + c.eval_value;
    }
    return out;
}

void ExperimentConfig::validate() const {
    world.validate();
    if (samples < 1) throw ConfigError("samples must be at least 1");
    if (axes.empty()) throw ConfigError("at least one shift axis required");
    if (classifiers.empty()) throw ConfigError("at least one classifier required");
    if (seeds.empty()) throw ConfigError("at least one seed required");
    std::set<std::string> axis_names;
    for (const ShiftAxis& axis : axes) {
        if (axis.components.empty())
            throw ConfigError("shift axis without components");
        std::set<std::string> attrs;
        bool any_change = false;
        for (const AxisComponent& c : axis.components) {
            if (c.attribute.empty()) throw ConfigError("axis component without attribute");
            if (!attrs.insert(c.attribute).second)
                throw ConfigError("axis '" + axis.name() + "' repeats attribute '" +
                                  c.attribute + "'");
            any_change = any_change || c.train_value != c.eval_value;
        }
        if (!any_change)
            throw ConfigError("axis '" + axis.name() + "' intervenes on nothing");
        if (!axis_names.insert(axis.name()).second)
            throw ConfigError("duplicate shift axis '" + axis.name() + "'");
    }
    for (const PerturbationSpec& p : perturbations) p.validate();
    for (const ClassifierSpec& c : classifiers) c.validate();
    matching.validate();
    double rsum = 0.0;
    for (const double r : split_ratios) {
        if (r < 0.0) throw ConfigError("split ratios must be non-negative");
        rsum += r;
    }
    if (std::abs(rsum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

nlohmann::json perturbation_to_json(const PerturbationSpec& spec) {
    nlohmann::json j;
    j["kind"] = spec.tag();
    switch (spec.kind) {
        case PerturbationKind::GammaCorrection:
            j["gamma"] = spec.gamma;
            break;
        case PerturbationKind::ContrastChange:
            j["contrast_factor"] = spec.contrast_factor;
            j["contrast_pivot"] = optional_json(spec.contrast_pivot);
            break;
        case PerturbationKind::BrightnessChange:
            j["brightness_factor"] = spec.brightness_factor;
            break;
        case PerturbationKind::SharpnessChange:
            j["sharpness_factor"] = spec.sharpness_factor;
            break;
        case PerturbationKind::GaussianBlur:
            j["kernel_size"] = spec.kernel_size;
            j["sigma"] = spec.sigma;
            break;
    }
    return j;
}

PerturbationSpec perturbation_from_json(const nlohmann::json& j) {
    PerturbationSpec spec;
    if (j.is_string()) {
        spec.kind = parse_perturbation_kind(j.get<std::string>());
        return spec;
    }
    spec.kind = parse_perturbation_kind(j.at("kind").get<std::string>());
    spec.gamma = j.value("gamma", spec.gamma);
    spec.contrast_factor = j.value("contrast_factor", spec.contrast_factor);
    if (j.contains("contrast_pivot") && !j.at("contrast_pivot").is_null())
        spec.contrast_pivot = j.at("contrast_pivot").get<double>();
    spec.brightness_factor = j.value("brightness_factor", spec.brightness_factor);
    spec.sharpness_factor = j.value("sharpness_factor", spec.sharpness_factor);
    spec.kernel_size = j.value("kernel_size", spec.kernel_size);
    spec.sigma = j.value("sigma", spec.sigma);
    spec.validate();
    return spec;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (!j.contains("world")) throw ConfigError("experiment config requires a world section");
    cfg.world = world_config_from_json(j.at("world"));
    cfg.samples = j.value("samples", cfg.samples);
    if (j.contains("split_ratios")) {
        const auto& arr = j.at("split_ratios");
        if (!arr.is_array() || arr.size() != 3)
            throw ConfigError("split_ratios must hold 3 values");
        for (std::size_t i = 0; i < 3; ++i) cfg.split_ratios[i] = arr[i].get<double>();
    }
    if (!j.contains("axes")) throw ConfigError("experiment config requires axes");
    for (const auto& ja : j.at("axes")) {
        ShiftAxis axis;
        const auto parse_component = [](const nlohmann::json& jc) {
            AxisComponent c;
            c.attribute = jc.at("attribute").get<std::string>();
            c.train_value = jc.at("train").get<std::string>();
            c.eval_value = jc.at("eval").get<std::string>();
            return c;
        };
        if (ja.is_array())
            for (const auto& jc : ja) axis.components.push_back(parse_component(jc));
        else
            axis.components.push_back(parse_component(ja));
        cfg.axes.push_back(std::move(axis));
    }
    for (const auto& jp : j.value("perturbations", nlohmann::json::array()))
        cfg.perturbations.push_back(perturbation_from_json(jp));
    if (!j.contains("classifiers")) throw ConfigError("experiment config requires classifiers");
    for (const auto& jc : j.at("classifiers"))
        cfg.classifiers.push_back(classifier_spec_from_json(jc));
    if (!j.contains("seeds")) throw ConfigError("experiment config requires seeds");
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("metric")) cfg.metric = parse_metric_kind(j.at("metric").get<std::string>());
    if (j.contains("matching")) {
        const auto& jm = j.at("matching");
        cfg.matching.match_prevalence = jm.value("match_prevalence", cfg.matching.match_prevalence);
        cfg.matching.match_age = jm.value("match_age", cfg.matching.match_age);
        cfg.matching.age_bin_width = jm.value("age_bin_width", cfg.matching.age_bin_width);
        cfg.matching.seed = jm.value("seed", cfg.matching.seed);
    }
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.validate();
    return cfg;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["world"] = world_config_to_json(cfg.world);
    j["samples"] = cfg.samples;
    j["split_ratios"] = cfg.split_ratios;
    j["axes"] = nlohmann::json::array();
    for (const ShiftAxis& axis : cfg.axes) {
        nlohmann::json ja = nlohmann::json::array();
        for (const AxisComponent& c : axis.components)
            ja.push_back({{"attribute", c.attribute}, {"train", c.train_value},
                          {"eval", c.eval_value}});
        j["axes"].push_back(std::move(ja));
    }
    j["perturbations"] = nlohmann::json::array();
    for (const PerturbationSpec& p : cfg.perturbations)
        j["perturbations"].push_back(perturbation_to_json(p));
    j["classifiers"] = nlohmann::json::array();
    for (const ClassifierSpec& c : cfg.classifiers)
        j["classifiers"].push_back(classifier_spec_to_json(c));
    j["seeds"] = cfg.seeds;
    j["metric"] = metric_kind_name(cfg.metric);
    j["matching"] = {{"match_prevalence", cfg.matching.match_prevalence},
                     {"match_age", cfg.matching.match_age},
                     {"age_bin_width", cfg.matching.age_bin_width},
                     {"seed", cfg.matching.seed}};
    j["out_dir"] = cfg.out_dir;
    return j;
}

std::string config_digest(const ExperimentConfig& cfg) {
    // out_dir is output plumbing, not experimental identity
    nlohmann::json j = experiment_config_to_json(cfg);
    j.erase("out_dir");
    return sha256_hex(j.dump());
}

RunReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const SampledWorld world = sample_world(cfg.world, cfg.samples);
    const RecordManifest split = split_by_patient(world.manifest, cfg.split_ratios,
                                                  derive_seed(cfg.world.seed, 0x73706c74ULL));

    std::map<std::string, int> labels;
    for (const ImageRecord& rec : split.records) labels[rec.image_id] = rec.label;

    RunReport report;
    report.config_digest = config_digest(cfg);
    report.metric = cfg.metric;
    report.environment["version"] = std::string(kVersion);
    report.environment["metric_std_convention"] = "population";
    report.environment["pearson_p"] = "two-sided Student-t via regularized incomplete beta";
    report.environment["kendall_p"] = "normal approximation with tie-adjusted variance";
    report.environment["agreement_pooling"] = "pooled across domains plus per-domain rows";
    {
        std::string m = cfg.matching.match_prevalence ? "prevalence" : "none";
        if (cfg.matching.match_age)
            m += ",age_bins=" + fmt6(cfg.matching.age_bin_width);
        m += ",without_replacement";
        report.environment["matching"] = m;
    }

    for (const ShiftAxis& axis : cfg.axes) {
        const std::string domain = axis.name();
        std::map<std::string, std::string> train_filter, eval_filter;
        std::vector<std::pair<std::string, std::string>> interventions;
        for (const AxisComponent& c : axis.components) {
            train_filter[c.attribute] = c.train_value;
            eval_filter[c.attribute] = c.eval_value;
            if (c.train_value != c.eval_value)
                interventions.emplace_back(c.attribute, c.eval_value);
        }

        const std::vector<ImageRecord> train_records =
            filter_subgroup(split, train_filter, Split::Train);
        const std::vector<ImageRecord> val_records =
            filter_subgroup(split, train_filter, Split::Val);
        const std::vector<ImageRecord> iid_records =
            filter_subgroup(split, train_filter, Split::Test);
        const std::vector<ImageRecord> ood_pool =
            filter_subgroup(split, eval_filter, Split::Test);
        if (train_records.empty() || val_records.empty())
            throw DataError("axis '" + domain + "': empty train or val subgroup");
        if (iid_records.empty()) throw DataError("axis '" + domain + "': empty IID test subgroup");
        if (ood_pool.empty()) throw DataError("axis '" + domain + "': empty OOD test pool");

        const std::vector<ImageRecord> ood_records = with_run_coordinates(
            "axis '" + domain + "' matching",
            [&] { return match_test_set(ood_pool, iid_records, cfg.matching); });

        ImageStore iid_images, ood_images, cf_images;
        for (const ImageRecord& rec : iid_records) {
            iid_images.emplace(rec.image_id, world.images.at(rec.image_id));
            const CounterfactualPair pair = counterfactual_oracle(
                rec, world.noise.at(rec.image_id), interventions, cfg.world);
            cf_images.emplace(rec.image_id, pair.twin);
        }
        for (const ImageRecord& rec : ood_records)
            ood_images.emplace(rec.image_id, world.images.at(rec.image_id));

        std::vector<std::pair<std::string, ImageStore>> stress_stores;
        for (const PerturbationSpec& p : cfg.perturbations) {
            ImageStore store;
            for (const auto& [id, img] : iid_images)
                store.emplace(id, apply_perturbation(img, p));
            stress_stores.emplace_back(std::string(p.tag()), std::move(store));
        }

        for (const ClassifierSpec& base_spec : cfg.classifiers) {
            for (const std::uint64_t seed : cfg.seeds) {
                ClassifierSpec spec = base_spec;
                spec.seed = seed;
                spec.class_count = split.class_count;
                const std::string coords = "axis '" + domain + "', classifier " +
                                           std::string(classifier_kind_name(spec.kind)) +
                                           ", seed " + std::to_string(seed);

                const TrainedModel model = with_run_coordinates(coords, [&] {
                    return train_classifier(train_records, val_records, world.images, spec);
                });

                ScoreTable table = predict_scores(model, iid_images, kIidCondition);
                for (const auto& [tag, store] : stress_stores) {
                    ScoreTable t = predict_scores(model, store, tag);
                    std::move(t.rows.begin(), t.rows.end(), std::back_inserter(table.rows));
                }
                ScoreTable cf = predict_scores(model, cf_images, kCfCondition);
                std::move(cf.rows.begin(), cf.rows.end(), std::back_inserter(table.rows));
                ScoreTable ood = predict_scores(model, ood_images, kOodCondition);
                std::move(ood.rows.begin(), ood.rows.end(), std::back_inserter(table.rows));

                std::vector<ShiftResult> shifts = with_run_coordinates(
                    coords, [&] { return shift_deltas(table, labels, cfg.metric, domain); });
                std::move(shifts.begin(), shifts.end(), std::back_inserter(report.shifts));
            }
        }
    }

    std::sort(report.shifts.begin(), report.shifts.end(),
              [](const ShiftResult& a, const ShiftResult& b) {
                  if (a.domain != b.domain) return a.domain < b.domain;
                  if (a.model_id != b.model_id) return a.model_id < b.model_id;
                  if (a.seed != b.seed) return a.seed < b.seed;
                  return condition_less(a.condition, b.condition);
              });
    report.agreement = agreement_from_shifts(report.shifts);
    return report;
}

std::vector<AgreementRow> agreement_from_shifts(const std::vector<ShiftResult>& shifts) {
    std::vector<std::string> methods;
    std::set<std::string> domains;
    std::vector<ShiftResult> ood;
    std::map<std::string, std::vector<ShiftResult>> stress_by_method;
    for (const ShiftResult& s : shifts) {
        domains.insert(s.domain);
        if (s.condition == kOodCondition) {
            ood.push_back(s);
        } else if (s.condition != kIidCondition) {
            if (stress_by_method.find(s.condition) == stress_by_method.end())
                methods.push_back(s.condition);
            stress_by_method[s.condition].push_back(s);
        }
    }
    std::sort(methods.begin(), methods.end(),
              [](const std::string& a, const std::string& b) { return condition_less(a, b); });

    const auto subset_for = [](const std::vector<ShiftResult>& all, const std::string& domain) {
        std::vector<ShiftResult> out;
        for (const ShiftResult& s : all)
            if (s.domain == domain) out.push_back(s);
        return out;
    };

    std::vector<AgreementRow> rows;
    for (const std::string& method : methods) {
        const std::vector<ShiftResult>& stress = stress_by_method.at(method);
        rows.push_back({method, "pooled", agreement_stats(stress, ood)});
        for (const std::string& domain : domains)
            rows.push_back(
                {method, domain, agreement_stats(subset_for(stress, domain), subset_for(ood, domain))});
    }
    return rows;
}

nlohmann::json report_to_json(const RunReport& report) {
    nlohmann::json j;
    j["config_digest"] = report.config_digest;
    j["metric"] = metric_kind_name(report.metric);
    j["environment"] = report.environment;
    j["shift_results"] = nlohmann::json::array();
    for (const ShiftResult& s : report.shifts)
        j["shift_results"].push_back({{"model_id", s.model_id},
                                      {"seed", s.seed},
                                      {"domain", s.domain},
                                      {"condition", s.condition},
                                      {"metric", metric_kind_name(s.metric)},
                                      {"value", s.value},
                                      {"delta_vs_iid", s.delta_vs_iid}});
    j["agreement"] = nlohmann::json::array();
    for (const AgreementRow& row : report.agreement)
        j["agreement"].push_back({{"method", row.method},
                                  {"domain", row.domain},
                                  {"n", row.stats.n},
                                  {"mae_mean", row.stats.mae.mean},
                                  {"mae_std", row.stats.mae.stddev},
                                  {"pearson_r", optional_json(row.stats.pearson_r)},
                                  {"pearson_p", optional_json(row.stats.pearson_p)},
                                  {"kendall_tau", optional_json(row.stats.kendall_tau)},
                                  {"kendall_p", optional_json(row.stats.kendall_p)}});
    return j;
}

RunReport report_from_json(const nlohmann::json& j) {
    RunReport report;
    report.config_digest = j.at("config_digest").get<std::string>();
    report.metric = parse_metric_kind(j.at("metric").get<std::string>());
    if (j.contains("environment"))
        report.environment = j.at("environment").get<std::map<std::string, std::string>>();
    for (const auto& js : j.at("shift_results")) {
        ShiftResult s;
        s.model_id = js.at("model_id").get<std::string>();
        s.seed = js.at("seed").get<std::uint64_t>();
        s.domain = js.at("domain").get<std::string>();
        s.condition = js.at("condition").get<std::string>();
        s.metric = parse_metric_kind(js.at("metric").get<std::string>());
        s.value = js.at("value").get<double>();
        s.delta_vs_iid = js.at("delta_vs_iid").get<double>();
        report.shifts.push_back(std::move(s));
    }
    for (const auto& jr : j.at("agreement")) {
        AgreementRow row;
        row.method = jr.at("method").get<std::string>();
        row.domain = jr.at("domain").get<std::string>();
        row.stats.n = jr.at("n").get<int>();
        row.stats.mae.mean = jr.at("mae_mean").get<double>();
        row.stats.mae.stddev = jr.at("mae_std").get<double>();
        row.stats.pearson_r = optional_from_json(jr, "pearson_r");
        row.stats.pearson_p = optional_from_json(jr, "pearson_p");
        row.stats.kendall_tau = optional_from_json(jr, "kendall_tau");
        row.stats.kendall_p = optional_from_json(jr, "kendall_p");
        report.agreement.push_back(std::move(row));
    }
    return report;
}

std::string emit_report_json(const RunReport& report) {
    return report_to_json(report).dump(2) + "\n";
}

std::map<std::string, std::string> emit_report_csv(const RunReport& report) {
    std::map<std::string, std::string> files;

    std::string shifts = "model_id,seed,domain,condition,metric,value,delta_vs_iid\n";
    for (const ShiftResult& s : report.shifts) {
        shifts += csv_field_join({s.model_id, std::to_string(s.seed), s.domain, s.condition,
                                  std::string(metric_kind_name(s.metric)), fmt17(s.value),
                                  fmt17(s.delta_vs_iid)});
        shifts += '\n';
    }
    files["shift_results.csv"] = std::move(shifts);

    std::string agree =
        "method,domain,n,mae_mean,mae_std,pearson_r,pearson_p,kendall_tau,kendall_p\n";
    const auto opt17 = [](const std::optional<double>& v) {
        return v.has_value() ? fmt17(*v) : std::string();
    };
    for (const AgreementRow& row : report.agreement) {
        agree += csv_field_join({row.method, row.domain, std::to_string(row.stats.n),
                                 fmt17(row.stats.mae.mean), fmt17(row.stats.mae.stddev),
                                 opt17(row.stats.pearson_r), opt17(row.stats.pearson_p),
                                 opt17(row.stats.kendall_tau), opt17(row.stats.kendall_p)});
        agree += '\n';
    }
    files["agreement_stats.csv"] = std::move(agree);

    // methods x domains grid of MAE mean+-std, pooled column last
    std::vector<std::string> domains;
    std::vector<std::string> methods;
    for (const AgreementRow& row : report.agreement) {
        if (row.domain != "pooled" &&
            std::find(domains.begin(), domains.end(), row.domain) == domains.end())
            domains.push_back(row.domain);
        if (std::find(methods.begin(), methods.end(), row.method) == methods.end())
            methods.push_back(row.method);
    }
    std::sort(domains.begin(), domains.end());
    std::string matrix = "method";
    for (const std::string& d : domains) matrix += "," + csv_field(d);
    matrix += ",pooled\n";
    const auto cell = [&](const std::string& method, const std::string& domain) {
        for (const AgreementRow& row : report.agreement)
            if (row.method == method && row.domain == domain)
                return fmt17(row.stats.mae.mean) + "+-" + fmt17(row.stats.mae.stddev);
        return std::string();
    };
    for (const std::string& m : methods) {
        matrix += csv_field(m);
        for (const std::string& d : domains) matrix += "," + csv_field(cell(m, d));
        matrix += "," + csv_field(cell(m, "pooled"));
        matrix += '\n';
    }
    files["agreement_matrix.csv"] = std::move(matrix);
    return files;
}

std::string emit_bar_chart(const RunReport& report, std::string_view domain) {
    struct Bar {
        std::string condition;
        double mean = 0.0, stddev = 0.0;
    };
    std::map<std::string, std::vector<double>> deltas;
    for (const ShiftResult& s : report.shifts)
        if (s.domain == domain) deltas[s.condition].push_back(s.delta_vs_iid);
    if (deltas.empty())
        throw DataError("report contains no domain '" + std::string(domain) + "'");

    std::vector<Bar> bars;
    for (const auto& [condition, values] : deltas) {
        Bar bar;
        bar.condition = condition;
        for (const double v : values) bar.mean += v;
        bar.mean /= static_cast<double>(values.size());
        double ss = 0.0;
        for (const double v : values) ss += (v - bar.mean) * (v - bar.mean);
        bar.stddev = std::sqrt(ss / static_cast<double>(values.size()));
        bars.push_back(std::move(bar));
    }
    std::sort(bars.begin(), bars.end(),
              [](const Bar& a, const Bar& b) { return condition_less(a.condition, b.condition); });

    constexpr double width = 800.0, height = 400.0;
    constexpr double left = 70.0, right = 20.0, top = 40.0, bottom = 50.0;
    const double pw = width - left - right, ph = height - top - bottom;

    double lo = 0.0, hi = 0.0;
    for (const Bar& b : bars) {
        lo = std::min(lo, b.mean - b.stddev);
        hi = std::max(hi, b.mean + b.stddev);
    }
    if (hi - lo < 1e-12) {
        lo -= 0.05;
        hi += 0.05;
    }
    const double pad = 0.08 * (hi - lo);
    lo -= pad;
    hi += pad;
    const auto sy = [&](double v) { return top + (hi - v) / (hi - lo) * ph; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"400\" "
           "viewBox=\"0 0 800 400\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"400\" fill=\"white\"/>\n";
    svg += "<text x=\"" + fmt6(left) + "\" y=\"24\" font-family=\"sans-serif\" "
           "font-size=\"15\">Mean delta " +
           xml_escape(metric_kind_name(report.metric)) + " vs IID, domain " +
           xml_escape(domain) + " (whiskers: +-1 std across runs)</text>\n";

    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        const double y = sy(v);
        svg += "<line x1=\"" + fmt6(left) + "\" y1=\"" + fmt6(y) + "\" x2=\"" +
               fmt6(width - right) + "\" y2=\"" + fmt6(y) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + fmt6(left - 6.0) + "\" y=\"" + fmt6(y + 4.0) +
               "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
               fmt6(v) + "</text>\n";
    }

    const double slot = pw / static_cast<double>(bars.size());
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const Bar& b = bars[i];
        const double cx = left + (static_cast<double>(i) + 0.5) * slot;
        const double bw = 0.6 * slot;
        const double y0 = sy(0.0), ym = sy(b.mean);
        svg += "<rect x=\"" + fmt6(cx - bw / 2.0) + "\" y=\"" + fmt6(std::min(y0, ym)) +
               "\" width=\"" + fmt6(bw) + "\" height=\"" + fmt6(std::abs(ym - y0)) +
               "\" fill=\"#4878a8\"/>\n";
        const double yl = sy(b.mean - b.stddev), yh = sy(b.mean + b.stddev);
        svg += "<line x1=\"" + fmt6(cx) + "\" y1=\"" + fmt6(yh) + "\" x2=\"" + fmt6(cx) +
               "\" y2=\"" + fmt6(yl) + "\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n";
        for (const double yc : {yl, yh})
            svg += "<line x1=\"" + fmt6(cx - 6.0) + "\" y1=\"" + fmt6(yc) + "\" x2=\"" +
                   fmt6(cx + 6.0) + "\" y2=\"" + fmt6(yc) +
                   "\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n";
        svg += "<text x=\"" + fmt6(cx) + "\" y=\"" + fmt6(height - bottom + 18.0) +
               "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" +
               xml_escape(b.condition) + "</text>\n";
    }

    svg += "<line x1=\"" + fmt6(left) + "\" y1=\"" + fmt6(sy(0.0)) + "\" x2=\"" +
           fmt6(width - right) + "\" y2=\"" + fmt6(sy(0.0)) +
           "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + fmt6(left) + "\" y1=\"" + fmt6(top) + "\" x2=\"" + fmt6(left) +
           "\" y2=\"" + fmt6(height - bottom) +
           "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    svg += "</svg>\n";
    return svg;
}

}  // namespace cfstress
