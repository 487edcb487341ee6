#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfstress/classify.hpp"
#include "cfstress/csv.hpp"
#include "cfstress/error.hpp"
#include "cfstress/harness.hpp"
#include "cfstress/imaging.hpp"
#include "cfstress/io.hpp"
#include "cfstress/manifest.hpp"
#include "cfstress/metrics.hpp"
#include "cfstress/rng.hpp"
#include "cfstress/scm_world.hpp"
#include "cfstress/version.hpp"

namespace fs = std::filesystem;
using namespace cfstress;

namespace {

nlohmann::json load_config_json(const std::string& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse '" + path + "': " + e.what());
    }
}

nlohmann::json load_data_json(const std::string& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse '" + path + "': " + e.what());
    }
}

ImageStore load_image_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");
    ImageStore store;
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".pgm")
            paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const fs::path& p : paths) store.emplace(p.stem().string(), decode_pgm(read_file(p.string())));
    if (store.empty()) throw DataError("no .pgm images found in '" + dir + "'");
    return store;
}

void write_image_dir(const std::string& dir, const ImageStore& store) {
    fs::create_directories(dir);
    for (const auto& [id, img] : store)
        write_file((fs::path(dir) / (id + ".pgm")).string(), encode_pgm(img));
}

void ensure_out_dir(const std::string& dir) { fs::create_directories(dir); }

std::string sanitize_name(std::string_view name) {
    std::string out;
    for (const char c : name)
        out += (std::isalnum(static_cast<unsigned char>(c)) != 0) ? c : '_';
    return out;
}

NoiseStore load_noise_store(const std::string& path) {
    const nlohmann::json j = load_data_json(path);
    NoiseStore store;
    for (const auto& [id, jn] : j.items()) store.emplace(id, noise_from_json(jn));
    return store;
}

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::string format = "json";
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
    auto* opt = cmd->add_option("--config", flags.config, "configuration file (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--seed", flags.seed, "seed override");
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_option("--format", flags.format, "output format")
        ->check(CLI::IsMember({"json", "csv"}));
}

// ---- gen ----------------------------------------------------------------

void cmd_gen(const CommonFlags& flags, int samples) {
    WorldConfig world = world_config_from_json(load_config_json(flags.config));
    if (flags.seed.has_value()) world.seed = *flags.seed;
    const SampledWorld sampled = sample_world(world, samples);

    ensure_out_dir(flags.out);
    write_file((fs::path(flags.out) / "manifest.csv").string(),
               write_manifest_csv(sampled.manifest));
    write_image_dir((fs::path(flags.out) / "images").string(), sampled.images);
    nlohmann::json jn = nlohmann::json::object();
    for (const auto& [id, u] : sampled.noise) jn[id] = noise_to_json(u);
    write_file((fs::path(flags.out) / "noise.json").string(), jn.dump(2) + "\n");
    write_file((fs::path(flags.out) / "world.json").string(),
               world_config_to_json(world).dump(2) + "\n");
    std::cout << "generated " << sampled.manifest.records.size() << " records under "
              << flags.out << "\n";
}

// ---- split --------------------------------------------------------------

std::array<double, 3> parse_ratios(const std::string& text) {
    std::array<double, 3> ratios{};
    double a = 0, b = 0, c = 0;
    if (std::sscanf(text.c_str(), "%lf,%lf,%lf", &a, &b, &c) != 3)
        throw ConfigError("--ratios expects three comma-separated numbers");
    ratios = {a, b, c};
    return ratios;
}

void cmd_split(const CommonFlags& flags, const std::string& manifest_path,
               const std::string& ratios_text) {
    const RecordManifest manifest = parse_manifest(read_file(manifest_path));
    const RecordManifest split =
        split_by_patient(manifest, parse_ratios(ratios_text), flags.seed.value_or(0));
    ensure_out_dir(flags.out);
    write_file((fs::path(flags.out) / "manifest.csv").string(), write_manifest_csv(split));
    int counts[3] = {0, 0, 0};
    for (const ImageRecord& rec : split.records)
        if (rec.split != Split::Unassigned) ++counts[static_cast<int>(rec.split)];
    std::cout << "split " << split.records.size() << " records: train " << counts[0]
              << ", val " << counts[1] << ", test " << counts[2] << "\n";
}

// ---- perturb ------------------------------------------------------------

void cmd_perturb(const CommonFlags& flags, const std::string& images_dir,
                 const std::string& kind_tag) {
    PerturbationSpec spec;
    if (!flags.config.empty()) spec = perturbation_from_json(load_config_json(flags.config));
    if (!kind_tag.empty()) spec.kind = parse_perturbation_kind(kind_tag);
    if (flags.config.empty() && kind_tag.empty())
        throw ConfigError("perturb requires --config or --kind");
    spec.validate();

    const ImageStore input = load_image_dir(images_dir);
    ImageStore output;
    for (const auto& [id, img] : input) output.emplace(id, apply_perturbation(img, spec));
    write_image_dir(flags.out, output);
    std::cout << "applied " << spec.tag() << " to " << output.size() << " images\n";
}

// ---- counterfactual -----------------------------------------------------

std::vector<std::pair<std::string, std::string>> parse_interventions(
    const std::vector<std::string>& raw) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const std::string& item : raw) {
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
            throw ConfigError("--intervene expects attribute=value, got '" + item + "'");
        out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
    return out;
}

std::string pairs_csv_text(const std::vector<CounterfactualPair>& pairs) {
    std::string csv = "factual_id,twin_source,attribute,value\n";
    for (const CounterfactualPair& p : pairs) {
        csv += csv_field_join({p.factual_record.image_id, p.factual_record.image_id + "_twin",
                               p.intervention_attribute, p.intervention_value});
        csv += '\n';
    }
    return csv;
}

void cmd_counterfactual(const CommonFlags& flags, const std::string& mode,
                        const std::string& images_dir, const std::string& manifest_path,
                        const std::string& noise_path, const std::string& from,
                        const std::string& to, const std::vector<std::string>& intervene,
                        const std::string& pairs_path, const std::string& twins_dir) {
    ensure_out_dir(flags.out);
    if (mode == "analytic") {
        const WorldConfig world = world_config_from_json(load_config_json(flags.config));
        if (from.empty() || to.empty())
            throw ConfigError("analytic mode requires --from and --to scanners");
        const ImageStore input = load_image_dir(images_dir);
        ImageStore twins;
        std::string csv = "factual_id,twin_source,attribute,value\n";
        for (const auto& [id, img] : input) {
            twins.emplace(id + "_twin", counterfactual_scanner(img, from, to, world));
            csv += csv_field_join({id, id + "_twin", "scanner", to});
            csv += '\n';
        }
        write_image_dir((fs::path(flags.out) / "twins").string(), twins);
        write_file((fs::path(flags.out) / "pairs.csv").string(), csv);
        std::cout << "wrote " << twins.size() << " analytic scanner twins (" << from << " -> "
                  << to << ")\n";
        return;
    }
    if (mode == "oracle") {
        const WorldConfig world = world_config_from_json(load_config_json(flags.config));
        const RecordManifest manifest = parse_manifest(read_file(manifest_path));
        const NoiseStore noise = load_noise_store(noise_path);
        const auto interventions = parse_interventions(intervene);
        if (interventions.empty()) throw ConfigError("oracle mode requires --intervene");
        std::vector<CounterfactualPair> pairs;
        ImageStore twins;
        for (const ImageRecord& rec : manifest.records) {
            const auto it = noise.find(rec.image_id);
            if (it == noise.end())
                throw DataError("no stored noise for record '" + rec.image_id + "'");
            CounterfactualPair pair = counterfactual_oracle(rec, it->second, interventions, world);
            twins.emplace(rec.image_id + "_twin", pair.twin);
            pairs.push_back(std::move(pair));
        }
        write_image_dir((fs::path(flags.out) / "twins").string(), twins);
        write_file((fs::path(flags.out) / "pairs.csv").string(), pairs_csv_text(pairs));
        std::cout << "wrote " << pairs.size() << " oracle twins\n";
        return;
    }
    if (mode == "ingest") {
        const RecordManifest manifest = parse_manifest(read_file(manifest_path));
        const ImageStore factual = load_image_dir(images_dir);
        const ImageStore twins = load_image_dir(twins_dir);
        const std::vector<CounterfactualPair> pairs =
            ingest_counterfactual_pairs(read_file(pairs_path), manifest, factual, twins);
        std::string csv = "factual_id,twin_source,attribute,value,provenance\n";
        for (const CounterfactualPair& p : pairs) {
            csv += csv_field_join({p.factual_record.image_id, "", p.intervention_attribute,
                                   p.intervention_value, std::string(provenance_name(p.provenance))});
            csv += '\n';
        }
        write_file((fs::path(flags.out) / "pairs_validated.csv").string(), csv);
        std::cout << "validated " << pairs.size() << " external pairs\n";
        return;
    }
    throw ConfigError("unknown counterfactual mode '" + mode +
                      "' (expected analytic, oracle or ingest)");
}

// ---- train --------------------------------------------------------------

void cmd_train(const CommonFlags& flags, const std::string& manifest_path,
               const std::string& images_dir) {
    ClassifierSpec spec = classifier_spec_from_json(load_config_json(flags.config));
    if (flags.seed.has_value()) spec.seed = *flags.seed;
    const RecordManifest manifest = parse_manifest(read_file(manifest_path), spec.class_count);
    const ImageStore images = load_image_dir(images_dir);

    std::vector<ImageRecord> train, val;
    for (const ImageRecord& rec : manifest.records) {
        if (rec.split == Split::Train) train.push_back(rec);
        if (rec.split == Split::Val) val.push_back(rec);
    }
    const TrainedModel model = train_classifier(train, val, images, spec);
    ensure_out_dir(flags.out);
    save_model(model, (fs::path(flags.out) / "model.bin").string());
    for (const std::string& w : model.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "trained " << classifier_kind_name(spec.kind) << " (model "
              << model_id(spec) << "), stopped at epoch " << model.stopped_epoch
              << ", best epoch " << model.best_epoch << "\n";
}

// ---- score --------------------------------------------------------------

void cmd_score(const CommonFlags& flags, const std::string& model_path,
               const std::string& images_dir, const std::string& condition,
               const std::string& import_path) {
    ensure_out_dir(flags.out);
    ScoreTable table;
    if (!import_path.empty()) {
        table = import_scores(read_file(import_path));
    } else {
        if (model_path.empty() || images_dir.empty())
            throw ConfigError("score requires --model and --images (or --import)");
        const TrainedModel model = load_model(model_path);
        table = predict_scores(model, load_image_dir(images_dir), condition);
    }
    write_file((fs::path(flags.out) / "scores.csv").string(), export_scores(table));
    std::cout << "wrote " << table.rows.size() << " score rows\n";
}

// ---- evaluate -----------------------------------------------------------

void cmd_evaluate(const CommonFlags& flags, const std::vector<std::string>& score_paths,
                  const std::string& manifest_path, const std::string& metric_name,
                  const std::string& domain) {
    if (score_paths.empty()) throw ConfigError("evaluate requires at least one --scores file");
    ScoreTable table;
    for (const std::string& path : score_paths) {
        ScoreTable t = import_scores(read_file(path));
        std::move(t.rows.begin(), t.rows.end(), std::back_inserter(table.rows));
    }
    const RecordManifest manifest = parse_manifest(read_file(manifest_path));
    std::map<std::string, int> labels;
    for (const ImageRecord& rec : manifest.records) labels[rec.image_id] = rec.label;

    const MetricKind kind = parse_metric_kind(metric_name);
    const std::vector<ShiftResult> shifts = shift_deltas(table, labels, kind, domain);
    // agreement needs OOD rows to pair against; deltas alone are still useful
    const bool has_ood = std::any_of(shifts.begin(), shifts.end(), [](const ShiftResult& s) {
        return s.condition == kOodCondition;
    });
    const std::vector<AgreementRow> agreement =
        has_ood ? agreement_from_shifts(shifts) : std::vector<AgreementRow>{};

    RunReport report;
    report.config_digest = sha256_hex("evaluate:" + std::string(metric_name));
    report.metric = kind;
    report.shifts = shifts;
    report.agreement = agreement;
    report.environment["version"] = std::string(kVersion);
    report.environment["source"] = "evaluate subcommand";

    ensure_out_dir(flags.out);
    if (flags.format == "json") {
        write_file((fs::path(flags.out) / "evaluation.json").string(), emit_report_json(report));
    } else {
        for (const auto& [name, text] : emit_report_csv(report))
            write_file((fs::path(flags.out) / name).string(), text);
    }
    std::cout << "evaluated " << shifts.size() << " shift results, " << agreement.size()
              << " agreement rows\n";
}

// ---- report / plot ------------------------------------------------------

void cmd_report(const CommonFlags& flags, const std::string& report_path) {
    const RunReport report = report_from_json(load_data_json(report_path));
    ensure_out_dir(flags.out);
    if (flags.format == "json") {
        write_file((fs::path(flags.out) / "report.json").string(), emit_report_json(report));
    } else {
        for (const auto& [name, text] : emit_report_csv(report))
            write_file((fs::path(flags.out) / name).string(), text);
    }
    std::cout << "emitted report (" << flags.format << ") to " << flags.out << "\n";
}

void cmd_plot(const CommonFlags& flags, const std::string& report_path,
              const std::string& domain) {
    const RunReport report = report_from_json(load_data_json(report_path));
    ensure_out_dir(flags.out);
    const std::string file = "chart_" + sanitize_name(domain) + ".svg";
    write_file((fs::path(flags.out) / file).string(), emit_bar_chart(report, domain));
    std::cout << "wrote " << file << "\n";
}

// ---- run ----------------------------------------------------------------

void cmd_run(const CommonFlags& flags, bool out_given) {
    ExperimentConfig cfg = experiment_config_from_json(load_config_json(flags.config));
    if (flags.seed.has_value()) {
        cfg.world.seed = *flags.seed;
        cfg.validate();
    }
    if (out_given) cfg.out_dir = flags.out;

    const RunReport report = run_experiment(cfg);
    ensure_out_dir(cfg.out_dir);
    write_file((fs::path(cfg.out_dir) / "report.json").string(), emit_report_json(report));
    for (const auto& [name, text] : emit_report_csv(report))
        write_file((fs::path(cfg.out_dir) / name).string(), text);
    std::set<std::string> domains;
    for (const ShiftResult& s : report.shifts) domains.insert(s.domain);
    for (const std::string& domain : domains)
        write_file((fs::path(cfg.out_dir) / ("chart_" + sanitize_name(domain) + ".svg")).string(),
                   emit_bar_chart(report, domain));
    std::cout << "run complete: " << report.shifts.size() << " shift results, config digest "
              << report.config_digest.substr(0, 12) << ", output in " << cfg.out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Counterfactual stress testing harness for image classifiers"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    // gen
    CommonFlags gen_flags;
    int gen_samples = 100;
    auto* gen = app.add_subcommand("gen", "sample a synthetic world to disk");
    add_common(gen, gen_flags, true);
    gen->add_option("--samples", gen_samples, "number of records")->check(CLI::PositiveNumber);

    // split
    CommonFlags split_flags;
    std::string split_manifest, split_ratios = "0.6,0.2,0.2";
    auto* split = app.add_subcommand("split", "assign patient-wise train/val/test splits");
    add_common(split, split_flags, false);
    split->add_option("--manifest", split_manifest, "manifest CSV")->required();
    split->add_option("--ratios", split_ratios, "train,val,test ratios");

    // perturb
    CommonFlags perturb_flags;
    std::string perturb_images, perturb_kind;
    auto* perturb = app.add_subcommand("perturb", "apply a classical perturbation to a directory");
    add_common(perturb, perturb_flags, false);
    perturb->add_option("--images", perturb_images, "input image directory")->required();
    perturb->add_option("--kind", perturb_kind, "perturbation tag (GC/CC/BC/SC/GB)");

    // counterfactual
    CommonFlags cf_flags;
    std::string cf_mode, cf_images, cf_manifest, cf_noise, cf_from, cf_to, cf_pairs, cf_twins;
    std::vector<std::string> cf_intervene;
    auto* cf = app.add_subcommand("counterfactual", "generate or ingest counterfactual twins");
    add_common(cf, cf_flags, false);
    cf->add_option("--mode", cf_mode, "analytic | oracle | ingest")->required();
    cf->add_option("--images", cf_images, "factual image directory");
    cf->add_option("--manifest", cf_manifest, "manifest CSV");
    cf->add_option("--noise", cf_noise, "stored exogenous noise JSON");
    cf->add_option("--from", cf_from, "factual scanner (analytic mode)");
    cf->add_option("--to", cf_to, "intervened scanner (analytic mode)");
    cf->add_option("--intervene", cf_intervene, "attribute=value (repeatable, oracle mode)");
    cf->add_option("--pairs", cf_pairs, "external pairs CSV (ingest mode)");
    cf->add_option("--twins", cf_twins, "twin image directory (ingest mode)");

    // train
    CommonFlags train_flags;
    std::string train_manifest, train_images;
    auto* train = app.add_subcommand("train", "train a classifier on the train/val splits");
    add_common(train, train_flags, true);
    train->add_option("--manifest", train_manifest, "manifest CSV with split column")->required();
    train->add_option("--images", train_images, "image directory")->required();

    // score
    CommonFlags score_flags;
    std::string score_model, score_images, score_condition = "IID", score_import;
    auto* score = app.add_subcommand("score", "predict scores or import an external score CSV");
    add_common(score, score_flags, false);
    score->add_option("--model", score_model, "trained model path");
    score->add_option("--images", score_images, "image directory");
    score->add_option("--condition", score_condition, "condition tag for predicted rows");
    score->add_option("--import", score_import, "external score CSV to validate");

    // evaluate
    CommonFlags eval_flags;
    std::vector<std::string> eval_scores;
    std::string eval_manifest, eval_metric = "AP", eval_domain = "default";
    auto* evaluate = app.add_subcommand("evaluate", "compute shift deltas and agreement stats");
    add_common(evaluate, eval_flags, false);
    evaluate->add_option("--scores", eval_scores, "score CSV (repeatable)")->required();
    evaluate->add_option("--manifest", eval_manifest, "manifest CSV with labels")->required();
    evaluate->add_option("--metric", eval_metric, "AP | AUC_macro_ovr");
    evaluate->add_option("--domain", eval_domain, "domain tag for the results");

    // report
    CommonFlags report_flags;
    std::string report_path;
    auto* report = app.add_subcommand("report", "re-emit a stored report as JSON or CSV");
    add_common(report, report_flags, false);
    report->add_option("--report", report_path, "report JSON path")->required();

    // plot
    CommonFlags plot_flags;
    std::string plot_report, plot_domain;
    auto* plot = app.add_subcommand("plot", "render the per-condition bar chart for a domain");
    add_common(plot, plot_flags, false);
    plot->add_option("--report", plot_report, "report JSON path")->required();
    plot->add_option("--domain", plot_domain, "domain tag")->required();

    // run
    CommonFlags run_flags;
    auto* run = app.add_subcommand("run", "full pipeline from an experiment config");
    add_common(run, run_flags, true);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) cmd_gen(gen_flags, gen_samples);
        if (split->parsed()) cmd_split(split_flags, split_manifest, split_ratios);
        if (perturb->parsed()) cmd_perturb(perturb_flags, perturb_images, perturb_kind);
        if (cf->parsed())
            cmd_counterfactual(cf_flags, cf_mode, cf_images, cf_manifest, cf_noise, cf_from,
                               cf_to, cf_intervene, cf_pairs, cf_twins);
        if (train->parsed()) cmd_train(train_flags, train_manifest, train_images);
        if (score->parsed())
            cmd_score(score_flags, score_model, score_images, score_condition, score_import);
        if (evaluate->parsed())
            cmd_evaluate(eval_flags, eval_scores, eval_manifest, eval_metric, eval_domain);
        if (report->parsed()) cmd_report(report_flags, report_path);
        if (plot->parsed()) cmd_plot(plot_flags, plot_report, plot_domain);
        if (run->parsed()) cmd_run(run_flags, run->count("--out") > 0);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
