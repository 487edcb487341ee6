#include "cfstress/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "cfstress/csv.hpp"
#include "cfstress/error.hpp"
#include "cfstress/rng.hpp"

namespace cfstress {

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    if (name.empty() || name == "unassigned") return Split::Unassigned;
    throw DataError("unknown split '" + std::string(name) + "'");
}

std::string_view split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
        case Split::Unassigned: return "unassigned";
    }
    return "unassigned";
}

const std::string* ImageRecord::attribute(std::string_view name) const {
    if (name == "scanner") return scanner.empty() ? nullptr : &scanner;
    if (name == "sex") return sex.empty() ? nullptr : &sex;
    for (const auto& [key, value] : extra) {
        if (key == name) return &value;
    }
    return nullptr;
}

bool AttributeSchema::declares(std::string_view attribute) const {
    return domains.find(std::string(attribute)) != domains.end();
}

bool AttributeSchema::allows(std::string_view attribute, std::string_view value) const {
    const auto it = domains.find(std::string(attribute));
    if (it == domains.end()) return false;
    return std::find(it->second.begin(), it->second.end(), value) != it->second.end();
}

namespace {

double parse_real(std::string_view text, const std::string& what) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw DataError("malformed " + what + " '" + std::string(text) + "'");
    }
    return value;
}

int parse_label(std::string_view text) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw DataError("non-integer label '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace

RecordManifest parse_manifest(std::string_view csv_text, int class_count) {
    const auto rows = parse_csv(csv_text);
    if (rows.empty()) throw DataError("manifest CSV has no header row");
    const auto& header = rows.front();

    std::map<std::string, std::size_t> columns;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!columns.emplace(header[i], i).second) {
            throw DataError("manifest CSV: duplicate column '" + header[i] + "'");
        }
    }
    for (const char* required : {"image_id", "patient_id", "source", "label"}) {
        if (!columns.count(required)) {
            throw DataError("manifest CSV: missing required column '" +
                            std::string(required) + "'");
        }
    }
    static const std::set<std::string> known = {"image_id", "patient_id", "source",
                                                "label",    "scanner",    "sex",
                                                "age",      "split"};
    std::vector<std::size_t> extra_cols;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!known.count(header[i])) extra_cols.push_back(i);
    }

    const auto cell = [&](const std::vector<std::string>& row, const char* name,
                          std::size_t row_no) -> std::string_view {
        const auto it = columns.find(name);
        if (it == columns.end()) return {};
        if (it->second >= row.size()) {
            throw DataError("manifest CSV: row " + std::to_string(row_no) +
                            " is missing column '" + std::string(name) + "'");
        }
        return row[it->second];
    };

    RecordManifest manifest;
    std::unordered_set<std::string> seen_ids;
    int max_label = -1;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && row[0].empty()) continue;  // trailing blank line
        if (row.size() != header.size()) {
            throw DataError("manifest CSV: row " + std::to_string(r) + " has " +
                            std::to_string(row.size()) + " fields, expected " +
                            std::to_string(header.size()));
        }
        ImageRecord rec;
        rec.image_id = cell(row, "image_id", r);
        rec.patient_id = cell(row, "patient_id", r);
        rec.source = cell(row, "source", r);
        if (rec.image_id.empty()) {
            throw DataError("manifest CSV: empty image_id in row " + std::to_string(r));
        }
        if (!seen_ids.insert(rec.image_id).second) {
            throw DataError("manifest CSV: duplicate image_id '" + rec.image_id + "'");
        }
        rec.label = parse_label(cell(row, "label", r));
        if (rec.label < 0) {
            throw DataError("manifest CSV: negative label for '" + rec.image_id + "'");
        }
        max_label = std::max(max_label, rec.label);
        rec.scanner = cell(row, "scanner", r);
        rec.sex = cell(row, "sex", r);
        const auto age_text = cell(row, "age", r);
        if (!age_text.empty()) {
            const double age = parse_real(age_text, "age");
            if (age < 0.0) {
                throw DataError("manifest CSV: negative age for '" + rec.image_id + "'");
            }
            rec.age = age;
        }
        rec.split = parse_split(cell(row, "split", r));
        for (const std::size_t col : extra_cols) {
            rec.extra.emplace_back(header[col], row[col]);
        }
        manifest.records.push_back(std::move(rec));
    }

    if (class_count > 0) {
        manifest.class_count = class_count;
        for (const auto& rec : manifest.records) {
            if (rec.label >= class_count) {
                throw DataError("manifest CSV: label " + std::to_string(rec.label) +
                                " for '" + rec.image_id + "' exceeds class count " +
                                std::to_string(class_count));
            }
        }
    } else {
        manifest.class_count = std::max(2, max_label + 1);
    }

    // categorical domains observed in the data
    auto& domains = manifest.attribute_schema.domains;
    const auto add_domain = [&](const std::string& name, const std::string& value) {
        if (value.empty()) return;
        auto& dom = domains[name];
        if (std::find(dom.begin(), dom.end(), value) == dom.end()) dom.push_back(value);
    };
    for (const auto& rec : manifest.records) {
        add_domain("scanner", rec.scanner);
        add_domain("sex", rec.sex);
        for (const auto& [key, value] : rec.extra) add_domain(key, value);
    }
    for (auto& [name, dom] : domains) std::sort(dom.begin(), dom.end());
    return manifest;
}

std::string write_manifest_csv(const RecordManifest& manifest) {
    bool any_scanner = false, any_sex = false, any_age = false;
    std::vector<std::string> extra_names;
    for (const auto& rec : manifest.records) {
        any_scanner |= !rec.scanner.empty();
        any_sex |= !rec.sex.empty();
        any_age |= rec.age.has_value();
        for (const auto& [key, _] : rec.extra) {
            if (std::find(extra_names.begin(), extra_names.end(), key) ==
                extra_names.end()) {
                extra_names.push_back(key);
            }
        }
    }
    std::string out = "image_id,patient_id,source,label";
    if (any_scanner) out += ",scanner";
    if (any_sex) out += ",sex";
    if (any_age) out += ",age";
    out += ",split";
    for (const auto& name : extra_names) out += "," + csv_field(name);
    out += "\n";

    char buf[64];
    for (const auto& rec : manifest.records) {
        out += csv_field(rec.image_id) + "," + csv_field(rec.patient_id) + "," +
               csv_field(rec.source) + "," + std::to_string(rec.label);
        if (any_scanner) out += "," + csv_field(rec.scanner);
        if (any_sex) out += "," + csv_field(rec.sex);
        if (any_age) {
            out += ",";
            if (rec.age) {
                std::snprintf(buf, sizeof(buf), "%.17g", *rec.age);
                out += buf;
            }
        }
        out += ",";
        out += split_name(rec.split);
        for (const auto& name : extra_names) {
            out += ",";
            if (const auto* v = rec.attribute(name)) out += csv_field(*v);
        }
        out += "\n";
    }
    return out;
}

RecordManifest split_by_patient(const RecordManifest& manifest,
                                const std::array<double, 3>& ratios,
                                std::uint64_t seed) {
    if (manifest.records.empty()) throw DataError("split_by_patient: empty manifest");
    double sum = 0.0;
    for (const double r : ratios) {
        if (r < 0.0) throw ConfigError("split_by_patient: negative ratio");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("split_by_patient: ratios must sum to 1");
    }

    std::vector<std::string> patients;
    std::unordered_set<std::string> seen;
    for (const auto& rec : manifest.records) {
        if (seen.insert(rec.patient_id).second) patients.push_back(rec.patient_id);
    }
    std::sort(patients.begin(), patients.end(),
              [&](const std::string& a, const std::string& b) {
                  const auto ha = keyed_hash64(seed, a);
                  const auto hb = keyed_hash64(seed, b);
                  if (ha != hb) return ha < hb;
                  return a < b;
              });

    // cumulative cut by patient count; leftover goes to the splits with the
    // largest fractional targets, earliest index first
    const std::size_t p = patients.size();
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double target = ratios[static_cast<std::size_t>(i)] * static_cast<double>(p);
        counts[static_cast<std::size_t>(i)] =
            static_cast<std::size_t>(std::floor(target + 1e-9));
        frac[static_cast<std::size_t>(i)] =
            target - static_cast<double>(counts[static_cast<std::size_t>(i)]);
        assigned += counts[static_cast<std::size_t>(i)];
    }
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (frac[static_cast<std::size_t>(a)] != frac[static_cast<std::size_t>(b)])
            return frac[static_cast<std::size_t>(a)] > frac[static_cast<std::size_t>(b)];
        return a < b;
    });
    for (int k = 0; assigned < p; ++k) {
        ++counts[static_cast<std::size_t>(order[static_cast<std::size_t>(k % 3)])];
        ++assigned;
    }

    std::unordered_map<std::string, Split> assignment;
    std::size_t cursor = 0;
    const std::array<Split, 3> split_of{Split::Train, Split::Val, Split::Test};
    for (int i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < counts[static_cast<std::size_t>(i)]; ++k) {
            assignment[patients[cursor++]] = split_of[static_cast<std::size_t>(i)];
        }
    }

    RecordManifest out = manifest;
    for (auto& rec : out.records) rec.split = assignment.at(rec.patient_id);
    return out;
}

std::vector<ImageRecord> filter_subgroup(
    const RecordManifest& manifest,
    const std::map<std::string, std::string>& predicate, Split split) {
    for (const auto& [name, _] : predicate) {
        if (!manifest.attribute_schema.declares(name)) {
            throw DataError("filter_subgroup: unknown attribute '" + name + "'");
        }
    }
    std::vector<ImageRecord> out;
    for (const auto& rec : manifest.records) {
        if (rec.split != split) continue;
        bool match = true;
        for (const auto& [name, value] : predicate) {
            const auto* v = rec.attribute(name);
            if (v == nullptr || *v != value) {
                match = false;
                break;
            }
        }
        if (match) out.push_back(rec);
    }
    return out;
}

void MatchSpec::validate() const {
    if (!(age_bin_width > 0.0)) throw ConfigError("MatchSpec: age_bin_width must be > 0");
}

namespace {

// Hamilton apportionment of `total` by `weights`, each part capped; every
// part lands within one unit of its exact share.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights,
                                   const std::vector<std::size_t>& caps) {
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::size_t> out(weights.size(), 0);
    if (wsum <= 0.0 || total == 0) return out;
    std::vector<double> frac(weights.size(), 0.0);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double target = static_cast<double>(total) * weights[i] / wsum;
        out[i] = std::min(caps[i], static_cast<std::size_t>(std::floor(target + 1e-9)));
        frac[i] = target - static_cast<double>(out[i]);
        assigned += out[i];
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (frac[a] != frac[b]) return frac[a] > frac[b];
        return a < b;
    });
    std::size_t k = 0;
    while (assigned < total) {
        const std::size_t i = order[k % order.size()];
        ++k;
        if (out[i] < caps[i]) {
            ++out[i];
            ++assigned;
        }
        if (k > order.size() * (total + 1)) break;  // all capped
    }
    return out;
}

std::int64_t age_bin(double age, double width) {
    return static_cast<std::int64_t>(std::floor(age / width));
}

}  // namespace

std::vector<ImageRecord> match_test_set(const std::vector<ImageRecord>& source,
                                        const std::vector<ImageRecord>& reference,
                                        const MatchSpec& spec) {
    spec.validate();
    if (source.empty() || reference.empty()) {
        throw DataError("match_test_set: source and reference must be nonempty");
    }
    if (spec.match_age) {
        for (const auto* list : {&source, &reference}) {
            for (const auto& rec : *list) {
                if (!rec.age) {
                    throw DataError("match_test_set: record '" + rec.image_id +
                                    "' lacks age required for age matching");
                }
            }
        }
    }
    if (!spec.match_prevalence && !spec.match_age) return source;

    // reference histograms: label counts, and per-label age-bin counts
    std::map<int, std::size_t> ref_label_counts;
    std::map<int, std::map<std::int64_t, std::size_t>> ref_bins;
    for (const auto& rec : reference) {
        ++ref_label_counts[rec.label];
        if (spec.match_age) ++ref_bins[rec.label][age_bin(*rec.age, spec.age_bin_width)];
    }

    // source cells: per (label, bin) record indices, in source order
    std::map<int, std::vector<std::size_t>> src_by_label;
    std::map<int, std::map<std::int64_t, std::vector<std::size_t>>> src_cells;
    for (std::size_t i = 0; i < source.size(); ++i) {
        src_by_label[source[i].label].push_back(i);
        if (spec.match_age) {
            src_cells[source[i].label][age_bin(*source[i].age, spec.age_bin_width)]
                .push_back(i);
        }
    }

    // deficient cells: required by the reference but absent in the source
    std::string deficient;
    const auto note_deficiency = [&](int label, std::optional<std::int64_t> bin) {
        if (!deficient.empty()) deficient += ", ";
        deficient += "(label=" + std::to_string(label);
        if (bin) {
            const double lo = static_cast<double>(*bin) * spec.age_bin_width;
            deficient += ", age=[" + std::to_string(lo) + "," +
                         std::to_string(lo + spec.age_bin_width) + ")";
        }
        deficient += ")";
    };

    // capacity per label under the age-bin proportion constraint
    std::map<int, std::size_t> capacity;
    for (const auto& [label, ref_count] : ref_label_counts) {
        const auto sit = src_by_label.find(label);
        const std::size_t avail = sit == src_by_label.end() ? 0 : sit->second.size();
        if (avail == 0) {
            note_deficiency(label, std::nullopt);
            continue;
        }
        if (!spec.match_age) {
            capacity[label] = avail;
            continue;
        }
        // max m with m * (ref_bin / ref_count) <= src_bin for every bin
        std::size_t m = avail;
        for (const auto& [bin, ref_bin_count] : ref_bins[label]) {
            const auto& cell = src_cells[label][bin];
            if (cell.empty()) {
                note_deficiency(label, bin);
                m = 0;
                continue;
            }
            m = std::min(m, cell.size() * ref_count / ref_bin_count);
        }
        capacity[label] = m;
    }
    if (!deficient.empty()) {
        throw DataError("match_test_set: reference requires cells absent from source: " +
                        deficient);
    }

    // per-label output counts
    std::map<int, std::size_t> take;
    if (spec.match_prevalence) {
        const std::size_t ref_total = reference.size();
        std::size_t n = 0;
        bool first = true;
        for (const auto& [label, ref_count] : ref_label_counts) {
            const std::size_t bound = capacity[label] * ref_total / ref_count;
            n = first ? bound : std::min(n, bound);
            first = false;
        }
        std::vector<double> weights;
        std::vector<std::size_t> caps;
        std::vector<int> labels;
        for (const auto& [label, ref_count] : ref_label_counts) {
            labels.push_back(label);
            weights.push_back(static_cast<double>(ref_count));
            caps.push_back(capacity[label]);
        }
        const auto counts = apportion(n, weights, caps);
        for (std::size_t i = 0; i < labels.size(); ++i) take[labels[i]] = counts[i];
    } else {
        take = capacity;
    }

    // seeded draws without replacement, cells visited in deterministic order
    Rng rng(derive_seed(spec.seed, 0x6d617463ULL));
    std::vector<std::size_t> chosen;
    const auto draw = [&](const std::vector<std::size_t>& pool, std::size_t count) {
        std::vector<std::size_t> local = pool;
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t j = k + rng.uniform_index(local.size() - k);
            std::swap(local[k], local[j]);
            chosen.push_back(local[k]);
        }
    };
    for (const auto& [label, count] : take) {
        if (!spec.match_age) {
            draw(src_by_label[label], count);
            continue;
        }
        const auto& bins = ref_bins[label];
        std::vector<double> weights;
        std::vector<std::size_t> caps;
        std::vector<std::int64_t> bin_ids;
        for (const auto& [bin, ref_bin_count] : bins) {
            bin_ids.push_back(bin);
            weights.push_back(static_cast<double>(ref_bin_count));
            caps.push_back(src_cells[label][bin].size());
        }
        const auto bin_counts = apportion(count, weights, caps);
        for (std::size_t i = 0; i < bin_ids.size(); ++i) {
            draw(src_cells[label][bin_ids[i]], bin_counts[i]);
        }
    }

    std::sort(chosen.begin(), chosen.end());
    std::vector<ImageRecord> out;
    out.reserve(chosen.size());
    for (const std::size_t i : chosen) out.push_back(source[i]);
    return out;
}

}  // namespace cfstress
