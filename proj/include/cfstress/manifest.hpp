#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cfstress {

enum class Split { Train, Val, Test, Unassigned };

Split parse_split(std::string_view name);
std::string_view split_name(Split s);

struct ImageRecord {
    std::string image_id;
    std::string patient_id;
    std::string source;
    std::string scanner;  // empty = absent
    std::string sex;      // empty = absent
    std::optional<double> age;
    int label = 0;
    Split split = Split::Unassigned;
    // unknown CSV columns, preserved in header order
    std::vector<std::pair<std::string, std::string>> extra;

    /// categorical attribute lookup by name (scanner, sex, or an extra
    /// column); nullptr when the record does not carry it
    const std::string* attribute(std::string_view name) const;
};

// declared categorical domains per attribute name
struct AttributeSchema {
    std::map<std::string, std::vector<std::string>> domains;

    bool declares(std::string_view attribute) const;
    bool allows(std::string_view attribute, std::string_view value) const;
};

struct RecordManifest {
    std::vector<ImageRecord> records;
    int class_count = 2;
    AttributeSchema attribute_schema;
};

/// Parses the manifest CSV contract:
///   image_id,patient_id,source,label[,scanner][,sex][,age][,split]
/// Unknown columns are kept as opaque attributes; row order is preserved.
/// With class_count = 0 the class count is inferred as max label + 1.
RecordManifest parse_manifest(std::string_view csv_text, int class_count = 0);

/// Inverse of parse_manifest for the columns the records carry.
std::string write_manifest_csv(const RecordManifest& manifest);

/// Deterministic patient-wise split: patients are ordered by a keyed 64-bit
/// hash of (seed, patient_id) and cut at cumulative ratio boundaries by
/// patient count, so the assignment is independent of record order.
RecordManifest split_by_patient(const RecordManifest& manifest,
                                const std::array<double, 3>& ratios,
                                std::uint64_t seed);

/// Records of `split` matching every attribute equality in `predicate`,
/// original order preserved.
std::vector<ImageRecord> filter_subgroup(
    const RecordManifest& manifest,
    const std::map<std::string, std::string>& predicate, Split split);

struct MatchSpec {
    bool match_prevalence = true;
    bool match_age = false;
    double age_bin_width = 5.0;  // years
    std::uint64_t seed = 0;

    void validate() const;
};

/// Largest subset of `source` whose label distribution matches `reference`
/// within one record per class (match_prevalence) and whose per-label
/// age-bin histogram matches the reference bin proportions within one
/// record per bin (match_age). Selection within a (label, bin) cell is a
/// seeded uniform draw without replacement.
std::vector<ImageRecord> match_test_set(const std::vector<ImageRecord>& source,
                                        const std::vector<ImageRecord>& reference,
                                        const MatchSpec& spec);

}  // namespace cfstress
