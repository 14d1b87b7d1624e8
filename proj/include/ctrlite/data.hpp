#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctrlite/common.hpp"

namespace ctrlite {

// Column layout of one raw row: label, then the field columns in schema order.
// The TSV interface puts numeric columns before categorical ones, but the
// schema supports arbitrary positions.
struct FieldSchema {
    int n_fields = 0;
    std::vector<int> numeric_fields;      // positions in [0, n_fields)
    std::vector<int> categorical_fields;  // positions in [0, n_fields)

    // Criteo-style layout: numeric columns first, categorical after.
    static FieldSchema numeric_then_categorical(int n_numeric, int n_categorical);

    void validate() const;  // disjoint, covering, n_fields >= 1
    bool is_numeric(int field) const;
};

// Per-field token -> dense feature index maps. Index blocks are contiguous
// per field; each field owns exactly one default index (empty token), which
// doubles as the value-carrying index of numeric fields.
struct FeatureDictionary {
    FieldSchema schema;
    std::vector<std::unordered_map<std::string, std::uint32_t>> tokens;  // per field
    std::vector<std::uint32_t> default_index;                            // per field
    std::vector<std::pair<std::uint32_t, std::uint32_t>> field_range;    // [begin, end)
    std::uint64_t total_features = 0;  // m

    std::uint32_t lookup(int field, const std::string& token) const;

    // Canonical text form: one line per entry, field<TAB>token<TAB>index,
    // sorted by index. The default entry of each field has an empty token.
    std::string serialize() const;
    std::uint64_t hash() const { return fnv1a64(serialize()); }
    void save(const std::string& path) const;
    static FeatureDictionary load(const std::string& path, const FieldSchema& schema);
};

// One encoded instance: exactly one (index, value) per field.
struct Sample {
    std::uint8_t label = 0;
    std::vector<std::uint32_t> idx;
    std::vector<double> val;
};

// Encoded dataset plus the header needed to validate and size models.
struct Dataset {
    int n_fields = 0;
    std::uint64_t n_features = 0;  // m
    std::uint64_t dict_hash = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> field_range;
    std::vector<Sample> samples;

    void save(const std::string& path) const;
    static Dataset load(const std::string& path);
};

// log(x)^2 above the threshold, identity below. Natural log, no flooring
// unless floor_log is set (the competition recipe variant).
double transform_numeric(double x, bool floor_log = false);

// Splits a raw TSV line into columns. Strips a trailing \r.
std::vector<std::string> split_tsv_line(const std::string& line);

// Streams a TSV file, calling fn(columns, line_number) per row. Validates
// column count = 1 + n_fields; throws ParseError with the line number otherwise.
void for_each_tsv_row(const std::string& path, const FieldSchema& schema,
                      const std::function<void(const std::vector<std::string>&, std::size_t)>& fn);

// Two-pass dictionary construction: count pass then index assignment.
// Tokens are indexed in first-seen order, defaults first, so identical
// input streams yield identical dictionaries.
class DictionaryBuilder {
public:
    explicit DictionaryBuilder(const FieldSchema& schema);

    void count_row(const std::vector<std::string>& columns, std::size_t line_no);
    FeatureDictionary finish(std::uint64_t min_freq) const;

private:
    FieldSchema schema_;
    std::vector<std::unordered_map<std::string, std::uint64_t>> counts_;
    std::vector<std::vector<std::string>> first_seen_;  // per-field token order
};

FeatureDictionary build_dictionary(const std::string& tsv_path, const FieldSchema& schema,
                                   std::uint64_t min_freq);

Sample encode_sample(const std::vector<std::string>& columns, const FeatureDictionary& dict,
                     bool floor_log = false);

Dataset encode_file(const std::string& tsv_path, const FeatureDictionary& dict,
                    bool floor_log = false);

// Deterministic shuffled split; train size = round(fraction * n).
std::pair<Dataset, Dataset> split_dataset(const Dataset& all, double train_fraction,
                                          std::uint64_t seed);

}  // namespace ctrlite
