#include "ctrlite/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ctrlite {

FieldSchema FieldSchema::numeric_then_categorical(int n_numeric, int n_categorical) {
    FieldSchema s;
    s.n_fields = n_numeric + n_categorical;
    for (int i = 0; i < n_numeric; ++i) s.numeric_fields.push_back(i);
    for (int i = 0; i < n_categorical; ++i) s.categorical_fields.push_back(n_numeric + i);
    return s;
}

void FieldSchema::validate() const {
    if (n_fields < 1) throw ConfigError("schema: n_fields must be >= 1");
    std::vector<int> seen(static_cast<std::size_t>(n_fields), 0);
    auto mark = [&](const std::vector<int>& positions, const char* what) {
        for (int p : positions) {
            if (p < 0 || p >= n_fields)
                throw ConfigError(std::string("schema: ") + what + " position out of range");
            if (seen[static_cast<std::size_t>(p)]++)
                throw ConfigError("schema: numeric and categorical positions overlap");
        }
    };
    mark(numeric_fields, "numeric");
    mark(categorical_fields, "categorical");
    for (int p = 0; p < n_fields; ++p) {
        if (!seen[static_cast<std::size_t>(p)])
            throw ConfigError("schema: field position " + std::to_string(p) + " unassigned");
    }
}

bool FieldSchema::is_numeric(int field) const {
    return std::find(numeric_fields.begin(), numeric_fields.end(), field) !=
           numeric_fields.end();
}

double transform_numeric(double x, bool floor_log) {
    if (!std::isfinite(x) || x < 0) {
        throw InputError("transform_numeric: input must be finite and non-negative");
    }
    if (x <= 2.0) return x;
    const double lg = std::log(x);
    const double y = lg * lg;
    return floor_log ? std::floor(y) : y;
}

std::vector<std::string> split_tsv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            std::string last = line.substr(start);
            if (!last.empty() && last.back() == '\r') last.pop_back();
            out.push_back(std::move(last));
            break;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return out;
}

void for_each_tsv_row(const std::string& path, const FieldSchema& schema,
                      const std::function<void(const std::vector<std::string>&, std::size_t)>& fn) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open input file: " + path);
    const std::size_t expected = static_cast<std::size_t>(schema.n_fields) + 1;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cols = split_tsv_line(line);
        if (cols.size() != expected) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(expected) + " columns, got " +
                             std::to_string(cols.size()));
        }
        fn(cols, line_no);
    }
}

DictionaryBuilder::DictionaryBuilder(const FieldSchema& schema) : schema_(schema) {
    schema_.validate();
    counts_.resize(static_cast<std::size_t>(schema_.n_fields));
    first_seen_.resize(static_cast<std::size_t>(schema_.n_fields));
}

void DictionaryBuilder::count_row(const std::vector<std::string>& columns, std::size_t line_no) {
    if (columns.size() != static_cast<std::size_t>(schema_.n_fields) + 1) {
        throw ParseError("line " + std::to_string(line_no) + ": wrong column count");
    }
    for (int f : schema_.categorical_fields) {
        const std::string& tok = columns[static_cast<std::size_t>(f) + 1];
        if (tok.empty()) continue;  // missing -> field default, not a token
        auto [it, inserted] = counts_[static_cast<std::size_t>(f)].try_emplace(tok, 0);
        it->second += 1;
        if (inserted) first_seen_[static_cast<std::size_t>(f)].push_back(tok);
    }
}

FeatureDictionary DictionaryBuilder::finish(std::uint64_t min_freq) const {
    if (min_freq < 1) throw ConfigError("min_freq must be >= 1");
    FeatureDictionary dict;
    dict.schema = schema_;
    const auto n = static_cast<std::size_t>(schema_.n_fields);
    dict.tokens.resize(n);
    dict.default_index.resize(n);
    dict.field_range.resize(n);
    std::uint32_t next = 0;
    for (std::size_t f = 0; f < n; ++f) {
        const std::uint32_t begin = next;
        dict.default_index[f] = next++;  // default first, always retained
        if (!schema_.is_numeric(static_cast<int>(f))) {
            const auto& counts = counts_[f];
            for (const std::string& tok : first_seen_[f]) {
                if (counts.at(tok) >= min_freq) dict.tokens[f].emplace(tok, next++);
            }
        }
        dict.field_range[f] = {begin, next};
    }
    dict.total_features = next;
    return dict;
}

FeatureDictionary build_dictionary(const std::string& tsv_path, const FieldSchema& schema,
                                   std::uint64_t min_freq) {
    DictionaryBuilder builder(schema);
    for_each_tsv_row(tsv_path, schema,
                     [&](const std::vector<std::string>& cols, std::size_t ln) {
                         builder.count_row(cols, ln);
                     });
    return builder.finish(min_freq);
}

std::uint32_t FeatureDictionary::lookup(int field, const std::string& token) const {
    const auto f = static_cast<std::size_t>(field);
    if (!token.empty()) {
        const auto& map = tokens[f];
        auto it = map.find(token);
        if (it != map.end()) return it->second;
    }
    return default_index[f];
}

std::string FeatureDictionary::serialize() const {
    // One line per entry, ordered by index, so the file is canonical.
    struct Entry {
        std::uint32_t index;
        int field;
        const std::string* token;
    };
    static const std::string kEmpty;
    std::vector<Entry> entries;
    entries.reserve(total_features);
    for (std::size_t f = 0; f < default_index.size(); ++f) {
        entries.push_back({default_index[f], static_cast<int>(f), &kEmpty});
        for (const auto& [tok, idx] : tokens[f]) {
            entries.push_back({idx, static_cast<int>(f), &tok});
        }
    }
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.index < b.index; });
    std::string out;
    for (const Entry& e : entries) {
        out += std::to_string(e.field);
        out += '\t';
        out += *e.token;
        out += '\t';
        out += std::to_string(e.index);
        out += '\n';
    }
    return out;
}

void FeatureDictionary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write dictionary file: " + path);
    out << serialize();
    if (!out) throw IoError("failed writing dictionary file: " + path);
}

FeatureDictionary FeatureDictionary::load(const std::string& path, const FieldSchema& schema) {
    schema.validate();
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dictionary file: " + path);
    FeatureDictionary dict;
    dict.schema = schema;
    const auto n = static_cast<std::size_t>(schema.n_fields);
    dict.tokens.resize(n);
    dict.default_index.assign(n, UINT32_MAX);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> range(
        n, {UINT32_MAX, 0});  // min, max+1 per field
    std::string line;
    std::size_t line_no = 0;
    std::uint32_t max_index = 0;
    std::uint64_t entry_count = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cols = split_tsv_line(line);
        if (cols.size() != 3) {
            throw ParseError("dictionary line " + std::to_string(line_no) +
                             ": expected field<TAB>token<TAB>index");
        }
        std::size_t pos = 0;
        const int field = std::stoi(cols[0], &pos);
        if (pos != cols[0].size() || field < 0 || field >= schema.n_fields) {
            throw ParseError("dictionary line " + std::to_string(line_no) + ": bad field id");
        }
        const auto index = static_cast<std::uint32_t>(std::stoul(cols[2], &pos));
        if (pos != cols[2].size()) {
            throw ParseError("dictionary line " + std::to_string(line_no) + ": bad index");
        }
        const auto f = static_cast<std::size_t>(field);
        if (cols[1].empty()) {
            if (dict.default_index[f] != UINT32_MAX) {
                throw ParseError("dictionary line " + std::to_string(line_no) +
                                 ": duplicate default for field " + cols[0]);
            }
            dict.default_index[f] = index;
        } else {
            if (!dict.tokens[f].emplace(cols[1], index).second) {
                throw ParseError("dictionary line " + std::to_string(line_no) +
                                 ": duplicate token for field " + cols[0]);
            }
        }
        range[f].first = std::min(range[f].first, index);
        range[f].second = std::max(range[f].second, index + 1);
        max_index = std::max(max_index, index);
        ++entry_count;
    }
    for (std::size_t f = 0; f < n; ++f) {
        if (dict.default_index[f] == UINT32_MAX) {
            throw ParseError("dictionary: field " + std::to_string(f) + " has no default entry");
        }
        dict.field_range.push_back(range[f]);
    }
    dict.total_features = max_index + 1;
    if (entry_count != dict.total_features) {
        throw ParseError("dictionary: indices are not dense");
    }
    return dict;
}

Sample encode_sample(const std::vector<std::string>& columns, const FeatureDictionary& dict,
                     bool floor_log) {
    const auto n = static_cast<std::size_t>(dict.schema.n_fields);
    if (columns.size() != n + 1) {
        throw ParseError(columns.empty() ? "row has no label column"
                                         : "row has wrong column count");
    }
    Sample s;
    if (columns[0] == "0") {
        s.label = 0;
    } else if (columns[0] == "1") {
        s.label = 1;
    } else {
        throw ParseError("label must be 0 or 1, got '" + columns[0] + "'");
    }
    s.idx.resize(n);
    s.val.resize(n);
    for (std::size_t f = 0; f < n; ++f) {
        const std::string& cell = columns[f + 1];
        if (dict.schema.is_numeric(static_cast<int>(f))) {
            s.idx[f] = dict.default_index[f];
            if (cell.empty()) {
                s.val[f] = 0.0;  // missing numeric
            } else {
                char* end = nullptr;
                const double raw = std::strtod(cell.c_str(), &end);
                if (end != cell.c_str() + cell.size()) {
                    throw ParseError("field " + std::to_string(f) + ": bad numeric value '" +
                                     cell + "'");
                }
                s.val[f] = transform_numeric(raw, floor_log);
            }
        } else {
            s.idx[f] = dict.lookup(static_cast<int>(f), cell);
            s.val[f] = 1.0;
        }
    }
    return s;
}

Dataset encode_file(const std::string& tsv_path, const FeatureDictionary& dict, bool floor_log) {
    Dataset ds;
    ds.n_fields = dict.schema.n_fields;
    ds.n_features = dict.total_features;
    ds.dict_hash = dict.hash();
    ds.field_range = dict.field_range;
    for_each_tsv_row(tsv_path, dict.schema,
                     [&](const std::vector<std::string>& cols, std::size_t ln) {
                         try {
                             ds.samples.push_back(encode_sample(cols, dict, floor_log));
                         } catch (const ParseError& e) {
                             throw ParseError("line " + std::to_string(ln) + ": " + e.what());
                         } catch (const InputError& e) {
                             throw ParseError("line " + std::to_string(ln) + ": " + e.what());
                         }
                     });
    return ds;
}

namespace {

// Little-endian scalar IO for the dataset binary format.
template <typename T>
void put(std::string& out, T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
    }
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    template <typename T>
    T get() {
        if (pos + sizeof(T) > buf.size()) throw ParseError("dataset file truncated");
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        }
        pos += sizeof(T);
        return static_cast<T>(v);
    }

    double get_f64() {
        const std::uint64_t bits = get<std::uint64_t>();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

constexpr char kDatasetMagic[8] = {'C', 'T', 'R', 'D', 'S', 'E', 'T', '1'};

}  // namespace

void Dataset::save(const std::string& path) const {
    std::string out;
    out.append(kDatasetMagic, 8);
    put<std::uint32_t>(out, 1);  // version
    put<std::uint64_t>(out, dict_hash);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(n_fields));
    put<std::uint64_t>(out, n_features);
    put<std::uint64_t>(out, samples.size());
    for (const auto& [begin, end] : field_range) {
        put<std::uint32_t>(out, begin);
        put<std::uint32_t>(out, end);
    }
    for (const Sample& s : samples) {
        out.push_back(static_cast<char>(s.label));
        for (std::uint32_t i : s.idx) put<std::uint32_t>(out, i);
        for (double v : s.val) put_f64(out, v);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write dataset file: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing dataset file: " + path);
}

Dataset Dataset::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open dataset file: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), kDatasetMagic, 8) != 0) {
        throw ParseError("not a dataset file: " + path);
    }
    Reader r{buf, 8};
    const auto version = r.get<std::uint32_t>();
    if (version != 1) throw ParseError("unsupported dataset version");
    Dataset ds;
    ds.dict_hash = r.get<std::uint64_t>();
    ds.n_fields = static_cast<int>(r.get<std::uint32_t>());
    ds.n_features = r.get<std::uint64_t>();
    const auto count = r.get<std::uint64_t>();
    for (int i = 0; i < ds.n_fields; ++i) {
        const auto begin = r.get<std::uint32_t>();
        const auto end = r.get<std::uint32_t>();
        ds.field_range.emplace_back(begin, end);
    }
    ds.samples.resize(count);
    const auto n = static_cast<std::size_t>(ds.n_fields);
    for (auto& s : ds.samples) {
        s.label = r.get<std::uint8_t>();
        s.idx.resize(n);
        s.val.resize(n);
        for (auto& i : s.idx) i = r.get<std::uint32_t>();
        for (auto& v : s.val) v = r.get_f64();
    }
    return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& all, double train_fraction,
                                          std::uint64_t seed) {
    if (all.samples.empty()) throw InputError("split_dataset: empty input");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw InputError("split_dataset: train_fraction must be in (0, 1)");
    }
    const std::size_t n = all.samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    Dataset train = all, test = all;
    train.samples.clear();
    test.samples.clear();
    for (std::size_t i = 0; i < n; ++i) {
        (i < n_train ? train : test).samples.push_back(all.samples[order[i]]);
    }
    return {std::move(train), std::move(test)};
}

}  // namespace ctrlite
