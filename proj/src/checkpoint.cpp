#include "ctrlite/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace ctrlite {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'R', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kFlavorDense = 0;
constexpr std::uint8_t kFlavorSparse = 1;

// matrix encodings inside the sparse flavor
constexpr std::uint8_t kEncDense = 0;
constexpr std::uint8_t kEncCrs = 1;
constexpr std::uint8_t kEncRows = 2;

struct Writer {
    std::string buf;

    template <typename T>
    void put(T v) {
        static_assert(std::is_integral_v<T>);
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            buf.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
        }
    }
    void put_f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put(bits);
    }
    void put_f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put(bits);
    }
    void put_str(const std::string& s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        buf.append(s);
    }
};

struct Reader {
    std::string buf;
    std::size_t pos = 0;
    std::string section = "header";

    void need(std::size_t bytes) {
        if (pos + bytes > buf.size()) {
            throw ParseError("checkpoint truncated in section '" + section + "'");
        }
    }
    template <typename T>
    T get() {
        need(sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        }
        pos += sizeof(T);
        return static_cast<T>(v);
    }
    float get_f32() {
        const auto bits = get<std::uint32_t>();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double get_f64() {
        const auto bits = get<std::uint64_t>();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string get_str() {
        const auto len = get<std::uint32_t>();
        need(len);
        std::string s = buf.substr(pos, len);
        pos += len;
        return s;
    }
};

void write_config(Writer& w, const ModelConfig& c) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(c.kind));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.n_fields));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.embed_dim));
    w.put<std::uint64_t>(c.n_features);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.mlp_widths.size()));
    for (int width : c.mlp_widths) w.put<std::uint32_t>(static_cast<std::uint32_t>(width));
    w.put_f64(c.dropout_rate);
}

ModelConfig read_config(Reader& r) {
    r.section = "config";
    ModelConfig c;
    const auto kind = r.get<std::uint8_t>();
    if (kind > 3) throw ParseError("checkpoint: bad model kind");
    c.kind = static_cast<ModelKind>(kind);
    c.n_fields = static_cast<int>(r.get<std::uint32_t>());
    c.embed_dim = static_cast<int>(r.get<std::uint32_t>());
    c.n_features = r.get<std::uint64_t>();
    const auto layers = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < layers; ++i) {
        c.mlp_widths.push_back(static_cast<int>(r.get<std::uint32_t>()));
    }
    c.dropout_rate = r.get_f64();
    return c;
}

void write_metadata(Writer& w, const Metadata& meta) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        w.put_str(k);
        w.put_str(v);
    }
}

Metadata read_metadata(Reader& r) {
    r.section = "metadata";
    Metadata meta;
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string k = r.get_str();
        meta[k] = r.get_str();
    }
    return meta;
}

void write_tensors(Writer& w, ModelParams& p) {
    const std::vector<TensorRef> refs = tensor_refs(p);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(refs.size()));
    for (const TensorRef& ref : refs) {
        w.put_str(ref.name);
        w.put<std::uint64_t>(ref.values.size());
        for (double v : ref.values) w.put_f64(v);
    }
}

void read_tensors(Reader& r, ModelParams& p) {
    const std::vector<TensorRef> refs = tensor_refs(p);
    const auto count = r.get<std::uint32_t>();
    if (count != refs.size()) throw ParseError("checkpoint: tensor count mismatch");
    for (const TensorRef& ref : refs) {
        r.section = ref.name;
        const std::string name = r.get_str();
        if (name != ref.name) {
            throw ParseError("checkpoint: expected tensor '" + ref.name + "', found '" + name +
                             "'");
        }
        const auto n = r.get<std::uint64_t>();
        if (n != ref.values.size()) {
            throw ParseError("checkpoint: tensor '" + name + "' has wrong length");
        }
        for (double& v : ref.values) v = r.get_f64();
    }
}

// f32 matrix with the encoding picked by serialized size.
void write_matrix(Writer& w, const MatF& dense) {
    const CrsMatrix crs = to_crs(dense);
    const std::size_t bytes_dense = 4 * dense.size();
    const std::size_t bytes_crs = 4 * crs.row_ptr.size() + 8 * crs.nnz();
    const std::size_t bytes_rows = dense.rows + 5 * crs.nnz();
    const bool rows_ok = dense.cols <= 255;
    if (bytes_dense <= bytes_crs && (!rows_ok || bytes_dense <= bytes_rows)) {
        w.put<std::uint8_t>(kEncDense);
        w.put<std::uint64_t>(dense.rows);
        w.put<std::uint64_t>(dense.cols);
        for (float v : dense.data) w.put_f32(v);
    } else if (rows_ok && bytes_rows < bytes_crs) {
        const SparseRows rows = to_sparse_rows(dense);
        w.put<std::uint8_t>(kEncRows);
        w.put<std::uint64_t>(rows.n_rows);
        w.put<std::uint32_t>(rows.n_cols);
        for (std::uint64_t rr = 0; rr < rows.n_rows; ++rr) {
            w.put<std::uint8_t>(static_cast<std::uint8_t>(rows.row_ptr[rr + 1] - rows.row_ptr[rr]));
        }
        for (std::uint8_t c : rows.col) w.put<std::uint8_t>(c);
        for (float v : rows.val) w.put_f32(v);
    } else {
        w.put<std::uint8_t>(kEncCrs);
        w.put<std::uint32_t>(crs.n_rows);
        w.put<std::uint32_t>(crs.n_cols);
        w.put<std::uint64_t>(crs.nnz());
        for (std::uint32_t v : crs.row_ptr) w.put<std::uint32_t>(v);
        for (std::uint32_t v : crs.col_idx) w.put<std::uint32_t>(v);
        for (float v : crs.values) w.put_f32(v);
    }
}

MatF read_matrix(Reader& r) {
    const auto enc = r.get<std::uint8_t>();
    if (enc == kEncDense) {
        const auto rows = r.get<std::uint64_t>();
        const auto cols = r.get<std::uint64_t>();
        MatF m(rows, cols);
        for (float& v : m.data) v = r.get_f32();
        return m;
    }
    if (enc == kEncRows) {
        SparseRows rows;
        rows.n_rows = r.get<std::uint64_t>();
        rows.n_cols = r.get<std::uint32_t>();
        rows.row_ptr.resize(rows.n_rows + 1, 0);
        for (std::uint64_t i = 0; i < rows.n_rows; ++i) {
            rows.row_ptr[i + 1] = rows.row_ptr[i] + r.get<std::uint8_t>();
        }
        rows.col.resize(rows.row_ptr.back());
        rows.val.resize(rows.row_ptr.back());
        for (auto& c : rows.col) c = r.get<std::uint8_t>();
        for (auto& v : rows.val) v = r.get_f32();
        return from_sparse_rows(rows);
    }
    if (enc == kEncCrs) {
        CrsMatrix crs;
        crs.n_rows = r.get<std::uint32_t>();
        crs.n_cols = r.get<std::uint32_t>();
        const auto nnz = r.get<std::uint64_t>();
        crs.row_ptr.resize(crs.n_rows + 1);
        for (auto& v : crs.row_ptr) v = r.get<std::uint32_t>();
        crs.col_idx.resize(nnz);
        for (auto& v : crs.col_idx) v = r.get<std::uint32_t>();
        crs.values.resize(nnz);
        for (auto& v : crs.values) v = r.get_f32();
        return from_crs(crs);
    }
    throw ParseError("checkpoint: unknown matrix encoding");
}

void write_file(const std::string& path, Writer& w) {
    const std::uint64_t checksum = fnv1a64(w.buf.data(), w.buf.size());
    w.put<std::uint64_t>(checksum);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint: " + path);
    f.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!f) throw IoError("failed writing checkpoint: " + path);
}

Reader open_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    Reader r;
    r.buf.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (r.buf.size() < 8 + 8 || std::memcmp(r.buf.data(), kMagic, 8) != 0) {
        throw ParseError("not a checkpoint file: " + path);
    }
    std::uint64_t tail = 0;
    for (std::size_t i = 0; i < 8; ++i) {
        tail |= static_cast<std::uint64_t>(
                    static_cast<unsigned char>(r.buf[r.buf.size() - 8 + i]))
                << (8 * i);
    }
    const std::uint64_t actual = fnv1a64(r.buf.data(), r.buf.size() - 8);
    if (tail != actual) throw ParseError("checkpoint checksum mismatch: " + path);
    r.buf.resize(r.buf.size() - 8);
    r.pos = 8;
    return r;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const AdamState* adam, const std::string& path,
                     const Metadata& metadata) {
    params.validate();
    Writer w;
    w.buf.append(kMagic, 8);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint8_t>(kFlavorDense);
    write_metadata(w, metadata);
    write_config(w, params.config);
    write_tensors(w, const_cast<ModelParams&>(params));
    w.put<std::uint8_t>(adam ? 1 : 0);
    if (adam) {
        w.put<std::int64_t>(adam->t);
        w.put_f64(adam->beta1);
        w.put_f64(adam->beta2);
        w.put_f64(adam->eps);
        write_tensors(w, const_cast<ModelParams&>(adam->m));
        write_tensors(w, const_cast<ModelParams&>(adam->v));
    }
    write_file(path, w);
}

void save_sparse_checkpoint(const SparseModel& model, const std::string& path,
                            const Metadata& metadata) {
    model.validate();
    Writer w;
    w.buf.append(kMagic, 8);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint8_t>(kFlavorSparse);
    write_metadata(w, metadata);
    write_config(w, model.config);
    w.put<std::uint64_t>(model.dict_hash);
    w.put_f32(model.w0);
    write_matrix(w, model.field_vectors);
    write_matrix(w, from_sparse_rows(model.embeddings));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.pairs.size()));
    for (const FieldPair& p : model.pairs) {
        w.put<std::uint16_t>(p.f1);
        w.put<std::uint16_t>(p.f2);
        w.put_f32(p.weight);
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.mlp_w.size()));
    for (std::size_t l = 0; l < model.mlp_w.size(); ++l) {
        write_matrix(w, from_crs(model.mlp_w[l]));
        w.put<std::uint64_t>(model.mlp_b[l].size());
        for (float v : model.mlp_b[l]) w.put_f32(v);
    }
    w.put<std::uint8_t>(model.out_w.n_rows == 1 ? 1 : 0);
    if (model.out_w.n_rows == 1) {
        write_matrix(w, from_crs(model.out_w));
        w.put_f32(model.out_b);
    }
    for (const ComponentSparsity* c :
         {&model.source_sparsity.dnn, &model.source_sparsity.field_matrix,
          &model.source_sparsity.embeddings}) {
        w.put<std::uint64_t>(c->total);
        w.put<std::uint64_t>(c->nonzero);
    }
    write_file(path, w);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    Reader r = open_file(path);
    r.section = "header";
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw ParseError("unsupported checkpoint version");
    const auto flavor = r.get<std::uint8_t>();
    LoadedCheckpoint out;
    out.metadata = read_metadata(r);
    const ModelConfig config = read_config(r);
    config.validate();

    if (flavor == kFlavorDense) {
        out.sparse = false;
        out.params = alloc_model(config);
        read_tensors(r, out.params);
        r.section = "adam";
        if (r.get<std::uint8_t>()) {
            AdamState adam;
            adam.t = r.get<std::int64_t>();
            adam.beta1 = r.get_f64();
            adam.beta2 = r.get_f64();
            adam.eps = r.get_f64();
            adam.m = zeros_like(out.params);
            adam.v = zeros_like(out.params);
            read_tensors(r, adam.m);
            read_tensors(r, adam.v);
            out.adam = std::move(adam);
        }
        out.params.validate();
        return out;
    }
    if (flavor != kFlavorSparse) throw ParseError("checkpoint: unknown flavor");

    out.sparse = true;
    SparseModel& m = out.model;
    m.config = config;
    r.section = "dict_hash";
    m.dict_hash = r.get<std::uint64_t>();
    m.w0 = r.get_f32();
    r.section = "field_vectors";
    m.field_vectors = read_matrix(r);
    r.section = "embeddings";
    m.embeddings = to_sparse_rows(read_matrix(r));
    r.section = "pairs";
    const auto n_pairs = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_pairs; ++i) {
        FieldPair p;
        p.f1 = r.get<std::uint16_t>();
        p.f2 = r.get<std::uint16_t>();
        p.weight = r.get_f32();
        m.pairs.push_back(p);
    }
    r.section = "mlp";
    const auto n_layers = r.get<std::uint32_t>();
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        m.mlp_w.push_back(to_crs(read_matrix(r)));
        const auto blen = r.get<std::uint64_t>();
        std::vector<float> b(blen);
        for (auto& v : b) v = r.get_f32();
        m.mlp_b.push_back(std::move(b));
    }
    r.section = "output";
    if (r.get<std::uint8_t>()) {
        m.out_w = to_crs(read_matrix(r));
        m.out_b = r.get_f32();
    }
    r.section = "sparsity";
    for (ComponentSparsity* c :
         {&m.source_sparsity.dnn, &m.source_sparsity.field_matrix,
          &m.source_sparsity.embeddings}) {
        c->total = r.get<std::uint64_t>();
        c->nonzero = r.get<std::uint64_t>();
    }
    m.validate();
    return out;
}

}  // namespace ctrlite
