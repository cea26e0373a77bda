#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "experiment.hpp"

namespace wmsteal::io {

namespace fs = std::filesystem;

/// Writes through a sibling temp file and renames it into place.
inline void write_atomic(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw InputError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("missing artifact: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json read_json(const fs::path& path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

inline void write_json(const fs::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------- tokens

/// One text per line, token ids separated by single spaces.
inline std::string format_texts(const std::vector<TokenSeq>& texts) {
    std::string out;
    for (const auto& t : texts) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (i) out += ' ';
            out += std::to_string(t[i]);
        }
        out += '\n';
    }
    return out;
}

inline std::vector<TokenSeq> parse_texts(std::string_view data, const std::string& where) {
    std::vector<TokenSeq> texts;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < data.size()) {
        std::size_t end = data.find('\n', pos);
        if (end == std::string_view::npos) end = data.size();
        ++line_no;
        std::istringstream line{std::string(data.substr(pos, end - pos))};
        TokenSeq t;
        std::string word;
        while (line >> word) {
            try {
                std::size_t used = 0;
                const long v = std::stol(word, &used);
                if (used != word.size() || v < 0 || v > INT32_MAX) throw std::invalid_argument(word);
                t.push_back(static_cast<Token>(v));
            } catch (const std::exception&) {
                throw InputError(where + ":" + std::to_string(line_no) + ": bad token '" + word + "'");
            }
        }
        texts.push_back(std::move(t));
        pos = end + 1;
    }
    return texts;
}

inline void save_texts(const fs::path& path, const std::vector<TokenSeq>& texts) {
    write_atomic(path, format_texts(texts));
}

inline std::vector<TokenSeq> load_texts(const fs::path& path) { return parse_texts(read_file(path), path.string()); }

// ---------------------------------------------------------------- corpora

struct CorpusManifest {
    std::string file;
    std::string label;  // "watermarked" | "plain"
    std::size_t num_texts = 0;
    std::size_t tokens_per_text = 0;
    std::size_t prompt_len = 0;
    std::size_t vocab_size = 0;
    std::string watermark_hash;  // "-" for plain corpora
    std::string provenance;
    std::string config_hash;
    std::string content_hash;
};

inline json to_json(const CorpusManifest& m) {
    return {{"file", m.file},
            {"label", m.label},
            {"num_texts", m.num_texts},
            {"tokens_per_text", m.tokens_per_text},
            {"prompt_len", m.prompt_len},
            {"vocab_size", m.vocab_size},
            {"watermark_hash", m.watermark_hash},
            {"provenance", m.provenance},
            {"config_hash", m.config_hash},
            {"content_hash", m.content_hash}};
}

inline CorpusManifest manifest_from_json(const json& j, const std::string& where) {
    CorpusManifest m;
    try {
        m.file = j.at("file").get<std::string>();
        m.label = j.at("label").get<std::string>();
        m.num_texts = j.at("num_texts").get<std::size_t>();
        m.tokens_per_text = j.at("tokens_per_text").get<std::size_t>();
        m.prompt_len = j.at("prompt_len").get<std::size_t>();
        m.vocab_size = j.at("vocab_size").get<std::size_t>();
        m.watermark_hash = j.at("watermark_hash").get<std::string>();
        m.provenance = j.at("provenance").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.content_hash = j.at("content_hash").get<std::string>();
    } catch (const json::exception& e) {
        throw InputError(where + ": bad manifest: " + e.what());
    }
    return m;
}

/// Writes `<dir>/<name>.txt` and `<dir>/<name>.manifest.json`.
inline CorpusManifest save_corpus(const fs::path& dir, const std::string& name, const Corpus& c,
                                  const ExperimentConfig& cfg) {
    const std::string body = format_texts(c.texts);
    CorpusManifest m;
    m.file = name + ".txt";
    m.label = c.label == CorpusLabel::Watermarked ? "watermarked" : "plain";
    m.num_texts = c.size();
    m.tokens_per_text = c.texts.empty() ? 0 : c.texts.front().size() - c.prompt_len;
    m.prompt_len = c.prompt_len;
    m.vocab_size = cfg.lm.vocab_size;
    m.watermark_hash = c.label == CorpusLabel::Watermarked ? hex64(fnv1a(cfg.victim.id())) : "-";
    m.provenance = hex64(corpus_provenance(cfg));
    m.config_hash = hex64(config_hash(cfg));
    m.content_hash = hex64(fnv1a(body));
    write_atomic(dir / m.file, body);
    write_json(dir / (name + ".manifest.json"), to_json(m));
    return m;
}

/// Loads a corpus and checks it against its manifest and the expected
/// provenance (empty string skips the provenance check).
inline Corpus load_corpus(const fs::path& dir, const std::string& name, const std::string& provenance) {
    const CorpusManifest m = manifest_from_json(read_json(dir / (name + ".manifest.json")), name);
    if (!provenance.empty() && m.provenance != provenance)
        throw ProvenanceError(name + " corpus was generated under a different configuration (provenance " +
                              m.provenance + ", expected " + provenance + ")");
    const std::string body = read_file(dir / m.file);
    if (hex64(fnv1a(body)) != m.content_hash) throw ProvenanceError(name + " corpus does not match its manifest hash");
    Corpus c;
    c.texts = parse_texts(body, (dir / m.file).string());
    c.prompt_len = m.prompt_len;
    c.label = m.label == "watermarked" ? CorpusLabel::Watermarked : CorpusLabel::Plain;
    if (c.texts.size() != m.num_texts) throw InputError(name + ": text count differs from manifest");
    for (const auto& t : c.texts) {
        if (t.size() != m.prompt_len + m.tokens_per_text) throw InputError(name + ": text length differs from manifest");
        check_tokens(t, m.vocab_size);
    }
    return c;
}

// ---------------------------------------------------------------- tables

// Binary table files, little-endian:
//   magic "WMSTBL01" | u32 kind | u32 ctx_len | u32 n_o | u32 reserved
//   u64 vocab_size | f64 clip | u64 min_support | u64 provenance | u64 num_keys
//   num_keys records sorted by key:
//     u64 key | u32 nnz_w | nnz_w x (u32 token, u32 count) | u32 nnz_n | nnz_n x (u32 token, u32 count)
// kind 0..3 mirrors SealKind and keeps D_n rows only for keys seen in D_w.
// kind 4 is the WC table: w holds full-context D_w counts, n the D_w unigram
// under key 0 (never a full-context key, as every slot is active).

inline constexpr char kTableMagic[8] = {'W', 'M', 'S', 'T', 'B', 'L', '0', '1'};
inline constexpr std::uint32_t kWcKind = 4;

struct TableHeader {
    std::uint32_t kind = 0;
    std::uint32_t ctx_len = 0;
    std::uint32_t n_o = 0;
    std::uint64_t vocab_size = 0;
    double clip = 0.0;
    std::uint64_t min_support = 0;
    std::uint64_t provenance = 0;
    std::uint64_t num_keys = 0;
};

namespace detail {

class Writer {
  public:
    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        bytes_.append(buf, sizeof(T));
    }
    void raw(const char* p, std::size_t n) { bytes_.append(p, n); }
    std::string& bytes() { return bytes_; }

  private:
    std::string bytes_;
};

class Reader {
  public:
    Reader(std::string_view data, std::string where) : data_(data), where_(std::move(where)) {}
    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > data_.size()) throw InputError(where_ + ": truncated table file");
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string_view raw(std::size_t n) {
        if (pos_ + n > data_.size()) throw InputError(where_ + ": truncated table file");
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == data_.size(); }

  private:
    std::string_view data_;
    std::string where_;
    std::size_t pos_ = 0;
};

inline void put_row(Writer& w, std::span<const std::uint32_t> row) {
    std::uint32_t nnz = 0;
    for (auto c : row) nnz += c != 0;
    w.put(nnz);
    for (std::size_t t = 0; t < row.size(); ++t)
        if (row[t]) {
            w.put(static_cast<std::uint32_t>(t));
            w.put(row[t]);
        }
}

inline void get_row(Reader& r, std::uint64_t key, FrequencyTable& table, const std::string& where) {
    const auto nnz = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < nnz; ++i) {
        const auto t = r.get<std::uint32_t>();
        const auto c = r.get<std::uint32_t>();
        if (t >= table.vocab_size() || c == 0) throw InputError(where + ": corrupt table record");
        table.add(key, static_cast<Token>(t), c);
    }
}

inline std::string encode_tables(const TableHeader& h, const FrequencyTable& w, const FrequencyTable& n,
                                 bool union_keys = false) {
    Writer out;
    out.raw(kTableMagic, sizeof kTableMagic);
    out.put(h.kind);
    out.put(h.ctx_len);
    out.put(h.n_o);
    out.put(std::uint32_t{0});
    out.put(h.vocab_size);
    out.put(h.clip);
    out.put(h.min_support);
    out.put(h.provenance);
    auto keys = w.sorted_keys();
    if (union_keys) {
        const auto more = n.sorted_keys();
        std::vector<std::uint64_t> merged;
        std::set_union(keys.begin(), keys.end(), more.begin(), more.end(), std::back_inserter(merged));
        keys = std::move(merged);
    }
    out.put(static_cast<std::uint64_t>(keys.size()));
    const std::vector<std::uint32_t> none(w.vocab_size(), 0);
    for (auto key : keys) {
        out.put(key);
        const auto wrow = w.row(key);
        put_row(out, wrow.empty() ? std::span<const std::uint32_t>(none) : wrow);
        const auto nrow = n.row(key);
        put_row(out, nrow.empty() ? std::span<const std::uint32_t>(none) : nrow);
    }
    return std::move(out.bytes());
}

struct Decoded {
    TableHeader header;
    FrequencyTable w, n;
};

inline Decoded decode_tables(std::string_view data, const std::string& where) {
    Reader in(data, where);
    if (in.raw(sizeof kTableMagic) != std::string_view(kTableMagic, sizeof kTableMagic))
        throw InputError(where + ": not a table file");
    Decoded d;
    auto& h = d.header;
    h.kind = in.get<std::uint32_t>();
    h.ctx_len = in.get<std::uint32_t>();
    h.n_o = in.get<std::uint32_t>();
    in.get<std::uint32_t>();
    h.vocab_size = in.get<std::uint64_t>();
    h.clip = in.get<double>();
    h.min_support = in.get<std::uint64_t>();
    h.provenance = in.get<std::uint64_t>();
    h.num_keys = in.get<std::uint64_t>();
    if (h.kind > kWcKind || h.ctx_len < 1 || h.ctx_len > 8 || h.vocab_size < 2)
        throw InputError(where + ": bad table header");
    d.w = FrequencyTable(h.vocab_size);
    d.n = FrequencyTable(h.vocab_size);
    std::uint64_t prev = 0;
    for (std::uint64_t i = 0; i < h.num_keys; ++i) {
        const auto key = in.get<std::uint64_t>();
        if (i && key <= prev) throw InputError(where + ": table keys out of order");
        prev = key;
        get_row(in, key, d.w, where);
        get_row(in, key, d.n, where);
    }
    if (!in.done()) throw InputError(where + ": trailing bytes in table file");
    return d;
}

inline void check_provenance(const TableHeader& h, std::uint64_t expected, const std::string& where) {
    if (expected && h.provenance != expected)
        throw ProvenanceError(where + " was forged under a different configuration (provenance " +
                              hex64(h.provenance) + ", expected " + hex64(expected) + ")");
}

}  // namespace detail

inline std::string encode_seal(const ForgedSeal& s, std::uint64_t provenance) {
    TableHeader h;
    h.kind = static_cast<std::uint32_t>(s.kind);
    h.ctx_len = static_cast<std::uint32_t>(s.pattern.ctx_len);
    h.n_o = s.pattern.n_o;
    h.vocab_size = s.vocab_size();
    h.clip = s.clip;
    h.min_support = s.min_support;
    h.provenance = provenance;
    return detail::encode_tables(h, *s.w, *s.n);
}

/// Only D_n rows of keys seen in D_w are stored: other keys never score.
inline ForgedSeal decode_seal(std::string_view data, const std::string& where, std::uint64_t provenance = 0) {
    auto d = detail::decode_tables(data, where);
    const auto& h = d.header;
    if (h.kind == kWcKind) throw InputError(where + ": WC table where a seal was expected");
    detail::check_provenance(h, provenance, where);
    return make_seal(static_cast<SealKind>(h.kind), TransformPattern{static_cast<int>(h.ctx_len), h.n_o}, h.vocab_size,
                     std::make_shared<const FrequencyTable>(std::move(d.w)),
                     std::make_shared<const FrequencyTable>(std::move(d.n)), SealOptions{h.clip, h.min_support});
}

inline std::string encode_wc(const WcTable& wc, std::uint64_t provenance) {
    TableHeader h;
    h.kind = kWcKind;
    h.ctx_len = static_cast<std::uint32_t>(wc.ctx_len());
    h.n_o = (1U << wc.ctx_len()) - 1;
    h.vocab_size = wc.full().vocab_size();
    h.provenance = provenance;
    return detail::encode_tables(h, wc.full(), wc.unigram_table(), true);
}

inline WcTable decode_wc(std::string_view data, const std::string& where, std::uint64_t provenance = 0) {
    auto d = detail::decode_tables(data, where);
    if (d.header.kind != kWcKind) throw InputError(where + ": not a WC table");
    detail::check_provenance(d.header, provenance, where);
    return WcTable(std::make_shared<const FrequencyTable>(std::move(d.w)),
                   std::make_shared<const FrequencyTable>(std::move(d.n)), static_cast<int>(d.header.ctx_len));
}

/// Human-readable dump: keys as token lists with -1 for wildcards.
inline json seal_to_json(const ForgedSeal& s) {
    json keys = json::array();
    const std::size_t slots = s.kind == SealKind::Singles ? 1 : s.kind == SealKind::Pairs ? 2
                                                                                          : static_cast<std::size_t>(s.pattern.ctx_len);
    auto sparse = [](std::span<const std::uint32_t> row) {
        json o = json::object();
        for (std::size_t t = 0; t < row.size(); ++t)
            if (row[t]) o[std::to_string(t)] = row[t];
        return o;
    };
    for (auto key : s.w->sorted_keys()) {
        const auto nrow = s.n->row(key);
        keys.push_back({{"key", s.codec.unpack(key, slots)},
                        {"w", sparse(s.w->row(key))},
                        {"n", nrow.empty() ? json::object() : sparse(nrow)}});
    }
    return {{"kind", static_cast<int>(s.kind)}, {"ctx_len", s.pattern.ctx_len}, {"n_o", s.pattern.n_o},
            {"vocab_size", s.vocab_size()},     {"clip", s.clip},             {"min_support", s.min_support},
            {"keys", keys}};
}

// ---------------------------------------------------------------- arsenal

inline std::string seal_file(std::uint32_t n_o) { return "ordered_" + std::to_string(n_o) + ".seal"; }

/// Writes every seal, the WS tables and the WC table into `dir`, plus a
/// manifest listing per-file key counts and content hashes.
inline json save_arsenal(const fs::path& dir, const Arsenal& a, const ExperimentConfig& cfg) {
    const std::uint64_t prov = seal_provenance(cfg);
    json files = json::array();
    auto emit = [&](const std::string& name, const std::string& bytes, std::size_t keys) {
        write_atomic(dir / name, bytes);
        files.push_back({{"file", name}, {"keys", keys}, {"content_hash", hex64(fnv1a(bytes))}});
    };
    for (const auto& s : a.seals) emit(seal_file(s.pattern.n_o), encode_seal(s, prov), s.w->num_keys());
    if (a.ws) {
        emit("ws_full.seal", encode_seal(a.ws->full, prov), a.ws->full.w->num_keys());
        emit("ws_singles.seal", encode_seal(a.ws->singles, prov), a.ws->singles.w->num_keys());
        emit("ws_pairs.seal", encode_seal(a.ws->pairs, prov), a.ws->pairs.w->num_keys());
    }
    emit("wc_table.bin", encode_wc(a.wc, prov), a.wc.full().num_keys());
    json m = {{"ctx_len", a.ctx_len},
              {"vocab_size", a.vocab_size},
              {"provenance", hex64(prov)},
              {"config_hash", hex64(config_hash(cfg))},
              {"files", files}};
    write_json(dir / "manifest.json", m);
    return m;
}

inline Arsenal load_arsenal(const fs::path& dir, const ExperimentConfig& cfg) {
    const std::uint64_t prov = seal_provenance(cfg);
    const json m = read_json(dir / "manifest.json");
    if (m.value("provenance", std::string()) != hex64(prov))
        throw ProvenanceError("forged seals in " + dir.string() + " do not match this configuration");
    Arsenal a;
    a.ctx_len = cfg.steal.ctx_len;
    a.vocab_size = cfg.lm.vocab_size;
    auto load = [&](const std::string& name) { return read_file(dir / name); };
    for (std::uint32_t n_o = 0; n_o < (1U << a.ctx_len); ++n_o)
        a.seals.push_back(decode_seal(load(seal_file(n_o)), seal_file(n_o), prov));
    WsSeals ws;
    ws.full = decode_seal(load("ws_full.seal"), "ws_full.seal", prov);
    ws.singles = decode_seal(load("ws_singles.seal"), "ws_singles.seal", prov);
    ws.pairs = decode_seal(load("ws_pairs.seal"), "ws_pairs.seal", prov);
    ws.empty = a.seals.front();
    a.ws = std::move(ws);
    a.wc = decode_wc(load("wc_table.bin"), "wc_table.bin", prov);
    return a;
}

// ---------------------------------------------------------------- traces, reports

/// One JSON object per text: the chosen n_o and omegas of every step.
inline std::string format_traces(const std::vector<SelectionTrace>& traces) {
    std::string out;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        json steps = json::array();
        for (const auto& s : traces[i]) steps.push_back({{"chosen", s.chosen}, {"omega", s.omegas}});
        out += json{{"text", i}, {"steps", steps}}.dump() + "\n";
    }
    return out;
}

inline json report_to_json(const PointResult& r, bool record_runtime) {
    const auto& p = r.point;
    json j = {{"mode", to_string(p.mode)},
              {"method", p.method.label()},
              {"ablation", p.ablation},
              {"watermark", to_json(p.victim)},
              {"delta_att", p.mode == Mode::Scrub ? -std::abs(p.delta_att) : p.delta_att},
              {"dw_size", p.dw_size},
              {"wcs", r.report.mean_wcs},
              {"auc", r.report.auc},
              {"tpr", r.report.tpr},
              {"tpr_underpowered", r.report.underpowered},
              {"ppl", r.report.mean_ppl},
              {"positives", r.report.positives},
              {"negatives", r.report.negatives},
              {"config_hash", hex64(r.report.config_hash)}};
    if (record_runtime) j["runtime_s"] = r.runtime_s;
    return j;
}

}  // namespace wmsteal::io
