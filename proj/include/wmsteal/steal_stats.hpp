#pragma once

#include <bit>
#include <cmath>
#include <memory>
#include <thread>

#include "common.hpp"
#include "rng.hpp"

namespace wmsteal {

// ---------------------------------------------------------------- corpora

enum class CorpusLabel { Watermarked, Plain };

/// Texts sharing a common prompt length. Only positions at or after
/// `prompt_len` are counted; earlier tokens serve as context.
struct Corpus {
    std::vector<TokenSeq> texts;
    std::size_t prompt_len = 0;
    CorpusLabel label = CorpusLabel::Plain;

    std::size_t size() const { return texts.size(); }

    Corpus prefix(std::size_t n) const {
        Corpus out;
        out.prompt_len = prompt_len;
        out.label = label;
        const std::size_t take = std::min(n, texts.size());
        out.texts.assign(texts.begin(), texts.begin() + static_cast<std::ptrdiff_t>(take));
        return out;
    }
};

// ---------------------------------------------------------------- keys

inline constexpr Token kWildcard = -1;

/// Activation mask over context positions. Position i (0 = leftmost) is active
/// iff bit (ctx_len - 1 - i) of n_o is set, i.e. the binary expansion is read
/// most-significant-first.
struct TransformPattern {
    int ctx_len = 3;
    std::uint32_t n_o = 0;

    bool active(int pos) const { return ((n_o >> (ctx_len - 1 - pos)) & 1U) != 0; }
    int active_count() const { return std::popcount(n_o); }
    std::uint32_t pattern_count() const { return 1U << ctx_len; }

    void validate() const {
        if (ctx_len < 1 || ctx_len > 16) throw InputError("pattern ctx_len must lie in [1,16]");
        if (n_o >= pattern_count()) throw InputError("pattern index out of range");
    }
    bool operator==(const TransformPattern&) const = default;
};

/// Context with inactive positions replaced by kWildcard.
struct TransformedKey {
    TokenSeq slots;
    bool operator==(const TransformedKey&) const = default;
};

inline TransformedKey transform(std::span<const Token> ctx, TransformPattern pattern) {
    pattern.validate();
    if (ctx.size() != static_cast<std::size_t>(pattern.ctx_len))
        throw InputError("transform: context length " + std::to_string(ctx.size()) +
                         " does not match pattern length " + std::to_string(pattern.ctx_len));
    TransformedKey key;
    key.slots.resize(ctx.size());
    for (int i = 0; i < pattern.ctx_len; ++i)
        key.slots[static_cast<std::size_t>(i)] = pattern.active(i) ? ctx[static_cast<std::size_t>(i)] : kWildcard;
    return key;
}

/// Order-insensitive collapse of a context to its distinct tokens (sorted).
inline TokenSeq token_set_key(std::span<const Token> ctx) {
    TokenSeq s(ctx.begin(), ctx.end());
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

/// Packs up to ctx_len slots into 64 bits, bit_width(|V|) bits per slot,
/// slot value token+1 (0 = wildcard / unused).
class KeyCodec {
  public:
    KeyCodec() = default;
    KeyCodec(std::size_t vocab_size, int ctx_len)
        : bits_(static_cast<unsigned>(std::bit_width(vocab_size))), ctx_len_(ctx_len) {
        if (ctx_len < 1 || bits_ * static_cast<unsigned>(ctx_len) > 64)
            throw ConfigError("context too long to pack: " + std::to_string(ctx_len) + " slots of " +
                              std::to_string(bits_) + " bits");
    }

    int ctx_len() const { return ctx_len_; }

    std::uint64_t pack(std::span<const Token> slots) const {
        std::uint64_t key = 0;
        for (Token t : slots) key = (key << bits_) | static_cast<std::uint64_t>(t + 1);
        key <<= bits_ * static_cast<unsigned>(static_cast<std::size_t>(ctx_len_) - slots.size());
        return key;
    }

    TokenSeq unpack(std::uint64_t key, std::size_t n_slots) const {
        TokenSeq out(n_slots);
        const std::uint64_t mask = (std::uint64_t{1} << bits_) - 1;
        for (std::size_t i = 0; i < n_slots; ++i) {
            const unsigned shift = bits_ * static_cast<unsigned>(static_cast<std::size_t>(ctx_len_) - 1 - i);
            out[i] = static_cast<Token>((key >> shift) & mask) - 1;
        }
        return out;
    }

    std::uint64_t ordered(std::span<const Token> ctx, TransformPattern pattern) const {
        std::uint64_t key = 0;
        for (int i = 0; i < pattern.ctx_len; ++i) {
            const std::uint64_t slot =
                pattern.active(i) ? static_cast<std::uint64_t>(ctx[static_cast<std::size_t>(i)] + 1) : 0;
            key = (key << bits_) | slot;
        }
        return key;
    }

  private:
    unsigned bits_ = 0;
    int ctx_len_ = 0;
};

// ---------------------------------------------------------------- tables

/// Conditional token counts per packed key. Open addressing over an insertion
/// ordered row store; merge is addition.
class FrequencyTable {
  public:
    FrequencyTable() = default;
    explicit FrequencyTable(std::size_t vocab_size) : vocab_(vocab_size) { rehash(64); }

    std::size_t vocab_size() const { return vocab_; }
    std::size_t num_keys() const { return keys_.size(); }
    std::uint64_t grand_total() const {
        std::uint64_t s = 0;
        for (auto t : totals_) s += t;
        return s;
    }

    void add(std::uint64_t key, Token t, std::uint32_t n = 1) {
        const std::size_t row = find_or_insert(key);
        std::uint32_t& c = counts_[row * vocab_ + static_cast<std::size_t>(t)];
        if (c > UINT32_MAX - n) throw NumericError("frequency count overflow");
        c += n;
        totals_[row] += n;
    }

    /// Empty span when the key was never observed.
    std::span<const std::uint32_t> row(std::uint64_t key) const {
        const std::size_t idx = find(key);
        if (idx == npos) return {};
        return {&counts_[idx * vocab_], vocab_};
    }

    std::uint64_t total(std::uint64_t key) const {
        const std::size_t idx = find(key);
        return idx == npos ? 0 : totals_[idx];
    }

    std::span<const std::uint64_t> keys() const { return keys_; }
    std::span<const std::uint32_t> row_at(std::size_t idx) const { return {&counts_[idx * vocab_], vocab_}; }
    std::uint64_t total_at(std::size_t idx) const { return totals_[idx]; }

    std::vector<std::uint64_t> sorted_keys() const {
        std::vector<std::uint64_t> k(keys_.begin(), keys_.end());
        std::sort(k.begin(), k.end());
        return k;
    }

    void merge(const FrequencyTable& other) {
        if (other.vocab_ != vocab_) throw InputError("merge: vocabulary mismatch");
        for (std::size_t i = 0; i < other.keys_.size(); ++i) {
            const std::size_t row = find_or_insert(other.keys_[i]);
            for (std::size_t t = 0; t < vocab_; ++t) {
                const std::uint32_t add = other.counts_[i * vocab_ + t];
                std::uint32_t& c = counts_[row * vocab_ + t];
                if (c > UINT32_MAX - add) throw NumericError("frequency count overflow");
                c += add;
            }
            totals_[row] += other.totals_[i];
        }
    }

    /// Content equality, independent of insertion order.
    bool operator==(const FrequencyTable& other) const {
        if (vocab_ != other.vocab_ || keys_.size() != other.keys_.size()) return false;
        for (std::size_t i = 0; i < keys_.size(); ++i) {
            const auto theirs = other.row(keys_[i]);
            if (theirs.empty() || other.total(keys_[i]) != totals_[i]) return false;
            if (!std::equal(theirs.begin(), theirs.end(), counts_.begin() + static_cast<std::ptrdiff_t>(i * vocab_)))
                return false;
        }
        return true;
    }

  private:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::size_t find(std::uint64_t key) const {
        if (slots_.empty()) return npos;
        for (std::size_t s = fmix64(key) & mask_;; s = (s + 1) & mask_) {
            const std::uint32_t v = slots_[s];
            if (v == 0) return npos;
            if (keys_[v - 1] == key) return v - 1;
        }
    }

    std::size_t find_or_insert(std::uint64_t key) {
        if (slots_.empty()) rehash(64);
        for (std::size_t s = fmix64(key) & mask_;; s = (s + 1) & mask_) {
            const std::uint32_t v = slots_[s];
            if (v == 0) {
                keys_.push_back(key);
                totals_.push_back(0);
                counts_.resize(counts_.size() + vocab_, 0);
                slots_[s] = static_cast<std::uint32_t>(keys_.size());
                if (keys_.size() * 2 > slots_.size()) rehash(slots_.size() * 2);
                return keys_.size() - 1;
            }
            if (keys_[v - 1] == key) return v - 1;
        }
    }

    void rehash(std::size_t capacity) {
        slots_.assign(capacity, 0);
        mask_ = capacity - 1;
        for (std::size_t i = 0; i < keys_.size(); ++i) {
            std::size_t s = fmix64(keys_[i]) & mask_;
            while (slots_[s] != 0) s = (s + 1) & mask_;
            slots_[s] = static_cast<std::uint32_t>(i + 1);
        }
    }

    std::size_t vocab_ = 0;
    std::vector<std::uint64_t> keys_;
    std::vector<std::uint64_t> totals_;
    std::vector<std::uint32_t> counts_;
    std::vector<std::uint32_t> slots_;
    std::size_t mask_ = 0;
};

// ---------------------------------------------------------------- counting

/// Which key families a counting pass fills.
enum class KeyFamily { Ordered, TokenSet, Singles, Pairs };

/// Every table an attack needs from one corpus.
struct CorpusCounts {
    int ctx_len = 0;
    std::vector<FrequencyTable> ordered;  // indexed by n_o
    FrequencyTable token_set;
    FrequencyTable singles;  // {T_i} for each distinct context token
    FrequencyTable pairs;    // {T_i, T_j} for each distinct pair

    void merge(const CorpusCounts& other) {
        for (std::size_t i = 0; i < ordered.size(); ++i) ordered[i].merge(other.ordered[i]);
        token_set.merge(other.token_set);
        singles.merge(other.singles);
        pairs.merge(other.pairs);
    }
};

namespace detail {

inline void count_text(std::span<const Token> text, std::size_t prompt_len, const KeyCodec& codec,
                       bool with_sets, CorpusCounts& out) {
    const auto len = static_cast<std::size_t>(out.ctx_len);
    TokenSeq ctx(len);
    Token distinct[16];
    for (std::size_t pos = prompt_len; pos < text.size(); ++pos) {
        context_window(text, pos, len, ctx);
        const Token next = text[pos];
        for (std::uint32_t n_o = 0; n_o < out.ordered.size(); ++n_o)
            out.ordered[n_o].add(codec.ordered(ctx, TransformPattern{out.ctx_len, n_o}), next);
        if (!with_sets) continue;
        std::size_t nd = 0;
        for (Token t : ctx)
            if (std::find(distinct, distinct + nd, t) == distinct + nd) distinct[nd++] = t;
        std::sort(distinct, distinct + nd);
        out.token_set.add(codec.pack(std::span<const Token>(distinct, nd)), next);
        for (std::size_t i = 0; i < nd; ++i) {
            out.singles.add(codec.pack(std::span<const Token>(&distinct[i], 1)), next);
            for (std::size_t j = i + 1; j < nd; ++j) {
                const Token pair[2] = {distinct[i], distinct[j]};
                out.pairs.add(codec.pack(pair), next);
            }
        }
    }
}

inline CorpusCounts empty_counts(std::size_t vocab_size, int ctx_len) {
    CorpusCounts c;
    c.ctx_len = ctx_len;
    c.ordered.assign(std::size_t{1} << ctx_len, FrequencyTable(vocab_size));
    c.token_set = FrequencyTable(vocab_size);
    c.singles = FrequencyTable(vocab_size);
    c.pairs = FrequencyTable(vocab_size);
    return c;
}

}  // namespace detail

/// Counts every ordered pattern (and, with `with_sets`, the WS token-set
/// families) in one pass. Shards are counted on `jobs` threads and merged in
/// shard order; the result does not depend on `jobs`.
inline CorpusCounts count_all(const Corpus& corpus, std::size_t vocab_size, int ctx_len, bool with_sets = true,
                              unsigned jobs = 1) {
    const KeyCodec codec(vocab_size, ctx_len);
    for (const auto& t : corpus.texts) check_tokens(t, vocab_size);
    const std::size_t n = corpus.texts.size();
    jobs = std::max(1U, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    std::vector<CorpusCounts> shards(jobs);
    auto work = [&](unsigned shard) {
        shards[shard] = detail::empty_counts(vocab_size, ctx_len);
        const std::size_t lo = n * shard / jobs, hi = n * (shard + 1) / jobs;
        for (std::size_t i = lo; i < hi; ++i)
            detail::count_text(corpus.texts[i], corpus.prompt_len, codec, with_sets, shards[shard]);
    };
    if (jobs == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned s = 0; s < jobs; ++s) pool.emplace_back(work, s);
        for (auto& th : pool) th.join();
    }
    for (unsigned s = 1; s < jobs; ++s) shards[0].merge(shards[s]);
    return std::move(shards[0]);
}

/// Counts of "token T follows transform(ctx, pattern)" over the corpus.
inline FrequencyTable count_corpus(const Corpus& corpus, TransformPattern pattern, std::size_t vocab_size) {
    pattern.validate();
    const KeyCodec codec(vocab_size, pattern.ctx_len);
    FrequencyTable table(vocab_size);
    const auto len = static_cast<std::size_t>(pattern.ctx_len);
    TokenSeq ctx(len);
    for (const auto& text : corpus.texts) {
        check_tokens(text, vocab_size);
        for (std::size_t pos = corpus.prompt_len; pos < text.size(); ++pos) {
            context_window(text, pos, len, ctx);
            table.add(codec.ordered(ctx, pattern), text[pos]);
        }
    }
    return table;
}

// ---------------------------------------------------------------- scoring

/// Clipped likelihood-ratio score in [0, 1]:
///   r = pw / pn;  min(r, c) / c if r >= 1, else 0.
/// pn == 0 < pw counts as r = +inf (score 1); pw == 0 scores 0.
inline double clipped_score(double pw, double pn, double clip) {
    if (pw <= 0.0) return 0.0;
    if (pn <= 0.0) return 1.0;
    const double r = pw / pn;
    return r >= 1.0 ? std::min(r, clip) / clip : 0.0;
}

enum class SealKind { Ordered, TokenSet, Singles, Pairs };

/// A forged seal: a key family plus the D_w / D_n tables it reads.
struct ForgedSeal {
    SealKind kind = SealKind::Ordered;
    TransformPattern pattern;
    KeyCodec codec;
    std::shared_ptr<const FrequencyTable> w;
    std::shared_ptr<const FrequencyTable> n;
    double clip = 2.0;
    std::uint64_t min_support = 1;

    std::size_t vocab_size() const { return w->vocab_size(); }

    std::uint64_t key_for(std::span<const Token> ctx) const {
        switch (kind) {
            case SealKind::Ordered: return codec.ordered(ctx, pattern);
            case SealKind::TokenSet: return codec.pack(token_set_key(ctx));
            default: throw InputError("key_for: subset seals are keyed explicitly");
        }
    }

    /// Writes the impression of `key` into `out`; all zeros when the key has
    /// fewer than min_support observations in D_w.
    void impression_for_key(std::uint64_t key, std::span<double> out) const {
        const auto rw = w->row(key);
        const std::uint64_t tw = rw.empty() ? 0 : w->total(key);
        if (tw == 0 || tw < min_support) {
            std::fill(out.begin(), out.end(), 0.0);
            return;
        }
        const auto rn = n->row(key);
        const double tn = rn.empty() ? 0.0 : static_cast<double>(n->total(key));
        for (std::size_t t = 0; t < out.size(); ++t) {
            const double pw = static_cast<double>(rw[t]) / static_cast<double>(tw);
            const double pn = rn.empty() ? 0.0 : static_cast<double>(rn[t]) / tn;
            out[t] = clipped_score(pw, pn, clip);
        }
    }

    double score(std::uint64_t key, Token t) const {
        Impression im(vocab_size());
        impression_for_key(key, im);
        return im[static_cast<std::size_t>(t)];
    }

    Impression impression(std::span<const Token> ctx) const {
        Impression im(vocab_size());
        impression_for_key(key_for(ctx), im);
        return im;
    }
};

struct SealOptions {
    double clip = 2.0;
    std::uint64_t min_support = 1;
};

inline ForgedSeal make_seal(SealKind kind, TransformPattern pattern, std::size_t vocab_size,
                            std::shared_ptr<const FrequencyTable> w, std::shared_ptr<const FrequencyTable> n,
                            const SealOptions& opts) {
    if (!(opts.clip > 0.0)) throw ConfigError("steal.clip must be > 0");
    ForgedSeal s;
    s.kind = kind;
    s.pattern = pattern;
    s.codec = KeyCodec(vocab_size, pattern.ctx_len);
    s.w = std::move(w);
    s.n = std::move(n);
    s.clip = opts.clip;
    s.min_support = opts.min_support;
    return s;
}

/// Shared, immutable view of one corpus's counts.
struct SharedCounts {
    int ctx_len = 0;
    std::vector<std::shared_ptr<const FrequencyTable>> ordered;
    std::shared_ptr<const FrequencyTable> token_set, singles, pairs;

    static SharedCounts from(CorpusCounts&& c) {
        SharedCounts s;
        s.ctx_len = c.ctx_len;
        for (auto& t : c.ordered) s.ordered.push_back(std::make_shared<const FrequencyTable>(std::move(t)));
        s.token_set = std::make_shared<const FrequencyTable>(std::move(c.token_set));
        s.singles = std::make_shared<const FrequencyTable>(std::move(c.singles));
        s.pairs = std::make_shared<const FrequencyTable>(std::move(c.pairs));
        return s;
    }
};

/// One seal per ordered pattern n_o in [0, 2^ctx_len).
inline std::vector<ForgedSeal> build_seals(const SharedCounts& dw, const SharedCounts& dn, std::size_t vocab_size,
                                           const SealOptions& opts) {
    if (dw.ctx_len != dn.ctx_len) throw InputError("build_seals: context length mismatch");
    std::vector<ForgedSeal> seals;
    for (std::uint32_t n_o = 0; n_o < dw.ordered.size(); ++n_o)
        seals.push_back(make_seal(SealKind::Ordered, TransformPattern{dw.ctx_len, n_o}, vocab_size, dw.ordered[n_o],
                                  dn.ordered[n_o], opts));
    return seals;
}

inline std::vector<ForgedSeal> build_seals(const Corpus& dw, const Corpus& dn, std::size_t vocab_size, int ctx_len,
                                           const SealOptions& opts) {
    if (dw.texts.empty() || dn.texts.empty()) throw InputError("build_seals: corpora must be non-empty");
    return build_seals(SharedCounts::from(count_all(dw, vocab_size, ctx_len, false)),
                       SharedCounts::from(count_all(dn, vocab_size, ctx_len, false)), vocab_size, opts);
}

// ---------------------------------------------------------------- WS baseline

/// The three WS perspectives: token-set ("Full"), per-token subsets for the
/// Partial search, and the context-free ("Empty") seal.
struct WsSeals {
    ForgedSeal full;
    ForgedSeal singles;
    ForgedSeal pairs;
    ForgedSeal empty;
};

inline WsSeals build_ws_seals(const SharedCounts& dw, const SharedCounts& dn, std::size_t vocab_size,
                              const SealOptions& opts) {
    const int len = dw.ctx_len;
    WsSeals ws;
    ws.full = make_seal(SealKind::TokenSet, TransformPattern{len, (1U << len) - 1}, vocab_size, dw.token_set,
                        dn.token_set, opts);
    ws.singles = make_seal(SealKind::Singles, TransformPattern{len, 0}, vocab_size, dw.singles, dn.singles, opts);
    ws.pairs = make_seal(SealKind::Pairs, TransformPattern{len, 0}, vocab_size, dw.pairs, dn.pairs, opts);
    ws.empty = make_seal(SealKind::Ordered, TransformPattern{len, 0}, vocab_size, dw.ordered[0], dn.ordered[0], opts);
    return ws;
}

inline ForgedSeal ws_full_seal(const Corpus& dw, const Corpus& dn, std::size_t vocab_size, int ctx_len,
                               const SealOptions& opts) {
    if (dw.texts.empty() || dn.texts.empty()) throw InputError("ws_full_seal: corpora must be non-empty");
    auto w = SharedCounts::from(count_all(dw, vocab_size, ctx_len, true));
    auto n = SharedCounts::from(count_all(dn, vocab_size, ctx_len, true));
    return build_ws_seals(w, n, vocab_size, opts).full;
}

inline ForgedSeal ws_empty_seal(const Corpus& dw, const Corpus& dn, std::size_t vocab_size, int ctx_len,
                                const SealOptions& opts) {
    if (dw.texts.empty() || dn.texts.empty()) throw InputError("ws_empty_seal: corpora must be non-empty");
    FrequencyTable w = count_corpus(dw, TransformPattern{ctx_len, 0}, vocab_size);
    FrequencyTable n = count_corpus(dn, TransformPattern{ctx_len, 0}, vocab_size);
    return make_seal(SealKind::Ordered, TransformPattern{ctx_len, 0}, vocab_size,
                     std::make_shared<const FrequencyTable>(std::move(w)),
                     std::make_shared<const FrequencyTable>(std::move(n)), opts);
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

/// Index i with cos(s_i, s_ij) > cos(s_j, s_ij) for every j != i. When no
/// unique index qualifies, the largest mean margin wins, lowest index on ties.
/// `pair(i, j)` returns s_ij for i < j.
template <typename PairFn>
std::size_t partial_choice(const std::vector<Impression>& singles, PairFn&& pair, bool* unique = nullptr) {
    const std::size_t k = singles.size();
    if (unique) *unique = k == 1;
    if (k <= 1) return 0;
    std::vector<double> margin(k, 0.0);
    std::vector<bool> wins(k, true);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            const Impression& sij = pair(i, j);
            const double ci = cosine(singles[i], sij), cj = cosine(singles[j], sij);
            if (!(ci > cj)) wins[i] = false;
            if (!(cj > ci)) wins[j] = false;
            margin[i] += ci - cj;
            margin[j] += cj - ci;
        }
    }
    std::size_t winners = 0, first = 0;
    for (std::size_t i = 0; i < k; ++i)
        if (wins[i] && winners++ == 0) first = i;
    if (winners == 1) {
        if (unique) *unique = true;
        return first;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < k; ++i)
        if (margin[i] > margin[best]) best = i;
    return best;
}

struct PartialResult {
    Impression impression;
    std::size_t position = 0;  // index into ctx of the chosen token
    bool unique = false;
};

/// WS "Partial" impression for one context: S(., {T_i}) for the selected T_i.
inline PartialResult ws_partial_seal(const WsSeals& ws, std::span<const Token> ctx) {
    const std::size_t v = ws.singles.vocab_size();
    std::vector<Token> tokens;
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < ctx.size(); ++i) {
        if (std::find(tokens.begin(), tokens.end(), ctx[i]) == tokens.end()) {
            tokens.push_back(ctx[i]);
            positions.push_back(i);
        }
    }
    std::vector<Impression> singles(tokens.size(), Impression(v));
    for (std::size_t i = 0; i < tokens.size(); ++i)
        ws.singles.impression_for_key(ws.singles.codec.pack(std::span<const Token>(&tokens[i], 1)), singles[i]);
    std::vector<Impression> pair_cache(tokens.size() * tokens.size());
    auto pair = [&](std::size_t i, std::size_t j) -> const Impression& {
        Impression& slot = pair_cache[i * tokens.size() + j];
        if (slot.empty()) {
            slot.resize(v);
            Token p[2] = {std::min(tokens[i], tokens[j]), std::max(tokens[i], tokens[j])};
            ws.pairs.impression_for_key(ws.pairs.codec.pack(p), slot);
        }
        return slot;
    };
    PartialResult r;
    const std::size_t pick = partial_choice(singles, pair, &r.unique);
    r.position = positions[pick];
    r.impression = std::move(singles[pick]);
    return r;
}

/// Weighted mean (w1 s_full + w2 s_partial + w3 s_empty) / (w1 + w2 + w3).
inline Impression ws_combine(std::span<const Impression> parts, std::span<const double> weights) {
    if (parts.size() != 3 || weights.size() != 3) throw InputError("ws_combine expects three impressions");
    double wsum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw ConfigError("WS weights must be non-negative");
        wsum += w;
    }
    if (wsum == 0.0) throw ConfigError("WS weights must not all be zero");
    Impression out(parts[0].size(), 0.0);
    for (std::size_t k = 0; k < 3; ++k) {
        if (weights[k] == 0.0) continue;
        for (std::size_t t = 0; t < out.size(); ++t) out[t] += weights[k] * parts[k][t];
    }
    for (double& x : out) x /= wsum;
    return out;
}

}  // namespace wmsteal
