#pragma once

#include <numeric>
#include <string_view>

#include "common.hpp"
#include "lm.hpp"
#include "rng.hpp"

namespace wmsteal {

enum class Scheme { KGW, SynthID, Unbiased };
enum class HashScheme { Left, Min, Max };

inline std::string_view to_string(Scheme s) {
    switch (s) {
        case Scheme::KGW: return "KGW";
        case Scheme::SynthID: return "SynthID";
        case Scheme::Unbiased: return "Unbiased";
    }
    return "?";
}

inline std::string_view to_string(HashScheme h) {
    switch (h) {
        case HashScheme::Left: return "Left";
        case HashScheme::Min: return "Min";
        case HashScheme::Max: return "Max";
    }
    return "?";
}

inline Scheme parse_scheme(std::string_view s) {
    if (s == "KGW") return Scheme::KGW;
    if (s == "SynthID") return Scheme::SynthID;
    if (s == "Unbiased") return Scheme::Unbiased;
    throw ConfigError("unknown watermark scheme '" + std::string(s) + "'");
}

inline HashScheme parse_hash_scheme(std::string_view s) {
    if (s == "Left") return HashScheme::Left;
    if (s == "Min") return HashScheme::Min;
    if (s == "Max") return HashScheme::Max;
    throw ConfigError("unknown hash scheme '" + std::string(s) + "'");
}

struct SecretKey {
    std::uint64_t value = 0;
};

struct Code {
    std::uint64_t value = 0;
    bool operator==(const Code&) const = default;
};

struct WatermarkParams {
    Scheme scheme = Scheme::KGW;
    int ctx_len = 3;
    HashScheme hash_scheme = HashScheme::Left;
    double gamma = 0.5;
    double delta = 2.0;
    int m = 8;

    void validate(std::size_t vocab_size) const {
        if (ctx_len < 1) throw ConfigError("watermark ctx_len must be >= 1");
        if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("watermark gamma must lie in (0,1)");
        if (gamma * static_cast<double>(vocab_size) < 1.0)
            throw ConfigError("watermark gamma * |V| must be >= 1");
        if (!(delta >= 0.0)) throw ConfigError("watermark delta must be >= 0");
        if (m < 1 || m > 20) throw ConfigError("watermark m must lie in [1,20]");
    }

    std::size_t green_count(std::size_t vocab_size) const {
        return static_cast<std::size_t>(std::lround(gamma * static_cast<double>(vocab_size)));
    }
};

namespace detail {
inline constexpr std::uint64_t kSelectSalt = 0x5E1EC7A5A17ULL;
inline constexpr std::uint64_t kSynthSalt = 0x5F17D1D5A17ULL;
}  // namespace detail

/// Hash used by Min/Max schemes to rank context tokens.
inline std::uint64_t token_hash(Token t, SecretKey key) {
    return mix(static_cast<std::uint64_t>(t), key.value ^ detail::kSelectSalt);
}

/// The context token the seal activates. Equal hashes keep the leftmost token.
inline Token activated_token(const WatermarkParams& params, SecretKey key, std::span<const Token> ctx) {
    if (params.hash_scheme == HashScheme::Left) return ctx[0];
    std::size_t best = 0;
    std::uint64_t best_hash = token_hash(ctx[0], key);
    for (std::size_t i = 1; i < ctx.size(); ++i) {
        const std::uint64_t h = token_hash(ctx[i], key);
        const bool better = params.hash_scheme == HashScheme::Min ? h < best_hash : h > best_hash;
        if (better) {
            best = i;
            best_hash = h;
        }
    }
    return ctx[best];
}

inline Code code_for_token(Token selected, SecretKey key) {
    return Code{mix(static_cast<std::uint64_t>(selected), key.value)};
}

inline Code context_code(const WatermarkParams& params, SecretKey key, std::span<const Token> ctx) {
    if (ctx.size() != static_cast<std::size_t>(params.ctx_len))
        throw InputError("context length does not match watermark ctx_len");
    return code_for_token(activated_token(params, key, ctx), key);
}

/// Fisher-Yates permutation of 0..V-1 driven by RngStream(code):
/// for i = V-1 down to 1, swap(perm[i], perm[next() % (i + 1)]).
inline std::vector<Token> vocab_permutation(Code code, std::size_t vocab_size) {
    std::vector<Token> perm(vocab_size);
    std::iota(perm.begin(), perm.end(), Token{0});
    RngStream rng(code.value);
    for (std::size_t i = vocab_size - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i + 1));
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

// ---------------------------------------------------------------- KGW

/// delta on the first round(gamma*|V|) tokens of the code's permutation, 0 elsewhere.
inline Impression kgw_impression(Code code, const WatermarkParams& params, std::size_t vocab_size) {
    const auto perm = vocab_permutation(code, vocab_size);
    Impression im(vocab_size, 0.0);
    const std::size_t greens = params.green_count(vocab_size);
    for (std::size_t i = 0; i < greens; ++i) im[static_cast<std::size_t>(perm[i])] = params.delta;
    return im;
}

inline ProbDist kgw_embed(std::span<const double> logits, std::span<const double> impression) {
    if (logits.size() != impression.size()) throw InputError("kgw_embed: dimension mismatch");
    LogitVector shifted(logits.begin(), logits.end());
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += impression[i];
    return softmax(shifted);
}

inline double kgw_z(double n_green, double scored, double gamma) {
    return (n_green - gamma * scored) / std::sqrt(scored * gamma * (1.0 - gamma));
}

namespace detail {
inline TokenSeq joined(std::span<const Token> prefix, std::span<const Token> text) {
    TokenSeq seq(prefix.begin(), prefix.end());
    seq.insert(seq.end(), text.begin(), text.end());
    return seq;
}

inline void check_detectable(std::span<const Token> text, std::size_t vocab_size) {
    if (text.size() < 2) throw InputError("detection needs at least two tokens");
    check_tokens(text, vocab_size);
}
}  // namespace detail

/// z-statistic over every position of `text`; contexts come from prefix + text,
/// BOS-padded at the start.
inline double kgw_detect(std::span<const Token> text, const WatermarkParams& params, SecretKey key,
                         std::size_t vocab_size, std::span<const Token> prefix = {}) {
    detail::check_detectable(text, vocab_size);
    const TokenSeq seq = detail::joined(prefix, text);
    const auto ctx_len = static_cast<std::size_t>(params.ctx_len);
    const std::size_t green_size = params.green_count(vocab_size);
    std::size_t greens = 0;
    for (std::size_t pos = prefix.size(); pos < seq.size(); ++pos) {
        const auto perm = vocab_permutation(context_code(params, key, context_window(seq, pos, ctx_len)), vocab_size);
        const auto last = perm.begin() + static_cast<std::ptrdiff_t>(green_size);
        if (std::find(perm.begin(), last, seq[pos]) != last) ++greens;
    }
    return kgw_z(static_cast<double>(greens), static_cast<double>(text.size()), params.gamma);
}

// ---------------------------------------------------------------- SynthID

/// m binary score vectors over V, row-major (generator, token).
struct GValues {
    std::size_t m = 0;
    std::size_t vocab_size = 0;
    std::vector<std::uint8_t> bits;

    std::uint8_t at(std::size_t layer, std::size_t token) const { return bits[layer * vocab_size + token]; }
};

inline std::uint64_t synthid_subkey(SecretKey key, std::size_t layer) {
    return mix(static_cast<std::uint64_t>(layer), key.value ^ detail::kSynthSalt);
}

/// g_i(T) = mix(T, mix(code, subkey_i)) & 1.
inline GValues synthid_gvalues_for_code(Code code, SecretKey key, int m, std::size_t vocab_size) {
    GValues g;
    g.m = static_cast<std::size_t>(m);
    g.vocab_size = vocab_size;
    g.bits.resize(g.m * vocab_size);
    for (std::size_t i = 0; i < g.m; ++i) {
        const std::uint64_t seed = mix(code.value, synthid_subkey(key, i));
        for (std::size_t t = 0; t < vocab_size; ++t)
            g.bits[i * vocab_size + t] = static_cast<std::uint8_t>(mix(t, seed) & 1U);
    }
    return g;
}

inline GValues synthid_gvalues(std::span<const Token> ctx, SecretKey key, const WatermarkParams& params,
                               std::size_t vocab_size) {
    return synthid_gvalues_for_code(context_code(params, key, ctx), key, params.m, vocab_size);
}

/// Exact winner distribution of an m-layer binary tournament with fair-coin ties:
/// p_{r+1}(T) = 2 p_r(T) [ sum_{g(U)<g(T)} p_r(U) + 1/2 sum_{g(U)=g(T)} p_r(U) ].
inline ProbDist synthid_winner_distribution(std::span<const double> probs, const GValues& g) {
    ProbDist p(probs.begin(), probs.end());
    for (std::size_t layer = 0; layer < g.m; ++layer) {
        double ones = 0.0;
        for (std::size_t t = 0; t < p.size(); ++t)
            if (g.at(layer, t)) ones += p[t];
        const double up = 2.0 - ones;   // g = 1: beats every 0, ties the 1s
        const double down = 1.0 - ones;  // g = 0: ties the 0s only
        for (std::size_t t = 0; t < p.size(); ++t) p[t] *= g.at(layer, t) ? up : down;
    }
    return p;
}

inline Token synthid_sample(std::span<const double> probs, const GValues& g, RngStream& rng) {
    return sample_from(synthid_winner_distribution(probs, g), rng);
}

/// Mean g-value over all scored tokens and generators; 0.5 under the null.
inline double synthid_detect(std::span<const Token> text, const WatermarkParams& params, SecretKey key,
                             std::size_t vocab_size, std::span<const Token> prefix = {}) {
    detail::check_detectable(text, vocab_size);
    const TokenSeq seq = detail::joined(prefix, text);
    const auto ctx_len = static_cast<std::size_t>(params.ctx_len);
    double sum = 0.0;
    for (std::size_t pos = prefix.size(); pos < seq.size(); ++pos) {
        const GValues g = synthid_gvalues(context_window(seq, pos, ctx_len), key, params, vocab_size);
        for (std::size_t i = 0; i < g.m; ++i) sum += g.at(i, static_cast<std::size_t>(seq[pos]));
    }
    return sum / (static_cast<double>(text.size()) * params.m);
}

// ---------------------------------------------------------------- Unbiased

/// Cumulative reweighting along `order`: with F_i the running mass,
/// 0 while F_i < 1/2, 2(F_i - 1/2) at the crossing, 2(F_i - F_{i-1}) after.
inline ProbDist unbiased_reweight_ordered(std::span<const double> probs, std::span<const Token> order) {
    ProbDist out(probs.size(), 0.0);
    double prev = 0.0;
    for (Token o : order) {
        const auto idx = static_cast<std::size_t>(o);
        const double cur = prev + probs[idx];
        if (cur < 0.5)
            out[idx] = 0.0;
        else if (prev < 0.5)
            out[idx] = 2.0 * (cur - 0.5);
        else
            out[idx] = 2.0 * (cur - prev);
        prev = cur;
    }
    return out;
}

inline ProbDist unbiased_reweight(std::span<const double> probs, Code code) {
    return unbiased_reweight_ordered(probs, vocab_permutation(code, probs.size()));
}

/// Sum over positions of p^w(T) - p(T), where p is the generating model's
/// distribution and p^w its reweighting under the recomputed code.
inline double unbiased_detect(std::span<const Token> text, const WatermarkParams& params, SecretKey key,
                              const ToyLM& lm, std::span<const Token> prefix = {}) {
    detail::check_detectable(text, lm.vocab_size());
    const TokenSeq seq = detail::joined(prefix, text);
    const auto ctx_len = static_cast<std::size_t>(params.ctx_len);
    double wcs = 0.0;
    for (std::size_t pos = prefix.size(); pos < seq.size(); ++pos) {
        Token lm_ctx[2];
        context_window(seq, pos, 2, lm_ctx);
        const ProbDist p = softmax(lm.logits_row(lm_ctx[0], lm_ctx[1]));
        const ProbDist pw = unbiased_reweight(p, context_code(params, key, context_window(seq, pos, ctx_len)));
        const auto t = static_cast<std::size_t>(seq[pos]);
        wcs += pw[t] - p[t];
    }
    return wcs;
}

// ---------------------------------------------------------------- victim

/// A keyed victim watermark. Every impression depends on the context only
/// through the activated token, so green lists, g-values and permutations are
/// precomputed per token. Immutable after construction; the hook borrows `this`.
class Watermark {
  public:
    Watermark(const WatermarkParams& params, SecretKey key, std::size_t vocab_size)
        : params_(params), key_(key), vocab_(vocab_size) {
        params_.validate(vocab_);
        const std::size_t greens = params_.green_count(vocab_);
        green_.assign(vocab_ * vocab_, 0);
        perms_.resize(vocab_ * vocab_);
        if (params_.scheme == Scheme::SynthID) gbits_.resize(vocab_ * params_.m * vocab_);
        for (std::size_t sel = 0; sel < vocab_; ++sel) {
            const Code code = code_for_token(static_cast<Token>(sel), key_);
            const auto perm = vocab_permutation(code, vocab_);
            std::copy(perm.begin(), perm.end(), perms_.begin() + static_cast<std::ptrdiff_t>(sel * vocab_));
            for (std::size_t i = 0; i < greens; ++i)
                green_[sel * vocab_ + static_cast<std::size_t>(perm[i])] = 1;
            if (params_.scheme == Scheme::SynthID) {
                const GValues g = synthid_gvalues_for_code(code, key_, params_.m, vocab_);
                std::copy(g.bits.begin(), g.bits.end(),
                          gbits_.begin() + static_cast<std::ptrdiff_t>(sel * g.bits.size()));
            }
        }
    }

    const WatermarkParams& params() const { return params_; }
    SecretKey key() const { return key_; }
    std::size_t vocab_size() const { return vocab_; }

    Token activated(std::span<const Token> history, std::size_t pos) const {
        Token buf[32];
        const auto len = static_cast<std::size_t>(params_.ctx_len);
        if (len > 32) {
            return activated_token(params_, key_, context_window(history, pos, len));
        }
        context_window(history, pos, len, std::span<Token>(buf, len));
        return activated_token(params_, key_, std::span<const Token>(buf, len));
    }

    bool is_green(Token selected, Token t) const {
        return green_[static_cast<std::size_t>(selected) * vocab_ + static_cast<std::size_t>(t)] != 0;
    }

    GValues gvalues(Token selected) const {
        GValues g;
        g.m = static_cast<std::size_t>(params_.m);
        g.vocab_size = vocab_;
        const std::size_t stride = g.m * vocab_;
        const auto first = gbits_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(selected) * stride);
        g.bits.assign(first, first + static_cast<std::ptrdiff_t>(stride));
        return g;
    }

    std::span<const Token> permutation(Token selected) const {
        return {&perms_[static_cast<std::size_t>(selected) * vocab_], vocab_};
    }

    /// Embedding hook for `generate`.
    StepHook hook() const {
        return [this](const StepInput& in, RngStream& rng) -> StepOutcome {
            const Token sel = activated(in.history, in.history.size());
            switch (params_.scheme) {
                case Scheme::KGW: {
                    LogitVector l(in.logits.begin(), in.logits.end());
                    for (std::size_t t = 0; t < vocab_; ++t)
                        if (is_green(sel, static_cast<Token>(t))) l[t] += params_.delta;
                    return ModifiedLogits{std::move(l)};
                }
                case Scheme::SynthID:
                    return ChosenToken{synthid_sample(in.probs, gvalues(sel), rng)};
                case Scheme::Unbiased:
                    return ModifiedDist{unbiased_reweight_ordered(in.probs, permutation(sel))};
            }
            return std::monostate{};
        };
    }

    /// Watermark confidence score of `text` (continuing `prefix`). Unbiased needs
    /// the generating model.
    double detect(std::span<const Token> text, std::span<const Token> prefix = {},
                  const ToyLM* lm = nullptr) const {
        detail::check_detectable(text, vocab_);
        const TokenSeq seq = detail::joined(prefix, text);
        const double n = static_cast<double>(text.size());
        switch (params_.scheme) {
            case Scheme::KGW: {
                std::size_t greens = 0;
                for (std::size_t pos = prefix.size(); pos < seq.size(); ++pos)
                    greens += is_green(activated(seq, pos), seq[pos]);
                return kgw_z(static_cast<double>(greens), n, params_.gamma);
            }
            case Scheme::SynthID: {
                const std::size_t stride = static_cast<std::size_t>(params_.m) * vocab_;
                double sum = 0.0;
                for (std::size_t pos = prefix.size(); pos < seq.size(); ++pos) {
                    const std::size_t base = static_cast<std::size_t>(activated(seq, pos)) * stride;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(params_.m); ++i)
                        sum += gbits_[base + i * vocab_ + static_cast<std::size_t>(seq[pos])];
                }
                return sum / (n * params_.m);
            }
            case Scheme::Unbiased: {
                if (lm == nullptr) throw InputError("Unbiased detection needs the generating model");
                double wcs = 0.0;
                for (std::size_t pos = prefix.size(); pos < seq.size(); ++pos) {
                    Token lm_ctx[2];
                    context_window(seq, pos, 2, lm_ctx);
                    const ProbDist p = softmax(lm->logits_row(lm_ctx[0], lm_ctx[1]));
                    const ProbDist pw = unbiased_reweight_ordered(p, permutation(activated(seq, pos)));
                    const auto t = static_cast<std::size_t>(seq[pos]);
                    wcs += pw[t] - p[t];
                }
                return wcs;
            }
        }
        return 0.0;
    }

  private:
    WatermarkParams params_;
    SecretKey key_;
    std::size_t vocab_;
    std::vector<std::uint8_t> green_;
    std::vector<Token> perms_;
    std::vector<std::uint8_t> gbits_;
};

}  // namespace wmsteal
