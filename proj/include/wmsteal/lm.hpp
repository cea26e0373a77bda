#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <variant>

#include "common.hpp"
#include "rng.hpp"

namespace wmsteal {

/// Serializable description of a toy language model.
struct LmSpec {
    std::uint64_t seed = 1;
    std::size_t vocab_size = 64;
    int order = 2;
    // Shape of the model: Zipf backbone slope, per-context noise shared by
    // every model of the same language, and the model's own deviation.
    double zipf_exponent = 1.0;
    double noise_scale = 1.5;
    std::uint64_t language_seed = 0x1A46;
    double model_noise = 1.0;

    void validate() const {
        if (vocab_size < 4) throw ConfigError("lm.vocab_size must be >= 4");
        if (vocab_size > 256) throw ConfigError("lm.vocab_size must be <= 256");
        if (order != 2) throw ConfigError("lm.order must be 2");
        if (!(zipf_exponent >= 0.0) || !(noise_scale >= 0.0) || !(model_noise >= 0.0))
            throw ConfigError("lm shape parameters must be non-negative");
    }

    bool operator==(const LmSpec&) const = default;
};

/// Order-2 Markov language model with a Zipf unigram backbone plus seeded
/// per-context Gaussian noise. Immutable after construction.
///
/// logit(T | a, b) = -zipf_exponent * ln(T) + noise_scale * G + model_noise * N   for T >= 1
/// logit(BOS | a, b) = kBosLogit
/// G for context (a, b) is drawn from RngStream(language_seed).split(a * V + b)
/// and N from RngStream(seed).split(a * V + b), so models of one language
/// agree up to their own noise.
class ToyLM {
  public:
    static constexpr double kBosLogit = -1e30;

    explicit ToyLM(const LmSpec& spec) : spec_(spec) {
        spec_.validate();
        const std::size_t v = spec_.vocab_size;
        table_.resize(v * v * v);
        const RngStream root(spec_.seed), language(spec_.language_seed);
        for (std::size_t ctx = 0; ctx < v * v; ++ctx) {
            RngStream own = root.split(static_cast<std::uint64_t>(ctx));
            RngStream shared = language.split(static_cast<std::uint64_t>(ctx));
            double* row = &table_[ctx * v];
            row[kBos] = kBosLogit;
            for (std::size_t t = 1; t < v; ++t) {
                const double g = shared.normal();
                row[t] = -spec_.zipf_exponent * std::log(static_cast<double>(t)) + spec_.noise_scale * g +
                         spec_.model_noise * own.normal();
            }
        }
    }

    /// Model whose logits are all zero (BOS included). Reference point for tests.
    static ToyLM uniform(std::size_t vocab_size) {
        ToyLM lm;
        lm.spec_.vocab_size = vocab_size;
        lm.spec_.seed = 0;
        lm.spec_.zipf_exponent = 0.0;
        lm.spec_.noise_scale = 0.0;
        lm.spec_.model_noise = 0.0;
        lm.table_.assign(vocab_size * vocab_size * vocab_size, 0.0);
        return lm;
    }

    const LmSpec& spec() const { return spec_; }
    std::size_t vocab_size() const { return spec_.vocab_size; }

    std::span<const double> logits_row(Token prev2, Token prev1) const {
        const std::size_t v = spec_.vocab_size;
        const std::size_t ctx = static_cast<std::size_t>(prev2) * v + static_cast<std::size_t>(prev1);
        return {&table_[ctx * v], v};
    }

    /// Logits for the next token after `context` (only its last two tokens matter).
    LogitVector logits(std::span<const Token> context) const {
        check_tokens(context, spec_.vocab_size);
        Token ctx[2];
        context_window(context, context.size(), 2, ctx);
        auto row = logits_row(ctx[0], ctx[1]);
        return {row.begin(), row.end()};
    }

  private:
    ToyLM() = default;

    LmSpec spec_;
    std::vector<double> table_;
};

enum class Strategy { Multinomial, Greedy };

struct Sampling {
    Strategy strategy = Strategy::Multinomial;
    double temperature = 1.0;
};

/// Lowest id wins ties.
inline Token argmax(std::span<const double> xs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (xs[i] > xs[best]) best = i;
    return static_cast<Token>(best);
}

/// Inverse-CDF draw from a probability vector. Zero-mass entries are never returned.
inline Token sample_from(std::span<const double> probs, RngStream& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        cum += probs[i];
        last = i;
        if (u < cum) return static_cast<Token>(i);
    }
    return static_cast<Token>(last);  // rounding shortfall
}

inline ProbDist tempered_softmax(std::span<const double> logits, double temperature) {
    if (temperature == 1.0) return softmax(logits);
    LogitVector scaled(logits.begin(), logits.end());
    for (double& v : scaled) v /= temperature;
    return softmax(scaled);
}

inline Token decode(std::span<const double> logits, const Sampling& sampling, RngStream& rng) {
    if (!(sampling.temperature > 0.0)) throw ConfigError("temperature must be > 0");
    for (double v : logits)
        if (!std::isfinite(v)) throw NumericError("non-finite logit");
    if (sampling.strategy == Strategy::Greedy) return argmax(logits);
    const ProbDist p = tempered_softmax(logits, sampling.temperature);
    return sample_from(p, rng);
}

// Per-step watermark/attack intervention. A hook sees the running sequence
// (prompt + generated so far), the raw logits and the tempered distribution,
// and may replace the logits, replace the distribution, or pick the token.
struct ModifiedLogits {
    LogitVector logits;
};
struct ModifiedDist {
    ProbDist probs;
};
struct ChosenToken {
    Token token;
};
using StepOutcome = std::variant<std::monostate, ModifiedLogits, ModifiedDist, ChosenToken>;

struct StepInput {
    std::span<const Token> history;
    std::span<const double> logits;
    std::span<const double> probs;
};

using StepHook = std::function<StepOutcome(const StepInput&, RngStream&)>;

/// Autoregressive generation of exactly `n_tokens` new tokens after `prompt`.
inline TokenSeq generate(const ToyLM& lm, std::span<const Token> prompt, std::size_t n_tokens,
                         const StepHook& hook, RngStream& rng, const Sampling& sampling = {}) {
    if (n_tokens == 0) throw InputError("generate: n_tokens must be >= 1");
    check_tokens(prompt, lm.vocab_size());
    TokenSeq seq(prompt.begin(), prompt.end());
    seq.reserve(prompt.size() + n_tokens);
    for (std::size_t step = 0; step < n_tokens; ++step) {
        Token ctx[2];
        context_window(seq, seq.size(), 2, ctx);
        const auto logits = lm.logits_row(ctx[0], ctx[1]);
        Token next;
        if (!hook) {
            next = decode(logits, sampling, rng);
        } else {
            const ProbDist probs = tempered_softmax(logits, sampling.temperature);
            const StepOutcome out = hook(StepInput{seq, logits, probs}, rng);
            if (auto* ml = std::get_if<ModifiedLogits>(&out)) {
                next = decode(ml->logits, sampling, rng);
            } else if (auto* md = std::get_if<ModifiedDist>(&out)) {
                next = sampling.strategy == Strategy::Greedy ? argmax(md->probs)
                                                             : sample_from(md->probs, rng);
            } else if (auto* ct = std::get_if<ChosenToken>(&out)) {
                next = ct->token;
            } else {
                next = decode(logits, sampling, rng);
            }
        }
        seq.push_back(next);
    }
    return {seq.begin() + static_cast<std::ptrdiff_t>(prompt.size()), seq.end()};
}

inline double log_prob(std::span<const double> logits, Token t) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : logits) hi = std::max(hi, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - hi);
    return logits[static_cast<std::size_t>(t)] - hi - std::log(sum);
}

/// exp(mean NLL). Without a prefix the first token has no context and is not
/// scored; with a prefix every token of `text` is scored.
inline double perplexity(const ToyLM& lm, std::span<const Token> text,
                         std::span<const Token> prefix = {}) {
    if (text.size() < (prefix.empty() ? 2u : 1u))
        throw InputError("perplexity needs at least two tokens");
    check_tokens(text, lm.vocab_size());
    check_tokens(prefix, lm.vocab_size());
    TokenSeq seq(prefix.begin(), prefix.end());
    seq.insert(seq.end(), text.begin(), text.end());
    const std::size_t first = prefix.empty() ? 1 : prefix.size();
    double nll = 0.0;
    for (std::size_t pos = first; pos < seq.size(); ++pos) {
        Token ctx[2];
        context_window(seq, pos, 2, ctx);
        nll -= log_prob(lm.logits_row(ctx[0], ctx[1]), seq[pos]);
    }
    return std::exp(nll / static_cast<double>(seq.size() - first));
}

}  // namespace wmsteal
