#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wmsteal {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

/// Reserved beginning-of-sequence id. Used to pad short contexts; never sampled.
inline constexpr Token kBos = 0;

using LogitVector = std::vector<double>;
using ProbDist = std::vector<double>;
using Impression = std::vector<double>;

// Error taxonomy. The CLI maps these onto exit codes.
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct NumericError : std::domain_error {
    using std::domain_error::domain_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ProvenanceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The `len` tokens preceding `pos` in `seq`, left-padded with BOS.
inline void context_window(std::span<const Token> seq, std::size_t pos, std::size_t len,
                           std::span<Token> out) {
    for (std::size_t i = 0; i < len; ++i) {
        // slot i holds seq[pos - len + i]
        const std::size_t back = len - i;
        out[i] = pos >= back ? seq[pos - back] : kBos;
    }
}

inline TokenSeq context_window(std::span<const Token> seq, std::size_t pos, std::size_t len) {
    TokenSeq out(len);
    context_window(seq, pos, len, out);
    return out;
}

inline void check_tokens(std::span<const Token> seq, std::size_t vocab_size) {
    for (Token t : seq) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
            throw InputError("token id " + std::to_string(t) + " outside vocabulary of size " +
                             std::to_string(vocab_size));
        }
    }
}

/// Numerically stable softmax. Throws NumericError on non-finite input.
inline ProbDist softmax(std::span<const double> logits) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : logits) {
        if (!std::isfinite(v)) throw NumericError("non-finite logit");
        hi = std::max(hi, v);
    }
    ProbDist p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - hi);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

inline double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

}  // namespace wmsteal
