#pragma once

#include <array>
#include <optional>

#include "adaptive.hpp"
#include "lm.hpp"
#include "steal_stats.hpp"

namespace wmsteal {

enum class Method { AS, WS, AVE, SingleSeal, None };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::AS: return "AS";
        case Method::WS: return "WS";
        case Method::AVE: return "AVE";
        case Method::SingleSeal: return "single";
        case Method::None: return "none";
    }
    return "?";
}

inline Method parse_method(std::string_view s) {
    if (s == "AS") return Method::AS;
    if (s == "WS") return Method::WS;
    if (s == "AVE") return Method::AVE;
    if (s == "single") return Method::SingleSeal;
    if (s == "none") return Method::None;
    throw ConfigError("unknown attack method '" + std::string(s) + "'");
}

struct AttackParams {
    Method method = Method::AS;
    std::uint32_t single_seal = 0;  // n_o for Method::SingleSeal
    double delta_att = 4.0;
    std::size_t gen_len = 200;
    double keep_prob = 0.5;  // scrubbing fidelity rho
    std::array<double, 3> ws_weights{1.0, 0.0, 0.0};
    SelectionParams selection;
    Sampling sampling;
};

/// Everything an attacker forges from D_w and D_n.
struct Arsenal {
    int ctx_len = 3;
    std::size_t vocab_size = 0;
    std::vector<ForgedSeal> seals;  // indexed by n_o
    std::optional<WsSeals> ws;
    WcTable wc;
};

inline Arsenal forge_arsenal(const SharedCounts& dw, const SharedCounts& dn, std::size_t vocab_size,
                             const SealOptions& opts) {
    Arsenal a;
    a.ctx_len = dw.ctx_len;
    a.vocab_size = vocab_size;
    a.seals = build_seals(dw, dn, vocab_size, opts);
    if (dw.token_set && dw.token_set->num_keys() > 0) a.ws = build_ws_seals(dw, dn, vocab_size, opts);
    a.wc = wc_from_counts(dw);
    return a;
}

/// l + delta_att * im.
inline LogitVector modify_logits(std::span<const double> logits, std::span<const double> impression,
                                 double delta_att) {
    if (logits.size() != impression.size()) throw InputError("modify_logits: dimension mismatch");
    LogitVector out(logits.begin(), logits.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += delta_att * impression[i];
    return out;
}

/// The forged impression a method applies for `ctx` (already cut to the
/// arsenal's context length). AS also records its selection in `trace`.
inline Impression attack_impression(const Arsenal& arsenal, const AttackParams& params, std::span<const Token> ctx,
                                    std::span<const double> p_att, SelectionTrace* trace = nullptr) {
    const std::size_t v = arsenal.vocab_size;
    switch (params.method) {
        case Method::None: return Impression(v, 0.0);
        case Method::SingleSeal: {
            if (params.single_seal >= arsenal.seals.size()) throw ConfigError("single_seal index out of range");
            return arsenal.seals[params.single_seal].impression(ctx);
        }
        case Method::AVE: {
            Impression sum(v, 0.0), im(v);
            for (const auto& s : arsenal.seals) {
                s.impression_for_key(s.key_for(ctx), im);
                for (std::size_t t = 0; t < v; ++t) sum[t] += im[t];
            }
            for (double& x : sum) x /= static_cast<double>(arsenal.seals.size());
            return sum;
        }
        case Method::WS: {
            if (!arsenal.ws) throw ConfigError("WS method needs the token-set seals");
            const auto& w = params.ws_weights;
            std::array<Impression, 3> parts{Impression(v, 0.0), Impression(v, 0.0), Impression(v, 0.0)};
            if (w[0] > 0.0) parts[0] = arsenal.ws->full.impression(ctx);
            if (w[1] > 0.0) parts[1] = ws_partial_seal(*arsenal.ws, ctx).impression;
            if (w[2] > 0.0) parts[2] = arsenal.ws->empty.impression(ctx);
            return ws_combine(parts, w);
        }
        case Method::AS: {
            Selection sel = select_seal(ctx, p_att, arsenal.seals, arsenal.wc, params.selection);
            if (trace) trace->push_back(std::move(sel.step));
            return std::move(sel.impression);
        }
    }
    return Impression(v, 0.0);
}

namespace detail {
inline void check_attack(const Arsenal& arsenal, const AttackParams& params, const ToyLM& lm) {
    if (arsenal.vocab_size != lm.vocab_size()) throw ConfigError("attacker vocabulary differs from forged seals");
    if (params.gen_len == 0) throw ConfigError("attack.gen_len must be >= 1");
    params.selection.validate();
}
}  // namespace detail

struct SpoofOutput {
    TokenSeq text;
    SelectionTrace trace;
};

/// Spoofing: generate from the attacker model with l + delta_att * im at every step.
inline SpoofOutput spoof_generate(const ToyLM& att_lm, std::span<const Token> prompt, const AttackParams& params,
                                  const Arsenal& arsenal, RngStream& rng) {
    detail::check_attack(arsenal, params, att_lm);
    if (params.method != Method::None && !(params.delta_att > 0.0))
        throw ConfigError("spoofing needs delta_att > 0");
    SpoofOutput out;
    if (params.method == Method::None) {
        out.text = generate(att_lm, prompt, params.gen_len, nullptr, rng, params.sampling);
        return out;
    }
    const auto len = static_cast<std::size_t>(arsenal.ctx_len);
    TokenSeq ctx(len);
    StepHook hook = [&](const StepInput& in, RngStream&) -> StepOutcome {
        context_window(in.history, in.history.size(), len, ctx);
        const Impression im = attack_impression(arsenal, params, ctx, in.probs, &out.trace);
        return ModifiedLogits{modify_logits(in.logits, im, params.delta_att)};
    };
    out.text = generate(att_lm, prompt, params.gen_len, hook, rng, params.sampling);
    return out;
}

/// Keep-bonus added to the original token's logit: -ln(1 - rho).
inline double keep_bonus(double keep_prob) {
    if (!(keep_prob >= 0.0 && keep_prob <= 1.0)) throw ConfigError("scrub_keep_prob must lie in [0,1]");
    return keep_prob >= 1.0 ? std::numeric_limits<double>::infinity() : -std::log1p(-keep_prob);
}

/// Scrubbing: re-decode `victim_text` left to right with the attacker model,
/// favouring the original token by keep_bonus(rho) and pushing the forged
/// impression with delta_att <= 0. Output has the input's length.
inline TokenSeq scrub(std::span<const Token> victim_text, std::span<const Token> prompt, const ToyLM& att_lm,
                      const AttackParams& params, const Arsenal& arsenal, RngStream& rng,
                      SelectionTrace* trace = nullptr) {
    detail::check_attack(arsenal, params, att_lm);
    if (victim_text.empty()) throw InputError("scrub: empty input text");
    if (params.delta_att > 0.0) throw ConfigError("scrubbing needs delta_att <= 0");
    check_tokens(victim_text, att_lm.vocab_size());
    const double bonus = keep_bonus(params.keep_prob);
    const auto len = static_cast<std::size_t>(arsenal.ctx_len);
    TokenSeq seq(prompt.begin(), prompt.end());
    TokenSeq ctx(len);
    for (Token original : victim_text) {
        if (std::isinf(bonus)) {
            seq.push_back(original);
            continue;
        }
        Token lm_ctx[2];
        context_window(seq, seq.size(), 2, lm_ctx);
        const auto row = att_lm.logits_row(lm_ctx[0], lm_ctx[1]);
        LogitVector l(row.begin(), row.end());
        l[static_cast<std::size_t>(original)] += bonus;
        if (params.method != Method::None) {
            context_window(seq, seq.size(), len, ctx);
            const ProbDist p = tempered_softmax(l, params.sampling.temperature);
            const Impression im = attack_impression(arsenal, params, ctx, p, trace);
            l = modify_logits(l, im, params.delta_att);
        }
        seq.push_back(decode(l, params.sampling, rng));
    }
    return {seq.begin() + static_cast<std::ptrdiff_t>(prompt.size()), seq.end()};
}

}  // namespace wmsteal
