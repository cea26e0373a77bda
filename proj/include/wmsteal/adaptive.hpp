#pragma once

#include <memory>

#include "common.hpp"
#include "steal_stats.hpp"

namespace wmsteal {

struct SelectionParams {
    std::size_t top_k = 128;
    bool use_dgr = true;  // restrict to the k most probable tokens
    bool use_wc = true;   // weight by the empirical D_w next-token distribution
    bool use_gp = true;   // normalize the impression into a distribution

    void validate() const {
        if (top_k == 0) throw ConfigError("selection.top_k must be >= 1");
    }
};

/// Indices of the k most probable tokens, most probable first, lowest id on ties.
inline std::vector<Token> top_k_set(std::span<const double> probs, std::size_t k) {
    if (k == 0) throw ConfigError("top_k must be >= 1");
    std::vector<Token> ids(probs.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<Token>(i);
    const std::size_t keep = std::min(k, ids.size());
    auto before = [&](Token a, Token b) {
        const double pa = probs[static_cast<std::size_t>(a)], pb = probs[static_cast<std::size_t>(b)];
        return pa != pb ? pa > pb : a < b;
    };
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(), before);
    ids.resize(keep);
    return ids;
}

/// Empirical p_w(T | ctx) over full contexts of D_w, backing off to the D_w
/// unigram distribution for contexts never seen.
class WcTable {
  public:
    WcTable() = default;
    WcTable(std::shared_ptr<const FrequencyTable> full, std::shared_ptr<const FrequencyTable> unigram, int ctx_len)
        : full_(std::move(full)), unigram_table_(std::move(unigram)), codec_(full_->vocab_size(), ctx_len),
          ctx_len_(ctx_len) {
        const std::uint64_t empty_key = 0;
        const auto row = unigram_table_->row(empty_key);
        unigram_.assign(full_->vocab_size(), 0.0);
        const double total = static_cast<double>(unigram_table_->total(empty_key));
        if (row.empty() || total == 0.0) throw InputError("WC table needs a non-empty D_w");
        for (std::size_t t = 0; t < unigram_.size(); ++t) unigram_[t] = static_cast<double>(row[t]) / total;
    }

    int ctx_len() const { return ctx_len_; }
    const FrequencyTable& full() const { return *full_; }
    const FrequencyTable& unigram_table() const { return *unigram_table_; }
    const ProbDist& unigram() const { return unigram_; }

    /// Returns true when the full context was observed.
    bool lookup(std::span<const Token> ctx, std::span<double> out) const {
        const std::uint64_t key = codec_.pack(ctx);
        const auto row = full_->row(key);
        if (row.empty()) {
            std::copy(unigram_.begin(), unigram_.end(), out.begin());
            return false;
        }
        const double total = static_cast<double>(full_->total(key));
        for (std::size_t t = 0; t < out.size(); ++t) out[t] = static_cast<double>(row[t]) / total;
        return true;
    }

    ProbDist lookup(std::span<const Token> ctx) const {
        ProbDist p(unigram_.size());
        lookup(ctx, p);
        return p;
    }

  private:
    std::shared_ptr<const FrequencyTable> full_, unigram_table_;
    KeyCodec codec_;
    int ctx_len_ = 0;
    ProbDist unigram_;
};

inline WcTable wc_from_counts(const SharedCounts& dw) {
    return WcTable(dw.ordered.back(), dw.ordered.front(), dw.ctx_len);
}

inline WcTable wc_estimate(const Corpus& dw, std::size_t vocab_size, int ctx_len) {
    if (dw.texts.empty()) throw InputError("wc_estimate: D_w must be non-empty");
    const std::uint32_t full = (1U << ctx_len) - 1;
    auto full_table = std::make_shared<const FrequencyTable>(count_corpus(dw, {ctx_len, full}, vocab_size));
    auto unigram = std::make_shared<const FrequencyTable>(count_corpus(dw, {ctx_len, 0}, vocab_size));
    return WcTable(std::move(full_table), std::move(unigram), ctx_len);
}

/// Seal score: sum over T in V_k of WC(T) * GP(T), where WC is the empirical
/// D_w probability of T after ctx and GP the impression normalized over V.
/// Ablations replace WC by 1/|V_k| and GP by the raw impression; an all-zero
/// impression scores 0.
inline double omega(std::span<const double> impression, std::span<const double> wc, std::span<const Token> vk,
                    const SelectionParams& params) {
    double norm = 1.0;
    if (params.use_gp) {
        norm = 0.0;
        for (double x : impression) norm += x;
        if (norm == 0.0) return 0.0;
    }
    const double uniform_wc = 1.0 / static_cast<double>(vk.size());
    double total = 0.0;
    for (Token t : vk) {
        const auto i = static_cast<std::size_t>(t);
        const double wc_factor = params.use_wc ? wc[i] : uniform_wc;
        const double gp_factor = params.use_gp ? impression[i] / norm : impression[i];
        total += wc_factor * gp_factor;
    }
    return total;
}

/// One generation step of Adaptive Selection.
struct SelectionStep {
    std::uint32_t chosen = 0;
    std::vector<double> omegas;
    std::vector<Token> vk;
};

using SelectionTrace = std::vector<SelectionStep>;

struct Selection {
    std::uint32_t n_o = 0;
    Impression impression;
    SelectionStep step;
};

/// Argmax-omega seal for this step. Ties go to fewer active positions, then
/// lower n_o.
inline Selection select_seal(std::span<const Token> ctx, std::span<const double> p_att,
                             const std::vector<ForgedSeal>& seals, const WcTable& wc,
                             const SelectionParams& params) {
    if (seals.empty()) throw InputError("select_seal: no seals");
    const std::size_t v = p_att.size();
    std::vector<Token> vk;
    if (params.use_dgr) {
        vk = top_k_set(p_att, params.top_k);
    } else {
        vk.resize(v);
        for (std::size_t i = 0; i < v; ++i) vk[i] = static_cast<Token>(i);
    }
    ProbDist wc_dist(v);
    wc.lookup(ctx, wc_dist);

    Selection sel;
    sel.step.omegas.resize(seals.size());
    Impression im(v);
    std::size_t best = 0;
    for (std::size_t s = 0; s < seals.size(); ++s) {
        seals[s].impression_for_key(seals[s].key_for(ctx), im);
        const double w = omega(im, wc_dist, vk, params);
        sel.step.omegas[s] = w;
        const double bw = sel.step.omegas[best];
        const int pa = seals[s].pattern.active_count(), pb = seals[best].pattern.active_count();
        const bool better = s == 0 || w > bw ||
                            (w == bw && (pa < pb || (pa == pb && seals[s].pattern.n_o < seals[best].pattern.n_o)));
        if (better) {
            best = s;
            sel.impression = im;
        }
    }
    sel.n_o = seals[best].pattern.n_o;
    sel.step.chosen = sel.n_o;
    sel.step.vk = std::move(vk);
    return sel;
}

}  // namespace wmsteal
