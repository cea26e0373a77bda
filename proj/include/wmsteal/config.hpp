#pragma once

#include <initializer_list>
#include <set>
#include <string>

#include <json.hpp>

#include "adaptive.hpp"
#include "attack.hpp"
#include "lm.hpp"
#include "watermark.hpp"

namespace wmsteal {

using json = nlohmann::json;

enum class Mode { Spoof, Scrub, NoAttack };

inline std::string_view to_string(Mode m) {
    switch (m) {
        case Mode::Spoof: return "spoof";
        case Mode::Scrub: return "scrub";
        case Mode::NoAttack: return "no-attack";
    }
    return "?";
}

inline Mode parse_mode(std::string_view s) {
    if (s == "spoof") return Mode::Spoof;
    if (s == "scrub") return Mode::Scrub;
    if (s == "no-attack") return Mode::NoAttack;
    throw ConfigError("unknown attack mode '" + std::string(s) + "'");
}

struct LmBlock {
    std::size_t vocab_size = 64;
    int order = 2;
    double zipf_exponent = 1.0;
    double noise_scale = 5.0;  // shared-language part of every model
    std::uint64_t language_seed = 0x1A46;
    double model_noise = 3.5;  // per-model part: victim, attacker and eval LM differ

    LmSpec spec(std::uint64_t seed) const {
        return LmSpec{seed, vocab_size, order, zipf_exponent, noise_scale, language_seed, model_noise};
    }
};

struct WatermarkSpec {
    WatermarkParams params;
    SecretKey key{0x5EC12E7C0FFEEULL};

    /// Stable identifier used to cache per-victim artifacts.
    std::string id() const;
};

struct CorpusSpec {
    std::size_t num_texts = 10000;
    std::size_t tokens_per_text = 400;
    std::size_t prompt_len = 30;
    std::size_t dn_texts = 0;  // 0: same as num_texts

    std::size_t dn_count() const { return dn_texts ? dn_texts : num_texts; }
};

struct StealSpec {
    int ctx_len = 3;
    double clip = 2.0;
    std::uint64_t min_support = 1;
    std::array<double, 3> ws_weights{1.0, 0.0, 0.0};

    SealOptions seal_options() const { return SealOptions{clip, min_support}; }
};

struct AttackSpec {
    Mode mode = Mode::Spoof;
    Method method = Method::AS;
    std::uint32_t single_seal = 0;
    double delta_att = 4.0;  // magnitude; scrubbing applies -|delta_att|
    std::size_t gen_len = 200;
    double scrub_keep_prob = 0.9998;
    std::size_t num_prompts = 500;
    std::size_t prompt_len = 30;
    double temperature = 1.0;
};

/// A sweep entry for the attack method: a Method plus the n_o of single-seal runs.
struct MethodChoice {
    Method method = Method::AS;
    std::uint32_t single_seal = 0;

    std::string label() const {
        return method == Method::SingleSeal ? "single:" + std::to_string(single_seal) : std::string(to_string(method));
    }
    bool operator==(const MethodChoice&) const = default;
};

inline MethodChoice parse_method_choice(const std::string& s) {
    if (s.rfind("single:", 0) == 0) {
        try {
            return MethodChoice{Method::SingleSeal, static_cast<std::uint32_t>(std::stoul(s.substr(7)))};
        } catch (const std::exception&) {
            throw ConfigError("bad single-seal method '" + s + "'");
        }
    }
    return MethodChoice{parse_method(s), 0};
}

/// Grid of config points; empty lists fall back to the base config value.
struct SweepSpec {
    std::vector<Mode> modes;
    std::vector<MethodChoice> methods;
    std::vector<double> delta_att;
    std::vector<std::size_t> dw_sizes;
    std::vector<json> victims;  // partial victim_watermark overrides
    std::vector<std::string> ablations;  // full | no_dgr | no_wc | no_gp
};

struct EvalSpec {
    std::size_t num_controls = 500;
    double fpr = 0.01;
    bool record_runtime = false;
    SweepSpec sweep;
};

struct Seeds {
    std::uint64_t victim_lm = 101;
    std::uint64_t attacker_lm = 202;
    std::uint64_t eval_lm = 303;
    std::uint64_t prompt_lm = 404;
    std::uint64_t corpus = 505;
    std::uint64_t attack = 606;
    std::uint64_t controls = 707;

    /// Re-derives every seed from one master value.
    static Seeds derive(std::uint64_t master) {
        const RngStream root(master);
        Seeds s;
        s.victim_lm = root.split("victim_lm").next();
        s.attacker_lm = root.split("attacker_lm").next();
        s.eval_lm = root.split("eval_lm").next();
        s.prompt_lm = root.split("prompt_lm").next();
        s.corpus = root.split("corpus").next();
        s.attack = root.split("attack").next();
        s.controls = root.split("controls").next();
        return s;
    }
};

struct ExperimentConfig {
    LmBlock lm;
    WatermarkSpec victim;
    CorpusSpec corpus;
    StealSpec steal;
    SelectionParams selection;
    AttackSpec attack;
    EvalSpec eval;
    Seeds seeds;

    void validate() const;
};

// ---------------------------------------------------------------- JSON

namespace detail {

inline void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!ok.count(it.key())) throw ConfigError("unknown key '" + where + "." + it.key() + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for '" + where + "." + key + "': " + e.what());
    }
}

}  // namespace detail

inline json to_json(const LmBlock& b) {
    return {{"vocab_size", b.vocab_size}, {"order", b.order}, {"zipf_exponent", b.zipf_exponent},
            {"noise_scale", b.noise_scale}, {"language_seed", b.language_seed}, {"model_noise", b.model_noise}};
}

inline json to_json(const WatermarkSpec& w) {
    const auto& p = w.params;
    return {{"scheme", to_string(p.scheme)}, {"ctx_len", p.ctx_len}, {"hash_scheme", to_string(p.hash_scheme)},
            {"gamma", p.gamma},   {"delta", p.delta},       {"m", p.m},
            {"secret_key", w.key.value}};
}

inline std::string WatermarkSpec::id() const { return to_json(*this).dump(); }

inline void apply_json(const json& j, WatermarkSpec& w, const std::string& where = "victim_watermark") {
    detail::reject_unknown(j, where, {"scheme", "ctx_len", "hash_scheme", "gamma", "delta", "m", "secret_key"});
    std::string scheme(to_string(w.params.scheme)), hash(to_string(w.params.hash_scheme));
    detail::read(j, "scheme", scheme, where);
    detail::read(j, "hash_scheme", hash, where);
    w.params.scheme = parse_scheme(scheme);
    w.params.hash_scheme = parse_hash_scheme(hash);
    detail::read(j, "ctx_len", w.params.ctx_len, where);
    detail::read(j, "gamma", w.params.gamma, where);
    detail::read(j, "delta", w.params.delta, where);
    detail::read(j, "m", w.params.m, where);
    detail::read(j, "secret_key", w.key.value, where);
}

inline json to_json(const ExperimentConfig& c) {
    json sweep = json::object();
    {
        const auto& s = c.eval.sweep;
        json modes = json::array(), methods = json::array();
        for (auto m : s.modes) modes.push_back(to_string(m));
        for (const auto& m : s.methods) methods.push_back(m.label());
        sweep = {{"modes", modes},
                 {"methods", methods},
                 {"delta_att", s.delta_att},
                 {"dw_sizes", s.dw_sizes},
                 {"victims", s.victims},
                 {"ablations", s.ablations}};
    }
    return {
        {"lm", to_json(c.lm)},
        {"victim_watermark", to_json(c.victim)},
        {"corpus",
         {{"num_texts", c.corpus.num_texts},
          {"tokens_per_text", c.corpus.tokens_per_text},
          {"prompt_len", c.corpus.prompt_len},
          {"dn_texts", c.corpus.dn_texts}}},
        {"steal",
         {{"ctx_len", c.steal.ctx_len},
          {"clip", c.steal.clip},
          {"min_support", c.steal.min_support},
          {"ws_weights", c.steal.ws_weights}}},
        {"selection",
         {{"top_k", c.selection.top_k},
          {"use_dgr", c.selection.use_dgr},
          {"use_wc", c.selection.use_wc},
          {"use_gp", c.selection.use_gp}}},
        {"attack",
         {{"mode", to_string(c.attack.mode)},
          {"method", to_string(c.attack.method)},
          {"single_seal", c.attack.single_seal},
          {"delta_att", c.attack.delta_att},
          {"gen_len", c.attack.gen_len},
          {"scrub_keep_prob", c.attack.scrub_keep_prob},
          {"num_prompts", c.attack.num_prompts},
          {"prompt_len", c.attack.prompt_len},
          {"temperature", c.attack.temperature}}},
        {"eval",
         {{"num_controls", c.eval.num_controls},
          {"fpr", c.eval.fpr},
          {"record_runtime", c.eval.record_runtime},
          {"sweep", sweep}}},
        {"seeds",
         {{"victim_lm", c.seeds.victim_lm},
          {"attacker_lm", c.seeds.attacker_lm},
          {"eval_lm", c.seeds.eval_lm},
          {"prompt_lm", c.seeds.prompt_lm},
          {"corpus", c.seeds.corpus},
          {"attack", c.seeds.attack},
          {"controls", c.seeds.controls}}},
    };
}

/// Parses a config document on top of the defaults. Unknown keys are errors.
inline ExperimentConfig config_from_json(const json& j) {
    using detail::read;
    using detail::reject_unknown;
    ExperimentConfig c;
    reject_unknown(j, "config", {"lm", "victim_watermark", "corpus", "steal", "selection", "attack", "eval", "seeds"});
    if (auto it = j.find("lm"); it != j.end()) {
        reject_unknown(*it, "lm", {"vocab_size", "order", "zipf_exponent", "noise_scale", "language_seed", "model_noise"});
        read(*it, "vocab_size", c.lm.vocab_size, "lm");
        read(*it, "order", c.lm.order, "lm");
        read(*it, "zipf_exponent", c.lm.zipf_exponent, "lm");
        read(*it, "noise_scale", c.lm.noise_scale, "lm");
        read(*it, "language_seed", c.lm.language_seed, "lm");
        read(*it, "model_noise", c.lm.model_noise, "lm");
    }
    if (auto it = j.find("victim_watermark"); it != j.end()) apply_json(*it, c.victim);
    if (auto it = j.find("corpus"); it != j.end()) {
        reject_unknown(*it, "corpus", {"num_texts", "tokens_per_text", "prompt_len", "dn_texts"});
        read(*it, "num_texts", c.corpus.num_texts, "corpus");
        read(*it, "tokens_per_text", c.corpus.tokens_per_text, "corpus");
        read(*it, "prompt_len", c.corpus.prompt_len, "corpus");
        read(*it, "dn_texts", c.corpus.dn_texts, "corpus");
    }
    if (auto it = j.find("steal"); it != j.end()) {
        reject_unknown(*it, "steal", {"ctx_len", "clip", "min_support", "ws_weights"});
        read(*it, "ctx_len", c.steal.ctx_len, "steal");
        read(*it, "clip", c.steal.clip, "steal");
        read(*it, "min_support", c.steal.min_support, "steal");
        read(*it, "ws_weights", c.steal.ws_weights, "steal");
    }
    if (auto it = j.find("selection"); it != j.end()) {
        reject_unknown(*it, "selection", {"top_k", "use_dgr", "use_wc", "use_gp"});
        read(*it, "top_k", c.selection.top_k, "selection");
        read(*it, "use_dgr", c.selection.use_dgr, "selection");
        read(*it, "use_wc", c.selection.use_wc, "selection");
        read(*it, "use_gp", c.selection.use_gp, "selection");
    }
    if (auto it = j.find("attack"); it != j.end()) {
        reject_unknown(*it, "attack",
                       {"mode", "method", "single_seal", "delta_att", "gen_len", "scrub_keep_prob", "num_prompts",
                        "prompt_len", "temperature"});
        std::string mode(to_string(c.attack.mode)), method(to_string(c.attack.method));
        read(*it, "mode", mode, "attack");
        read(*it, "method", method, "attack");
        c.attack.mode = parse_mode(mode);
        c.attack.method = parse_method(method);
        read(*it, "single_seal", c.attack.single_seal, "attack");
        read(*it, "delta_att", c.attack.delta_att, "attack");
        read(*it, "gen_len", c.attack.gen_len, "attack");
        read(*it, "scrub_keep_prob", c.attack.scrub_keep_prob, "attack");
        read(*it, "num_prompts", c.attack.num_prompts, "attack");
        read(*it, "prompt_len", c.attack.prompt_len, "attack");
        read(*it, "temperature", c.attack.temperature, "attack");
    }
    if (auto it = j.find("eval"); it != j.end()) {
        reject_unknown(*it, "eval", {"num_controls", "fpr", "record_runtime", "sweep"});
        read(*it, "num_controls", c.eval.num_controls, "eval");
        read(*it, "fpr", c.eval.fpr, "eval");
        read(*it, "record_runtime", c.eval.record_runtime, "eval");
        if (auto s = it->find("sweep"); s != it->end()) {
            reject_unknown(*s, "eval.sweep", {"modes", "methods", "delta_att", "dw_sizes", "victims", "ablations"});
            std::vector<std::string> modes, methods;
            read(*s, "modes", modes, "eval.sweep");
            read(*s, "methods", methods, "eval.sweep");
            for (const auto& m : modes) c.eval.sweep.modes.push_back(parse_mode(m));
            for (const auto& m : methods) c.eval.sweep.methods.push_back(parse_method_choice(m));
            read(*s, "delta_att", c.eval.sweep.delta_att, "eval.sweep");
            read(*s, "dw_sizes", c.eval.sweep.dw_sizes, "eval.sweep");
            read(*s, "victims", c.eval.sweep.victims, "eval.sweep");
            read(*s, "ablations", c.eval.sweep.ablations, "eval.sweep");
        }
    }
    if (auto it = j.find("seeds"); it != j.end()) {
        reject_unknown(*it, "seeds", {"victim_lm", "attacker_lm", "eval_lm", "prompt_lm", "corpus", "attack", "controls"});
        read(*it, "victim_lm", c.seeds.victim_lm, "seeds");
        read(*it, "attacker_lm", c.seeds.attacker_lm, "seeds");
        read(*it, "eval_lm", c.seeds.eval_lm, "seeds");
        read(*it, "prompt_lm", c.seeds.prompt_lm, "seeds");
        read(*it, "corpus", c.seeds.corpus, "seeds");
        read(*it, "attack", c.seeds.attack, "seeds");
        read(*it, "controls", c.seeds.controls, "seeds");
    }
    c.validate();
    return c;
}

inline SelectionParams apply_ablation(SelectionParams p, const std::string& ablation) {
    if (ablation == "full" || ablation.empty()) return p;
    if (ablation == "no_dgr") p.use_dgr = false;
    else if (ablation == "no_wc") p.use_wc = false;
    else if (ablation == "no_gp") p.use_gp = false;
    else throw ConfigError("unknown ablation '" + ablation + "'");
    return p;
}

inline void ExperimentConfig::validate() const {
    lm.spec(0).validate();
    victim.params.validate(lm.vocab_size);
    if (corpus.num_texts == 0) throw ConfigError("corpus.num_texts must be >= 1");
    if (corpus.tokens_per_text == 0) throw ConfigError("corpus.tokens_per_text must be >= 1");
    KeyCodec(lm.vocab_size, steal.ctx_len);
    if (!(steal.clip > 0.0)) throw ConfigError("steal.clip must be > 0");
    if (steal.ctx_len > 8) throw ConfigError("steal.ctx_len must be <= 8");
    {
        double s = 0.0;
        for (double w : steal.ws_weights) {
            if (!(w >= 0.0)) throw ConfigError("steal.ws_weights must be non-negative");
            s += w;
        }
        if (s == 0.0) throw ConfigError("steal.ws_weights must not all be zero");
    }
    selection.validate();
    if (attack.gen_len < 2) throw ConfigError("attack.gen_len must be >= 2");
    if (attack.num_prompts == 0) throw ConfigError("attack.num_prompts must be >= 1");
    if (!(attack.delta_att >= 0.0)) throw ConfigError("attack.delta_att is a magnitude and must be >= 0");
    if (!(attack.scrub_keep_prob >= 0.0 && attack.scrub_keep_prob <= 1.0))
        throw ConfigError("attack.scrub_keep_prob must lie in [0,1]");
    if (!(attack.temperature > 0.0)) throw ConfigError("attack.temperature must be > 0");
    if (attack.single_seal >= (1U << steal.ctx_len)) throw ConfigError("attack.single_seal out of range");
    if (eval.num_controls == 0) throw ConfigError("eval.num_controls must be >= 1");
    if (!(eval.fpr >= 0.0 && eval.fpr < 1.0)) throw ConfigError("eval.fpr must lie in [0,1)");
    for (const auto& m : eval.sweep.methods)
        if (m.method == Method::SingleSeal && m.single_seal >= (1U << steal.ctx_len))
            throw ConfigError("sweep single-seal index out of range");
    for (double d : eval.sweep.delta_att)
        if (!(d >= 0.0)) throw ConfigError("eval.sweep.delta_att entries are magnitudes (>= 0)");
    for (const auto& v : eval.sweep.victims) {
        WatermarkSpec w = victim;
        apply_json(v, w, "eval.sweep.victims[]");
        w.params.validate(lm.vocab_size);
    }
    for (const auto& a : eval.sweep.ablations) apply_ablation(selection, a);
}

inline std::uint64_t hash_json(const json& j) { return fnv1a(j.dump()); }

inline std::uint64_t config_hash(const ExperimentConfig& c) { return hash_json(to_json(c)); }

/// Hash of the blocks that determine the corpora.
inline std::uint64_t corpus_provenance(const ExperimentConfig& c) {
    const json full = to_json(c);
    return hash_json({{"lm", full["lm"]}, {"victim_watermark", full["victim_watermark"]},
                      {"corpus", full["corpus"]}, {"seeds", full["seeds"]}});
}

/// Hash of the blocks that determine the forged seals.
inline std::uint64_t seal_provenance(const ExperimentConfig& c) {
    const json full = to_json(c);
    return hash_json({{"corpus", corpus_provenance(c)}, {"steal", full["steal"]}});
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
}

}  // namespace wmsteal
