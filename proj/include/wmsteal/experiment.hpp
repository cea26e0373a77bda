#pragma once

#include <chrono>
#include <map>
#include <thread>

#include "attack.hpp"
#include "config.hpp"
#include "metrics.hpp"

namespace wmsteal {

/// Runs body(i) for i in [0, n) on `jobs` threads with a static split, so
/// results never depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& body) {
    jobs = std::max(1U, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(jobs);
    for (unsigned s = 0; s < jobs; ++s)
        pool.emplace_back([&, s] {
            try {
                for (std::size_t i = n * s / jobs; i < n * (s + 1) / jobs; ++i) body(i);
            } catch (...) {
                errors[s] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct DetectionReport {
    std::vector<double> positives;
    std::vector<double> negatives;
    double mean_wcs = 0.0;
    double auc = 0.0;
    double tpr = 0.0;
    double mean_ppl = 0.0;
    bool underpowered = false;
    std::uint64_t config_hash = 0;
};

inline DetectionReport make_report(std::vector<double> positives, std::vector<double> negatives,
                                   std::span<const double> ppl, double fpr, std::uint64_t hash) {
    DetectionReport r;
    r.positives = std::move(positives);
    r.negatives = std::move(negatives);
    r.mean_wcs = mean(r.positives);
    r.auc = auc(r.positives, r.negatives);
    r.tpr = tpr_at_fpr(r.positives, r.negatives, fpr, &r.underpowered);
    r.mean_ppl = ppl.empty() ? 0.0 : mean(ppl);
    r.config_hash = hash;
    return r;
}

/// One point of an evaluation grid.
struct RunPoint {
    Mode mode = Mode::Spoof;
    MethodChoice method;
    double delta_att = 4.0;  // magnitude
    std::size_t dw_size = 0;
    WatermarkSpec victim;
    std::string ablation = "full";
};

struct PointResult {
    RunPoint point;
    DetectionReport report;
    std::vector<TokenSeq> texts;
    std::vector<SelectionTrace> traces;
    double runtime_s = 0.0;
};

inline RunPoint base_point(const ExperimentConfig& c) {
    RunPoint p;
    p.mode = c.attack.mode;
    p.method = MethodChoice{c.attack.method, c.attack.single_seal};
    p.delta_att = c.attack.delta_att;
    p.dw_size = c.corpus.num_texts;
    p.victim = c.victim;
    return p;
}

/// Expands the sweep block into points; empty axes keep the base value.
inline std::vector<RunPoint> sweep_points(const ExperimentConfig& c) {
    const auto& s = c.eval.sweep;
    const RunPoint base = base_point(c);
    std::vector<WatermarkSpec> victims;
    for (const auto& v : s.victims) {
        WatermarkSpec w = c.victim;
        apply_json(v, w, "eval.sweep.victims[]");
        victims.push_back(w);
    }
    if (victims.empty()) victims.push_back(base.victim);
    const auto modes = s.modes.empty() ? std::vector<Mode>{base.mode} : s.modes;
    const auto methods = s.methods.empty() ? std::vector<MethodChoice>{base.method} : s.methods;
    const auto deltas = s.delta_att.empty() ? std::vector<double>{base.delta_att} : s.delta_att;
    const auto sizes = s.dw_sizes.empty() ? std::vector<std::size_t>{base.dw_size} : s.dw_sizes;
    const auto ablations = s.ablations.empty() ? std::vector<std::string>{"full"} : s.ablations;
    std::vector<RunPoint> out;
    for (const auto& v : victims)
        for (auto mode : modes)
            for (const auto& m : methods)
                for (double d : deltas)
                    for (auto n : sizes)
                        for (const auto& a : ablations) {
                            RunPoint p;
                            p.mode = mode;
                            p.method = m;
                            p.delta_att = d;
                            p.dw_size = n;
                            p.victim = v;
                            p.ablation = a;
                            out.push_back(p);
                        }
    return out;
}

/// Prompt i of a named pool: `len` tokens sampled from the prompt model.
inline TokenSeq pool_prompt(const ToyLM& prompt_lm, const RngStream& pool, std::size_t i, std::size_t len) {
    if (len == 0) return {};
    RngStream rng = pool.split(i);
    return generate(prompt_lm, {}, len, nullptr, rng);
}

/// Texts of the form prompt + `tokens_per_text` generated tokens; with `wm`
/// the victim watermark is active.
inline Corpus generate_corpus(const ToyLM& lm, const ToyLM& prompt_lm, const Watermark* wm, std::size_t count,
                              std::size_t prompt_len, std::size_t tokens_per_text, const RngStream& stream,
                              unsigned jobs = 1) {
    if (count == 0) throw ConfigError("corpus text count must be >= 1");
    if (tokens_per_text == 0) throw ConfigError("corpus tokens_per_text must be >= 1");
    Corpus c;
    c.prompt_len = prompt_len;
    c.label = wm ? CorpusLabel::Watermarked : CorpusLabel::Plain;
    c.texts.resize(count);
    const RngStream prompts = stream.split("prompts"), gens = stream.split("generate");
    const StepHook hook = wm ? wm->hook() : StepHook{};
    parallel_for(count, jobs, [&](std::size_t i) {
        TokenSeq text = pool_prompt(prompt_lm, prompts, i, prompt_len);
        RngStream rng = gens.split(i);
        const TokenSeq gen = generate(lm, text, tokens_per_text, hook, rng);
        text.insert(text.end(), gen.begin(), gen.end());
        c.texts[i] = std::move(text);
    });
    return c;
}

inline Corpus generate_dw(const ExperimentConfig& c, const WatermarkSpec& victim, unsigned jobs = 1) {
    const ToyLM lm(c.lm.spec(c.seeds.victim_lm)), prompt_lm(c.lm.spec(c.seeds.prompt_lm));
    const Watermark wm(victim.params, victim.key, c.lm.vocab_size);
    return generate_corpus(lm, prompt_lm, &wm, c.corpus.num_texts, c.corpus.prompt_len, c.corpus.tokens_per_text,
                           RngStream(c.seeds.corpus).split("dw"), jobs);
}

inline Corpus generate_dn(const ExperimentConfig& c, unsigned jobs = 1) {
    const ToyLM lm(c.lm.spec(c.seeds.victim_lm)), prompt_lm(c.lm.spec(c.seeds.prompt_lm));
    return generate_corpus(lm, prompt_lm, nullptr, c.corpus.dn_count(), c.corpus.prompt_len,
                           c.corpus.tokens_per_text, RngStream(c.seeds.corpus).split("dn"), jobs);
}

/// Holds the toy world of one config: models, corpora, counts and forged
/// arsenals, built lazily and cached across grid points.
class Lab {
  public:
    explicit Lab(ExperimentConfig cfg, unsigned jobs = 1)
        : cfg_(std::move(cfg)),
          jobs_(std::max(1U, jobs)),
          victim_lm_(cfg_.lm.spec(cfg_.seeds.victim_lm)),
          attacker_lm_(cfg_.lm.spec(cfg_.seeds.attacker_lm)),
          eval_lm_(cfg_.lm.spec(cfg_.seeds.eval_lm)),
          prompt_lm_(cfg_.lm.spec(cfg_.seeds.prompt_lm)) {
        cfg_.validate();
    }

    const ExperimentConfig& config() const { return cfg_; }
    const ToyLM& victim_lm() const { return victim_lm_; }
    const ToyLM& attacker_lm() const { return attacker_lm_; }
    const ToyLM& eval_lm() const { return eval_lm_; }

    /// Installs corpora loaded from disk instead of generating them.
    void set_dn(Corpus dn) {
        dn_ = std::move(dn);
        dn_counts_.reset();
    }
    void set_dw(const WatermarkSpec& victim, Corpus dw) {
        drop(victim);
        dw_[victim.id()] = std::move(dw);
    }

    const Corpus& dn() {
        if (!dn_) dn_ = generate_dn(cfg_, jobs_);
        return *dn_;
    }

    const Corpus& dw(const WatermarkSpec& victim) {
        auto it = dw_.find(victim.id());
        if (it == dw_.end()) it = dw_.emplace(victim.id(), generate_dw(cfg_, victim, jobs_)).first;
        return it->second;
    }

    const SharedCounts& dn_counts() {
        if (!dn_counts_) dn_counts_ = SharedCounts::from(count_all(dn(), cfg_.lm.vocab_size, cfg_.steal.ctx_len, true, jobs_));
        return *dn_counts_;
    }

    const Arsenal& arsenal(const WatermarkSpec& victim, std::size_t dw_size) {
        const std::string key = victim.id() + "#" + std::to_string(dw_size);
        auto it = arsenals_.find(key);
        if (it != arsenals_.end()) return it->second;
        const Corpus& full = dw(victim);
        if (dw_size == 0 || dw_size > full.size())
            throw ConfigError("|D_w| = " + std::to_string(dw_size) + " outside [1, " + std::to_string(full.size()) + "]");
        const Corpus sub = dw_size == full.size() ? Corpus{} : full.prefix(dw_size);
        const Corpus& used = dw_size == full.size() ? full : sub;
        const SharedCounts w = SharedCounts::from(count_all(used, cfg_.lm.vocab_size, cfg_.steal.ctx_len, true, jobs_));
        return arsenals_.emplace(key, forge_arsenal(w, dn_counts(), cfg_.lm.vocab_size, cfg_.steal.seal_options()))
            .first->second;
    }

    void set_arsenal(const WatermarkSpec& victim, std::size_t dw_size, Arsenal a) {
        arsenals_.insert_or_assign(victim.id() + "#" + std::to_string(dw_size), std::move(a));
    }

    /// Frees the corpus and arsenals of one victim.
    void drop(const WatermarkSpec& victim) {
        const std::string id = victim.id();
        dw_.erase(id);
        for (auto it = arsenals_.begin(); it != arsenals_.end();)
            it = it->first.rfind(id + "#", 0) == 0 ? arsenals_.erase(it) : std::next(it);
    }

    const std::vector<TokenSeq>& attack_prompts() {
        if (attack_prompts_.empty()) {
            attack_prompts_.resize(cfg_.attack.num_prompts);
            const RngStream pool = RngStream(cfg_.seeds.attack).split("prompts");
            parallel_for(attack_prompts_.size(), jobs_, [&](std::size_t i) {
                attack_prompts_[i] = pool_prompt(prompt_lm_, pool, i, cfg_.attack.prompt_len);
            });
        }
        return attack_prompts_;
    }

    /// Negative controls: plain eval-model continuations of their own prompts.
    struct Controls {
        std::vector<TokenSeq> prompts, texts;
    };
    const Controls& controls() {
        if (controls_.texts.empty()) {
            const std::size_t n = cfg_.eval.num_controls;
            controls_.prompts.resize(n);
            controls_.texts.resize(n);
            const RngStream root(cfg_.seeds.controls);
            const RngStream pool = root.split("prompts"), gens = root.split("generate");
            parallel_for(n, jobs_, [&](std::size_t i) {
                controls_.prompts[i] = pool_prompt(prompt_lm_, pool, i, cfg_.attack.prompt_len);
                RngStream rng = gens.split(i);
                controls_.texts[i] = generate(eval_lm_, controls_.prompts[i], cfg_.attack.gen_len, nullptr, rng);
            });
        }
        return controls_;
    }

    /// Victim detector scores of the negative controls.
    std::vector<double> control_scores(const WatermarkSpec& victim) {
        const Controls& ctl = controls();
        const Watermark wm(victim.params, victim.key, cfg_.lm.vocab_size);
        std::vector<double> s(ctl.texts.size());
        parallel_for(s.size(), jobs_, [&](std::size_t i) { s[i] = wm.detect(ctl.texts[i], ctl.prompts[i], &victim_lm_); });
        return s;
    }

    /// Watermarked victim responses to the attack prompts.
    std::vector<TokenSeq> victim_texts(const WatermarkSpec& victim) {
        const auto& prompts = attack_prompts();
        const Watermark wm(victim.params, victim.key, cfg_.lm.vocab_size);
        const StepHook hook = wm.hook();
        const RngStream gens = RngStream(cfg_.seeds.attack).split("victim");
        std::vector<TokenSeq> out(prompts.size());
        parallel_for(out.size(), jobs_, [&](std::size_t i) {
            RngStream rng = gens.split(i);
            out[i] = generate(victim_lm_, prompts[i], cfg_.attack.gen_len, hook, rng);
        });
        return out;
    }

    AttackParams attack_params(const RunPoint& p) const {
        AttackParams a;
        a.method = p.method.method;
        a.single_seal = p.method.single_seal;
        a.delta_att = p.mode == Mode::Scrub ? -std::abs(p.delta_att) : std::abs(p.delta_att);
        a.gen_len = cfg_.attack.gen_len;
        a.keep_prob = cfg_.attack.scrub_keep_prob;
        a.ws_weights = cfg_.steal.ws_weights;
        a.selection = apply_ablation(cfg_.selection, p.ablation);
        a.sampling.temperature = cfg_.attack.temperature;
        return a;
    }

    /// Attack (or victim) texts for one point, positives scored later.
    std::vector<TokenSeq> produce(const RunPoint& p, std::vector<SelectionTrace>* traces = nullptr) {
        const auto& prompts = attack_prompts();
        const AttackParams params = attack_params(p);
        if (p.mode == Mode::NoAttack) return victim_texts(p.victim);
        Arsenal bare;
        bare.ctx_len = cfg_.steal.ctx_len;
        bare.vocab_size = cfg_.lm.vocab_size;
        const Arsenal& ars = p.method.method == Method::None ? bare : arsenal(p.victim, p.dw_size);
        std::vector<TokenSeq> out(prompts.size());
        if (traces) traces->assign(prompts.size(), {});
        if (p.mode == Mode::Spoof) {
            const RngStream gens = RngStream(cfg_.seeds.attack).split("spoof");
            parallel_for(out.size(), jobs_, [&](std::size_t i) {
                RngStream rng = gens.split(i);
                SpoofOutput s = spoof_generate(attacker_lm_, prompts[i], params, ars, rng);
                out[i] = std::move(s.text);
                if (traces) (*traces)[i] = std::move(s.trace);
            });
        } else {
            const std::vector<TokenSeq> victims = victim_texts(p.victim);
            const RngStream gens = RngStream(cfg_.seeds.attack).split("scrub");
            parallel_for(out.size(), jobs_, [&](std::size_t i) {
                RngStream rng = gens.split(i);
                out[i] = scrub(victims[i], prompts[i], attacker_lm_, params, ars, rng, traces ? &(*traces)[i] : nullptr);
            });
        }
        return out;
    }

    /// Scores texts continuing the attack prompts under a victim detector and
    /// the eval model.
    DetectionReport evaluate(const WatermarkSpec& victim, const std::vector<TokenSeq>& texts) {
        const auto& prompts = attack_prompts();
        if (texts.size() != prompts.size()) throw InputError("evaluate: one text per attack prompt expected");
        const Watermark wm(victim.params, victim.key, cfg_.lm.vocab_size);
        std::vector<double> pos(texts.size()), ppl(texts.size());
        parallel_for(texts.size(), jobs_, [&](std::size_t i) {
            pos[i] = wm.detect(texts[i], prompts[i], &victim_lm_);
            ppl[i] = perplexity(eval_lm_, texts[i], prompts[i]);
        });
        return make_report(std::move(pos), control_scores(victim), ppl, cfg_.eval.fpr, config_hash(cfg_));
    }

    PointResult run_point(const RunPoint& p, bool keep_texts = false, bool keep_traces = false) {
        const auto start = std::chrono::steady_clock::now();
        PointResult r;
        r.point = p;
        std::vector<SelectionTrace> traces;
        std::vector<TokenSeq> texts = produce(p, keep_traces ? &traces : nullptr);
        r.report = evaluate(p.victim, texts);
        if (keep_texts) r.texts = std::move(texts);
        if (keep_traces) r.traces = std::move(traces);
        r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return r;
    }

  private:
    ExperimentConfig cfg_;
    unsigned jobs_;
    ToyLM victim_lm_, attacker_lm_, eval_lm_, prompt_lm_;
    std::optional<Corpus> dn_;
    std::optional<SharedCounts> dn_counts_;
    std::map<std::string, Corpus> dw_;
    std::map<std::string, Arsenal> arsenals_;
    std::vector<TokenSeq> attack_prompts_;
    Controls controls_;
};

// ---------------------------------------------------------------- CSV

inline std::string watermark_label(const WatermarkSpec& w) {
    const auto& p = w.params;
    return std::string(to_string(p.scheme)) + "/" + std::string(to_string(p.hash_scheme)) + "/ctx" +
           std::to_string(p.ctx_len);
}

inline std::string fmt_real(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

inline const char* kCsvHeader = "mode,method,ablation,watermark,delta_att,dw_size,WCS,AUC,TPR@1%,PPL,runtime_s,config_hash";

/// runtime_s is "-" unless recorded, keeping reports byte-reproducible.
inline std::string csv_row(const PointResult& r, bool record_runtime) {
    const auto& p = r.point;
    std::string row;
    row += std::string(to_string(p.mode)) + "," + p.method.label() + "," + p.ablation + "," + watermark_label(p.victim);
    row += "," + fmt_real(p.mode == Mode::Scrub ? -std::abs(p.delta_att) : p.delta_att);
    row += "," + std::to_string(p.dw_size);
    row += "," + fmt_real(r.report.mean_wcs) + "," + fmt_real(r.report.auc) + "," + fmt_real(r.report.tpr) + "," +
           fmt_real(r.report.mean_ppl);
    row += "," + (record_runtime ? fmt_real(r.runtime_s) : std::string("-"));
    row += "," + hex64(r.report.config_hash);
    return row;
}

}  // namespace wmsteal
