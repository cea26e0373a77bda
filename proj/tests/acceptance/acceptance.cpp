// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--config FILE] [--only N[,N...]] [--cli PATH]
//
// Without --config the library defaults are used (the toy benchmark).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <unistd.h>

#include <wmsteal/experiment.hpp>

#include "../oracles.hpp"

using namespace wmsteal;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

ExperimentConfig g_config;
std::string g_cli;
std::unique_ptr<Lab> g_lab;

Lab& lab() {
    if (!g_lab) g_lab = std::make_unique<Lab>(g_config, 1);
    return *g_lab;
}

WatermarkSpec victim(Scheme s, HashScheme h = HashScheme::Left, int ctx_len = 3) {
    WatermarkSpec v = g_config.victim;
    v.params.scheme = s;
    v.params.hash_scheme = h;
    v.params.ctx_len = ctx_len;
    return v;
}

PointResult spoof(const WatermarkSpec& v, MethodChoice m, double delta = -1.0, std::size_t dw = 0,
                  const std::string& ablation = "full") {
    RunPoint p = base_point(g_config);
    p.mode = Mode::Spoof;
    p.victim = v;
    p.method = m;
    if (delta > 0) p.delta_att = delta;
    if (dw > 0) p.dw_size = dw;
    p.ablation = ablation;
    return lab().run_point(p);
}

PointResult scrub_run(const WatermarkSpec& v, MethodChoice m) {
    RunPoint p = base_point(g_config);
    p.mode = Mode::Scrub;
    p.victim = v;
    p.method = m;
    return lab().run_point(p);
}

const Scheme kSchemes[] = {Scheme::KGW, Scheme::SynthID, Scheme::Unbiased};

std::vector<double> randvec(RngStream& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = lo + (hi - lo) * rng.uniform();
    return v;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

// ---------------------------------------------------------------- 1

Outcome formula_exactness() {
    RngStream rng(0xC1);
    constexpr int kTrials = 1000;
    const double tol = 1e-12;
    std::vector<std::string> failed;
    double worst = 0.0;
    auto track = [&](const char* name, double err) {
        worst = std::max(worst, err);
        if (!(err <= tol) && (failed.empty() || failed.back() != name)) failed.push_back(name);
    };

    // transform
    for (int i = 0; i < kTrials; ++i) {
        const int len = 1 + static_cast<int>(rng.below(4));
        TokenSeq ctx(static_cast<std::size_t>(len));
        oracle::Seq octx;
        for (auto& t : ctx) {
            t = static_cast<Token>(rng.below(64));
            octx.push_back(t);
        }
        const auto n_o = static_cast<std::uint32_t>(rng.below(1U << len));
        const auto got = transform(ctx, {len, n_o}).slots;
        const auto want = oracle::transform(octx, n_o);
        track("transform", std::equal(got.begin(), got.end(), want.begin(), want.end()) ? 0.0 : 1.0);
    }
    // score, pointwise and through seals built from a random corpus
    for (int i = 0; i < kTrials; ++i) {
        const double pw = rng.below(4) == 0 ? 0.0 : rng.uniform();
        const double pn = rng.below(4) == 0 ? 0.0 : rng.uniform();
        const double c = 1.0 + 3.0 * rng.uniform();
        track("score", std::abs(clipped_score(pw, pn, c) - oracle::score(pw, pn, c)));
    }
    {
        const std::size_t v = 8;
        Corpus dw, dn;
        std::vector<oracle::Seq> ow, on;
        for (int i = 0; i < 40; ++i) {
            TokenSeq a(30), b(30);
            for (auto& t : a) t = static_cast<Token>(1 + rng.below(v - 1));
            for (auto& t : b) t = static_cast<Token>(1 + rng.below(v - 1));
            dw.texts.push_back(a);
            dn.texts.push_back(b);
            ow.emplace_back(a.begin(), a.end());
            on.emplace_back(b.begin(), b.end());
        }
        const auto seals = build_seals(dw, dn, v, 3, SealOptions{2.0, 1});
        for (std::uint32_t n_o = 0; n_o < 8; ++n_o) {
            const auto w = oracle::count(ow, 0, 3, n_o), n = oracle::count(on, 0, 3, n_o);
            for (int q = 0; q < kTrials / 8; ++q) {
                const oracle::Seq octx = {static_cast<int>(rng.below(v)), static_cast<int>(rng.below(v)),
                                          static_cast<int>(rng.below(v))};
                const TokenSeq ctx(octx.begin(), octx.end());
                const Impression im = seals[n_o].impression(ctx);
                for (std::size_t t = 0; t < v; ++t)
                    track("seal score", std::abs(im[t] - oracle::seal_score(w, n, octx, n_o, static_cast<int>(t), 2.0)));
            }
        }
    }
    // omega
    for (int i = 0; i < kTrials; ++i) {
        const std::size_t v = 2 + rng.below(30);
        auto im = randvec(rng, v, 0.0, 1.0);
        if (rng.below(10) == 0) std::fill(im.begin(), im.end(), 0.0);
        auto wc = randvec(rng, v, 0.0, 1.0);
        auto p = randvec(rng, v, 0.0, 1.0);
        for (std::size_t t = 0; t < v; ++t)
            if (rng.below(5) == 0) p[t] = 0.25;  // ties in V_k
        SelectionParams sp;
        sp.top_k = 1 + rng.below(v + 2);
        sp.use_dgr = rng.below(2) == 0;
        sp.use_wc = rng.below(2) == 0;
        sp.use_gp = rng.below(2) == 0;
        std::vector<Token> vk;
        if (sp.use_dgr) {
            vk = top_k_set(p, sp.top_k);
        } else {
            for (std::size_t t = 0; t < v; ++t) vk.push_back(static_cast<Token>(t));
        }
        track("omega", std::abs(omega(im, wc, vk, sp) -
                                oracle::omega(im, wc, p, sp.top_k, sp.use_dgr, sp.use_wc, sp.use_gp)));
    }
    // logits modification
    for (int i = 0; i < kTrials; ++i) {
        const std::size_t v = 1 + rng.below(64);
        const auto l = randvec(rng, v, -10, 10), im = randvec(rng, v, 0, 1);
        const double d = -8.0 + 16.0 * rng.uniform();
        track("modify_logits", max_abs_diff(modify_logits(l, im, d), oracle::modify(l, im, d)));
    }
    // KGW embedding
    for (int i = 0; i < kTrials; ++i) {
        const std::size_t v = 4 + rng.below(61);
        WatermarkParams wp;
        wp.gamma = 0.1 + 0.8 * rng.uniform();
        wp.delta = 4.0 * rng.uniform();
        const Code code{rng.next()};
        const auto l = randvec(rng, v, -6, 6);
        const auto perm = vocab_permutation(code, v);
        std::vector<bool> green(v, false);
        for (std::size_t k = 0; k < wp.green_count(v); ++k) green[static_cast<std::size_t>(perm[k])] = true;
        track("kgw", max_abs_diff(kgw_embed(l, kgw_impression(code, wp, v)), oracle::kgw(l, green, wp.delta)));
    }
    // Unbiased reweighting
    for (int i = 0; i < kTrials; ++i) {
        const std::size_t v = 2 + rng.below(63);
        auto raw = randvec(rng, v, 0, 1);
        double s = 0;
        for (double x : raw) s += x;
        for (double& x : raw) x /= s;
        const Code code{rng.next()};
        const auto perm = vocab_permutation(code, v);
        track("unbiased", max_abs_diff(unbiased_reweight(raw, code),
                                       oracle::unbiased(raw, std::vector<int>(perm.begin(), perm.end()))));
    }
    // WS combination
    for (int i = 0; i < kTrials; ++i) {
        const std::size_t v = 1 + rng.below(64);
        const auto a = randvec(rng, v, 0, 1), b = randvec(rng, v, 0, 1), c = randvec(rng, v, 0, 1);
        std::array<double, 3> w{rng.uniform(), rng.uniform(), rng.uniform()};
        if (rng.below(4) == 0) w[rng.below(3)] = 0.0;
        const std::array<Impression, 3> parts{a, b, c};
        track("ws_combine", max_abs_diff(ws_combine(parts, w), oracle::ws_combine(a, b, c, w[0], w[1], w[2])));
    }
    std::string names;
    for (auto& f : failed) names += " " + f;
    return {failed.empty(), fmt("7 formulas x 1000 random inputs, max |err| = %.3g%s", worst,
                                failed.empty() ? "" : (" failing:" + names).c_str())};
}

// ---------------------------------------------------------------- 2

Outcome tournament() {
    RngStream rng(0xC2);
    double worst = 0.0;
    int cases = 0;
    for (int m = 1; m <= 3; ++m)
        for (std::size_t v = 2; v <= 8; ++v)
            for (int rep = 0; rep < (m == 3 && v > 6 ? 2 : 5); ++rep) {
                auto p = randvec(rng, v, 0, 1);
                if (rep == 1) p[rng.below(v)] = 0.0;
                double s = 0;
                for (double x : p) s += x;
                for (double& x : p) x /= s;
                GValues g;
                g.m = static_cast<std::size_t>(m);
                g.vocab_size = v;
                std::vector<std::vector<int>> og(static_cast<std::size_t>(m), std::vector<int>(v));
                for (int layer = 0; layer < m; ++layer)
                    for (std::size_t t = 0; t < v; ++t) {
                        const auto b = static_cast<std::uint8_t>(rng.below(2));
                        g.bits.push_back(b);
                        og[static_cast<std::size_t>(layer)][t] = b;
                    }
                const auto got = synthid_winner_distribution(p, g);
                const auto want = oracle::tournament(p, og);
                double tv = 0.0;
                for (std::size_t t = 0; t < v; ++t) tv += 0.5 * std::abs(got[t] - want[t]);
                worst = std::max(worst, tv);
                ++cases;
            }
    return {worst <= 1e-12, fmt("%d cases (m<=3, |V|<=8), max TV = %.3g", cases, worst)};
}

// ---------------------------------------------------------------- 3

Outcome unbiasedness() {
    RngStream rng(0xC3);
    const std::size_t v = 8;
    auto p = randvec(rng, v, 0, 1);
    double s = 0;
    for (double x : p) s += x;
    for (double& x : p) x /= s;
    std::vector<double> avg(v, 0.0);
    constexpr int kCodes = 10000;
    for (int i = 0; i < kCodes; ++i) {
        const auto pw = unbiased_reweight(p, Code{rng.next()});
        for (std::size_t t = 0; t < v; ++t) avg[t] += pw[t] / kCodes;
    }
    double l1 = 0.0;
    for (std::size_t t = 0; t < v; ++t) l1 += std::abs(avg[t] - p[t]);
    return {l1 <= 0.05, fmt("|V|=8, 10^4 codes, L1 = %.4f (<= 0.05)", l1)};
}

// ---------------------------------------------------------------- 4

Outcome calibration() {
    Lab& l = lab();
    const auto& ctl = l.controls();
    std::string detail;
    bool ok = true;
    const RngStream keys(0xC4);
    for (Scheme s : kSchemes) {
        // null: unwatermarked texts scored under independent random keys
        std::vector<double> scores(ctl.texts.size());
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const Watermark wm(victim(s).params, SecretKey{keys.split(i).next()}, g_config.lm.vocab_size);
            scores[i] = wm.detect(ctl.texts[i], ctl.prompts[i], &l.victim_lm());
        }
        const double m = mean(scores);
        double ss = 0.0;
        for (double x : scores) ss += (x - m) * (x - m);
        const double se = std::sqrt(ss / static_cast<double>(scores.size() - 1) / static_cast<double>(scores.size()));
        double null_value = 0.0, tol = 0.0;
        switch (s) {
            case Scheme::KGW: tol = 0.15; break;
            case Scheme::SynthID: null_value = 0.5; tol = 0.01; break;
            case Scheme::Unbiased: tol = 3.0 * se; break;
        }
        const bool null_ok = std::abs(m - null_value) <= tol;
        RunPoint p = base_point(g_config);
        p.mode = Mode::NoAttack;
        p.method = {Method::None, 0};
        p.victim = victim(s);
        const auto r = l.run_point(p);
        const bool auc_ok = r.report.auc >= 0.99;
        ok = ok && null_ok && auc_ok;
        detail += fmt("%s null %.4f (%g +- %.4f) w/o-attack AUC %.4f; ", std::string(to_string(s)).c_str(), m,
                      null_value, tol, r.report.auc);
    }
    return {ok, detail};
}

// ---------------------------------------------------------------- 5

Outcome matched_seal() {
    bool ok = true;
    std::string detail;
    const std::size_t patterns = std::size_t{1} << g_config.steal.ctx_len;
    for (int len = 1; len <= 3; ++len) {
        const WatermarkSpec v = victim(Scheme::KGW, HashScheme::Left, len);
        const std::uint32_t matched = 1U << (len - 1);
        std::vector<double> aucs;
        for (std::uint32_t n_o = 0; n_o < patterns; ++n_o)
            aucs.push_back(spoof(v, {Method::SingleSeal, n_o}).report.auc);
        const double best = *std::max_element(aucs.begin(), aucs.end());
        const bool row_ok = aucs[matched] >= best;
        ok = ok && row_ok;
        detail += fmt("ctx%d n_o=%u [", len, matched);
        for (double a : aucs) detail += fmt(" %.4f", a);
        detail += fmt(" ]%s; ", row_ok ? "" : " not max");
        if (len != 3) lab().drop(v);
    }
    const std::vector<WatermarkSpec> unknown = {
        victim(Scheme::KGW, HashScheme::Left, 1), victim(Scheme::KGW, HashScheme::Left, 2),
        victim(Scheme::KGW, HashScheme::Left, 3), victim(Scheme::KGW, HashScheme::Left, 4),
        victim(Scheme::KGW, HashScheme::Min, 3),  victim(Scheme::KGW, HashScheme::Max, 3)};
    double as = 0.0, ave = 0.0;
    for (const auto& v : unknown) {
        as += spoof(v, {Method::AS, 0}).report.auc / static_cast<double>(unknown.size());
        ave += spoof(v, {Method::AVE, 0}).report.auc / static_cast<double>(unknown.size());
        if (v.id() != victim(Scheme::KGW).id()) lab().drop(v);
    }
    ok = ok && as >= ave;
    detail += fmt("Unknown AUC AS %.4f vs AVE %.4f", as, ave);
    return {ok, detail};
}

// ---------------------------------------------------------------- 6

Outcome method_ordering() {
    bool ok = true;
    std::string detail;
    for (Scheme s : kSchemes) {
        const auto v = victim(s);
        const auto as = spoof(v, {Method::AS, 0}).report, ws = spoof(v, {Method::WS, 0}).report,
                   none = spoof(v, {Method::None, 0}).report;
        const bool row = as.mean_wcs > ws.mean_wcs && ws.mean_wcs > none.mean_wcs && as.auc > ws.auc &&
                         ws.auc > none.auc && as.auc - ws.auc >= 0.02;
        ok = ok && row;
        detail += fmt("%s WCS %.3f/%.3f/%.3f AUC %.3f/%.3f/%.3f; ", std::string(to_string(s)).c_str(), as.mean_wcs,
                      ws.mean_wcs, none.mean_wcs, as.auc, ws.auc, none.auc);
    }
    return {ok, "AS/WS/none " + detail};
}

// ---------------------------------------------------------------- 7

Outcome scrubbing() {
    bool ok = true;
    std::string detail;
    for (Scheme s : kSchemes) {
        const auto v = victim(s);
        const double plain = scrub_run(v, {Method::None, 0}).report.auc;
        const double as = scrub_run(v, {Method::AS, 0}).report.auc;
        ok = ok && as <= plain && as <= 0.60;
        detail += fmt("%s paraphrase %.3f AS %.3f; ", std::string(to_string(s)).c_str(), plain, as);
    }
    return {ok, "AUC " + detail};
}

// ---------------------------------------------------------------- 8

Outcome ablation_gp() {
    const auto v = victim(Scheme::KGW);
    const auto full = spoof(v, {Method::AS, 0}).report, no_gp = spoof(v, {Method::AS, 0}, -1, 0, "no_gp").report;
    const double t = paired_t(full.positives, no_gp.positives);
    return {t > 2.576 && no_gp.mean_wcs < full.mean_wcs,
            fmt("KGW WCS full %.3f vs w/o GP %.3f, paired t = %.2f over %zu prompts (> 2.576)", full.mean_wcs,
                no_gp.mean_wcs, t, full.positives.size())};
}

// ---------------------------------------------------------------- 9

Outcome dw_sweep() {
    const auto v = victim(Scheme::KGW);
    const std::size_t full = g_config.corpus.num_texts;
    std::vector<std::size_t> sizes = {100, 1000, full};
    std::vector<std::vector<double>> wcs;
    std::string detail;
    for (auto n : sizes) {
        wcs.push_back(spoof(v, {Method::AS, 0}, -1, n).report.positives);
        detail += fmt("|D_w|=%zu WCS %.3f; ", n, mean(wcs.back()));
    }
    bool ok = mean(wcs[2]) > mean(wcs[0]);
    for (std::size_t i = 1; i < wcs.size(); ++i) {
        // allow a drop of two standard errors of the paired difference
        std::vector<double> d(wcs[i].size());
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = wcs[i][k] - wcs[i - 1][k];
        const double m = mean(d);
        double ss = 0;
        for (double x : d) ss += (x - m) * (x - m);
        const double se = std::sqrt(ss / static_cast<double>(d.size() - 1) / static_cast<double>(d.size()));
        ok = ok && m >= -2.0 * se;
    }
    return {ok, detail};
}

// ---------------------------------------------------------------- 10

Outcome delta_tradeoff() {
    const auto v = victim(Scheme::KGW);
    const auto lo = spoof(v, {Method::AS, 0}, 1.0).report, hi = spoof(v, {Method::AS, 0}, 8.0).report;
    return {hi.auc >= lo.auc && hi.mean_ppl >= lo.mean_ppl,
            fmt("delta_att 1 -> 8: AUC %.3f -> %.3f, PPL %.2f -> %.2f", lo.auc, hi.auc, lo.mean_ppl, hi.mean_ppl)};
}

// ---------------------------------------------------------------- 11

Outcome metric_oracles() {
    RngStream rng(0xCB);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t np = 1 + rng.below(150), nn = 1 + rng.below(250);
        std::vector<double> pos(np), neg(nn);
        const bool coarse = trial % 2 == 0;  // coarse grid forces ties
        for (double& x : pos) x = coarse ? static_cast<double>(rng.below(10)) : rng.normal() + 0.5;
        for (double& x : neg) x = coarse ? static_cast<double>(rng.below(8)) : rng.normal();
        const double fpr = trial % 3 == 0 ? 0.01 : 0.1 * rng.uniform();
        worst = std::max(worst, std::abs(auc(pos, neg) - oracle::auc(pos, neg)));
        worst = std::max(worst, std::abs(tpr_at_fpr(pos, neg, fpr) - oracle::tpr_at_fpr(pos, neg, fpr)));
    }
    std::vector<double> pos(10000), neg(10000);
    for (double& x : pos) x = rng.uniform();
    for (double& x : neg) x = rng.uniform();
    const double random_tpr = tpr_at_fpr(pos, neg, 0.01);
    const double random_auc = auc(pos, neg);
    return {worst <= 1e-12 && std::abs(random_tpr - 0.01) <= 0.01,
            fmt("200 random cases, max |err| = %.3g; random classifier AUC %.3f TPR@1%% %.4f", worst, random_auc,
                random_tpr)};
}

// ---------------------------------------------------------------- 12

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome reproducibility() {
    if (g_cli.empty()) return {false, "no CLI path given"};
    const fs::path root = fs::temp_directory_path() / ("wmsteal-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg = root / "config.json";
    {
        std::ofstream out(cfg);
        json j = to_json(g_config);
        j["eval"]["sweep"]["methods"] = {"AS", "WS", "none"};
        out << j.dump(2);
    }
    std::vector<std::string> csvs;
    for (const char* run : {"a", "b"}) {
        const fs::path out = root / run;
        for (const char* cmd : {"gen-corpus", "forge", "eval"}) {
            const std::string line = "\"" + g_cli + "\" " + cmd + " --config \"" + cfg.string() + "\" --out \"" +
                                     out.string() + "\" > \"" + (root / "log.txt").string() + "\" 2>&1";
            if (std::system(line.c_str()) != 0) return {false, std::string("pipeline step failed: ") + cmd};
        }
        csvs.push_back(slurp(out / "results" / "results.csv"));
    }
    fs::remove_all(root);
    const bool same = !csvs[0].empty() && csvs[0] == csvs[1];
    return {same, fmt("two gen-corpus/forge/eval runs, results.csv %zu bytes, %s", csvs[0].size(),
                      same ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) {
            std::ifstream in(argv[++i]);
            g_config = config_from_json(json::parse(in));
        } else if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
        } else if (a == "--cli" && i + 1 < argc) {
            g_cli = argv[++i];
        } else {
            std::fprintf(stderr, "unknown argument %s\n", a.c_str());
            return 2;
        }
    }
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"formula exactness", formula_exactness},
        {"SynthID tournament", tournament},
        {"Unbiased reweighting is unbiased", unbiasedness},
        {"detector calibration", calibration},
        {"matched-seal dominance", matched_seal},
        {"method ordering", method_ordering},
        {"scrubbing", scrubbing},
        {"GP ablation", ablation_gp},
        {"|D_w| sweep", dw_sweep},
        {"delta_att trade-off", delta_tradeoff},
        {"metric oracles", metric_oracles},
        {"reproducibility", reproducibility},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += !o.pass;
        std::printf("[%s] %2d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
