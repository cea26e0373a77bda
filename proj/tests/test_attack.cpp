#include <gtest/gtest.h>

#include <wmsteal/attack.hpp>

#include "oracles.hpp"

using namespace wmsteal;

namespace {

constexpr std::size_t kV = 16;

const ToyLM& lm16() {
    static const ToyLM lm([] {
        LmSpec s;
        s.seed = 5;
        s.vocab_size = kV;
        return s;
    }());
    return lm;
}

Corpus sample_corpus(std::uint64_t seed, std::size_t n) {
    RngStream rng(seed);
    Corpus c;
    for (std::size_t i = 0; i < n; ++i) c.texts.push_back(generate(lm16(), {}, 60, nullptr, rng));
    return c;
}

Arsenal arsenal_from(const Corpus& w, const Corpus& n, int ctx_len = 3) {
    return forge_arsenal(SharedCounts::from(count_all(w, kV, ctx_len, true)),
                         SharedCounts::from(count_all(n, kV, ctx_len, true)), kV, {});
}

const Arsenal& toy_arsenal() {
    static const Arsenal a = arsenal_from(sample_corpus(1, 60), sample_corpus(2, 60));
    return a;
}

Arsenal empty_arsenal() {
    // one observation per table and no informative ratio: D_w equals D_n
    Corpus c;
    c.texts = {{1, 1, 1, 1}};
    Arsenal a = arsenal_from(c, c);
    for (auto& s : a.seals) s.min_support = 1000;
    return a;
}

}  // namespace

TEST(ModifyLogits, Examples) {
    EXPECT_EQ(modify_logits(LogitVector{1, 1}, Impression{0, 1}, 4.0), (LogitVector{1, 5}));
    EXPECT_EQ(modify_logits(LogitVector{1, 1}, Impression{0, 1}, 0.0), (LogitVector{1, 1}));
    EXPECT_EQ(modify_logits(LogitVector{1, 1}, Impression{0, 1}, -4.0), (LogitVector{1, -3}));
    EXPECT_THROW(modify_logits(LogitVector{1}, Impression{0, 1}, 1.0), InputError);
}

TEST(ModifyLogits, MatchesOracle) {
    RngStream rng(3);
    for (int i = 0; i < 50; ++i) {
        LogitVector l(kV);
        Impression im(kV);
        for (double& x : l) x = rng.normal();
        for (double& x : im) x = rng.uniform();
        const double d = 8.0 * rng.uniform() - 4.0;
        EXPECT_EQ(modify_logits(l, im, d), oracle::modify(l, im, d));
    }
}

TEST(Method, Parse) {
    for (Method m : {Method::AS, Method::WS, Method::AVE, Method::SingleSeal, Method::None})
        EXPECT_EQ(parse_method(to_string(m)), m);
    EXPECT_THROW(parse_method("best"), ConfigError);
}

TEST(AttackImpression, AveIsMeanOfOrderedSeals) {
    const Arsenal& a = toy_arsenal();
    AttackParams p;
    p.method = Method::AVE;
    const TokenSeq ctx{3, 1, 2};
    const Impression got = attack_impression(a, p, ctx, ProbDist(kV, 1.0 / kV));
    for (std::size_t t = 0; t < kV; ++t) {
        double s = 0.0;
        for (const auto& seal : a.seals) s += seal.impression(ctx)[t];
        EXPECT_NEAR(got[t], s / 8.0, 1e-15);
    }
}

TEST(AttackImpression, WsDefaultIsFullSeal) {
    const Arsenal& a = toy_arsenal();
    AttackParams p;
    p.method = Method::WS;
    const TokenSeq ctx{2, 1, 3};
    EXPECT_EQ(attack_impression(a, p, ctx, ProbDist(kV, 1.0 / kV)), a.ws->full.impression(ctx));
}

TEST(AttackImpression, SingleAndAs) {
    const Arsenal& a = toy_arsenal();
    AttackParams p;
    p.method = Method::SingleSeal;
    p.single_seal = 5;
    const TokenSeq ctx{1, 2, 1};
    EXPECT_EQ(attack_impression(a, p, ctx, ProbDist(kV, 1.0 / kV)), a.seals[5].impression(ctx));
    p.single_seal = 8;
    EXPECT_THROW(attack_impression(a, p, ctx, ProbDist(kV, 1.0 / kV)), ConfigError);
    p.method = Method::AS;
    SelectionTrace trace;
    const ProbDist probs = softmax(lm16().logits(ctx));
    const Impression im = attack_impression(a, p, ctx, probs, &trace);
    ASSERT_EQ(trace.size(), 1u);
    EXPECT_EQ(im, a.seals[trace[0].chosen].impression(ctx));
}

TEST(Spoof, NoneIsPlainGeneration) {
    AttackParams p;
    p.method = Method::None;
    p.gen_len = 40;
    RngStream r1(4), r2(4);
    const SpoofOutput out = spoof_generate(lm16(), TokenSeq{1}, p, toy_arsenal(), r1);
    EXPECT_EQ(out.text, generate(lm16(), TokenSeq{1}, 40, nullptr, r2));
    EXPECT_TRUE(out.trace.empty());
}

TEST(Spoof, ZeroTablesEqualNone) {
    const Arsenal a = empty_arsenal();
    AttackParams single;
    single.method = Method::SingleSeal;
    single.single_seal = 7;
    single.gen_len = 50;
    AttackParams none = single;
    none.method = Method::None;
    RngStream r1(5), r2(5);
    EXPECT_EQ(spoof_generate(lm16(), TokenSeq{2}, single, a, r1).text,
              spoof_generate(lm16(), TokenSeq{2}, none, a, r2).text);
}

TEST(Spoof, AsTraceHasOneStepPerToken) {
    AttackParams p;
    p.gen_len = 30;
    RngStream rng(6);
    const SpoofOutput out = spoof_generate(lm16(), {}, p, toy_arsenal(), rng);
    EXPECT_EQ(out.text.size(), 30u);
    ASSERT_EQ(out.trace.size(), 30u);
    for (const auto& step : out.trace) {
        EXPECT_EQ(step.omegas.size(), 8u);
        EXPECT_EQ(step.omegas[step.chosen], *std::max_element(step.omegas.begin(), step.omegas.end()));
    }
}

TEST(Spoof, PushesTowardImpression) {
    // with a large delta the attacker lands on tokens the chosen seal scores
    AttackParams p;
    p.method = Method::SingleSeal;
    p.single_seal = 0;
    p.delta_att = 30.0;
    p.gen_len = 100;
    RngStream rng(7);
    const auto& a = toy_arsenal();
    const SpoofOutput out = spoof_generate(lm16(), {}, p, a, rng);
    const Impression im = a.seals[0].impression(TokenSeq{0, 0, 0});
    std::size_t hits = 0;
    for (Token t : out.text) hits += im[static_cast<std::size_t>(t)] > 0.0;
    EXPECT_GT(hits, 95u);
}

TEST(Spoof, Errors) {
    AttackParams p;
    p.delta_att = -1.0;
    RngStream rng(8);
    EXPECT_THROW(spoof_generate(lm16(), {}, p, toy_arsenal(), rng), ConfigError);
    p.delta_att = 4.0;
    p.gen_len = 0;
    EXPECT_THROW(spoof_generate(lm16(), {}, p, toy_arsenal(), rng), ConfigError);
    const ToyLM big{LmSpec{}};
    p.gen_len = 10;
    EXPECT_THROW(spoof_generate(big, {}, p, toy_arsenal(), rng), ConfigError);
}

TEST(Scrub, KeepAllIsIdentity) {
    AttackParams p;
    p.keep_prob = 1.0;
    p.delta_att = 0.0;
    RngStream rng(9);
    const TokenSeq victim = generate(lm16(), {}, 80, nullptr, rng);
    EXPECT_EQ(scrub(victim, {}, lm16(), p, toy_arsenal(), rng), victim);
}

TEST(Scrub, KeepBonus) {
    EXPECT_DOUBLE_EQ(keep_bonus(0.0), 0.0);
    EXPECT_NEAR(keep_bonus(0.5), std::log(2.0), 1e-15);
    EXPECT_TRUE(std::isinf(keep_bonus(1.0)));
    EXPECT_THROW(keep_bonus(1.5), ConfigError);
}

TEST(Scrub, LengthAndFidelity) {
    AttackParams p;
    p.method = Method::None;
    p.delta_att = 0.0;
    RngStream rng(10);
    const TokenSeq victim = generate(lm16(), {}, 400, nullptr, rng);
    auto kept = [&](double rho) {
        p.keep_prob = rho;
        RngStream r(11);
        const TokenSeq out = scrub(victim, {}, lm16(), p, toy_arsenal(), r);
        EXPECT_EQ(out.size(), victim.size());
        std::size_t same = 0;
        for (std::size_t i = 0; i < out.size(); ++i) same += out[i] == victim[i];
        return same;
    };
    const std::size_t low = kept(0.0), mid = kept(0.5), high = kept(0.99);
    EXPECT_LT(low, mid);
    EXPECT_LT(mid, high);
    // bonus ln 100 on a token of mass ~1/16 keeps it with probability ~0.87
    EXPECT_GT(high, 320u);
}

TEST(Scrub, Errors) {
    AttackParams p;
    p.delta_att = 4.0;
    RngStream rng(11);
    EXPECT_THROW(scrub(TokenSeq{1, 2}, {}, lm16(), p, toy_arsenal(), rng), ConfigError);
    p.delta_att = -4.0;
    EXPECT_THROW(scrub(TokenSeq{}, {}, lm16(), p, toy_arsenal(), rng), InputError);
    EXPECT_THROW(scrub(TokenSeq{1, 99}, {}, lm16(), p, toy_arsenal(), rng), InputError);
}
