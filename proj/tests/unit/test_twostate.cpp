#include <gtest/gtest.h>

#include <cmath>

#include "ehist/twostate.hpp"
#include "generators.hpp"

using namespace ehist;

namespace {

using Slots = std::vector<std::optional<MeasurementSetting>>;

HistoryState string_of(std::vector<Matrix> slots, cplx c = 1.0) { return HistoryState(ElementaryHistory(std::move(slots)), c); }

// Outcome weight by explicit collapse: apply U_k then P_k in turn to rho.
double collapse_weight(Matrix rho, const Slots& slots, const std::vector<Matrix>& u, const std::string& key,
                       const std::optional<Ket>& post) {
  std::size_t m = 0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    rho = u[k] * rho * dagger(u[k]);
    if (!slots[k]) continue;
    const Matrix& p = slots[k]->projector(key[m++] == '+' ? 1 : -1);
    rho = p * rho * p;
  }
  rho = u.back() * rho * dagger(u.back());
  return post ? trace(post->projector() * rho).real() : trace(rho).real();
}

}  // namespace

TEST(MeasurementSetting, ProjectorsResolveIdentity) {
  for (const auto& s : {MeasurementSetting::X(), MeasurementSetting::Y(), MeasurementSetting::bloch(0.3, 1.1)}) {
    EXPECT_LE(max_abs_diff(s.projector(1) + s.projector(-1), pauli::I()), 1e-12);
    EXPECT_LE(max_abs_diff(s.projector(1) * s.projector(-1), Matrix(2, 2)), 1e-12);
  }
}

TEST(MeasurementSetting, RejectsNonDichotomic) {
  EXPECT_THROW(MeasurementSetting("bad", proj::z_plus()), ArgumentError);
  EXPECT_THROW(MeasurementSetting("bad", Matrix{{0, 1}, {0, 0}}), ArgumentError);
}

TEST(Abl, Examples) {
  const TwoTimeExperiment z(kets::zero(), kets::zero(), {MeasurementSetting::Z()});
  EXPECT_NEAR(abl_probability(z, 0, 1), 1.0, 1e-12);
  const TwoTimeExperiment x(kets::zero(), kets::zero(), {MeasurementSetting::X()});
  // |<0|x+><x+|0>|^2 = 1/4 for either outcome, normalized to 1/2
  EXPECT_NEAR(abl_probability(x, 0, 1), 0.5, 1e-12);
  EXPECT_NEAR(abl_probability(x, 0, -1), 0.5, 1e-12);
  const TwoTimeExperiment orth(kets::zero(), kets::one(), {MeasurementSetting::Z()});
  EXPECT_THROW(abl_probability(orth, 0, 1), ImpossiblePostselectionError);
}

TEST(Abl, PreconditionErrors) {
  const TwoTimeExperiment nopost(kets::zero(), std::nullopt, {MeasurementSetting::X()});
  EXPECT_THROW(abl_probability(nopost, 0, 1), ArgumentError);
  const TwoTimeExperiment two(kets::zero(), kets::zero(), {MeasurementSetting::X(), MeasurementSetting::X()});
  EXPECT_THROW(abl_probability(two, 0, 1), ArgumentError);
}

TEST(Experiment, Invariants) {
  EXPECT_THROW(TwoTimeExperiment(Ket{1, 1}, std::nullopt, {MeasurementSetting::Z()}), ArgumentError);
  EXPECT_THROW(TwoTimeExperiment(kets::zero(), std::nullopt, {MeasurementSetting::Z()}, {pauli::I()}), ArgumentError);
  EXPECT_THROW(TwoTimeExperiment(kets::zero(), std::nullopt, {MeasurementSetting::Z()}, {pauli::I(), proj::z_plus()}),
               ArgumentError);
}

TEST(SequenceDistribution, PostSelectedXX) {
  const TwoTimeExperiment e(kets::zero(), kets::zero(), {MeasurementSetting::X(), MeasurementSetting::X()});
  const auto d = sequence_distribution(e);
  // amplitudes <0|x+ x+|0> = 1/2, <0|x- x-|0> = 1/2, cross chains vanish
  EXPECT_NEAR(d.probability("++"), 0.5, 1e-12);
  EXPECT_NEAR(d.probability("--"), 0.5, 1e-12);
  EXPECT_NEAR(d.probability("+-"), 0.0, 1e-12);
  EXPECT_NEAR(d.probability("-+"), 0.0, 1e-12);
  EXPECT_EQ(d.render_outcome("+-"), "t1:+ t2:-");
}

TEST(SequenceDistribution, PureZ) {
  const auto d = sequence_distribution(TwoTimeExperiment(kets::zero(), std::nullopt, {MeasurementSetting::Z()}));
  EXPECT_NEAR(d.probability("+"), 1.0, 1e-12);
  EXPECT_NEAR(d.probability("-"), 0.0, 1e-12);
}

TEST(MixedSequenceDistribution, MaximallyMixed) {
  const Matrix half = 0.5 * pauli::I();
  const auto xy = mixed_sequence_distribution(half, {MeasurementSetting::X(), MeasurementSetting::Y()});
  for (const auto& k : outcome_strings(2)) EXPECT_NEAR(xy.probability(k), 0.25, 1e-12);
  const auto xyz = mixed_sequence_distribution(half, {MeasurementSetting::X(), MeasurementSetting::Y(), MeasurementSetting::Z()});
  ASSERT_EQ(xyz.table.size(), 8u);
  for (const auto& k : outcome_strings(3)) EXPECT_NEAR(xyz.probability(k), 0.125, 1e-12);
  EXPECT_NEAR(mixed_sequence_distribution(proj::z_plus(), {MeasurementSetting::Z()}).probability("+"), 1.0, 1e-12);
}

TEST(MixedSequenceDistribution, RejectsBadDensity) {
  EXPECT_THROW(mixed_sequence_distribution(pauli::I(), {MeasurementSetting::Z()}), ArgumentError);
  EXPECT_THROW(mixed_sequence_distribution(Matrix{{1.5, 0}, {0, -0.5}}, {MeasurementSetting::Z()}), ArgumentError);
}

TEST(OutcomeStrings, Ordering) {
  EXPECT_EQ(outcome_strings(2), (std::vector<std::string>{"++", "+-", "-+", "--"}));
}

TEST(HistoryBundle, PostSelectedXX) {
  const TwoTimeExperiment e(kets::zero(), kets::zero(), {MeasurementSetting::X(), MeasurementSetting::X()});
  const auto b = history_bundle(e);
  ASSERT_EQ(b.entries.size(), 2u);
  EXPECT_EQ(b.entries[0].outcome, "++");
  EXPECT_EQ(b.entries[1].outcome, "--");
  const HistoryState want = string_of({proj::z_plus(), proj::x_plus(), proj::x_plus(), proj::z_plus()});
  EXPECT_NEAR(std::abs(hs_inner(want, b.entries[0].history)), 1.0, 1e-12);
  EXPECT_NEAR(b.entries[0].probability, 0.5, 1e-12);
}

TEST(HistoryBundle, SingleZ) {
  const auto b = history_bundle(TwoTimeExperiment(kets::zero(), kets::zero(), {MeasurementSetting::Z()}));
  ASSERT_EQ(b.entries.size(), 1u);
  EXPECT_NEAR(b.entries[0].probability, 1.0, 1e-12);
}

TEST(CoherentBundle, ProductHistory) {
  const HistoryState h = string_of({proj::z_plus(), proj::z_plus()});
  const auto r = coherent_bundle_probability(h, BridgingSet::trivial(h.grid()), {{1, {MeasurementSetting::Z(), 1}}});
  EXPECT_NEAR(r.normalized, 1.0, 1e-12);
}

TEST(CoherentBundle, TemporalGhzXYZ) {
  const Matrix zp = proj::z_plus(), zm = proj::z_minus();
  const HistoryState g = normalize(kInvSqrt2 * (string_of({zp, zp, zp, zp, zp}) + string_of({zm, zm, zm, zm, zm})));
  // Oracle: amplitude (1/sqrt2) <0| z+ y+ x+ |0> = (1/sqrt2) (1 - i)/4, branch |1> is killed by z+.
  const cplx oracle_amp = kInvSqrt2 * (matmul(proj::z_plus(), matmul(proj::y_plus(), proj::x_plus())))(0, 0);
  EXPECT_NEAR(std::abs(oracle_amp - kInvSqrt2 * cplx(0.25, -0.25)), 0.0, 1e-15);
  const double oracle = std::norm(oracle_amp);
  EXPECT_NEAR(oracle, 1.0 / 16.0, 1e-15);
  const auto r = coherent_bundle_probability(
      g, BridgingSet::trivial(g.grid()),
      {{1, {MeasurementSetting::X(), 1}}, {2, {MeasurementSetting::Y(), 1}}, {3, {MeasurementSetting::Z(), 1}}});
  EXPECT_NEAR(r.unnormalized, oracle, 1e-12);

  // collapse comparator: I/2 through X, Y, Z
  const Slots xyz{MeasurementSetting::X(), MeasurementSetting::Y(), MeasurementSetting::Z()};
  const double collapse = collapse_weight(0.5 * pauli::I(), xyz, std::vector<Matrix>(4, pauli::I()), "+++", std::nullopt);
  EXPECT_NEAR(collapse, 0.125, 1e-15);
  EXPECT_NEAR(mixed_sequence_distribution(0.5 * pauli::I(), xyz).probability("+++"), collapse, 1e-12);
}

TEST(CoherentBundle, RequiresNormalizedHistory) {
  const HistoryState h = string_of({proj::z_plus(), proj::z_plus()}, 2.0);
  EXPECT_THROW(coherent_bundle_probability(h, BridgingSet::trivial(h.grid()), {{1, {MeasurementSetting::Z(), 1}}}),
               ArgumentError);
}

TEST(Marginals, MaximallyMixedXZ) {
  std::map<SettingPair, OutcomeDistribution> fam;
  for (const auto& x : {MeasurementSetting::X(), MeasurementSetting::Z()})
    for (const auto& y : {MeasurementSetting::X(), MeasurementSetting::Z()})
      fam[{x.label(), y.label()}] = mixed_sequence_distribution(0.5 * pauli::I(), {x, y});
  const auto r = marginal_independence_check(fam);
  EXPECT_LE(r.earlier_deviation, 1e-12);
  EXPECT_FALSE(r.earlier_violation);
}

TEST(Marginals, PureZThenXorZ) {
  std::map<SettingPair, OutcomeDistribution> fam;
  fam[{"Z", "X"}] = sequence_distribution(TwoTimeExperiment(kets::zero(), std::nullopt, {MeasurementSetting::Z(), MeasurementSetting::X()}));
  fam[{"Z", "Z"}] = sequence_distribution(TwoTimeExperiment(kets::zero(), std::nullopt, {MeasurementSetting::Z(), MeasurementSetting::Z()}));
  EXPECT_LE(marginal_independence_check(fam).earlier_deviation, 1e-12);
}

TEST(Marginals, PostSelectedLaterDependenceReportedOnly) {
  std::map<SettingPair, OutcomeDistribution> fam;
  for (const auto& x : {MeasurementSetting::X(), MeasurementSetting::Z()})
    fam[{x.label(), "X"}] = sequence_distribution(TwoTimeExperiment(kets::plus(), kets::zero(), {x, MeasurementSetting::X()}));
  const auto r = marginal_independence_check(fam);
  EXPECT_GT(r.later_deviation, 0.0);
  EXPECT_FALSE(r.earlier_violation);
}

// Properties

TEST(TwostateProperty, PureMatchesMixedWithoutPost) {
  for (int rep = 0; rep < 30; ++rep) {
    const Ket psi = gen::ket(2);
    const Slots slots{gen::setting(), std::nullopt, gen::setting()};
    const std::vector<Matrix> u{gen::unitary(2), gen::unitary(2), gen::unitary(2), gen::unitary(2)};
    const auto a = sequence_distribution(TwoTimeExperiment(psi, std::nullopt, slots, u));
    const auto b = mixed_sequence_distribution(psi.projector(), slots, u);
    for (const auto& k : outcome_strings(2)) EXPECT_NEAR(a.probability(k), b.probability(k), 1e-12);
  }
}

TEST(TwostateProperty, SingleSlotSequenceEqualsAbl) {
  for (int rep = 0; rep < 30; ++rep) {
    const TwoTimeExperiment e(gen::ket(2), gen::ket(2), {gen::setting()}, {gen::unitary(2), gen::unitary(2)});
    const auto d = sequence_distribution(e);
    EXPECT_NEAR(d.probability("+"), abl_probability(e, 0, 1), 1e-12);
    EXPECT_NEAR(d.probability("-"), abl_probability(e, 0, -1), 1e-12);
  }
}

TEST(TwostateProperty, DistributionsSumToOneAndMatchCollapse) {
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t d = 2 + rep % 3;
    const Matrix rho = gen::density(d);
    const Slots slots{gen::setting(d), gen::setting(d)};
    const std::vector<Matrix> u{gen::unitary(d), gen::unitary(d), gen::unitary(d)};
    const auto dist = mixed_sequence_distribution(rho, slots, u);
    EXPECT_NEAR(dist.total(), 1.0, 1e-9);
    double total = 0;
    for (const auto& k : outcome_strings(2)) total += collapse_weight(rho, slots, u, k, std::nullopt);
    for (const auto& k : outcome_strings(2))
      EXPECT_NEAR(dist.probability(k), collapse_weight(rho, slots, u, k, std::nullopt) / total, 1e-12);
  }
}

TEST(TwostateProperty, BundleProbabilitiesAreNormalizedWeights) {
  for (int rep = 0; rep < 30; ++rep) {
    const TwoTimeExperiment e(gen::ket(2), rep % 2 ? std::optional<Ket>(gen::ket(2)) : std::nullopt,
                              {gen::setting(), gen::setting()}, {gen::unitary(2), gen::unitary(2), gen::unitary(2)});
    const auto b = history_bundle(e);
    double total = 0;
    for (const auto& en : b.entries) total += weight(en.history, b.bridging);
    for (const auto& en : b.entries) EXPECT_NEAR(en.probability, weight(en.history, b.bridging) / total, 1e-9);
  }
}

TEST(TwostateProperty, CoherentEqualsCollapseWithPrePostBoundaries) {
  // [post] (.) I (.) I (.) [pre]: the Tr K amplitude is <post|chain|pre><pre|post>,
  // so after normalization it reduces to the post-selected collapse rule.
  for (int rep = 0; rep < 20; ++rep) {
    const Ket pre = gen::ket(2), post = gen::ket(2);
    const MeasurementSetting s1 = gen::setting(), s2 = gen::setting();
    const std::vector<Matrix> u{gen::unitary(2), gen::unitary(2), gen::unitary(2)};
    const HistoryState h = normalize(string_of({pre.projector(), pauli::I(), pauli::I(), post.projector()}));
    const BridgingSet b(h.grid(), u);
    const auto collapse = sequence_distribution(TwoTimeExperiment(pre, post, {s1, s2}, u));
    for (const auto& k : outcome_strings(2)) {
      const auto r = coherent_bundle_probability(h, b, {{1, {s1, outcome_sign(k[0])}}, {2, {s2, outcome_sign(k[1])}}});
      EXPECT_NEAR(r.normalized, collapse.probability(k), 1e-9);
    }
  }
}

TEST(TwostateProperty, CoherentEqualsCollapseOnConsistentInsertions) {
  // post is an eigenstate of the last setting reached from an eigenstate of
  // the first, so only one outcome string survives and D is diagonal.
  for (int rep = 0; rep < 20; ++rep) {
    const MeasurementSetting s1 = gen::setting(), s2 = gen::setting();
    const auto e1 = eigh(s1.observable()), e2 = eigh(s2.observable());
    const Ket pre(e1[rep % 2].vector), post(e2[(rep / 2) % 2].vector);
    const HistoryState h = normalize(string_of({pre.projector(), pauli::I(), pauli::I(), post.projector()}));
    const BridgingSet b = BridgingSet::trivial(h.grid());
    std::vector<HistoryState> family;
    for (const auto& k : outcome_strings(2))
      family.push_back(replace_slots(h, {{1, s1.projector(outcome_sign(k[0]))}, {2, s2.projector(outcome_sign(k[1]))}}));
    ASSERT_TRUE(is_consistent_family(family, b).consistent);
    const auto collapse = sequence_distribution(TwoTimeExperiment(pre, post, {s1, s2}));
    for (const auto& k : outcome_strings(2)) {
      const auto r = coherent_bundle_probability(h, b, {{1, {s1, outcome_sign(k[0])}}, {2, {s2, outcome_sign(k[1])}}});
      EXPECT_NEAR(r.normalized, collapse.probability(k), 1e-9);
    }
  }
}
