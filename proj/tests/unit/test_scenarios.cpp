#include <gtest/gtest.h>

#include <cmath>

#include "ehist/scenarios.hpp"
#include "generators.hpp"

using namespace ehist;

namespace {

std::vector<Matrix> matrix_units() {
  std::vector<Matrix> out;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      Matrix e(2, 2);
      e(r, c) = 1.0;
      out.push_back(e);
    }
  return out;
}

// (a1 (.) a3 | Tr_{0,2} |h)(h| | b1 (.) b3) on a four-slot qubit grid, by basis sums.
cplx traced_02_element(const HistoryState& h, const Matrix& a1, const Matrix& a3, const Matrix& b1, const Matrix& b3) {
  const TimeGrid& g = h.grid();
  cplx s = 0;
  for (const auto& e0 : matrix_units())
    for (const auto& e2 : matrix_units()) {
      const HistoryState l(ElementaryHistory(g, {e0, a1, e2, a3}));
      const HistoryState r(ElementaryHistory(g, {e0, b1, e2, b3}));
      s += hs_inner(l, h) * hs_inner(h, r);
    }
  return s;
}

// Closed form of the Bell-like overlaps on the [e_i] (.) [e_j] (.) [e_k] basis.
std::pair<double, double> overlap_oracle(const std::vector<cplx>& c) {
  double n2 = 0;
  for (auto z : c) n2 += std::norm(z);
  double f01 = 0, f12 = 0;
  for (std::size_t k = 0; k < 2; ++k) f01 += 0.5 * std::norm(c[0 + k] + c[6 + k]);
  for (std::size_t i = 0; i < 2; ++i) f12 += 0.5 * std::norm(c[4 * i + 0] + c[4 * i + 3]);
  return {f01 / n2, f12 / n2};
}

}  // namespace

TEST(Registry, AllScenariosRun) {
  for (const auto& name : scenario_names()) {
    const auto r = run_scenario(name);
    EXPECT_EQ(r.name, name);
    EXPECT_FALSE(r.artifacts.empty());
  }
}

TEST(Registry, UnknownNameListsValid) {
  try {
    run_scenario("bogus");
    FAIL();
  } catch (const ArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find("pauli-cycle"), std::string::npos);
  }
}

TEST(TemporalGhz, ReductionsAreMixtures) {
  const auto r = run_scenario("temporal-ghz");
  EXPECT_NEAR(r.get<double>("purity[t0,t2]"), 0.5, 1e-12);
  EXPECT_NEAR(r.get<double>("purity[t0,t1]"), 0.5, 1e-12);
  EXPECT_NEAR(r.get<double>("purity[t1]"), 0.5, 1e-12);
  EXPECT_TRUE(r.get<HistoryFamily>("branches").report.consistent);
}

TEST(TemporalGhz, SlotLimits) {
  EXPECT_THROW(temporal_ghz(1), ArgumentError);
  EXPECT_THROW(temporal_ghz(9), ArgumentError);
  EXPECT_THROW(temporal_ghz(3, 1.0, 1.0), ArgumentError);
  EXPECT_EQ(temporal_ghz(5).get<double>("slots"), 5.0);
}

TEST(MachZehnder, ReductionIsMixture) {
  const auto r = run_scenario("mach-zehnder");
  EXPECT_NEAR(r.get<double>("purity[t1,t3]"), 0.5, 1e-9);
  EXPECT_LT(r.get<double>("cross_term[t1,t3]"), 1e-12);
  EXPECT_NEAR(r.get<double>("restriction_overlap"), 1.0, 1e-12);
  EXPECT_NEAR(r.get<double>("ghz_weight"), r.get<double>("ghz_branch_weight_sum"), 1e-12);
}

TEST(MachZehnder, ReductionAgreesWithBasisSumOracle) {
  const auto r = run_scenario("mach-zehnder");
  const HistoryState h = normalize(r.get<HistoryState>("ghz_history"));
  const MixedHistory& m = r.get<MixedHistory>("reduction[t1,t3]");
  const TimeGrid kg = h.grid().restrict_to({1, 3});
  const Matrix zp = proj::z_plus(), zm = proj::z_minus();
  // branch strings at (t1, t3): (z+, z-) and (z-, z+)
  const double p1 = traced_02_element(h, zp, zm, zp, zm).real();
  const double p2 = traced_02_element(h, zm, zp, zm, zp).real();
  EXPECT_NEAR(p1, 0.5, 1e-12);
  EXPECT_NEAR(p2, 0.5, 1e-12);
  EXPECT_LT(std::abs(traced_02_element(h, zp, zm, zm, zp)), 1e-12);
  const HistoryState k1(ElementaryHistory(kg, {zp, zm}));
  EXPECT_NEAR(mixed_element(m, k1, k1).real(), p1, 1e-12);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix a1 = gen::matrix(2, 2), a3 = gen::matrix(2, 2), b1 = gen::matrix(2, 2), b3 = gen::matrix(2, 2);
    const cplx want = traced_02_element(h, a1, a3, b1, b3);
    const cplx got = mixed_element(m, HistoryState(ElementaryHistory(kg, {a1, a3})), HistoryState(ElementaryHistory(kg, {b1, b3})));
    EXPECT_LE(std::abs(got - want), 1e-10 * (1 + std::abs(want)));
  }
}

TEST(MachZehnder, BrightPortAndWhichPath) {
  // without which-path measurements everything exits the |0> port
  const Ket out = apply(hadamard() * pauli::X() * hadamard(), kets::zero());
  EXPECT_NEAR(std::norm(out[0]), 1.0, 1e-12);
  // with Z at t1 and t2 the mirror swaps the path: only (+,-) and (-,+)
  const auto d = sequence_distribution(run_scenario("mach-zehnder").get<TwoTimeExperiment>("experiment"));
  EXPECT_NEAR(d.probability("+-"), 0.5, 1e-12);
  EXPECT_NEAR(d.probability("-+"), 0.5, 1e-12);
}

TEST(Example1, FamilyReport) {
  const auto r = run_scenario("example1");
  const auto& fam = r.get<HistoryFamily>("family");
  ASSERT_EQ(fam.members.size(), 4u);
  for (const auto& h : fam.members) EXPECT_NEAR(hs_norm2(h), 1.0, 1e-12);
  EXPECT_EQ(fam.report.decoherence.rows(), 4u);
  EXPECT_NEAR(r.get<double>("phi_norm"), 1.0, 1e-12);
  EXPECT_NEAR(r.get<double>("P(H1|t1:z+)"), 0.5, 1e-12);
  EXPECT_NEAR(r.get<double>("sum12_vs_identity_string"), 0.0, 1e-12);
  EXPECT_NEAR(r.get<double>("tau_ghz_span_weight"), 0.25, 1e-12);
  EXPECT_EQ(r.notes.size(), 2u);
}

TEST(PauliCycle, DualReport) {
  const auto r = run_scenario("pauli-cycle");
  EXPECT_NEAR(r.get<double>("P(+++|XYZ) coherent"), 1.0 / 16.0, 1e-12);
  EXPECT_NEAR(r.get<double>("P(+++|XYZ) collapse"), 1.0 / 8.0, 1e-12);
  EXPECT_NEAR(r.get<double>("reduced_ghz_overlap"), 1.0, 1e-12);
  EXPECT_NEAR(r.get<double>("global_weight"), 0.0, 1e-15);
  EXPECT_LT(r.get<double>("trivial_rewrite_chain_error"), 1e-12);
  EXPECT_NEAR(r.get<double>("correlator XY"), 0.0, 1e-12);
  bool note = false;
  for (const auto& n : r.notes) note = note || n.find("1/16") != std::string::npos;
  EXPECT_TRUE(note);
}

TEST(PauliCycle, InducedBridgingIsPauliSequence) {
  const auto r = run_scenario("pauli-cycle");
  const Matrix want[] = {pauli::X(), pauli::Y(), pauli::Z(), pauli::I()};
  for (std::size_t k = 0; k < 4; ++k) {
    const Matrix& u = r.get<Matrix>("induced_bridging[" + std::to_string(k) + "]");
    // equal up to a global phase
    EXPECT_NEAR(std::abs(hs_inner(want[k], u)), 2.0, 1e-12);
  }
}

TEST(TwoTimeHab, Values) {
  const auto r = run_scenario("two-time-hab");
  EXPECT_EQ(r.get<double>("elementary_terms"), 1.0);
  EXPECT_NEAR(r.get<double>("slot_linear_entropy"), 0.0, 1e-12);
  EXPECT_LE(max_abs_diff(r.get<Matrix>("marginal_A[t0]"), 0.5 * pauli::I()), 1e-12);
  EXPECT_LE(max_abs_diff(r.get<Matrix>("marginal_A[t1]"), 0.5 * pauli::I()), 1e-12);
  EXPECT_NEAR(r.get<double>("fidelity_AB[t0]"), 1.0, 1e-12);
  EXPECT_NEAR(r.get<double>("fidelity_HA[t1]"), 1.0, 1e-12);
  // |<Phi+|_HA |0>_H <0|_B |Phi+>_AB ... |^2 = 1/4 for psi = |0>
  EXPECT_NEAR(r.get<double>("postselection_probability"), 0.25, 1e-12);
}

TEST(LemmaSearch, OverlapMatchesClosedForm) {
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<cplx> c(8);
    for (auto& z : c) z = gen::complex();
    const HistoryState h = normalize(basis_history(c));
    const auto [f01, f12] = overlap_oracle(c);
    EXPECT_NEAR(bell_like_overlap(h, {0, 1}), f01, 1e-12);
    EXPECT_NEAR(bell_like_overlap(h, {1, 2}), f12, 1e-12);
  }
}

TEST(LemmaSearch, GhzGivesHalf) {
  std::vector<cplx> c(8, 0.0);
  c[0] = c[7] = kInvSqrt2;
  const HistoryState h = basis_history(c);
  EXPECT_NEAR(bell_like_overlap(h, {0, 1}), 0.5, 1e-12);
  EXPECT_NEAR(bell_like_overlap(h, {1, 2}), 0.5, 1e-12);
}

TEST(LemmaSearch, SmallSearchStaysBelowOne) {
  MonogamySearchConfig cfg;
  cfg.samples = 300;
  cfg.starts = 2;
  cfg.local.max_evals = 2000;
  const auto r = monogamy_search(cfg);
  EXPECT_LT(r.best, 1.0 - 1e-6);
  EXPECT_NEAR(r.ghz_subspace_best, 0.5, 1e-6);
  const auto [f01, f12] = overlap_oracle(r.coefficients);
  EXPECT_NEAR(std::min(f01, f12), r.best, 1e-9);
}

// Properties

TEST(ScenarioProperty, ConsistencyReportsReproducible) {
  for (const auto& name : scenario_names()) {
    const auto r = run_scenario(name);
    for (const auto& [key, fam] : r.all<HistoryFamily>()) {
      const auto again = is_consistent_family(fam->members, fam->bridging, fam->report.tol);
      EXPECT_EQ(again.consistent, fam->report.consistent) << name << " " << key;
      EXPECT_LE(max_abs_diff(again.decoherence, fam->report.decoherence), 1e-15) << name << " " << key;
    }
  }
}

TEST(ScenarioProperty, MixedArtifactsAreValid) {
  for (const auto& name : scenario_names()) {
    const auto r = run_scenario(name);
    for (const auto& [key, m] : r.all<MixedHistory>()) {
      double total = 0;
      for (const auto& e : m->ensemble()) {
        EXPECT_GT(e.probability, 0.0);
        EXPECT_NEAR(hs_norm2(e.history), 1.0, 1e-9) << key;
        total += e.probability;
      }
      EXPECT_NEAR(total, 1.0, 1e-9) << key;
    }
    for (const auto& [key, d] : r.all<OutcomeDistribution>()) EXPECT_NEAR(d->total(), 1.0, 1e-9) << key;
  }
}

TEST(ScenarioProperty, BundlesMatchChainWeights) {
  for (const auto& name : scenario_names()) {
    const auto r = run_scenario(name);
    for (const auto& [key, e] : r.all<TwoTimeExperiment>()) {
      const auto b = history_bundle(*e);
      double total = 0;
      for (const auto& en : b.entries) total += weight(en.history, b.bridging);
      for (const auto& en : b.entries) EXPECT_NEAR(en.probability, weight(en.history, b.bridging) / total, 1e-9) << name;
    }
  }
}
