"""Certificate tests.

The headline numbers here (0.22599..., 0.23520..., 0.00711..., 0.38123...,
0.01261...) were recomputed independently at 50-digit precision with mpmath
before being hardcoded; the formulas under test must land within 1e-6 of
them and the LDP forms must collapse onto their single-expert bases at
eps=0, n=1 to 1e-12.
"""

import json
import math

import numpy as np
import pytest

from moecert.bounds import (
    DEFAULT_LAMBDA_GRID,
    BoundInputs,
    BoundReport,
    catoni_base,
    catoni_ldp_bound,
    certificate,
    epsilon_grid_bound,
    gaussian_kl,
    linear_expert_rademacher,
    naive_pacbayes_comparison,
    rademacher_base,
    rademacher_ldp_bound,
    seeger_ldp_bound,
    select_xprime,
)
from moecert.data import make_toy_dataset
from moecert.model import LdpConfig, gate, mixture_risk
from moecert.numerics import RandomSource
from moecert.train import init_model


def make_inputs(
    n=1,
    kl=10.0,
    risk=0.1,
    m=1000,
    delta=0.05,
    epsilon=0.0,
    lam=1.0,
    rad=None,
    gate_weights=None,
):
    nn = max(n, 1)  # BoundInputs itself rejects n < 1 before reading the arrays
    kls = np.full(nn, kl, dtype=float) if np.isscalar(kl) else np.asarray(kl, dtype=float)
    g = np.full(nn, 1.0 / nn) if gate_weights is None else np.asarray(gate_weights, dtype=float)
    if rad is not None and np.isscalar(rad):
        rad = np.full(nn, rad, dtype=float)
    return BoundInputs(
        m=m,
        n=n,
        delta=delta,
        epsilon=epsilon,
        empirical_risk=risk,
        per_expert_kl=kls,
        gate_at_xprime=g,
        lam=lam,
        per_expert_rademacher=rad,
    )


class TestBoundInputs:
    def test_accepts_well_formed(self):
        inp = make_inputs(n=3, kl=[1.0, 2.0, 3.0], gate_weights=[0.2, 0.3, 0.5])
        assert inp.weighted_kl == pytest.approx(0.2 * 1 + 0.3 * 2 + 0.5 * 3)

    def test_weighted_rademacher_needs_the_vector(self):
        inp = make_inputs(n=2, kl=[1.0, 1.0])
        with pytest.raises(ValueError):
            inp.weighted_rademacher
        inp2 = make_inputs(n=2, kl=[1.0, 1.0], rad=[0.1, 0.3], gate_weights=[0.5, 0.5])
        assert inp2.weighted_rademacher == pytest.approx(0.2)

    @pytest.mark.parametrize(
        "override",
        [
            dict(m=0),
            dict(n=0),
            dict(delta=0.0),
            dict(delta=1.0),
            dict(epsilon=-0.1),
            dict(epsilon=math.inf),
            dict(risk=-0.01),
            dict(risk=1.01),
            dict(lam=0.5),
            dict(kl=-1.0),
            dict(kl=[1.0, 2.0]),  # wrong length for n=1
            dict(gate_weights=[0.7, 0.7]),
        ],
    )
    def test_rejects_malformed(self, override):
        kw = dict(n=1, kl=0.5, risk=0.1, m=100, delta=0.05, epsilon=0.0, lam=1.0)
        kw.update(override)
        if "gate_weights" in override:
            kw.update(n=2, kl=[1.0, 1.0])
        with pytest.raises(ValueError):
            make_inputs(**kw)

    def test_gate_must_not_go_negative(self):
        with pytest.raises(ValueError):
            make_inputs(n=2, kl=[1.0, 1.0], gate_weights=[1.5, -0.5])

    def test_rademacher_vector_validated(self):
        with pytest.raises(ValueError):
            make_inputs(n=2, kl=[1.0, 1.0], rad=[0.1, -0.1], gate_weights=[0.5, 0.5])

    def test_lambda_optional_until_a_catoni_form_needs_it(self):
        inp = make_inputs(lam=None)
        with pytest.raises(ValueError):
            catoni_base(inp, 0)
        with pytest.raises(ValueError):
            catoni_ldp_bound(inp)
        # Seeger does not involve lambda at all.
        seeger_ldp_bound(inp)


class TestGaussianKl:
    def test_origin_is_zero(self):
        assert gaussian_kl(np.zeros(7)) == 0.0

    def test_unit_vector_is_half(self):
        assert gaussian_kl([1.0, 0.0, 0.0]) == pytest.approx(0.5)

    def test_matches_half_squared_norm(self, rng):
        w = rng.normal(size=12)
        assert gaussian_kl(w) == pytest.approx(0.5 * float(w @ w), rel=1e-14)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            gaussian_kl([1.0, math.nan])


class TestSelectXprime:
    def test_picks_input_with_smallest_weighted_penalty(self, small_model, monkeypatch):
        rows = np.array([[0.9, 0.1], [0.1, 0.9]])
        monkeypatch.setattr("moecert.bounds.gate", lambda model, pts: rows)
        small_model.experts.weights = small_model.experts.weights[:2]
        small_model.gating.W3 = small_model.gating.W3[:, :2]
        small_model.gating.b3 = small_model.gating.b3[:2]
        idx, value = select_xprime(small_model, np.zeros((2, 3)), [10.0, 1.0])
        assert idx == 1
        assert value == pytest.approx(1.9, abs=1e-12)

    def test_ties_break_to_lowest_index(self, small_model, monkeypatch):
        rows = np.array([[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]])
        monkeypatch.setattr("moecert.bounds.gate", lambda model, pts: rows)
        small_model.experts.weights = small_model.experts.weights[:2]
        small_model.gating.W3 = small_model.gating.W3[:, :2]
        small_model.gating.b3 = small_model.gating.b3[:2]
        idx, _ = select_xprime(small_model, np.zeros((3, 3)), [1.0, 1.0])
        assert idx == 0

    def test_value_is_a_lower_envelope_over_candidates(self, small_model, rng):
        pts = rng.normal(size=(20, 3))
        pen = np.abs(rng.normal(size=small_model.n))
        idx, value = select_xprime(small_model, pts, pen)
        weighted = gate(small_model, pts) @ pen
        assert value == pytest.approx(float(weighted.min()), rel=1e-14)
        assert idx == int(np.argmin(weighted))
        assert np.all(value <= weighted + 1e-15)

    def test_rejects_empty_candidates_and_bad_penalty(self, small_model):
        with pytest.raises(ValueError):
            select_xprime(small_model, np.zeros((0, 3)), np.ones(small_model.n))
        with pytest.raises(ValueError):
            select_xprime(small_model, np.zeros((2, 3)), np.ones(small_model.n + 1))
        with pytest.raises(ValueError):
            select_xprime(small_model, np.zeros((2, 3)), -np.ones(small_model.n))


class TestCatoni:
    def test_single_expert_value(self):
        inp = make_inputs(n=1, kl=10.0, risk=0.1, m=1000, delta=0.05, lam=1.0)
        got = catoni_base(inp, 0)
        assert got == pytest.approx(2.0 * (0.1 + 1e-3 * (10.0 + math.log(20.0))), abs=1e-15)
        assert got == pytest.approx(0.2259914645471080, abs=1e-6)

    def test_expert_index_checked(self):
        inp = make_inputs(n=2, kl=[1.0, 2.0], gate_weights=[0.5, 0.5])
        with pytest.raises(ValueError):
            catoni_base(inp, 2)
        with pytest.raises(ValueError):
            catoni_base(inp, -1)

    def test_vanishes_as_m_grows_with_zero_complexity(self):
        inp = make_inputs(n=1, kl=0.0, risk=0.0, m=10**12, lam=1.0)
        assert catoni_base(inp, 0) < 1e-10

    def test_doubling_m_strictly_shrinks(self):
        a = catoni_base(make_inputs(m=1000), 0)
        b = catoni_base(make_inputs(m=2000), 0)
        assert b < a

    def test_mixture_value(self):
        inp = make_inputs(n=100, kl=10.0, risk=0.1, m=1000, delta=0.05, epsilon=0.0, lam=1.0)
        got = catoni_ldp_bound(inp)
        assert got == pytest.approx(2.0 * (0.1 + 1e-3 * (10.0 + math.log(2000.0))), abs=1e-15)
        assert got == pytest.approx(0.2352018049190842, abs=1e-6)

    def test_reduces_to_single_expert_form(self):
        inp = make_inputs(n=1, kl=3.7, risk=0.08, m=500, delta=0.1, epsilon=0.0, lam=0.9)
        assert abs(catoni_ldp_bound(inp) - catoni_base(inp, 0)) <= 1e-12

    def test_strictly_increasing_in_epsilon(self):
        values = [
            catoni_ldp_bound(make_inputs(n=5, kl=2.0, epsilon=e))
            for e in (0.0, 0.25, 0.5, 1.0, 2.0)
        ]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_weighting_uses_the_gate(self):
        # All mass on the small-KL expert must beat the uniform average.
        skewed = make_inputs(n=2, kl=[100.0, 0.0], gate_weights=[0.0, 1.0])
        uniform = make_inputs(n=2, kl=[100.0, 0.0])
        assert catoni_ldp_bound(skewed) < catoni_ldp_bound(uniform)


class TestSeeger:
    def test_zero_risk_zero_kl_closed_form(self):
        inp = make_inputs(n=1, kl=0.0, risk=0.0, m=1000, delta=0.05, epsilon=0.0)
        expected = 1.0 - (0.05 / (2.0 * math.sqrt(1000.0))) ** (1.0 / 1000.0)
        got = seeger_ldp_bound(inp)
        assert got == pytest.approx(expected, abs=1e-9)
        assert got == pytest.approx(0.0071173082318838, abs=1e-6)

    def test_small_sample_rejected(self):
        with pytest.raises(ValueError):
            seeger_ldp_bound(make_inputs(m=7))
        seeger_ldp_bound(make_inputs(m=8))

    def test_vacuous_when_inflated_risk_exceeds_one(self):
        inp = make_inputs(n=1, kl=0.0, risk=0.5, m=100, epsilon=1.0)
        assert seeger_ldp_bound(inp) == 1.0

    def test_never_exceeds_one(self):
        inp = make_inputs(n=4, kl=500.0, risk=0.4, m=50, epsilon=0.3)
        assert seeger_ldp_bound(inp) == 1.0

    def test_monotone_in_kl_and_epsilon(self):
        lo = seeger_ldp_bound(make_inputs(n=3, kl=1.0, risk=0.05, m=4000))
        hi = seeger_ldp_bound(make_inputs(n=3, kl=5.0, risk=0.05, m=4000))
        assert hi >= lo
        lo_e = seeger_ldp_bound(make_inputs(n=3, kl=1.0, risk=0.05, m=4000, epsilon=0.0))
        hi_e = seeger_ldp_bound(make_inputs(n=3, kl=1.0, risk=0.05, m=4000, epsilon=0.4))
        assert hi_e >= lo_e

    def test_covers_the_low_risk_branch(self):
        # The returned value must dominate e^{2 eps} R_S as well, because the
        # binary-kl inversion never drops below its first argument.
        inp = make_inputs(n=3, kl=2.0, risk=0.1, m=2000, epsilon=0.3)
        assert seeger_ldp_bound(inp) >= min(1.0, math.exp(0.6) * 0.1) - 1e-12


class TestRademacher:
    def test_mixture_value(self):
        inp = make_inputs(
            n=100, kl=0.0, risk=0.05, m=1000, delta=0.05, epsilon=0.5, rad=0.01
        )
        root = math.sqrt(2.0 * math.log(4000.0) / 1000.0)
        e = math.exp(0.5)
        assert rademacher_ldp_bound(inp) == pytest.approx(
            e * (e * 0.05 + 0.02 + root), abs=1e-15
        )
        assert rademacher_ldp_bound(inp) == pytest.approx(0.3812352353000694, abs=1e-6)

    def test_reduces_to_single_class_form(self):
        inp = make_inputs(n=1, kl=0.0, risk=0.07, m=640, delta=0.02, epsilon=0.0, rad=0.013)
        assert abs(rademacher_ldp_bound(inp) - rademacher_base(inp, 0)) <= 1e-12

    def test_single_class_form(self):
        inp = make_inputs(n=1, kl=0.0, risk=0.05, m=1000, delta=0.05, rad=0.01)
        expected = 0.05 + 0.02 + math.sqrt(2.0 * math.log(40.0) / 1000.0)
        assert rademacher_base(inp, 0) == pytest.approx(expected, abs=1e-15)

    def test_nonincreasing_in_m(self):
        a = rademacher_ldp_bound(make_inputs(n=2, kl=0.0, rad=0.01, m=500))
        b = rademacher_ldp_bound(make_inputs(n=2, kl=0.0, rad=0.01, m=5000))
        assert b <= a

    def test_requires_the_complexity_vector(self):
        inp = make_inputs(n=2, kl=[0.0, 0.0], gate_weights=[0.5, 0.5])
        with pytest.raises(ValueError):
            rademacher_ldp_bound(inp)
        with pytest.raises(ValueError):
            rademacher_base(inp, 0)

    def test_base_index_checked(self):
        inp = make_inputs(n=2, kl=[0.0, 0.0], rad=0.01, gate_weights=[0.5, 0.5])
        with pytest.raises(ValueError):
            rademacher_base(inp, 5)


class TestLinearExpertRademacher:
    def test_unit_cap_value(self):
        assert linear_expert_rademacher(1.0, 1000) == pytest.approx(
            1.0 / math.sqrt(2000.0 * math.pi), abs=1e-15
        )
        assert linear_expert_rademacher(1.0, 1000) == pytest.approx(0.012615662610101, abs=1e-6)

    def test_cap_squared_times_k_samples(self):
        # cap B with m = B^2 k collapses to 1/sqrt(2 pi k).
        assert linear_expert_rademacher(2.0, 1000) == pytest.approx(
            1.0 / math.sqrt(2.0 * math.pi * 250.0), rel=1e-14
        )

    def test_linear_in_cap(self):
        assert linear_expert_rademacher(0.5, 300) == pytest.approx(
            0.5 * linear_expert_rademacher(1.0, 300), rel=1e-14
        )

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            linear_expert_rademacher(0.0, 100)
        with pytest.raises(ValueError):
            linear_expert_rademacher(1.0, 0)


class TestNaiveComparison:
    def test_sums_all_expert_kls(self):
        inp = make_inputs(
            n=4, kl=[10.0, 2.0, 0.5, 0.0], risk=0.1, m=1000, delta=0.05, lam=1.0,
            gate_weights=[0.25, 0.25, 0.25, 0.25],
        )
        got = naive_pacbayes_comparison(inp, gating_kl=50.0)
        assert got == pytest.approx(2.0 * (0.1 + 1e-3 * (62.5 + math.log(20.0))), abs=1e-15)
        assert got == pytest.approx(0.3309914645471080, abs=1e-6)

    def test_collapses_to_catoni_for_one_expert_and_free_gate(self):
        inp = make_inputs(n=1, kl=4.0, risk=0.12, m=800, lam=2.0)
        assert naive_pacbayes_comparison(inp, 0.0) == pytest.approx(
            catoni_base(inp, 0), rel=1e-14
        )

    def test_pays_for_every_expert_while_the_routed_bound_does_not(self):
        inp = make_inputs(n=100, kl=1.0, risk=0.05, m=2000, epsilon=0.0, lam=1.0)
        assert inp.weighted_kl == pytest.approx(1.0)
        assert naive_pacbayes_comparison(inp, 0.0) > catoni_ldp_bound(inp)

    def test_rejects_negative_gating_kl(self):
        with pytest.raises(ValueError):
            naive_pacbayes_comparison(make_inputs(), -0.1)


def tiny_report(**kw):
    inp = make_inputs(n=2, kl=[1.0, 2.0], gate_weights=[0.5, 0.5], rad=0.01)
    base = dict(
        inputs=inp,
        catoni_ldp=0.4,
        seeger_ldp=0.3,
        rademacher_ldp=0.6,
        naive_comparison=2.5,
        chosen_xprime_index=0,
        catoni_grid=[(1.0, 0.4)],
        catoni_delta_each=0.05,
    )
    base.update(kw)
    return BoundReport(**base)


class TestBoundReport:
    def test_values_and_headline(self):
        rep = tiny_report()
        assert rep.values() == {
            "catoni_ldp": 0.4,
            "rademacher_ldp": 0.6,
            "seeger_ldp": 0.3,
        }
        assert rep.headline() == 0.3

    def test_seeger_omitted_when_unavailable(self):
        rep = tiny_report(seeger_ldp=None)
        assert "seeger_ldp" not in rep.values()
        assert rep.headline() == 0.4

    def test_vacuous_flags_and_clamped_headline(self):
        rep = tiny_report(catoni_ldp=1.7, seeger_ldp=1.0, rademacher_ldp=3.2)
        assert rep.vacuous() == {
            "catoni_ldp": True,
            "seeger_ldp": False,
            "rademacher_ldp": True,
        }
        assert rep.headline() == 1.0  # a 0-1 risk cannot exceed 1

    def test_record_is_json_ready_and_echoes_inputs(self):
        rep = tiny_report(notes=["cap taken post hoc"])
        rec = rep.to_record()
        text = json.dumps(rec)
        back = json.loads(text)
        assert back["headline"] == rep.headline()
        assert back["inputs"]["m"] == 1000
        assert back["inputs"]["per_expert_kl"] == [1.0, 2.0]
        assert back["notes"] == ["cap taken post hoc"]
        assert back["catoni_grid"] == [[1.0, 0.4]]


class TestEpsilonGrid:
    def test_single_member_is_identity(self):
        rep = tiny_report()
        assert epsilon_grid_bound([rep], delta=rep.inputs.delta) is rep

    def test_picks_smallest_headline(self):
        def member(eps, seeger):
            inp = make_inputs(n=2, kl=[1.0, 2.0], gate_weights=[0.5, 0.5], delta=0.01, epsilon=eps)
            return tiny_report(inputs=inp, seeger_ldp=seeger)

        reports = [member(0.1, 0.9), member(0.5, 0.2), member(1.0, 0.2), member(2.0, 0.5), member(4.0, 0.8)]
        best = epsilon_grid_bound(reports, delta=0.05)
        assert best is reports[1]  # tie with index 2 resolves downward

    def test_union_bound_share_enforced(self):
        rep = tiny_report()  # built at delta=0.05
        with pytest.raises(ValueError):
            epsilon_grid_bound([rep, rep], delta=0.05)  # members would need 0.025
        with pytest.raises(ValueError):
            epsilon_grid_bound([], delta=0.05)


class TestCertificate:
    @pytest.fixture
    def trained_setup(self):
        data = make_toy_dataset(m=60, d=3, seed=11, separation=3.0)
        model = init_model(
            d=3, n=4, ldp=LdpConfig.constrained(1.5), rng=RandomSource(5), hidden=8
        )
        return model, data.features, data.labels

    def test_report_is_internally_consistent(self, trained_setup):
        model, X, y = trained_setup
        rep = certificate(model, X, y, delta=0.05)
        inp = rep.inputs

        assert inp.m == X.shape[0]
        assert inp.n == model.n
        assert inp.epsilon == 1.5
        assert inp.empirical_risk == pytest.approx(mixture_risk(model, X, y), rel=1e-14)
        np.testing.assert_allclose(
            inp.per_expert_kl, 0.5 * np.sum(model.experts.weights**2, axis=1), rtol=1e-14
        )
        np.testing.assert_allclose(
            inp.gate_at_xprime, gate(model, X[rep.chosen_xprime_index]), rtol=1e-14
        )

        # The published Catoni number must be the grid minimum, with every
        # grid member charged its union-bound share of delta.
        assert len(rep.catoni_grid) == len(DEFAULT_LAMBDA_GRID)
        assert rep.catoni_delta_each == pytest.approx(0.05 / len(DEFAULT_LAMBDA_GRID))
        assert rep.catoni_ldp == pytest.approx(min(v for _, v in rep.catoni_grid), rel=1e-14)
        best_lam = min(rep.catoni_grid, key=lambda t: t[1])[0]
        check = BoundInputs(
            m=inp.m, n=inp.n, delta=rep.catoni_delta_each, epsilon=inp.epsilon,
            empirical_risk=inp.empirical_risk, per_expert_kl=inp.per_expert_kl,
            gate_at_xprime=inp.gate_at_xprime, lam=best_lam,
        )
        assert rep.catoni_ldp == pytest.approx(catoni_ldp_bound(check), rel=1e-14)

        assert rep.seeger_ldp is not None
        assert rep.rademacher_ldp == pytest.approx(rademacher_ldp_bound(inp), rel=1e-14)
        assert rep.headline() <= 1.0

    def test_default_cap_is_flagged_as_posthoc(self, trained_setup):
        model, X, y = trained_setup
        rep = certificate(model, X, y)
        assert rep.rademacher_cap == pytest.approx(
            float(np.max(np.linalg.norm(model.experts.weights, axis=1)))
        )
        assert rep.rademacher_cap_source == "posthoc-max-norm"
        assert any("cap" in note for note in rep.notes)
        np.testing.assert_allclose(
            rep.inputs.per_expert_rademacher,
            linear_expert_rademacher(rep.rademacher_cap, X.shape[0]),
        )

    def test_user_cap_overrides_without_caveat(self, trained_setup):
        model, X, y = trained_setup
        rep = certificate(model, X, y, rademacher_cap=2.0)
        assert rep.rademacher_cap == 2.0
        assert rep.rademacher_cap_source == "user"
        assert not any("cap" in note for note in rep.notes)

    def test_epsilon_handling(self, trained_setup):
        model, X, y = trained_setup
        with pytest.raises(ValueError):
            certificate(model, X, y, epsilon=0.7)  # model already carries 1.5
        certificate(model, X, y, epsilon=1.5)  # consistent restatement is fine

        free = init_model(
            d=3, n=4, ldp=LdpConfig.unconstrained(), rng=RandomSource(5), hidden=8
        )
        with pytest.raises(ValueError):
            certificate(free, X, y)
        rep = certificate(free, X, y, epsilon=2.0)
        assert rep.inputs.epsilon == 2.0

    def test_small_samples_drop_the_kl_inversion(self, trained_setup):
        model, X, y = trained_setup
        rep = certificate(model, X[:5], y[:5])
        assert rep.seeger_ldp is None
        assert "seeger_ldp" not in rep.values()
        assert any("m >= 8" in note for note in rep.notes)

    def test_lambda_grid_must_be_nonempty(self, trained_setup):
        model, X, y = trained_setup
        with pytest.raises(ValueError):
            certificate(model, X, y, lam_grid=())

    def test_looser_epsilon_loosens_the_certificate(self, trained_setup):
        _, X, y = trained_setup
        values = []
        for eps in (0.5, 1.0, 2.0):
            model = init_model(
                d=3, n=4, ldp=LdpConfig.constrained(eps), rng=RandomSource(5), hidden=8
            )
            values.append(certificate(model, X, y).catoni_ldp)
        assert values[0] < values[1] < values[2]
