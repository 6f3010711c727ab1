import numpy as np
import pytest
import scipy.linalg
import yaml
from hypothesis import given, settings, strategies as st

from qmetro.errors import Blowup, CapExceeded, EigenstateInput, InvalidState, PolicyGap
from qmetro.fisher import component_fisher, linearize_povm, optimal_configuration
from qmetro.linalg import random_hermitian, random_unitary, spectral_spread
from qmetro.protocols import (
    FeedbackStep,
    MultiRoundSpec,
    PolicyEntry,
    ProtocolSpec,
    interaction_average,
    reduce_to_subspace,
    run_feedback_distribution,
    run_multiround_distribution,
    spec_from_dict,
    step_efficiencies,
    strip_feedback,
    to_interaction_picture,
)
from qmetro.protocols import ancilla
from qmetro.random_instances import (
    random_adaptive_rounds,
    random_control,
    random_ensemble,
    random_feedback_protocol,
    random_povm,
    random_state,
)
from qmetro.states import Povm, QuantumState, average_hamiltonian

from conftest import SX, SY, SZ

PLUS = np.array([1, 1]) / np.sqrt(2)


def chain_probability(spec, history, b):
    """Oracle: history probability from an explicit operator product with scipy expm."""
    d = spec.dim
    a = np.eye(d, dtype=complex)
    for k, step in enumerate(spec.steps):
        entry = step.policy[tuple(history[:k])]
        h = spec.hamiltonian if entry.sensing is None else entry.sensing
        segs = entry.control if entry.control is not None else step.control
        for h0, dt in (segs or [(None, step.duration)]):
            h0 = np.zeros((d, d)) if h0 is None else h0
            a = scipy.linalg.expm(-1j * (b * h + h0) * dt) @ a
        m = entry.povm.kraus()[history[k]]
        u = np.eye(d) if entry.unitary is None else entry.unitary
        a = u @ m @ a
    return np.trace(a @ spec.initial_state.density_matrix @ a.conj().T).real


def chain_derivative(spec, history, h=1e-3):
    """Oracle: five-point stencil on the operator-product probability."""
    f = [chain_probability(spec, history, x * h) for x in (-2, -1, 1, 2)]
    return (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)


def fisher_bound(spec):
    return (spec.tau * spectral_spread(spec.hamiltonian)) ** 2


class TestFeedbackDistribution:
    def test_single_step_matches_linearization(self, rng):
        for _ in range(20):
            d = int(rng.integers(2, 6))
            state, h = random_state(d, rng), random_hermitian(d, rng)
            povm = random_povm(d, int(rng.integers(2, 5)), rng)
            spec = ProtocolSpec.simple(state, h, povm, 0.8)
            dist = run_feedback_distribution(spec)
            lin = linearize_povm(state, h, povm, 0.8)
            np.testing.assert_allclose(dist.p0, lin.p0, atol=1e-12)
            np.testing.assert_allclose(dist.dp, lin.dp, atol=1e-8)
            np.testing.assert_allclose(dist.dp_analytic, lin.dp, atol=1e-12)
            assert dist.labels == tuple((a,) for a in range(len(povm)))

    def test_identity_insertion(self, rng):
        d = 3
        state, h, povm = random_state(d, rng), random_hermitian(d, rng), random_povm(d, 3, rng)
        one = ProtocolSpec.simple(state, h, povm, 1.2)
        two = ProtocolSpec.feedback(state, h, [
            FeedbackStep(0.5, {(): PolicyEntry(Povm.trivial(d))}),
            FeedbackStep(0.7, {(0,): PolicyEntry(povm)}),
        ])
        for b in (0.0, 0.35):
            a, c = run_feedback_distribution(one, b), run_feedback_distribution(two, b)
            assert c.labels == tuple((0,) + lab for lab in a.labels)
            np.testing.assert_allclose(c.probabilities, a.probabilities, atol=1e-12)
            np.testing.assert_allclose(c.dp_analytic, a.dp_analytic, atol=1e-12)
            np.testing.assert_allclose(c.dp, a.dp, atol=1e-8)

    def test_against_operator_chain_oracle(self, rng):
        for _ in range(25):
            spec = random_feedback_protocol(rng, d=int(rng.integers(2, 4)), n_steps=int(rng.integers(1, 4)))
            b = float(rng.uniform(-0.5, 0.5))
            dist = run_feedback_distribution(spec, b)
            for lab, pb, dp in zip(dist.labels, dist.probabilities, dist.dp):
                assert pb == pytest.approx(chain_probability(spec, lab, b), abs=1e-12)
                assert dp == pytest.approx(chain_derivative(spec, lab), abs=1e-7)

    def test_ramsey_history(self):
        # Ramsey in x: P(-x) = (1 - cos(b tau)) / 2, second order at b = 0
        spec = ProtocolSpec.simple(QuantumState.pure(PLUS), SZ / 2, Povm.from_observable(SX), 1.0)
        dist = run_feedback_distribution(spec, 0.3)
        np.testing.assert_allclose(dist.probabilities, [(1 - np.cos(0.3)) / 2, (1 + np.cos(0.3)) / 2], atol=1e-14)
        assert dist.p0[0] == 0.0 and dist.fisher == 0.0
        assert dist.regular

    def test_depth_normalization(self, rng):
        for _ in range(50):
            dist = run_feedback_distribution(random_feedback_protocol(rng))
            np.testing.assert_allclose(dist.depth_mass, 1.0, atol=1e-10)

    def test_feedback_bound(self, rng):
        for _ in range(200):
            spec = random_feedback_protocol(rng)
            dist = run_feedback_distribution(spec)
            assert dist.fisher <= fisher_bound(spec) + 1e-9
            assert dist.fisher_analytic <= fisher_bound(spec) + 1e-9

    def test_single_step_dominates(self, rng):
        for _ in range(100):
            spec = random_feedback_protocol(rng)
            dist = run_feedback_distribution(spec)
            eff = step_efficiencies(spec, dist)
            assert eff.max() >= dist.fisher_analytic - 1e-12
            assert eff.max() >= dist.fisher_analytic / len(spec.steps) - 1e-12
            # each stand-alone step obeys the single-step bound for its own duration
            np.testing.assert_array_less(eff, fisher_bound(spec) * (1 + 1e-9) + 1e-12)

    def test_policy_gap(self, rng):
        d = 2
        steps = [FeedbackStep(0.5, {(): PolicyEntry(random_povm(d, 2, rng))}),
                 FeedbackStep(0.5, {(0,): PolicyEntry(random_povm(d, 2, rng))})]
        spec = ProtocolSpec.feedback(random_state(d, rng), SZ, steps)
        with pytest.raises(PolicyGap, match=r"\(1,\)"):
            run_feedback_distribution(spec)

    def test_unreachable_prefix_needs_no_entry(self):
        steps = [FeedbackStep(0.0, {(): PolicyEntry(Povm.projective(np.eye(2)))}),
                 FeedbackStep(1.0, {(0,): PolicyEntry(Povm.from_observable(SY))})]
        spec = ProtocolSpec.feedback(QuantumState.basis(2, 0), SX / 2, steps)
        assert run_feedback_distribution(spec).labels == ((0, 0), (0, 1))

    def test_blowup(self, rng):
        spec = random_feedback_protocol(rng, d=2, n_steps=3, max_outcomes=3)
        n = len(run_feedback_distribution(spec))
        with pytest.raises(Blowup):
            run_feedback_distribution(spec, cap=n - 1)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), b=st.floats(-1, 1))
    def test_distribution_invariants(self, seed, b):
        spec = random_feedback_protocol(np.random.default_rng(seed))
        dist = run_feedback_distribution(spec, b)
        assert abs(dist.probabilities.sum() - 1) <= 1e-9
        assert abs(dist.p0.sum() - 1) <= 1e-9
        assert abs(dist.dp.sum()) <= 1e-9
        assert abs(dist.dp_analytic.sum()) <= 1e-9
        assert np.all(dist.probabilities >= -1e-15)


class TestStripFeedback:
    def test_identity_unitaries_unchanged(self, rng):
        spec = ProtocolSpec.simple(random_state(3, rng), random_hermitian(3, rng), random_povm(3, 2, rng), 1.0)
        out = strip_feedback(spec)
        assert out.steps[0].policy[()] is spec.steps[0].policy[()]

    def test_random_unitaries_absorbed(self, rng):
        for _ in range(20):
            spec = random_feedback_protocol(rng, d=2, n_steps=2)
            bare = strip_feedback(spec)
            assert all(e.unitary is None for s in bare.steps for e in s.policy.values())
            for b in (0.0, 0.4, -1.1):
                a, c = run_feedback_distribution(spec, b), run_feedback_distribution(bare, b)
                assert a.labels == c.labels
                np.testing.assert_allclose(c.probabilities, a.probabilities, atol=1e-12)
                np.testing.assert_allclose(c.dp_analytic, a.dp_analytic, atol=1e-12)

    def test_control_absorbed_into_measurements(self, rng):
        for _ in range(20):
            d = int(rng.integers(2, 5))
            h = random_hermitian(d, rng)
            spec = ProtocolSpec.controlled(random_state(d, rng), h, random_povm(d, 3, rng), 1.3,
                                           random_control(d, 1.3, rng))
            frame = to_interaction_picture(spec)
            assert all(not s.control and e.control is None for s in frame.steps for e in s.policy.values())
            a, c = run_feedback_distribution(spec), run_feedback_distribution(frame)
            np.testing.assert_allclose(c.p0, a.p0, atol=1e-12)
            np.testing.assert_allclose(c.dp_analytic, a.dp_analytic, atol=1e-10)
            np.testing.assert_allclose(c.dp, a.dp, atol=1e-7)

    def test_interaction_average_converges(self, rng):
        h = random_hermitian(3, rng)
        sched = random_control(3, 1.0, rng)
        exact = interaction_average(h, sched, 1.0)
        np.testing.assert_allclose(average_hamiltonian(h, sched, 1.0, steps_per_segment=4000), exact, atol=1e-5)
        assert spectral_spread(exact) <= spectral_spread(h) + 1e-10


class TestMultiRound:
    def test_independent_rounds_add(self, rng):
        spec = random_feedback_protocol(rng, d=3, n_steps=2)
        single = run_feedback_distribution(spec)
        joint = run_multiround_distribution(MultiRoundSpec.repeated(spec, 2))
        assert joint.fisher == pytest.approx(2 * single.fisher, rel=1e-9)
        assert len(joint) == len(single) ** 2

    def test_protocol_rounds_field(self, rng):
        spec = ProtocolSpec.simple(random_state(2, rng), SZ / 2, random_povm(2, 2, rng), 1.0, rounds=3)
        joint = run_multiround_distribution(spec)
        assert joint.fisher == pytest.approx(3 * run_feedback_distribution(spec).fisher, rel=1e-9)

    def test_adaptive_bound(self, rng):
        for _ in range(100):
            m = random_adaptive_rounds(rng)
            first = m.policy[()]
            dist = run_multiround_distribution(m)
            assert dist.fisher <= 2 * fisher_bound(first) + 1e-9

    def test_zero_duration_round(self, rng):
        d = 2
        live = ProtocolSpec.simple(random_state(d, rng), SZ / 2, random_povm(d, 2, rng), 1.0)
        dead = ProtocolSpec.simple(random_state(d, rng), SZ / 2, random_povm(d, 3, rng), 0.0)
        first = run_feedback_distribution(live)
        policy = {(): live}
        policy.update({(lab,): dead for lab in first.labels})
        dist = run_multiround_distribution(MultiRoundSpec(2, policy))
        assert dist.fisher == pytest.approx(first.fisher, rel=1e-9)

    def test_factorization(self, rng):
        m3 = random_adaptive_rounds(rng, rounds=3, max_steps=1)
        m2 = MultiRoundSpec(2, {k: v for k, v in m3.policy.items() if len(k) < 2})
        for b in (0.0, 0.25):
            full, head = run_multiround_distribution(m3, b), run_multiround_distribution(m2, b)
            marg = {}
            for lab, p in zip(full.labels, full.probabilities):
                marg[lab[:2]] = marg.get(lab[:2], 0.0) + p
            for lab, p in zip(head.labels, head.probabilities):
                assert marg[lab] == pytest.approx(p, abs=1e-13)
            # conditional of the last round is the round-3 protocol's own distribution
            idx = full.index()
            for lab in head.labels[:3]:
                cond = run_feedback_distribution(m3.policy[lab], b)
                for sub, q in zip(cond.labels, cond.probabilities):
                    joint = full.probabilities[idx[lab + (sub,)]] if lab + (sub,) in idx else 0.0
                    assert joint == pytest.approx(head.probabilities[head.index()[lab]] * q, abs=1e-13)

    def test_policy_gap(self, rng):
        m = MultiRoundSpec(2, {(): random_feedback_protocol(rng, d=2, n_steps=1)})
        with pytest.raises(PolicyGap):
            run_multiround_distribution(m)

    def test_blowup(self, rng):
        spec = random_feedback_protocol(rng, d=2, n_steps=1, max_outcomes=3)
        with pytest.raises(Blowup):
            run_multiround_distribution(MultiRoundSpec.repeated(spec, 30), cap=1000)


class TestReduction:
    def test_two_level_unchanged(self, rng):
        state, h, povm = random_state(2, rng), random_hermitian(2, rng), random_povm(2, 3, rng)
        red = reduce_to_subspace(state, h, povm)
        assert spectral_spread(red.hamiltonian) == pytest.approx(spectral_spread(h), rel=1e-12)
        u = red.basis
        np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(u @ red.hamiltonian @ u.conj().T, h, atol=1e-12)

    def test_fisher_equality(self, rng):
        for _ in range(50):
            d = int(rng.integers(2, 7))
            state, h = random_state(d, rng), random_hermitian(d, rng)
            povm = random_povm(d, int(rng.integers(2, 5)), rng)
            red = reduce_to_subspace(state, h, povm)
            full = linearize_povm(state, h, povm, 1.0).fisher
            small = linearize_povm(red.state, red.hamiltonian, red.povm, 1.0).fisher
            assert small == pytest.approx(full, rel=1e-9)
            assert spectral_spread(red.hamiltonian) <= spectral_spread(h) + 1e-12

    def test_eigenstate(self):
        with pytest.raises(EigenstateInput):
            reduce_to_subspace(QuantumState.basis(3, 1), np.diag([1.0, 2.0, 3.0]), Povm.trivial(3))

    def test_mixed_rejected(self):
        with pytest.raises(InvalidState):
            reduce_to_subspace(QuantumState.mixed(np.eye(2) / 2), SZ, Povm.trivial(2))


class TestMixedProtocol:
    def test_mixed_state_protocol_is_convex(self, rng):
        for _ in range(30):
            d = int(rng.integers(2, 5))
            state, h, povm = random_ensemble(d, rng), random_hermitian(d, rng), random_povm(d, 3, rng)
            f, _, fs = component_fisher(state, h, povm, 0.9)
            dist = run_feedback_distribution(ProtocolSpec.simple(state, h, povm, 0.9))
            assert dist.fisher_analytic == pytest.approx(f, rel=1e-9)
            assert f <= fs.max() + 1e-9


class TestAncilla:
    @pytest.mark.parametrize("k", [0, 1, 2, 3, 6])
    def test_measurement_spread(self, k):
        assert spectral_spread(ancilla.measurement_hamiltonian(k)) == pytest.approx(1 + k)

    def test_cap(self):
        with pytest.raises(CapExceeded):
            ancilla.build_ancilla_protocol(11, 1.0)
        with pytest.raises(CapExceeded):
            ancilla.measurement_hamiltonian(-1)

    def test_zero_ancillas_is_ramsey(self):
        spec = ancilla.build_ancilla_protocol(0, 2.0, rounds=25)
        dist = run_feedback_distribution(spec)
        assert 1 / np.sqrt(spec.rounds * dist.fisher) == pytest.approx(1 / (2.0 * 5), rel=1e-9)

    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_heisenberg_scaling(self, k):
        spec = ancilla.build_ancilla_protocol(k, 0.7)
        dist = run_feedback_distribution(spec)
        assert 1 / np.sqrt(dist.fisher) == pytest.approx(1 / ((1 + k) * 0.7), rel=1e-9)

    def test_three_ancillas_final_state(self):
        k, tau, b = 3, 1.0, 0.13
        states = ancilla.circuit_states(k, tau, b)
        s = ancilla.schmidt_coefficients(states["final"], k)
        assert s[1] <= 1e-10
        ent = states["entangled"].reshape(2, 2**k)
        assert abs(ent[0, 0]) == pytest.approx(2**-0.5) and abs(ent[1, -1]) == pytest.approx(2**-0.5)
        sensor = states["final"].reshape(2, 2**k)[:, -1]
        assert np.angle(sensor[1] / sensor[0]) == pytest.approx(b * tau * (k + 1), abs=1e-12)

    def test_branch_phases(self):
        k, tau, b = 3, 0.8, 0.21
        up, down = ancilla.branch_phases(k, tau, b)
        assert up == pytest.approx(tau * (k + 2) / 2 * b)
        assert down == pytest.approx(-tau * k / 2 * b)
        sensed = ancilla.circuit_states(k, tau, b)["sensed"]
        amp = np.sqrt(0.5)
        assert sensed[2**k + 2**k - 1] == pytest.approx(amp * np.exp(-1j * up), abs=1e-14)
        assert sensed[0] == pytest.approx(amp * np.exp(-1j * down), abs=1e-14)

    @pytest.mark.parametrize("k, spread", [(0, 1), (1, 2), (3, 4)])
    def test_effective_hamiltonian(self, k, spread):
        assert ancilla.effective_hamiltonian_check(k) == pytest.approx((spread, spread))
        np.testing.assert_allclose(ancilla.effective_hamiltonian(k),
                                   ancilla.target_hamiltonian(k) - k / 2 * np.eye(2), atol=1e-9)
        assert ancilla.sector_leakage(k) <= 1e-12

    def test_optimal_configuration_of_target(self):
        state, obs = optimal_configuration(ancilla.target_hamiltonian(3))
        assert abs(state.vector @ PLUS) == pytest.approx(1, abs=1e-12)
        o = obs.operator
        sign = np.sign((o[0, 1] / ancilla.READOUT[0, 1]).real)
        np.testing.assert_allclose(o, sign * ancilla.READOUT, atol=1e-12)

    @pytest.mark.parametrize("k", [1, 2, 4])
    def test_entangling_pulse(self, k):
        lam = 1.7
        assert ancilla.pulse_deviation(k, lam, ancilla.entangling_pulse_time(lam)) <= 1e-12
        assert ancilla.pulse_deviation(k, lam, np.pi / lam, spin_half=True) <= 1e-12
        # spin-1/2 drive at the Pauli pulse length is only half a flip
        assert ancilla.pulse_deviation(k, lam, np.pi / (2 * lam), spin_half=True) > 0.1


class TestSerialization:
    def test_feedback_round_trip(self, rng):
        for _ in range(10):
            spec = random_feedback_protocol(rng)
            text = yaml.safe_dump(spec.to_dict())
            back = spec_from_dict(yaml.safe_load(text))
            a, c = run_feedback_distribution(spec, 0.2), run_feedback_distribution(back, 0.2)
            assert a.labels == c.labels
            np.testing.assert_array_equal(a.probabilities, c.probabilities)
            np.testing.assert_array_equal(a.dp, c.dp)
            assert back.to_dict() == spec.to_dict()

    def test_multiround_round_trip(self, rng):
        m = random_adaptive_rounds(rng)
        back = spec_from_dict(yaml.safe_load(yaml.safe_dump(m.to_dict())))
        assert isinstance(back, MultiRoundSpec)
        np.testing.assert_array_equal(run_multiround_distribution(m).dp, run_multiround_distribution(back).dp)

    def test_ancilla_round_trip(self):
        spec = ancilla.build_ancilla_protocol(2, 1.0, rounds=4)
        back = ProtocolSpec.from_dict(spec.to_dict())
        assert back.rounds == 4
        assert run_feedback_distribution(back).fisher == run_feedback_distribution(spec).fisher

    def test_unitary_in_policy(self):
        u = random_unitary(2, np.random.default_rng(0))
        step = FeedbackStep(1.0, {(): PolicyEntry(Povm.trivial(2), unitary=u)})
        back = ProtocolSpec.from_dict(ProtocolSpec.feedback(QuantumState.basis(2, 0), SZ, [step]).to_dict())
        np.testing.assert_array_equal(back.steps[0].policy[()].unitary, u)
