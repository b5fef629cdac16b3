import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from turnstile_sr.circuit_model import (
    E_CHARGE, K_B, BiasPoint, CircuitParams, SignalParams, derive_params, switch_sequence, thresholds,
)
from turnstile_sr.noise import NoiseParams
from turnstile_sr.orthodox_mc import (
    EVENTS, SimConfig, SimTrace, _event_charging_energies, apply_event, average_current, delta_f_all,
    free_energy_delta, inverse_capacitance, island_voltage, simulate, tunnel_rate,
)

P = CircuitParams()
D = derive_params(P)
FS = 100e6

states = st.tuples(*[st.integers(-3, 3)] * 3)
gates = st.floats(-0.3, 0.5)
biases = st.floats(-0.08, 0.08)


def node_potentials(s, Vg, Vb):
    cmat = np.array([[2 * P.C, -P.C, 0], [-P.C, 2 * P.C + P.Cg, -P.C], [0, -P.C, 2 * P.C]])
    q = -E_CHARGE * np.asarray(s, float) + np.array([P.C * Vb, P.Cg * Vg, -P.C * Vb])
    return np.concatenate([[Vb], np.linalg.solve(cmat, q), [-Vb]])


def oracle_dF(s, k, Vg, Vb):
    # work against the mean of the before/after node potentials
    j, d = EVENTS[k]
    src, dst = (j - 1, j) if d == 1 else (j, j - 1)
    phi = 0.5 * (node_potentials(s, Vg, Vb) + node_potentials(apply_event(s, k), Vg, Vb))
    return -E_CHARGE * (phi[dst] - phi[src])


def cfg(Av=0.0, D_V=0.0, Vb=50e-3, cycles=10, seed=0, fs=FS, p=P, **kw):
    return SimConfig(
        circuit=p,
        bias=BiasPoint.from_vb(p, Vb),
        signal=SignalParams.from_voltage(Av, fs, p.Cg),
        noise=NoiseParams(D_V=D_V),
        duration=cycles / fs,
        seed=seed,
        **kw,
    )


@given(s=states, k=st.integers(0, 7), Vg=gates, Vb=biases)
def test_free_energy_matches_node_potential_oracle(s, k, Vg, Vb):
    j, d = EVENTS[k]
    got = free_energy_delta(s, j, d, Vg, Vb, P)
    assert got == pytest.approx(oracle_dF(s, k, Vg, Vb), rel=1e-9, abs=1e-9 * E_CHARGE * 0.1)


@given(s=states, k=st.integers(0, 7), Vg=gates, Vb=biases)
def test_free_energy_antisymmetric(s, k, Vg, Vb):
    j, d = EVENTS[k]
    fwd = free_energy_delta(s, j, d, Vg, Vb, P)
    back = free_energy_delta(apply_event(s, k), j, -d, Vg, Vb, P)
    assert fwd == pytest.approx(-back, rel=1e-9, abs=1e-30)


@given(s=states, Vg=gates, Vb=biases)
def test_kernel_energy_form_matches_free_energy(s, Vg, Vb):
    # the kernel uses dF = -e*(phi_dst - phi_src) + e^2/2 d M^-1 d
    phi = node_potentials(s, Vg, Vb)
    ec = _event_charging_energies(P)
    ref = delta_f_all(s, Vg, Vb, P)
    for k, (j, d) in enumerate(EVENTS):
        src, dst = (j - 1, j) if d == 1 else (j, j - 1)
        assert -E_CHARGE * (phi[dst] - phi[src]) + ec[k] == pytest.approx(ref[k], rel=1e-9, abs=1e-30)


def test_invalid_event():
    with pytest.raises(ValueError):
        free_energy_delta((0, 0, 0), 5, 1, 0.0, 0.0, P)


@pytest.mark.parametrize("s", [(0, 0, 0), (0, 1, 0)])
def test_both_central_states_blockaded_at_bias_point(s):
    dF = delta_f_all(s, D.Vg0, 50e-3, P)
    assert np.all(dF > 0)


@given(dF=st.floats(-50, 50), T=st.floats(1e-3, 1.0), Rt=st.floats(1e3, 1e7))
def test_detailed_balance(dF, T, Rt):
    kT = K_B * T
    fwd = tunnel_rate(dF * kT, Rt, T)
    back = tunnel_rate(-dF * kT, Rt, T)
    assert fwd / back == pytest.approx(np.exp(-dF), rel=1e-12)


def test_rate_limits():
    kT = K_B * P.T
    g = 1 / (E_CHARGE**2 * P.Rt)
    assert tunnel_rate(0.0, P.Rt, P.T) == pytest.approx(kT * g, rel=1e-15)
    assert tunnel_rate(1e-12 * kT, P.Rt, P.T) == pytest.approx(kT * g, rel=1e-11)
    assert tunnel_rate(-100 * kT, P.Rt, P.T) == pytest.approx(100 * kT * g, rel=1e-12)
    assert tunnel_rate(1000 * kT, P.Rt, P.T) == 0.0
    assert tunnel_rate(1e-25, P.Rt, 0.0) == 0.0
    assert tunnel_rate(-1e-22, P.Rt, 0.0) == pytest.approx(1e-22 * g)


@given(s=states, ks=st.lists(st.integers(0, 7), max_size=40))
def test_charge_bookkeeping(s, ks):
    # total island charge changes only through the leads
    cur = s
    through_leads = 0
    for k in ks:
        j, d = EVENTS[k]
        if j == 1:
            through_leads += d
        elif j == 4:
            through_leads -= d
        cur = apply_event(cur, k)
    assert sum(cur) - sum(s) == through_leads


@given(s=states, Vg=gates, Vb=biases, a=st.floats(-2, 2))
def test_island_voltage_linear(s, Vg, Vb, a):
    base = island_voltage(s, 0.0, 0.0, P)
    dv = island_voltage(s, Vg, Vb, P) - base
    dv2 = island_voltage(s, a * Vg, a * Vb, P) - base
    assert dv2 == pytest.approx(a * dv, rel=1e-9, abs=1e-15)


def test_island_voltage_electron_shift():
    minv = inverse_capacitance(P)
    v0 = island_voltage((0, 0, 0), 0.1, 0.02, P)
    v1 = island_voltage((0, 1, 0), 0.1, 0.02, P)
    assert v1 - v0 == pytest.approx(-E_CHARGE * minv[1, 1], rel=1e-12)
    assert island_voltage((0, 0, 0), 0.0, 0.0, P) == 0.0


def test_blockade_no_events_without_drive():
    tr = simulate(cfg(Av=0.0, cycles=1000))  # 10 us
    assert tr.events == 0
    assert tr.total_transferred == 0
    assert np.all(tr.n_trace == 0)


def test_current_quantization():
    tr = simulate(cfg(Av=30e-3, cycles=100))
    assert tr.total_transferred == 100
    assert average_current(tr) == pytest.approx(E_CHARGE * FS, rel=0.01)


def test_current_reverses_with_bias():
    fwd = average_current(simulate(cfg(Av=30e-3, cycles=50)))
    rev = average_current(simulate(cfg(Av=30e-3, cycles=50, Vb=-50e-3)))
    assert rev == pytest.approx(-fwd, rel=0.02)


def test_subthreshold_drive_does_not_pump():
    th = thresholds(D, 50e-3, P)
    Av = 0.5 * (th.Vt0 - D.Vg0)
    tr = simulate(cfg(Av=Av, cycles=100))
    assert tr.total_transferred == 0


def test_agreement_with_switching_rule():
    th = thresholds(D, 50e-3, P)
    tr = simulate(cfg(Av=30e-3, cycles=100))
    ref = switch_sequence(tr.vg, th, n0=int(tr.n_trace[0]))
    assert np.mean(tr.n_trace == ref) > 0.99


def test_deterministic_per_seed():
    a = simulate(cfg(Av=8e-3, D_V=2e-5, cycles=20, seed=7))
    b = simulate(cfg(Av=8e-3, D_V=2e-5, cycles=20, seed=7))
    c = simulate(cfg(Av=8e-3, D_V=2e-5, cycles=20, seed=8))
    assert np.array_equal(a.n_trace, b.n_trace)
    assert np.array_equal(a.island_voltage, b.island_voltage)
    assert a.events == b.events
    assert not np.array_equal(a.island_voltage, c.island_voltage)


def test_chunking_does_not_change_trace():
    c = cfg(Av=8e-3, D_V=2e-5, cycles=20, seed=3)
    a = simulate(c)
    b = simulate(c, chunk_samples=333)
    assert np.array_equal(a.n_trace, b.n_trace)
    assert_allclose(a.island_voltage, b.island_voltage, rtol=0, atol=0)


def test_trace_shapes_and_charge_voltage():
    c = cfg(Av=30e-3, cycles=5)
    tr = simulate(c)
    assert len(tr.n_trace) == c.samples == 100
    minv = inverse_capacitance(P)
    # charge-only voltage takes one value per central occupancy when the outer islands are empty
    assert_allclose(tr.charge_voltage, -E_CHARGE * minv[1, 1] * tr.n_trace, rtol=1e-12, atol=1e-18)


def test_trace_csv_round_trip(tmp_path):
    tr = simulate(cfg(Av=30e-3, cycles=3))
    path = tmp_path / "trace.csv"
    tr.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# turnstile-sr v1"
    assert lines[1] == "t,island_voltage,n,transferred"
    back = SimTrace.read_csv(path)
    assert back.dt == pytest.approx(tr.dt)
    assert np.array_equal(back.n_trace, tr.n_trace)
    assert np.array_equal(back.transferred, tr.transferred)
    assert_allclose(back.island_voltage, tr.island_voltage, rtol=1e-8)


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(oversample=0)
    with pytest.raises(ValueError):
        SimConfig(circuit=P, bias=BiasPoint.from_vb(P, 0.05), signal=SignalParams(0, FS, P.Cg),
                  noise=NoiseParams(), duration=1.25e-9)
