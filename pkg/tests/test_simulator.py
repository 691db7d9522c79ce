import csv

import numpy as np
import pytest

from mechlin.geometry import MechanicalSystem
from mechlin.io import load_system
from mechlin.simulator import (
    BetaVanished,
    DomainExit,
    NonFiniteState,
    SineSignal,
    TableSignal,
    ZeroSignal,
    closed_loop,
    correspondence,
    integrate,
    parse_signal,
)
from mechlin.synthesis import MechanicalFeedback, linearize
from mechlin.expr import parse


def _oscillator():
    # xdd = -x + u, Gamma = 0
    return MechanicalSystem(2, {}, ["-x1", "-x2"], ["1", "0"], [[-10, 10], [-10, 10]])


def test_parse_signal(tmp_path):
    assert isinstance(parse_signal("zero"), ZeroSignal)
    s = parse_signal("sin:0.5,2")
    assert s(np.pi / 4) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        parse_signal("sin:1")
    p = tmp_path / "u.csv"
    p.write_text("t,u\n0,0\n1,1\n2,4\n3,9\n")
    tab = parse_signal(str(p))
    assert isinstance(tab, TableSignal)
    assert tab(2.0) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        tab(3.5)


def test_free_oscillator_matches_closed_form():
    s = _oscillator()
    tr = integrate(s, [1.0, 0.0, 0.0, 1.0], ZeroSignal(), 2.0, 1e-3, use_numba=False)
    t = tr.times
    assert np.allclose(tr.x[:, 0], np.cos(t), atol=1e-11)
    assert np.allclose(tr.x[:, 1], np.sin(t), atol=1e-11)
    assert np.allclose(tr.y[:, 0], -np.sin(t), atol=1e-11)


def test_forced_response_is_fourth_order():
    # xdd = -x + sin(2t) from rest: x = (2 sin t - sin 2t)/3
    s = _oscillator()
    exact = lambda t: (2 * np.sin(t) - np.sin(2 * t)) / 3
    errs = []
    for dt in (0.02, 0.01):
        tr = integrate(s, np.zeros(4), SineSignal(1.0, 2.0), 2.0, dt, use_numba=False)
        errs.append(np.max(np.abs(tr.x[:, 0] - exact(tr.times))))
    assert 12 < errs[0] / errs[1] < 20


def test_numba_and_numpy_agree():
    s = load_system("iwp")
    z0 = [0.3, 0.5, 0.2, -0.3]
    a = integrate(s, z0, SineSignal(0.1, 1.0), 0.3, 1e-3, use_numba=True)
    b = integrate(s, z0, SineSignal(0.1, 1.0), 0.3, 1e-3, use_numba=False)
    assert np.allclose(a.states, b.states, rtol=1e-12, atol=1e-12)


def test_environment_selects_backend(monkeypatch):
    from mechlin import _kernels

    monkeypatch.setenv("MECHLIN_NUMBA", "0")
    assert not _kernels.numba_enabled()


def test_csv_layout(tmp_path):
    s = load_system("iwp")
    tr = integrate(s, [0.1, 0.0, 0.0, 0.0], ZeroSignal(), 0.01, 1e-3, use_numba=False)
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["t", "x1", "x2", "y1", "y2", "u"]
    assert len(rows) == 12
    back = np.array(rows[1:], dtype=float)
    assert np.array_equal(back[:, 1:3], tr.x)


@pytest.mark.parametrize("T,dt", [(1.0, 0.0), (1.0, -1e-3), (1.0, 0.3), (1e-4, 1e-3)])
def test_bad_grids(T, dt):
    with pytest.raises(ValueError):
        integrate(_oscillator(), np.zeros(4), ZeroSignal(), T, dt)


def test_domain_exit_reports_time_and_state():
    s = load_system("iwp")
    with pytest.raises(DomainExit) as info:
        integrate(s, [0.9, 0.0, 5.0, 0.0], ZeroSignal(), 1.0, 1e-3, use_numba=False)
    assert 0 < info.value.t < 0.1
    with pytest.raises(DomainExit):
        integrate(s, [1.5, 0.0, 0.0, 0.0], ZeroSignal(), 1.0, 1e-3)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_state():
    s = MechanicalSystem(2, {(1, 1, 1): "-1"}, ["0", "0"], ["0", "1"], [[-np.inf, np.inf]] * 2)
    # xdd = xd^2 blows up in finite time
    with pytest.raises(NonFiniteState):
        integrate(s, [0.0, 0.0, 10.0, 0.0], ZeroSignal(), 5.0, 1e-2, use_numba=False)


def test_beta_vanishing():
    s = _oscillator()
    fb = MechanicalFeedback(parse("0"), parse("x1"), [[parse("0")] * 2 for _ in range(2)])
    with pytest.raises(BetaVanished):
        integrate(s, [1.0, 0.0, -1.0, 0.0], closed_loop(fb, SineSignal(0.1, 1.0)), 3.0, 1e-3, use_numba=False)


@pytest.mark.parametrize("name,z0", [("iwp", [-0.9, 0.0, 1.2, 0.0]), ("tora3", [0, 0, -1.15, 0, 0, 2.2])])
def test_commuting_diagram(name, z0):
    s = load_system(name)
    tr = linearize(s)
    c = correspondence(s, tr.model, tr.diffeo, tr.feedback, z0, SineSignal(0.1, 1.0), 2.0, 1e-2, use_numba=False)
    assert c.error < 1e-5
    assert c.mapped.shape == c.linear.states.shape


def test_lambda_corrected_system_commutes():
    s = MechanicalSystem(2, {(2, 2, 2): "x2"}, ["0", "x1"], ["1", "0"], [[-1, 1], [-1, 1]])
    tr = linearize(s)
    c = correspondence(s, tr.model, tr.diffeo, tr.feedback, [0.1, 0.2, 0.0, 0.1], SineSignal(0.1, 1.0), 1.0, 1e-2,
                       use_numba=False)
    assert c.error < 1e-8
