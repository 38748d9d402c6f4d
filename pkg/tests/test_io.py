import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fringecorr import io
from fringecorr.correlator import correlate
from fringecorr.errors import InvalidInputError
from fringecorr.model import EventSet


@pytest.mark.parametrize("text,value", [
    ("0.76pi", 0.76 * math.pi), ("pi", math.pi), ("-pi", -math.pi), ("-0.25*pi", -0.25 * math.pi),
    ("2π", 2 * math.pi), ("1.5", 1.5), (2, 2.0), ("1e-2 pi", 1e-2 * math.pi)])
def test_parse_phase(text, value):
    assert io.parse_phase(text) == pytest.approx(value)


@pytest.mark.parametrize("bad", ["abc", "xpi", True, None, [1]])
def test_parse_phase_rejects(bad):
    with pytest.raises(InvalidInputError):
        io.parse_phase(bad, "tones[0].amplitude")


def test_parse_fraction():
    assert io.parse_fraction("0.1") == Fraction(1, 10)
    assert io.parse_fraction(50) == Fraction(50)
    assert io.parse_fraction(0.1) == Fraction(1, 10)
    with pytest.raises(InvalidInputError):
        io.parse_fraction("x")


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(-5, 5)), min_size=1, max_size=50))
def test_event_round_trip_is_lossless(tmp_path_factory, pts):
    t, y = zip(*pts)
    ev = EventSet(t, y, T=10.0, Y=10.0, metadata={"seed": 3, "note": "x"})
    p = tmp_path_factory.mktemp("ev") / "events.csv"
    io.write_events(p, ev)
    back = io.read_events(p)
    assert np.array_equal(back.t, ev.t) and np.array_equal(back.y, ev.y)
    assert back.T == ev.T and back.Y == ev.Y
    assert back.metadata["seed"] == 3


def test_event_digits_and_errors(tmp_path):
    ev = EventSet([0.123456789], [1.23456789], 1.0, 4.0)
    p = tmp_path / "e.csv"
    io.write_events(p, ev, digits=4)
    assert io.read_events(p).t[0] == pytest.approx(0.1235)
    with pytest.raises(InvalidInputError):
        io.read_events(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("hello\n")
    with pytest.raises(InvalidInputError):
        io.read_events(bad)
    bad.write_text(io.EVENTS_MAGIC + "\n#T_s=1,Y_mm=1\n0.1;0.2\n")
    with pytest.raises(InvalidInputError, match=":3"):
        io.read_events(bad)
    bad.write_text(io.EVENTS_MAGIC + "\n#T_s=1,Y_mm=1\n")
    with pytest.raises(InvalidInputError):
        io.read_events(bad)


@pytest.fixture(scope="module")
def small_grid():
    rng = np.random.default_rng(0)
    ev = EventSet(rng.uniform(0, 1, 2000), rng.uniform(-2, 2, 2000), 1.0, 4.0)
    return correlate(ev, 0.3, 0.01, 0.2, 1.9)


def _same(a, b):
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.valid, b.valid)
    assert np.array_equal(a.zero_lag_counts, b.zero_lag_counts)
    assert np.array_equal(a.zero_lag_values, b.zero_lag_values)
    for f in ("du", "dtau", "tau_max", "u_max", "n_events", "T", "Y"):
        assert getattr(a, f) == getattr(b, f)


@pytest.mark.parametrize("binary", [False, True])
def test_grid_round_trip(tmp_path, small_grid, binary):
    p = tmp_path / "g.dat"
    io.write_grid(p, small_grid, binary=binary)
    back = io.read_grid(p)
    _same(small_grid, back)
    q = tmp_path / "g2.dat"
    io.write_grid(q, back, binary=binary)
    assert p.read_bytes() == q.read_bytes()


def test_grid_read_errors(tmp_path):
    with pytest.raises(InvalidInputError):
        io.read_grid(tmp_path / "nope")
    p = tmp_path / "g.txt"
    p.write_text("something else\n")
    with pytest.raises(InvalidInputError):
        io.read_grid(p)


def test_table_and_report_round_trip(tmp_path):
    io.write_table(tmp_path / "t.csv", {"a_hz": [1.0, 2.5], "b": np.array([3, 4])})
    tab = io.read_table(tmp_path / "t.csv")
    assert tab["a_hz"].tolist() == [1.0, 2.5] and tab["b"].tolist() == [3, 4]
    io.write_report(tmp_path / "r.csv", {"x": (0.1, "mm"), "label": ("tone", "label")})
    assert io.read_report(tmp_path / "r.csv") == {"x": "0.1", "label": "tone"}


def test_presets_load():
    names = io.preset_names()
    for n in ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10",
              "fig11", "fig12", "fig13"]:
        assert n in names
        assert io.load_config(n).raw()


def test_config_inheritance_and_overrides(tmp_path):
    cfg = io.load_config("fig10")
    assert cfg.section("model").number("contrast") == 0.6
    assert "sweep" in cfg
    over = io.load_config("fig9", {"perturbation.tones.0.amplitude": "0.76pi",
                                   "model.contrast": 0.5})
    pert = over.section("perturbation")
    assert io.tones_from_config(pert).amplitudes[0] == pytest.approx(0.76 * math.pi)
    assert io.model_from_config(over).contrast == 0.5
    p = tmp_path / "c.yaml"
    p.write_text("base: fig9\nmodel:\n  period_mm: 3.0\n")
    c = io.load_config(p)
    assert io.model_from_config(c).period == 3.0
    assert io.model_from_config(c).contrast == 0.6


def test_config_errors_name_the_key(tmp_path):
    cfg = io.load_config("fig9", {"model.contrast": "lots"})
    with pytest.raises(InvalidInputError, match="model.contrast"):
        io.model_from_config(cfg)
    with pytest.raises(InvalidInputError, match="unknown preset"):
        io.load_config("fig99")
    with pytest.raises(InvalidInputError):
        io.load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    with pytest.raises(InvalidInputError):
        io.load_config(bad)
    with pytest.raises(InvalidInputError):
        io.parse_override("novalue")
    assert io.parse_override("a.b=0.5") == ("a.b", 0.5)


def test_band_from_config():
    b = io.band_from_config(io.load_config("fig12").section("perturbation").section("gaussian"))
    assert b["omega0"] == pytest.approx(2 * math.pi * 50)
    assert b["resolution"] == pytest.approx(2 * math.pi * 1e-3)
    assert b["normalization"] == "tone"
