import glob
import re
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vmfp.acceptance import CONFIGS
from vmfp.errors import (
    CorruptPayload, HypothesisViolation, IoFailure, ParseError, UnknownScenario, VersionMismatch,
)
from vmfp.fields import forward_diff
from vmfp.kinetic import charge_current
from vmfp.phase_space import ExponentSet, total_mass
from vmfp.scenario import (
    MAGIC, Config, load_config, load_snapshot, make_initial, parse_config, save_snapshot,
)

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SMALL = ("grid.nx=16", "grid.x_len=4.0", "grid.nv=16")


def test_defaults():
    cfg = parse_config("")
    assert cfg == Config()
    assert cfg.phase_grid.dx == 0.25 and cfg.cutoff is None
    assert cfg.exponent_set == ExponentSet(9.0, 0.5, 12.0)


def test_overrides_apply_after_file():
    cfg = parse_config("[grid]\nnx = 32\n", ["grid.nx=128", "run.friction=true", "scenario.name=tanh"])
    assert cfg.grid.nx == 128 and cfg.run.friction and cfg.scenario.name == "tanh"


@pytest.mark.parametrize(
    "text,line,field",
    [
        ("[grid]\nnx = abc\n", 2, "grid.nx"),
        ("[grid]\n\nwhatever = 1\n", 3, "grid.whatever"),
        ("[nope]\nx = 1\n", 1, "nope"),
        ("nx = 4\n", 1, None),
        ("[run]\nfriction = maybe\n", 2, "run.friction"),
    ],
)
def test_parse_errors_carry_location(text, line, field):
    with pytest.raises(ParseError) as exc:
        parse_config(text)
    assert exc.value.line == line
    assert exc.value.field == field


@pytest.mark.parametrize("override", ["grid.nx", "nx=4", "bogus.nx=4"])
def test_bad_overrides(override):
    with pytest.raises(ParseError):
        parse_config("", [override])


@pytest.mark.parametrize(
    "text,msg",
    [("[exponents]\na = 8\n", "a > 8"), ("[exponents]\neps = 0\n", "eps > 0"),
     ("[exponents]\ndelta = 11\n", "δ > a+2+ε = 11.5")],
)
def test_hypothesis_violations(text, msg):
    with pytest.raises(HypothesisViolation, match=re.escape(msg)):
        parse_config(text)


@pytest.mark.parametrize("text", ["[grid]\nnx = 48\n", "[run]\nT = 0\n", "[scenario]\namplitude = 1.5\n"])
def test_semantic_errors(text):
    with pytest.raises(ParseError):
        parse_config(text)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(IoFailure):
        load_config(tmp_path / "absent.ini")


@given(
    nx=st.sampled_from([8, 16, 64]), x_len=st.floats(0.5, 50), amp=st.floats(-0.9, 0.9),
    friction=st.booleans(), name=st.sampled_from(["maxwellian", "beam", "tanh", "vacuum-wave"]),
)
def test_text_roundtrip(nx, x_len, amp, friction, name):
    cfg = parse_config(
        "", [f"grid.nx={nx}", f"grid.x_len={x_len!r}", f"scenario.amplitude={amp!r}",
             f"run.friction={friction}", f"scenario.name={name}"]
    )
    again = parse_config(cfg.to_text())
    assert again == cfg and again.digest() == cfg.digest()


@pytest.mark.parametrize("name", ["maxwellian", "beam", "tanh"])
@pytest.mark.parametrize("static", [False, True])
def test_initial_data_is_neutral_and_consistent(name, static):
    cfg = parse_config("", SMALL + (f"scenario.name={name}", f"scenario.static_background={static}",
                                    "scenario.b_amp=0.3", "scenario.e2_amp=0.2"))
    s = make_initial(cfg)
    g = s.f.grid
    rho, _ = charge_current(s.f, s.bg)
    assert abs(rho.sum() * g.dx) < 1e-13
    np.testing.assert_allclose(forward_diff(s.fields.E1, g.dx), rho, atol=1e-13)
    assert abs(s.fields.B.mean()) < 1e-15
    assert s.f.values.min() >= 0
    # per-cell density is 1 + A cos(kx) up to the midpoint-rule normalisation
    np.testing.assert_allclose(total_mass(s.f), g.x_len, rtol=1e-12)
    if not static:
        assert np.all(rho == 0)


def test_mass_override_and_vacuum_fallback():
    s = make_initial(parse_config("", SMALL + ("scenario.mass=2.5",)))
    assert total_mass(s.f) == pytest.approx(2.5, rel=1e-13)
    v = make_initial(parse_config("", SMALL + ("scenario.name=vacuum-wave",)))
    assert total_mass(v.f) == 0 and np.abs(v.fields.E2).max() > 0.9


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        make_initial(parse_config("", SMALL + ("scenario.name=plasma",)))


def test_snapshot_roundtrip_is_bit_exact(tmp_path):
    s = make_initial(parse_config("", SMALL + ("scenario.b_amp=0.1",)))
    s.t, s.leak = 0.75, 1.25e-9
    path = tmp_path / "s.snap"
    save_snapshot(s, path, ExponentSet(), "abc")
    back, hdr = load_snapshot(path)
    assert hdr["scenario_hash"] == "abc"
    assert back.t == s.t and back.leak == s.leak and back.f.grid == s.f.grid
    for a, b in [(back.f.values, s.f.values), (back.fields.E1, s.fields.E1), (back.fields.E2, s.fields.E2),
                 (back.fields.B, s.fields.B), (back.bg.phi, s.bg.phi)]:
        assert np.array_equal(a, b)
    assert path.read_bytes().startswith(MAGIC + b"\n")


def test_snapshot_errors(tmp_path):
    s = make_initial(parse_config("", SMALL))
    path = tmp_path / "s.snap"
    save_snapshot(s, path)
    blob = path.read_bytes()
    (tmp_path / "short.snap").write_bytes(blob[:-8])
    with pytest.raises(CorruptPayload):
        load_snapshot(tmp_path / "short.snap")
    (tmp_path / "v2.snap").write_bytes(blob.replace(MAGIC, b"VMFP2", 1))
    with pytest.raises(VersionMismatch):
        load_snapshot(tmp_path / "v2.snap")
    (tmp_path / "junk.snap").write_bytes(b"hello\n\n")
    with pytest.raises(CorruptPayload):
        load_snapshot(tmp_path / "junk.snap")
    with pytest.raises(IoFailure):
        load_snapshot(tmp_path / "absent.snap")
    with pytest.raises(IoFailure):
        save_snapshot(s, tmp_path / "no" / "dir.snap")


def test_shipped_configs_match_acceptance_set():
    files = sorted(glob.glob(os.path.join(ROOT, "configs", "*.ini")))
    assert {os.path.basename(p)[:-4] for p in files} == set(CONFIGS)
    for p in files:
        assert load_config(p) == parse_config(CONFIGS[os.path.basename(p)[:-4]])
