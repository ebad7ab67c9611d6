"""Smoke test for the Python bindings.

Build first:  pip install --no-build-isolation -e crates/py
Run:          python -m pytest python/smoke_test.py   (or python python/smoke_test.py)
"""

import math

import optomech


def test_params_and_derived_scales():
    p = optomech.ModelParams(detuning=-0.4, sigma=0.1)
    assert math.isclose(p.coupling, 2 * 0.1 * 0.5)
    assert math.isclose(p.drive, math.sqrt(1.5 / 8) / p.coupling)
    assert math.isclose(p.uncertainty_floor, 0.5 * p.coupling**2)
    try:
        optomech.ModelParams(kappa=-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative kappa accepted")


def test_chart_branches_at_case_a():
    amps = [0.1 * k for k in range(36)]
    chart = optomech.amplitude_chart([-0.4], amps, optomech.ModelParams())
    lo, hi = chart["branches"][0]
    assert abs(lo - 1.2) < 0.15 and abs(hi - 2.7) < 0.2
    assert len(chart["net"][0]) == len(amps)


def test_classical_and_classifier():
    p = optomech.ModelParams(detuning=-0.4)
    s = optomech.integrate_classical(p, 20.0, sample_dt=0.5)
    assert len(s["tau"]) == len(s["x"]) == 41
    assert all(abs(a) <= 1.0 / (2 * p.kappa) + 1e-9 for a in s["alpha"])
    rep = optomech.classify_attractor(p, t_end=2000.0)
    assert rep["kind"] == "periodic" and rep["period"] == 1


def test_qsd_against_master():
    p = optomech.ModelParams(pump=0.05, sigma=1.0)
    fock = (4, 5)
    ens = optomech.qsd_ensemble(p, fock, 2.0, 0.005, 100, record_stride=100, leak_threshold=1.0)
    me = optomech.master_equation(p, fock, ens["tau"], leak_threshold=1.0)
    for x, se, exact in zip(ens["x"], ens["x_stderr"], me["x"]):
        assert abs(x - exact) <= 4 * se + 1e-12
    assert all(abs(t - 1) < 1e-8 for t in me["trace"])


def test_trajectory_snapshot_wigner():
    p = optomech.ModelParams(pump=0.05, sigma=1.0)
    tr = optomech.qsd_trajectory(p, (4, 8), 0.5, 0.005, beta=0.5 + 0j, snapshot_times=[0.5])
    assert min(tr["product"]) >= p.uncertainty_floor * (1 - 1e-6)
    (t, rho), = tr["snapshots"]
    w = optomech.wigner(rho, p.coupling, points=81)
    assert abs(w["integral"] - 1.0) < 1e-3
    a = optomech.qsd_trajectory(p, (4, 8), 0.5, 0.005, seed=3)
    b = optomech.qsd_trajectory(p, (4, 8), 0.5, 0.005, seed=3)
    assert a["x"] == b["x"]


def test_run_config(tmp_path=None):
    import tempfile

    out = tmp_path or tempfile.mkdtemp()
    rep = optomech.run_config('engine = "classical"\n[classical]\nt_end = 200.0\nlyapunov = false\n', str(out))
    assert "series.csv" in rep["files"]


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            fn()
            print("ok", name)
