"""Acceptance suite.

Each test checks one numbered criterion, records a one-line PASS/FAIL summary
(printed in the terminal summary) and then asserts it.
Tolerances are the published ones; nothing is loosened here.  The notched
studies are expensive (tens of minutes in total) and shared between criteria
through session fixtures.
"""
import time

import numpy as np
import pytest

from anisodamage import verify
from anisodamage.damage import MaterialParams
from anisodamage.scenarios import SINGLE_MODES, preset_notched, preset_single_element, run_study
from acceptance_registry import record_acceptance

K_ANI = (0.0, 0.33, 0.67, 1.0)
RUNS: list = []  # every study run by this suite, for the thermodynamics criterion


def study(cfg):
    res = run_study(cfg)
    RUNS.append(res)
    return res


def report(number, ok, text):
    record_acceptance(number, bool(ok), text)
    assert ok, text


# ---------------------------------------------------------------------------
# shared studies
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def single_peaks():
    t0 = time.perf_counter()
    peaks = {m: [study(preset_single_element(m, k_ani=k)).peak() for k in K_ANI]
             for m in SINGLE_MODES}
    return peaks, time.perf_counter() - t0


@pytest.fixture(scope="session")
def notched():
    cache = {}

    def get(level, kind, local=False):
        key = (level, kind, local)
        if key not in cache:
            cache[key] = study(preset_notched(level, kind, local=local))
        return cache[key]
    return get


def drop_displacement(res, fraction=0.9):
    """First post-peak displacement where the force has dropped by ``fraction``."""
    f, u = np.abs(res.force), res.displacement
    k = int(np.argmax(f))
    below = np.flatnonzero(f[k:] <= (1.0 - fraction) * f[k])
    if not len(below):
        return float("inf")
    j = k + below[0]
    # linear interpolation between the bracketing steps
    f0, f1 = f[j - 1], f[j]
    target = (1.0 - fraction) * f[k]
    return float(u[j - 1] + (f0 - target) / (f0 - f1) * (u[j] - u[j - 1]))


def band_width(res, threshold=0.9):
    """Median number of elements per horizontal row with averaged ``D_xx`` above threshold.

    The crack crosses the ligament between the notches, roughly along y, so a
    row of elements at fixed y cuts across it.
    """
    mesh = res.solver.system.mesh
    Dxx = res.solver.D.mean(axis=1)[:, 0, 0]
    yc = mesh.nodes[mesh.elements, 1].mean(axis=1)
    rows = np.round(yc, 6)
    counts = [int(np.sum(Dxx[rows == y] > threshold)) for y in np.unique(rows)]
    counts = [c for c in counts if c > 0]
    return (float(np.median(counts)) if counts else 0.0), int(np.sum(Dxx > threshold))


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_criterion_01_damage_growth():
    r = verify.check_damage_growth(samples=10_000)
    ok = r.passed and r.seconds < 10.0
    report(1, ok, f"damage growth: worst scaled eigenvalue {r.worst:.3e} (<= 1e-10), "
                  f"{r.samples} states, runtime {r.seconds:.2f} s (< 10 s)")


def test_criterion_02_isochoric_counterexample():
    r = verify.check_isochoric_violation()
    value = r.details["eigenvalue"]
    ok = r.passed and r.seconds < 1.0
    report(2, ok, f"isochoric counterexample: eigenvalue {value:.4f} MPa vs 654.3 +- 0.1, "
                  f"runtime {r.seconds:.3f} s (< 1 s)")


def test_criterion_03_boundary_derivatives():
    r = verify.check_boundary_derivatives(samples=1000)
    ok = r.passed and r.seconds < 1.0
    report(3, ok, f"boundary derivatives: max norm {r.worst:.3e} (< 1e-12), "
                  f"runtime {r.seconds:.3f} s (< 1 s)")


def test_criterion_04_single_element_ratios(single_peaks):
    peaks, runtime = single_peaks
    i = K_ANI.index(1.0)
    t = peaks["tension"][i]
    r_strain = peaks["uniaxial-strain"][i] / t
    r_shear = peaks["simple-shear"][i] / t
    ok = abs(r_strain - 1.0593) <= 0.015 and abs(r_shear - 0.6573) <= 0.020 and runtime < 120
    report(4, ok, f"single element ratios: strain/tension {r_strain:.4f} (1.0593 +- 0.015), "
                  f"shear/tension {r_shear:.4f} (0.6573 +- 0.020), "
                  f"runtime {runtime:.1f} s for all 16 runs (< 120 s)")


def test_criterion_05_kani_monotonicity(single_peaks):
    peaks, runtime = single_peaks
    mono = {m: bool(np.all(np.diff(np.abs(v)) > 0)) for m, v in peaks.items()}
    ok = all(mono.values()) and runtime < 300
    text = ", ".join(f"{m} " + "/".join(f"{abs(v):.1f}" for v in peaks[m]) for m in SINGLE_MODES)
    report(5, ok, f"k_ani monotonicity: {text}; runtime {runtime:.1f} s (< 300 s)")


def test_criterion_06_regularized_mesh_objectivity(notched):
    coarse, fine = notched("coarse", "C"), notched("fine", "C")
    dp = abs(coarse.peak() - fine.peak()) / abs(fine.peak())
    de = abs(coarse.dissipated_energy() - fine.dissipated_energy()) / abs(fine.dissipated_energy())
    ok = dp <= 0.03 and de <= 0.08 and max(coarse.wall_time, fine.wall_time) < 1800
    report(6, ok, f"model C coarse/fine: peak {coarse.peak():.1f}/{fine.peak():.1f} N "
                  f"(diff {100 * dp:.2f}% <= 3%), energy {coarse.dissipated_energy():.1f}/"
                  f"{fine.dissipated_energy():.1f} N mm (diff {100 * de:.2f}% <= 8%), "
                  f"runtime {coarse.wall_time:.0f}/{fine.wall_time:.0f} s (< 1800 s)")


def test_criterion_07_local_mesh_dependence(notched):
    runs = [notched(level, "C", local=True) for level in ("coarse", "medium", "fine")]
    peaks = [abs(r.peak()) for r in runs]
    widths = [band_width(r) for r in runs]
    decreasing = bool(np.all(np.diff(peaks) < 0))
    one_wide = all(w == 1.0 for w, n in widths)
    ok = decreasing and one_wide
    report(7, ok, "local model: peaks " + "/".join(f"{p:.1f}" for p in peaks)
                  + f" N (strictly decreasing: {decreasing}), band width "
                  + "/".join(f"{w:g}" for w, n in widths) + " elements (D_xx > 0.9 cells: "
                  + "/".join(str(n) for w, n in widths) + ")")


def test_criterion_08_model_b_overshoot(notched):
    b, c = notched("coarse", "B"), notched("coarse", "C")
    ub, uc = drop_displacement(b), drop_displacement(c)
    ok = ub > uc
    report(8, ok, f"displacement at 90% post-peak drop: model B {ub:.3f} mm vs model C "
                  f"{uc:.3f} mm (B must exceed C)")


def _newton_ratio():
    from test_fem import SET1, _cube_tension
    s = _cube_tension(SET1, steps=10, u_max=0.1)
    worst, checked = 0.0, 0
    for t in s.system.program.load_factors:
        rec = s.newton_solve(float(t))
        if s.last.dgamma.max() > 0 and len(rec.residuals) >= 3:
            h = np.array(rec.residuals[-4:])
            worst = max(worst, float((h[1:] / h[:-1]).max()))
            checked += 1
    return worst, checked


def _richardson():
    from anisodamage import damage as dm
    p = MaterialParams.set2().with_(H_i=1e4)
    state = dm.InternalState(np.diag([0.2, 0.05, 0.0]), 0.1)
    C = np.array([[1.22, 0.02, 0.01], [0.02, 1.0, 0.005], [0.01, 0.005, 0.99]])
    dbar = np.array([0.05, 0.01])
    a = dm.consistent_tangent(C, dbar, state, 0.01, p, "C", rel_step=1e-6)
    b = dm.consistent_tangent(C, dbar, state, 0.01, p, "C", rel_step=1e-7)
    return max(np.abs(getattr(a, n) - getattr(b, n)).max() / np.abs(getattr(a, n)).max()
               for n in ("dS_dC", "dS_ddbar", "dxi0_dC", "dxi0_ddbar"))


def test_criterion_09_derivative_hygiene():
    fd = verify.check_fd_consistency(samples=100)
    rich = _richardson()
    ratio, checked = _newton_ratio()
    ok = fd.passed and rich <= 1e-4 and checked > 0 and ratio < 0.2
    report(9, ok, f"derivatives: worst FD relative error {fd.worst:.2e} (<= 1e-6, 100 states), "
                  f"Richardson tangent difference {rich:.2e} (<= 1e-4), "
                  f"worst Newton ratio {ratio:.3g} (< 0.2, {checked} damaging steps)")


def test_criterion_10_discrete_thermodynamics(single_peaks, notched):
    # all acceptance studies, including any not yet requested by earlier tests
    notched("coarse", "C"), notched("fine", "C"), notched("coarse", "B")
    for level in ("coarse", "medium", "fine"):
        notched(level, "C", local=True)
    diags = [d for r in RUNS for d in r.diagnostics]
    worst = {"dgamma": min(d.min_dgamma for d in diags),
             "eig_min": min(d.min_D_eig for d in diags),
             "eig_max": max(d.max_D_eig for d in diags),
             "dxi": min(d.min_dxi for d in diags),
             "dissipation": min(d.min_dissipation for d in diags)}
    ok = (worst["dgamma"] >= 0 and worst["eig_min"] >= 0 and worst["eig_max"] < 1
          and worst["dxi"] >= 0 and worst["dissipation"] >= -1e-10)
    report(10, ok, f"thermodynamics over {len(RUNS)} studies / {len(diags)} steps: "
                   f"min dgamma {worst['dgamma']:.3g}, D eigenvalues in "
                   f"[{worst['eig_min']:.3g}, {worst['eig_max']:.6f}], min dxi {worst['dxi']:.3g}, "
                   f"min dissipation {worst['dissipation']:.3g} (>= -1e-10)")
