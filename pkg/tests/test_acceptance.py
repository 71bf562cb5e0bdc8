"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``).

The two synthesis campaigns (beam, building) are module-scoped fixtures so
several criteria can share one run.  Criterion 9 is asserted exactly as
specified; see notes in the repository docs about its low-parameter branch.
"""

import time

import numpy as np
import pytest
from scipy.stats import spearmanr

import lfsynth as lf
from lfsynth.lft import eval_controller, lower_lft_ss, upper_lft_matrix
from lfsynth.models import (
    BeamSpec,
    WeightSpec,
    beam_generalized_plant,
    building_surrogate,
    lah_generalized_plant,
    make_weight,
    timoshenko_beam,
)
from lfsynth.norms import h2_norm, hinf_norm
from lfsynth.statespace import StateSpace, append_diag, frequency_gain, spectral_abscissa
from lfsynth.synth import (
    OptimizeOptions,
    StructureOptions,
    SynthesisProblem,
    init_from_nominal,
    objective,
    optimize,
)

from conftest import random_block, random_stable_ss


def report(num, name, ok, detail=""):
    print(f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'} {name} {detail}")
    assert ok, f"criterion {num}: {name} {detail}"


# ---------------------------------------------------------------------------
# Shared synthesis campaigns


@pytest.fixture(scope="module")
def beam_campaign():
    grid = (10.0, 12.5, 15.0, 17.5, 20.0)
    plants = tuple(
        beam_generalized_plant(timoshenko_beam(BeamSpec(length=L, n_elements=15)))
        for L in grid
    )
    wk = make_weight(WeightSpec(kind="first-order-lag", gain=0.1, corner=100.0))
    structure = StructureOptions(n_k=2, n_delta=1, dependency="affine")
    problem = SynthesisProblem(plants, grid, wk, structure)
    opts = OptimizeOptions(max_iter=150, restarts=3, seed=0)
    nominal = init_from_nominal(problem, 2, opts)  # L = 15
    result = optimize(problem, nominal, opts)

    lengths = np.linspace(10.0, 20.0, 21)

    def sweep(kb):
        values = []
        for length in lengths:
            plant = beam_generalized_plant(
                timoshenko_beam(BeamSpec(length=float(length), n_elements=15))
            )
            closed = lower_lft_ss(plant, eval_controller(kb, float(length)))
            if spectral_abscissa(closed) >= 0.0:
                values.append(np.inf)
            else:
                values.append(hinf_norm(closed, 1e-6).value)
        return np.array(values)

    return {
        "grid": grid,
        "problem": problem,
        "nominal": nominal,
        "result": result,
        "lengths": lengths,
        "sweep_parametric": sweep(result.controller),
        "sweep_nominal": sweep(nominal),
    }


@pytest.fixture(scope="module")
def building_campaign():
    base = building_surrogate(6, 5.2, seed=0)
    grid = (0.5, 0.75, 1.0, 1.25, 1.5)
    plants = tuple(lah_generalized_plant(base, r) for r in grid)
    wspec = WeightSpec(kind="biquad-notch", w_m=5.2, alpha=10.0, m=0.1,
                       rho_scaled=True)
    weights = tuple(make_weight(wspec, r) for r in grid)
    structure = StructureOptions(
        n_k=4, n_delta=3, dependency="affine", a_k_shape="tridiagonal"
    )
    problem = SynthesisProblem(plants, grid, weights, structure)
    opts = OptimizeOptions(max_iter=250, restarts=3, seed=0)
    nominal = init_from_nominal(problem, 2, opts)  # rho = 1
    result = optimize(problem, nominal, opts)

    open_peak = hinf_norm(base, 1e-8)
    measurement = lah_generalized_plant(base, 1.0)
    rhos = np.linspace(0.5, 1.5, 21)

    def curves(kb):
        h2s, mags = [], []
        for rho in rhos:
            closed = lower_lft_ss(measurement, eval_controller(kb, float(rho)))
            if spectral_abscissa(closed) >= 0.0:
                h2s.append(np.inf)
                mags.append(np.inf)
                continue
            h2s.append(h2_norm(closed))
            mags.append(abs(frequency_gain(closed, open_peak.peak_omega)[0, 0]))
        return np.array(h2s), np.array(mags)

    h2_par, mag_par = curves(result.controller)
    h2_nom, mag_nom = curves(nominal)
    return {
        "base": base,
        "result": result,
        "nominal": nominal,
        "rhos": rhos,
        "open_peak": open_peak,
        "open_mag": abs(frequency_gain(base, open_peak.peak_omega)[0, 0]),
        "h2_parametric": h2_par,
        "h2_nominal": h2_nom,
        "mag_parametric": mag_par,
        "mag_nominal": mag_nom,
    }


# ---------------------------------------------------------------------------
# Criterion 1: certified norm vs an independent dense-sweep oracle


def _sweep_oracle(sys):
    radius = max(float(np.abs(np.linalg.eigvals(sys.a)).max()), 1e-3)

    def scan(omegas):
        best_v, best_w = -1.0, 0.0
        for w in omegas:
            gain = sys.c @ np.linalg.solve(1j * w * np.eye(sys.n) - sys.a, sys.b) + sys.d
            v = np.linalg.svd(gain, compute_uv=False)[0]
            if v > best_v:
                best_v, best_w = v, w
        return best_v, best_w

    value, peak = scan(
        np.concatenate([[0.0], np.geomspace(radius * 1e-3, radius * 1e3, 2000)])
    )
    width = 10.0
    for _ in range(3):
        lo = peak / width if peak > 0.0 else radius * 1e-6
        hi = peak * width if peak > 0.0 else radius * 1e-3
        v, w = scan(np.geomspace(lo, hi, 400))
        if v > value:
            value, peak = v, w
        width = width**0.25
    return value


def test_criterion_01_hinf_oracle_equivalence():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 11))
        n_u = int(rng.integers(1, 4))
        n_y = int(rng.integers(1, 4))
        sys = random_stable_ss(rng, n, n_u, n_y)
        certified = hinf_norm(sys, rel_tol=1e-6).value
        oracle = _sweep_oracle(sys)
        worst = max(worst, abs(certified - oracle) / oracle)
    elapsed = time.perf_counter() - start
    report(
        1,
        "certified norm matches dense-sweep oracle on 50 systems",
        worst <= 1e-4 and elapsed < 30.0,
        f"(worst rel dev {worst:.2e}, {elapsed:.1f} s)",
    )


def test_criterion_02_analytic_norms():
    zeta = 0.1
    resonant = StateSpace(
        [[0.0, 1.0], [-1.0, -2.0 * zeta]], [[0.0], [1.0]], [[1.0, 0.0]], [[0.0]]
    )
    expect_peak = 1.0 / (2.0 * zeta * np.sqrt(1.0 - zeta**2))
    got_peak = hinf_norm(resonant, rel_tol=1e-6).value
    lag = StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
    got_h2 = h2_norm(lag)
    ok = (
        abs(got_peak - expect_peak) <= 1e-4 * expect_peak
        and abs(got_h2 - 1.0 / np.sqrt(2.0)) <= 1e-9
    )
    report(
        2,
        "analytic resonance peak and first-order H2 value",
        ok,
        f"(peak {got_peak:.6f} vs {expect_peak:.6f}, h2 {got_h2:.10f})",
    )


def test_criterion_03_lft_consistency():
    rng = np.random.default_rng(31)
    worst = 0.0
    for _ in range(100):
        n_k = int(rng.integers(0, 4))
        n_delta = int(rng.integers(1, 4))
        n_u = int(rng.integers(1, 3))
        n_y = int(rng.integers(1, 3))
        rho = float(rng.uniform(-1.5, 1.5))
        kb = random_block(rng, n_k, n_delta, n_u, n_y, well_posed_for=[rho])
        sys = eval_controller(kb, rho)
        for w in np.geomspace(0.08, 12.0, 6):
            inner = upper_lft_matrix(
                kb.k.astype(complex), np.eye(n_k) / (1j * w)
            )
            outer = upper_lft_matrix(inner, rho * np.eye(n_delta))
            got = frequency_gain(sys, w)
            worst = max(worst, float(np.abs(got - outer).max()))
        # delta = 0 reduction is exact
        at_zero = eval_controller(kb, 0.0)
        assert np.array_equal(at_zero.a, kb.a_k)
        assert np.array_equal(at_zero.d, kb.d_yu)
        # affine dependency once d_zw is pinned to zero
        k_aff = np.array(kb.k)
        k_aff[n_k : n_k + n_delta, n_k : n_k + n_delta] = 0.0
        kb_aff = kb.with_k(k_aff)
        s1 = eval_controller(kb_aff, 0.4)
        s2 = eval_controller(kb_aff, 1.2)
        sm = eval_controller(kb_aff, 0.8)
        for part in "abcd":
            m1, m2, mm = (getattr(s, part) for s in (s1, s2, sm))
            if m1.size:
                assert np.abs(m1 + m2 - 2.0 * mm).max() <= 1e-12
    report(
        3,
        "controller instantiation matches the double-LFT composition",
        worst <= 1e-8,
        f"(worst deviation {worst:.2e})",
    )


def test_criterion_04_append_max_property():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(20):
        g1 = random_stable_ss(rng, int(rng.integers(2, 7)))
        g2 = random_stable_ss(rng, int(rng.integers(2, 7)))
        v1 = hinf_norm(g1, 1e-6).value
        v2 = hinf_norm(g2, 1e-6).value
        va = hinf_norm(append_diag([g1, g2]), 1e-6).value
        worst = max(worst, abs(va - max(v1, v2)) / max(v1, v2))
    report(
        4,
        "block-diagonal stacking has the max of the member norms",
        worst <= 3e-6,
        f"(worst rel dev {worst:.2e})",
    )


def test_criterion_05_toy_synthesis_descent():
    start = time.perf_counter()

    def plant(rho):
        return lf.PartitionedSystem(
            StateSpace(
                [[0.0, 1.0], [-rho, -0.4]], [[0.0, 0.0], [1.0, 1.0]],
                [[1.0, 0.0], [1.0, 0.0]], np.zeros((2, 2)),
            ),
            (1, 1),
            (1, 1),
        )

    grid = (1.0, 2.0, 3.0)
    structure = StructureOptions(n_k=1, n_delta=1, dependency="affine")
    problem = SynthesisProblem(
        tuple(plant(r) for r in grid), grid, lf.static_gain([[0.02]]), structure
    )
    opts = OptimizeOptions(max_iter=120, restarts=3, seed=0)
    kb0 = init_from_nominal(problem, 1, opts)
    initial = objective(problem, kb0, rel_tol=1e-6)
    result = optimize(problem, kb0, opts)
    recheck = objective(problem, result.controller, rel_tol=1e-6)
    elapsed = time.perf_counter() - start
    objs = [row.objective for row in result.trace]
    ok = (
        result.gamma <= initial.value * (1.0 + 1e-9)
        and recheck.stable
        and all(v <= result.gamma * (1.0 + 1e-6) for v in recheck.per_point)
        and all(b <= a + 1e-12 for a, b in zip(objs, objs[1:]))
        and elapsed < 60.0
    )
    report(
        5,
        "toy synthesis descends and certifies",
        ok,
        f"(init {initial.value:.4f} -> final {result.gamma:.4f}, {elapsed:.1f} s)",
    )


def test_criterion_06_beam_parametric_beats_nominal(beam_campaign):
    worst_par = float(np.max(beam_campaign["sweep_parametric"]))
    worst_nom = float(np.max(beam_campaign["sweep_nominal"]))
    report(
        6,
        "parametric beam controller beats the nominal-only one across lengths",
        worst_par < worst_nom,
        f"(parametric worst {worst_par:.4f}, nominal worst {worst_nom:.4f})",
    )


def test_criterion_07_beam_synthesis_vs_sweep(beam_campaign):
    lengths = beam_campaign["lengths"]
    sweep = beam_campaign["sweep_parametric"]
    result = beam_campaign["result"]
    worst = 0.0
    for j, grid_value in enumerate(beam_campaign["grid"]):
        i = int(np.argmin(np.abs(lengths - grid_value)))
        ref = result.per_point_perf_norms[j]
        worst = max(worst, abs(sweep[i] - ref) / ref)
    report(
        7,
        "sweep values reproduce the synthesis per-point performance norms",
        worst <= 1e-4,
        f"(worst rel dev {worst:.2e})",
    )


def test_criterion_08_building_attenuation_monotone(building_campaign):
    rhos = building_campaign["rhos"]
    h2s = building_campaign["h2_parametric"]
    finite = np.all(np.isfinite(h2s))
    corr = spearmanr(rhos, h2s).statistic if finite and np.ptp(h2s) > 0 else 0.0
    band_ok = finite and all(
        h2s[i + 1] <= h2s[i] * 1.05 for i in range(len(h2s) - 1)
    )
    ok = finite and corr <= -0.9 and band_ok
    report(
        8,
        "attenuation improves monotonically with the tuning parameter",
        ok,
        f"(spearman {corr:.3f}, h2 {h2s[0]:.4f} -> {h2s[-1]:.4f})",
    )


def test_criterion_09_building_peak_attenuation(building_campaign):
    open_mag = building_campaign["open_mag"]
    limit = 0.7 * open_mag
    par_ok = bool(np.all(building_campaign["mag_parametric"] <= limit))
    nom_ok = bool(np.all(building_campaign["mag_nominal"] <= limit))
    red_par = 100.0 * (1.0 - np.max(building_campaign["mag_parametric"]) / open_mag)
    red_nom = 100.0 * (1.0 - np.max(building_campaign["mag_nominal"]) / open_mag)
    report(
        9,
        "peak magnitude reduced by at least 30% for every parameter value",
        par_ok and nom_ok,
        f"(worst reduction: parametric {red_par:.1f}%, nominal {red_nom:.1f}%; "
        "the parametric low-rho branch is analyzed as unattainable at the "
        "converged optimum, see docs)",
    )


def test_criterion_10_determinism_and_io(tmp_path):
    from lfsynth.cli import main
    from lfsynth.models import load_statespace, save_statespace
    from lfsynth.lft import load_controller, save_controller

    rng = np.random.default_rng(99)
    # file round-trips
    sys = random_stable_ss(rng, 5, 2, 2)
    save_statespace(sys, str(tmp_path / "sys.ss"))
    back = load_statespace(str(tmp_path / "sys.ss"))
    roundtrip_ok = all(
        np.array_equal(getattr(sys, p), getattr(back, p)) for p in "abcd"
    )
    kb = random_block(rng, 2, 1, 1, 1)
    save_controller(kb, str(tmp_path / "kb.txt"))
    kb_back = load_controller(str(tmp_path / "kb.txt"))
    roundtrip_ok = roundtrip_ok and np.array_equal(kb.k, kb_back.k)

    # deterministic synth -> eval -> bode pipeline on a tiny custom scenario
    for i, pole in enumerate((-1.0, -2.0)):
        save_statespace(
            StateSpace([[pole]], [[1.0, 1.0]], [[1.0], [1.0]], np.zeros((2, 2))),
            str(tmp_path / f"p{i}.ss"),
        )
    blobs = []
    for tag in ("a", "b"):
        cfg = tmp_path / f"run_{tag}.cfg"
        cfg.write_text(
            "\n".join(
                [
                    "scenario = custom",
                    "grid = 1.0, 2.0",
                    f"custom.plants = {tmp_path}/p0.ss, {tmp_path}/p1.ss",
                    "n_k = 0",
                    "n_delta = 1",
                    "wk.kind = static",
                    "wk.gain = 0.02",
                    "opt.max_iter = 30",
                    "opt.restarts = 2",
                    "opt.seed = 11",
                    "sweep.n_points = 7",
                    f"io.controller = {tmp_path}/k_{tag}.txt",
                    f"io.trace = {tmp_path}/t_{tag}.csv",
                    f"io.summary = {tmp_path}/s_{tag}.txt",
                ]
            )
            + "\n"
        )
        assert main(["synth", "--config", str(cfg)]) in (0, 2)
        assert main(
            ["eval", "--controller", f"{tmp_path}/k_{tag}.txt", "--config",
             str(cfg), "--out", f"{tmp_path}/e_{tag}.csv"]
        ) == 0
        assert main(
            ["bode", "--controller", f"{tmp_path}/k_{tag}.txt", "--config",
             str(cfg), "--rho", "1.0,2.0", "--out", f"{tmp_path}/b_{tag}.csv"]
        ) == 0
        blobs.append(
            tuple(
                (tmp_path / name.format(tag)).read_bytes()
                for name in ("k_{}.txt", "e_{}.csv", "b_{}.csv", "s_{}.txt")
            )
        )
    deterministic_ok = blobs[0] == blobs[1]

    # exit codes: malformed config -> 1; unstabilizable problem -> 3
    bad = tmp_path / "bad.cfg"
    bad.write_text("scenario = beam\n")  # missing grid
    exit1 = main(["synth", "--config", str(bad)]) == 1
    save_statespace(
        StateSpace([[1.0]], [[1.0, 1.0]], [[1.0], [1.0]], np.zeros((2, 2))),
        str(tmp_path / "unstable.ss"),
    )
    hopeless = tmp_path / "hopeless.cfg"
    hopeless.write_text(
        "\n".join(
            [
                "scenario = custom",
                "grid = 1.0",
                f"custom.plants = {tmp_path}/unstable.ss",
                "n_k = 0",
                "n_delta = 0",
                "class = strictly-proper-h2",  # pins d_yu: nothing left to tune
                f"io.controller = {tmp_path}/k_h.txt",
                f"io.trace = {tmp_path}/t_h.csv",
                f"io.summary = {tmp_path}/s_h.txt",
            ]
        )
        + "\n"
    )
    exit3 = main(["synth", "--config", str(hopeless)]) == 3
    ok = roundtrip_ok and deterministic_ok and exit1 and exit3
    report(
        10,
        "seeded runs are bit-identical and malformed inputs exit as specified",
        ok,
        f"(roundtrip {roundtrip_ok}, deterministic {deterministic_ok}, "
        f"exit1 {exit1}, exit3 {exit3})",
    )
