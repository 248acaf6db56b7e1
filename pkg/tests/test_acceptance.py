"""Acceptance suite: every exit criterion at its stated tolerance, desk scale.

Each test prints one line:  ACCEPTANCE <id>: PASS/FAIL - <details>
(visible with `pytest -s tests/test_acceptance.py`, or in captured output).

Criterion 3 is split into 3a/3b; 3b is expected to fail: the exact
argmax-count magnetization of the saturation manifold tends to 0.675 with
size (transfer-matrix value, hard-hexagon entropy constant cross-check),
not to 0.583, so the stated trend is unattainable.  See the repository
notes; the test is implemented faithfully and reports the honest numbers.
"""

import math

import numpy as np
import pytest
import scipy.stats

from sqocta import ed, observables
from sqocta.classical_mc import (
    McChainState,
    fim_configuration,
    make_rng,
    random_configuration,
    run_schedule_classical,
    saturated_configuration,
)
from sqocta.ed import TriangularGraph, diagonalize, enumerate_ground_manifold, perturbative_gap_check
from sqocta.kernels import metropolis_run
from sqocta.lattice import Boundary, LatticeSpec, build_lattice, toy_triangle_spec
from sqocta.model import (
    EffectiveModelParams,
    ModelParams,
    anneal_dwell_schedule,
    dwell_schedule,
    hysteresis_schedule,
)
from sqocta.pimc import PimcParams, UpdateFamily, WorldlineConfiguration, measure_worldline, run_schedule_pimc
from sqocta.protocols import ExperimentPlan, extract_phase_boundary, run_equilibrium_scan, run_hysteresis

from _oracles import boltzmann_averages


def _report(criterion: str, ok: bool, detail: str):
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


def _sem(vals) -> float:
    vals = np.asarray(vals, dtype=float)
    if len(vals) < 2:
        return float("inf")
    return float(vals.std(ddof=1) / math.sqrt(len(vals)))


# -- 1: classical 1/3 plateau --------------------------------------------------


def test_criterion_01_one_third_plateau():
    lat = build_lattice(LatticeSpec(12, 12, 4))
    ms, fs = [], []
    for rep in range(2):
        recs, _ = run_schedule_classical(
            lat, dwell_schedule(1.0, 0.0, 1_000_000), 101, T=1 / 4.5, stream=(rep,),
            measure_every=100_000, apply_readout_quench=False,
        )
        window = [r for r in recs if 500_000 <= r.metadata["sweep"]]
        ms.append(np.mean([r.M_over_Msat for r in window]))
        fs.append(np.mean([r.m_fim for r in window]))
    m, f = float(np.mean(ms)), float(np.mean(fs))
    _report(
        "1 (1/3 plateau)",
        abs(m - 1 / 3) <= 0.02 and f >= 0.9,
        f"M/M_sat = {m:.4f} (target 1/3 +- 0.02), m_FIM = {f:.4f} (>= 0.9)",
    )


# -- 2: shoulder location -------------------------------------------------------


def _shoulder_scan():
    hs = tuple(round(1.1 + 0.04 * k, 10) for k in range(21))  # 1.10 .. 1.90
    plan = ExperimentPlan(
        engine="pimc", lattice=LatticeSpec(12, 12, 4),
        gammas=(1.06,), betas=(2.25,), h_grid=hs,
        replicas=3, l_tau=32, equilibrium_mode="dwell",
        anneal_sweeps=3000, dwell_sweeps=20_000, measure_every=500,
        nprocs=2, seed=202,
    )
    curves, _ = run_equilibrium_scan(plan)
    c = curves[0]
    peaks = observables.local_maxima([p.H for p in c.points], [p.chi for p in c.points])
    shoulder = None
    if len(peaks) >= 2:
        peaks_sorted = sorted(peaks, key=lambda p: -p[1])[:2]
        h_lo, h_hi = sorted(p[0] for p in peaks_sorted)
        between = [p for p in c.points if h_lo < p.H < h_hi]
        if between:
            shoulder = min(between, key=lambda p: p.chi)
    return c, peaks, shoulder


@pytest.fixture(scope="module")
def shoulder_scan():
    return _shoulder_scan()


def test_criterion_02a_double_peaked_chi(shoulder_scan):
    _, peaks, shoulder = shoulder_scan
    ok = len(peaks) >= 2 and shoulder is not None
    _report(
        "2a (double-peaked chi)",
        ok,
        f"chi peaks at H = {[round(p[0], 2) for p in peaks]}; shoulder (chi minimum "
        f"between the two dominant peaks) at H = {None if shoulder is None else shoulder.H}",
    )


def test_criterion_02b_shoulder_value(shoulder_scan):
    _, _, shoulder = shoulder_scan
    m = float("nan") if shoulder is None else shoulder.M
    ok = shoulder is not None and abs(m - 0.583) <= 0.04
    _report(
        "2b (shoulder magnetization)",
        ok,
        f"shoulder M/M_sat = {m:.4f} (target 0.583 +- 0.04) | the full-model QMC "
        "equilibrium shoulder sits at ~0.69 (verified from random/FIM/saturated "
        "starts; ED-validated sampler); 0.583 matches the perturbative "
        "effective-model prediction outside its validity at Gamma/J0 = 0.59 "
        "(spec defect; see notes)",
    )


# -- 3: entropy-max oracle ------------------------------------------------------


def test_criterion_03a_argmax_window():
    rep = enumerate_ground_manifold((6, 6))
    ok = 0.50 <= rep.M_m <= 0.67
    _report(
        "3a (entropy argmax window)",
        ok,
        f"6x6 argmax-count M_m/M_sat = {rep.M_m:.4f} in [0.50, 0.67], "
        f"total admissible states = {rep.total_states}",
    )


def test_criterion_03b_trend_toward_0583():
    sizes = [(4, 4), (5, 5), (6, 6)]
    included = []
    for dims in sizes:
        g = TriangularGraph.periodic(*dims)
        if dims == (5, 5) and not g.is_three_colorable:
            continue  # the criterion sanctions skipping a non-colorable 5x5
        rep = enumerate_ground_manifold(g)
        included.append((dims, rep.M_m))
    devs = [abs(m - 0.583) for _, m in included]
    ok = all(devs[i + 1] <= devs[i] for i in range(len(devs) - 1))
    detail = ", ".join(f"{d[0]}x{d[1]}: M_m={m:.4f} (|dev|={abs(m - 0.583):.4f})"
                       for (d, m) in included)
    _report(
        "3b (trend toward 0.583)",
        ok,
        detail + " | exact transfer-matrix thermodynamic argmax is 0.675, so the "
        "stated trend target 0.583 is unattainable (spec defect; see notes)",
    )


# -- 4: degeneracy lifting ------------------------------------------------------


def test_criterion_04_degeneracy_lifting():
    def eff(g):
        return EffectiveModelParams(B_eff=6.0, J1_eff=1.0, Gamma_eff=g,
                                    B_sat_eff=6.0, deltaB_eff=g)

    tri = TriangularGraph.triangle3()
    g23 = TriangularGraph.periodic(2, 3)
    d_tri0 = diagonalize(tri, eff(0.0)).ground_degeneracy
    d_230 = diagonalize(g23, eff(0.0)).ground_degeneracy
    lifted = {
        g: (diagonalize(tri, eff(g)).ground_degeneracy,
            diagonalize(g23, eff(g)).ground_degeneracy)
        for g in (0.01, 0.05, 0.1)
    }
    ok = d_tri0 == 4 and d_230 == 7 and all(v == (1, 1) for v in lifted.values())
    _report(
        "4 (degeneracy lifting)",
        ok,
        f"Gamma=0 degeneracies: triangle3 = {d_tri0} (expect 4), 2x3 = {d_230} "
        f"(expect 7); unique ground state for Gamma_eff in {sorted(lifted)}: "
        f"{all(v == (1, 1) for v in lifted.values())}",
    )


# -- 5: effective-coupling scaling ----------------------------------------------


def test_criterion_05_effective_coupling_scaling():
    j0 = 1.8
    rows = perturbative_gap_check(j0, [0.05 * j0, 0.1 * j0, 0.2 * j0])
    devs = [r.rel_deviation for r in rows]
    ok = devs[1] < 0.15 and devs[0] < devs[1] < devs[2]
    _report(
        "5 (quartic coupling)",
        ok,
        "rel deviation of ED tunneling vs Gamma^4/J0^3 at Gamma/J0 = 0.05/0.1/0.2: "
        + ", ".join(f"{d:.3%}" for d in devs)
        + " (need < 15% at 0.1, decreasing toward 0)",
    )


# -- 6: hysteresis qualitative suite ---------------------------------------------


def _fast_sweep_endpoint(gammas, family="single_spin", replicas=8, seed=606):
    plan = ExperimentPlan(
        engine="pimc", lattice=LatticeSpec(12, 12, 4),
        gammas=gammas, betas=(4.5,), h_grid=(1.0,),
        rates=(1_000.0,), directions=("down",), replicas=replicas,
        l_tau=32, update_family=family, anneal_sweeps=5000, quench_sweeps=100,
        nprocs=2, seed=seed,
    )
    curves, _ = run_hysteresis(plan)
    return {c.gamma: c.points[0] for c in curves}


def test_criterion_06ab_fast_sweep_overshoot_and_contrast():
    pts = _fast_sweep_endpoint((0.51, 1.06))
    p51, p106 = pts[0.51], pts[1.06]
    ok_a = p51.M >= 1 / 3 + 0.05
    ok_b = p106.m_fim - p51.m_fim >= 0.2
    _report(
        "6a (overshoot)",
        ok_a,
        f"fast down-sweep to H=1 at Gamma=0.51: M/M_sat = {p51.M:.4f} +- {p51.M_err:.4f} "
        f"(need >= {1 / 3 + 0.05:.4f})",
    )
    _report(
        "6b (quantum acceleration)",
        ok_b,
        f"m_FIM(1.06) = {p106.m_fim:.4f} +- {p106.m_fim_err:.4f} vs m_FIM(0.51) = "
        f"{p51.m_fim:.4f} +- {p51.m_fim_err:.4f}; gap = {p106.m_fim - p51.m_fim:.4f} "
        f"(need >= 0.2)",
    )


def _pimc_equilibrium_reference(lat, h, gamma, beta, dwell, replicas, seed):
    """Projected equilibrium estimate from independent anneal+dwell runs."""
    sch = anneal_dwell_schedule(h, gamma, 10_000, dwell)
    vals_m, vals_f = [], []
    for rep in range(replicas):
        recs, _ = run_schedule_pimc(
            lat, sch, PimcParams(L_tau=32), seed, T=1.0 / beta, stream=(7, rep, int(dwell)),
        )
        final = recs[-1]
        vals_m.append(final.M_over_Msat)
        vals_f.append(final.m_fim)
    return np.array(vals_m), np.array(vals_f)


def test_criterion_06c_slowest_sweep_matches_equilibrium():
    lat = build_lattice(LatticeSpec(6, 6, 4))
    gamma, beta = 0.51, 4.5
    h_points = (1.0, 1.3)
    detail = []
    ok = True
    for h in h_points:
        # equilibrium reference with a x10 convergence check
        m_short, _ = _pimc_equilibrium_reference(lat, h, gamma, beta, 30_000, 6, 606)
        m_long, _ = _pimc_equilibrium_reference(lat, h, gamma, beta, 300_000, 6, 606)
        conv = abs(m_short.mean() - m_long.mean()) <= 2 * math.hypot(_sem(m_short), _sem(m_long))
        # slowest-rate sweep, independent runs per endpoint
        vals = []
        for rep in range(4):
            sch = hysteresis_schedule(2.0, h, gamma, 10_000_000.0,
                                      anneal_sweeps=5000, quench_sweeps=100)
            recs, _ = run_schedule_pimc(
                lat, sch, PimcParams(L_tau=32), 707, T=1.0 / beta,
                stream=(rep, int(h * 100)),
            )
            vals.append(recs[-1].M_over_Msat)
        m_sweep = float(np.mean(vals))
        sigma = math.hypot(_sem(vals), _sem(m_long))
        match = abs(m_sweep - m_long.mean()) <= 2 * sigma
        ok = ok and match and conv
        detail.append(
            f"H={h}: sweep {m_sweep:.4f}+-{_sem(vals):.4f} vs eq {m_long.mean():.4f}"
            f"+-{_sem(m_long):.4f} (conv x10: {conv})"
        )
    _report("6c (slow sweep = equilibrium)", ok, "; ".join(detail))


# -- 7: update-family contrast ----------------------------------------------------


def test_criterion_07_chain_updates_gamma_blind():
    single = _fast_sweep_endpoint((0.51, 1.06), family="single_spin", seed=606)
    chain = _fast_sweep_endpoint((0.51, 1.06), family="chain_collective", seed=707)
    c_single = abs(single[1.06].m_fim - single[0.51].m_fim)
    c_chain = abs(chain[1.06].m_fim - chain[0.51].m_fim)
    ok = c_chain <= c_single / 2
    _report(
        "7 (variant contrast)",
        ok,
        f"|m_FIM(1.06) - m_FIM(0.51)|: single-spin = {c_single:.4f}, "
        f"chain-collective = {c_chain:.4f} (need chain <= single/2)",
    )


# -- 8: PIMC vs ED ----------------------------------------------------------------


def _pimc_thermal(lat, p, beta, l_tau, replicas, seed, n_eq=4000, n_meas=16_000):
    out_m, out_e = [], []
    for rep in range(replicas):
        rng = make_rng(seed, (rep,))
        cfg = random_configuration(lat, rng)
        st = WorldlineConfiguration.from_classical(cfg, l_tau, beta, p.Gamma)
        from sqocta.pimc import _run_sweeps  # internal batch driver

        ones = np.ones(n_eq)
        _run_sweeps(st, lat, UpdateFamily.SINGLE_SPIN, p.B * ones, p.J1 * ones,
                    p.J0 * ones, p.Gamma * ones, rng)
        ms, es = [], []
        chunk = np.ones(40)
        for _ in range(n_meas // 40):
            _run_sweeps(st, lat, UpdateFamily.SINGLE_SPIN, p.B * chunk, p.J1 * chunk,
                        p.J0 * chunk, p.Gamma * chunk, rng)
            est = measure_worldline(lat, st, 1.0, p.Gamma, p.B)
            ms.append(est["mz_raw"])
            es.append(est["energy"])
        out_m.append(np.mean(ms))
        out_e.append(np.mean(es))
    return np.array(out_m), np.array(out_e)


def test_criterion_08_pimc_vs_ed():
    beta, l_tau = 2.0, 64
    systems = [
        ("1 spin", LatticeSpec(1, 1, 1, Boundary.OPEN)),
        ("FM pair", LatticeSpec(1, 1, 2, Boundary.OPEN)),
        ("4-chain", LatticeSpec(1, 1, 4, Boundary.OPEN)),
        ("2x4 chains", LatticeSpec(1, 2, 4, Boundary.OPEN)),
    ]
    worst = 0.0
    failures = []
    for name, spec in systems:
        lat = build_lattice(spec)
        for gi, gamma in enumerate((0.4, 0.8, 1.2)):
            for bi, b in enumerate((0.2, 0.6, 1.0)):
                p = ModelParams(J1=1.0, B=b, Gamma=gamma, T=1.0 / beta)
                exact = diagonalize(lat, p).thermal(beta)
                mzs, es = _pimc_thermal(lat, p, beta, l_tau, 4, 800 + 10 * gi + bi)
                e_scale = max(p.J0, b, gamma)
                allow_m = (beta * e_scale / l_tau) ** 2
                allow_e = (beta * e_scale / l_tau) ** 2 * lat.n_spins * e_scale
                dm = abs(mzs.mean() - exact["sigma_z"])
                de = abs(es.mean() - exact["energy"] )
                lim_m = 3 * _sem(mzs) + allow_m
                lim_e = 3 * _sem(es) + allow_e
                worst = max(worst, dm / lim_m, de / lim_e)
                if dm > lim_m or de > lim_e:
                    failures.append(
                        f"{name} G={gamma} B={b}: dM={dm:.4f}/{lim_m:.4f} "
                        f"dE={de:.4f}/{lim_e:.4f}"
                    )
    _report(
        "8 (PIMC vs ED)",
        not failures,
        f"4 systems x 3x3 (Gamma, B) grid at L_tau={l_tau}: worst |dev|/limit = "
        f"{worst:.2f}" + ("; failures: " + "; ".join(failures) if failures else ""),
    )


# -- 9: Boltzmann chi^2 -------------------------------------------------------------


def test_criterion_09_boltzmann_chi2():
    lat = build_lattice(toy_triangle_spec())  # 12 spins
    beta = 0.1
    p = ModelParams(B=0.2, T=1.0 / beta)
    exact = boltzmann_averages(lat, p, beta)
    probs = exact["probs"]

    fm_ptr, fm_idx, afm_ptr, afm_idx = lat.neighbor_csr()
    rng = make_rng(909)
    st = McChainState.start(lat, p, 909)
    spins = st.config.values
    sums = st.sums
    weights = (1 << np.arange(12)).astype(np.int64)
    counts = np.zeros(1 << 12, dtype=np.int64)
    thin, total = 10, 10_000_000
    bb = np.full(thin, beta * p.B)
    b1 = np.full(thin, beta * p.J1)
    b0 = np.full(thin, beta * p.J0)
    for _ in range(total // thin):
        u = rng.random((thin, 12))
        metropolis_run(spins, fm_ptr, fm_idx, afm_ptr, afm_idx, bb, b1, b0, u, sums)
        idx = int(((spins > 0) * weights).sum())
        counts[idx] += 1
    n_samples = counts.sum()

    # pool states with small expectation to keep the chi^2 approximation valid
    expected = probs * n_samples
    order = np.argsort(expected)
    pooled_obs, pooled_exp = [], []
    acc_o = acc_e = 0.0
    for i in order:
        acc_o += counts[i]
        acc_e += expected[i]
        if acc_e >= 10.0:
            pooled_obs.append(acc_o)
            pooled_exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        pooled_obs[-1] += acc_o
        pooled_exp[-1] += acc_e
    pooled_obs = np.array(pooled_obs)
    pooled_exp = np.array(pooled_exp)
    chi2 = float(((pooled_obs - pooled_exp) ** 2 / pooled_exp).sum())
    dof = len(pooled_exp) - 1
    pval = float(scipy.stats.chi2.sf(chi2, dof))
    _report(
        "9 (Boltzmann chi^2)",
        pval > 0.01,
        f"12-spin toy, {n_samples} thinned samples over 1e7 sweeps: chi2 = {chi2:.1f}, "
        f"dof = {dof}, p = {pval:.4f} (need > 0.01)",
    )


# -- 10: phase-boundary point --------------------------------------------------------


def test_criterion_10_phase_boundary():
    hs = tuple(round(1.40 + 0.02 * k, 10) for k in range(9))  # 1.40 .. 1.56
    classical = ExperimentPlan(
        engine="classical", lattice=LatticeSpec(12, 12, 4),
        gammas=(0.0,), betas=(10.0,), h_grid=hs,
        replicas=4, anneal_sweeps=20_000, dwell_sweeps=100_000,
        measure_every=5000, nprocs=2, seed=1001,
    )
    curves, _ = run_equilibrium_scan(classical)
    pb = extract_phase_boundary(curves, criterion=0.5)
    hc0 = pb.points[0]["H_c"]
    ok_a = hc0 is not None and abs(hc0 - 1.50) <= 0.04

    quantum = ExperimentPlan(
        engine="pimc", lattice=LatticeSpec(12, 12, 4),
        gammas=(0.51, 1.06), betas=(4.5,), h_grid=hs,
        replicas=3, l_tau=32, anneal_sweeps=10_000, dwell_sweeps=30_000,
        measure_every=2000, nprocs=2, seed=1002,
    )
    qcurves, _ = run_equilibrium_scan(quantum)
    qpb = extract_phase_boundary(qcurves, criterion=0.5)
    hc = {pt["gamma"]: pt["H_c"] for pt in qpb.points}
    ok_b = (hc.get(0.51) is not None and hc.get(1.06) is not None
            and hc[1.06] < hc[0.51])
    _report(
        "10 (phase boundary)",
        ok_a and ok_b,
        f"classical low-T H_c = {hc0 if hc0 is None else round(hc0, 4)} "
        f"(target 1.50 +- 0.04); H_c(Gamma=1.06) = "
        f"{hc.get(1.06) if hc.get(1.06) is None else round(hc[1.06], 4)} < "
        f"H_c(Gamma=0.51) = {hc.get(0.51) if hc.get(0.51) is None else round(hc[0.51], 4)}: {ok_b}",
    )


# -- 11: determinism -----------------------------------------------------------------


def test_criterion_11_byte_identical_reruns(tmp_path):
    import json

    from sqocta.cli import main
    from sqocta.records import records_digest

    spec = {
        "schema_version": 1,
        "kind": "hysteresis",
        "plan": {
            "engine": "pimc",
            "lattice": {"rows": 3, "cols": 1, "boundary": "cylinder"},
            "gammas": [0.51, 1.06],
            "betas": [4.5],
            "h_grid": [1.0, 1.4],
            "rates": [500],
            "directions": ["down"],
            "replicas": 2,
            "l_tau": 8,
            "anneal_sweeps": 200,
            "quench_sweeps": 50,
            "record_states": True,
            "nprocs": 2,
        },
    }
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    digests = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        assert main(["run", str(path), "--out", str(out)]) == 0
        digests.append(
            (records_digest(out / "records.jsonl"), records_digest(out / "records.csv"))
        )
    _report(
        "11 (determinism)",
        digests[0] == digests[1],
        f"records digests identical across reruns (jsonl+csv): {digests[0] == digests[1]}",
    )
