"""End-to-end orchestration: system -> ISDF -> T -> K -> projections -> self-energies.

Each stage is timed and any package error raised inside it is re-raised as
:class:`~lowrank_gw.errors.StageError` tagged with the stage name.
"""
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import contour, gw, isdf, smw
from .errors import ContourDegeneracyError, LowRankGWError, StageError
from .linalg import sym_eig
from .model import Grid, build_coulomb, build_synthetic_system, load_system


@contextmanager
def stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except LowRankGWError as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


def build_system(cfg):
    path = cfg.wavefunction_path()
    if path is not None:
        return load_system(path)
    s = cfg.system
    grid = Grid(tuple(s["dims"]), tuple(s["cell"]))
    return build_synthetic_system(
        s["seed"], grid, s["n_v"], s["n_c"], s["gap"], s["bandwidth"], envelope=s["envelope"]
    )


@dataclass(frozen=True)
class Decompositions:
    vc: object
    vn: object
    nn: object


def decompose_all(es, cfg, k_vc=None, k_vn=None, k_nn=None):
    i = cfg.isdf
    kw = dict(method=i["method"], seed=i["seed"])
    return Decompositions(
        vc=isdf.decompose(es, "vc", i["k_vc"] if k_vc is None else k_vc, **kw),
        vn=isdf.decompose(es, "vn", i["k_vn"] if k_vn is None else k_vn, **kw),
        nn=isdf.decompose(es, "nn", i["k_nn"] if k_nn is None else k_nn, **kw),
    )


def coupled_for_system(es, dec_vc, method="contour", delta_rel=1e-7, max_nodes=1025):
    """dV-weighted ``T`` on the vc interpolation points; falls back to the direct sum when the contour is bypassed."""
    pv = es.psi_v[dec_vc.point_indices]
    pc = es.psi_c[dec_vc.point_indices]
    dV = es.grid.dV
    if method == "direct":
        return contour.coupled_coefficients_direct(pv, pc, es.energies, weight=dV)
    spec = contour.elliptic_params(es.energies, es.n_v, es.n_c, delta_rel, max_nodes)
    try:
        return contour.coupled_coefficients_contour(pv, pc, es.energies, spec, weight=dV)
    except ContourDegeneracyError:
        if not spec.bypass:
            raise
        return contour.coupled_coefficients_direct(pv, pc, es.energies, weight=dV)


def lowrank_self_energies(es, V, decs, T, flip_sex_x=False, timings=None):
    timings = {} if timings is None else timings
    with stage("smw", timings):
        E = smw.epsilon_inverse_lowrank(T, decs.vc.P, V)
    with stage("projection", timings):
        proj = gw.project_screened_interactions(E, decs.vn, decs.nn, V)
    with stage("self_energy", timings):
        sig = gw.self_energies_lowrank(es, proj, decs.vn, decs.nn, flip_sex_x=flip_sex_x)
    return sig, E


@dataclass
class RunResult:
    es: object
    sigma: object
    qp: object
    nodes_used: int = 0
    est_rel_error: float = 0.0
    n_mu: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


def run_pipeline(cfg, es=None):
    timings = {}
    if es is None:
        with stage("system", timings):
            es = build_system(cfg)
    with stage("coulomb", timings):
        V = build_coulomb(es.grid, cfg["coulomb"])
    pipeline = cfg["pipeline"]
    res = RunResult(es=es, sigma=None, qp=None, timings=timings)
    if pipeline == "bruteforce":
        with stage("self_energy", timings):
            res.sigma = gw.self_energies_bruteforce(es, V)
    else:
        with stage("isdf", timings):
            decs = decompose_all(es, cfg)
        res.n_mu = {"vc": decs.vc.n_mu, "vn": decs.vn.n_mu, "nn": decs.nn.n_mu}
        if pipeline == "isdf_conventional":
            with stage("self_energy", timings):
                res.sigma = gw.self_energies_isdf_conventional(es, V, decs.vc, decs.vn, decs.nn)
        else:
            c = cfg.contour
            with stage("coupled", timings):
                T = coupled_for_system(es, decs.vc, c["method"], c["delta_rel"], c["max_nodes"])
            res.nodes_used, res.est_rel_error = T.nodes_used, T.est_rel_error
            res.sigma, _ = lowrank_self_energies(es, V, decs, T, cfg.flip_sex_x, timings)
    with stage("quasiparticle", timings):
        res.qp = gw.quasiparticle_energies(es, res.sigma)
    return res


def result_to_json(res):
    es, sig = res.es, res.sigma
    bands = [
        {
            "index": n,
            "occupied": bool(n < es.n_v),
            "eps_ks": float(es.energies[n]),
            "vxc": float(es.vxc[n]),
            "sigma_sex_x": float(sig.sigma_sex_x[n]),
            "sigma_x": float(sig.sigma_x[n]),
            "sigma_coh": float(sig.sigma_coh[n]),
            "sigma_total": float(sig.sigma_total[n]),
            "eps_gw": float(res.qp.eps_gw[n]),
        }
        for n in range(es.n_bands)
    ]
    return {
        "pipeline_tag": sig.pipeline_tag,
        "n_v": es.n_v,
        "n_c": es.n_c,
        "n_r": es.grid.n_r,
        "n_mu": dict(res.n_mu),
        "nodes_used": int(res.nodes_used),
        "est_rel_error": float(res.est_rel_error),
        "bands": bands,
        "timings": {k: float(v) for k, v in res.timings.items()},
    }


# ---------------------------------------------------------------- experiments


def _sigma_dev(a, b):
    d = np.abs(a.sigma_total - b.sigma_total)
    return float(d.mean()), float(d.max())


def k_sweep(es, cfg, ks, reference=None):
    """Mean/max |Sigma_lowrank - Sigma_exact| with all three coefficients equal to ``k``."""
    V = build_coulomb(es.grid, cfg["coulomb"])
    ref = gw.self_energies_bruteforce(es, V) if reference is None else reference
    rows = []
    for k in ks:
        rows.append(_k_row(es, cfg, V, ref, k, k, k))
    return rows


def _k_row(es, cfg, V, ref, k_vc, k_vn, k_nn):
    decs = decompose_all(es, cfg, k_vc, k_vn, k_nn)
    T = coupled_for_system(es, decs.vc, "direct")
    sig, _ = lowrank_self_energies(es, V, decs, T)
    mean, mx = _sigma_dev(sig, ref)
    fit_err = isdf.isdf_reconstruction_error(es.psi_v, es.psi_c, decs.vc)
    return {
        "k_vc": float(k_vc),
        "k_vn": float(k_vn),
        "k_nn": float(k_nn),
        "n_mu_vc": decs.vc.n_mu,
        "mean_abs_error": mean,
        "max_abs_error": mx,
        "isdf_rel_error_vc": fit_err,
    }


def k_sensitivity(es, cfg, low=6.0, high=8.0, reference=None):
    """Lower k_vc alone versus k_vn = k_nn together."""
    V = build_coulomb(es.grid, cfg["coulomb"])
    ref = gw.self_energies_bruteforce(es, V) if reference is None else reference
    return [
        dict(_k_row(es, cfg, V, ref, low, high, high), label="vc_low"),
        dict(_k_row(es, cfg, V, ref, high, low, low), label="vn_nn_low"),
    ]


def nodes_sweep(es, cfg, node_counts):
    """Quadrature error and the induced Sigma deviation per node count, ISDF fixed."""
    V = build_coulomb(es.grid, cfg["coulomb"])
    decs = decompose_all(es, cfg)
    pv = es.psi_v[decs.vc.point_indices]
    pc = es.psi_c[decs.vc.point_indices]
    spec = contour.elliptic_params(es.energies, es.n_v, es.n_c, cfg.contour["delta_rel"], cfg.contour["max_nodes"])
    direct = coupled_for_system(es, decs.vc, "direct")
    base, _ = lowrank_self_energies(es, V, decs, direct)
    rows = []
    for cc in contour.quadrature_sweep(pv, pc, es.energies, spec, node_counts, weight=es.grid.dV):
        sig, _ = lowrank_self_energies(es, V, decs, cc)
        rows.append(
            {
                "N_lambda": cc.nodes_used,
                "est_rel_error": cc.est_rel_error,
                "sigma_max_dev": _sigma_dev(sig, base)[1],
                "true_rel_error": float(np.linalg.norm(cc.T - direct.T) / np.linalg.norm(direct.T)),
                "bound": contour.cauchy_error_bound(spec, cc.nodes_used),
            }
        )
    return rows, spec


def delta_sweep(es, cfg, deltas, reference=None):
    """Adaptive contour at each threshold; Sigma spread against the fixed ISDF error."""
    V = build_coulomb(es.grid, cfg["coulomb"])
    ref = gw.self_energies_bruteforce(es, V) if reference is None else reference
    decs = decompose_all(es, cfg)
    rows = []
    sigmas = []
    for d in deltas:
        T = coupled_for_system(es, decs.vc, "contour", d, cfg.contour["max_nodes"])
        sig, _ = lowrank_self_energies(es, V, decs, T)
        sigmas.append(sig.sigma_total)
        rows.append(
            {
                "delta_rel": float(d),
                "nodes_used": T.nodes_used,
                "est_rel_error": T.est_rel_error,
                "isdf_max_dev": _sigma_dev(sig, ref)[1],
            }
        )
    stack = np.array(sigmas)
    spread = stack.max(axis=0) - stack.min(axis=0)
    isdf_dev = np.abs(stack[-1] - ref.sigma_total)
    return rows, spread, isdf_dev


def singular_values(es, cfg, max_terms):
    """Descending singular values of the exact ``M_vc`` and of the dense ``chi``."""
    s_m = isdf.singular_value_report(es.psi_v, es.psi_c, max_terms)
    chi = smw.polarizability_dense(es, None)
    s_chi = np.sort(np.abs(sym_eig(chi, vectors=False)))[::-1][:max_terms]
    return s_m, s_chi


def run_experiments(es, cfg):
    ex = cfg.experiments
    V = build_coulomb(es.grid, cfg["coulomb"])
    ref = gw.self_energies_bruteforce(es, V)
    out = {}
    if ex["k_sweep"]:
        out["k_sweep"] = k_sweep(es, cfg, ex["k_sweep"], ref)
    if ex["k_sensitivity"]:
        out["k_sensitivity"] = k_sensitivity(es, cfg, reference=ref)
    if ex["nodes_sweep"]:
        rows, spec = nodes_sweep(es, cfg, ex["nodes_sweep"])
        out["nodes_sweep"] = rows
        out["nodes_sweep_slope"] = contour.fitted_decay_slope(
            [r["N_lambda"] for r in rows], [r["est_rel_error"] for r in rows]
        )
        out["nodes_sweep_bound_slope"] = -(np.pi**2) / (2.0 * np.log(spec.Q / spec.q) + 6.0)
    if ex["delta_sweep"]:
        rows, spread, dev = delta_sweep(es, cfg, ex["delta_sweep"], ref)
        out["delta_sweep"] = rows
        out["delta_sweep_spread"] = spread.tolist()
        out["delta_sweep_isdf_dev"] = dev.tolist()
    if ex["singular_values"]:
        s_m, s_chi = singular_values(es, cfg, int(ex["singular_values"]))
        out["singular_values_M_vc"] = s_m.tolist()
        out["singular_values_chi"] = s_chi.tolist()
    return out


# ---------------------------------------------------------------- scaling


def scale_grid(n_e, points_per_electron, spacing):
    """Box grid with about ``points_per_electron * n_e`` points at fixed spacing."""
    target = points_per_electron * n_e
    dims = [2, 2, 2]
    while dims[0] * dims[1] * dims[2] < target:
        dims[dims.index(min(dims))] *= 2
        dims.sort(reverse=True)
    return Grid(tuple(dims), tuple(d * spacing for d in dims))


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def scale_point(cfg, n_e):
    """Median timings of the low-rank inversion and of the dense oracle for ``n_e`` electrons."""
    sc, s = cfg.scale, cfg.system
    grid = scale_grid(n_e, sc["points_per_electron"], sc["spacing"])
    n_v = n_c = n_e // 2
    es = build_synthetic_system(s["seed"], grid, n_v, n_c, s["gap"], s["bandwidth"], envelope=s["envelope"])
    V = build_coulomb(grid, cfg["coulomb"])
    decs = decompose_all(es, cfg)
    c = cfg.contour

    def lowrank():
        T = coupled_for_system(es, decs.vc, c["method"], c["delta_rel"], c["max_nodes"])
        E = smw.epsilon_inverse_lowrank(T, decs.vc.P, V)
        gw.project_screened_interactions(E, decs.vn, decs.nn, V)

    row = {"N_e": n_e, "N_r": grid.n_r, "N_mu_vc": decs.vc.n_mu}
    row["lowrank_s"] = _median_time(lowrank, sc["repeats"])
    if grid.n_r <= smw.DENSE_ORACLE_MAX_NR:
        # operators are setup for both stages; only the inversion path is timed
        Vd = build_coulomb(grid, "dense")
        row["dense_s"] = _median_time(lambda: smw.epsilon_dense_oracle(es, Vd, decs.vc), sc["repeats"])
        row["dense_skipped"] = False
    else:
        row["dense_s"] = float("nan")
        row["dense_skipped"] = True
    return row


def loglog_slope(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def run_scale(cfg, sizes):
    rows = [scale_point(cfg, n) for n in sizes]
    ns = [r["N_e"] for r in rows]
    return {
        "rows": rows,
        "slope_lowrank": loglog_slope(ns, [r["lowrank_s"] for r in rows]),
        "slope_dense": loglog_slope(ns, [r["dense_s"] for r in rows]),
    }
