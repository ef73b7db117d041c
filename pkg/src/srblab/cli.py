"""Command-line experiment runner.

Every subcommand reads an optional YAML config, writes ``<command>.json``
(and CSV tables where relevant) into ``--out`` and exits with 0 on success,
2 when the statistics are inconclusive and 1 on any error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, acceptance, io, oracle
from .config import ConfigError, ExperimentConfig, load_config
from .experiment import build_sft, build_system
from .flow_core import CatSuspension, integrate_orbit
from .hyperbolic import compute_clv
from .response import (CSV_SUSCEPTIBILITY, FieldSchedule, birkhoff_average,
                       damped_extrapolation, direct_damped_response, divergence_series,
                       finite_difference_response, nonautonomous_response, rho_of_C,
                       susceptibility_curve, theoremB_response)
from .symbolic import (bowen_root, check_mixing, equilibrium_state, flow_correlation, pressure,
                       pressure_curve, resonance_scan, variational_gap)

EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2
WORKERS_ENV = "SRBLAB_WORKERS"


class Context:
    def __init__(self, cfg: ExperimentConfig, out: Path, workers: int, seed_offset: int):
        self.cfg = cfg
        self.out = out
        self.out.mkdir(parents=True, exist_ok=True)
        self.workers = workers
        self.seeds = cfg.seeds(seed_offset)

    def report(self, command: str, body: dict, **extra_excluded) -> dict:
        payload = io.build_report(command, body, self.cfg.hash, self.seeds)
        payload.update(extra_excluded)
        io.write_json(self.out / f"{command}.json", payload)
        return payload

    def csv(self, name: str, header, rows) -> None:
        if "csv" in self.cfg["output"]["formats"]:
            io.write_csv(self.out / name, header, rows)


def _pool_map(fn, items, workers: int) -> list:
    """Ordered map, in a process pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _combine(values, sigmas) -> tuple[float, float]:
    """Equal-weight mean of independent per-seed estimates."""
    v = np.asarray(values, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    return float(v.mean()), float(np.sqrt(np.sum(s ** 2)) / len(s))


def _response_body(reports) -> tuple[dict, bool]:
    value, sigma = _combine([r.value for r in reports], [r.std_error for r in reports])
    body = {"method": reports[0].method.value, "value": value, "std_error": sigma,
            "diagnostics": reports[0].diagnostics,
            "per_seed": [r.to_dict() for r in reports]}
    inconclusive = sigma > abs(value)
    body["inconclusive"] = inconclusive
    return body, inconclusive


# --- per-seed workers (module level so they can be pickled) ----------------

def _seed_average(args):
    data, seed = args
    cfg = ExperimentConfig(data)
    system, _, A = build_system(cfg)
    e = cfg["estimator"]
    return birkhoff_average(system, A, e["T"], e["n_orbits"], e["warmup"], e["dt"], seed)


def _seed_fd(args):
    data, seed = args
    cfg = ExperimentConfig(data)
    system, _, A = build_system(cfg)
    e = cfg["estimator"]
    return finite_difference_response(system, A, e["a_step"], e["T"], e["n_orbits"],
                                      e["warmup"], e["dt"], seed)


def _seed_direct(args):
    data, seed = args
    cfg = ExperimentConfig(data)
    system, X, A = build_system(cfg)
    e = cfg["estimator"]
    eps = [float(x) for x in e["eps"]]
    if len(eps) == 1:
        return direct_damped_response(system, A, X, eps[0], e["lag_T"], e["dt"],
                                      e["n_samples"], seed)
    return damped_extrapolation(system, A, X, eps, e["lag_T"], e["dt"], e["n_samples"], seed)


def _seed_split(args):
    data, seed = args
    cfg = ExperimentConfig(data)
    system, X, A = build_system(cfg)
    e = cfg["estimator"]
    return theoremB_response(system, A, X, T_back=e["T_back"], dt=e["dt"],
                             n_shadow=e["n_shadow"], n_orbits=e["n_orbits"],
                             orbit_length=e["orbit_length"], stride=e["stride"],
                             corr_T=e["corr_T"], seed=seed)


def _seed_nonauto(args):
    data, seed = args
    cfg = ExperimentConfig(data)
    system, X, A = build_system(cfg)
    e = cfg["estimator"]
    if e["schedule"] == "constant":
        sched = FieldSchedule.constant(X, e["t0"])
    else:
        sched = FieldSchedule.switch_off(X, e["t0"], system.dim)
    return nonautonomous_response(system, A, sched, e["t_eval"], e["lag_T"], e["dt"],
                                  e["n_samples"], seed)


def _seeded(ctx: Context, fn):
    return _pool_map(fn, [(ctx.cfg.data, s) for s in ctx.seeds], ctx.workers)


# --- subcommands ------------------------------------------------------------

def cmd_average(ctx: Context) -> int:
    ests = _seeded(ctx, _seed_average)
    value, sigma = _combine([b.mean for b in ests], [b.std_error for b in ests])
    ctx.report("average", {"value": value, "std_error": sigma,
                           "per_seed": [b.to_dict() for b in ests]})
    ctx.csv("average_batches.csv", ["seed", "batch", "mean"],
            ([s, i, m] for s, b in zip(ctx.seeds, ests) for i, m in enumerate(b.batch_means)))
    return EXIT_OK


def _response_cmd(ctx: Context, name: str, fn) -> int:
    reps = _seeded(ctx, fn)
    body, inconclusive = _response_body(reps)
    ctx.report(name, body)
    ctx.csv(f"{name}_seeds.csv", ["seed", "value", "std_error"],
            ([s, r.value, r.std_error] for s, r in zip(ctx.seeds, reps)))
    if reps[0].curve is not None:
        ctx.csv(f"{name}_integrand.csv", ["t", "integrand"], reps[0].curve_rows())
    if reps[0].batch_values is not None:
        ctx.csv(f"{name}_batches.csv", ["seed", "batch", "value"],
                ([s, i, float(np.real(v))] for s, r in zip(ctx.seeds, reps)
                 for i, v in enumerate(r.batch_values)))
    return EXIT_INCONCLUSIVE if inconclusive else EXIT_OK


def cmd_response_fd(ctx):
    return _response_cmd(ctx, "response-fd", _seed_fd)


def cmd_response_direct(ctx):
    return _response_cmd(ctx, "response-direct", _seed_direct)


def cmd_response_split(ctx):
    return _response_cmd(ctx, "response-split", _seed_split)


def cmd_response_nonauto(ctx):
    return _response_cmd(ctx, "response-nonauto", _seed_nonauto)


def cmd_susceptibility(ctx: Context) -> int:
    system, X, A = build_system(ctx.cfg)
    e = ctx.cfg["estimator"]
    lo, hi, num = e["omega_re"]
    grid = np.linspace(float(lo), float(hi), int(num))
    curve = susceptibility_curve(system, A, X, grid, e["omega_eps"], e["lag_T"], e["dt"],
                                 e["n_samples"], ctx.seeds[0])
    ctx.report("susceptibility", {
        "eps": curve.eps, "horizon": curve.horizon, "n_samples": curve.n_samples,
        "omega": [complex(w) for w in curve.omegas], "chi": [complex(c) for c in curve.values],
        "sigma": curve.sigma})
    ctx.csv("susceptibility.csv", CSV_SUSCEPTIBILITY, curve.to_csv_rows())
    return EXIT_OK


def cmd_clv(ctx: Context) -> int:
    system, _, _ = build_system(ctx.cfg)
    e = ctx.cfg["estimator"]
    rng = np.random.default_rng(ctx.seeds[0])
    p0 = system.sample_initial(1, rng)[0]
    tr = integrate_orbit(system, p0, e["clv_T"], e["dt"], seed=ctx.seeds[0])
    fr = compute_clv(system, tr, warmup=e["clv_warmup"])
    ctx.report("clv", {"exponents": fr.exponents, "n_samples": fr.n,
                       "min_angle": float(np.min(fr.min_angles()))})
    d = system.dim
    header = (["t"] + [f"x{i}" for i in range(d)] + [f"eu{i}" for i in range(d)]
              + [f"es{i}" for i in range(d)] + ["min_angle"])
    ctx.csv("clv.csv", header, fr.to_csv_rows())
    return EXIT_OK


def cmd_divergence(ctx: Context) -> int:
    system, X, _ = build_system(ctx.cfg)
    if not isinstance(system, CatSuspension):
        raise ConfigError("divergence is implemented for the cat suspension")
    system = system.with_parameter(0.0)
    e = ctx.cfg["estimator"]
    cs, _ = divergence_series(system, X, 1, e["orbit_length"], e["dt"], e["stride"],
                              ctx.seeds[0], h=e["h"])
    m, s = rho_of_C(cs)
    ctx.report("divergence", {"mean": m, "std_error": s, "n_samples": int(cs.size),
                              "h": e["h"], "sample_spacing": e["dt"] * e["stride"]})
    step = e["dt"] * e["stride"]
    ctx.csv("divergence.csv", ["t", "C"], ([i * step, float(c)] for i, c in enumerate(cs[:, 0])))
    return EXIT_OK


def cmd_symbolic_pressure(ctx: Context) -> int:
    sft = build_sft(ctx.cfg)
    k = check_mixing(sft.tau)
    body = {"mixing_power": k, "n_states": sft.n_states}
    if k is None:
        ctx.report("symbolic-pressure", body)
        raise ValueError("transition matrix is not mixing")
    c = bowen_root(sft)
    body.update({"pressure_phi": pressure(sft, sft.phi), "bowen_root": c,
                 "pressure_at_root": pressure(sft, sft.phi - c * sft.psi)})
    ctx.report("symbolic-pressure", body)
    grid = c + np.linspace(-1.0, 1.0, 41)
    vals, slopes = pressure_curve(sft, grid)
    ctx.csv("pressure_curve.csv", ["c", "pressure", "slope"], zip(grid, vals, slopes))
    return EXIT_OK


def cmd_symbolic_state(ctx: Context) -> int:
    sft = build_sft(ctx.cfg)
    st = equilibrium_state(sft)
    ctx.report("symbolic-state", {
        "c": st.c, "mean_roof": st.mean_roof, "weights": st.weights, "kernel": st.kernel,
        "invariance_residual": st.invariance_residual(), "entropy": st.entropy(),
        "variational_gap": variational_gap(sft, st),
        "cylinders": [list(w) for w in sft.words]})
    ctx.csv("state.csv", ["cylinder", "weight", "psi", "phi"],
            (["".join(map(str, w)), st.weights[i], sft.psi[i], sft.phi[i]]
             for i, w in enumerate(sft.words)))
    return EXIT_OK


def cmd_symbolic_correlation(ctx: Context) -> int:
    sft = build_sft(ctx.cfg)
    y = ctx.cfg["symbolic"]
    st = equilibrium_state(sft)
    if y["correlation"] == "height_cos":
        B = lambda w, h: np.cos(2 * np.pi * h)
    else:
        B = lambda w, h: (np.asarray(w) == 0).astype(float)
    t = np.linspace(0.0, y["t_max"], y["n_t"])
    cor = flow_correlation(sft, st, B, B, t, y["n_samples"], seed=ctx.seeds[0])
    ctx.report("symbolic-correlation", {"times": t, "values": np.real(cor.values),
                                        "sigma": cor.sigma, "n_samples": cor.n_samples})
    ctx.csv("correlation.csv", ["t", "re_rho", "im_rho", "sigma"], cor.to_csv_rows())
    return EXIT_OK


def cmd_resonances(ctx: Context) -> int:
    sft = build_sft(ctx.cfg)
    y = ctx.cfg["symbolic"]
    c = bowen_root(sft)
    scan = resonance_scan(sft, None, None, c, strip=tuple(y["strip"]), step=y["step"],
                          tol=y["newton_tol"])
    unrefined = [r for r in scan.roots if not r.refined]
    ctx.report("resonances", {"bowen_root": c, "lambda0": scan.lambda0,
                              "dlambda0": scan.dlambda0, "roots": scan.roots_json(),
                              "strip": y["strip"], "step": y["step"],
                              "n_unrefined": len(unrefined)})
    ctx.csv("resonance_scan.csv", ["re_omega", "im_omega", "re_lambda", "im_lambda",
                                   "abs_one_minus_lambda"], scan.to_csv_rows())
    return EXIT_OK


def oracle_results() -> list[oracle.OracleResult]:
    """Exact oracle values behind the pinned constants of the test suite."""
    full = np.ones((2, 2))
    gm = np.array([[1, 1], [1, 0]])
    R = oracle.OracleResult
    g_full = oracle.markov_gibbs_oracle(full, [0.0, 0.0])
    g_gm = oracle.markov_gibbs_oracle(gm, [0.0, 0.0])
    c2 = oracle.bowen_root_oracle(full, [0.0, math.log(2.0)], [1.0, 1.0])
    g_w = oracle.markov_gibbs_oracle(full, [0.0, math.log(2.0)], [1.0, 1.0], c2)
    eu, es = oracle.cat_directions()
    lam = math.log(oracle.CAT_LAMBDA)
    return [
        R("pressure_full_shift", g_full.pressure, "Perron root of the all-ones matrix"),
        R("distribution_full_shift", g_full.distribution, "stationary chain, linear solve"),
        R("pressure_golden_mean", g_gm.pressure, "Perron root of (1,1;1,0)"),
        R("bowen_root_full_shift_unit_roof", oracle.bowen_root_oracle(full, [0, 0], [1, 1]),
          "bisection on the Perron pressure"),
        R("bowen_root_full_shift_roof_1_2", oracle.bowen_root_oracle(full, [0, 0], [1, 2]),
          "bisection on the Perron pressure"),
        R("weights_log2_potential", g_w.distribution, "stationary chain at the Bowen root"),
        R("periodic_orbits_full_shift_p2", oracle.periodic_orbit_enumerator(full, 2),
          "necklace enumeration"),
        R("periodic_orbits_golden_mean_p2", oracle.periodic_orbit_enumerator(gm, 2),
          "necklace enumeration"),
        R("periodic_orbit_count_full_shift_p8", len(oracle.periodic_orbit_enumerator(full, 8)),
          "necklace enumeration"),
        R("constant_roof_resonances_7", oracle.constant_roof_resonances(7.0),
          "lattice 2 pi k"),
        R("constant_roof_resonances_13", oracle.constant_roof_resonances(13.0),
          "lattice 2 pi k"),
        R("cat_unstable_direction", eu, "eigenvector of (2,1;1,1)"),
        R("cat_stable_direction", es, "eigenvector of (2,1;1,1)"),
        R("cat_exponents_unit_roof", [lam, 0.0, -lam], "log of cat eigenvalues"),
        R("cat_map_image_0.2_0.3", (np.array([0.2, 0.3]) @ np.array([[2, 1], [1, 1]]).T) % 1.0,
          "matrix product mod 1"),
    ]


def cmd_oracle(ctx: Context) -> int:
    results = oracle_results()
    oracle.write_manifest(results, ctx.out / "oracle_manifest.json")
    ctx.report("oracle", {"results": [r.to_dict() for r in results]})
    return EXIT_OK


def _run_criterion(args):
    data, k = args
    return acceptance.run_criterion(k, ExperimentConfig(data))


def cmd_verify(ctx: Context) -> int:
    ks = list(range(1, len(acceptance.CRITERIA) + 1))
    if ctx.workers > 1:
        results = _pool_map(_run_criterion, [(ctx.cfg.data, k) for k in ks], ctx.workers)
        for r in results:
            print(r.line(), flush=True)
    else:
        results = acceptance.run_all(ctx.cfg, echo=True)
    body = {"criteria": [{k: v for k, v in r.to_dict().items() if k != "runtime"}
                         for r in results],
            "all_passed": all(r.passed for r in results)}
    ctx.report("verify", body, timing={str(r.number): r.runtime for r in results})
    io.write_json(ctx.out / "acceptance_manifest.json",
                  {"config_hash": ctx.cfg.hash, "version": __version__,
                   "criteria": [r.to_dict() for r in results]})
    cmd_oracle(ctx)
    return EXIT_OK if body["all_passed"] else EXIT_ERROR


COMMANDS = {
    "average": cmd_average,
    "response-fd": cmd_response_fd,
    "response-direct": cmd_response_direct,
    "susceptibility": cmd_susceptibility,
    "response-split": cmd_response_split,
    "response-nonauto": cmd_response_nonauto,
    "clv": cmd_clv,
    "divergence": cmd_divergence,
    "symbolic-pressure": cmd_symbolic_pressure,
    "symbolic-state": cmd_symbolic_state,
    "symbolic-correlation": cmd_symbolic_correlation,
    "resonances": cmd_resonances,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
}


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srblab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"srblab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="YAML experiment config")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (default ${WORKERS_ENV} or 1)")
        p.add_argument("--seed-offset", type=int, default=0, help="added to every seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = args.out if args.out is not None else Path(cfg["output"]["dir"])
    workers = args.workers if args.workers is not None else _default_workers()
    ctx = Context(cfg, out, max(1, workers), args.seed_offset)
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](ctx)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{args.command}: exit {code} ({time.perf_counter() - t0:.1f} s) -> {out}",
          file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
