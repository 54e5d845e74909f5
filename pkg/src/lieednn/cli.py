"""Command-line front end: train, simulate, decode, check.

Exit codes: 0 success, 1 usage or parse error, 2 non-convergence (or a failed
check), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from itertools import product
from pathlib import Path

import numpy as np

from .decoder import decode_states
from .learning import TrainConfig, default_setup, train
from .network import (
    IntegrationError,
    NetworkParams,
    StructuredWeights,
    curvature_diagnostic,
    integrate,
    stability_check,
)
from .projection import block_distance

EXIT_OK, EXIT_USAGE, EXIT_NOCONV, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "n_neurons": 4,
    "gamma": 1.0,
    "mu": 1.0,
    "bias": 0.125,
    "activation": "tanh",
    "target": "random",
    "target_range": 0.8,
    "lr_min": 0.002,
    "lr_max": 0.2,
    "lr_init": 0.02,
    "proj_period": 10,
    "tol": 1e-5,
    "max_epochs": 25000,
    "seed": 0,
    "ablate_projection": False,
    "learn_alpha": False,
    "alpha_init": "auto",
    "step_rule": "newton",
    "t_end": 50.0,
    "xi0": "random",
    "xi0_range": 1.0,
}

_NUMBER = (int, float)
TYPES = {
    "n_neurons": int,
    "gamma": _NUMBER,
    "mu": _NUMBER,
    "bias": (int, float, list),
    "activation": str,
    "target": (str, list),
    "target_range": _NUMBER,
    "lr_min": _NUMBER,
    "lr_max": _NUMBER,
    "lr_init": _NUMBER,
    "proj_period": int,
    "tol": _NUMBER,
    "max_epochs": int,
    "seed": int,
    "ablate_projection": bool,
    "learn_alpha": bool,
    "alpha_init": (str, int, float),
    "step_rule": str,
    "t_end": _NUMBER,
    "xi0": (str, list),
    "xi0_range": _NUMBER,
}

BLOCK_TOL = 1e-6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# ---- config ----------------------------------------------------------------------


def _check_type(key, value):
    wants = TYPES[key] if isinstance(TYPES[key], tuple) else (TYPES[key],)
    if isinstance(value, bool) and bool not in wants:
        raise UsageError(f"config key '{key}' has the wrong type")
    if not isinstance(value, wants):
        raise UsageError(f"config key '{key}' has the wrong type")


def load_config(path: str | None, command: str) -> dict:
    cfg = dict(DEFAULTS)
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    for key, value in raw.items():
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key '{key}'")
        _check_type(key, value)
        cfg[key] = value
    if command == "train" and "target" not in raw:
        raise UsageError("config key 'target' is missing (use a list or \"random\")")
    return cfg


def apply_overrides(cfg: dict, args) -> dict:
    cfg = dict(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.proj_period is not None:
        cfg["proj_period"] = args.proj_period
    if args.ablate_projection:
        cfg["ablate_projection"] = True
    if args.learn_alpha:
        cfg["learn_alpha"] = True
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _vector(cfg, key, n6):
    v = cfg[key]
    arr = np.full(n6, float(v)) if isinstance(v, _NUMBER) else np.asarray(v, dtype=float)
    if arr.shape != (n6,):
        raise UsageError(f"config key '{key}' must have {n6} entries")
    return arr


def build_params(cfg: dict) -> NetworkParams:
    n6 = 6 * cfg["n_neurons"]
    try:
        return NetworkParams(float(cfg["gamma"]), float(cfg["mu"]), _vector(cfg, "bias", n6),
                             cfg["activation"])
    except ValueError as exc:
        raise UsageError(f"invalid network parameters: {exc}") from exc


# ---- file formats ------------------------------------------------------------------


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_table(path: Path, header, rows, chash: str, seed: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_sha256={chash} seed={seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer)) else fmt(v))
                        for v in row])


def read_table(path) -> tuple[list[str], np.ndarray]:
    try:
        with open(path) as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise UsageError(f"{path} has no header row")
    rows = list(csv.reader(lines))
    header = rows[0]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise UsageError(f"{path} has a non-numeric entry") from exc
    if data.size and (data.ndim != 2 or data.shape[1] != len(header)):
        raise UsageError(f"{path} rows do not match the header")
    return header, data.reshape(-1, len(header))


def save_weights(path: Path, w: StructuredWeights, params: NetworkParams, target, chash: str,
                 seed: int) -> None:
    n = w.n_neurons
    doc = {
        "n_neurons": n,
        "alpha": w.alpha.tolist(),
        "blocks": [w.blocks[i, j].reshape(-1).tolist() for i in range(n) for j in range(n)],
        "gamma": params.gamma,
        "mu": params.mu,
        "bias": params.bias.tolist(),
        "activation": params.activation,
        "target": None if target is None else np.asarray(target).tolist(),
        "config_sha256": chash,
        "seed": seed,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_weights(path):
    """Return (weights, params, target) from a weights file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
        n = int(doc["n_neurons"])
        alpha = np.asarray(doc["alpha"], dtype=float)
        blocks = np.asarray(doc["blocks"], dtype=float)
        if alpha.shape != (n, n) or blocks.shape != (n * n, 36):
            raise ValueError("alpha or blocks have the wrong shape")
        w = StructuredWeights(alpha, blocks.reshape(n, n, 6, 6))
        params = NetworkParams(float(doc.get("gamma", 1.0)), float(doc.get("mu", 1.0)),
                               np.asarray(doc.get("bias", np.full(6 * n, 0.125)), dtype=float),
                               doc.get("activation", "tanh"))
        if params.n_neurons != n:
            raise ValueError("bias length does not match n_neurons")
        target = doc.get("target")
        target = None if target is None else np.asarray(target, dtype=float)
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"corrupt weights file {path}: {exc}") from exc
    return w, params, target


# ---- commands ----------------------------------------------------------------------


def _train_one(cfg: dict, out: Path) -> tuple[int, dict]:
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    seed = cfg["seed"]
    params = build_params(cfg)
    n = cfg["n_neurons"]
    w0, _, sampled_target = default_setup(n, seed, gamma=params.gamma, mu=params.mu,
                                        target_range=float(cfg["target_range"]))
    if isinstance(cfg["target"], str) and cfg["target"] != "random":
        raise UsageError("config key 'target' must be a list or \"random\"")
    target = sampled_target if cfg["target"] == "random" else _vector(cfg, "target", 6 * n)
    alpha_init = cfg["alpha_init"]
    try:
        tc = TrainConfig(
            target=target, lr_min=float(cfg["lr_min"]), lr_max=float(cfg["lr_max"]),
            lr_init=float(cfg["lr_init"]), proj_period=cfg["proj_period"], tol=float(cfg["tol"]),
            max_epochs=cfg["max_epochs"], seed=seed, ablate_projection=cfg["ablate_projection"],
            learn_alpha=cfg["learn_alpha"], alpha_init=alpha_init, step_rule=cfg["step_rule"],
        )
    except ValueError as exc:
        raise UsageError(f"invalid training configuration: {exc}") from exc
    rec = train(w0, params, tc)

    save_weights(out / "weights.json", rec.weights, params, target, chash, seed)
    rows = [(k + 1, rec.losses[k], rec.accuracies[k], rec.max_errors[k],
             rec.lrs[k] if k < len(rec.lrs) else float("nan")) for k in range(rec.epochs)]
    write_table(out / "loss.csv", ["epoch", "loss", "accuracy", "max_abs_error", "lr"], rows, chash, seed)
    if rec.equilibrium is not None:
        write_table(out / "equilibrium.csv", ["index", "xi_star", "target"],
                    [(i, rec.equilibrium[i], target[i]) for i in range(target.size)], chash, seed)
    dev_rows = list(zip(rec.deviation_epochs, rec.deviations))
    dev_rows.append(("final", rec.final_deviation))
    write_table(out / "deviation.csv", ["epoch", "max_block_deviation"], dev_rows, chash, seed)
    summary = {
        "status": rec.status,
        "converged": rec.converged,
        "epochs": rec.epochs,
        "final_loss": rec.final_loss,
        "final_deviation": rec.final_deviation,
        "seed": seed,
        "proj_period": cfg["proj_period"],
    }
    if rec.converged:
        code = EXIT_OK
    elif rec.status == "max_epochs":
        code = EXIT_NOCONV
    else:
        code = EXIT_NUMERIC
    return code, summary


def _sweep_job(job):
    cfg, out = job
    try:
        return _train_one(cfg, Path(out))
    except UsageError as exc:
        return EXIT_USAGE, {"status": f"usage: {exc}", "seed": cfg["seed"], "proj_period": cfg["proj_period"]}


def _parse_sweep(items) -> dict:
    grid = {}
    for item in items:
        key, _, vals = item.partition("=")
        if key not in ("seed", "proj_period") or not vals:
            raise UsageError(f"bad --sweep entry '{item}' (use seed=... or proj_period=...)")
        try:
            grid[key] = [int(v) for v in vals.split(",")]
        except ValueError as exc:
            raise UsageError(f"bad --sweep values in '{item}'") from exc
    return grid


def cmd_train(cfg: dict, out: Path, sweep=None) -> int:
    if not sweep:
        code, summary = _train_one(cfg, out)
        print(json.dumps(summary))
        return code
    grid = _parse_sweep(sweep)
    seeds = grid.get("seed", [cfg["seed"]])
    periods = grid.get("proj_period", [cfg["proj_period"]])
    jobs = []
    for s, p in product(seeds, periods):
        c = dict(cfg, seed=s, proj_period=p)
        jobs.append((c, str(out / f"seed{s}_P{p}")))
    threads = int(os.environ.get("LIEEDNN_THREADS", "1") or 1)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    out.mkdir(parents=True, exist_ok=True)
    rows = [(r["seed"], r["proj_period"], r["status"], r.get("epochs", 0), r.get("final_loss", float("nan")),
             r.get("final_deviation", float("nan"))) for _, r in results]
    write_table(out / "sweep.csv", ["seed", "proj_period", "status", "epochs", "final_loss", "final_deviation"],
                rows, config_hash(cfg), cfg["seed"])
    for _, r in results:
        print(json.dumps(r))
    codes = [c for c, _ in results]
    return max(codes) if codes else EXIT_OK


def cmd_simulate(cfg: dict, weights_file, out: Path, cfg_given: bool) -> int:
    w, params, target = load_weights(weights_file)
    if cfg_given:
        params = build_params(cfg)
        if params.n_neurons != w.n_neurons:
            raise UsageError("config n_neurons does not match the weights file")
    n6 = 6 * w.n_neurons
    if cfg["xi0"] == "random":
        rng = np.random.default_rng(cfg["seed"])
        xi0 = rng.uniform(-cfg["xi0_range"], cfg["xi0_range"], n6)
    elif cfg["xi0"] == "zero":
        xi0 = np.zeros(n6)
    elif isinstance(cfg["xi0"], list):
        xi0 = _vector(cfg, "xi0", n6)
    else:
        raise UsageError("config key 'xi0' must be a list, \"random\" or \"zero\"")
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(dict(cfg, weights=str(weights_file)))
    try:
        traj = integrate(xi0, w, params, t_end=float(cfg["t_end"]))
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        traj = exc.trajectory
        _write_trajectory(out, traj, n6, chash, cfg["seed"])
        return EXIT_NUMERIC
    _write_trajectory(out, traj, n6, chash, cfg["seed"])
    report = {"converged": traj.converged, "t_final": float(traj.times[-1]), "samples": len(traj)}
    if len(traj) >= 3:
        cr = curvature_diagnostic(traj, w, params)
        report.update(
            max_accel_fd=cr.max_accel_fd, max_accel_exact=cr.max_accel_exact,
            accel_bound=cr.accel_bound, accel_ok=cr.accel_ok, max_curvature=cr.max_curvature,
            curvature_bound=cr.curvature_bound, curvature_ok=cr.curvature_ok, r_xi=cr.r_xi,
        )
    if target is not None:
        report["final_max_error_to_target"] = float(np.abs(traj.states[-1] - target).max())
    report["config_sha256"] = chash
    report["seed"] = cfg["seed"]
    with open(out / "curvature.json", "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK if traj.converged else EXIT_NOCONV


def _write_trajectory(out: Path, traj, n6, chash, seed):
    header = ["t"] + [f"xi_{i}" for i in range(n6)]
    rows = [(t, *x) for t, x in zip(traj.times, traj.states)]
    write_table(out / "trajectory.csv", header, rows, chash, seed)


def cmd_decode(trajectory_file, out: Path, chain: bool, seed: int) -> int:
    header, data = read_table(trajectory_file)
    if not header or header[0] != "t" or (len(header) - 1) % 6 or len(header) < 7:
        raise UsageError(f"{trajectory_file} is not a trajectory table")
    pt = decode_states(data[:, 1:], data[:, 0], compose_chain=chain)
    out.mkdir(parents=True, exist_ok=True)
    with open(trajectory_file, "rb") as fh:
        chash = hashlib.sha256(fh.read()).hexdigest()
    cols = []
    for i in range(pt.n_neurons):
        cols += [f"n{i}_r{a}{b}" for a in range(3) for b in range(3)] + [f"n{i}_p{a}" for a in range(3)]
    rows = []
    for k, t in enumerate(pt.times):
        row = [t]
        for i in range(pt.n_neurons):
            row += list(pt.rotations[k, i].reshape(-1)) + list(pt.translations[k, i])
        rows.append(row)
    write_table(out / "poses.csv", ["t"] + cols, rows, chash, seed)
    if chain:
        ccols = [f"r{a}{b}" for a in range(3) for b in range(3)] + [f"p{a}" for a in range(3)]
        crow = [[t, *pt.chain_rotations[k].reshape(-1), *pt.chain_translations[k]]
                for k, t in enumerate(pt.times)]
        write_table(out / "chain.csv", ["t"] + ccols, crow, chash, seed)
    err = pt.max_orthonormality_error()
    print(json.dumps({"samples": len(pt.times), "neurons": pt.n_neurons, "max_orthonormality_error": err}))
    return EXIT_OK


def cmd_check(weights_file) -> int:
    w, params, _ = load_weights(weights_file)
    rep = stability_check(w, params)
    n = w.n_neurons
    dists = [[block_distance(w.blocks[i, j]) for j in range(n)] for i in range(n)]
    worst = max(max(r) for r in dists)
    print(f"norm1={fmt(rep.norm1)} norm_inf={fmt(rep.norm_inf)} bound={fmt(rep.bound)}")
    print(f"column_condition={'ok' if rep.column_ok else 'violated'} margin={fmt(rep.column_margin)}")
    print(f"symmetrized_condition={'ok' if rep.symmetric_ok else 'violated'} margin={fmt(rep.symmetric_margin)}")
    for i in range(n):
        print("block_distance[" + str(i) + "] " + " ".join(fmt(d) for d in dists[i]))
    print(f"max_block_distance={fmt(worst)} tolerance={fmt(BLOCK_TOL)}")
    ok = rep.norms_ok and worst <= BLOCK_TOL
    print("check=" + ("pass" if ok else "fail"))
    return EXIT_OK if ok else EXIT_NOCONV


# ---- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--proj-period", type=int, dest="proj_period")
    common.add_argument("--ablate-projection", action="store_true")
    common.add_argument("--learn-alpha", action="store_true")
    common.add_argument("--out", default="out", help="output directory")

    p = _Parser(prog="lieednn", description="SE(3)-structured equilibrium networks")
    sub = p.add_subparsers(dest="command", required=True)
    t = sub.add_parser("train", parents=[common], help="train towards a target equilibrium")
    t.add_argument("--sweep", action="append", metavar="KEY=V1,V2",
                   help="fan out over seed or proj_period (repeatable)")
    s = sub.add_parser("simulate", parents=[common], help="integrate a trained network")
    s.add_argument("--weights", required=True)
    d = sub.add_parser("decode", parents=[common], help="decode a trajectory table into poses")
    d.add_argument("--trajectory", required=True)
    d.add_argument("--chain", action="store_true")
    c = sub.add_parser("check", parents=[common], help="stability and structure report")
    c.add_argument("--weights", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = Path(args.out)
    try:
        cfg = apply_overrides(load_config(args.config, args.command), args)
        if args.command == "train":
            if cfg["proj_period"] < 1:
                raise UsageError("config key 'proj_period' must be >= 1")
            return cmd_train(cfg, out, args.sweep)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.weights, out, args.config is not None)
        if args.command == "decode":
            return cmd_decode(args.trajectory, out, args.chain, cfg["seed"])
        return cmd_check(args.weights)
    except UsageError as exc:
        print(f"lieednn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"lieednn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
