"""Command-line driver: training runs, Fisher sparsity reports, verification.

Commands
--------
``natgradnet train --config CFG [--config CFG2 ...] [--seed N] [--out DIR]``
    Gradient-descent / natural-gradient / wake-sleep runs from a JSON
    experiment config.  Writes ``<stem>_trajectory.csv`` (columns
    ``iter,E,grad_norm`` plus ``gap`` for wake-sleep) and
    ``<stem>_summary.json``.  Multiple configs run in parallel worker
    processes capped by the ``NATGRAD_THREADS`` environment variable.

``natgradnet fisher-report --config CFG [--out DIR]``
    Structural-zero counts of the Fisher matrix over several parameter
    draws, with the layered-architecture predictions when declared.

``natgradnet verify --suite NAME [--seed N] [--out DIR]``
    Runs a verification suite (fisher, gradient, gibbs, geometry,
    wakesleep, or all) and emits per-check residuals as JSON.

Exit codes: 0 success, 1 failed check, 2 config error, 3 numeric failure.
Config paths of the form ``fixture:NAME`` resolve to the bundled specs
in ``natgradnet/fixtures``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import nets
from . import objective as obj
from . import verify as verify_mod
from . import wake_sleep as ws
from .dag_model import Dag, DagModel, SIGMOID, TABULAR_LOGIT, exp_family
from .fisher import model_fisher_oracle, structural_zero_mask, weight_coordinate_indices
from .objective import NumericsError
from .sampler import GibbsConfig, target_posterior_sampler
from .state_space import StateSpace, config_count

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERIC_FAILURE = 3


class ConfigError(ValueError):
    """Config validation failure, anchored to a file and JSON path."""

    def __init__(self, path: str, message: str | None = None):
        if message is None:
            super().__init__(path)
            self.json_path, self.message = "", path
        else:
            super().__init__(f"{path}: {message}")
            self.json_path, self.message = path, message


def _anchored(config_path: Path, err: ConfigError) -> ConfigError:
    return ConfigError(f"{config_path}: {err.json_path}", err.message)


def _fmt(x: float) -> str:
    """17-significant-digit float formatting for byte-stable outputs."""
    return format(float(x), ".17g")


def resolve_config_path(spec: str) -> Path:
    if spec.startswith("fixture:"):
        name = spec.split(":", 1)[1]
        if not name.endswith(".json"):
            name += ".json"
        return Path(str(resources.files("natgradnet") / "fixtures" / name))
    return Path(spec)


def load_config(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError("<file>", f"cannot read config: {err}") from err
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"line {err.lineno}, column {err.colno}", f"invalid JSON: {err.msg}")


def _expect(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(path, message)


def model_from_config(cfg: dict, path: str = "network") -> DagModel:
    _expect(isinstance(cfg, dict), path, "must be an object")
    nodes = cfg.get("nodes")
    _expect(isinstance(nodes, list) and nodes, f"{path}.nodes", "must be a non-empty array")
    n = len(nodes)
    cards = cfg.get("cardinalities", [2] * n)
    _expect(
        isinstance(cards, list) and len(cards) == n,
        f"{path}.cardinalities",
        f"must list one cardinality per node ({n})",
    )
    for i, c in enumerate(cards):
        _expect(isinstance(c, int) and c >= 2, f"{path}.cardinalities[{i}]", "must be an integer >= 2")
    visible = cfg.get("visible")
    _expect(isinstance(visible, list) and visible, f"{path}.visible", "must be a non-empty array")
    for i, v in enumerate(visible):
        _expect(
            isinstance(v, int) and 0 <= v < n,
            f"{path}.visible[{i}]",
            f"must be a node index below {n}",
        )
    parents = []
    kernels = []
    for i, node in enumerate(nodes):
        npath = f"{path}.nodes[{i}]"
        _expect(isinstance(node, dict), npath, "must be an object")
        ps = node.get("parents", [])
        _expect(isinstance(ps, list), f"{npath}.parents", "must be an array")
        for j, p in enumerate(ps):
            _expect(
                isinstance(p, int) and 0 <= p < n,
                f"{npath}.parents[{j}]",
                f"must be a node index below {n}",
            )
        parents.append(tuple(ps))
        family = node.get("family", "sigmoid")
        if family == "sigmoid":
            kernels.append(SIGMOID)
        elif family == "tabular_logit":
            kernels.append(TABULAR_LOGIT)
        elif family == "exp_family":
            stats = node.get("stats")
            _expect(stats is not None, f"{npath}.stats", "exp_family nodes need statistic tables")
            try:
                kernels.append(exp_family(np.asarray(stats, dtype=np.float64)))
            except Exception as err:
                raise ConfigError(f"{npath}.stats", str(err)) from err
        else:
            raise ConfigError(
                f"{npath}.family",
                f"unknown kernel family {family!r} "
                "(expected sigmoid, exp_family, or tabular_logit)",
            )
    hidden = tuple(u for u in range(n) if u not in set(visible))
    try:
        space = StateSpace(tuple(cards), tuple(visible), hidden)
        return DagModel(space, Dag(tuple(parents)), kernels)
    except Exception as err:
        raise ConfigError(path, str(err)) from err


def target_from_config(model: DagModel, cfg, path: str = "target") -> np.ndarray:
    n = config_count(model.space, model.space.visible)
    _expect(isinstance(cfg, dict), path, "must be an object")
    if "table" in cfg:
        table = cfg["table"]
        _expect(
            isinstance(table, list) and len(table) == n,
            f"{path}.table",
            f"must list {n} probabilities",
        )
        target = np.asarray(table, dtype=np.float64)
        _expect(bool(np.all(target > 0)), f"{path}.table", "entries must be strictly positive")
        _expect(
            abs(float(target.sum()) - 1.0) <= 1e-12,
            f"{path}.table",
            "entries must sum to 1 within 1e-12",
        )
        return target
    if "random_seed" in cfg:
        seed = cfg["random_seed"]
        _expect(isinstance(seed, int), f"{path}.random_seed", "must be an integer")
        conc = cfg.get("concentration", 1.0)
        return nets.random_target(model, np.random.default_rng(seed), conc)
    raise ConfigError(path, "needs either 'table' or 'random_seed'")


ALGORITHMS = ("gd", "natgrad", "wake-sleep", "natural-wake-sleep")


def validate_train_config(cfg: dict) -> dict:
    _expect(isinstance(cfg, dict), "$", "config must be a JSON object")
    model = model_from_config(cfg.get("network"), "network")
    target = target_from_config(model, cfg.get("target", {}), "target")
    algorithm = cfg.get("algorithm", "gd")
    _expect(
        algorithm in ALGORITHMS,
        "algorithm",
        f"unknown algorithm {algorithm!r} (expected one of {', '.join(ALGORITHMS)})",
    )
    sched = cfg.get("schedule", {})
    _expect(isinstance(sched, dict), "schedule", "must be an object")
    steps = sched.get("steps", 100)
    _expect(isinstance(steps, int) and steps >= 0, "schedule.steps", "must be an integer >= 0")
    for key in ("step_size", "step_eta", "stop_tol", "pinv_rel_tol"):
        if key in sched:
            _expect(
                isinstance(sched[key], (int, float)) and sched[key] >= 0,
                f"schedule.{key}",
                "must be a nonnegative number",
            )
    k_sleep = sched.get("k_sleep", 1)
    _expect(isinstance(k_sleep, int) and k_sleep >= 1, "schedule.k_sleep", "must be an integer >= 1")
    expectation = cfg.get("expectation", "exact")
    if expectation != "exact":
        _expect(
            isinstance(expectation, dict) and "mc" in expectation,
            "expectation",
            "must be 'exact' or an object {'mc': {'n_samples': N}}",
        )
        mc = expectation["mc"]
        _expect(
            isinstance(mc, dict) and isinstance(mc.get("n_samples"), int) and mc["n_samples"] >= 1,
            "expectation.mc.n_samples",
            "must be an integer >= 1",
        )
    sampler_cfg = cfg.get("sampler", {})
    _expect(isinstance(sampler_cfg, dict), "sampler", "must be an object")
    seed = cfg.get("seed", 0)
    _expect(isinstance(seed, int), "seed", "must be an integer")
    return {"model": model, "target": target, "algorithm": algorithm, "cfg": cfg}


def _gibbs_config(cfg: dict) -> GibbsConfig:
    s = cfg.get("sampler", {})
    return GibbsConfig(
        burn_in=s.get("burn_in", 1000),
        thinning=s.get("thinning", 10),
        sweep_order=s.get("order", "random"),
    )


def run_train(config_path: Path, out_dir: Path, seed_override: int | None = None) -> dict:
    try:
        raw = load_config(config_path)
        parsed = validate_train_config(raw)
    except ConfigError as err:
        raise _anchored(config_path, err) from err
    model, target, algorithm = parsed["model"], parsed["target"], parsed["algorithm"]
    cfg = parsed["cfg"]
    sched = cfg.get("schedule", {})
    seed = seed_override if seed_override is not None else cfg.get("seed", 0)
    rng = np.random.default_rng(seed)
    params0 = nets.init_params(model, rng)
    expectation = cfg.get("expectation", "exact")
    mc_mode = expectation != "exact"
    n_samples = expectation["mc"]["n_samples"] if mc_mode else 1000

    t0 = time.perf_counter()
    if algorithm in ("gd", "natgrad"):
        tc = obj.TrainConfig(
            step_size=sched.get("step_size", 0.05),
            max_iters=sched.get("steps", 100),
            grad_mode="natural" if algorithm == "natgrad" else "euclidean",
            expectation_mode="mc" if mc_mode else "exact",
            n_samples=n_samples,
            pinv_rel_tol=sched.get("pinv_rel_tol", 1e-12),
            stop_tol=sched.get("stop_tol", 1e-8),
            seed=seed,
        )
        factory = None
        if mc_mode:
            gibbs_cfg = _gibbs_config(cfg)

            def factory(mdl, params):
                return lambda n, rng: target_posterior_sampler(
                    mdl, params, target, n, gibbs_cfg, rng
                )

        traj = obj.train(model, params0, target, tc, factory)
        rows = list(zip(traj.iters, traj.E, traj.grad_norm))
        header = ["iter", "E", "grad_norm"]
        final_e = float(traj.E[-1])
        iterations = int(traj.iters[-1])
    else:
        recog = ws.chain_recognition(model)
        schedule = ws.WakeSleepSchedule(
            iters=sched.get("steps", 100),
            k_sleep_per_wake=sched.get("k_sleep", 1),
            step_xi=sched.get("step_size", 0.05),
            step_eta=sched.get("step_eta", sched.get("step_size", 0.05)),
            natural=(algorithm == "natural-wake-sleep"),
            pinv_rel_tol=sched.get("pinv_rel_tol", 1e-12),
            mode="mc" if mc_mode else "exact",
            n_samples=n_samples,
        )
        traj = ws.wake_sleep_train(
            model, params0, recog, np.zeros(recog.param_count), target, schedule, rng
        )
        rows = list(zip(traj.iters, traj.E, traj.wake_norm, traj.gap))
        header = ["iter", "E", "grad_norm", "gap"]
        final_e = float(traj.E[-1])
        iterations = int(traj.iters[-1])
    wall = time.perf_counter() - t0

    out_dir.mkdir(parents=True, exist_ok=True)
    stem = config_path.stem
    csv_path = out_dir / f"{stem}_trajectory.csv"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([str(int(row[0]))] + [_fmt(v) for v in row[1:]])
    csv_path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")

    summary = {
        "config": str(config_path),
        "algorithm": algorithm,
        "seed": int(seed),
        "iterations": iterations,
        "initial_E": float(rows[0][1]),
        "final_E": final_e,
        "wall_time_s": wall,
        "trajectory_csv": str(csv_path),
    }
    (out_dir / f"{stem}_summary.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8", newline="\n"
    )
    return summary


def run_fisher_report(config_path: Path, out_dir: Path, seed_override: int | None = None) -> dict:
    try:
        cfg = load_config(config_path)
        _expect(isinstance(cfg, dict), "$", "config must be a JSON object")
        model = model_from_config(cfg.get("network"), "network")
        draws = cfg.get("draws", 5)
        _expect(isinstance(draws, int) and draws >= 1, "draws", "must be an integer >= 1")
        layered = cfg.get("layered")
        if layered is not None:
            _expect(isinstance(layered, dict), "layered", "must be an object")
            _expect(
                isinstance(layered.get("n"), int)
                and isinstance(layered.get("l"), int)
                and layered["n"] >= 1
                and layered["l"] >= 1,
                "layered",
                "needs integer fields n >= 1 and l >= 1",
            )
    except ConfigError as err:
        raise _anchored(config_path, err) from err
    abs_tol = cfg.get("abs_tol", 1e-10)
    weights_only = cfg.get("weights_only", True)
    seed = seed_override if seed_override is not None else cfg.get("seed", 0)
    rng = np.random.default_rng(seed)

    if weights_only:
        idx = weight_coordinate_indices(model)
        block_dims = [len(model.dag.parents[r]) for r in range(model.dag.node_count)]
    else:
        idx = np.arange(model.param_count)
        block_dims = list(model.block_dims)
    mats = []
    for _ in range(draws):
        G = model_fisher_oracle(model, nets.random_params(model, rng, -1.0, 1.0))
        mats.append(G[np.ix_(idx, idx)])
    mask = structural_zero_mask(mats, abs_tol)
    total = int(mask.size)
    zeros = int(mask.sum())
    per_block = []
    offset = 0
    for r, dim in enumerate(block_dims):
        sl = slice(offset, offset + dim)
        per_block.append(
            {"node": r, "dim": int(dim), "zeros_in_block": int(mask[sl, sl].sum())}
        )
        offset += dim
    report = {
        "config": str(config_path),
        "seed": int(seed),
        "draws": draws,
        "abs_tol": abs_tol,
        "weights_only": bool(weights_only),
        "matrix_dim": int(mask.shape[0]),
        "total": total,
        "zeros": zeros,
        "nonzeros": total - zeros,
        "per_block": per_block,
    }
    if layered is not None:
        n, l = layered["n"], layered["l"]
        report["layered"] = {
            "n": n,
            "l": l,
            "kind": layered.get("kind", ""),
            "parameters": l * n * n,
            "matrix_entries": (l * n * n) ** 2,
            "max_nonzeros_shallow": l * l * n**3,
            "max_nonzeros_deep": l * n**3,
            "nonzero_difference": l * n**3 * (l - 1),
        }
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{config_path.stem}_fisher_report.json"
    path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8", newline="\n")
    return report


def run_verify(suite: str, seed: int, out_dir: Path | None) -> tuple[dict, int]:
    try:
        results = verify_mod.run_suite(suite, seed)
    except KeyError as err:
        raise ConfigError("suite", str(err.args[0])) from err
    payload = {
        "suite": suite,
        "seed": seed,
        "checks": [r.as_dict() for r in results],
        "passed": all(r.passed for r in results),
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"verify_{suite}.json").write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8", newline="\n"
        )
    return payload, EXIT_OK if payload["passed"] else EXIT_CHECK_FAILED


def _worker_train(args: tuple[str, str, int | None]) -> dict:
    path, out, seed = args
    return run_train(Path(path), Path(out), seed)


def max_workers() -> int:
    env = os.environ.get("NATGRAD_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return max(1, os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="natgradnet",
        description="Natural-gradient learning experiments on DAG belief networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training experiment from a JSON config")
    p_train.add_argument(
        "--config", action="append", required=True, help="experiment config (repeatable)"
    )
    p_train.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_train.add_argument("--out", default=".", help="output directory")

    p_rep = sub.add_parser("fisher-report", help="structural-zero report of the Fisher matrix")
    p_rep.add_argument("--config", required=True, help="network config")
    p_rep.add_argument("--seed", type=int, default=None)
    p_rep.add_argument("--out", default=".", help="output directory")

    p_ver = sub.add_parser("verify", help="run a numerical verification suite")
    p_ver.add_argument(
        "--suite",
        required=True,
        help="fisher, gradient, gibbs, geometry, wakesleep, or all",
    )
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--out", default=None, help="also write the JSON report here")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            jobs = [
                (str(resolve_config_path(c)), args.out, args.seed) for c in args.config
            ]
            if len(jobs) == 1 or max_workers() == 1:
                summaries = [_worker_train(j) for j in jobs]
            else:
                from concurrent.futures import ProcessPoolExecutor

                with ProcessPoolExecutor(min(max_workers(), len(jobs))) as pool:
                    summaries = list(pool.map(_worker_train, jobs))
            for s in summaries:
                print(json.dumps(s, indent=2))
            return EXIT_OK
        if args.command == "fisher-report":
            report = run_fisher_report(
                resolve_config_path(args.config), Path(args.out), args.seed
            )
            print(json.dumps(report, indent=2))
            return EXIT_OK
        if args.command == "verify":
            payload, code = run_verify(
                args.suite, args.seed, Path(args.out) if args.out else None
            )
            print(json.dumps(payload, indent=2))
            return code
        raise ConfigError("command", f"unknown command {args.command!r}")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except NumericsError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC_FAILURE


if __name__ == "__main__":
    sys.exit(main())
