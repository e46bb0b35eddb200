"""Command line interface.

Subcommands: ``build`` (one adaptive run, writes the build log and a model
file), ``converge`` (convergence study over polynomial degrees and modes,
writes error tables and fitted slopes) and ``stats`` (moments, CDF and
optional direct-sampling comparisons for a saved model).

Settings come from built-in defaults, overridden by a JSON config file
(``--config``), overridden by explicit flags. Exit codes: 0 on success, 1
on runtime failures (solver, build, missing files), 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .adaptive import BuildConfig, build
from .convergence import fit_slope, l1_error, ladder, run_convergence
from .errors import InvalidModelFile, InvalidNetworkFile, SimplexUQError
from .io import load_model, save_model, write_csv
from .stats import QuadratureSpec, cdf, halton_sequence, moments
from .testbed import GasOracle, make_test_oracle, parse_network_file

DEFAULTS = {
    "oracle": None,
    "network": None,
    "threshold": 0.7,
    "d": 2,
    "p": "2",
    "mode": "improved",
    "lec": None,
    "estimator": "mc-l1",
    "mref": 1.0,
    "budget": 200,
    "tol": 0.0,
    "seed": 0,
    "nmc_local": 200,
    "nmc_error": 200_000,
    "budgets": None,
    "modes": None,
    "out": "out",
    "quad": "mc",
    "quad_n": 100_000,
    "cdf_nodes": 64,
    "cdf_nmc": 100_000,
    "compare": None,
    "model": None,
}


class UsageError(Exception):
    pass


def _add_build_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with defaults for any option")
    p.add_argument("--oracle", choices=("smooth-sine", "smooth-sine-fake-kink", "clipped-sine"))
    p.add_argument("--network", help="network description file (overrides --oracle)")
    p.add_argument("--threshold", type=float, help="test-function threshold")
    p.add_argument("--d", type=int, help="input dimension for test functions")
    p.add_argument("--p", help="maximum polynomial degree (comma list for converge)")
    p.add_argument("--mode", choices=("original", "improved"))
    p.add_argument("--lec", choices=("off", "strict", "delta"))
    p.add_argument("--estimator", choices=("last-point", "mc-l1", "vol-order"))
    p.add_argument("--mref", type=float, help="batch size; below 1 means a fraction of n")
    p.add_argument("--budget", type=int, help="total oracle evaluation budget")
    p.add_argument("--tol", type=float, help="stop when the aggregate falls below this")
    p.add_argument("--seed", type=int)
    p.add_argument("--nmc-local", dest="nmc_local", type=int)
    p.add_argument("--nmc-error", dest="nmc_error", type=int)
    p.add_argument("--out", help="output directory")


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage problems through UsageError.

    Keeps the exit-code contract (0 success, 1 usage or config, 2 numerical
    failure) instead of argparse's default exit code 2 for bad flags.
    """

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _make_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="simplexuq",
        description="Adaptive simplex surrogates for functions with kinks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pb = sub.add_parser("build", help="run one adaptive build")
    _add_build_options(pb)

    pc = sub.add_parser("converge", help="convergence study with l1 errors and slopes")
    _add_build_options(pc)
    pc.add_argument("--budgets", help="comma list of checkpoint budgets")
    pc.add_argument("--modes", help="comma list of modes to run")

    ps = sub.add_parser("stats", help="moments and CDF of a saved model")
    ps.add_argument("--config", help="JSON file with defaults for any option")
    ps.add_argument("--model", help="model file written by build")
    ps.add_argument("--quad", choices=("mc", "qmc-halton"))
    ps.add_argument("--quad-n", dest="quad_n", type=int)
    ps.add_argument("--seed", type=int)
    ps.add_argument("--cdf-nodes", dest="cdf_nodes", type=int)
    ps.add_argument("--cdf-nmc", dest="cdf_nmc", type=int)
    ps.add_argument("--compare", help="comma list from {mc,qmc}: direct-oracle expectations")
    ps.add_argument("--out", help="output directory")
    return parser


def _merge_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} does not exist")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        settings.update(loaded)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _resolve_oracle(settings: dict):
    if settings["network"]:
        net = parse_network_file(settings["network"])
        oracle = GasOracle(net)
        info = {"kind": "network", "path": str(settings["network"]), "qoi": net.qoi}
        return oracle, info
    if not settings["oracle"]:
        raise UsageError("either --oracle or --network is required")
    oracle = make_test_oracle(settings["oracle"], int(settings["d"]), float(settings["threshold"]))
    info = {
        "kind": settings["oracle"],
        "d": int(settings["d"]),
        "threshold": float(settings["threshold"]),
    }
    return oracle, info


def _resolve_lec(settings: dict, d: int) -> str:
    if settings["lec"] is not None:
        return settings["lec"]
    if settings["mode"] == "original":
        return "strict"
    return "delta" if d >= 4 else "off"


def _build_config(settings: dict, d: int, p: int) -> BuildConfig:
    config = BuildConfig(
        p_max=p,
        mode=settings["mode"],
        lec=_resolve_lec(settings, d),
        estimator=settings["estimator"],
        m_ref=float(settings["mref"]),
        budget=int(settings["budget"]),
        tolerance=float(settings["tol"]),
        seed=int(settings["seed"]),
        n_mc_local=int(settings["nmc_local"]),
    )
    if config.estimator == "vol-order" and config.tolerance > 0:
        print(
            "warning: vol-order tracks no error level; the tolerance stop is unreliable",
            file=sys.stderr,
        )
    return config


def _build_log_rows(model) -> list[tuple]:
    return [
        (r.step, r.n_samples, r.n_simplices, r.aggregate, r.wall_time)
        for r in model.build_log
    ]


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"expected a comma list of integers, got {text!r}")


def cmd_build(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    oracle, info = _resolve_oracle(settings)
    p_list = _int_list(settings["p"])
    if len(p_list) != 1:
        raise UsageError("build takes a single --p value")
    config = _build_config(settings, oracle.d, p_list[0])
    model = build(oracle, config)
    model.oracle_info = info
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "build_log.csv",
        ["step", "n_samples", "n_simplices", "aggregate_estimate", "wall_time_s"],
        _build_log_rows(model),
    )
    save_model(model, out / "model.ssc")
    print(
        f"build: n={model.n} simplices={len(model.tri.simplices)} "
        f"aggregate={model.aggregate:.3e} -> {out}"
    )
    return 0


def cmd_converge(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    oracle, _ = _resolve_oracle(settings)
    budget = int(settings["budget"])
    n_init = 2 ** oracle.d + 1
    if settings["budgets"]:
        checkpoints = _int_list(settings["budgets"])
    else:
        checkpoints = ladder(max(25, n_init + 10), budget)
    modes = (
        [m.strip() for m in str(settings["modes"]).split(",") if m.strip()]
        if settings["modes"]
        else [settings["mode"]]
    )
    rows, slope_rows = [], []
    for mode in modes:
        for p in _int_list(settings["p"]):
            run_settings = dict(settings, mode=mode, budget=max(checkpoints))
            config = _build_config(run_settings, oracle.d, p)
            points, _ = run_convergence(
                oracle,
                config,
                checkpoints,
                n_mc_error=int(settings["nmc_error"]),
                error_seed=int(settings["seed"]) + 1,
            )
            rows.extend((mode, p, c.n, c.error, c.aggregate) for c in points)
            slope = fit_slope([c.n for c in points], [c.error for c in points])
            slope_rows.append((mode, p, slope))
            print(f"converge: mode={mode} p={p} slope={slope:.3f}")
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "converge.csv",
        ["mode", "p", "n", "l1_error", "aggregate_estimate"],
        rows,
    )
    write_csv(out / "slopes.csv", ["mode", "p", "slope"], slope_rows)
    return 0


def _rebuild_oracle(info: dict | None):
    if not info:
        raise UsageError("model file does not describe its oracle; cannot compare")
    if info.get("kind") == "network":
        return GasOracle(parse_network_file(info["path"]))
    return make_test_oracle(info["kind"], int(info["d"]), float(info["threshold"]))


def cmd_stats(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    if not settings["model"]:
        raise UsageError("--model is required")
    model = load_model(settings["model"])
    quad = QuadratureSpec(
        kind=settings["quad"], n=int(settings["quad_n"]), seed=int(settings["seed"])
    )
    mean, var = moments(model, quad)
    curve = cdf(
        model,
        int(settings["cdf_nodes"]),
        int(settings["cdf_nmc"]),
        np.random.default_rng([int(settings["seed"]), 0xCDF]),
    )
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "stats.csv",
        ["statistic", "value", "quad_kind", "quad_n", "model_n"],
        [
            ("expectation", mean, quad.kind, quad.n, model.n),
            ("variance", var, quad.kind, quad.n, model.n),
        ],
    )
    write_csv(
        out / "cdf.csv",
        ["node", "probability"],
        list(zip(curve.nodes.tolist(), curve.probs.tolist())),
    )
    if settings["compare"]:
        methods = [m.strip() for m in str(settings["compare"]).split(",") if m.strip()]
        unknown = set(methods) - {"mc", "qmc"}
        if unknown:
            raise UsageError(f"unknown comparison methods: {sorted(unknown)}")
        oracle = _rebuild_oracle(model.oracle_info)
        n_calls = model.n
        compare_rows = [("surrogate", n_calls, mean)]
        for method in methods:
            if method == "mc":
                X = np.random.default_rng([int(settings["seed"]), 0x3C]).random(
                    (n_calls, model.d)
                )
            else:
                X = halton_sequence(model.d, n_calls)
            compare_rows.append((method, n_calls, float(oracle.evaluate_batch(X)[0].mean())))
        write_csv(
            out / "compare.csv",
            ["method", "n_oracle_calls", "expectation"],
            compare_rows,
        )
    print(f"stats: expectation={mean:.10g} variance={var:.10g} -> {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _make_parser()
    try:
        args = parser.parse_args(argv)
        handler = {"build": cmd_build, "converge": cmd_converge, "stats": cmd_stats}[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (OSError, InvalidModelFile, InvalidNetworkFile) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SimplexUQError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
