"""Command-line client of the percolab service.

Every subcommand resolves its inputs (files become their contents), posts
one request to the service, and emits the result as an artifact with the
run manifest embedded.  By default the service runs in-process over an ASGI
transport; ``--server URL`` points the same client at a remote instance.

Exit codes: 0 on success, 1 when a run fails an assertion or a verify suite
reports failures, 2 on usage or precondition errors.

Output: with ``--out PATH`` the artifact is written there (a ``.csv`` suffix
selects the CSV table layout for sweep results, anything else the JSON
layout) and a one-line status JSON goes to stdout; without ``--out`` the
full JSON artifact is printed.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
from pathlib import Path
from typing import Any, Optional

import httpx

from .manifest import RunManifest, write_csv_artifact, write_json_artifact

BASE_URL = "http://percolab.local"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

_USAGE_STATUSES = (400, 404, 422)


class UsageError(Exception):
    """Bad inputs detected client-side; maps to exit code 2."""


def _default_seed() -> int:
    raw = os.environ.get("PERCOLAB_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise UsageError(f"PERCOLAB_SEED must be an integer, got {raw!r}") from exc


def _default_workers() -> int:
    return os.cpu_count() or 1


def _load_json_arg(raw: str, flag: str) -> Any:
    """A JSON literal, or the path of a JSON file."""
    text = raw.strip()
    if not text.startswith(("{", "[")):
        path = Path(raw)
        if not path.exists():
            raise UsageError(f"{flag}: no such file: {raw}")
        text = path.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{flag}: invalid JSON: {exc}") from exc


def _read_text(raw: str, flag: str) -> str:
    path = Path(raw)
    if not path.exists():
        raise UsageError(f"{flag}: no such file: {raw}")
    return path.read_text(encoding="utf-8")


def _int_list(raw: str) -> list[int]:
    try:
        return [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {raw!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="percolab",
        description="desk-scale percolation connectivity laboratory",
    )
    parser.add_argument(
        "--server", default=None,
        help="base URL of a running service (default: in-process)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--out", default=None, help="artifact path (.csv or .json)")
        return cmd

    def add_graph_flags(cmd: argparse.ArgumentParser) -> None:
        cmd.add_argument("--dim", type=int, default=None)
        cmd.add_argument("--radius", type=int, default=None)
        cmd.add_argument("--edges", default=None, help="edge-list text file")

    cmd = add("sample", "sample one configuration, optionally with its tree")
    add_graph_flags(cmd)
    cmd.add_argument("--p", type=float, default=0.5)
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--marked", default=None,
                     help="JSON list of marked points (conditions the sample)")
    cmd.add_argument("--emit-trees", action="store_true")

    cmd = add("trees", "enumerate leaf-labeled binary shapes")
    cmd.add_argument("--k", type=int, required=True)
    cmd.add_argument("--emit", choices=["json", "newick"], default="json")

    cmd = add("val", "diagram family valuation sweep")
    cmd.add_argument("--family", choices=["single-edge", "star", "cycle"],
                     required=True)
    cmd.add_argument("--n", type=_int_list, required=True,
                     help="comma-separated separations, e.g. 4,8,16")
    cmd.add_argument("--d", type=int, default=7)
    cmd.add_argument("--legs", type=int, default=3)
    cmd.add_argument("--L", type=int, default=None)
    cmd.add_argument("--method", choices=["auto", "exact-sum", "importance-mc"],
                     default="auto")
    cmd.add_argument("--samples", type=int, default=400_000)
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--workers", type=int, default=None)
    cmd.add_argument("--expect-slope", type=float, default=None)
    cmd.add_argument("--slope-tol", type=float, default=0.5)

    cmd = add("conv-check", "truncated convolution ratio battery")
    cmd.add_argument("--d", type=int, default=5)
    cmd.add_argument("--a", type=float, default=2.0)
    cmd.add_argument("--b", type=float, default=2.0)
    cmd.add_argument("--variant", choices=["std", "log", "triple"], default="std")
    cmd.add_argument("--pairs", default=None,
                     help="JSON battery [[x, y(, w)], ...]; default: seeded")
    cmd.add_argument("--n-pairs", type=int, default=30)
    cmd.add_argument("--scale", type=int, default=8)
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--L", type=int, default=None)
    cmd.add_argument("--spread-tol", type=float, default=3.0)

    cmd = add("one-loop", "one-loop diagram sweep with slope fit")
    cmd.add_argument("--d", type=int, default=7)
    cmd.add_argument("--n", type=_int_list, required=True)
    cmd.add_argument("--sep-mult", type=int, default=3)
    cmd.add_argument("--L-mult", type=int, default=2)
    cmd.add_argument("--samples", type=int, default=1_500_000)
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--workers", type=int, default=None)
    cmd.add_argument("--expect-slope", type=float, default=None)
    cmd.add_argument("--slope-tol", type=float, default=0.5)

    cmd = add("fit", "least-squares slope of log value against log n")
    cmd.add_argument("--pairs", default=None, help="JSON [[n, value], ...]")
    cmd.add_argument("--from-csv", default=None,
                     help="read pairs from a CSV artifact")
    cmd.add_argument("--value-col", default="value",
                     help="value column when reading a CSV artifact")

    cmd = add("integral", "continuum tree integral estimate")
    cmd.add_argument("--tree", required=True, help="shape in newick text")
    cmd.add_argument("--points", required=True, help="JSON leaf positions")
    cmd.add_argument("--d", type=int, default=7)
    cmd.add_argument("--samples", type=int, default=400_000)
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--workers", type=int, default=None)
    cmd.add_argument("--r-mix", type=float, default=None)

    cmd = add("predict", "assembled k-point limit constant")
    cmd.add_argument("--k", type=int, required=True)
    cmd.add_argument("--y", required=True, help="JSON profile points")
    cmd.add_argument("--inputs", required=True,
                     help="JSON with alpha, p_c, rho, d")
    cmd.add_argument("--samples", type=int, default=400_000)
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--workers", type=int, default=None)

    cmd = add("tau", "Monte Carlo k-point connection probability")
    add_graph_flags(cmd)
    cmd.add_argument("--points", required=True, help="JSON marked points")
    cmd.add_argument("--p", type=float, required=True)
    cmd.add_argument("--trials", type=int, required=True)
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--workers", type=int, default=None)

    cmd = add("rho", "truncated nonintersection proxy estimate")
    cmd.add_argument("--p", type=float, required=True)
    cmd.add_argument("--R", type=int, required=True)
    cmd.add_argument("--M", type=int, required=True)
    cmd.add_argument("--trials", type=int, required=True)
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--dim", type=int, default=3)
    cmd.add_argument("--radius", type=int, default=4)
    cmd.add_argument("--max-attempts", type=int, default=None)

    cmd = add("bubble", "double-connection partner count proxy estimate")
    cmd.add_argument("--p", type=float, required=True)
    cmd.add_argument("--R", type=int, required=True)
    cmd.add_argument("--trials", type=int, required=True)
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--dim", type=int, default=2)
    cmd.add_argument("--radius", type=int, default=3)
    cmd.add_argument("--sup-radius", type=int, default=None)
    cmd.add_argument("--workers", type=int, default=None)
    cmd.add_argument("--max-attempts", type=int, default=None)

    cmd = add("probe", "rescaled k-point sequence exploration")
    cmd.add_argument("--k", type=int, required=True)
    cmd.add_argument("--y", required=True, help="JSON direction profile")
    cmd.add_argument("--n", type=_int_list, required=True)
    cmd.add_argument("--d", type=int, default=3)
    cmd.add_argument("--p", type=float, default=0.2)
    cmd.add_argument("--trials", type=int, default=1000)
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--workers", type=int, default=None)

    cmd = add("verify", "run a verification suite")
    cmd.add_argument("suite", help="switching | bubble-switch | bk | "
                                   "tree-bound | pivotal-order | witness")
    cmd.add_argument("--params", default=None,
                     help="JSON overrides for the suite battery sizes")

    return parser


def _payload(args: argparse.Namespace) -> dict[str, Any]:
    command = args.command
    if command == "sample":
        payload: dict[str, Any] = {
            "dim": args.dim,
            "radius": args.radius,
            "edges": _read_text(args.edges, "--edges") if args.edges else None,
            "p": args.p,
            "seed": args.seed if args.seed is not None else _default_seed(),
            "emit_trees": args.emit_trees,
        }
        if args.marked is not None:
            payload["marked"] = _load_json_arg(args.marked, "--marked")
        return payload
    if command == "trees":
        return {"k": args.k, "emit": args.emit}
    if command == "val":
        return {
            "family": args.family, "n": args.n, "d": args.d,
            "legs": args.legs, "L": args.L, "method": args.method,
            "samples": args.samples,
            "seed": args.seed if args.seed is not None else _default_seed(),
            "workers": args.workers if args.workers is not None else _default_workers(),
            "expect_slope": args.expect_slope, "slope_tol": args.slope_tol,
        }
    if command == "conv-check":
        payload = {
            "d": args.d, "a": args.a, "b": args.b, "variant": args.variant,
            "n_pairs": args.n_pairs, "scale": args.scale,
            "seed": args.seed if args.seed is not None else _default_seed(),
            "L": args.L, "spread_tol": args.spread_tol,
        }
        if args.pairs is not None:
            payload["pairs"] = _load_json_arg(args.pairs, "--pairs")
        return payload
    if command == "one-loop":
        return {
            "d": args.d, "n": args.n, "sep_mult": args.sep_mult,
            "L_mult": args.L_mult, "samples": args.samples,
            "seed": args.seed if args.seed is not None else _default_seed(),
            "workers": args.workers if args.workers is not None else _default_workers(),
            "expect_slope": args.expect_slope, "slope_tol": args.slope_tol,
        }
    if command == "fit":
        if (args.pairs is None) == (args.from_csv is None):
            raise UsageError("fit needs exactly one of --pairs or --from-csv")
        if args.pairs is not None:
            pairs = _load_json_arg(args.pairs, "--pairs")
        else:
            from .manifest import read_csv_artifact

            _, header, rows = read_csv_artifact(args.from_csv)
            for col in ("n", args.value_col):
                if col not in header:
                    raise UsageError(f"CSV artifact has no column {col!r}")
            n_at = header.index("n")
            v_at = header.index(args.value_col)
            pairs = [[float(row[n_at]), float(row[v_at])] for row in rows]
        return {"pairs": pairs}
    if command == "integral":
        return {
            "tree": args.tree,
            "points": _load_json_arg(args.points, "--points"),
            "d": args.d, "samples": args.samples,
            "seed": args.seed if args.seed is not None else _default_seed(),
            "workers": args.workers if args.workers is not None else _default_workers(),
            "r_mix": args.r_mix,
        }
    if command == "predict":
        return {
            "k": args.k,
            "y": _load_json_arg(args.y, "--y"),
            "inputs": _load_json_arg(args.inputs, "--inputs"),
            "samples": args.samples,
            "seed": args.seed if args.seed is not None else _default_seed(),
            "workers": args.workers if args.workers is not None else _default_workers(),
        }
    if command == "tau":
        return {
            "points": _load_json_arg(args.points, "--points"),
            "p": args.p, "trials": args.trials,
            "seed": args.seed if args.seed is not None else _default_seed(),
            "dim": args.dim, "radius": args.radius,
            "edges": _read_text(args.edges, "--edges") if args.edges else None,
            "workers": args.workers if args.workers is not None else _default_workers(),
        }
    if command == "rho":
        payload = {
            "p": args.p, "R": args.R, "M": args.M, "trials": args.trials,
            "seed": args.seed if args.seed is not None else _default_seed(),
            "dim": args.dim, "radius": args.radius,
        }
        if args.max_attempts is not None:
            payload["max_attempts"] = args.max_attempts
        return payload
    if command == "bubble":
        payload = {
            "p": args.p, "R": args.R, "trials": args.trials,
            "seed": args.seed if args.seed is not None else _default_seed(),
            "dim": args.dim, "radius": args.radius,
            "sup_radius": args.sup_radius,
            "workers": args.workers if args.workers is not None else _default_workers(),
        }
        if args.max_attempts is not None:
            payload["max_attempts"] = args.max_attempts
        return payload
    if command == "probe":
        return {
            "k": args.k,
            "y": _load_json_arg(args.y, "--y"),
            "n": args.n, "d": args.d, "p": args.p, "trials": args.trials,
            "seed": args.seed if args.seed is not None else _default_seed(),
            "workers": args.workers if args.workers is not None else _default_workers(),
        }
    if command == "verify":
        params = _load_json_arg(args.params, "--params") if args.params else {}
        return {"suite": args.suite, "params": params}
    raise UsageError(f"unknown command {command!r}")


def _post(server: Optional[str], path: str, payload: dict[str, Any]) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server.rstrip("/"), timeout=None) as client:
            return client.post(path, json=payload)

    from .service import create_app

    async def _go() -> httpx.Response:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url=BASE_URL, timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(_go())


def run_manifest(manifest: RunManifest, server: Optional[str] = None) -> Any:
    """Re-execute a manifest's request; returns the fresh result payload."""
    response = _post(server, f"/v1/{manifest.command}", manifest.params)
    response.raise_for_status()
    return response.json()


def _emit(args: argparse.Namespace, manifest: RunManifest, result: Any) -> None:
    from .manifest import artifact_dict

    if not args.out:
        print(json.dumps(artifact_dict(manifest, result), indent=2))
        return
    out = Path(args.out)
    is_table = isinstance(result, dict) and "rows" in result and "header" in result
    if out.suffix == ".csv":
        if not is_table:
            raise UsageError(f"{args.command} results have no CSV table layout")
        write_csv_artifact(out, manifest, result["header"], result["rows"])
    else:
        write_json_artifact(out, manifest, result)
    status: dict[str, Any] = {"out": str(out)}
    if is_table:
        status["summary"] = result["summary"]
    if args.command == "verify" and isinstance(result, dict):
        status["passed"] = result.get("passed")
    print(json.dumps(status))


def run(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        payload = _payload(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    manifest = RunManifest(
        command=args.command, params=payload, seed=int(payload.get("seed", 0))
    )
    try:
        response = _post(args.server, f"/v1/{args.command}", payload)
    except httpx.HTTPError as exc:
        print(f"error: service unreachable: {exc}", file=sys.stderr)
        return EXIT_FAILED

    if response.status_code != 200:
        try:
            detail = response.json().get("detail")
        except json.JSONDecodeError:
            detail = response.text
        print(f"error ({response.status_code}): {json.dumps(detail)}",
              file=sys.stderr)
        return (EXIT_USAGE if response.status_code in _USAGE_STATUSES
                else EXIT_FAILED)

    result = response.json()
    manifest = manifest.finish()
    try:
        _emit(args, manifest, result)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "verify" and not result.get("passed", False):
        return EXIT_FAILED
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
