"""Command-line front end.

Exit codes: 0 ok, 2 invalid parameters, 3 I/O failure, 4 internal invariant
breach (keys disagreeing).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from .attack import capture, recover, security_experiment
from .protocol import KeyMismatch, encode_message, handshake, run_all_pairs, table_one_row
from .schemes import (
    Deployment,
    InvalidParams,
    PublicMatrix,
    Scheme,
    SchemeParams,
    Violation,
    authority_from_json,
    authority_to_json,
    check_params,
    deal,
    setup,
    share_from_json,
    share_to_json,
)

EXIT_OK, EXIT_PARAMS, EXIT_IO, EXIT_INTERNAL = 0, 2, 3, 4
AUTHORITY_FILE = "authority.json"

log = logging.getLogger("matrixkpd")


class UsageError(Exception):
    pass


def share_path(root: Path, node_id: int) -> Path:
    return root / f"share_{node_id}.json"


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _read_json(path: Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def params_from_args(args: argparse.Namespace) -> SchemeParams:
    return SchemeParams(
        Scheme(args.scheme), args.q, args.lam, args.n, s=args.s, seed=args.seed,
        allow_oversize=args.allow_oversize,
    )


def save_deployment(dep: Deployment, root: Path) -> list[Path]:
    root.mkdir(parents=True, exist_ok=True)
    written = [root / AUTHORITY_FILE]
    written[0].write_text(_dump(authority_to_json(dep)), encoding="utf-8")
    for share in dep.shares:
        path = share_path(root, share.node_id)
        path.write_text(_dump(share_to_json(share, dep.params)), encoding="utf-8")
        written.append(path)
    return written


def load_deployment(root: Path) -> Deployment:
    """Authority file plus every share file, cross-checked against each other."""
    params, secret = authority_from_json(_read_json(root / AUTHORITY_FILE))
    shares = []
    for i in range(params.n):
        sp, share = share_from_json(_read_json(share_path(root, i)))
        if (sp.kind, sp.q, sp.lam, sp.n) != (params.kind, params.q, params.lam, params.n) or share.node_id != i:
            raise ValueError(f"{share_path(root, i)} does not belong to this deployment")
        shares.append(share)
    public = PublicMatrix.from_payloads(params, [s.public_payload for s in shares])
    dep = deal(params, secret, public)
    if dep.shares != tuple(shares):
        raise ValueError("share files are inconsistent with the authority's D")
    return dep


def _csv(rows: list[dict[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: str(v).lower() if isinstance(v, bool) else v for k, v in row.items()})
    return buf.getvalue()


def _emit(args: argparse.Namespace, obj: dict[str, Any], rows: list[dict[str, Any]]) -> None:
    text = _csv(rows) if args.format == "csv" else _dump(obj)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- subcommands --------------------------------------------------------------

def cmd_setup(args: argparse.Namespace) -> int:
    params = params_from_args(args)
    dep = setup(params)
    root = Path(args.out or "deployment")
    written = save_deployment(dep, root)
    log.info("wrote %d files to %s", len(written), root)
    print(_dump({"scheme": params.kind.value, "n": params.n, "directory": str(root), "files": len(written)}), end="")
    return EXIT_OK


def cmd_handshake(args: argparse.Namespace) -> int:
    root = Path(args.dir)
    params_i, share_i = share_from_json(_read_json(share_path(root, args.i)))
    params_j, share_j = share_from_json(_read_json(share_path(root, args.j)))
    if params_i != params_j:
        raise ValueError("the two share files come from different deployments")
    params = params_i
    k_ij, meter = handshake(share_i, encode_message(share_j, params), params)
    k_ji, _ = handshake(share_j, encode_message(share_i, params), params)
    report = {
        "scheme": params.kind.value,
        "i": args.i,
        "j": args.j,
        "key_ij": str(k_ij),
        "key_ji": str(k_ji),
        "match": k_ij == k_ji,
        "mults": meter.mults,
        "comm_bits": meter.comm_bits,
        "memory_bits": meter.memory_bits,
    }
    _emit(args, report, [report])
    if k_ij != k_ji:
        raise KeyMismatch(args.i, args.j, k_ij, k_ji)
    return EXIT_OK


def _pairs_arg(text: str) -> str | int:
    if text == "all":
        return "all"
    if text.startswith("random:"):
        return int(text.split(":", 1)[1])
    raise UsageError(f"--pairs must be 'all' or 'random:K', got {text!r}")


def bench_report(params: SchemeParams, pairs: str | int) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """All three schemes at the same (q, lambda); or-ddhv gets N clamped to 2*lambda."""
    reports, table, timing = [], [], {}
    for kind in Scheme:
        n = min(params.n, 2 * params.lam) if kind is Scheme.OR_DDHV else params.n
        p = replace(params, kind=kind, n=n, s=params.s if kind is Scheme.DDHV else None)
        check_params(p)
        dep = setup(p)
        t0 = time.perf_counter()
        rep = run_all_pairs(dep, pairs)
        elapsed = time.perf_counter() - t0
        row = table_one_row(p)
        row["mults_per_key_measured"] = rep.to_json()["mults_per_key"]
        reports.append(rep.to_json())
        table.append(row)
        timing[kind.value] = elapsed / max(1, 2 * rep.pairs_tested)
    obj = {"reports": reports, "table": table, "timing_seconds_per_key": timing}
    rows = []
    for rep, row in zip(reports, table):
        rows.append({
            "scheme": rep["scheme"], "q": rep["q"], "lambda": rep["lambda"], "m": rep["m"], "n": rep["n"],
            "pairs_tested": rep["pairs_tested"], "all_keys_match": rep["all_keys_match"],
            "comm_elements": row["comm_elements"], "comm_bits": row["comm_bits"],
            "header_bits": rep["header_bits"], "mults_per_key": row["mults_per_key"],
            "mults_per_key_measured": row["mults_per_key_measured"],
            "memory_elements": row["memory_elements"], "memory_bits": row["memory_bits"],
            "model_memory_bits": "" if row["model_memory_bits"] is None else row["model_memory_bits"],
            "seconds_per_key": timing[rep["scheme"]],
        })
    return obj, rows


def cmd_bench(args: argparse.Namespace) -> int:
    obj, rows = bench_report(params_from_args(args), _pairs_arg(args.pairs))
    _emit(args, obj, rows)
    return EXIT_OK


def _compromise_arg(text: str, n: int) -> int | list[int]:
    """``K`` is a count; anything with a comma is an explicit id list."""
    if "," in text:
        ids = [int(x) for x in text.split(",") if x.strip()]
        bad = [i for i in ids if not 0 <= i < n]
        if bad or len(set(ids)) != len(ids):
            raise InvalidParams([Violation("compromise-ids", f"ids {ids} must be distinct and in [0, {n})")])
        return ids
    return int(text)


def cmd_attack(args: argparse.Namespace) -> int:
    if args.dir:
        dep = load_deployment(Path(args.dir))
    else:
        dep = setup(params_from_args(args))
    params = dep.params
    if args.compromise is None:
        raise UsageError("--compromise is required")
    target = _compromise_arg(args.compromise, params.n)
    fold = not args.unfolded
    if isinstance(target, list):
        res = recover(capture(dep, target), fold)
        obj = res.to_json(params, dep.secret)
        row = dict(obj, compromised=";".join(map(str, obj["compromised"])))
    else:
        stats = security_experiment(params, target, args.trials, dep=dep, fold_symmetry=fold)
        obj = stats.to_json()
        hist = ";".join(f"{k}:{v}" for k, v in obj["rank_histogram"].items())
        row = dict(obj, rank_histogram=hist)
    _emit(args, obj, [row])
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    default_seed = int(os.environ.get("MATRIXKPD_SEED", 42))

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scheme", choices=[s.value for s in Scheme], default=Scheme.OR_DDHV.value)
    common.add_argument("--q", type=int, default=65537, help="prime modulus below 2**31")
    common.add_argument("--lambda", dest="lam", type=int, default=64, help="security parameter")
    common.add_argument("--n", type=int, default=128, help="network size")
    common.add_argument("--s", type=int, default=None, help="Vandermonde base (ddhv); default primitive root")
    common.add_argument("--seed", type=int, default=default_seed, help="64-bit seed (env MATRIXKPD_SEED)")
    common.add_argument("--allow-oversize", action="store_true",
                        help="accept N > 2*lambda for or-ddhv (reported, not enforced)")
    common.add_argument("--format", choices=["json", "csv"], default="json")
    common.add_argument("--out", default=None, help="output file (setup: output directory)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="matrixkpd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("setup", parents=[common], help="generate authority and share files")
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("handshake", parents=[common], help="derive the key between two nodes")
    p.add_argument("i", type=int)
    p.add_argument("j", type=int)
    p.add_argument("--dir", default="deployment", help="deployment directory written by setup")
    p.set_defaults(func=cmd_handshake)

    p = sub.add_parser("bench", parents=[common], help="resource comparison across all schemes")
    p.add_argument("--pairs", default="all", help="'all' or 'random:K'")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("attack", parents=[common], help="node-capture recovery of the secret matrix")
    p.add_argument("--dir", default=None, help="deployment directory; omitted = build from flags")
    p.add_argument("--compromise", default=None, help="count K, or explicit ids 'i0,i1,...'")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--unfolded", action="store_true", help="treat d_kl and d_lk as separate unknowns")
    p.set_defaults(func=cmd_attack)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidParams as exc:
        print("invalid parameters:", file=sys.stderr)
        for v in exc.violations:
            print(f"  [{v.rule}] {v.message}", file=sys.stderr)
        return EXIT_PARAMS
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except KeyMismatch as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (OSError, ValueError, KeyError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
