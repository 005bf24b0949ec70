"""Operational surface: the resumable monitor state machine and the command
line interface.

The monitor wraps the sequential decision rule as an explicit state machine
so that surveillance can stop, persist its state as versioned JSON (with an
embedded design hash to prevent resuming under a different design), and pick
up exactly where it left off.  Events arriving after closure are rejected,
not ignored.

Exit codes: 0 success, 2 domain errors (infeasible parameters, bad inputs),
3 I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass
from typing import Optional, TextIO

import numpy as np

from . import asymptotic_engine, design as design_mod, exact_engine, inference
from .design import BivariateDesign, combine
from .errors import BivarseqError, MonitorStateError, SequencingError
from .exact_engine import LatticeCounts
from .params import JointBernoulliParams, make_params
from .simulator import Event, monte_carlo, run_test, sample_stream

__all__ = ["MonitorState", "monitor_step", "state_save", "state_load", "main"]

_STATE_VERSION = 1
_OPEN = "open"
_CLOSED_BY_BOUNDARY = {"x": "rejected_x", "y": "rejected_y", "corner": "rejected_corner"}


@dataclass(frozen=True)
class MonitorState:
    design: BivariateDesign
    counts: LatticeCounts
    last_seq: int
    status: str

    @classmethod
    def fresh(cls, design: BivariateDesign) -> "MonitorState":
        return cls(design=design, counts=LatticeCounts(0, 0, 0, 0),
                   last_seq=0, status=_OPEN)

    @property
    def s_x(self) -> int:
        return self.counts.s_x

    @property
    def s_y(self) -> int:
        return self.counts.s_y


def monitor_step(state: MonitorState, event: Event) -> tuple[MonitorState, dict]:
    """Feed one event through the stopping rule.

    Returns the successor state and an append-only decision record.  The
    record carries the running counts and thresholds, and a full post-test
    estimate once the state leaves ``open``.
    """
    if state.status != _OPEN:
        raise MonitorStateError(
            f"monitor is closed (status={state.status}); further events are invalid")
    if event.seq != state.last_seq + 1:
        raise SequencingError(
            f"expected seq {state.last_seq + 1}, got {event.seq}")

    c = state.counts
    counts = LatticeCounts(
        n00=c.n00 + (1 - event.x) * (1 - event.y),
        n10=c.n10 + event.x * (1 - event.y),
        n01=c.n01 + (1 - event.x) * event.y,
        n11=c.n11 + event.x * event.y,
    )
    d = state.design
    hit_x = counts.s_x > d.k_x
    hit_y = counts.s_y > d.k_y
    if hit_x or hit_y:
        boundary = "corner" if (hit_x and hit_y) else ("x" if hit_x else "y")
        status = _CLOSED_BY_BOUNDARY[boundary]
        decision = "reject"
    elif event.seq >= d.n_star:
        status = "exhausted"
        decision = "not_reject"
    else:
        status = _OPEN
        decision = "continue"
    new_state = MonitorState(design=d, counts=counts, last_seq=event.seq,
                             status=status)
    record = {
        "seq": event.seq,
        "s_x": counts.s_x,
        "s_y": counts.s_y,
        "k_x": d.k_x,
        "k_y": d.k_y,
        "n_star": d.n_star,
        "status": status,
        "decision": decision,
    }
    if status != _OPEN:
        record["m_star"] = event.seq
        record["estimate"] = inference.post_test_estimate(counts, event.seq).to_dict()
    return new_state, record


def _design_hash(design: BivariateDesign) -> str:
    payload = json.dumps(design.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


def state_save(state: MonitorState) -> dict:
    """Lossless, versioned JSON document for a monitor state."""
    return {
        "version": _STATE_VERSION,
        "design": state.design.to_dict(),
        "design_hash": _design_hash(state.design),
        "counts": {"n00": state.counts.n00, "n10": state.counts.n10,
                   "n01": state.counts.n01, "n11": state.counts.n11},
        "last_seq": state.last_seq,
        "status": state.status,
    }


def state_load(doc: dict) -> MonitorState:
    """Parse and validate a saved state document."""
    try:
        if doc["version"] != _STATE_VERSION:
            raise MonitorStateError(f"unsupported state version {doc['version']!r}")
        design = BivariateDesign.from_dict(doc["design"])
        if doc["design_hash"] != _design_hash(design):
            raise MonitorStateError("design hash mismatch: state was saved "
                                    "under a different design")
        counts = LatticeCounts(**doc["counts"])
        state = MonitorState(design=design, counts=counts,
                             last_seq=int(doc["last_seq"]),
                             status=str(doc["status"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MonitorStateError):
            raise
        raise MonitorStateError(f"corrupt state document: {exc}") from exc
    _validate_state(state)
    return state


def _validate_state(state: MonitorState) -> None:
    d, c = state.design, state.counts
    if c.total != state.last_seq:
        raise MonitorStateError(
            f"counts total {c.total} does not match last_seq {state.last_seq}")
    if c.s_x > d.k_x + 1 or c.s_y > d.k_y + 1:
        raise MonitorStateError("counts exceed a reachable boundary state")
    if state.last_seq > d.n_star:
        raise MonitorStateError("last_seq exceeds the curtailment size")
    hit_x, hit_y = c.s_x > d.k_x, c.s_y > d.k_y
    expected = _OPEN
    if hit_x or hit_y:
        expected = _CLOSED_BY_BOUNDARY["corner" if (hit_x and hit_y)
                                       else ("x" if hit_x else "y")]
    elif state.last_seq >= d.n_star:
        expected = "exhausted"
    if state.status != expected:
        raise MonitorStateError(
            f"status {state.status!r} inconsistent with counts "
            f"(expected {expected!r})")


# ----------------------------------------------------------------------
# command line interface
# ----------------------------------------------------------------------

def _emit(result, fmt: str, out: TextIO) -> None:
    if fmt == "json":
        json.dump(result, out, indent=2)
        out.write("\n")
        return
    # csv: tables pass through, scalar dicts flatten to key,value rows
    writer = csv.writer(out)
    if isinstance(result, dict) and "rows" in result and "columns" in result:
        writer.writerow(result["columns"])
        writer.writerows(result["rows"])
    else:
        for key, value in _flatten(result):
            writer.writerow([key, value])


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}{k}.")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}{i}.")
    else:
        yield prefix.rstrip("."), obj


def _load_design(path: str) -> BivariateDesign:
    with open(path) as fh:
        return BivariateDesign.from_dict(json.load(fh))


def _params_from_args(args) -> JointBernoulliParams:
    """Margins and correlation from flags, or from a flat JSON file
    {"theta_x": ..., "theta_y": ..., "rho": ...} given via --params."""
    if getattr(args, "params", None):
        with open(args.params) as fh:
            doc = json.load(fh)
        return make_params(float(doc["theta_x"]), float(doc["theta_y"]),
                           float(doc.get("rho", 0.0)))
    if args.theta_x is None or args.theta_y is None:
        raise ValueError("give --theta-x and --theta-y, or --params FILE")
    return make_params(args.theta_x, args.theta_y, args.rho)


def _cmd_design(args) -> dict:
    alpha_tilde = args.alpha / 2.0
    method = "exact-refine" if args.exact_refine else "approx"
    x = design_mod.design_marginal(alpha_tilde, args.beta, args.theta_x0,
                                   args.theta_x1, method=method,
                                   rounding=args.rounding)
    y = design_mod.design_marginal(alpha_tilde, args.beta, args.theta_y0,
                                   args.theta_y1, method=method,
                                   rounding=args.rounding)
    return combine(x, y).to_dict()


def _cmd_power(args) -> dict:
    design = _load_design(args.design)
    params = _params_from_args(args)
    if args.method == "exact":
        value = exact_engine.power_exact(design, params)
    elif args.method == "dp":
        value = exact_engine.lattice_forward_dp(design, params).rejection_mass
    elif args.method == "gut":
        value = asymptotic_engine.power_asymptotic(design, params, form="gut")
    else:
        value = asymptotic_engine.power_asymptotic(design, params,
                                                   form="curtailed-normal")
    return {"power": value, "method": args.method}


def _cmd_asn(args) -> dict:
    design = _load_design(args.design)
    params = _params_from_args(args)
    if args.method == "exact":
        value = exact_engine.asn_exact(design, params)
    elif args.method == "dp":
        pmf = exact_engine.lattice_forward_dp(design, params)
        value = design.n_star - float(((design.n_star - pmf.support) * pmf.pmf).sum())
    else:
        pmf = asymptotic_engine.stopping_pmf_asymptotic(design, params)
        value = design.n_star - float(((design.n_star - pmf.support) * pmf.pmf).sum())
    lower, upper = exact_engine.asn_bounds(design, params)
    return {"asn": value, "method": args.method, "lower": lower, "upper": upper}


def _pmf_for(args):
    design = _load_design(args.design)
    params = _params_from_args(args)
    if args.method == "exact":
        return exact_engine.stopping_pmf_exact(design, params)
    if args.method == "dp":
        return exact_engine.lattice_forward_dp(design, params)
    return asymptotic_engine.stopping_pmf_asymptotic(design, params)


def _cmd_pmf(args) -> dict:
    pmf = _pmf_for(args)
    rows = [[int(m), float(px), float(py), float(pc)]
            for m, px, py, pc in zip(pmf.support, pmf.mass_x, pmf.mass_y,
                                     pmf.mass_corner)]
    return {"columns": ["m", "p_hit_x", "p_hit_y", "p_corner"], "rows": rows,
            "continue_mass": pmf.continue_mass}


def _cmd_export_grid(args) -> dict:
    design = _load_design(args.design)
    txs = np.linspace(args.theta_x_min, args.theta_x_max, args.steps)
    tys = np.linspace(args.theta_y_min, args.theta_y_max, args.steps)
    rows = []
    for tx in txs:
        for ty in tys:
            try:
                params = make_params(float(tx), float(ty), args.rho)
            except BivarseqError:
                continue
            if args.method == "exact":
                p = exact_engine.power_exact(design, params)
            else:
                p = asymptotic_engine.power_asymptotic(design, params)
            rows.append([float(tx), float(ty), float(p)])
    return {"columns": ["theta_x", "theta_y", "power"], "rows": rows}


def _cmd_simulate(args) -> dict:
    design = _load_design(args.design)
    params = _params_from_args(args)
    summary = monte_carlo(design, params, reps=args.reps, seed=args.seed,
                          level=args.level, workers=args.workers)
    if args.emit_streams:
        import os
        os.makedirs(args.emit_streams, exist_ok=True)
        for r in range(min(args.reps, args.max_stream_files)):
            events = list(sample_stream(params, args.seed, design.n_star, stream=r))
            outcome = run_test(design, iter(events))
            path = f"{args.emit_streams}/stream_{r:05d}.jsonl"
            with open(path, "w") as fh:
                for ev in events[: outcome.m_star]:
                    fh.write(json.dumps({"seq": ev.seq, "x": ev.x, "y": ev.y}) + "\n")
    return summary.to_dict()


def _cmd_analyze(args) -> dict:
    if args.table:
        with open(args.table) as fh:
            doc = json.load(fh)
        counts = LatticeCounts(n00=doc["n00"], n10=doc["n10"],
                               n01=doc["n01"], n11=doc["n11"])
    else:
        n00, n10, n01, n11 = args.counts
        counts = LatticeCounts(n00=n00, n10=n10, n01=n01, n11=n11)
    m_star = args.m_star if args.m_star is not None else counts.total
    est = inference.post_test_estimate(counts, m_star)
    result = {"estimate": est.to_dict()}
    if not est.singular:
        region = inference.confidence_region(est, args.level)
        result["region"] = region.to_dict()
        result["relative_risk"] = inference.relative_risk(est, args.level).to_dict()
        result["inverse_relative_risk"] = \
            inference.inverse_relative_risk(est, args.level).to_dict()
        if args.emit_ellipse_points:
            pts = inference.ellipse_points(est, args.level,
                                           args.emit_ellipse_points)
            with open(args.ellipse_file, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["theta_x", "theta_y"])
                writer.writerows(pts.tolist())
            result["ellipse_file"] = args.ellipse_file
    else:
        region = inference.confidence_region(est, args.level)
        result["region"] = region.to_dict()
    return result


def _cmd_monitor(args, out: TextIO) -> int:
    design = _load_design(args.design)
    try:
        with open(args.state) as fh:
            state = state_load(json.load(fh))
        if _design_hash(state.design) != _design_hash(design):
            raise MonitorStateError("state file belongs to a different design")
    except FileNotFoundError:
        state = MonitorState.fresh(design)

    source = open(args.input) if args.input else sys.stdin
    try:
        for line in source:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            event = Event(seq=int(doc["seq"]), x=int(doc["x"]), y=int(doc["y"]))
            state, record = monitor_step(state, event)
            out.write(json.dumps(record) + "\n")
            if state.status != _OPEN:
                break
    finally:
        if args.input:
            source.close()
    with open(args.state, "w") as fh:
        json.dump(state_save(state), fh, indent=2)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bivarseq",
        description="Curtailed sequential testing for two correlated binary "
                    "side effects: design, operating characteristics, "
                    "simulation, monitoring, post-detection inference.")
    parser.add_argument("--output", choices=("json", "csv"), default="json",
                        help="output format for results")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress informational messages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="size the pooled two-margin design")
    p.add_argument("--alpha", type=float, required=True,
                   help="overall type I level; each margin gets alpha/2")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--theta-x0", type=float, required=True)
    p.add_argument("--theta-x1", type=float, required=True)
    p.add_argument("--theta-y0", type=float, required=True)
    p.add_argument("--theta-y1", type=float, required=True)
    p.add_argument("--rounding", choices=("nearest", "floor"), default="nearest")
    p.add_argument("--exact-refine", action="store_true",
                   help="refine (N, k) against the exact binomial constraints")

    def add_param_args(q, method_choices):
        q.add_argument("--design", required=True, help="design JSON file")
        q.add_argument("--theta-x", type=float, default=None)
        q.add_argument("--theta-y", type=float, default=None)
        q.add_argument("--rho", type=float, default=0.0)
        q.add_argument("--params", default=None,
                       help="flat JSON file {theta_x, theta_y, rho}; "
                            "alternative to the three flags")
        q.add_argument("--method", choices=method_choices, default="exact")

    p = sub.add_parser("power", help="rejection probability at given margins")
    add_param_args(p, ("exact", "asymptotic", "gut", "dp"))

    p = sub.add_parser("asn", help="expected terminal sample size and bounds")
    add_param_args(p, ("exact", "asymptotic", "dp"))

    p = sub.add_parser("pmf", help="stopping-time distribution by boundary")
    add_param_args(p, ("exact", "asymptotic", "dp"))

    p = sub.add_parser("export-grid", help="power surface over a margin grid")
    p.add_argument("--design", required=True)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--theta-x-min", type=float, required=True)
    p.add_argument("--theta-x-max", type=float, required=True)
    p.add_argument("--theta-y-min", type=float, required=True)
    p.add_argument("--theta-y-max", type=float, required=True)
    p.add_argument("--steps", type=int, default=25)
    p.add_argument("--method", choices=("exact", "asymptotic"), default="exact")

    p = sub.add_parser("simulate", help="Monte Carlo operating characteristics")
    p.add_argument("--design", required=True)
    p.add_argument("--theta-x", type=float, default=None)
    p.add_argument("--theta-y", type=float, default=None)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--params", default=None,
                   help="flat JSON file {theta_x, theta_y, rho}")
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--emit-streams", default=None,
                   help="directory for raw JSONL event streams")
    p.add_argument("--max-stream-files", type=int, default=100)

    p = sub.add_parser("analyze", help="post-detection estimates and intervals")
    p.add_argument("--counts", type=int, nargs=4, metavar=("N00", "N10", "N01", "N11"))
    p.add_argument("--table", help="JSON file with n00/n10/n01/n11")
    p.add_argument("--m-star", type=int, default=None)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--emit-ellipse-points", type=int, default=0, metavar="N")
    p.add_argument("--ellipse-file", default="ellipse_points.csv")

    p = sub.add_parser("monitor", help="resumable stop/continue monitoring")
    p.add_argument("--design", required=True)
    p.add_argument("--state", required=True, help="state JSON file (created if absent)")
    p.add_argument("--input", default=None,
                   help="JSONL event file; default reads standard input")
    return parser


_COMMANDS = {
    "design": _cmd_design,
    "power": _cmd_power,
    "asn": _cmd_asn,
    "pmf": _cmd_pmf,
    "export-grid": _cmd_export_grid,
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
}


def main(argv: Optional[list[str]] = None, out: TextIO = None) -> int:
    out = out or sys.stdout
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "analyze" and not (args.table or args.counts):
        parser.error("analyze requires --counts or --table")
    try:
        if args.command == "monitor":
            return _cmd_monitor(args, out)
        result = _COMMANDS[args.command](args)
        _emit(result, args.output, out)
        return 0
    except (BivarseqError, ValueError, ZeroDivisionError, ArithmeticError) as exc:
        if not args.quiet:
            print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        if not args.quiet:
            print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
