"""Command-line front end.

Exit codes: 0 on success, 1 on input errors, 2 when a solver flags its result.
Reports are deterministic for a fixed configuration and seed.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    CapacityError,
    ChannelFormatError,
    channel_from_dict,
    channel_power,
    hull_family,
    load_channel,
    replacer_family,
)
from .conversion import conversion_report
from .divergence import channel_divergence, divergence_to_family, holevo_capacity
from .hypothesis import SCAN_COLUMNS, beta_channel, beta_family, stein_scan
from .robustness import robustness
from .suites import SUITES, run_suite

EXIT_OK, EXIT_INPUT, EXIT_FLAG = 0, 1, 2


class InputError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    inputs: dict = field(default_factory=dict)
    eps: float = 0.1
    alphas: tuple = ()
    n_max: int = 1
    tol: float = None
    seed: int = 0
    out: str = None
    fmt: str = "json"
    family: str = "replacer"
    suite: str = None

    def __post_init__(self):
        if self.tol is not None and not self.tol > 0:
            raise InputError("--tol must be positive")


# --- formatting -------------------------------------------------------------------


def _num(x):
    """Round to 12 significant digits for stable output."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if math.isinf(x) or math.isnan(x):
        return str(x)
    return float(f"{x:.12g}")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": _clean(obj.real.tolist()), "im": _clean(obj.imag.tolist())}
        return _clean(obj.tolist())
    if isinstance(obj, (float, int, np.floating, np.integer, np.bool_, bool)):
        return _num(obj)
    return obj


def render(report, fmt="json"):
    if fmt == "text":
        if "suites" in report:
            lines = [s["line"] for s in report["suites"]]
            lines.append("ALL PASS" if report["passed"] else "FAILURES")
            return "\n".join(lines) + "\n"
        # Scalar fields only; nested values are available in json.
        flat = _clean({k: v for k, v in report.items() if not isinstance(v, (dict, list))})
        return "".join(f"{k}: {_fmt_cell(flat[k])}\n" for k in sorted(flat))
    if fmt == "csv":
        rows = report.get("rows")
        if rows is None:
            rows = [{k: v for k, v in report.items() if not isinstance(v, (dict, list))}]
        cols = report.get("columns") or list(rows[0].keys())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt_cell(r.get(c)) for c in cols])
        return buf.getvalue()
    return json.dumps(_clean(report), indent=1, sort_keys=True) + "\n"


def _fmt_cell(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return "" if v is None else str(v)


# --- inputs -----------------------------------------------------------------------


def _load(path, what):
    if path is None:
        raise InputError(f"missing {what} channel file")
    return load_channel(path)


def load_family(spec, phi):
    """``replacer`` or ``hull:<file>`` (a JSON list of channels, or {"generators": [...]})."""
    if spec == "replacer":
        return replacer_family(phi.labels, phi.dim)
    if spec.startswith("hull:"):
        path = spec[5:]
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ChannelFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        except OSError as exc:
            raise ChannelFormatError(f"{path}: {exc.strerror}") from None
        gens = obj.get("generators") if isinstance(obj, dict) else obj
        if not isinstance(gens, list) or not gens:
            raise ChannelFormatError(f"{path}: expected a non-empty list of generator channels")
        chans = [channel_from_dict(g, source=f"{path}: generators[{i}]") for i, g in enumerate(gens)]
        F = hull_family(chans)
        if F.labels != phi.labels or F.dim != phi.dim:
            raise InputError(f"{path}: family shape does not match the channel")
        return F
    raise InputError(f"unknown family {spec!r}; use 'replacer' or 'hull:<file>'")


# --- commands ---------------------------------------------------------------------


def cmd_divergence(cfg):
    a = _load(cfg.inputs.get("a") or cfg.inputs.get("channel"), "--a")
    alpha = cfg.alphas[0] if cfg.alphas else None
    if cfg.inputs.get("b"):
        b = _load(cfg.inputs["b"], "--b")
        v = channel_divergence(a, b, alpha)
        rep = {"quantity": "D" if alpha is None else "D_alpha", "alpha": alpha, "value": v.value,
               "support_ok": v.support_ok, "argmax": v.meta.get("argmax")}
        return rep, False
    n = cfg.n_max
    pn = channel_power(a, n)
    Fn = load_family(cfg.family, a).power(n)
    v = divergence_to_family(pn, Fn, alpha=alpha)
    rep = {"quantity": "D_family" if alpha is None else "D_alpha_family", "alpha": alpha, "copies": n,
           "value": v.value, "per_copy": v.value / n, "lower": v.lower, "gap": v.gap, "flagged": v.flagged}
    return rep, bool(v.flagged)


def cmd_capacity(cfg):
    phi = _load(cfg.inputs.get("channel"), "--channel")
    tol = cfg.tol or 1e-9
    r = holevo_capacity(phi, tol=tol)
    rep = {"quantity": "holevo_capacity", "value": r.capacity, "upper": r.upper, "gap_bound": r.gap_bound,
           "optimizer_p": dict(zip(phi.labels, r.optimizer_p)), "iterations": r.iterations,
           "converged": r.converged}
    return rep, not r.converged


def cmd_beta(cfg):
    phi = _load(cfg.inputs.get("null") or cfg.inputs.get("channel"), "--null")
    n = cfg.n_max
    pn = channel_power(phi, n)
    if cfg.inputs.get("alt"):
        alt = channel_power(_load(cfg.inputs["alt"], "--alt"), n)
        r = beta_channel(pn, alt, cfg.eps)
        rep = {"quantity": "beta_channel", "eps": cfg.eps, "copies": n, "value": r.value, "lower": r.lower,
               "exponent": -math.log(r.value) / n if r.value > 0 else math.inf,
               "plan_p": dict(zip(r.plan.labels, r.plan.p))}
        return rep, False
    F = load_family(cfg.family, phi).power(n)
    fb = beta_family(pn, F, cfg.eps)
    c = fb.certificate
    rep = {"quantity": "beta_family", "eps": cfg.eps, "copies": n, "value": fb.value, "upper": c.upper,
           "lower": c.lower, "gap": c.gap, "flagged": c.flagged,
           "exponent": -math.log(fb.value) / n if fb.value > 0 else math.inf,
           "plan_p": dict(zip(c.plan.labels, c.plan.p))}
    return rep, bool(c.flagged)


def cmd_robustness(cfg):
    phi = _load(cfg.inputs.get("channel"), "--channel")
    n = cfg.n_max
    pn = channel_power(phi, n)
    F = load_family(cfg.family, phi).power(n)
    r = robustness(pn, F)
    rep = {"quantity": "generalized_robustness", "copies": n, "value": r.value, "lower": r.lower, "gap": r.gap,
           "log_one_plus": math.log1p(r.value), "flagged": r.flagged,
           "witness_free": r.witness_free.to_dict(), "witness_mix": r.witness_mix.to_dict()}
    return rep, bool(r.flagged)


def cmd_stein_scan(cfg):
    phi = _load(cfg.inputs.get("channel"), "--channel")
    if cfg.n_max > 4:
        raise InputError("--max-copies must be at most 4")
    F = load_family(cfg.family, phi)
    alphas = cfg.alphas or (1.01, 1.05, 1.1, 1.25, 1.5, 2.0, 3.0)
    rows = stein_scan(phi, F, cfg.eps, cfg.n_max, alpha_grid=alphas)
    table = [dict(zip(SCAN_COLUMNS, _row_values(r))) for r in rows]
    rep = {"quantity": "stein_scan", "eps": cfg.eps, "alphas": list(alphas), "columns": list(SCAN_COLUMNS),
           "rows": table}
    return rep, any(r.flagged for r in rows)


def _row_values(r):
    return [r.n, r.lower_exponent, r.upper_exponent, r.reference, r.beta_upper, r.beta_lower, r.minimax_gap, r.flagged]


def _workers():
    try:
        return max(1, int(os.environ.get("CQSTEIN_THREADS", "1")))
    except ValueError:
        raise InputError("CQSTEIN_THREADS must be an integer") from None


def cmd_verify(cfg):
    names = list(SUITES) if cfg.suite in (None, "all") else [cfg.suite]
    for s in names:
        if s not in SUITES:
            raise InputError(f"unknown suite {s!r}; choose from {', '.join(SUITES)}")
    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        results = list(pool.map(lambda s: run_suite(s, cfg.seed), names))
    rep = {"quantity": "verify", "seed": cfg.seed, "suites": [vars(r) | {"line": r.line()} for r in results],
           "passed": all(r.passed for r in results)}
    return rep, not rep["passed"]


def cmd_convert(cfg):
    a = _load(cfg.inputs.get("a"), "--a")
    b = _load(cfg.inputs.get("b"), "--b")
    Fa = load_family(cfg.family, a)
    Fb = load_family(cfg.inputs.get("family_out") or cfg.family, b)
    try:
        rep = conversion_report(a, b, Fa, Fb, cfg.eps, cfg.n_max)
    except ValueError as exc:
        if "zero resource" in str(exc):
            raise InputError(str(exc)) from None
        raise
    out = {"quantity": "conversion"} | rep.to_dict()
    return out, False


COMMANDS = {
    "divergence": cmd_divergence,
    "capacity": cmd_capacity,
    "beta": cmd_beta,
    "robustness": cmd_robustness,
    "stein-scan": cmd_stein_scan,
    "verify": cmd_verify,
    "convert": cmd_convert,
}


def build_parser():
    p = argparse.ArgumentParser(prog="cqstein", description="CQ channel resource and hypothesis-testing tools")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, copies=True):
        sp.add_argument("--family", default="replacer", help="replacer or hull:<file>")
        sp.add_argument("--eps", type=float, default=0.1)
        sp.add_argument("--alpha", type=float, action="append", default=[], help="Renyi order (repeatable)")
        if copies:
            sp.add_argument("--copies", "--max-copies", dest="n_max", type=int, default=1)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None)
        sp.add_argument("--format", dest="fmt", choices=("json", "csv", "text"), default="json")

    sp = sub.add_parser("divergence", help="channel divergence or divergence to a family")
    sp.add_argument("--a")
    sp.add_argument("--b")
    sp.add_argument("--channel")
    common(sp)
    sp = sub.add_parser("capacity", help="Holevo capacity")
    sp.add_argument("--channel")
    common(sp)
    sp = sub.add_parser("beta", help="optimal type-II error")
    sp.add_argument("--null")
    sp.add_argument("--alt")
    sp.add_argument("--channel")
    common(sp)
    sp = sub.add_parser("robustness", help="generalized robustness")
    sp.add_argument("--channel")
    common(sp)
    sp = sub.add_parser("stein-scan", help="finite-n Stein exponent sandwich")
    sp.add_argument("--channel")
    common(sp)
    sp = sub.add_parser("verify", help="seeded property suites")
    sp.add_argument("--suite", default=None)
    common(sp, copies=False)
    sp.set_defaults(fmt="text")
    sp = sub.add_parser("convert", help="conversion-rate report")
    sp.add_argument("--a")
    sp.add_argument("--b")
    sp.add_argument("--family-out", dest="family_out", default=None, help="family for the target (default: --family)")
    common(sp)
    return p


def config_from_args(ns):
    inputs = {k: getattr(ns, k) for k in ("a", "b", "channel", "null", "alt", "family_out") if getattr(ns, k, None)}
    for a in ns.alpha:
        if not a > 1:
            raise InputError("--alpha must exceed 1")
    if not 0 <= ns.eps < 1:
        raise InputError("--eps must lie in [0, 1)")
    n = getattr(ns, "n_max", 1)
    if n < 1:
        raise InputError("--copies must be at least 1")
    return RunConfig(ns.command, inputs, ns.eps, tuple(ns.alpha), n, ns.tol, ns.seed, ns.out, ns.fmt, ns.family,
                     getattr(ns, "suite", None))


def run(cfg):
    """Execute a configuration; returns (report dict, exit code)."""
    report, flagged = COMMANDS[cfg.command](cfg)
    return report, EXIT_FLAG if flagged else EXIT_OK


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        report, code = run(cfg)
    except (InputError, ChannelFormatError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = render(report, cfg.fmt)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
