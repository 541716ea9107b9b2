"""Command-line entry point: ``pfha {compute,disagg,tornado,validate,grid-build,synth}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .catalogue import load_catalogue
from .config import RunConfig, load_config, normalise_mode, resolve_config_path
from .controls import defence_decomposition
from .disagg import DIMENSIONS, KEY_NAMES, disaggregate
from .errors import ConfigError, DataError, NumericError, PfhaError
from .hazard import compute_hazard, threshold_grid
from .logictree import BRANCH_NAMES, central_path, enumerate_paths, evaluate_tree, path_inputs, tornado
from .pipeline import build_model, load_grid_for, observation_window, with_all_controls
from .physics import grid_summary
from .rates import DEFAULT_PRIORS, load_priors
from .sfr import ReplayEvent
from .tableio import fmt, write_table
from .validate import format_anchor_report, frpe_compare, reference_anchors, temporal_split

logger = logging.getLogger("pfha")

EXIT_CODES = {ConfigError: 2, DataError: 3, NumericError: 4}


def _provenance(cfg: RunConfig) -> str:
    return f"pfha {__version__}; config_sha256={cfg.sha256}"


def _parse_thresholds(text: str | None) -> tuple[float, ...] | None:
    if not text:
        return None
    try:
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"bad --thresholds {text!r}") from None
    if not vals or any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError("--thresholds must be positive and ascending")
    return vals


def _load(args) -> RunConfig:
    cfg = load_config(resolve_config_path(args.config))
    if getattr(args, "threads", None):
        cfg.threads = args.threads
    return cfg


def _model(args, cfg: RunConfig, thresholds):
    cascade = None if args.cascade is None else args.cascade == "on"
    mode = normalise_mode(args.controls) if args.controls else None
    return build_model(cfg, thresholds=thresholds, control_mode=mode, cascade=cascade, threads=cfg.threads)


def _out(args, default: str = "results") -> Path:
    p = Path(args.out or default)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _mode_name(inputs) -> str:
    dc, lfdd = inputs.dc is not None, inputs.lfdd is not None
    return {(True, True): "both", (True, False): "dc_only", (False, True): "lfdd_only"}.get((dc, lfdd), "none")


def cmd_compute(args) -> int:
    cfg = _load(args)
    summary_thr = _parse_thresholds(args.thresholds) or cfg.summary_thresholds
    curve_thr = threshold_grid(*cfg.curve)
    all_thr = tuple(sorted({round(t, 10) for t in curve_thr + tuple(summary_thr)}))
    model = _model(args, cfg, all_thr)
    paths = enumerate_paths(cfg.branches)
    ev = evaluate_tree(paths, model.base, compound_multiplier=cfg.compound_multiplier, threads=cfg.threads)
    s = ev.summary
    out = _out(args)
    prov = _provenance(cfg)
    idx = {round(t, 10): j for j, t in enumerate(s.thresholds)}

    def row(j):
        rp = 1.0 / s.mean[j] if s.mean[j] > 0 else float("inf")
        return (s.thresholds[j], 50.0 - s.thresholds[j], s.mean[j], s.median[j], s.p05[j], s.p95[j], rp)

    head = ("threshold_hz", "frequency_hz", "mean_rate_per_yr", "median", "p05", "p95", "return_period_yr")
    write_table(out / "hazard_curve.csv", head, [row(idx[round(t, 10)]) for t in curve_thr], prov)
    sel = [idx[round(t, 10)] for t in summary_thr]
    write_table(out / "fractiles.csv", head, [row(j) for j in sel], prov)
    write_table(
        out / "per_path_rates.csv",
        ("path_index",) + BRANCH_NAMES + ("weight",) + tuple(f"rate_{fmt(t)}hz" for t in summary_thr),
        [(p.index,) + p.values() + (p.weight,) + tuple(s.rates[k, j] for j in sel) for k, p in enumerate(ev.paths)],
        prov,
    )
    central = path_inputs(central_path(cfg.branches), with_all_controls(cfg, replace(model.base, thresholds=tuple(summary_thr))))
    defence = defence_decomposition(central)
    write_table(
        out / "defence_value.csv",
        ("threshold_hz", "configuration", "rate_per_yr", "reduction"),
        [(r["threshold_hz"], r["configuration"], r["rate_per_yr"], r["reduction"]) for r in defence],
        prov,
    )
    summary = {
        "tool": f"pfha {__version__}",
        "config_sha256": cfg.sha256,
        "n_paths": len(ev.paths),
        "n_distinct_evaluations": ev.n_evaluations,
        "controls": _mode_name(model.base),
        "cascade": model.base.cascade is not None,
        "thresholds": [
            dict(zip(("threshold_hz", "frequency_hz", "mean", "median", "p05", "p95", "return_period_yr"), (float(fmt(v)) for v in row(j))))
            for j in sel
        ],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for j in sel:
        r = row(j)
        print(f"{fmt(r[0])} Hz ({fmt(r[1])} Hz): mean {fmt(r[2])}/yr  median {fmt(r[3])}  p05 {fmt(r[4])}  p95 {fmt(r[5])}  RP {fmt(r[6])} yr")
    print(f"wrote 5 outputs to {out}")
    return 0


def cmd_disagg(args) -> int:
    cfg = _load(args)
    thr = float(args.threshold)
    model = _model(args, cfg, (thr,))
    inputs = replace(path_inputs(central_path(cfg.branches), model.base, cfg.compound_multiplier), keep_cells=True)
    result = compute_hazard(inputs)
    cells = disaggregate(result, thr, args.dimension)
    out = _out(args)
    path = out / f"disagg_{args.dimension}_{fmt(thr)}hz.csv"
    write_table(
        path,
        KEY_NAMES[args.dimension] + ("fraction", "mean_epsilon", "rate_per_yr"),
        [c.keys + (c.fraction, c.mean_epsilon, c.rate_per_yr) for c in cells],
        _provenance(cfg),
    )
    for c in sorted(cells, key=lambda c: -c.fraction)[:10]:
        print(f"{'/'.join(fmt(k) for k in c.keys):<40} {c.fraction:8.4f}  eps {c.mean_epsilon:+.3f}")
    print(f"fraction sum {sum(c.fraction for c in cells):.12f}; wrote {path}")
    return 0


def cmd_tornado(args) -> int:
    cfg = _load(args)
    thr = float(args.threshold)
    model = _model(args, cfg, (thr,))
    bars = tornado(with_all_controls(cfg, model.base), thr, cfg.branches, compound_multiplier=cfg.compound_multiplier)
    out = _out(args)
    write_table(out / "tornado.csv", ("branch", "low_rate", "high_rate", "swing"),
                [(b.branch, b.low_rate, b.high_rate, b.swing) for b in bars], _provenance(cfg))
    for b in bars:
        print(f"{b.branch:<20} {b.low_rate:.4g} .. {b.high_rate:.4g}  swing {b.swing:.3f}x")
    return 0


def cmd_validate(args) -> int:
    cfg = _load(args)
    anchors = reference_anchors()
    print(format_anchor_report(anchors))
    model = _model(args, cfg, _parse_thresholds(args.thresholds) or cfg.summary_thresholds)
    start, end = observation_window(cfg, model.incidents)
    split = cfg.split or start + (end - start) * 0.75
    catalogue = load_catalogue(cfg.data["catalogue"], cfg.data["registry"])
    priors = load_priors(cfg.data["priors"]) if cfg.data["priors"] else DEFAULT_PRIORS
    res = temporal_split(model.incidents, split, catalogue, with_all_controls(cfg, model.base), start=start, end=end,
                         priors=priors, unmatched_to=cfg.unmatched_source)
    print(f"temporal split at {res.split.isoformat()}: {res.n_training} training, {res.n_test} test incidents")
    for t, ratio, ok in zip(res.thresholds, res.ratios, res.stable):
        print(f"  {fmt(t)} Hz  training/full {ratio:.3f}  {'stable' if ok else 'UNSTABLE'}")
    events = [
        ReplayEvent(e.nadir_deviation_hz, e.demand_gw, e.response_mw, e.rocof_hz_per_s, e.inertia_gva_s, e.actual_mw, e.dc_mw or 0.0)
        for e in model.incidents if e.demand_gw is not None and e.response_mw is not None
    ]
    rows = frpe_compare(events, model.grid) if events else []
    for r in rows:
        print(f"  {r.model:<8} mean log-residual {r.mean_log_residual:+.3f}  bias factor {r.bias_factor:.3f}  "
              f"stdev {r.residual_stdev:.3f}  MAE {r.mean_abs_error:.3f}  n={r.n_events}")
    out = _out(args)
    prov = _provenance(cfg)
    write_table(out / "anchors.csv", ("anchor", "value", "lo", "hi", "passed"),
                [(a.name, a.value, a.lo, a.hi, a.passed) for a in anchors], prov)
    write_table(out / "temporal_split.csv", ("threshold_hz", "training_rate", "full_rate", "ratio", "stable"),
                [(t, a, b, r, s) for t, a, b, r, s in zip(res.thresholds, res.training_hazard, res.full_hazard, res.ratios, res.stable)], prov)
    write_table(out / "frpe_compare.csv", ("model", "mean_log_residual", "bias_factor", "residual_stdev", "mean_abs_error", "n_events"),
                [(r.model, r.mean_log_residual, r.bias_factor, r.residual_stdev, r.mean_abs_error, r.n_events) for r in rows], prov)
    return 0 if all(a.passed for a in anchors) else 1


def cmd_grid_build(args) -> int:
    cfg = _load(args)
    grid, hit = load_grid_for(cfg, cfg.threads)
    info = grid_summary(grid)
    sims = 0 if hit else info["simulations"]
    print(f"cache {'hit' if hit else 'miss'}; simulations run: {sims}")
    print(f"grid points {info['points']} (primary {info['primary']}, boundary {info['boundary']}); "
          f"nadir range {info['min_hz']:.4f}..{info['max_hz']:.4f} Hz; hash {grid.config_hash}")
    return 0


def cmd_synth(args) -> int:
    from .synth import generate

    seed = 7 if args.seed is None else args.seed
    files = generate(_out(args, "synthetic"), seed)
    for role, p in files.items():
        print(f"{role:<11} {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pfha", description="Probabilistic frequency hazard analysis")
    ap.add_argument("--version", action="version", version=f"pfha {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, *, thresholds=True):
        p.add_argument("--config", help="config file (default: $PFHA_CONFIG)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker cap")
        p.add_argument("--seed", type=int)
        p.add_argument("--controls", choices=("none", "dc", "lfdd", "both"))
        p.add_argument("--cascade", choices=("on", "off"))
        if thresholds:
            p.add_argument("--thresholds", help="comma-separated deviations in Hz, e.g. 0.5,0.8,1.2")

    common(sub.add_parser("compute", help="logic-tree hazard curves, fractiles and defence table"))
    p = sub.add_parser("disagg", help="disaggregate central-path hazard at one threshold")
    common(p, thresholds=False)
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--dimension", choices=DIMENSIONS, default="source")
    p = sub.add_parser("tornado", help="one-at-a-time branch sensitivity")
    common(p, thresholds=False)
    p.add_argument("--threshold", type=float, default=0.8)
    common(sub.add_parser("validate", help="anchors, temporal split and replay comparison"))
    common(sub.add_parser("grid-build", help="build or reuse the cached nadir grid"), thresholds=False)
    p = sub.add_parser("synth", help="write a synthetic dataset and config")
    p.add_argument("--out", help="output directory (default ./synthetic)")
    p.add_argument("--seed", type=int)
    return ap


COMMANDS = {
    "compute": cmd_compute,
    "disagg": cmd_disagg,
    "tornado": cmd_tornado,
    "validate": cmd_validate,
    "grid-build": cmd_grid_build,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except PfhaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for cls, code in EXIT_CODES.items():
            if isinstance(exc, cls):
                return code
        return 1

