"""Command-line front end.

Exit codes: 0 success, 2 configuration or parse error, 3 simulation
failure, 4 fit failure.
"""
from __future__ import annotations

import argparse
import csv
import io as _stdio
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .config import ConfigError, ExperimentConfig, load_config
from .dynamics import IntegrationError, apply_gate, snap_prepare_fock1, snap_prepare_superposition
from .fitting import FitError, FitModelKind, fit
from .hilbert import cavity_superposition, coherent_state, fock_state
from .lossbudget import BudgetFormatError, LossBudget, load_budget
from .measurement import WIGNER_MAX, wigner
from .protocols import FIT_KIND, characterize_device, run_experiment

log = logging.getLogger("bosonic_twin")

EXIT_OK, EXIT_CONFIG, EXIT_SIMULATION, EXIT_FIT = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise CliError("--config is required", EXIT_CONFIG)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    ro = cfg.readout
    if args.seed is not None:
        ro = replace(ro, rng_seed=args.seed)
    if args.shots is not None:
        ro = replace(ro, shots=None if args.shots == "none" else _shots(args.shots))
    cfg.readout = ro
    if args.format:
        cfg.fmt = args.format
    return cfg


def _shots(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise CliError(f"--shots expects an integer or 'none', got {text!r}", EXIT_CONFIG) from None
    if n < 1:
        raise CliError("--shots must be >= 1", EXIT_CONFIG)
    return n


def _out_dir(args, cfg: ExperimentConfig | None = None) -> Path:
    out = args.out or (cfg.out_dir if cfg else None) or "."
    return Path(out)


def _ext(fmt: str) -> str:
    if fmt not in ("csv", "json"):
        raise CliError(f"unknown format {fmt!r}", EXIT_CONFIG)
    return fmt


def budget_table(b: LossBudget) -> str:
    def cell(mark, q, sig=None):
        text = f"{q.value:.3e}" if sig is None else f"{q.rounded(sig):.0e}"
        return f"{mark}{text}"

    lines = [
        f"Loss budget: {b.name}",
        f"{'Channel':<28}{'Q limit':>12}{'rounded':>10}{'loss share':>12}",
    ]
    shares = b.shares()
    for ch, q in zip(b.channels, b.per_channel):
        m = ">" if q.bound.value == "lower" else ""
        lines.append(f"{ch.name:<28}{cell(m, q):>12}{cell(m, q, b.display_sig):>10}{shares[ch.name]:>12.4f}")
    tm = "≥" if b.total.bound.value == "lower" else ""
    for label, q in (("Total Q_i", b.total), ("Total from rounded limits", b.total_from_displayed)):
        lines.append(f"{label:<28}{cell(tm, q):>12}{cell(tm, q, b.display_sig):>10}")
    if b.optimistic_total is not None and b.optimistic_total.value != b.total.value:
        o = b.optimistic_total
        lines.append(f"{'Total, bounded dropped':<28}{cell('', o):>12}{cell('', o, b.display_sig):>10}")
    return "\n".join(lines) + "\n"


def _save_svg(fig, path: Path):
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = "bosonic-twin"
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_budget(args) -> int:
    source = args.input or args.config
    if not source:
        raise CliError("budget needs an input file or bundled fixture name", EXIT_CONFIG)
    try:
        b = load_budget(source)
    except (BudgetFormatError, OSError) as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    out = _out_dir(args)
    table = budget_table(b)
    io.write_text_atomic(out / f"{b.name}_budget.txt", table)
    io.write_json(out / f"{b.name}_budget.json", b.as_dict())
    sys.stdout.write(table)
    return EXIT_OK


def _simulate(cfg: ExperimentConfig, kind: str, delays=None):
    try:
        return run_experiment(
            kind, cfg.device, cfg.hilbert, cfg.readout, delays=delays, alpha=cfg.alpha, detuning=cfg.detuning
        )
    except IntegrationError as exc:
        raise CliError(f"simulation failed: {exc}", EXIT_SIMULATION) from None
    except ValueError as exc:
        raise CliError(f"{cfg.source}: {exc}", EXIT_CONFIG) from None


def cmd_simulate(args) -> int:
    cfg = _config(args)
    kind = cfg.kind
    if kind not in FIT_KIND:
        raise CliError(f"experiment.kind must be one of {sorted(FIT_KIND)} for simulate, got {kind!r}", EXIT_CONFIG)
    if cfg.delays is not None and cfg.delays.size == 0:
        raise CliError("experiment.sweep has no points", EXIT_CONFIG)
    ext = _ext(cfg.fmt)
    path = _out_dir(args, cfg) / f"{kind}.{ext}"
    try:
        ds = _simulate(cfg, kind, cfg.delays)
        io.write_dataset(path, ds, ext)
    except CliError:
        path.unlink(missing_ok=True)
        path.with_name(path.name + ".part").unlink(missing_ok=True)
        raise
    print(f"wrote {path} ({len(ds)} points)")
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        ds = io.read_dataset(args.dataset)
    except io.DatasetFormatError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    model = args.model or ds.meta.get("model")
    if model is None and ds.meta.get("kind") in FIT_KIND:
        model = FIT_KIND[ds.meta["kind"]].value
    try:
        kind = FitModelKind(model)
    except ValueError:
        raise CliError(f"--model must be one of {[k.value for k in FitModelKind]}", EXIT_CONFIG) from None
    try:
        res = fit(kind, ds, weighting=args.weighting)
    except FitError as exc:
        raise CliError(f"fit failed: {exc}", EXIT_FIT) from None
    out = _out_dir(args) / f"{Path(args.dataset).stem}_fit.json"
    io.write_json(out, res.as_dict())
    for name, value in res.params.items():
        print(f"{name:>6} = {value:.6g} ± {res.stderr[name]:.2g}")
    print(f"converged={res.converged} rss={res.rss:.3e} ({res.message}); wrote {out}")
    if not res.converged:
        return EXIT_FIT
    return EXIT_OK


def _wigner_state(cfg: ExperimentConfig):
    state_doc = cfg.state
    dims = cfg.hilbert
    kind = state_doc.get("type")
    try:
        if kind == "fock":
            return fock_state(int(state_doc.get("n", 0)), dims)
        if kind == "coherent":
            from .config import _complex

            return coherent_state(_complex(state_doc.get("alpha", math.sqrt(2)), "experiment.state.alpha"), dims)
        if kind == "superposition":
            return cavity_superposition(dims, float(state_doc.get("phase", 0.0)))
        if kind in ("snap_fock1", "snap_superposition"):
            steps = snap_prepare_fock1() if kind == "snap_fock1" else snap_prepare_superposition()
            st = fock_state(0, dims)
            for s in steps:
                st = apply_gate(st, s)
            return st
    except ValueError as exc:
        raise CliError(f"experiment.state: {exc}", EXIT_CONFIG) from None
    raise CliError(
        f"experiment.state.type must be fock, coherent, superposition, snap_fock1 or snap_superposition, got {kind!r}",
        EXIT_CONFIG,
    )


def cmd_wigner(args) -> int:
    cfg = _config(args)
    state = _wigner_state(cfg)
    r = cfg.grid_range
    try:
        grid = wigner(state, (-r, r), n_points=cfg.grid_points)
    except ValueError as exc:
        raise CliError(f"truncation guard: {exc}", EXIT_CONFIG) from None
    out = _out_dir(args, cfg)
    io.write_wigner(out / "wigner.csv", grid)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    mesh = ax.pcolormesh(grid.re, grid.im, grid.values, cmap="RdBu_r", vmin=-WIGNER_MAX, vmax=WIGNER_MAX, shading="auto")
    ax.set_xlabel("Re(α)")
    ax.set_ylabel("Im(α)")
    ax.set_aspect("equal")
    fig.colorbar(mesh, ax=ax, label="W(α)")
    fig.tight_layout()
    _save_svg(fig, out / "wigner.svg")
    plt.close(fig)
    centre = grid.values[grid.n_points // 2, grid.n_points // 2]
    print(f"W max={grid.values.max():.6f} min={grid.values.min():.6f} centre={centre:.6f}; wrote {out / 'wigner.csv'}")
    return EXIT_OK


def pipeline_table(rows) -> str:
    head = f"{'Device':<24}{'T1^F (ms)':>11}{'T1^C (ms)':>11}{'T2 (ms)':>10}{'nbar':>9}  status"
    lines = [head]
    for r in rows:
        def ms(x):
            return f"{x * 1e3:.3f}" if math.isfinite(x) else "—"

        nb = f"{r.nbar:.4f}" if math.isfinite(r.nbar) else "—"
        status = "ok" if r.ok else "failed: " + ", ".join(sorted(r.errors))
        lines.append(f"{r.name:<24}{ms(r.T1_fock):>11}{ms(r.T1_coherent):>11}{ms(r.T2):>10}{nb:>9}  {status}")
    return "\n".join(lines) + "\n"


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    devices = cfg.devices
    if not devices:
        raise CliError("'devices' must list at least one device", EXIT_CONFIG)
    rows = [characterize_device(model, cfg.hilbert, cfg.readout, name=name) for name, model in devices]
    out = _out_dir(args, cfg)
    table = pipeline_table(rows)
    io.write_text_atomic(out / "pipeline_summary.txt", table)
    ext = _ext(cfg.fmt)
    if ext == "json":
        io.write_json(out / "pipeline_summary.json", [r.as_dict() for r in rows])
    else:
        buf = _stdio.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "T1_fock_s", "T1_coherent_s", "T2_s", "nbar", "status"])
        for r in rows:
            vals = [io._fmt(v) for v in (r.T1_fock, r.T1_coherent, r.T2, r.nbar)]
            w.writerow([r.name, *vals, "ok" if r.ok else "failed"])
        io.write_text_atomic(out / "pipeline_summary.csv", buf.getvalue())
    sys.stdout.write(table)
    return EXIT_OK if any(r.ok for r in rows) else EXIT_SIMULATION


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--out", help="output directory (default: config output.dir or .)")
    common.add_argument("--seed", type=int, help="readout RNG seed (overrides config)")
    common.add_argument("--shots", help="shots per point, or 'none' for exact probabilities")
    common.add_argument("--format", choices=("csv", "json"), help="dataset/report format")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="bosonic-twin", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    b = sub.add_parser("budget", parents=[common], help="participation loss budget")
    b.add_argument("input", nargs="?", help="budget YAML file or bundled fixture name")
    b.set_defaults(func=cmd_budget)
    s = sub.add_parser("simulate", parents=[common], help="simulate a T1/T2 measurement")
    s.set_defaults(func=cmd_simulate)
    f = sub.add_parser("fit", parents=[common], help="fit a decay model to a dataset")
    f.add_argument("dataset")
    f.add_argument("--model", choices=[k.value for k in FitModelKind])
    f.add_argument("--weighting", choices=("none", "shot"), default="none")
    f.set_defaults(func=cmd_fit)
    w = sub.add_parser("wigner", parents=[common], help="Wigner map of a prepared state")
    w.set_defaults(func=cmd_wigner)
    pl = sub.add_parser("pipeline", parents=[common], help="T1/T2/nbar table for several devices")
    pl.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
