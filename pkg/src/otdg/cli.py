"""``otdg`` command line: train | loo | ablate | bounds | ot.

Exit codes: 0 success, 1 usage/config/parse error, 2 numerical failure,
3 bound-check failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, bounds, ot
from .data import DataError, generate_rotated, load_csv
from .diffmath import DiffError
from .dg import ConfigError, TrainConfig, ablate, leave_one_out, train
from .measures import EmpiricalMeasure, MeasureError

FORMAT_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3
COMMANDS = ("train", "loo", "ablate", "bounds", "ot")

log = logging.getLogger("otdg")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# config


def load_schema() -> dict:
    return json.loads(resources.files("otdg").joinpath("config_schema.json").read_text("utf-8"))


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"  {'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise UsageError("invalid config:\n" + "\n".join(lines))
    return raw


def train_config(raw: dict) -> TrainConfig:
    try:
        return TrainConfig.from_dict(raw.get("train", {}))
    except ConfigError as exc:
        raise UsageError(f"train: {exc}") from None


def build_dataset(raw: dict, base_dir: Path):
    spec = raw.get("dataset") or {"generator": {}}
    try:
        if "csv" in spec:
            path = Path(spec["csv"])
            return load_csv(path if path.is_absolute() else base_dir / path)
        g = {"base": "gauss_mixture", "angles_deg": [0, 25, 50, 75], "n_per_domain": 500, "seed": 0,
             **spec["generator"]}
        return generate_rotated(g["base"], g["angles_deg"], g["n_per_domain"], g.get("noise_sd"),
                                g["seed"])
    except (DataError, OSError) as exc:
        raise UsageError(f"dataset: {exc}") from None


def _resolved(raw: dict, ds) -> dict:
    return {"dataset": raw.get("dataset", {"generator": {}}), "domains": ds.names}


def resolve_seeds(raw: dict, cli_seeds, default: int) -> list[int]:
    if cli_seeds is not None:
        return cli_seeds
    return list(raw.get("seeds", [default]))


def parse_seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed list must be comma-separated integers: {text!r}")
    if not seeds or min(seeds) < 0:
        raise argparse.ArgumentTypeError("seeds must be nonnegative integers")
    return seeds


# ---------------------------------------------------------------------------
# output helpers


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def envelope(command: str, raw: dict, resolved: dict, result) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "otdg_version": __version__,
        "command": command,
        "config": raw,
        "resolved_config": resolved,
        "serial": True,
        "result": result,
    }


# ---------------------------------------------------------------------------
# commands


def cmd_train(raw, args, out: Path) -> int:
    cfg = train_config(raw)
    for msg in cfg.grid_warnings():
        log.warning(msg)
    ds = build_dataset(raw, args.config.parent)
    unseen = raw.get("unseen", ds.names[-1] if len(ds) > 1 else None)
    if unseen is not None and unseen not in ds.names:
        raise UsageError(f"unseen domain {unseen!r} not in dataset {ds.names}")
    seeds = resolve_seeds(raw, args.seed, cfg.seed)
    for s in seeds:
        target = out if len(seeds) == 1 else out / f"seed_{s}"
        target.mkdir(parents=True, exist_ok=True)
        report, model = train(replace(cfg, seed=s), ds, unseen, return_model=True)
        write_csv(
            target / "metrics.csv",
            ["epoch", "L_c", "L_wb", report.aux_name, "val_acc"],
            [[e.epoch, _num(e.L_c), _num(e.L_wb), _num(e.L_aux), _num(e.val_acc)] for e in report.epochs],
        )
        resolved = {**_resolved(raw, ds), "train": replace(cfg, seed=s).to_dict(), "unseen": unseen}
        write_json(target / "report.json", envelope("train", raw, resolved, report.to_dict()))
        (target / "model.bin").write_bytes(model.to_bytes())
        acc = ", ".join(f"{k}={v:.4f}" for k, v in report.test_accuracy.items())
        print(f"seed {s}: selected epoch {report.selected_epoch}, val {report.best_val_acc:.4f}"
              + (f", unseen {acc}" if acc else ""))
    return EXIT_OK


def cmd_loo(raw, args, out: Path) -> int:
    cfg = train_config(raw)
    ds = build_dataset(raw, args.config.parent)
    seeds = resolve_seeds(raw, args.seed, cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    table = leave_one_out(cfg, ds, seeds)
    write_csv(out / "loo.csv", table.header(), [table.row()])
    cells = {k: {"mean": c.mean, "std": c.std, "values": c.values} for k, c in table.cells.items()}
    resolved = {**_resolved(raw, ds), "train": cfg.to_dict(), "seeds": seeds}
    write_json(out / "report.json", envelope("loo", raw, resolved, {"cells": cells}))
    print(",".join(table.header()))
    print(",".join(table.row()))
    return EXIT_OK


def cmd_ablate(raw, args, out: Path) -> int:
    cfg = train_config(raw)
    ds = build_dataset(raw, args.config.parent)
    seeds = resolve_seeds(raw, args.seed, cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    table = ablate(cfg, ds, seeds)
    write_csv(out / "ablation.csv", table.header(), table.rows())
    result = {
        label: {k: {"mean": c.mean, "std": c.std, "values": c.values} for k, c in t.cells.items()}
        for label, t in table.tables.items()
    }
    resolved = {**_resolved(raw, ds), "train": cfg.to_dict(), "seeds": seeds}
    write_json(out / "report.json", envelope("ablate", raw, resolved, {"variants": result}))
    print(",".join(table.header()))
    for row in table.rows():
        print(",".join(row))
    return EXIT_OK


def cmd_bounds(raw, args, out: Path) -> int:
    opts = {"cases": 100, "n_mc": bounds.DEFAULT_N_MC, "seed": 0, "log_base": "2", **raw.get("bounds", {})}
    if args.seed is not None:
        opts["seed"] = args.seed[0]
    out.mkdir(parents=True, exist_ok=True)
    results = bounds.run_sweeps(opts["cases"], opts["seed"], opts["n_mc"], opts["log_base"],
                                opts.get("checks"))
    degen = bounds.degenerate_report(seed=opts["seed"])
    terms = (degen.lhs_risk, degen.term_risks, degen.term_transport, degen.term_sigma, degen.slack)
    zero = max(abs(t) for t in terms) <= bounds.EXACT_TOL
    results.append(bounds.SweepResult("degenerate", 1, degen.slack, int(not zero), True,
                                      {"report": degen.to_dict()}))
    write_csv(
        out / "bounds_summary.csv",
        ["check", "cases", "kind", "min_slack", "violations", "passed"],
        [[r.name, r.cases, "exact" if r.exact else "monte_carlo", _num(r.min_slack), r.violations,
          int(r.passed)] for r in results],
    )
    payload = [{"name": r.name, "cases": r.cases, "exact": r.exact, "min_slack": r.min_slack,
                "violations": r.violations, "passed": r.passed, **r.extra} for r in results]
    write_json(out / "bounds_report.json", envelope("bounds", raw, {"bounds": opts}, {"checks": payload}))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.cases} cases, min slack {r.min_slack:.3g}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def read_cloud(path: Path) -> EmpiricalMeasure:
    """Point-cloud CSV with header ``x1,...,xd,weight``."""
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        d = len(header) - 1
        if d < 1 or header != [f"x{i}" for i in range(1, d + 1)] + ["weight"]:
            raise UsageError(f"{path}: line 1: header must be 'x1,...,xd,weight'")
        pts, w = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != d + 1:
                raise UsageError(f"{path}: line {reader.line_num}: expected {d + 1} fields")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise UsageError(f"{path}: line {reader.line_num}: non-numeric value") from None
            pts.append(vals[:-1])
            w.append(vals[-1])
    if not pts:
        raise UsageError(f"{path}: no points")
    w = np.array(w)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-6:
        raise UsageError(f"{path}: weights must be nonnegative and sum to 1")
    try:
        return EmpiricalMeasure(np.array(pts), w / w.sum())
    except MeasureError as exc:
        raise UsageError(f"{path}: {exc}") from None


def write_cloud(path: Path, m: EmpiricalMeasure) -> None:
    header = [f"x{i}" for i in range(1, m.dim + 1)] + ["weight"]
    write_csv(path, header, [[_num(v) for v in p] + [_num(w)] for p, w in zip(m.points, m.weights)])


def cmd_ot(raw, args, out: Path) -> int:
    spec = raw.get("ot")
    if spec is None:
        raise UsageError("config needs an 'ot' section for the ot command")
    base = args.config.parent
    clouds = [read_cloud(p if (p := Path(s)).is_absolute() else base / p) for s in spec["inputs"]]
    out.mkdir(parents=True, exist_ok=True)
    if spec["mode"] == "sinkhorn":
        if len(clouds) != 2:
            raise UsageError("sinkhorn mode needs exactly two inputs")
        a, b = clouds
        if a.dim != b.dim:
            raise UsageError("input clouds differ in dimension")
        eps = spec.get("eps", ot.DEFAULT_EPS)
        max_iter = spec.get("max_iter", ot.DEFAULT_MAX_ITER)
        tol = spec.get("tol", ot.DEFAULT_TOL)
        plan = ot.sinkhorn_ot(a, b, eps, max_iter, tol)
        div = ot.sinkhorn_divergence(a, b, eps, max_iter, tol)
        result = {"cost": plan.cost, "entropic": plan.entropic, "value": plan.value,
                  "divergence": div, "iterations": plan.iterations_used,
                  "converged": plan.converged, "marginal_error": plan.marginal_error}
        resolved = {"ot": {**spec, "eps": eps, "max_iter": max_iter, "tol": tol}}
        write_json(out / "ot_result.json", envelope("ot", raw, resolved, result))
        print(f"cost {plan.cost:.6g}, divergence {div:.6g}, converged {plan.converged}")
        if not plan.converged:
            log.error("Sinkhorn did not reach tol=%g within %d iterations", tol, max_iter)
            return EXIT_NUMERIC
        return EXIT_OK
    if len({c.dim for c in clouds}) != 1:
        raise UsageError("input clouds differ in dimension")
    eps = spec.get("eps", 1e-2)
    seed = args.seed[0] if args.seed else spec.get("seed", 0)
    res = ot.free_support_barycenter(
        clouds, k=spec.get("k"), eps=eps, outer_iters=spec.get("outer_iters", 50),
        tol=spec.get("bary_tol", 1e-4), seed=seed,
    )
    divs = [ot.sinkhorn_divergence(res.measure, c, eps) for c in clouds]
    result = {"support": res.support, "objective_trace": res.objective_trace,
              "support_shift_trace": res.support_shift_trace, "converged": res.converged,
              "divergence_to_inputs": divs}
    resolved = {"ot": {**spec, "eps": eps, "seed": seed, "k": res.measure.n}}
    write_json(out / "ot_result.json", envelope("ot", raw, resolved, result))
    write_cloud(out / "barycenter.csv", res.measure)
    print(f"barycenter: {res.measure.n} points, {len(res.objective_trace)} iterations, "
          f"converged {res.converged}")
    return EXIT_OK


HANDLERS = {"train": cmd_train, "loo": cmd_loo, "ablate": cmd_ablate, "bounds": cmd_bounds, "ot": cmd_ot}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="otdg", description="Wasserstein-barycenter domain generalization toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, type=Path, help="JSON config file")
    p.add_argument("--out", type=Path, default=Path("otdg_out"), help="output directory")
    p.add_argument("--seed", type=parse_seed_list, default=None, help="comma-separated seed list")
    p.add_argument("--serial", action="store_true",
                   help="force the serial deterministic path (execution is always serial)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="otdg: %(levelname)s: %(message)s")
    try:
        raw = load_config(args.config)
        return HANDLERS[args.command](raw, args, args.out)
    except (UsageError, DataError, ConfigError) as exc:
        print(f"otdg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DiffError, ot.OTError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"otdg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
