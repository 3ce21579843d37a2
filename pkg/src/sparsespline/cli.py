"""Command-line interface.

Subcommands: simulate, discover, run (simulate + discover + validate from one
config), validate, baseline, score. Exit codes: 0 ok, 2 usage, 3 data error,
4 training or integration failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .baseline import sindy_baseline
from .data import Dataset, load_csv, save_csv
from .errors import DataError, IntegrationError, InvalidArgument, TrainingError
from .library import parse_library_spec
from .model import DiscoveredModel, score_against_reference
from .ode import simulate_discovered
from .pipeline import DiscoveryResult, discover

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 0, 2, 3, 4

log = logging.getLogger("sparsespline")


# --------------------------------------------------------------------------- reports


def format_report(result: DiscoveryResult, reference=None, cfg_hash: str = "",
                  precision: int = 4) -> str:
    """Deterministic text report (no wall-clock values)."""
    model = result.model
    lines = ["# discovered equations", model.render(precision), ""]
    sizes = model.support.sum(axis=0)
    lines.append("support sizes: " + ", ".join(
        f"{n}={int(s)}" for n, s in zip(model.equation_names, sizes)))
    lines.append(f"alpha: {result.alpha:.6g}")
    lines.append(f"beta: {result.beta:.6g}")
    f = result.final_loss
    lines.append(f"final loss: data={f.data:.6e} physics={f.physics:.6e} "
                 f"l0={f.l0_count} total={f.total:.6e}")
    if reference:
        lines += ["", score_table(model, reference)]
    lines += ["", f"config hash: {cfg_hash}", f"seed: {model.provenance.get('seed')}"]
    return "\n".join(lines) + "\n"


def score_table(model: DiscoveredModel, reference) -> str:
    scores = score_against_reference(model, reference)
    eqs = model.equations()
    rows = ["# comparison with reference",
            f"{'equation':<10} {'term':<26} {'reference':>12} {'found':>12} {'rel.err':>9}"]
    fp_total = fn_total = 0
    for name, sc in scores.items():
        for lab, ref in reference[name].items():
            val = eqs[name].get(lab)
            found = "-" if val is None else f"{val:.6g}"
            rel = "-" if val is None else f"{sc.relative_errors[lab]:.2%}"
            rows.append(f"{name:<10} {lab:<26} {ref:>12.6g} {found:>12} {rel:>9}")
        for lab in sc.false_positives:
            rows.append(f"{name:<10} {lab:<26} {'(none)':>12} {eqs[name][lab]:>12.6g} {'FP':>9}")
        fp_total += len(sc.false_positives)
        fn_total += len(sc.false_negatives)
    rows.append(f"false positives: {fp_total}")
    rows.append(f"false negatives: {fn_total}")
    return "\n".join(rows)


def write_history(result: DiscoveryResult, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "data", "physics", "l0_count", "total", "accepted",
                    "best_total", "support_sizes"])
        for h in result.history:
            w.writerow([h.iteration, repr(h.data), repr(h.physics), h.l0_count, repr(h.total),
                        int(h.accepted), repr(h.best_total), " ".join(map(str, h.support_sizes))])


def save_discovery(result: DiscoveryResult, out: Path, cfg: dict | None, reference=None) -> str:
    out.mkdir(parents=True, exist_ok=True)
    cfg_hash = ex.config_hash(cfg) if cfg else ""
    result.model.provenance["config_hash"] = cfg_hash
    result.model.provenance["history"] = [
        {"iteration": h.iteration, "total": h.total, "accepted": h.accepted,
         "support_sizes": list(h.support_sizes)} for h in result.history]
    result.model.save(out / "model.json")
    report = format_report(result, reference, cfg_hash)
    (out / "report.txt").write_text(report)
    write_history(result, out / "history.csv")
    (out / "timing.json").write_text(json.dumps({"runtime_s": round(result.runtime, 3)}) + "\n")
    if cfg is not None:
        (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return report


# --------------------------------------------------------------------------- validation


def validate_model(model: DiscoveredModel, cfg: dict, ic, duration: float, rate_hz: float,
                   tol: float = 0.1):
    """Integrate model and truth from ``ic``; return (times, truth, predicted, summary)."""
    t, truth = ex.simulate_truth(cfg, ic, duration, rate_hz)
    input_fn = ex.emps_input(dict(cfg["data"], duration=duration)) if cfg["system"] == "emps" else None
    pred = simulate_discovered(model, np.asarray(ic, float), (0.0, duration), dense_times=t,
                               input_fn=input_fn).y
    n = model.library.n_states
    err = np.sqrt(np.mean((pred[:, :n] - truth[:, :n]) ** 2, axis=1))
    scale = np.sqrt(np.mean(truth[:, :n] ** 2))
    bad = np.flatnonzero(err > tol * scale)
    diverge = float(t[bad[0]]) if bad.size else None
    summary = {"rmse": float(np.sqrt(np.mean(err ** 2))), "divergence_time": diverge,
               "max_abs_state": np.max(np.abs(pred), axis=0).tolist(),
               "threshold": tol * scale}
    return t, truth, pred, summary


# --------------------------------------------------------------------------- commands


def _read_datasets(paths) -> Dataset:
    if not paths:
        raise InvalidArgument("give at least one --data file")
    return Dataset.merge([load_csv(p) for p in paths])


def _library_arg(spec: str | None, cfg: dict | None, dataset: Dataset):
    if spec is None:
        if cfg is None:
            raise InvalidArgument("give --library or --config")
        return ex.library_for(cfg)
    if spec.startswith("@"):
        spec = Path(spec[1:]).read_text()
    if spec.startswith("builtin:"):
        return ex.library_for({"system": "lorenz", "library": spec})
    return parse_library_spec(spec, state_names=None if "states(" in spec else dataset.state_names,
                              input_names=dataset.input_names or None)


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise InvalidArgument(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key] = json.loads(value)
    return out


def cmd_simulate(args) -> int:
    cfg = ex.load_config(args.config)
    if args.noise is not None:
        cfg["data"]["noise"] = args.noise
    if args.seed is not None:
        cfg["data"]["noise_seed"] = args.seed
    clean, noisy = ex.build_datasets(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(len(noisy.sources)):
        save_csv(clean, out / f"clean_{k}.csv", k)
        save_csv(noisy, out / f"data_{k}.csv", k)
    meta = {"config": cfg, "config_hash": ex.config_hash(cfg), "files": len(noisy.sources)}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(noisy.sources)} dataset(s) to {out}")
    return EXIT_OK


def cmd_discover(args) -> int:
    cfg = ex.load_config(args.config) if args.config else None
    dataset = _read_datasets(args.data)
    library = _library_arg(args.library, cfg, dataset)
    hp = ex.hyperparams(cfg or {}, **_overrides(args.set))
    reference = ex.reference(cfg) if cfg else None
    result = discover(dataset, library, hp)
    print(save_discovery(result, Path(args.out), cfg, reference), end="")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = ex.load_config(args.config)
    overrides = _overrides(args.set)
    if overrides:
        cfg.setdefault("hyperparams", {}).update(overrides)
    _, noisy = ex.build_datasets(cfg)
    out = Path(args.out)
    result = discover(noisy, ex.library_for(cfg), ex.hyperparams(cfg))
    report = save_discovery(result, out, cfg, ex.reference(cfg))
    print(report, end="")
    for name, block in cfg.get("validation", {}).items():
        _write_validation(result.model, cfg, block, out / "trajectories", name)
    return EXIT_OK


def _write_validation(model, cfg, block, out_dir: Path, name: str) -> dict:
    t, truth, pred, summary = validate_model(model, cfg, block["ic"], float(block["duration"]),
                                             float(block.get("rate_hz", 100)),
                                             float(block.get("tolerance", 0.1)))
    out_dir.mkdir(parents=True, exist_ok=True)
    n = model.library.n_states
    names = model.library.state_names
    with (out_dir / f"{name}.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *(f"true_{s}" for s in names), *(f"pred_{s}" for s in names)])
        for i in range(t.size):
            w.writerow([repr(float(t[i])), *map(repr, truth[i, :n].tolist()),
                        *map(repr, pred[i, :n].tolist())])
    (out_dir / f"{name}.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"validation {name}: rmse={summary['rmse']:.4g} "
          f"divergence_time={summary['divergence_time']}")
    return summary


def cmd_validate(args) -> int:
    model = DiscoveredModel.load(args.model)
    cfg = ex.load_config(args.config)
    ic = json.loads(args.ic) if args.ic else cfg["data"]["ics"][0]
    block = {"ic": ic, "duration": args.duration, "rate_hz": args.rate, "tolerance": args.tolerance}
    _write_validation(model, cfg, block, Path(args.out), "validation")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = ex.load_config(args.config) if args.config else None
    dataset = _read_datasets(args.data)
    library = _library_arg(args.library, cfg, dataset)
    hp = ex.hyperparams(cfg or {}, **_overrides(args.set))
    res = sindy_baseline(dataset, library, hp, args.window, args.polyorder)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.model.save(out / "baseline_model.json")
    text = "# internal baseline (Savitzky-Golay derivatives)\n" + res.model.render(4) + "\n"
    if cfg:
        text += "\n" + score_table(res.model, ex.reference(cfg)) + "\n"
    (out / "baseline_report.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_score(args) -> int:
    model = DiscoveredModel.load(args.model)
    if args.reference:
        reference = json.loads(Path(args.reference).read_text())
    else:
        reference = ex.reference(ex.load_config(args.config))
    print(score_table(model, reference))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsespline",
                                description="Sparse equation discovery with physics-informed splines.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="synthesize benchmark data from a config")
    s.add_argument("--config", required=True, help="config path or packaged config name")
    s.add_argument("--noise", type=float, help="override noise level (fraction of RMS)")
    s.add_argument("--seed", type=int, help="override noise seed")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("discover", help="discover equations from CSV data")
    d.add_argument("--data", nargs="+", required=True, help="one CSV per dataset")
    d.add_argument("--library", help="library spec text, @file, or builtin:<name>")
    d.add_argument("--config", help="config supplying hyperparameters and the reference")
    d.add_argument("--set", action="append", metavar="KEY=VALUE", help="hyperparameter override")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_discover)

    r = sub.add_parser("run", help="simulate, discover and validate from one config")
    r.add_argument("--config", required=True)
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="hyperparameter override")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="integrate a model against the true system")
    v.add_argument("--model", required=True)
    v.add_argument("--config", required=True, help="config naming the true system")
    v.add_argument("--ic", help="JSON list; default: first training IC")
    v.add_argument("--duration", type=float, default=5.0)
    v.add_argument("--rate", type=float, default=100.0)
    v.add_argument("--tolerance", type=float, default=0.1,
                   help="divergence threshold as a fraction of the state RMS")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_validate)

    b = sub.add_parser("baseline", help="Savitzky-Golay + sparse regression baseline")
    b.add_argument("--data", nargs="+", required=True)
    b.add_argument("--library")
    b.add_argument("--config")
    b.add_argument("--set", action="append", metavar="KEY=VALUE")
    b.add_argument("--window", type=int, default=21)
    b.add_argument("--polyorder", type=int, default=3)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baseline)

    c = sub.add_parser("score", help="compare a model with reference coefficients")
    c.add_argument("--model", required=True)
    g = c.add_mutually_exclusive_group(required=True)
    g.add_argument("--config", help="config whose system provides the reference")
    g.add_argument("--reference", help="JSON file {equation: {term: value}}")
    c.set_defaults(func=cmd_score)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TrainingError, IntegrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
