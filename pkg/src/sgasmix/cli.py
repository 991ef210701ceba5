"""Command-line front end: ``sgasmix {fit,select-k,simulate,eval,bench-example1}``.

Exit status is 0 on success, 2 for unusable input (bad CSV, bad model file,
bad flags) and 3 when the fit itself degenerates after its restarts.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .bench import run_bench, summarize
from .em import FitConfig, FitResult, fit, select_k
from .errors import DomainError, SgasError
from .metrics import adjusted_rand_index, confusion_table
from .sgas import MixtureModel, SgasComponent, mixture_sample

log = logging.getLogger("sgasmix")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3
MODEL_FORMAT = "sgasmix-model"


class InputError(Exception):
    """Unusable input file or flag; maps to exit status 2."""


# ---------------------------------------------------------------------------
# CSV


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_table(path) -> tuple:
    """Parse a comma-separated numeric table.

    A first row with any non-numeric field is taken as a header.  Returns
    ``(header or None, rows as a list of string lists, first data line number)``.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1)
                    if r and any(c.strip() for c in r)]
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise InputError(f"{path}: {exc}") from exc
    if not rows:
        raise InputError(f"{path}: file is empty")
    header = None
    if not all(_is_number(c) for c in rows[0][1]):
        header = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
    return header, rows


def read_matrix(path, drop: Sequence[str] = ("label",)):
    """Numeric matrix from a CSV; header columns named in ``drop`` are skipped."""
    header, rows = read_table(path)
    keep = None
    if header is not None:
        keep = [i for i, name in enumerate(header) if name.lower() not in drop]
        if len(keep) < len(header):
            log.info("ignoring column(s) %s", [h for h in header if h.lower() in drop])
    width = len(header) if header is not None else len(rows[0][1]) if rows else 0
    values = []
    for line, row in rows:
        if len(row) != width:
            raise InputError(f"{path}: line {line}: expected {width} fields, got {len(row)}")
        try:
            parsed = [float(c) for c in row]
        except ValueError:
            raise InputError(f"{path}: line {line}: non-numeric field") from None
        if not all(math.isfinite(x) for x in parsed):
            raise InputError(f"{path}: line {line}: non-finite value")
        values.append(parsed if keep is None else [parsed[i] for i in keep])
    if not values:
        raise InputError(f"{path}: no data rows")
    return np.array(values, dtype=float), header


def read_labels(path) -> np.ndarray:
    """Integer labels from the ``label`` column if there is one, else the first column."""
    header, rows = read_table(path)
    col = 0
    if header is not None and "label" in [h.lower() for h in header]:
        col = [h.lower() for h in header].index("label")
    out = []
    for line, row in rows:
        try:
            value = float(row[col])
        except (ValueError, IndexError):
            raise InputError(f"{path}: line {line}: missing or non-numeric label") from None
        if value != int(value):
            raise InputError(f"{path}: line {line}: label {row[col]!r} is not an integer")
        out.append(int(value))
    if not out:
        raise InputError(f"{path}: no labels")
    return np.array(out)


def _fmt(x) -> str:
    return repr(float(x))


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# model and manifest files


def model_to_dict(model: MixtureModel, **extra) -> dict:
    out = {"format": MODEL_FORMAT, "version": 1, "dimension": model.d, "k": model.k,
           "components": [{"weight": c.weight, "alpha": c.alpha, "mu": c.mu.tolist(),
                           "sigma": c.sigma.ravel().tolist()} for c in model.components]}
    out.update(extra)
    return out


def model_from_dict(obj) -> MixtureModel:
    """Inverse of :func:`model_to_dict`; any inconsistency raises :class:`InputError`."""
    try:
        if obj.get("format") != MODEL_FORMAT:
            raise InputError(f"not a {MODEL_FORMAT} file")
        d = int(obj["dimension"])
        comps = []
        for j, c in enumerate(obj["components"]):
            sigma = np.asarray(c["sigma"], dtype=float)
            if len(c["mu"]) != d or sigma.size != d * d:
                raise InputError(f"component {j} does not match dimension {d}")
            comps.append(SgasComponent(float(c["alpha"]), c["mu"], sigma.reshape(d, d),
                                       float(c["weight"])))
        if "k" in obj and int(obj["k"]) != len(comps):
            raise InputError("component count does not match k")
        return MixtureModel(comps)
    except InputError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise InputError(f"invalid model: {exc}") from exc


def load_model(path) -> MixtureModel:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    return model_from_dict(obj)


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class RunManifest:
    command: str
    seed: int
    threads: int
    config: Dict[str, object] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    events: List[dict] = field(default_factory=list)
    outputs: Dict[str, str] = field(default_factory=dict)
    summary: Dict[str, object] = field(default_factory=dict)
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))


class _Timer:
    def __init__(self):
        self.timings: Dict[str, float] = {}

    @contextmanager
    def __call__(self, phase):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[phase] = time.perf_counter() - t0


# ---------------------------------------------------------------------------
# commands


def _parse_k_range(text: str) -> List[int]:
    lo, sep, hi = text.partition("..")
    try:
        ks = list(range(int(lo), int(hi) + 1)) if sep else [int(lo)]
    except ValueError:
        raise InputError(f"bad --k-range {text!r}, expected a..b") from None
    if not ks or ks[0] < 1:
        raise InputError(f"bad --k-range {text!r}")
    return ks


def _fit_config(args, k: int = 1) -> FitConfig:
    try:
        return FitConfig(k=k, n_iter=args.iters, burn_in=args.burnin, seed=args.seed,
                         fixed_alpha=args.fixed_alpha, workers=args.threads)
    except DomainError as exc:
        raise InputError(str(exc)) from exc


def _write_fit(result: FitResult, out_dir: Path, manifest: RunManifest) -> None:
    model_path = out_dir / "model.json"
    labels_path = out_dir / "labels.csv"
    write_json(model_path, model_to_dict(result.model, bic=result.bic, loglik=result.loglik,
                                          n=int(result.labels.size)))
    k = result.model.k
    write_csv(labels_path, ["label"] + [f"r{j + 1}" for j in range(k)],
              ([int(lab)] + [_fmt(x) for x in row] for lab, row in zip(result.labels, result.e1)))
    manifest.outputs.update(model=str(model_path), labels=str(labels_path),
                            manifest=str(out_dir / "manifest.json"))


def cmd_fit(args) -> int:
    timer = _Timer()
    with timer("read"):
        data, _ = read_matrix(args.csv)
    ks = _parse_k_range(args.k_range) if args.k_range else [args.k]
    config = _fit_config(args, k=ks[0])
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with timer("fit"):
        try:
            if len(ks) == 1 and not args.k_range:
                result = fit(data, config)
                result.bic_table = {ks[0]: result.bic}
            else:
                result = select_k(data, ks, config)
        except DomainError as exc:
            raise InputError(str(exc)) from exc
    manifest = RunManifest(args.command, args.seed, args.threads,
                           config={k: v for k, v in vars(config).items()},
                           events=result.events)
    manifest.summary = {"n": int(data.shape[0]), "d": int(data.shape[1]), "k": result.model.k,
                        "bic": result.bic, "loglik": result.loglik,
                        "n_restarts": result.n_restarts,
                        "bic_table": [[k, b] for k, b in sorted(result.bic_table.items())]}
    with timer("write"):
        _write_fit(result, out_dir, manifest)
    manifest.timings = timer.timings
    (out_dir / "manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")
    print(f"K={result.model.k} BIC={result.bic:.4f} loglik={result.loglik:.4f}")
    for k, b in sorted(result.bic_table.items()):
        if len(result.bic_table) > 1:
            print(f"  K={k}: " + ("failed/skipped" if b is None else f"{b:.4f}"))
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    if args.n < 0:
        raise InputError("--n must be non-negative")
    rng = np.random.default_rng(args.seed)
    data, labels = mixture_sample(model, args.n, rng)
    out = Path(args.out) if args.out else Path(args.out_dir) / "draws.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, [f"y{i + 1}" for i in range(model.d)] + ["label"],
              ([_fmt(x) for x in row] + [int(lab)] for row, lab in zip(data, labels)))
    print(f"wrote {args.n} rows to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    a = read_labels(args.labels_a)
    b = read_labels(args.labels_b)
    if a.size != b.size:
        raise InputError(f"label files differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise InputError("need at least two labels")
    ari = adjusted_rand_index(a, b)
    table, t_vals, p_vals = confusion_table(a, b)
    print(f"ARI {ari:.6f}")
    width = max(6, *(len(str(v)) + 1 for v in np.concatenate([t_vals, p_vals])))
    print(" " * width + "".join(f"{v:>{width}}" for v in p_vals))
    for tv, row in zip(t_vals, table):
        print(f"{tv:>{width}}" + "".join(f"{c:>{width}}" for c in row))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "confusion.csv", ["truth", "predicted", "count"],
              ([int(tv), int(pv), int(table[i, j])]
               for i, tv in enumerate(t_vals) for j, pv in enumerate(p_vals)))
    write_csv(out_dir / "ari.csv", ["ari"], [[_fmt(ari)]])
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.reps < 1:
        raise InputError("--reps must be at least 1")
    config = _fit_config(args, k=3)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timer = _Timer()
    with timer("bench"):
        records = run_bench(args.reps, args.seed, config, generator=args.generator,
                            n=args.n, scale=args.scale)
    write_csv(out_dir / "bench.csv",
              ["rep", "status", "ari", "max_location_error", "alpha1", "alpha2", "alpha3",
               "n_restarts"],
              ([r.rep, r.status, "" if r.ari is None else _fmt(r.ari),
                "" if r.max_location_error is None else _fmt(r.max_location_error)]
               + ([_fmt(a) for a in r.alphas] if r.alphas else ["", "", ""]) + [r.n_restarts]
               for r in records))
    summary = summarize(records)
    manifest = RunManifest(args.command, args.seed, args.threads,
                           config=dict(vars(config), reps=args.reps, generator=args.generator,
                                       n=args.n, scale=args.scale),
                           events=[{"kind": "replicate_failed", "rep": r.rep, "reason": r.message}
                                   for r in records if r.status != "ok"],
                           outputs={"bench": str(out_dir / "bench.csv")}, summary=summary,
                           timings=timer.timings)
    (out_dir / "manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")
    print(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
                   for k, v in summary.items()))
    return EXIT_OK


def _add_fit_flags(p):
    p.add_argument("--iters", type=int, default=70, help="total iterations N")
    p.add_argument("--burnin", type=int, default=40, help="iterations discarded before averaging")
    p.add_argument("--fixed-alpha", type=float, default=None,
                   help="hold every tail index at this value")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out-dir", default=".")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sgasmix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit a mixture to a CSV")
    p.add_argument("csv")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--k", type=int, default=1)
    group.add_argument("--k-range", default=None, help="a..b, choose K by BIC")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select-k", parents=[common], help="fit K in a..b and keep the lowest BIC")
    p.add_argument("csv")
    p.add_argument("--k-range", required=True, help="a..b")
    p.set_defaults(k=None)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", parents=[common], help="draw rows from a model.json")
    p.add_argument("model")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", default=None, help="output CSV (default OUT_DIR/draws.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", parents=[common], help="ARI and confusion table of two label files")
    p.add_argument("labels_a")
    p.add_argument("labels_b")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench-example1", parents=[common],
                       help="repeated simulate-fit-score runs on the three-cluster benchmark")
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--generator", choices=("sgas", "mt"), default="sgas")
    p.add_argument("--n", type=int, default=600)
    p.add_argument("--scale", type=float, default=1.0, help="multiplier on the true locations")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SgasError as exc:
        print(f"error: fit degenerated: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
