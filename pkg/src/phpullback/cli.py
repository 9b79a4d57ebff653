"""Command-line entry point: ``phpullback <command> ...`` (or ``python3 -m phpullback``)."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import struct
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analysis
from .config import ConfigError, build_config, encoding_spec, grid_cells, with_cell
from .datagen import (Dataset, dilated_circles, ellipse_grid, load_directory, rfp_dataset,
                      write_directory)
from .geometry import ChartValidityWarning, read_cloud
from .parallel import default_workers
from .persistence import write_diagram_csv
from .pimage import PersistenceImage, write_pi_csv
from .pullback import (persistence_diagram, saliency, unit_ball_axes, validate_jacobian)
from .vectorfields import FieldSample, write_field_csv

F = "%.17g"


# --- output plumbing ------------------------------------------------------

class Outputs:
    """Collects written files; ``finish`` writes results.json (and diagnostics.json)."""

    def __init__(self, out: Path, command: str, cfg: dict):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.files: list[Path] = []
        self.diagnostics: dict = {}

    def path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(p)
        return p

    def csv(self, name: str, header, rows) -> Path:
        p = self.path(name)
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if header:
                w.writerow(header)
            for r in rows:
                w.writerow([F % v if isinstance(v, (float, np.floating)) else v for v in r])
        return p

    def add_diagnostic(self, cloud_id: str, report: dict):
        if report.get("generic", True) and not self.cfg.get("_genericity_report"):
            return
        self.diagnostics[str(cloud_id)] = {
            "generic": bool(report.get("generic", True)),
            "n_ties": len(report.get("ties", ())),
            "n_near_threshold": len(report.get("near_threshold", ())),
            "n_knn_ties": len(report.get("knn_ties", ())),
            "ties": [list(map(str, t)) for t in report.get("ties", ())[:20]],
            "near_threshold": [list(t) for t in report.get("near_threshold", ())[:20]],
        }

    def finish(self, summary=None) -> None:
        if self.diagnostics:
            p = self.path("diagnostics.json")
            p.write_text(json.dumps(self.diagnostics, indent=2, sort_keys=True) + "\n")
            for cid, d in self.diagnostics.items():
                if not d["generic"]:
                    print(f"warning: cloud {cid} is not in generic position "
                          f"(see diagnostics.json)", file=sys.stderr)
        entries = []
        for p in self.files:
            data = p.read_bytes()
            entries.append({"path": str(p.relative_to(self.out)), "bytes": len(data),
                            "sha256": hashlib.sha256(data).hexdigest()})
        cfg = {k: v for k, v in self.cfg.items() if not k.startswith("_")}
        index = {"command": self.command, "config": cfg, "files": entries}
        if summary is not None:
            index["summary"] = summary
        (self.out / "results.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")


def verify_results(out) -> list:
    """Files whose checksum no longer matches results.json."""
    out = Path(out)
    index = json.loads((out / "results.json").read_text())
    bad = []
    for e in index["files"]:
        p = out / e["path"]
        if not p.exists() or hashlib.sha256(p.read_bytes()).hexdigest() != e["sha256"]:
            bad.append(e["path"])
    return bad


def write_jacobian_bin(M: np.ndarray, path) -> None:
    """Header: two little-endian uint64 (n rows, m cols); then row-major float64."""
    M = np.ascontiguousarray(M, dtype="<f8")
    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<QQ", *M.shape))
        fh.write(M.tobytes())


def read_jacobian_bin(path) -> np.ndarray:
    data = Path(path).read_bytes()
    n, m = struct.unpack("<QQ", data[:16])
    return np.frombuffer(data[16:], dtype="<f8").reshape(n, m).copy()


# --- argument handling ----------------------------------------------------

def _floats(text: str) -> list:
    return [float(v) for v in text.split(",")]


ENCODING_FLAGS = [
    # flag, dotted key in the encoding block, converter
    ("--filtration", "filtration.kind", str),
    ("--max-edge", "filtration.max_edge", float),
    ("--k-neighbors", "filtration.k_neighbors", int),
    ("--m", "filtration.m", float),
    ("--direction", "filtration.direction", _floats),
    ("--degree", "k", int),
    ("--max-dim", "max_dim", int),
    ("--cap", "cap", float),
    ("--resolution", "pi.resolution", int),
    ("--variance", "pi.variance", float),
    ("--x-range", "pi.x_range", _floats),
    ("--y-range", "pi.y_range", _floats),
    ("--weighting", "pi.weighting.kind", str),
    ("--l-max", "pi.weighting.l_max", float),
    ("--k-mean", "pi.weighting.k_mean", float),
    ("--s2", "pi.weighting.s2", float),
    ("--kappa", "pi.weighting.kappa", float),
    ("--quad", "pi.quad", str),
]


def _dest(flag: str) -> str:
    return "enc_" + flag.lstrip("-").replace("-", "_")


def _add_common(p: argparse.ArgumentParser, encoding=True):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (dotted key, JSON value)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, help="seed for every random draw")
    p.add_argument("--threads", type=int, help="worker processes (default: $PHPULLBACK_THREADS or 1)")
    if encoding:
        g = p.add_argument_group("encoding")
        for flag, _, _ in ENCODING_FLAGS:
            g.add_argument(flag, dest=_dest(flag), default=None)
        g.add_argument("--genericity-report", action="store_true",
                       help="write per-cloud tie diagnostics even for generic clouds")


def _cli_overrides(args, allow_grid=False) -> dict:
    from .config import set_dotted
    cli: dict = {}
    enc: dict = {}
    grid: dict = {}
    for flag, key, conv in ENCODING_FLAGS:
        raw = getattr(args, _dest(flag), None)
        if raw is None:
            continue
        if ":" in raw:
            if not allow_grid:
                raise ConfigError(f"{flag}: grids are only accepted by sweep")
            grid[key] = raw
            continue
        try:
            set_dotted(enc, key, conv(raw))
        except ValueError:
            raise ConfigError(f"{flag}: cannot parse {raw!r}") from None
    if enc:
        cli["encoding"] = enc
    if grid:
        cli["grid"] = grid
    if getattr(args, "seed", None) is not None:
        cli["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        cli["threads"] = args.threads
    if getattr(args, "perturbations", None):
        cli["perturbations"] = args.perturbations.split(",")
    if getattr(args, "raw", False):
        cli["normalize_fields"] = False
    if getattr(args, "field", None):
        cli["field"] = args.field
    return cli


def _config(args, allow_grid=False) -> dict:
    cfg = build_config(args.config, args.set, _cli_overrides(args, allow_grid))
    cfg["_genericity_report"] = bool(getattr(args, "genericity_report", False))
    return cfg


def _workers(cfg) -> int:
    return cfg["threads"] if cfg.get("threads") else default_workers()


def _dataset(path, cfg) -> Dataset:
    if path:
        p = Path(path)
        if p.is_dir():
            return load_directory(p)
        return Dataset([read_cloud(p)])
    if "dir" in cfg["dataset"]:
        return load_directory(cfg["dataset"]["dir"])
    if "generator" in cfg["dataset"]:
        return generate(dict(cfg["dataset"]["generator"]), cfg["seed"])
    raise ConfigError("no input: give a cloud file or dataset directory, or dataset.dir in the config")


def generate(gen: dict, seed: int) -> Dataset:
    family = gen.pop("family")
    gen.setdefault("seed", seed)
    if family == "rfp":
        return rfp_dataset(**gen)
    if family == "ellipse":
        return ellipse_grid(**gen)
    if family == "circles":
        return dilated_circles(**gen)
    raise ConfigError(f"unknown generator {family!r}")


def _single(path):
    p = Path(path)
    if p.is_dir():
        raise ConfigError(f"{p} is a directory; this command takes one cloud file")
    return read_cloud(p)


# --- commands -------------------------------------------------------------

def cmd_gen(args):
    cfg = _config(args)
    gen = {"family": args.family}
    if args.n_points is not None:
        gen["n_points"] = args.n_points
    if args.jitter is not None:
        gen["jitter"] = args.jitter
    ds = generate(gen, cfg["seed"])
    o = Outputs(args.out, "gen", cfg)
    for p in write_directory(ds, o.out, args.family, cfg["seed"]):
        o.files.append(p)
    o.finish({"n_clouds": len(ds)})
    print(f"wrote {len(ds)} clouds to {o.out}")


def cmd_pd(args):
    cfg = _config(args)
    spec = encoding_spec(cfg["encoding"])
    X = _single(args.input)
    cx, dgm = persistence_diagram(X, spec)
    o = Outputs(args.out, "pd", cfg)
    if args.no_cap:
        from .persistence import reduce
        dgm = reduce(cx, spec.k)
    write_diagram_csv(dgm, o.path(f"{X.id}_pd.csv"))
    o.add_diagnostic(X.id, cx.diagnostics)
    o.finish({"n_pairs": len(dgm)})


def cmd_pi(args):
    cfg = _config(args)
    spec = encoding_spec(cfg["encoding"])
    o = Outputs(args.out, "pi", cfg)
    from .pullback import encode
    for X in _dataset(args.input, cfg):
        write_pi_csv(PersistenceImage(encode(X, spec), spec.pi), o.path(f"{X.id}_pi.csv"))
    o.finish()


def _jacs(ds, cfg, spec, o):
    from .pullback import jacobians
    jacs = jacobians(list(ds), spec, _workers(cfg))
    for X, J in zip(ds, jacs):
        o.add_diagnostic(X.id, J.diagnostics)
    return jacs


def cmd_jacobian(args):
    cfg = _config(args)
    spec = encoding_spec(cfg["encoding"])
    o = Outputs(args.out, "jacobian", cfg)
    ds = _dataset(args.input, cfg)
    for X, J in zip(ds, _jacs(ds, cfg, spec, o)):
        write_jacobian_bin(J.matrix, o.path(f"{X.id}_jacobian.bin"))
    o.finish()


def cmd_spectrum(args):
    cfg = _config(args)
    spec = encoding_spec(cfg["encoding"])
    o = Outputs(args.out, "spectrum", cfg)
    ds = _dataset(args.input, cfg)
    jacs = _jacs(ds, cfg, spec, o)
    summ = analysis.spectrum_summary(jacs, cfg["rank_rtol"], cfg["decay_threshold"])
    rows = []
    for X, S in zip(ds, summ.spectra):
        norm = S.singular_values / S.singular_values[0] if S.rank else np.zeros_like(S.singular_values)
        rows += [(X.id, i + 1, float(s), float(r)) for i, (s, r) in enumerate(zip(S.singular_values, norm))]
    o.csv("spectrum.csv", ["cloud", "index", "lambda", "lambda_over_lambda1"], rows)
    o.csv("spectrum_summary.csv", ["cloud", "rank", "decay_index"],
          [(X.id, int(r), int(d)) for X, r, d in zip(ds, summ.ranks, summ.decay_indices)])
    s = {"mean_rank": summ.mean_rank, "mean_decay_index": summ.mean_decay_index}
    o.finish(s)
    print(json.dumps(s))


def _fieldset(ds, cfg):
    return analysis.perturbation_fields(ds, cfg["perturbations"], cfg["perturbation_rel"],
                                        cfg["seed"], cfg["normalize_fields"])


def cmd_align(args):
    cfg = _config(args)
    spec = encoding_spec(cfg["encoding"])
    o = Outputs(args.out, "align", cfg)
    ds = _dataset(args.input, cfg)
    jacs = _jacs(ds, cfg, spec, o)
    fs = _fieldset(ds, cfg)
    from .pullback import alignment_table
    k = cfg["top_k"]
    names, table = alignment_table(ds, fs.fields, spec, k, jacs=jacs)
    o.csv("alignment.csv", ["perturbation"] + [f"q{i + 1}" for i in range(k)],
          [(n, *map(float, row)) for n, row in zip(names, table)])
    o.finish({"chart_warnings": fs.chart_warnings})


def cmd_pbnorm(args):
    cfg = _config(args)
    spec = encoding_spec(cfg["encoding"])
    o = Outputs(args.out, "pbnorm", cfg)
    ds = _dataset(args.input, cfg)
    jacs = _jacs(ds, cfg, spec, o)
    fs = _fieldset(ds, cfg)
    rows = analysis.norms_table(ds, fs.fields, spec, normalized=not args.unnormalized, jacs=jacs)
    o.csv("norms.csv", ["perturbation", "mean", "std_error"], rows)
    o.finish({"chart_warnings": fs.chart_warnings})


def cmd_bures(args):
    cfg = _config(args)
    encs = cfg["encodings"] or [
        {"name": "rips", "filtration": {"kind": "rips"}},
        {"name": "dtm", "filtration": {"kind": "dtm"}},
        {"name": "height", "filtration": {"kind": "height"}},
    ]
    from .config import deep_merge
    specs, names = [], []
    for i, e in enumerate(encs):
        e = dict(e)
        names.append(e.pop("name", f"enc{i}"))
        base = {k: v for k, v in cfg["encoding"].items() if k != "filtration"}
        specs.append(encoding_spec(deep_merge(base, e)))
    o = Outputs(args.out, "bures", cfg)
    ds = _dataset(args.input, cfg)
    M = analysis.bures_matrix(ds, specs, normalize=not args.unnormalized, workers=_workers(cfg))
    o.csv("bures.csv", ["encoding"] + names, [(n, *map(float, row)) for n, row in zip(names, M)])
    o.finish()


def cmd_saliency(args):
    cfg = _config(args)
    spec = encoding_spec(cfg["encoding"])
    o = Outputs(args.out, "saliency", cfg)
    ds = _dataset(args.input, cfg)
    for X, J in zip(ds, _jacs(ds, cfg, spec, o)):
        s = saliency(X, spec, J)
        o.csv(f"{X.id}_saliency.csv", ["index", "score"], [(i, float(v)) for i, v in enumerate(s)])
    o.finish()


def cmd_gradfield(args):
    cfg = _config(args)
    spec = encoding_spec(cfg["encoding"])
    o = Outputs(args.out, "gradfield", cfg)
    ds = _dataset(args.input, cfg)
    if ds.labels is None:
        raise ConfigError("gradfield needs labels (manifest.json)")
    vecs = analysis.gradient_fields(ds, args.method)
    for X, v in zip(ds, vecs):
        write_field_csv(FieldSample(X, v), o.path(f"fields/{X.id}_field.csv"))
    jacs = _jacs(ds, cfg, spec, o)
    rows = analysis.norms_table(ds, {f"gradient_{args.method}": vecs}, spec,
                                normalized=not args.unnormalized, jacs=jacs)
    o.csv("norms.csv", ["field", "mean", "std_error"], rows)
    o.finish()


def cmd_unitball(args):
    cfg = _config(args)
    spec = encoding_spec(cfg["encoding"])
    o = Outputs(args.out, "unitball", cfg)
    ds = _dataset(args.input, cfg)
    for X, J in zip(ds, _jacs(ds, cfg, spec, o)):
        try:
            axes = unit_ball_axes(J, cfg["rank_rtol"])
        except ValueError as e:
            print(f"warning: {X.id}: {e}", file=sys.stderr)
            continue
        m = X.n * X.dim
        o.csv(f"{X.id}_unitball.csv", ["index", "semi_length"] + [f"q{j}" for j in range(m)],
              [(i + 1, float(s), *map(float, q)) for i, (q, s) in enumerate(axes)])
    o.finish()


def cmd_sweep(args):
    cfg = _config(args, allow_grid=True)
    o = Outputs(args.out, "sweep", cfg)
    ds = _dataset(args.input, cfg)
    fname = cfg["field"]
    if fname.startswith("gradient"):
        method = fname.split(":", 1)[1] if ":" in fname else "fdm"
        vecs = analysis.gradient_fields(ds, method)
    else:
        vecs = analysis.perturbation_fields(ds, [fname], cfg["perturbation_rel"], cfg["seed"],
                                            cfg["normalize_fields"]).fields[fname]
    keys, cells = grid_cells(cfg["grid"])
    rows = []
    for values in cells:
        spec = encoding_spec(with_cell(cfg["encoding"], keys, values))
        res = analysis.sweep_cell(ds, spec, vecs, _workers(cfg), cfg["rank_rtol"])
        for cid in res["non_generic"]:
            o.diagnostics.setdefault(str(cid), {"generic": False, "cells": []})
            o.diagnostics[str(cid)].setdefault("cells", []).append(list(values))
        rows.append((*values, res["mean_rank"], res["mean_norm"], res["stderr_norm"]))
        print(" ".join(f"{k}={v:.6g}" for k, v in zip(keys, values)),
              f"rank={res['mean_rank']:.3f} norm={res['mean_norm']:.6g}", file=sys.stderr)
    o.csv("sweep.csv", [*keys, "mean_rank", "mean_norm", "std_error"], rows)
    o.finish()


def cmd_validate(args):
    cfg = _config(args)
    spec = encoding_spec(cfg["encoding"])
    o = Outputs(args.out, "validate-jacobian", cfg)
    ok = True
    reports = {}
    for X in _dataset(args.input, cfg):
        r = validate_jacobian(X, spec, h=args.h, floor=args.floor)
        passed = r.passed(args.tol)
        ok &= passed
        reports[str(X.id)] = {"max_rel_error": r.max_rel_error, "entries_checked": r.n_checked,
                              "worst_entry": list(r.worst), "passed": passed,
                              "template_changes": r.template_changes}
        print(f"{X.id}: max rel error {r.max_rel_error:.3e} over {r.n_checked} entries "
              f"-> {'PASS' if passed else 'FAIL'}")
    p = o.path("validation.json")
    p.write_text(json.dumps(reports, indent=2, sort_keys=True) + "\n")
    o.finish({"passed": ok, "tol": args.tol, "h": args.h})
    return 0 if ok else 1


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phpullback", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset directory")
    p.add_argument("--family", choices=["rfp", "ellipse", "circles"], default="rfp")
    p.add_argument("--n-points", type=int)
    p.add_argument("--jitter", type=float)
    _add_common(p, encoding=False)
    p.set_defaults(fn=cmd_gen)

    def single(name, fn, help, extra=None):
        q = sub.add_parser(name, help=help)
        q.add_argument("input", help="cloud file (CSV/JSON)")
        _add_common(q)
        if extra:
            extra(q)
        q.set_defaults(fn=fn)
        return q

    def dataset(name, fn, help, extra=None, aliases=()):
        q = sub.add_parser(name, help=help, aliases=list(aliases))
        q.add_argument("input", nargs="?", help="cloud file or dataset directory")
        _add_common(q)
        if extra:
            extra(q)
        q.set_defaults(fn=fn)
        return q

    single("pd", cmd_pd, "persistence diagram CSV",
           lambda q: q.add_argument("--no-cap", action="store_true", help="keep infinite deaths"))
    dataset("pi", cmd_pi, "persistence image CSV per cloud")
    dataset("jacobian", cmd_jacobian, "binary Jacobian dump per cloud")
    dataset("spectrum", cmd_spectrum, "singular values, rank and decay index")

    def fields_opts(q):
        q.add_argument("--perturbations", help="comma-separated families (default: all eight)")
        q.add_argument("--raw", action="store_true", help="do not normalize perturbation fields")

    dataset("align", cmd_align, "alignment of perturbation fields with top eigenvectors", fields_opts)

    def pb_opts(q):
        fields_opts(q)
        q.add_argument("--unnormalized", action="store_true", help="do not divide by lambda_1")

    dataset("pbnorm", cmd_pbnorm, "average pull-back norms of perturbation fields", pb_opts)
    dataset("bures", cmd_bures, "Bures-Wasserstein distances between encodings",
            lambda q: q.add_argument("--unnormalized", action="store_true"))
    dataset("saliency", cmd_saliency, "per-point saliency scores")

    def grad_opts(q):
        q.add_argument("--method", choices=["fdm", "icp"], default="fdm")
        q.add_argument("--unnormalized", action="store_true")

    dataset("gradfield", cmd_gradfield, "feature-gradient fields and their pull-back norms", grad_opts)
    dataset("unitball", cmd_unitball, "pull-back unit-ball semi-axes")

    def sweep_opts(q):
        q.add_argument("--field", help="'gradient', 'gradient:icp' or a perturbation family")
        q.add_argument("--raw", action="store_true")

    dataset("sweep", cmd_sweep, "grid sweep over encoding parameters", sweep_opts, aliases=("analyze",))

    def val_opts(q):
        q.add_argument("--h", type=float, default=1e-6)
        q.add_argument("--tol", type=float, default=1e-4)
        q.add_argument("--floor", type=float, default=1e-8)

    dataset("validate-jacobian", cmd_validate, "finite-difference self-test of the Jacobian", val_opts)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ChartValidityWarning)
            rc = args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
