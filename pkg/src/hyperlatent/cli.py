"""Command-line front end.

Every subcommand reads an optional TOML (or JSON) config, validates it
before touching any output, stages its outputs in memory and writes them
only once the whole computation succeeded. Failures print one JSON line
``{"code": ..., "error": ..., "message": ...}`` on stderr and exit with

* 2: configuration error,
* 3: data error,
* 4: numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, _json
from .estimator import EstimationError, FitConfig, FitResult, NumericalFailure, fit
from .hypergraph import (
    Hypergraph,
    HypergraphError,
    audit_report,
    format_hyperlinks,
    incidence,
    read_hyperlinks,
)
from .inference import (
    TARGETS,
    confidence_ellipse,
    confidence_intervals,
    ellipses_svg,
    ellipses_to_dict,
    intervals_to_csv,
)
from .model import RankDeficiencyError
from .simulate import (
    SimDesign,
    experiment_coverage,
    experiment_error_scaling,
    experiment_sparsity,
    gen_ground_truth,
    gen_hypergraph,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("hyperlatent")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class ConfigError(ValueError):
    """Invalid command-line flags or config file contents."""


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------

SECTIONS = ("fit", "design", "infer", "ellipses", "experiment")

INFER_KEYS = {"level": 0.95, "targets": ["alpha_dagger", "z", "f"], "pairs": [], "diagonal": False}
ELLIPSE_KEYS = {"level": 0.95, "vertices": [], "size": 640}
EXPERIMENT_KEYS = {
    "experiment-error": {
        "n_grid": [100, 200],
        "K_grid": [2],
        "beta_grid": [-1.0],
        "m_ratio": 2.0,
        "rho": 0.0,
        "mc_reps": 5,
        "seed": 0,
    },
    "experiment-coverage": {
        "n_grid": [200],
        "beta_grid": [0.0, -1.0],
        "level": 0.95,
        "rho": 0.5,
        "mc_reps": 5,
        "seed": 0,
        "fixed_truth": True,
    },
    "experiment-sparsity": {
        "n_grid": [100, 200],
        "rate": "inverse",
        "a": 0.5,
        "m_ratio": 1.0,
        "mc_reps": 50,
        "seed": 0,
    },
}


def load_config(path) -> dict:
    """Read a TOML file, or JSON when the suffix is ``.json``."""
    if path is None:
        return {}
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    try:
        if p.suffix.lower() == ".json":
            cfg = json.loads(raw.decode("utf-8"))
        else:
            cfg = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a table")
    unknown = set(cfg) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    for name, section in cfg.items():
        if not isinstance(section, dict):
            raise ConfigError(f"config section [{name}] must be a table")
    return cfg


def _section(cfg: dict, name: str, defaults: dict) -> dict:
    section = dict(cfg.get(name, {}))
    unknown = set(section) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return defaults | section


def _dataclass_section(cfg: dict, name: str, cls, seed=None):
    section = dict(cfg.get(name, {}))
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    if seed is not None:
        section["seed"] = seed
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def _level(value) -> float:
    try:
        level = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"level must be a number, got {value!r}") from None
    if not 0 < level < 1:
        raise ConfigError("level must lie in (0, 1)")
    return level


# ---------------------------------------------------------------------------
# Output staging
# ---------------------------------------------------------------------------


class Outputs:
    """Collects output files and writes them together at the end."""

    def __init__(self, directory):
        self.directory = Path(directory) if directory is not None else None
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str) -> None:
        self.files[name] = text

    def check(self) -> None:
        if self.directory is None:
            raise ConfigError("--out is required for this command")
        if self.directory.exists() and not self.directory.is_dir():
            raise ConfigError(f"output path {self.directory} is not a directory")

    def commit(self) -> list[Path]:
        self.directory.mkdir(parents=True, exist_ok=True)
        written: list[Path] = []
        try:
            for name, text in self.files.items():
                target = self.directory / name
                tmp = target.with_name(target.name + ".part")
                with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(text)
                os.replace(tmp, target)
                written.append(target)
        except OSError:
            for path in written:
                path.unlink(missing_ok=True)
            for name in self.files:
                (self.directory / (name + ".part")).unlink(missing_ok=True)
            raise
        return written


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    header: list[str] = []
    for row in rows:
        header += [k for k in row if k not in header]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row[k]) if k in row else "" for k in header])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _read_input(path) -> Hypergraph:
    if path is None:
        raise ConfigError("an input hyperlink file is required")
    try:
        return read_hyperlinks(path)
    except OSError as exc:
        raise HypergraphError(f"cannot read {path}: {exc.strerror}") from None


def _load_fit(path) -> tuple[FitResult, list | None]:
    try:
        d = _json.load(path)
    except OSError as exc:
        raise HypergraphError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise HypergraphError(f"{path} is not valid JSON: {exc}") from None
    try:
        labels = d.pop("vertex_labels", None)
        return FitResult.from_dict(d), labels
    except (KeyError, TypeError, ValueError) as exc:
        raise HypergraphError(f"{path} is not a fit result: {exc}") from None


def cmd_audit(args, cfg, out: Outputs):
    hg = _read_input(args.input)
    report = {"n": hg.n, "m": hg.m} | audit_report(hg)
    report["links"] = [[hg.vertex_id(i) for i in e] for e in hg.links]
    text = _json.dumps(report)
    if out.directory is not None:
        out.add("audit.json", text)
    return text


def cmd_simulate(args, cfg, out: Outputs):
    out.check()
    design = _dataclass_section(cfg, "design", SimDesign, args.seed)
    gt = gen_ground_truth(design)
    hg = gen_hypergraph(gt, np.random.SeedSequence([design.seed, 1]))
    truth = {"design": design.to_dict(), "params": gt.params.to_dict(), "groups": gt.groups + 1}
    out.add("hyperlinks.txt", format_hyperlinks(hg))
    out.add("truth.json", _json.dumps(truth))


def cmd_fit(args, cfg, out: Outputs):
    out.check()
    config = _dataclass_section(cfg, "fit", FitConfig, args.seed)
    hg = _read_input(args.input)
    result = fit(incidence(hg), config)
    log.info(
        "fit: %d iterations, converged=%s, loglik=%.6f", result.iterations, result.converged, result.loglik
    )
    d = result.to_dict()
    d["vertex_labels"] = list(hg.labels) if hg.labels else None
    out.add("fit.json", _json.dumps(d))


def _pairs(opts: dict, m: int, n: int):
    pairs = [tuple(p) for p in opts["pairs"]]
    for p in pairs:
        if len(p) != 2 or not all(isinstance(v, int) for v in p):
            raise ConfigError(f"pairs entries must be [j, i] integer pairs, got {list(p)}")
    j = [p[0] - 1 for p in pairs]
    i = [p[1] - 1 for p in pairs]
    if opts["diagonal"]:
        d = list(range(min(m, n)))
        j, i = j + d, i + d
    if any(not 0 <= v < m for v in j) or any(not 0 <= v < n for v in i):
        raise ConfigError("pair indices out of range")
    return (np.array(j, dtype=np.int64), np.array(i, dtype=np.int64)) if j else None


def cmd_infer(args, cfg, out: Outputs):
    out.check()
    opts = _section(cfg, "infer", INFER_KEYS)
    level = _level(opts["level"])
    targets = list(opts["targets"])
    bad = set(targets) - set(TARGETS)
    if bad:
        raise ConfigError(f"unknown targets {sorted(bad)}")
    result, _ = _load_fit(args.input)
    u = result.params
    pairs = _pairs(opts, u.m, u.n)
    if pairs is None and {"theta", "p"} & set(targets):
        raise ConfigError("theta/p targets need [infer] pairs or diagonal = true")
    base = [t for t in targets if t in ("alpha_dagger", "z", "f")]
    sets = confidence_intervals(result, level=level, targets=base, pairs=pairs)
    sets = {k: v for k, v in sets.items() if k in targets}
    out.add("intervals.csv", intervals_to_csv(sets))


def _resolve_vertices(names, labels, n) -> list[int]:
    if not names:
        return list(range(n))
    lookup = {str(lab): k for k, lab in enumerate(labels)} if labels else {}
    out = []
    for name in names:
        if lookup and str(name) in lookup:
            out.append(lookup[str(name)])
            continue
        try:
            idx = int(name) - 1
        except (TypeError, ValueError):
            raise ConfigError(f"unknown vertex {name!r}") from None
        if not 0 <= idx < n:
            raise ConfigError(f"vertex id {name} outside 1..{n}")
        out.append(idx)
    return out


def cmd_ellipses(args, cfg, out: Outputs):
    out.check()
    opts = _section(cfg, "ellipses", ELLIPSE_KEYS)
    level = _level(opts["level"])
    names = args.vertices.split(",") if args.vertices else list(opts["vertices"])
    result, labels = _load_fit(args.input)
    if result.params.K != 2:
        raise ConfigError(f"ellipses need a K = 2 fit, got K = {result.params.K}")
    vertices = _resolve_vertices(names, labels, result.params.n)
    ellipses = [confidence_ellipse(result, i, level) for i in vertices]
    out.add("ellipses.json", _json.dumps(ellipses_to_dict(ellipses, labels)))
    out.add("ellipses.svg", ellipses_svg(result, ellipses, labels, int(opts["size"]), __version__))


def cmd_experiment(args, cfg, out: Outputs):
    out.check()
    opts = _section(cfg, "experiment", EXPERIMENT_KEYS[args.command])
    seed = args.seed if args.seed is not None else int(opts.pop("seed"))
    opts.pop("seed", None)
    threads = max(1, args.threads)
    if args.command == "experiment-sparsity":
        rows = experiment_sparsity(seed=seed, **opts)
        out.add("sparsity.csv", rows_to_csv(rows))
        return
    config = _dataclass_section(cfg, "fit", FitConfig)
    try:
        if args.command == "experiment-error":
            rows, summary = experiment_error_scaling(seed=seed, config=config, threads=threads, **opts)
        else:
            opts["level"] = _level(opts["level"])
            rows, summary = experiment_coverage(seed=seed, config=config, threads=threads, **opts)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    out.add("raw.csv", rows_to_csv(rows))
    out.add("summary.csv", rows_to_csv(summary))


COMMANDS = {
    "audit": cmd_audit,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "infer": cmd_infer,
    "ellipses": cmd_ellipses,
    "experiment-error": cmd_experiment,
    "experiment-coverage": cmd_experiment,
    "experiment-sparsity": cmd_experiment,
}

HELP = {
    "audit": "print null vertices, empty hyperlinks and density as JSON",
    "simulate": "draw ground truth and a hypergraph from [design]",
    "fit": "fit the model to a hyperlink file",
    "infer": "confidence intervals from a fit",
    "ellipses": "SVG of vertex embeddings with confidence ellipses",
    "experiment-error": "estimation error over a design grid",
    "experiment-coverage": "confidence interval coverage over a design grid",
    "experiment-sparsity": "empty hyperlink / null vertex frequencies",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for experiments")
    common.add_argument("--quiet", action="store_true", help="only report errors")
    parser = _Parser(prog="hyperlatent", description="Latent embedding models for hypergraphs.")
    parser.add_argument("--version", action="version", version=f"hyperlatent {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=HELP[name])
        if name in ("audit", "fit"):
            p.add_argument("input", help="hyperlink file")
        elif name in ("infer", "ellipses"):
            p.add_argument("input", help="fit.json written by the fit command")
        if name == "ellipses":
            p.add_argument("--vertices", help="comma-separated labels or 1-based ids")
    return parser


def _fail(code: int, exc: BaseException) -> int:
    record = {"code": code, "error": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(json.dumps(record) + "\n")
    return code


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    logging.basicConfig(format="%(message)s")
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    out = Outputs(args.out)
    try:
        cfg = load_config(args.config)
        printed = COMMANDS[args.command](args, cfg, out)
        if out.files:
            for path in out.commit():
                log.info("wrote %s", path)
        if printed is not None:
            sys.stdout.write(printed)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except (NumericalFailure, RankDeficiencyError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (HypergraphError, EstimationError, OSError, ValueError) as exc:
        return _fail(EXIT_DATA, exc)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
