"""transindex command line: index, heat, sample, fourier and suite runs.

Exit codes: 0 success, 1 crash, 2 a verdict failed, 3 invalid configuration.
"""
import argparse
import configparser
import csv
import dataclasses
import hashlib
import io
import json
import os
import sys
import time
import traceback
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

EXIT_OK, EXIT_CRASH, EXIT_VERDICT, EXIT_CONFIG = 0, 1, 2, 3
OUT_ENV = "TRANSINDEX_OUT"
MANIFEST_SCHEMA = "transindex-manifest/1"
COMMANDS = ("index", "heat", "sample", "fourier", "suite")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    seed: Optional[int] = None
    space: str = "hopf"
    q: Optional[int] = None
    twist: int = 1
    t: float = 0.05
    paths: int = 100_000
    h: Optional[float] = None
    K: int = 32
    order: int = 4
    cw_order: int = 12
    workers: int = 1
    t_grid: str = "0.05:0.5:10"
    points: int = 20
    m_max: int = 4
    bounds: bool = False
    quick: bool = False
    out: Optional[str] = None

    POSITIVE = ("t", "paths", "h", "K", "order", "cw_order", "workers", "points", "q")

    def validate(self, origin=None):
        origin = origin or {}

        def where(key):
            return f" ({origin[key]})" if key in origin else ""

        if self.seed is None:
            raise ConfigError("seed is required: pass --seed or set seed in the config file")
        for key in self.POSITIVE:
            v = getattr(self, key)
            if v is not None and not v > 0:
                raise ConfigError(f"{key} must be positive, got {v!r}{where(key)}")
        if self.m_max < 0:
            raise ConfigError(f"m_max must be >= 0{where('m_max')}")
        try:
            parse_t_grid(self.t_grid)
        except ValueError as e:
            raise ConfigError(f"t_grid: {e}{where('t_grid')}") from None
        from .geometry import catalog
        try:
            self.space_obj()
        except ValueError as e:
            raise ConfigError(f"{e}{where('space')}") from None
        return self

    def space_obj(self):
        from .geometry import catalog
        params = {"q": self.q} if self.q else {}
        return catalog(self.space, **params)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d.pop("out")
        return d


def parse_t_grid(text):
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ValueError("expected start:stop:count")
    a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    if not (0 < a <= b) or n < 1:
        raise ValueError("need 0 < start <= stop and count >= 1")
    return np.linspace(a, b, n)


# --------------------------------------------------------------------------
# configuration

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name, raw):
    default = _FIELDS[name].default
    if name in ("seed", "q", "paths", "K", "order", "cw_order", "workers", "points",
                "m_max", "twist"):
        return int(raw)
    if name in ("t", "h"):
        return float(raw)
    if name in ("bounds", "quick"):
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    return raw if default is None or isinstance(default, str) else type(default)(raw)


def read_config_file(path):
    """[experiment] section of an INI file -> (values, {key: 'file:line'})."""
    parser = configparser.ConfigParser()
    text = Path(path).read_text()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    if not parser.has_section("experiment"):
        raise ConfigError(f"{path}: missing [experiment] section")
    lines = {}
    for i, line in enumerate(text.splitlines(), start=1):
        key = line.split("=", 1)[0].strip().replace("-", "_")
        if "=" in line and key:
            lines.setdefault(key, i)
    values, origin = {}, {}
    for key, raw in parser.items("experiment"):
        name = key.replace("-", "_")
        loc = f"{path}:{lines.get(name, '?')}"
        if name not in _FIELDS or name == "command":
            raise ConfigError(f"{loc}: unknown key {key!r}")
        try:
            values[name] = _coerce(name, raw)
        except ValueError:
            raise ConfigError(f"{loc}: cannot read {key} = {raw!r}") from None
        origin[name] = loc
    return values, origin


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser():
    p = _Parser(prog="transindex", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("index", "two-sided index report"),
                        ("heat", "kernel against oracle tables and bound reports"),
                        ("sample", "path statistics"),
                        ("fourier", "projector checks and I_m table"),
                        ("suite", "acceptance battery and per-space summary")):
        c = sub.add_parser(name, help=help_)
        c.add_argument("--config", help="INI file with an [experiment] section")
        c.add_argument("--seed", type=int)
        c.add_argument("--space")
        c.add_argument("--q", type=int)
        c.add_argument("--twist", type=int)
        c.add_argument("--t", type=float)
        c.add_argument("--paths", type=int)
        c.add_argument("--h", type=float)
        c.add_argument("--K", type=int)
        c.add_argument("--order", type=int)
        c.add_argument("--cw-order", dest="cw_order", type=int)
        c.add_argument("--workers", type=int)
        c.add_argument("--t-grid", dest="t_grid")
        c.add_argument("--points", type=int)
        c.add_argument("--m-max", dest="m_max", type=int)
        c.add_argument("--bounds", action="store_true", default=None)
        c.add_argument("--quick", action="store_true", default=None)
        c.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./transindex-out)")
    return p


def load_config(argv):
    args = build_parser().parse_args(argv)
    values, origin = {}, {}
    if args.config:
        values, origin = read_config_file(args.config)
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None and name != "command":
            values[name] = v
            origin[name] = f"--{name.replace('_', '-')}"
    cfg = ExperimentConfig(command=args.command, **values)
    cfg.validate(origin)
    return cfg


# --------------------------------------------------------------------------
# output

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def dumps_json(obj):
    from .index import _jsonable
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def dumps_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


class Emitter:
    """Collects artifacts and writes them with a manifest."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.files = {}

    def add(self, name, text):
        self.files[name] = text

    def write(self, cfg, extra=None):
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
            for name, text in self.files.items():
                (self.dir / name).write_text(text)
            manifest = {
                "schema": MANIFEST_SCHEMA,
                "report_schema": _report_schema(),
                "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "config": cfg.to_dict(),
                "files": {n: hashlib.sha256(t.encode()).hexdigest() for n, t in sorted(self.files.items())},
            }
            manifest.update(extra or {})
            (self.dir / "manifest.json").write_text(dumps_json(manifest))
        except OSError as e:
            raise ConfigError(f"cannot write to output directory {self.dir}: {e}") from None


def _report_schema():
    from .index import SCHEMA_VERSION
    return SCHEMA_VERSION


def _table(header, rows):
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) for i, h in enumerate(header)]
    line = lambda r: "  ".join(str(v).ljust(w) for v, w in zip(r, widths))
    return "\n".join([line(header), line(["-" * w for w in widths])] + [line(r) for r in rows]) + "\n"


# --------------------------------------------------------------------------
# commands

def _setup(cfg):
    from .clifford import build_spin_rep
    from .geometry import monopole_twist
    from .heatkernel import kernel_for
    sp = cfg.space_obj()
    kernel = kernel_for(sp.base)
    twist = monopole_twist(cfg.twist, area=sp.base.volume())
    return sp, kernel, build_spin_rep(sp.base.dim), twist


def cmd_index(cfg, em):
    from .index import index_report
    from .stochastic import RandomSource
    sp, kernel, spin, twist = _setup(cfg)
    try:
        rep = index_report(sp, kernel, spin, twist, cfg.t, cfg.paths, RandomSource(cfg.seed),
                           {"kind": "monopole" if sp.kind == "s3" else "magnetic", "k": cfg.twist},
                           cfg.order, cfg.h, cfg.workers, cfg.cw_order)
    except NotImplementedError as e:
        raise ConfigError(f"index is not available on {sp.name}: {e}") from None
    em.add("report.json", rep.to_json())
    coords = len(rep.analytic.densities[0].x)
    em.add("densities.csv", dumps_csv([f"x{i}" for i in range(coords)] + ["t", "I", "stderr"],
                                      rep.analytic.density_table()))
    em.add("summary.txt", _table(
        ["space", "twist", "analytic", "stderr", "geometric", "integer", "verdict"],
        [[sp.name, cfg.twist, f"{rep.analytic.value:.6f}", f"{rep.analytic.stderr:.2e}",
          f"{rep.geometric:.9f}", rep.nearest_integer, rep.verdict]]))
    return rep.verdict == "pass", {"runtime_seconds": rep.runtime}


def cmd_heat(cfg, em):
    from .acceptance import kernel_accuracy_table
    from .heatkernel import kernel_for
    t_grid = parse_t_grid(cfg.t_grid)
    rows = kernel_accuracy_table(cfg.space_obj().name if cfg.q else cfg.space, t_grid,
                                 cfg.points, cfg.seed)
    d = len(rows[0][1])
    header = ["t"] + [f"x{i}" for i in range(d)] + [f"y{i}" for i in range(d)] + \
             ["value", "oracle", "rel_err", "resolved"]
    em.add("kernel.csv", dumps_csv(header, [[r[0], *r[1], *r[2], *r[3:]] for r in rows]))
    rel = [r[5] for r in rows if r[6] and np.isfinite(r[5])]
    summary = {"space": cfg.space, "rows": len(rows), "resolved": len(rel),
               "max_rel_err": max(rel) if rel else None}
    if cfg.bounds:
        from .acceptance import sandwich_report
        g = cfg.space_obj().base
        bt = [t for t in t_grid if t < 1] or [0.5]
        rep = sandwich_report(kernel_for(g), g, bt, np.random.default_rng(cfg.seed))
        em.add("bounds.json", dumps_json(rep.to_dict()))
        summary["bounds_ok"] = rep.ok
    em.add("heat.json", dumps_json(summary))
    em.add("summary.txt", _table(list(summary), [[_fmt(v) for v in summary.values()]]))
    return summary.get("bounds_ok", True), {}


def cmd_sample(cfg, em):
    from . import acceptance
    res = acceptance.probabilistic_core(n_paths=min(cfg.paths, 10_000), seed=cfg.seed, t=cfg.t)
    rows = res.detail["rows"]
    em.add("sample.json", dumps_json(rows))
    em.add("summary.txt", _table(["statistic", "mean", "expected", "z"],
                                 [[k, _fmt(r["mean"]), _fmt(r["expected"]), f"{r['z']:+.3f}"]
                                  for k, r in rows.items() if "z" in r]))
    return res.passed, {}


def cmd_fourier(cfg, em):
    from .index import index_density_m
    from .acceptance import fourier_checks
    from .geometry import monopole_twist
    sp = cfg.space_obj()
    tw = monopole_twist(cfg.twist, area=sp.base.volume())
    table = [[m, index_density_m(sp, tw, m, cfg.cw_order)] for m in range(-cfg.m_max, cfg.m_max + 1)]
    checks = fourier_checks(K=cfg.K, seed=cfg.seed)
    em.add("fourier.csv", dumps_csv(["m", "I_m"], table))
    em.add("fourier.json", dumps_json({"space": sp.name, "p": sp.p, "checks": checks}))
    em.add("summary.txt", _table(["m", "I_m"], [[m, f"{v:.9f}"] for m, v in table]))
    return max(checks.values()) < 1e-10, {}


SUITE_SPACES = ("flat-torus", "hopf", "hopf-p2", "lens-3", "football-2", "teardrop-2")


def suite_rows(cfg):
    """One summary row per catalog space."""
    from .geometry import catalog, monopole_twist
    from .heatkernel import diagonal_ratio, kernel_for
    from .index import geometric_index, mckean_singer_index
    from .clifford import build_spin_rep
    from .stochastic import RandomSource
    rows = []
    for name in SUITE_SPACES:
        sp = catalog(name)
        g = sp.base
        tw = monopole_twist(cfg.twist, area=g.volume())
        geo = geometric_index(sp, tw, cfg.cw_order)
        K = kernel_for(g)
        analytic = se = None
        if name in ("flat-torus", "hopf", "hopf-p2", "lens-3"):
            est = mckean_singer_index(sp, K, build_spin_rep(2), tw, cfg.t,
                                      min(cfg.paths, 4000 if cfg.quick else cfg.paths),
                                      RandomSource(cfg.seed), cfg.order)
            analytic, se = est.value, est.stderr
        singular = None
        if name.startswith("football"):
            singular = np.array([[0.0, 0.0, 1.0]])
        elif name.startswith("teardrop"):
            singular = np.array([[g.Lpsi, 0.0]])
        iso = float(diagonal_ratio(K, 0.05, singular)[0]) if singular is not None else None
        quant = abs(geo - round(geo)) <= 1e-6
        agree = analytic is None or abs(analytic - geo) <= 3 * se
        rows.append({"space": name, "p": sp.p, "euler": sp.euler_number(), "geometric": geo,
                     "analytic": analytic, "stderr": se, "cone_diagonal_ratio": iso,
                     "ok": bool(quant and agree)})
    return rows


def cmd_suite(cfg, em):
    from . import acceptance
    rows = suite_rows(cfg)
    header = list(rows[0])
    em.add("spaces.csv", dumps_csv(header, [[r[h] if r[h] is not None else "" for h in header]
                                            for r in rows]))
    ok = all(r["ok"] for r in rows)
    results = []
    if not cfg.quick:
        results = acceptance.run_all()
        ok &= all(r.passed for r in results)
        em.add("criteria.json", dumps_json([{"number": r.number, "name": r.name,
                                             "passed": r.passed, "detail": r.detail}
                                            for r in results]))
    lines = _table(["space", "p", "geometric", "analytic", "ok"],
                   [[r["space"], r["p"], f"{r['geometric']:.6f}",
                     "" if r["analytic"] is None else f"{r['analytic']:.5f}", r["ok"]]
                    for r in rows])
    lines += "".join(r.line() + "\n" for r in results)
    em.add("summary.txt", lines)
    return ok, {"criteria_seconds": {r.number: r.seconds for r in results}}


HANDLERS = {"index": cmd_index, "heat": cmd_heat, "sample": cmd_sample,
            "fourier": cmd_fourier, "suite": cmd_suite}


def run(cfg):
    out = cfg.out or os.environ.get(OUT_ENV) or "transindex-out"
    em = Emitter(Path(out) / cfg.command)
    t0 = time.perf_counter()
    ok, extra = HANDLERS[cfg.command](cfg, em)
    extra = dict(extra)
    extra["wall_seconds"] = time.perf_counter() - t0
    em.write(cfg, extra)
    sys.stdout.write(em.files.get("summary.txt", ""))
    return EXIT_OK if ok else EXIT_VERDICT


def main(argv=None):
    try:
        cfg = load_config(sys.argv[1:] if argv is None else argv)
        return run(cfg)
    except ConfigError as e:
        print(f"transindex: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_CONFIG
    except Exception:
        traceback.print_exc()
        return EXIT_CRASH


if __name__ == "__main__":
    sys.exit(main())
