"""Command-line front end: reproducible runs that leave artifacts on disk.

Each subcommand builds a report dict and zero or more CSV tables. With
``--out-dir`` the run writes ``report.json``, the tables, and a
``manifest.json`` recording the exact configuration, its hash, package
versions, and wall time; without it the JSON report goes to stdout. CSV
bodies depend only on the configuration and seeds, so a persisted run
reproduces byte-identical tables.

Exit codes: 0 for a passing run, 1 for a failed check or a diverged
computation, 2 for usage and validation problems, 3 when a resource cap
refuses the requested dimension.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dense import ResourceCapError, operator_norm, pauli_matrix
from .decompositions import DecayClass
from .flow import (
    DEFAULT_SERIES_DEPTH,
    FlowContext,
    flow_step,
    initial_flow_state,
    offdiagonal_residual,
    scalar_flow,
)
from .lattice import Square
from .locality import (
    ContinuationPath,
    continue_projector,
    dress_operator,
    front_arrival_time,
    lr_commutator_profile,
)
from .models import HamiltonianOperator, load_model, toric_logical_pair
from .pauli import PauliOperator
from .perturbations import PerturbationSpec, random_perturbation
from .spectral import low_spectrum, make_spectral_report, sector_gap_sweep
from . import tqo


def _jsonable(obj):
    """Recursively convert numpy scalars and arrays for json.dumps."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


@dataclass
class RunConfig:
    """One reproducible run: a command, its parameters, and output routing.

    The hash covers command, parameters, and worker count but not the
    output directory, so the same inputs keep the same identity wherever
    the artifacts land.
    """

    command: str
    params: dict = field(default_factory=dict)
    out_dir: str | None = None
    jobs: int = 1

    def to_dict(self) -> dict:
        return {"command": self.command, "params": _jsonable(self.params),
                "out_dir": self.out_dir, "jobs": self.jobs}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        try:
            command = str(data["command"])
        except (KeyError, TypeError):
            raise ValueError("run config missing field: 'command'")
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise ValueError("run config field 'params' must be a mapping")
        out_dir = data.get("out_dir")
        return cls(command, dict(params),
                   None if out_dir is None else str(out_dir),
                   int(data.get("jobs", 1)))

    def config_hash(self) -> str:
        blob = json.dumps(
            {"command": self.command, "params": _jsonable(self.params),
             "jobs": self.jobs},
            sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2,
                                   sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"run config {path} is not valid JSON: {exc}")
        return cls.from_dict(data)


# -- shared pieces -----------------------------------------------------------


def _model_from(params) -> "object":
    src = params.get("model")
    builtin = params.get("builtin")
    if (src is None) == (builtin is None):
        raise ValueError("give exactly one of --model or --builtin")
    return load_model(src if src is not None else builtin)


def _spec_from(params, model) -> PerturbationSpec:
    path = params.get("perturbation")
    if path is None:
        raise ValueError("--perturbation is required for this command")
    spec = PerturbationSpec.load(path)
    lat = model.lattice
    if spec.lattice_size != lat.L or spec.layout != lat.layout:
        raise ValueError(
            f"perturbation geometry (L={spec.lattice_size}, {spec.layout}) "
            f"does not match the model (L={lat.L}, {lat.layout})")
    return spec


def _class_dict(decay: DecayClass | None):
    if decay is None:
        return None
    return {"strength": float(decay.strength), "rate": float(decay.rate),
            "degree": float(decay.degree)}


def _input_class_block(spec: PerturbationSpec) -> dict:
    """Claimed and re-verified decay class of an input, for reports."""
    return {"claimed": _class_dict(spec.decay_class),
            "verified": not spec.offenders(),
            "entries": len(spec)}


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _grid(params) -> np.ndarray:
    steps = int(params["steps"])
    if steps < 1:
        raise ValueError("--steps must be >= 1")
    return np.linspace(float(params["start"]), float(params["stop"]), steps)


# -- subcommands --------------------------------------------------------------


def _cmd_check(config: RunConfig):
    p = config.params
    model = _model_from(p)
    condition = p["condition"]
    method = p.get("method", "stabilizer")
    l_star = p.get("lstar")
    table = {("tqo1", "stabilizer"): tqo.check_tqo1_stabilizer,
             ("tqo1", "exact"): tqo.check_tqo1_exact_all,
             ("tqo2", "stabilizer"): tqo.check_tqo2_stabilizer,
             ("tqo2", "exact"): tqo.check_tqo2_exact_all}
    checker = table[(condition, method)]
    rep = checker(model, l_star, jobs=config.jobs)
    print(_check_table(rep, model.name))
    report = {"model": model.name, **rep.to_dict()}
    return (0 if rep.verdict else 1), report, {}


def _check_table(rep, model_name: str) -> str:
    head = (f"{'model':<18} {'condition':<9} {'method':<10} "
            f"{'l_star':>6} {'squares':>8}  verdict")
    squares = rep.details.get("squares_checked", "-")
    body = (f"{model_name:<18} {rep.condition:<9} {rep.method:<10} "
            f"{rep.l_star:>6} {squares:>8}  "
            f"{'pass' if rep.verdict else 'FAIL'}")
    lines = [head, body]
    if rep.witnesses:
        lines.append(f"witness squares ({len(rep.witnesses)} total):")
        for sq, diag in rep.witnesses[:8]:
            lines.append(f"  {sq}" + (f": {diag}" if diag else ""))
        if len(rep.witnesses) > 8:
            lines.append(f"  ... {len(rep.witnesses) - 8} more")
    return "\n".join(lines)


def _cmd_spectrum(config: RunConfig):
    p = config.params
    model = _model_from(p)
    count = int(p.get("count", 16))
    applier = None
    class_block = None
    if p.get("perturbation") is not None:
        spec = _spec_from(p, model)
        applier = spec.applier()
        class_block = _input_class_block(spec)
    h = HamiltonianOperator(model, perturbation=applier)
    vals = low_spectrum(h, count, method=p.get("method", "auto"))
    rep = make_spectral_report(range(len(model.generators) + 1), vals)
    report = {"model": model.name, "count": count, **rep.to_dict()}
    if class_block is not None:
        report["input_class"] = class_block
    rows = [(i, float(v)) for i, v in enumerate(vals)]
    return 0, report, {"spectrum.csv": (("index", "eigenvalue"), rows)}


def _cmd_sweep(config: RunConfig):
    p = config.params
    model = _model_from(p)
    grid = _grid(p)
    if p["param"] == "h":
        res = sector_gap_sweep(model, grid)
        report = {"model": model.name, "param": "h", **res.to_dict()}
        rows = list(zip(res.h_values, res.energies, res.labels))
        return 0, report, {"sweep.csv": (("h", "energy", "label"), rows)}
    spec = _spec_from(p, model)
    if spec.strength == 0.0:
        raise ValueError("cannot sweep J with an empty perturbation "
                         "(strength 0)")
    count = int(p.get("count", 8))
    rows = []
    for j in grid:
        h = HamiltonianOperator(
            model, perturbation=spec.applier(scale=j / spec.strength))
        vals = low_spectrum(h, count)
        rows.append((float(j), *(float(v) for v in vals)))
    header = ("J", *(f"e{i}" for i in range(count)))
    report = {"model": model.name, "param": "J", "count": count,
              "values": [float(j) for j in grid],
              "input_class": _input_class_block(spec)}
    return 0, report, {"sweep.csv": (header, rows)}


def _cmd_flow(config: RunConfig):
    p = config.params
    model = _model_from(p)
    spec = _spec_from(p, model)
    dec = spec.to_decomposition(model)
    levels = int(p.get("levels", 1))
    if levels < 1:
        raise ValueError("--levels must be >= 1")
    l_star = p.get("lstar")
    depth = int(p.get("depth", DEFAULT_SERIES_DEPTH))
    j_max = p.get("jmax")
    state = initial_flow_state(model, dec, l_star)
    ctx0 = FlowContext(model, (dec,))
    level_rows = [{
        "level": 0,
        "class_v": _class_dict(dec.claimed),
        "class_w": None,
        "residual": offdiagonal_residual(state, ctx0),
        "error_bound": float(state.error_norm_bound),
        "lambda": float(state.scalar),
    }]
    for _ in range(levels):
        state = flow_step(model, state, l_star, series_depth=depth,
                          j_max=j_max)
        ctx = FlowContext(model, (state.perturbation,
                                  *state.diagonal_parts),
                          extra_qubits=state.error_register)
        level_rows.append({
            "level": state.level,
            "class_v": _class_dict(state.classes.get("perturbation")),
            "class_w": _class_dict(state.classes.get("diagonal")),
            "residual": offdiagonal_residual(state, ctx),
            "error_bound": float(state.error_norm_bound),
            "lambda": float(state.scalar),
        })
    report = {"model": model.name,
              "l_star": model.lattice.L if l_star is None else int(l_star),
              "levels": level_rows,
              "input_class": _input_class_block(spec)}
    return 0, report, {}


_SCALAR_KEYS = ("strength", "rate", "c1", "c2", "c3", "epsilon", "size",
                "levels")


def _cmd_scalar_flow(config: RunConfig):
    path = config.params.get("config")
    if path is None:
        raise ValueError("--config is required")
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"scalar-flow config {path} is not valid JSON: "
                         f"{exc}")
    except OSError as exc:
        raise ValueError(f"cannot read scalar-flow config: {exc}")
    missing = [k for k in _SCALAR_KEYS if k not in data]
    if missing:
        raise ValueError("scalar-flow config missing fields: "
                         + ", ".join(repr(k) for k in missing))
    kwargs = {k: data[k] for k in _SCALAR_KEYS}
    kwargs["size"] = int(kwargs["size"])
    kwargs["levels"] = int(kwargs["levels"])
    if "error_prefactor" in data:
        kwargs["error_prefactor"] = float(data["error_prefactor"])
    res = scalar_flow(**{k: (float(v) if k not in ("size", "levels") else v)
                         for k, v in kwargs.items()})
    rows = [(r["level"], r["strength"], r["block_strength"], r["rate"],
             r["error_bound"]) for r in res.rows()]
    report = {"params": res.params,
              "breakdown_level": res.breakdown_level,
              "levels_completed": len(rows) - 1}
    header = ("level", "strength", "block_strength", "rate", "error_bound")
    return 0, report, {"trajectory.csv": (header, rows)}


def _parse_regions(text: str, lattice) -> list:
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    if len(tokens) != 2:
        raise ValueError("--regions wants two squares, 'x.y.r,x.y.r' "
                         "(r defaults to 1)")
    squares = []
    for tok in tokens:
        parts = tok.split(".")
        if len(parts) not in (2, 3):
            raise ValueError(f"bad region {tok!r}: use x.y or x.y.r")
        try:
            nums = [int(v) for v in parts]
        except ValueError:
            raise ValueError(f"bad region {tok!r}: coordinates must be "
                             f"integers")
        x, y = nums[0], nums[1]
        r = nums[2] if len(nums) == 3 else 1
        squares.append(Square(x, y, r, lattice.L))
    return squares


def _parse_times(text: str) -> list:
    try:
        times = sorted(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ValueError("--times wants comma-separated numbers")
    if not times:
        raise ValueError("--times wants at least one time")
    if times[0] < 0:
        raise ValueError("times must be >= 0")
    return times


def _region_probe(square: Square, lattice, register) -> np.ndarray:
    """Single-qubit X on the region's first active qubit, on the register."""
    reg_set = set(register)
    inside = [q for q in lattice.region_qubits(square) if q in reg_set]
    if not inside:
        raise ValueError(f"region {square} contains no active qubits")
    pos = register.index(min(inside))
    x = np.zeros(len(register), np.uint8)
    x[pos] = 1
    op = PauliOperator(x, np.zeros(len(register), np.uint8), 0)
    return pauli_matrix(op)


def _cmd_lieb_robinson(config: RunConfig):
    p = config.params
    model = _model_from(p)
    times = _parse_times(p["times"])
    coupling = float(p.get("coupling", 1.0))
    squares = _parse_regions(p["regions"], model.lattice)
    decs = ()
    class_block = None
    if p.get("perturbation") is not None:
        spec = _spec_from(p, model)
        decs = (spec.to_decomposition(model),)
        class_block = _input_class_block(spec)
    ctx = FlowContext(model, decs)
    h = ctx.h0
    for dec in decs:
        h = h + ctx.dense(dec)
    h = coupling * h
    op_a = _region_probe(squares[0], model.lattice, ctx.register)
    op_b = _region_probe(squares[1], model.lattice, ctx.register)
    norms = [float(v) for v in lr_commutator_profile(h, op_a, op_b, times)]
    threshold = float(p.get("threshold", 0.01))
    report = {"model": model.name, "coupling": coupling,
              "regions": [str(sq) for sq in squares],
              "threshold": threshold,
              "arrival_time": front_arrival_time(times, norms, threshold)}
    if class_block is not None:
        report["input_class"] = class_block
    rows = list(zip(times, norms))
    return 0, report, {"profile.csv": (("t", "norm"), rows)}


def _cmd_continue(config: RunConfig):
    p = config.params
    model = _model_from(p)
    spec = _spec_from(p, model)
    dec = spec.to_decomposition(model)
    ctx = FlowContext(model, (dec,))
    base = ctx.h0
    bump = ctx.dense(dec)
    path = ContinuationPath(base, bump, steps=int(p.get("steps", 200)),
                            scheme=p.get("scheme", "midpoint"))
    res = continue_projector(path, band=int(p.get("band", 0)))
    report = {"model": model.name, "steps": res.steps,
              "scheme": res.scheme,
              "deviation": float(res.deviation),
              "min_gap": float(res.min_gap),
              "band_ranks": sorted(set(int(r) for r in res.band_ranks)),
              "input_class": _input_class_block(spec)}
    if (model.meta.get("kind") == "toric"
            and ctx.register == tuple(range(model.n_qubits))):
        report["dressed"] = _dressed_checks(model, base + bump, res)
    return 0, report, {}


def _dressed_checks(model, h_end, res) -> dict:
    """String-pair and loop diagnostics for a dressed toric ground band."""
    z_string, x_string = toric_logical_pair(model)
    dz = dress_operator(pauli_matrix(z_string), res.unitary)
    dx = dress_operator(pauli_matrix(x_string), res.unitary)
    anti = float(operator_norm(dz @ dx + dx @ dz))
    star = model.meta["stars"][sorted(model.meta["stars"])[0]]
    loop = dress_operator(pauli_matrix(star), res.unitary)
    _, vecs = np.linalg.eigh(h_end)
    ground = vecs[:, 0]
    expectation = float(np.real(ground.conj() @ (loop @ ground)))
    return {"string_anticommutator": anti,
            "loop_expectation": expectation}


def _cmd_gen_perturbation(config: RunConfig):
    p = config.params
    model = _model_from(p)
    out = p.get("out")
    if out is None:
        raise ValueError("--out is required")
    spec = random_perturbation(model, seed=int(p.get("seed", 0)),
                               locality=int(p.get("locality", 2)),
                               strength=float(p["strength"]),
                               mu=float(p.get("mu", 1.0)))
    written = spec.save(out)
    report = {"model": model.name, "file": str(written),
              "seed": spec.seed, "entries": len(spec),
              "class": _class_dict(spec.decay_class),
              "verified": not spec.offenders()}
    return 0, report, {}


_COMMANDS = {
    "check": _cmd_check,
    "spectrum": _cmd_spectrum,
    "sweep": _cmd_sweep,
    "flow": _cmd_flow,
    "scalar-flow": _cmd_scalar_flow,
    "lieb-robinson": _cmd_lieb_robinson,
    "continue": _cmd_continue,
    "gen-perturbation": _cmd_gen_perturbation,
}


def run(config: RunConfig) -> int:
    """Execute a run config, write its artifacts, and return the exit code."""
    handler = _COMMANDS.get(config.command)
    if handler is None:
        print(f"unknown command {config.command!r}; choose from "
              + ", ".join(sorted(_COMMANDS)), file=sys.stderr)
        return 2
    started = time.perf_counter()
    try:
        status, report, tables = handler(config)
    except ResourceCapError as exc:
        print(f"resource cap exceeded: {exc} (dimension {exc.dimension})",
              file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    elapsed = time.perf_counter() - started
    _emit(config, report, tables, elapsed)
    return status


def _emit(config: RunConfig, report: dict, tables: dict, elapsed: float):
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True)
    if config.out_dir is None:
        print(text)
        return
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = ["report.json"]
    (out / "report.json").write_text(text + "\n")
    for name, (header, rows) in tables.items():
        _write_csv(out / name, header, rows)
        names.append(name)
    manifest = {
        "command": config.command,
        "config": config.to_dict(),
        "config_sha256": config.config_hash(),
        "versions": {"python": platform.python_version(),
                     "numpy": np.__version__,
                     "scipy": scipy.__version__,
                     "tqolab": __version__},
        "artifacts": sorted(names),
        "elapsed_seconds": round(elapsed, 6),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for name in sorted(names) + ["manifest.json"]:
        print(f"wrote {out / name}")


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", dest="out_dir", metavar="DIR",
                        help="write report.json, CSV tables, and a manifest "
                             "here instead of printing JSON")
    common.add_argument("--jobs", type=int, default=1,
                        help="worker cap for square scans (default 1)")

    src = argparse.ArgumentParser(add_help=False)
    src.add_argument("--model", metavar="SRC",
                     help="model file path or builtin name")
    src.add_argument("--builtin", metavar="NAME",
                     help="builtin model: toric:<L>, unstable-toric:<L>, "
                          "or ising-chain:<n>")

    parser = argparse.ArgumentParser(
        prog="tqo",
        description="Topological-order checks, spectral band stability, "
                    "flow-equation diagonalization, and locality "
                    "experiments for commuting-projector lattice models.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    q = sub.add_parser("check", parents=[common, src],
                       help="TQO-1/TQO-2 condition check over small squares")
    q.add_argument("--condition", required=True, choices=("tqo1", "tqo2"))
    q.add_argument("--method", choices=("exact", "stabilizer"),
                   default="stabilizer")
    q.add_argument("--lstar", type=int, metavar="N",
                   help="largest square size to scan (default L/2 - 1)")

    q = sub.add_parser("spectrum", parents=[common, src],
                       help="low-lying eigenvalues, optionally perturbed")
    q.add_argument("--perturbation", metavar="FILE")
    q.add_argument("--count", type=int, default=16)
    q.add_argument("--method", choices=("auto", "dense", "iterative"),
                   default="auto")

    q = sub.add_parser("sweep", parents=[common, src],
                       help="grid sweep over a field (h) or perturbation "
                            "strength (J)")
    q.add_argument("--param", required=True, choices=("J", "h"))
    q.add_argument("--from", dest="start", type=float, required=True)
    q.add_argument("--to", dest="stop", type=float, required=True)
    q.add_argument("--steps", type=int, required=True)
    q.add_argument("--perturbation", metavar="FILE",
                   help="required for --param J")
    q.add_argument("--count", type=int, default=8,
                   help="eigenvalues per J grid point")

    q = sub.add_parser("flow", parents=[common, src],
                       help="block-diagonalizing flow levels with class "
                            "tracking")
    q.add_argument("--perturbation", metavar="FILE", required=True)
    q.add_argument("--levels", type=int, default=1)
    q.add_argument("--lstar", type=int, metavar="N")
    q.add_argument("--depth", type=int, default=DEFAULT_SERIES_DEPTH,
                   help="series depth for the generator solve")
    q.add_argument("--jmax", type=int, metavar="N",
                   help="remainder shell cutoff")

    q = sub.add_parser("scalar-flow", parents=[common],
                       help="scalar shadow recursion from a JSON config")
    q.add_argument("--config", metavar="FILE", required=True)

    q = sub.add_parser("lieb-robinson", parents=[common, src],
                       help="commutator-growth profile between two regions")
    q.add_argument("--regions", required=True, metavar="A,B",
                   help="two squares 'x.y.r,x.y.r' (r defaults to 1)")
    q.add_argument("--times", required=True, metavar="T1,T2,...")
    q.add_argument("--coupling", type=float, default=1.0,
                   help="uniform Hamiltonian rescaling")
    q.add_argument("--perturbation", metavar="FILE")
    q.add_argument("--threshold", type=float, default=0.01,
                   help="front arrival norm threshold")

    q = sub.add_parser("continue", parents=[common, src],
                       help="quasi-adiabatic continuation of the ground "
                            "band")
    q.add_argument("--perturbation", metavar="FILE", required=True)
    q.add_argument("--steps", type=int, default=200)
    q.add_argument("--band", type=int, default=0)
    q.add_argument("--scheme", choices=("midpoint", "euler"),
                   default="midpoint")

    q = sub.add_parser("gen-perturbation", parents=[common, src],
                       help="seeded random perturbation on the claimed "
                            "decay boundary")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--locality", type=int, default=2,
                   help="largest square size to populate")
    q.add_argument("--strength", type=float, required=True)
    q.add_argument("--mu", type=float, default=1.0)
    q.add_argument("--out", metavar="FILE", required=True,
                   help="where to write the spec JSON")

    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    skip = {"command", "out_dir", "jobs"}
    params = {k: v for k, v in vars(ns).items()
              if k not in skip and v is not None}
    return RunConfig(ns.command, params, out_dir=ns.out_dir, jobs=ns.jobs)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_help(sys.stderr)
        return 2
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    if ns.command is None:
        parser.print_help(sys.stderr)
        return 2
    return run(config_from_args(ns))


if __name__ == "__main__":
    sys.exit(main())
