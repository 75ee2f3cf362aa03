"""Command-line front end: info, sparsify, mesh, and compare subcommands.

Typical round trip:

    erbfit sparsify mol.pqr --out run/
    erbfit mesh run/model.json --out run/
    erbfit compare mol.pqr run/model.json --out run/

Every output file records the effective configuration (as '# key=value'
header lines, or a "config" object in JSON outputs).  Model and trace files
contain nothing run-dependent, so two runs of the same command are
byte-identical; wall time appears only in the human-readable summary.

Exit codes: 0 success, 2 unreadable or invalid input (including an empty
constraint selection), 3 optimization collapse, 4 meshing failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .field import Box, GaussianField, bounding_box
from .initializer import init_model
from .mesh import MeshError, compare_surfaces, extract_isosurface, write_obj
from .model import RbfModel, load_model, save_model
from .optimizer import (
    OptimizationError,
    OptimizerConfig,
    energy_terms,
    max_pointwise_error,
    optimize,
    write_weight_histogram,
)
from .pqr import PqrError, parse_pqr_file
from .sampler import SamplingError, make_grid, select_constraints
from . import __version__

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COLLAPSE = 3
EXIT_MESH = 4


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run's output content, in header-ready form.

    The output directory is deliberately not part of the recorded
    configuration: it changes where files land, not what they contain, so
    identical commands pointed at different directories stay byte-identical.
    """

    command: str
    inputs: tuple[str, ...]
    decay: float
    isovalue: float
    band: float
    constraint_spacing: float
    mesh_spacing: float
    optimizer: OptimizerConfig
    out_dir: str
    deterministic: bool
    threads: int
    seed: int | None

    def header_lines(self) -> list[str]:
        lines = [
            f"erbfit {__version__}",
            f"command={self.command}",
        ]
        lines.extend(f"input={p}" for p in self.inputs)
        lines.extend([
            f"decay={self.decay!r}",
            f"isovalue={self.isovalue!r}",
            f"band={self.band!r}",
            f"constraint_spacing={self.constraint_spacing!r}",
            f"mesh_spacing={self.mesh_spacing!r}",
            f"max_iter={self.optimizer.max_iter}",
            f"sparse_iter={self.optimizer.sparse_iter}",
            f"prune_tol={self.optimizer.prune_tol!r}",
            f"prune_interval={self.optimizer.prune_interval}",
            f"epsilon={self.optimizer.epsilon_floor!r}",
            f"error_cap={self.optimizer.max_error_cap!r}",
            f"deterministic={self.deterministic}",
            f"threads={self.threads}",
            f"seed={self.seed}",
        ])
        return lines

    def as_dict(self) -> dict:
        return {
            "version": __version__,
            "command": self.command,
            "inputs": list(self.inputs),
            "decay": self.decay,
            "isovalue": self.isovalue,
            "band": self.band,
            "constraint_spacing": self.constraint_spacing,
            "mesh_spacing": self.mesh_spacing,
            "max_iter": self.optimizer.max_iter,
            "sparse_iter": self.optimizer.sparse_iter,
            "prune_tol": self.optimizer.prune_tol,
            "prune_interval": self.optimizer.prune_interval,
            "epsilon": self.optimizer.epsilon_floor,
            "error_cap": self.optimizer.max_error_cap,
            "deterministic": self.deterministic,
            "threads": self.threads,
            "seed": self.seed,
        }


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--decay", type=float, default=0.5,
                   help="Gaussian kernel decay rate d (default 0.5)")
    p.add_argument("--isovalue", type=float, default=1.0,
                   help="level-set value c defining the surface (default 1.0)")
    p.add_argument("--mesh-spacing", type=float, default=0.5,
                   help="grid spacing for isosurface meshing in Angstrom (default 0.5)")
    p.add_argument("--out", default=".", metavar="DIR",
                   help="output directory (default: current directory)")
    p.add_argument("--deterministic", action="store_true", default=True,
                   help="deterministic evaluation order (always on; flag kept "
                        "for pipeline scripts)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker-count hint; evaluation is vectorized in-process")
    p.add_argument("--seed", type=int, default=None,
                   help="reserved; the current pipeline is deterministic")


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--band", type=float, default=1.0,
                   help="half-width of the |phi - c| band selecting constraint "
                        "points (default 1.0)")
    p.add_argument("--constraint-spacing", type=float, default=1.0,
                   help="grid spacing for constraint sampling in Angstrom (default 1.0)")
    p.add_argument("--max-iter", type=int, default=8000,
                   help="total optimizer iterations (default 8000)")
    p.add_argument("--sparse-iter", type=int, default=6000,
                   help="iterations before the permanent pure-accuracy phase "
                        "(default 6000)")
    p.add_argument("--prune-tol", type=float, default=1e-3,
                   help="coefficient magnitude below which a basis is deleted "
                        "(default 1e-3)")
    p.add_argument("--prune-interval", type=int, default=20,
                   help="prune every this many iterations (default 20)")
    p.add_argument("--epsilon", type=float, default=0.01,
                   help="floor for the accuracy weight w_s (default 0.01)")
    p.add_argument("--error-cap", type=float, default=0.5,
                   help="max pointwise error that forces a pure-accuracy "
                        "iteration (default 0.5)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erbfit",
        description="Sparse ellipsoid-Gaussian RBF fitting of Gaussian "
                    "molecular surfaces.")
    parser.add_argument("--version", action="version", version=f"erbfit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_info = sub.add_parser("info", help="summarize a PQR file")
    p_info.add_argument("pqr", help="input PQR file")

    p_sparse = sub.add_parser(
        "sparsify", help="fit a sparse ellipsoid RBF model to a molecule")
    p_sparse.add_argument("pqr", help="input PQR file")
    _add_fit_flags(p_sparse)
    _add_common_flags(p_sparse)

    p_mesh = sub.add_parser(
        "mesh", help="mesh the isosurface of a PQR field or a fitted model")
    p_mesh.add_argument("source", help="PQR file or model JSON document")
    _add_common_flags(p_mesh)

    p_cmp = sub.add_parser(
        "compare", help="mesh a molecule and a fitted model on one grid and "
                        "report area/volume errors and Hausdorff distance")
    p_cmp.add_argument("pqr", help="input PQR file")
    p_cmp.add_argument("model", help="fitted model JSON document")
    _add_common_flags(p_cmp)

    return parser


def _run_config(args: argparse.Namespace, inputs: tuple[str, ...]) -> RunConfig:
    optimizer = OptimizerConfig(
        max_iter=getattr(args, "max_iter", 8000),
        sparse_iter=getattr(args, "sparse_iter", 6000),
        prune_tol=getattr(args, "prune_tol", 1e-3),
        prune_interval=getattr(args, "prune_interval", 20),
        epsilon_floor=getattr(args, "epsilon", 0.01),
        max_error_cap=getattr(args, "error_cap", 0.5),
        deterministic=getattr(args, "deterministic", True),
    )
    return RunConfig(
        command=args.command,
        inputs=inputs,
        decay=getattr(args, "decay", 0.5),
        isovalue=getattr(args, "isovalue", 1.0),
        band=getattr(args, "band", 1.0),
        constraint_spacing=getattr(args, "constraint_spacing", 1.0),
        mesh_spacing=getattr(args, "mesh_spacing", 0.5),
        optimizer=optimizer,
        out_dir=getattr(args, "out", "."),
        deterministic=getattr(args, "deterministic", True),
        threads=getattr(args, "threads", 1),
        seed=getattr(args, "seed", None),
    )


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _looks_like_model(path: str) -> bool:
    try:
        with open(path) as fh:
            head = fh.read(256).lstrip()
    except OSError:
        return False
    return head.startswith("{")


def _model_box(meta: dict, model: RbfModel) -> Box:
    """Meshing box for a bare model: stored metadata box, else decay heuristic."""
    if "box_lo" in meta and "box_hi" in meta:
        return Box(lo=np.array(meta["box_lo"]), hi=np.array(meta["box_hi"]))
    # reach per basis: where an isolated basis decays to ~1% of the isovalue
    reach = np.zeros_like(model.centers)
    for p in range(3):
        d_eff = np.maximum(model.decay_sqrt[:, p] ** 2, 1e-6)
        ratio = np.maximum(model.weights / 0.01, 2.0)
        reach[:, p] = np.sqrt(np.log(ratio) / d_eff)
    lo = (model.centers - reach).min(axis=0) - 1.0
    hi = (model.centers + reach).max(axis=0) + 1.0
    return Box(lo=lo, hi=hi)


def cmd_info(args: argparse.Namespace) -> int:
    molecule = parse_pqr_file(args.pqr)
    box = bounding_box(molecule)
    radii = molecule.radii
    print(f"file: {args.pqr}")
    print(f"atoms: N={len(molecule)}")
    print(f"bounding box lo: {box.lo[0]:.3f} {box.lo[1]:.3f} {box.lo[2]:.3f}")
    print(f"bounding box hi: {box.hi[0]:.3f} {box.hi[1]:.3f} {box.hi[2]:.3f}")
    print(f"radius range: {radii.min():.3f} .. {radii.max():.3f}")
    return EXIT_OK


def cmd_sparsify(args: argparse.Namespace) -> int:
    config = _run_config(args, (args.pqr,))
    out = _out_dir(config)
    header = config.header_lines()

    molecule = parse_pqr_file(args.pqr)
    field = GaussianField.from_molecule(molecule, decay=config.decay,
                                        isovalue=config.isovalue)
    box = bounding_box(molecule)
    grid = make_grid(box, config.constraint_spacing)
    constraints = select_constraints(field, grid, config.band)
    model0 = init_model(molecule, config.decay)

    t0 = time.perf_counter()
    try:
        model, trace = optimize(model0, constraints, config.optimizer)
    except OptimizationError as exc:
        failed = [*header, f"FAILED: {exc}"]
        if exc.trace is not None:
            exc.trace.to_csv(out / "trace.csv", header_lines=failed)
        (out / "summary.txt").write_text(
            "\n".join(f"# {h}" for h in failed) + "\nstatus=FAILED\n")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COLLAPSE

    wall = time.perf_counter() - t0
    es, _ = energy_terms(model, constraints)
    max_err = max_pointwise_error(model, constraints)
    ratio = model.n_bases / len(molecule)

    metadata = {
        "config": config.as_dict(),
        "source": args.pqr,
        "n_atoms": len(molecule),
        "n_constraints": len(constraints),
        "box_lo": [float(v) for v in box.lo],
        "box_hi": [float(v) for v in box.hi],
        "final": {
            "n_bases": model.n_bases,
            "Es": es,
            "max_pointwise_error": max_err,
            "sparse_ratio": ratio,
            "iterations": len(trace),
        },
    }
    save_model(model, out / "model.json", metadata=metadata)
    trace.to_csv(out / "trace.csv", header_lines=header)
    write_weight_histogram(model, out / "weights.txt", header_lines=header)

    summary = [
        f"n_atoms={len(molecule)}",
        f"n_constraints={len(constraints)}",
        f"n_erbf={model.n_bases}",
        f"sparse_ratio={ratio:.6f}",
        f"final_Es={es:.6e}",
        f"max_pointwise_error={max_err:.6e}",
        f"iterations={len(trace)}",
        f"wall_time_s={wall:.2f}",
    ]
    (out / "summary.txt").write_text(
        "\n".join(f"# {h}" for h in header) + "\n" + "\n".join(summary) + "\n")
    for line in summary:
        print(line)
    print(f"wrote {out / 'model.json'}, {out / 'trace.csv'}, "
          f"{out / 'weights.txt'}, {out / 'summary.txt'}")
    return EXIT_OK


def cmd_mesh(args: argparse.Namespace) -> int:
    config = _run_config(args, (args.source,))
    out = _out_dir(config)

    if _looks_like_model(args.source):
        model, meta = load_model(args.source)
        evaluator = model.values
        box = _model_box(meta, model)
    else:
        molecule = parse_pqr_file(args.source)
        field = GaussianField.from_molecule(molecule, decay=config.decay,
                                            isovalue=config.isovalue)
        evaluator = field.values
        box = bounding_box(molecule)

    mesh = extract_isosurface(evaluator, box, config.mesh_spacing, config.isovalue)
    write_obj(mesh, out / "mesh.obj", header_lines=config.header_lines())
    print(f"wrote {out / 'mesh.obj'} "
          f"({mesh.vertices.shape[0]} vertices, {mesh.n_f} triangles)")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = _run_config(args, (args.pqr, args.model))
    out = _out_dir(config)

    molecule = parse_pqr_file(args.pqr)
    field = GaussianField.from_molecule(molecule, decay=config.decay,
                                        isovalue=config.isovalue)
    model, _ = load_model(args.model)
    box = bounding_box(molecule)

    report = compare_surfaces(field.values, model.values, box,
                              config.mesh_spacing, config.isovalue)
    doc = {"config": config.as_dict(), "report": report}
    (out / "compare.json").write_text(json.dumps(doc, indent=2) + "\n")
    for key in ("A_original", "A_our", "Error_A",
                "V_original", "V_our", "Error_V", "H"):
        print(f"{key}={report[key]:.6f}")
    print(f"wrote {out / 'compare.json'}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "info": cmd_info,
        "sparsify": cmd_sparsify,
        "mesh": cmd_mesh,
        "compare": cmd_compare,
    }
    try:
        return handlers[args.command](args)
    except (PqrError, SamplingError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OptimizationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COLLAPSE
    except MeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MESH


if __name__ == "__main__":
    sys.exit(main())
