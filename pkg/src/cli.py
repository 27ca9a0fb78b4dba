"""
Spectral Registration Command Line

Reproducible runs over the embedding and registration pipeline. Every command
writes its artifacts plus a ``manifest.json`` (config echo and SHA-256 content
hashes) into its output directory; ``replay`` re-runs a manifest and checks the
hashes.

Features:
- embed: spectrum, eigenmap and a PLY with the first eigenfunctions as scalars,
  optionally the shape rebuilt from its spectrum
- register: coarse-to-fine registration with correspondence and connectivity transfer
- rswd: optimized (or fixed-rotation) robust sliced-Wasserstein distance
- map: apply a saved plan to new target coordinates
- transfer: connectivity test on an existing correspondence
- replay: re-run a manifest and compare content hashes

Author: SpectralReg
Version: 1.0.0
"""

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime
from functools import wraps
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import click
import pandas as pd

from . import __version__
from .config import create_solver_settings, default_output_root, get_logger, setup_logging
from .eigenmap import Embedding, embed, load_embedding, reconstruct, save_embedding, truncate
from .exceptions import DegenerateInput, DimensionMismatch, RegistrationError, ReplayMismatch
from .geometry import PointCloud, load_shape, save_ply, transfer_connectivity, uniform_measure, voronoi_measure
from .laplace import assemble_operator, save_spectrum, solve_spectrum
from .register import (
    STANDARD_SCHEDULE, CurvilinearConfig, DirectionSet, LevelSpec, OrthogonalMatrix,
    default_direction_count, multiscale_register, rswd_distance, sliced_distance, write_result,
)
from .transport import interpolated_image, plan_to_map, read_correspondence, read_plan, write_correspondence

logger = get_logger("CLI")

MANIFEST = "manifest.json"
EMBEDDING_SUFFIX = ".bin"
EIGENFUNCTION_SCALARS = 4


@dataclass
class RunConfig:
    """Everything needed to reproduce one command invocation."""
    command: str
    params: Dict[str, Any] = field(default_factory=dict)  # JSON-compatible values only
    out: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        if "command" not in data:
            raise DegenerateInput("run config has no command")
        return cls(command=data["command"], params=dict(data.get("params", {})), out=data.get("out", ""))


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def parse_int_list(text: Optional[str]) -> Optional[List[int]]:
    """``"3,5,10"`` -> ``[3, 5, 10]``; empty or None stays None."""
    if text is None or not str(text).strip():
        return None
    try:
        return [int(part) for part in str(text).split(",") if part.strip()]
    except ValueError as e:
        raise DegenerateInput(f"expected a comma-separated list of integers, got {text!r}") from e


def _apply_measure(shape: PointCloud, measure: str) -> PointCloud:
    if measure == "voronoi":
        return voronoi_measure(shape)
    return uniform_measure(shape)


def _shape_spectrum(params: Dict[str, Any], shape: PointCloud, n: int):
    op = assemble_operator(shape, params.get("laplacian", "auto"), params.get("bandwidth"),
                           int(params.get("neighbors", 10)))
    return solve_spectrum(op, n, create_solver_settings())


def _load_input(path: str, params: Dict[str, Any], n: int) -> Tuple[Embedding, Optional[PointCloud]]:
    """Embedding of ``path`` with at least ``n`` columns, plus the shape when there is one."""
    if Path(path).suffix.lower() == EMBEDDING_SUFFIX:
        embedding = load_embedding(Path(path))
        if embedding.n < n:
            raise DimensionMismatch(f"{path}: embedding has {embedding.n} columns, {n} needed")
        return embedding, None
    shape = _apply_measure(load_shape(path, params.get("format")), params.get("measure", "uniform"))
    return embed(_shape_spectrum(params, shape, n), shape, n), shape


def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


# ---------------------------------------------------------------------------
# Command runners: (params, out) -> {file name: path}
# ---------------------------------------------------------------------------

def run_embed(params: Dict[str, Any], out: Path) -> Dict[str, Path]:
    n = int(params["n"])
    shape = _apply_measure(load_shape(params["input"], params.get("format")), params.get("measure", "uniform"))
    spectrum = _shape_spectrum(params, shape, n)
    embedding = embed(spectrum, shape, n)

    outputs = {
        "spectrum.bin": save_spectrum(out / "spectrum.bin", spectrum),
        "embedding.bin": save_embedding(out / "embedding.bin", embedding),
    }
    scalars = {f"phi_{k + 1}": spectrum.eigenfunctions[:, k]
               for k in range(min(EIGENFUNCTION_SCALARS, spectrum.n))}
    outputs["eigenfuncs.ply"] = save_ply(out / "eigenfuncs.ply", shape, scalars)
    if params.get("reconstruct"):
        rebuilt = PointCloud.from_arrays(reconstruct(spectrum, shape, n), shape.triangles, name=shape.name)
        outputs["reconstruction.ply"] = save_ply(out / "reconstruction.ply", rebuilt)
    return outputs


def run_register(params: Dict[str, Any], out: Path) -> Dict[str, Path]:
    schedule = parse_int_list(params.get("schedule")) or list(STANDARD_SCHEDULE)
    directions = parse_int_list(params.get("directions"))
    if directions is not None and len(directions) != len(schedule):
        raise DegenerateInput(f"{len(directions)} direction counts for {len(schedule)} schedule levels")

    top = max(schedule)
    P, source = _load_input(params["src"], params, top)
    Q, target = _load_input(params["dst"], params, top)
    if P.intrinsic_dim != Q.intrinsic_dim:
        raise DimensionMismatch(f"intrinsic dimensions differ ({P.intrinsic_dim} vs {Q.intrinsic_dim})")
    P_levels = [truncate(P, n) for n in schedule]
    Q_levels = [truncate(Q, n) for n in schedule]

    specs = [LevelSpec(n, directions[j] if directions else None, int(params.get("iterations", 2)),
                       params.get("method", "empirical"))
             for j, n in enumerate(schedule)]
    result = multiscale_register(P_levels, Q_levels, specs, seed=int(params.get("seed", 0)),
                                 source=source, target=target, max_size=params.get("exact_limit"),
                                 discrete_init=bool(params.get("discrete_init", False)))
    outputs = dict(write_result(result, out))

    if source is not None and target is not None and source.has_triangles:
        transfer = transfer_connectivity(source, target, result.correspondence)
        outputs["transfer.ply"] = save_ply(out / "transfer.ply", transfer.as_shape())
        outputs["quality.csv"] = _write_frame(
            pd.DataFrame({"quality": [transfer.quality], "edge_length_ratio": [transfer.edge_length_ratio]}),
            out / "quality.csv")
        click.echo(f"quality {transfer.quality:.6f}")
    click.echo(f"energy {result.energy:.17g}")
    return outputs


def run_rswd(params: Dict[str, Any], out: Path) -> Dict[str, Path]:
    n = params.get("n")
    if n is None:
        if Path(params["src"]).suffix.lower() != EMBEDDING_SUFFIX:
            raise DegenerateInput("--n is required when registering shapes")
        n = load_embedding(Path(params["src"])).n
    n = int(n)
    P, _ = _load_input(params["src"], params, n)
    Q, _ = _load_input(params["dst"], params, n)
    P, Q = truncate(P, n), truncate(Q, n)

    count = params.get("directions") or default_direction_count(n, "single")
    dirs = DirectionSet.generate(int(count), n, int(params.get("seed", 0)))
    if params.get("fixed_rotation") == "identity":
        value, rotation = sliced_distance(P, Q, dirs), OrthogonalMatrix.identity(n)
    else:
        value, result = rswd_distance(P, Q, dirs, CurvilinearConfig(),
                                      discrete_init=bool(params.get("discrete_init", False)))
        rotation = result.rotation

    outputs = {
        "rotation.csv": out / "rotation.csv",
        "rswd.csv": _write_frame(pd.DataFrame({"n": [n], "directions": [dirs.count], "value": [value]}),
                                 out / "rswd.csv"),
    }
    pd.DataFrame(rotation.entries).to_csv(outputs["rotation.csv"], index=False, header=False, float_format="%.17g")
    click.echo(f"{value:.17g}")
    return outputs


def run_map(params: Dict[str, Any], out: Path) -> Dict[str, Path]:
    plan = read_plan(params["plan_dir"])
    coords = load_shape(params["coords"], params.get("format")).points
    mapped = interpolated_image(plan, coords)
    outputs = {"correspondence.csv": write_correspondence(plan_to_map(plan), out / "correspondence.csv"),
               "mapped.xyz": out / "mapped.xyz"}
    pd.DataFrame(mapped).to_csv(outputs["mapped.xyz"], sep=" ", index=False, header=False, float_format="%.17g")
    return outputs


def run_transfer(params: Dict[str, Any], out: Path) -> Dict[str, Path]:
    source = load_shape(params["src"])
    target = load_shape(params["dst"])
    corr = read_correspondence(params["correspondence"], target.size)
    transfer = transfer_connectivity(source, target, corr)
    outputs = {
        "transfer.ply": save_ply(out / "transfer.ply", transfer.as_shape()),
        "quality.csv": _write_frame(
            pd.DataFrame({"quality": [transfer.quality], "edge_length_ratio": [transfer.edge_length_ratio]}),
            out / "quality.csv"),
    }
    click.echo(f"quality {transfer.quality:.6f}")
    return outputs


RUNNERS: Dict[str, Callable[[Dict[str, Any], Path], Dict[str, Path]]] = {
    "embed": run_embed,
    "register": run_register,
    "rswd": run_rswd,
    "map": run_map,
    "transfer": run_transfer,
}


# ---------------------------------------------------------------------------
# Manifest handling
# ---------------------------------------------------------------------------

def execute(config: RunConfig) -> Dict[str, Any]:
    """Run ``config`` into ``config.out`` and write its manifest."""
    if config.command not in RUNNERS:
        raise DegenerateInput(f"unknown command {config.command!r}")
    out = Path(config.out) if config.out else default_output_root() / config.command
    out.mkdir(parents=True, exist_ok=True)
    logger.info(f"Running {config.command} into {out}")
    try:
        outputs = RUNNERS[config.command](config.params, out)
    except Exception as e:
        logger.error(f"Failed to run {config.command}: {str(e)}")
        raise

    manifest = {
        "command": config.command,
        "config": RunConfig(config.command, config.params, str(out)).to_dict(),
        "outputs": {name: sha256_file(path) for name, path in sorted(outputs.items())},
        "created_at": datetime.now().isoformat(),
        "version": __version__,
    }
    with open(out / MANIFEST, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    logger.info(f"Wrote {len(outputs)} outputs and {MANIFEST} to {out}")
    return manifest


def replay(manifest_path: Path, out: Optional[Path] = None) -> Dict[str, Any]:
    """Re-run a manifest's config and raise ReplayMismatch when any hash differs."""
    with open(manifest_path) as f:
        saved = json.load(f)
    config = RunConfig.from_dict(saved["config"])
    config.out = str(out) if out else str(Path(config.out).with_name(Path(config.out).name + "-replay"))
    fresh = execute(config)
    differing = sorted(name for name in set(saved["outputs"]) | set(fresh["outputs"])
                       if saved["outputs"].get(name) != fresh["outputs"].get(name))
    if differing:
        raise ReplayMismatch(f"replay differs in {', '.join(differing)}")
    logger.info(f"Replay of {manifest_path} matches all {len(fresh['outputs'])} hashes")
    return fresh


def handle_errors(func):
    """Map pipeline errors to process exit codes."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except RegistrationError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(e.exit_code)
        except OSError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(2)
    return wrapper


# ---------------------------------------------------------------------------
# Click surface
# ---------------------------------------------------------------------------

_existing = click.Path(exists=True, dir_okay=False)
_measure = click.option("--measure", type=click.Choice(["uniform", "voronoi"]), default="uniform",
                        show_default=True, help="Probability measure on the points.")
_laplacian = click.option("--laplacian", type=click.Choice(["auto", "cotan_fem", "kernel_graph"]),
                          default="auto", show_default=True, help="LB discretization.")
_out = click.option("--out", type=click.Path(file_okay=False), default=None,
                    help="Output directory (default: $SPECTRAL_REG_OUTPUT_ROOT/<command>).")
_discrete_init = click.option("--discrete-init", is_flag=True, default=False,
                              help="Start from the best signed permutation instead of R = I.")


@click.group()
@click.version_option(__version__)
def cli():
    """Spectral point-cloud registration."""
    setup_logging()


@cli.command("embed")
@click.option("--in", "input_path", type=_existing, required=True, help="Shape file (OFF/PLY/OBJ/XYZ).")
@click.option("--n", type=int, default=10, show_default=True, help="Embedding dimension.")
@click.option("--format", "fmt", default=None, help="Override the format inferred from the extension.")
@click.option("--bandwidth", type=float, default=None, help="Kernel bandwidth t (kernel graph only).")
@click.option("--neighbors", type=int, default=10, show_default=True, help="Neighbors per point (kernel graph).")
@click.option("--reconstruct", is_flag=True, default=False,
              help="Also write reconstruction.ply rebuilt from the n eigenfunctions.")
@_measure
@_laplacian
@_out
@handle_errors
def embed_command(input_path, n, fmt, bandwidth, neighbors, reconstruct, measure, laplacian, out):
    """Write spectrum.bin, embedding.bin and eigenfuncs.ply for one shape."""
    execute(RunConfig("embed", {"input": input_path, "n": n, "format": fmt, "bandwidth": bandwidth,
                                "neighbors": neighbors, "reconstruct": reconstruct, "measure": measure,
                                "laplacian": laplacian},
                      out or ""))


@cli.command("register")
@click.option("--src", type=_existing, required=True, help="Source shape or .bin embedding.")
@click.option("--dst", type=_existing, required=True, help="Target shape or .bin embedding.")
@click.option("--schedule", default=",".join(map(str, STANDARD_SCHEDULE)), show_default=True,
              help="Comma-separated embedding dimensions.")
@click.option("--directions", default=None, help="Comma-separated direction counts per level.")
@click.option("--iterations", type=int, default=2, show_default=True, help="Iterations per level.")
@click.option("--method", type=click.Choice(["empirical", "alternating", "exact"]), default="empirical",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--exact-limit", type=int, default=None, help="Cell guard for the exact transport solver.")
@_discrete_init
@_measure
@_laplacian
@_out
@handle_errors
def register_command(src, dst, schedule, directions, iterations, method, seed, exact_limit, discrete_init,
                     measure, laplacian, out):
    """Register SRC onto DST coarse-to-fine and write the result bundle."""
    execute(RunConfig("register", {"src": src, "dst": dst, "schedule": schedule, "directions": directions,
                                   "iterations": iterations, "method": method, "seed": seed,
                                   "exact_limit": exact_limit, "discrete_init": discrete_init,
                                   "measure": measure, "laplacian": laplacian},
                      out or ""))


@cli.command("rswd")
@click.option("--src", type=_existing, required=True, help="Source shape or .bin embedding.")
@click.option("--dst", type=_existing, required=True, help="Target shape or .bin embedding.")
@click.option("--n", type=int, default=None, help="Embedding dimension (defaults to the embedding's).")
@click.option("--directions", type=int, default=None, help="Number of directions L.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--fixed-rotation", type=click.Choice(["none", "identity"]), default="none", show_default=True,
              help="'identity' prints the plain sliced-Wasserstein distance.")
@_discrete_init
@_measure
@_laplacian
@_out
@handle_errors
def rswd_command(src, dst, n, directions, seed, fixed_rotation, discrete_init, measure, laplacian, out):
    """Print the robust sliced-Wasserstein distance between SRC and DST."""
    execute(RunConfig("rswd", {"src": src, "dst": dst, "n": n, "directions": directions, "seed": seed,
                               "fixed_rotation": fixed_rotation, "discrete_init": discrete_init,
                               "measure": measure, "laplacian": laplacian},
                      out or ""))


@cli.command("map")
@click.option("--plan-dir", type=click.Path(exists=True, file_okay=False), required=True,
              help="Directory holding plan.csv and plan_marginals.csv.")
@click.option("--coords", type=_existing, required=True, help="Target coordinates (any shape format).")
@_out
@handle_errors
def map_command(plan_dir, coords, out):
    """Apply a saved plan: hard correspondence and interpolated coordinates."""
    execute(RunConfig("map", {"plan_dir": plan_dir, "coords": coords}, out or ""))


@cli.command("transfer")
@click.option("--src", type=_existing, required=True, help="Triangulated source shape.")
@click.option("--dst", type=_existing, required=True, help="Target shape.")
@click.option("--correspondence", type=_existing, required=True, help="correspondence.csv from register/map.")
@_out
@handle_errors
def transfer_command(src, dst, correspondence, out):
    """Push source triangles onto the target and report the quality score."""
    execute(RunConfig("transfer", {"src": src, "dst": dst, "correspondence": correspondence}, out or ""))


@cli.command("replay")
@click.option("--manifest", "manifest_path", type=_existing, required=True)
@_out
@handle_errors
def replay_command(manifest_path, out):
    """Re-run a manifest and verify its content hashes."""
    fresh = replay(Path(manifest_path), Path(out) if out else None)
    click.echo(f"replay ok: {len(fresh['outputs'])} outputs match")


def main():
    cli(prog_name="spectral-reg")
