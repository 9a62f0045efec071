"""Command-line interface: ``lapshape <command> [options]``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 unsupported format.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, kernels
from .config import (RunConfig, canonical_json, file_sha256, load_config, parse_provenance, provenance_block,
                     provenance_lines)
from .errors import InvalidInputError, LapshapeError
from .geometry import PointCloud, detect_sharp_edges, estimate_normals, max_normal_angle
from .io import (read_hks_csv, read_ply, read_segmentation_csv, read_xyz, sample_stl, write_hks_csv,
                 write_labeled_ply, write_persistence_csv, write_segmentation_csv, write_sparse, write_type_csv,
                 write_xyz)
from .laplacian import assemble_spcl, resolve_radius, solve_eigs
from .retrieval import DescriptorIndex, index_model, retrieve_top_k
from .segmentation import (clustering_balance, curvature_segment, heat_walk, heat_walk_segmentation,
                           persistence_segment, recluster_by_type, tau_for_segment_count)
from .signatures import compute_heat_kernel, compute_hks, default_t_scales
from .synthetic import PRIMITIVE_KINDS, NoiseSpec, add_noise, generate_primitive

CONFIG_FLAGS = ("radius_multiplier", "eig_count", "scale_count", "nu", "cull_fraction", "seed", "heat_kernel_cap",
                "matching")


class _Run:
    """Per-invocation state: merged config, hashed inputs and the provenance block."""

    def __init__(self, args: argparse.Namespace, argv: Sequence[str]):
        self.args = args
        self.argv = list(argv)
        base = RunConfig()
        if getattr(args, "config_json", None):
            base = RunConfig.from_dict(json.loads(args.config_json))
        elif getattr(args, "config", None):
            base = load_config(args.config)
        self.config = base.merged({k: getattr(args, k, None) for k in CONFIG_FLAGS})
        self.inputs: dict[str, str] = {}
        self.extra: dict = {}

    def add_input(self, path: str | Path) -> Path:
        p = Path(path)
        if not p.is_file():
            raise InvalidInputError(f"{p}: no such file")
        self.inputs[str(p)] = file_sha256(p)
        return p

    def replay_argv(self) -> list[str]:
        out = []
        skip = False
        for tok in self.argv:
            if skip:
                skip = False
                continue
            if tok in ("--config", "--config-json"):
                skip = True
                continue
            if tok.startswith(("--config=", "--config-json=")):
                continue
            out.append(tok)
        return out + ["--config-json", canonical_json(self.config.to_dict())]

    def provenance(self) -> dict:
        return provenance_block(self.args.command, self.replay_argv(), self.config, self.inputs, self.extra)

    def comments(self) -> list[str]:
        return [line[2:] for line in provenance_lines(self.provenance())]

    def emit(self) -> None:
        for line in provenance_lines(self.provenance()):
            print(line, file=sys.stderr)


def _read_cloud(run: _Run, path: str) -> PointCloud:
    p = run.add_input(path)
    suffix = p.suffix.lower()
    if suffix == ".ply":
        pts, _ = read_ply(p)
        if len(pts) < 4:
            raise InvalidInputError(f"{p}: {len(pts)} point(s); at least 4 are required")
        return PointCloud(pts)
    if suffix == ".stl":
        raise InvalidInputError(f"{p}: meshes must be sampled first (lapshape sample)")
    return read_xyz(p)


def _write_cloud(run: _Run, path: str, cloud: PointCloud, labels=None) -> None:
    if Path(path).suffix.lower() == ".ply":
        write_labeled_ply(path, cloud, np.zeros(cloud.n, dtype=np.int64) if labels is None else labels,
                          comments=run.comments())
    else:
        write_xyz(path, cloud, comments=run.comments())


def _radius(run: _Run, cloud: PointCloud) -> tuple[float, float]:
    r, eps = resolve_radius(cloud, run.config.radius_multiplier)
    run.extra.update({"radius": r, "bandwidth": eps, "spacing_h": cloud.spacing_h})
    return r, eps


def _spectrum(run: _Run, cloud: PointCloud):
    r, eps = _radius(run, cloud)
    op = assemble_spcl(cloud, r, eps, backend=run.args.backend)
    k = min(run.config.eig_count, op.n - 1)
    eigs = solve_eigs(op, k, seed=run.config.seed)
    return op, eigs


def _scales(run: _Run, eigs) -> np.ndarray:
    if run.args.t:
        return np.array(run.args.t, dtype=np.float64)
    return default_t_scales(eigs, run.config.scale_count)


# ----------------------------------------------------------------------------
# commands


def cmd_gen(run: _Run) -> None:
    a = run.args
    cloud, labels = generate_primitive(a.kind, a.n, seed=run.config.seed, gap=a.gap, even=a.even)
    _write_cloud(run, a.output, cloud, labels)


def cmd_sample(run: _Run) -> None:
    p = run.add_input(run.args.input)
    cloud = sample_stl(p, run.args.n, seed=run.config.seed)
    _write_cloud(run, run.args.output, cloud)


def cmd_noise(run: _Run) -> None:
    a = run.args
    cloud = _read_cloud(run, a.input)
    spec = NoiseSpec(a.mu, a.sigma_p, run.config.seed)
    run.extra["noise"] = {"mu": spec.mu, "sigma_p": spec.sigma_p, "seed": spec.seed, "spacing_h": cloud.spacing_h}
    _write_cloud(run, a.output, add_noise(cloud, spec))


def cmd_spcl(run: _Run) -> None:
    cloud = _read_cloud(run, run.args.input)
    r, eps = _radius(run, cloud)
    t0 = time.perf_counter()
    op = assemble_spcl(cloud, r, eps, backend=run.args.backend)
    t1 = time.perf_counter()
    print(f"assembly {t1 - t0:.3f} s ({kernels.get_backend(run.args.backend).__name__})", file=sys.stderr)
    if run.args.eigs:
        k = min(run.config.eig_count, op.n - 1)
        solve_eigs(op, k, seed=run.config.seed)
        print(f"eigensolve k={k} {time.perf_counter() - t1:.3f} s", file=sys.stderr)
    write_sparse(run.args.output, op.stiffness, op.mass, op.radius_r, op.bandwidth_eps, comments=run.comments())


def cmd_hks(run: _Run) -> None:
    cloud = _read_cloud(run, run.args.input)
    _, eigs = _spectrum(run, cloud)
    hks = compute_hks(eigs, _scales(run, eigs))
    write_hks_csv(run.args.output, hks.t_scales, hks.values, comments=run.comments())


def cmd_segment(run: _Run) -> None:
    a = run.args
    cloud = _read_cloud(run, a.input)
    op, eigs = _spectrum(run, cloud)
    scales = _scales(run, eigs)
    j = len(scales) // 2 if a.scale_index is None else a.scale_index
    if not 0 <= j < len(scales):
        raise InvalidInputError(f"scale index {j} out of range for {len(scales)} scales")
    ref = float(scales[j])
    column = compute_hks(eigs, [ref]).values[:, 0]
    tau = a.tau
    if a.segments is not None:
        _, pairs = persistence_segment(cloud, op, column, nu=run.config.nu, tau=0.0)
        tau = tau_for_segment_count(pairs, a.segments)
    seg, pairs = persistence_segment(cloud, op, column, nu=run.config.nu, tau=tau, reference_scale=ref)
    run.extra.update({"tau": tau, "reference_scale": ref, "segments": seg.segment_count})
    out = Path(a.output)
    write_labeled_ply(out.with_suffix(".ply"), cloud, seg.labels, comments=run.comments(), sidecar=False)
    write_segmentation_csv(out.with_suffix(".labels.csv"), seg.labels, comments=run.comments(),
                           meta={"reference_scale": ref, "criteria": seg.segment_max_value.tolist()})
    write_persistence_csv(out.with_suffix(".persistence.csv"), pairs, comments=run.comments())


def cmd_heatwalk(run: _Run) -> None:
    a = run.args
    cloud = _read_cloud(run, a.input)
    _, eigs = _spectrum(run, cloud)
    kernel = compute_heat_kernel(eigs, a.walk_t, max_points=run.config.heat_kernel_cap)
    result = heat_walk(kernel, max_iter=a.max_iter)
    seg, criteria = heat_walk_segmentation(result, np.diag(kernel.entries))
    run.extra.update({"t": a.walk_t, "iterations": result.iterations, "converged": result.converged,
                      "negative_kernel_entries": result.negative_clamped})
    if not result.converged:
        warnings.warn(f"heat walk did not converge in {a.max_iter} iterations", stacklevel=1)
    out = Path(a.output)
    write_labeled_ply(out.with_suffix(".ply"), cloud, seg.labels, comments=run.comments(), sidecar=False)
    write_segmentation_csv(out.with_suffix(".labels.csv"), seg.labels, comments=run.comments(),
                           meta={"criteria": criteria.tolist()})


def cmd_curvseg(run: _Run) -> None:
    a = run.args
    cloud = _read_cloud(run, a.input)
    r = a.normal_radius * cloud.spacing_h
    normals = estimate_normals(cloud, r)
    kappa = max_normal_angle(cloud, normals, r)
    edges = detect_sharp_edges(cloud, normals, r, math.radians(a.angle))
    if a.target_count is None and a.max_edge_value is None:
        raise InvalidInputError("curvseg needs --target-count or --max-edge-value")
    seg = curvature_segment(cloud, normals, edges, r, kappa=kappa, k_seeds=a.k_seeds,
                            target_count=a.target_count, max_edge_value=a.max_edge_value)
    run.extra.update({"edge_points": int(len(edges)), "segments": seg.segment_count, "radius": r})
    out = Path(a.output)
    write_labeled_ply(out.with_suffix(".ply"), cloud, seg.labels, comments=run.comments(), sidecar=False)
    write_segmentation_csv(out.with_suffix(".labels.csv"), seg.labels, comments=run.comments(),
                           meta={"criteria": seg.segment_max_value.tolist()})


def cmd_recluster(run: _Run) -> None:
    a = run.args
    labels, meta = read_segmentation_csv(run.add_input(a.segmentation))
    count = int(labels.max()) + 1 if (labels >= 0).any() else 0
    if count == 0:
        raise InvalidInputError("segmentation has no segments")
    criterion = meta.get("criteria")
    if criterion is None:
        if not a.hks:
            raise InvalidInputError("segmentation CSV has no criteria; pass --hks")
        t, values = read_hks_csv(run.add_input(a.hks))
        ref = meta.get("reference_scale")
        hits = np.flatnonzero(t == ref) if ref is not None else np.array([0])
        if len(hits) == 0:
            raise InvalidInputError(f"signature CSV has no column at t = {ref!r}")
        if len(values) != len(labels):
            raise InvalidInputError("signature and segmentation CSVs have different point counts")
        column = values[:, hits[0]]
        criterion = [float(column[labels == s].max()) for s in range(count)]
    criterion = np.asarray(criterion, dtype=np.float64)
    if len(criterion) != count:
        raise InvalidInputError(f"{len(criterion)} criteria for {count} segments")
    modes = [a.types is not None, a.threshold is not None, a.auto_balance]
    if sum(modes) != 1:
        raise InvalidInputError("give exactly one of --types, --threshold, --auto-balance")
    if a.auto_balance:
        bal = clustering_balance(criterion)
        run.extra["balance_scores"] = bal.scores.tolist()
        grouping = recluster_by_type(criterion=criterion, type_count=bal.argmin)
    else:
        grouping = recluster_by_type(criterion=criterion, type_count=a.types, threshold=a.threshold)
    run.extra["type_count"] = grouping.type_count
    write_type_csv(a.output, grouping.segment_type, criterion, comments=run.comments())


def _model_files(paths: Sequence[str]) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out += sorted(q for q in p.iterdir() if q.suffix.lower() in (".xyz", ".ply"))
        else:
            out.append(p)
    if not out:
        raise InvalidInputError("no model files given")
    return out


def cmd_index(run: _Run) -> None:
    a = run.args
    out = Path(a.output)
    if a.append and out.exists():
        index = DescriptorIndex.read(run.add_input(out))
        if index.params != run.config.descriptor_params():
            raise InvalidInputError("existing index was built with different parameters")
    else:
        index = DescriptorIndex(run.config.descriptor_params())
    for path in _model_files(a.inputs):
        cloud = _read_cloud(run, str(path))
        rec = index_model(cloud, run.config, model_id=path.stem, source_hash=run.inputs[str(path)],
                          backend=a.backend)
        index.add(rec)
    index.write(out)


def cmd_query(run: _Run) -> None:
    a = run.args
    index = DescriptorIndex.read(run.add_input(a.index))
    cfg = RunConfig.from_dict({**run.config.to_dict(), **index.params})
    lines = []
    for path in _model_files(a.queries):
        cloud = _read_cloud(run, str(path))
        rec = index_model(cloud, cfg, model_id=path.stem, source_hash=run.inputs[str(path)], backend=a.backend)
        k = min(a.k, len(index))
        for rank, (mid, score) in enumerate(retrieve_top_k(index, rec, k, cfg.matching), start=1):
            lines.append(f"{path.stem},{rank},{mid},{score!r}")
    text = "\n".join(["query,rank,model_id,score"] + lines) + "\n"
    if a.output:
        body = "\n".join(f"# {c}" for c in run.comments()) + "\n" + text
        Path(a.output).write_text(body, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def cmd_replay(source: str) -> int:
    block = parse_provenance(Path(source).read_text(encoding="utf-8"))
    for path, digest in block.get("inputs", {}).items():
        if not Path(path).is_file() or file_sha256(path) != digest:
            raise InvalidInputError(f"input {path} is missing or changed since the recorded run")
    print("replaying: lapshape " + " ".join(block["argv"]), file=sys.stderr)
    return main(block["argv"])


# ----------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, spectral: bool = True) -> None:
    p.add_argument("--config", help="JSON file with RunConfig fields (flags win)")
    p.add_argument("--config-json", help=argparse.SUPPRESS)
    p.add_argument("--seed", type=int)
    if spectral:
        p.add_argument("--radius-multiplier", type=float, dest="radius_multiplier",
                       help="fixed radius in mean spacings (default: adaptive)")
        p.add_argument("--eig-count", type=int, dest="eig_count")
        p.add_argument("--scale-count", type=int, dest="scale_count")
        p.add_argument("--nu", type=int, help="neighbors kept per operator row for segmentation")
        p.add_argument("--backend", choices=("compiled", "python"), help="assembly kernel implementation")
        p.add_argument("--t", type=float, nargs="+", help="explicit diffusion times")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lapshape", description="Point-cloud spectral shape analysis.")
    parser.add_argument("--version", action="version", version=f"lapshape {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic primitive")
    p.add_argument("kind", choices=PRIMITIVE_KINDS)
    p.add_argument("-n", type=int, default=2000)
    p.add_argument("--gap", type=float, default=4.0, help="twin-cylinders gap in spacings")
    p.add_argument("--even", action="store_true", help="evenly spaced (farthest-point) sampling")
    p.add_argument("-o", "--output", required=True, help=".xyz or .ply (labels as colors)")
    _common(p, spectral=False)

    p = sub.add_parser("sample", help="sample points from an STL mesh")
    p.add_argument("input")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    _common(p, spectral=False)

    p = sub.add_parser("noise", help="add Gaussian noise scaled by the mean spacing")
    p.add_argument("input")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma-p", type=float, dest="sigma_p", required=True)
    p.add_argument("-o", "--output", required=True)
    _common(p, spectral=False)

    p = sub.add_parser("spcl", help="assemble the operator and dump it")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--eigs", action="store_true", help="also time the eigensolve")
    _common(p)

    p = sub.add_parser("hks", help="heat kernel signatures to CSV")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    _common(p)

    p = sub.add_parser("segment", help="persistence segmentation")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="output stem: .ply, .labels.csv, .persistence.csv")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--tau", type=float, default=0.0)
    g.add_argument("--segments", type=int)
    p.add_argument("--scale-index", type=int, dest="scale_index", help="which scale to segment (default: median)")
    _common(p)

    p = sub.add_parser("heatwalk", help="heat walk segmentation")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--walk-t", "--time", type=float, dest="walk_t", required=True, help="diffusion time")
    p.add_argument("--max-iter", type=int, dest="max_iter", default=200)
    p.add_argument("--heat-kernel-cap", type=int, dest="heat_kernel_cap")
    _common(p)

    p = sub.add_parser("curvseg", help="curvature-seeded region growing")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--normal-radius", type=float, dest="normal_radius", default=4.0, help="in mean spacings")
    p.add_argument("--angle", type=float, default=20.0, help="sharp-edge threshold in degrees")
    p.add_argument("--k-seeds", type=int, dest="k_seeds", default=3)
    p.add_argument("--target-count", type=int, dest="target_count")
    p.add_argument("--max-edge-value", type=float, dest="max_edge_value")
    _common(p, spectral=False)

    p = sub.add_parser("recluster", help="group segments into types")
    p.add_argument("segmentation", help="segmentation CSV")
    p.add_argument("--hks", help="signature CSV (needed when the segmentation carries no criteria)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--types", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--auto-balance", action="store_true", dest="auto_balance")
    _common(p, spectral=False)

    p = sub.add_parser("index", help="build or extend a descriptor index")
    p.add_argument("inputs", nargs="+", help="model files or directories")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--append", action="store_true")
    p.add_argument("--cull-fraction", type=float, dest="cull_fraction")
    _common(p)

    p = sub.add_parser("query", help="rank index models against query models")
    p.add_argument("index")
    p.add_argument("queries", nargs="+")
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--matching", choices=("hungarian", "sorted"))
    p.add_argument("-o", "--output")
    _common(p)

    p = sub.add_parser("replay", help="rerun the command recorded in a provenance block")
    p.add_argument("source", help="any output file or captured stderr")
    return parser


COMMANDS = {
    "gen": cmd_gen, "sample": cmd_sample, "noise": cmd_noise, "spcl": cmd_spcl, "hks": cmd_hks,
    "segment": cmd_segment, "heatwalk": cmd_heatwalk, "curvseg": cmd_curvseg, "recluster": cmd_recluster,
    "index": cmd_index, "query": cmd_query,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "replay":
            return cmd_replay(args.source)
        run = _Run(args, argv)
        if not hasattr(args, "backend"):
            args.backend = None
        if not hasattr(args, "t"):
            args.t = None
        COMMANDS[args.command](run)
        run.emit()
        return 0
    except LapshapeError as exc:
        print(f"lapshape {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"lapshape {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
