"""Stage-wise command line for the retargeting pipeline.

Each subcommand wraps one library stage and communicates through files, so
the monolithic `pipeline` command and a sequence of stage commands produce
identical bytes. Exit codes: 0 success, 2 validation/argument problems,
3 numeric failures, 4 I/O.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
from contextlib import contextmanager
from pathlib import Path

from .correspondence import (
    RegisteredPair,
    coarse_retarget,
    correspond,
    extrapolate_embedding,
    save_correspondence,
)
from .detail import detail_integrate, load_anchors, pick_anchors
from .errors import GarmentRetargetError, ValidationError
from .geodesics import geodesic_matrix, load_geodesics, save_geodesics
from .isomap import isomap, load_embedding, save_embedding
from .mesh import load_mesh, save_mesh
from .metrics import RichnessInput, compute_metrics, richness_score
from .refine import RefineConfig, load_regions, refine


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _nonneg_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = _nonneg_float(text)
    if value == 0:
        raise argparse.ArgumentTypeError("must be positive, got 0")
    return value


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@contextmanager
def _stage(name: str):
    """Prefix library errors with the pipeline stage that raised them."""
    try:
        yield
    except GarmentRetargetError as exc:
        raise type(exc)(f"{name}: {exc}") from exc


def _compute_embedding(template_path, dim: int, cache_dir, out_path) -> None:
    mesh = load_mesh(template_path)
    topo = mesh.topology_hash()
    geo = None
    if cache_dir is not None:
        cache = Path(cache_dir)
        cache.mkdir(parents=True, exist_ok=True)
        cache_file = cache / f"geod-{topo.hex()[:16]}.bin"
        if cache_file.exists():
            geo = load_geodesics(cache_file, source_hash=topo)
        else:
            geo = geodesic_matrix(mesh)
            save_geodesics(geo, cache_file)
    else:
        geo = geodesic_matrix(mesh)
    emb = isomap(geo, dim)
    save_embedding(emb, out_path)


def _load_pair(surface_path, instance_path, embedding) -> RegisteredPair:
    return RegisteredPair(
        surface=load_mesh(surface_path),
        template_instance=load_mesh(instance_path),
        template_embedding=embedding,
    )


def _run_coarse(args, embedding_path, out: Path) -> Path:
    emb = load_embedding(embedding_path)
    gpair = _load_pair(args.garment, args.garment_reg, emb)
    tpair = _load_pair(args.target, args.target_reg, emb)
    garment_emb = extrapolate_embedding(gpair, args.k)
    target_emb = extrapolate_embedding(tpair, args.k)
    corr = correspond(garment_emb, target_emb, tpair.surface.vertices, args.k)
    coarse = coarse_retarget(gpair.surface, corr)
    save_mesh(coarse, out / "coarse.obj")
    save_correspondence(corr, out / "coarse.corr")
    return out / "coarse.obj"


def _run_refine(args, embedding_path, coarse_path, out: Path) -> Path:
    emb = load_embedding(embedding_path)
    gpair = _load_pair(args.garment, args.garment_reg, emb)
    tpair = _load_pair(args.target, args.target_reg, emb)
    target_emb = extrapolate_embedding(tpair, args.k)
    coarse = load_mesh(coarse_path)
    mask = load_regions(args.regions) if args.regions else None
    cfg = RefineConfig(
        lambda_length=args.lambda_length,
        lambda_corres=args.lambda_corres,
        lambda_bend=args.lambda_bend,
        k=args.k,
        step=args.step,
        max_iters=args.iters,
    )
    result = refine(coarse, gpair, tpair, target_emb, mask, cfg)
    save_mesh(result.mesh, out / "refined.obj")
    b = result.breakdown
    print(
        f"refine: iterations={result.iterations} stop={result.stop_reason} "
        f"total={float(result.history[-1])!r} length={float(b['length'])!r} "
        f"corres={float(b['corres'])!r} bend={float(b['bend'])!r}"
    )
    return out / "refined.obj"


def _resolve_anchors(spec: str, source_mesh):
    if spec.startswith("auto:"):
        raw = spec[len("auto:"):]
        try:
            pct = float(raw)
        except ValueError:
            raise ValidationError(
                f"bad anchor spec {spec!r}: expected auto:PERCENT or a file path"
            ) from None
        if not 0 < pct <= 100:
            raise ValidationError(f"anchor percentage must be in (0, 100], got {pct}")
        return pick_anchors(source_mesh, pct / 100.0)
    return load_anchors(spec)


def _run_detail(args, refined_path, out: Path) -> Path:
    source = load_mesh(args.garment)
    refined = load_mesh(refined_path)
    anchors = _resolve_anchors(args.anchors, source)
    detailed, residual = detail_integrate(source, refined, anchors)
    save_mesh(detailed, out / "detailed.obj")
    print(f"detail: anchors={len(anchors)} residual={residual!r}")
    return out / "detailed.obj"


def _run_eval(pred_path, gt_path, body_path) -> str:
    pred = load_mesh(pred_path)
    gt = load_mesh(gt_path) if gt_path else None
    body = load_mesh(body_path) if body_path else None
    if gt is None and body is None:
        raise ValidationError("eval needs --gt and/or --body to have anything to measure")
    report = compute_metrics(pred, gt=gt, body=body)
    return report.record_line()


def cmd_embed(args) -> int:
    out = _out_dir(args)
    with _stage("embed"):
        _compute_embedding(args.template, args.dim, args.cache, out / "embedding.emb")
    print(f"embed: wrote {out / 'embedding.emb'}")
    return 0


def cmd_coarse(args) -> int:
    out = _out_dir(args)
    with _stage("coarse"):
        _run_coarse(args, args.embedding, out)
    print(f"coarse: wrote {out / 'coarse.obj'}")
    return 0


def cmd_refine(args) -> int:
    out = _out_dir(args)
    with _stage("refine"):
        _run_refine(args, args.embedding, args.coarse, out)
    return 0


def cmd_detail(args) -> int:
    out = _out_dir(args)
    with _stage("detail"):
        _run_detail(args, args.refined, out)
    return 0


def cmd_eval(args) -> int:
    with _stage("eval"):
        line = _run_eval(args.mesh, args.gt, args.body)
    print(line)
    return 0


def cmd_richness(args) -> int:
    with _stage("richness"):
        mesh = load_mesh(args.template)
        topo = mesh.topology_hash()
        if args.cache is not None:
            cache = Path(args.cache)
            cache.mkdir(parents=True, exist_ok=True)
            cache_file = cache / f"geod-{topo.hex()[:16]}.bin"
            if cache_file.exists():
                geo = load_geodesics(cache_file, source_hash=topo)
            else:
                geo = geodesic_matrix(mesh)
                save_geodesics(geo, cache_file)
        else:
            geo = geodesic_matrix(mesh)
        emb = isomap(geo, args.dim)
        score = richness_score(RichnessInput(geo=geo, emb=emb, k=args.k))
    print(f"dim={args.dim} k={args.k} richness={score!r}")
    return 0


def cmd_pipeline(args) -> int:
    out = _out_dir(args)
    embedding_path = out / "embedding.emb"
    with _stage("embed"):
        _compute_embedding(args.template, args.dim, args.cache, embedding_path)
    args.embedding = str(embedding_path)
    with _stage("coarse"):
        coarse_path = _run_coarse(args, embedding_path, out)
    with _stage("refine"):
        refined_path = _run_refine(args, embedding_path, coarse_path, out)
    with _stage("detail"):
        detailed_path = _run_detail(args, refined_path, out)
    with _stage("eval"):
        record = _run_eval(detailed_path, None, args.target)
    (out / "metrics.txt").write_text(record + "\n", encoding="utf-8")
    print(record)

    inputs = {
        "template": args.template,
        "garment": args.garment,
        "garment_reg": args.garment_reg,
        "target": args.target,
        "target_reg": args.target_reg,
    }
    if args.regions:
        inputs["regions"] = args.regions
    if not args.anchors.startswith("auto:"):
        inputs["anchors"] = args.anchors
    outputs = [
        embedding_path,
        coarse_path,
        out / "coarse.corr",
        refined_path,
        detailed_path,
        out / "metrics.txt",
    ]
    manifest = {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "parameters": {
            "dim": args.dim,
            "k": args.k,
            "lambda_length": args.lambda_length,
            "lambda_corres": args.lambda_corres,
            "lambda_bend": args.lambda_bend,
            "iters": args.iters,
            "step": args.step,
            "anchors": args.anchors,
            "regions": args.regions,
        },
        "input_hashes": {name: _sha256_file(path) for name, path in inputs.items()},
        "output_hashes": {Path(p).name: _sha256_file(p) for p in outputs},
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"pipeline: wrote {out / 'manifest.json'}")
    return 0


def _add_refine_flags(sub) -> None:
    sub.add_argument("--lambda-length", type=_nonneg_float, default=1.0,
                     dest="lambda_length", help="edge-length loss weight")
    sub.add_argument("--lambda-corres", type=_nonneg_float, default=1.0,
                     dest="lambda_corres", help="correspondence loss weight")
    sub.add_argument("--lambda-bend", type=_nonneg_float, default=0.05,
                     dest="lambda_bend", help="bend loss weight")
    sub.add_argument("--iters", type=_positive_int, default=500,
                     help="maximum refinement iterations")
    sub.add_argument("--step", type=_positive_float, default=1.0,
                     help="initial line-search step (geometry units)")
    sub.add_argument("--regions", default=None,
                     help="joint-region file (region_name vertex_index per line)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="garment-retarget",
        description="Retarget a garment mesh onto a new body through "
        "geodesic-embedding correspondence, loss-driven refinement, and "
        "Laplacian detail transfer.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("embed", help="compute the template embedding")
    p.add_argument("template", help="canonical template mesh (.obj)")
    p.add_argument("--dim", type=_positive_int, default=128, help="embedding dimension")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--cache", default=None, help="geodesic cache directory")
    p.set_defaults(func=cmd_embed)

    p = subs.add_parser("coarse", help="coarse retargeting via correspondences")
    p.add_argument("garment")
    p.add_argument("garment_reg", help="template instance registered to the garment")
    p.add_argument("target")
    p.add_argument("target_reg", help="template instance registered to the target")
    p.add_argument("embedding", help="ISOEMB01 file from `embed`")
    p.add_argument("--k", type=_positive_int, default=32, help="neighbor count")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_coarse)

    p = subs.add_parser("refine", help="optimize the coarse retargeting")
    p.add_argument("garment")
    p.add_argument("garment_reg")
    p.add_argument("target")
    p.add_argument("target_reg")
    p.add_argument("embedding")
    p.add_argument("coarse", help="coarse mesh from `coarse`")
    p.add_argument("--k", type=_positive_int, default=32)
    _add_refine_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refine)

    p = subs.add_parser("detail", help="transfer source detail onto the refined mesh")
    p.add_argument("garment", help="source garment (detail donor)")
    p.add_argument("refined", help="refined mesh from `refine`")
    p.add_argument("--anchors", default="auto:5",
                   help="anchor file (one index per line) or auto:PERCENT")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detail)

    p = subs.add_parser("eval", help="evaluate a mesh against references")
    p.add_argument("mesh")
    p.add_argument("--gt", default=None, help="index-corresponded ground truth")
    p.add_argument("--body", default=None, help="target body for IR/P2S")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("richness", help="embedding richness score for a template")
    p.add_argument("template")
    p.add_argument("--dim", type=_positive_int, default=128)
    p.add_argument("--k", type=_positive_int, default=32)
    p.add_argument("--cache", default=None)
    p.set_defaults(func=cmd_richness)

    p = subs.add_parser("pipeline", help="embed -> coarse -> refine -> detail -> eval")
    p.add_argument("template")
    p.add_argument("garment")
    p.add_argument("garment_reg")
    p.add_argument("target")
    p.add_argument("target_reg")
    p.add_argument("--dim", type=_positive_int, default=128)
    p.add_argument("--k", type=_positive_int, default=32)
    _add_refine_flags(p)
    p.add_argument("--anchors", default="auto:5")
    p.add_argument("--out", required=True)
    p.add_argument("--cache", default=None)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GarmentRetargetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
