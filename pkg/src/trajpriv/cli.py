"""Command-line interface.

Subcommands: ingest, preprocess, split, synthesize, privatize-cond,
evaluate, report, density. All exit with code 0 on success; failures print
one JSON object ``{"error": ..., "message": ...}`` to stderr and exit 1.

Randomness: ``--seed`` makes a run reproducible. ``--secure`` draws from OS
entropy instead and overrides ``--seed``; production releases of privatized
artifacts must use it, since differential privacy assumes noise an adversary
cannot predict.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .conditional import AffineMap, ConditionalEmbedder
from .geo import PRESETS, BoundingBox, TrajectoryPreprocessor, kfold_split
from .harness import (
    CaseConfig,
    RunResult,
    emit_density_grid,
    load_results,
    subsample_dataset,
    write_report,
)
from .io import load_dataset, save_dataset
from .markov import MarkovSynthesizer
from .metrics import EvalConfig, evaluate_pair


def _rng_seed(args) -> int | None:
    if getattr(args, "secure", False):
        # OS entropy; the run is intentionally not reproducible.
        return int(np.random.SeedSequence().generate_state(1)[0])
    return args.seed


def _parse_bbox(text: str) -> BoundingBox:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 4:
        raise ValueError("bbox must be lat_min,lon_min,lat_max,lon_max")
    return BoundingBox(*parts)


def _load_preset_file(path) -> tuple[BoundingBox, int | None]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if "bbox" not in doc:
        raise ValueError(f"preset file {path} must define 'bbox'")
    bbox = BoundingBox(*doc["bbox"])
    length = doc.get("fixed_length")
    return bbox, int(length) if length is not None else None


def _resolve_region(args):
    """(bbox, length) from --dataset (preset name or descriptor file) or
    explicit --bbox/--length."""
    bbox = length = None
    if getattr(args, "dataset", None):
        name = args.dataset
        if name in PRESETS:
            preset = PRESETS[name]
            bbox, length = preset.bbox, preset.fixed_length
        elif Path(name).is_file():
            bbox, length = _load_preset_file(name)
        else:
            raise ValueError(
                f"unknown dataset preset {name!r}; available: {sorted(PRESETS)} "
                "or a JSON descriptor file"
            )
    if getattr(args, "bbox", None):
        bbox = _parse_bbox(args.bbox)
    if getattr(args, "length", None):
        length = args.length
    return bbox, length


def _add_common(p: argparse.ArgumentParser, dataset_flag: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0, help="deterministic seed")
    p.add_argument("--secure", action="store_true",
                   help="use OS entropy (overrides --seed; required for real releases)")
    p.add_argument("--config", help="JSON case-config file")
    if dataset_flag:
        p.add_argument("--dataset", help="preset name (porto, geolife) or a JSON descriptor file")
        p.add_argument("--bbox", help="lat_min,lon_min,lat_max,lon_max")
        p.add_argument("--length", type=int, help="fixed trajectory length")


def _cmd_ingest(args) -> None:
    d = load_dataset(args.input, format=args.format)
    save_dataset(d, args.output)
    print(json.dumps({"trajectories": len(d), "output": args.output}))


def _cmd_preprocess(args) -> None:
    bbox, length = _resolve_region(args)
    if bbox is None and length is None:
        raise ValueError("preprocess needs --dataset, --bbox, or --length")
    d = load_dataset(args.input)
    out = TrajectoryPreprocessor(bbox=bbox, target_length=length).fit(d).transform(d)
    save_dataset(out, args.output)
    print(json.dumps({
        "kept": len(out), "dropped": len(d) - len(out),
        "fixed_length": out.fixed_length, "output": args.output,
    }))


def _cmd_split(args) -> None:
    d = load_dataset(args.input)
    splits = kfold_split(d, args.k, _rng_seed(args) or 0)
    doc = [
        {
            "fold_index": s.fold_index,
            "train_ids": sorted(s.train_ids),
            "test_ids": sorted(s.test_ids),
        }
        for s in splits
    ]
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    print(json.dumps({"folds": len(doc), "output": args.output}))


def _load_case(args) -> CaseConfig | None:
    return CaseConfig.load(args.config) if args.config else None


def _cmd_synthesize(args) -> None:
    d = load_dataset(args.input)
    bbox, length = _resolve_region(args)
    if bbox is None:
        raise ValueError("synthesize needs a bounding box (--dataset or --bbox)")
    d = d.replace(bbox=bbox)
    case = _load_case(args)
    if case is not None:
        s = case.synth
        synth_kwargs = dict(eps_total=s.eps_total, budget_split=s.budget_split,
                            g1=s.g1, g2=s.g2, threshold=s.threshold,
                            max_walk_length=s.max_walk_length,
                            max_states=s.max_states)
    else:
        synth_kwargs = dict(eps_total=args.eps, g1=args.g1, g2=args.g2,
                            threshold=args.threshold)
    model = MarkovSynthesizer(random_state=_rng_seed(args), **synth_kwargs).fit(d)
    syn = model.sample(args.count, target_length=length or d.fixed_length)
    save_dataset(syn, args.output)
    with open(f"{args.output}.budget.json", "w", encoding="utf-8") as fh:
        json.dump(model.budget_.to_dict(), fh, indent=2)
    print(json.dumps({
        "synthesized": len(syn), "epsilon": model.budget_.epsilon,
        "output": args.output,
    }))


def _cmd_privatize_cond(args) -> None:
    d = load_dataset(args.input)
    case = _load_case(args)
    maps_in = AffineMap.load(args.maps_in) if args.maps_in else None
    if case is not None and case.cond is not None:
        c = case.cond
        emb = ConditionalEmbedder(
            mechanism=c.mechanism, epsilon=c.epsilon,
            delta="auto" if c.delta is None else c.delta,
            clip_bound=c.clip_bound, d_out=c.d_out, m=c.m,
            worst_case_m_equals_n=c.worst_case_m_equals_n,
            embed_dim=case.cond_embed_dim, compression_map=maps_in,
            random_state=_rng_seed(args),
        )
    else:
        emb = ConditionalEmbedder(
            mechanism=args.mechanism, epsilon=args.eps, d_out=args.d_out,
            m=args.m, compression_map=maps_in, random_state=_rng_seed(args),
        )
    emb.fit(d)
    result = emb.privatize_dataset(d)
    result.embedding.export_csv(args.output)
    if args.decompressed:
        result.decompressed.export_csv(args.decompressed)
    if args.maps_out:
        emb.compression_map_.save(args.maps_out)
    print(json.dumps({
        "rows": result.embedding.matrix.shape[0],
        "budget": result.embedding.budget.to_dict(),
        "output": args.output,
    }))


def _cmd_evaluate(args) -> None:
    real = load_dataset(args.real)
    syn = load_dataset(args.syn)
    bbox, _ = _resolve_region(args)
    seed = _rng_seed(args) or 0
    n = min(len(real), len(syn), args.n_eval or min(len(real), len(syn)))
    # Twin streams: identical inputs reduce to identical samples, so
    # self-evaluation stays exactly zero.
    real = subsample_dataset(real, n, np.random.default_rng([seed, 23]))
    syn = subsample_dataset(syn, n, np.random.default_rng([seed, 23]))
    cfg = EvalConfig(bbox=bbox, seed=seed,
                     point_sample=args.point_sample,
                     swd_projections=args.projections)
    pairing = args.pairing if args.pairing != "hungarian" else None
    report = evaluate_pair(real, syn, cfg, pairing=pairing)
    report.to_json(args.output, case_id=args.case_id)
    if args.append_result:
        row = RunResult(case_id=args.case_id or "case", fold=args.fold,
                        seed=cfg.seed, report=report, budgets={}, wall_clock=0.0)
        with open(args.append_result, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(row.to_dict()) + "\n")
    print(json.dumps({"metrics": report.to_dict(), "output": args.output}))


def _cmd_report(args) -> None:
    results = []
    for path in args.results:
        results.extend(load_results(path))
    write_report(results, args.output)
    print(json.dumps({"cases": len({r.case_id for r in results}),
                      "runs": len(results), "output": args.output}))


def _cmd_density(args) -> None:
    d = load_dataset(args.input)
    bbox, _ = _resolve_region(args)
    counts = emit_density_grid(d, args.g, args.output,
                               bbox=bbox if bbox is not None else d.bbox)
    print(json.dumps({"total_points": int(counts.sum()), "output": args.output}))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajpriv",
        description="DP trajectory synthesis and utility evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a trajectory file, write canonical JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--format", choices=["jsonl", "csv"], default=None)
    _add_common(p, dataset_flag=False)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("preprocess", help="bounding-box filter and fixed-length resample")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("split", help="deterministic k-fold id split")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--k", type=int, default=5)
    _add_common(p, dataset_flag=False)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("synthesize", help="fit the DP Markov synthesizer and sample")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--eps", type=float, default=10.0)
    p.add_argument("--count", type=int, default=3000)
    p.add_argument("--g1", type=int, default=8, help="level-1 grid resolution")
    p.add_argument("--g2", type=int, default=4, help="subdivision resolution")
    p.add_argument("--threshold", type=float, default=2.0,
                   help="density multiple that triggers subdivision")
    _add_common(p)
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("privatize-cond", help="DP conditional embedding export")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="embedding CSV (budget sidecar JSON)")
    p.add_argument("--decompressed", help="optional decompressed-matrix CSV")
    p.add_argument("--maps-out", help="save the compression map as JSON")
    p.add_argument("--maps-in", help="load a previously saved compression map")
    p.add_argument("--mechanism", choices=["laplace", "gaussian", "vmf"],
                   default="laplace")
    p.add_argument("--eps", type=float, default=10.0)
    p.add_argument("--d-out", type=int, default=8)
    p.add_argument("--m", type=int, default=3000)
    _add_common(p, dataset_flag=False)
    p.set_defaults(func=_cmd_privatize_cond)

    p = sub.add_parser("evaluate", help="compute the eleven-metric report")
    p.add_argument("--real", required=True)
    p.add_argument("--syn", required=True)
    p.add_argument("--output", required=True, help="pretty JSON report")
    p.add_argument("--pairing", choices=["hungarian", "identity"], default="hungarian")
    p.add_argument("--case-id", default=None)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--append-result", help="append a run-result row to this JSONL")
    p.add_argument("--n-eval", type=int, default=None,
                   help="evaluate this many trajectories per side (default: all)")
    p.add_argument("--point-sample", type=int, default=100_000)
    p.add_argument("--projections", type=int, default=100)
    _add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="aggregate run results into a mean/CI table")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--output", required=True)
    _add_common(p, dataset_flag=False)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("density", help="export a g x g point-count grid as CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--g", type=int, default=64)
    _add_common(p)
    p.set_defaults(func=_cmd_density)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # report as machine-readable JSON on stderr
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
