"""Command-line front end for the whole pipeline.

Exit codes: 0 success, 1 usage error, 2 data error, 3 network error.
Every stochastic subcommand requires an explicit --seed; given the same
config and seed, all emitted JSON/CSV/PNG artifacts are byte-identical
across runs (wall-clock fields excepted).
"""

from __future__ import annotations

import argparse
import difflib
import glob
import json
import os
import re
import sys
import time

import numpy as np
import requests

from . import ingest, metrics, shapestats
from .compat import compatibility_table
from .masks import (
    BinaryMask,
    EmptyMaskError,
    MaskSamplingError,
    binarize,
    count_components,
    has_holes,
    load_mask_png,
    postprocess,
    sample_procedural_mask,
    save_mask_png,
)
from .puzzlegen import (
    FRAME,
    GridSpec,
    ManifestVersionError,
    PuzzleConfigError,
    PuzzleInstance,
    derive_puzzle_seed,
    gradient_image,
    make_puzzle,
    procedural_mask_provider,
    read_manifest,
    shuffle,
    split_dataset,
    square_mask_provider,
    write_manifest,
)
from .raster import DecodeError, RasterImage, decode_image, encode_png
from .solvers.flow import (
    FlowConfig,
    FlowTrainingExample,
    LinearScorer,
    LinearScorerParams,
    NeighborCompatScorer,
    OracleScorer,
    flow_solve,
    train_linear_scorer,
)
from .solvers.genetic import GaConfig, ga_solve
from .solvers.greedy import greedy_solve

_STOCHASTIC_SOLVERS = ("ga", "flow")


class CliError(Exception):
    """Usage-level failure raised by handlers; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        m = re.search(r"invalid choice: '([^']+)'.*choose from (.+)\)", message)
        if m:
            choices = re.findall(r"'([^']+)'", m.group(2))
            close = difflib.get_close_matches(m.group(1), choices, n=1)
            if close:
                message += f" (did you mean '{close[0]}'?)"
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _write_text(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise CliError(f"config {path} must hold a JSON object")
    return doc


def build_parser() -> tuple[_Parser, dict]:
    parser = _Parser(prog="jigsawlab", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of flag defaults; flags override")
    sub = parser.add_subparsers(dest="command", metavar="command")
    subparsers: dict[str, argparse.ArgumentParser] = {}

    def cmd(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        subparsers[name] = p
        return p

    p = cmd("fetch", "download open-access images and metadata")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True, help="number of images to keep")
    p.add_argument("--ids", help="comma-separated object ids (default: full listing)")
    p.add_argument("--workers", type=int, default=20)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--base-url", dest="base_url")

    p = cmd("masks", "sample procedural masks or import and validate existing ones")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--side", type=int, default=FRAME)
    p.add_argument("--seed", type=int)
    p.add_argument("--import-dir", dest="import_dir", help="validate PNGs instead of sampling")

    p = cmd("generate", "build a shuffled puzzle dataset with splits")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--masks", choices=("procedural", "square"), default="procedural")
    p.add_argument("--inset", type=int, default=0, help="square-mask border gap")
    p.add_argument("--source-dir", dest="source_dir", help="images to cut (default: synthetic gradients)")
    p.add_argument("--ratios", default="0.70,0.15,0.15")

    p = cmd("features", "shape feature table for a directory of mask PNGs")
    p.add_argument("--masks-dir", dest="masks_dir", required=True)
    p.add_argument("--out", required=True, help="CSV path")

    p = cmd("stats-compare", "compare two mask populations (stats, PCA, scatter)")
    p.add_argument("--real-dir", dest="real_dir", required=True)
    p.add_argument("--synth-dir", dest="synth_dir", required=True)
    p.add_argument("--out", required=True, help="output prefix (.json and .svg)")

    p = cmd("solve", "run a solver over one dataset split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--solver", choices=("greedy", "ga", "flow"), required=True)
    p.add_argument("--scorer", choices=("oracle", "neighbor", "linear"), default="neighbor")
    p.add_argument("--weights", help="trained scorer weights JSON (scorer=linear)")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--out", required=True)

    p = cmd("train-scorer", "fit the linear flow scorer on a dataset split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="weights JSON path")

    p = cmd("eval", "score solver outputs against ground truth")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--predictions", required=True, help="directory of solver JSON files")
    p.add_argument("--out", required=True, help="output prefix (.json/.csv/.svg)")

    p = cmd("render", "composite one puzzle, scrambled and solved side by side")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--puzzle-id", dest="puzzle_id", required=True)
    p.add_argument("--solution", help="solver JSON; defaults to ground truth")
    p.add_argument("--out", required=True, help="PNG path")

    return parser, subparsers


# ---------------------------------------------------------------------------
# handlers

def _cmd_fetch(args) -> int:
    if args.ids:
        ids = [int(tok) for tok in args.ids.split(",") if tok.strip()]
    else:
        ids = ingest.list_object_ids(args.base_url)
    manifest = ingest.collect(
        ids,
        n_target=args.n,
        out_dir=args.out,
        workers=args.workers,
        retries=args.retries,
        base=args.base_url,
    )
    print(f"stored {len(manifest.records)} images under {manifest.image_dir}")
    return 0


def _load_masks_dir(path: str) -> tuple[list[str], list[BinaryMask]]:
    files = sorted(glob.glob(os.path.join(path, "*.png")))
    if not files:
        raise ValueError(f"no PNG masks under {path}")
    names, masks = [], []
    for f in files:
        names.append(os.path.splitext(os.path.basename(f))[0])
        masks.append(load_mask_png(f))
    return names, masks


def _cmd_masks(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.import_dir:
        names, raw = _load_masks_dir(args.import_dir)
        kept = 0
        for name, mask in zip(names, raw):
            gray = RasterImage(
                pixels=mask.bits.astype(np.float64)[..., None], normalized=True
            )
            clean = postprocess(gray)
            if count_components(clean) != 1 or has_holes(clean):
                print(f"rejected {name}: failed mask invariants", file=sys.stderr)
                continue
            save_mask_png(clean, os.path.join(args.out, f"{name}.png"))
            kept += 1
        if kept == 0:
            raise ValueError("no imported mask passed validation")
        print(f"validated {kept}/{len(raw)} masks into {args.out}")
        return 0
    if args.seed is None:
        raise CliError("--seed is required when sampling masks")
    rng = np.random.default_rng(args.seed)
    for i in range(args.n):
        mask = sample_procedural_mask(rng, args.side)
        save_mask_png(mask, os.path.join(args.out, f"mask_{i:05d}.png"))
    print(f"sampled {args.n} masks into {args.out}")
    return 0


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [float(tok) for tok in text.split(",")]
    if len(parts) != 3:
        raise ValueError("ratios must be three comma-separated numbers")
    return tuple(parts)  # type: ignore[return-value]


def _source_images(args, n: int):
    """Yields (source_name, RasterImage) per puzzle, deterministic order."""
    if args.source_dir:
        files = sorted(
            f
            for f in glob.glob(os.path.join(args.source_dir, "*"))
            if os.path.isfile(f) and not f.endswith(".csv")
        )
        if not files:
            raise ValueError(f"no source images under {args.source_dir}")
        out = []
        for i in range(n):
            f = files[i % len(files)]
            with open(f, "rb") as fh:
                out.append((os.path.basename(f), decode_image(fh.read())))
        return out
    spec = GridSpec.default(args.k)
    return [
        (
            "synthetic",
            gradient_image(
                spec.canvas, np.random.default_rng(derive_puzzle_seed(args.seed, f"src_{i:05d}"))
            ),
        )
        for i in range(n)
    ]


def _cmd_generate(args) -> int:
    ratios = _parse_ratios(args.ratios)
    spec = GridSpec.default(args.k)
    provider = (
        square_mask_provider(args.inset)
        if args.masks == "square"
        else procedural_mask_provider()
    )
    puzzle_ids = [f"puzzle_{i:05d}" for i in range(args.n)]
    assignment = split_dataset(
        puzzle_ids, ratios, np.random.default_rng(derive_puzzle_seed(args.seed, "split"))
    )
    split_of = {pid: s for s, pids in assignment.items() for pid in pids}
    sources = _source_images(args, args.n)
    for pid, (src_name, image) in zip(puzzle_ids, sources):
        rng = np.random.default_rng(derive_puzzle_seed(args.seed, pid))
        instance = make_puzzle(
            image,
            spec,
            provider,
            rng,
            puzzle_id=pid,
            source=src_name,
            split=split_of[pid],
        )
        instance = shuffle(instance, rng)
        write_manifest(instance, args.out)
    counts = {s: len(v) for s, v in assignment.items()}
    print(f"generated {args.n} puzzles into {args.out} (splits {counts})")
    return 0


def _cmd_features(args) -> int:
    names, masks = _load_masks_dir(args.masks_dir)
    feats = [shapestats.extract_features(m) for m in masks]
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    shapestats.features_to_csv(feats, args.out, ids=names)
    print(f"wrote {len(feats)} feature rows to {args.out}")
    return 0


def _cmd_stats_compare(args) -> int:
    _, real = _load_masks_dir(args.real_dir)
    _, synth = _load_masks_dir(args.synth_dir)
    report = shapestats.compare_distributions(
        [shapestats.extract_features(m) for m in real],
        [shapestats.extract_features(m) for m in synth],
    )
    _write_text(args.out + ".json", report.to_json() + "\n")
    _write_text(args.out + ".svg", report.to_svg())
    print(f"wrote {args.out}.json and {args.out}.svg")
    return 0


def _dataset_puzzles(dataset: str, split: str) -> list[PuzzleInstance]:
    pattern = os.path.join(dataset, split, "*", "manifest.json")
    files = sorted(glob.glob(pattern))
    if not files:
        raise ValueError(f"no manifests match {pattern}")
    return [read_manifest(f) for f in files]


def _solver_record(instance, solver, seed, perm, wall_ms, diagnostics) -> dict:
    return {
        "puzzle_id": instance.puzzle_id,
        "solver": solver,
        "seed": seed,
        "permutation": [int(v) for v in perm],
        "wall_ms": wall_ms,
        "diagnostics": diagnostics,
    }


def _solve_one(instance: PuzzleInstance, args, params: LinearScorerParams | None):
    grid = instance.grid
    if grid.n_pieces == 1:
        return _solver_record(
            instance, args.solver, args.seed, np.zeros(1, dtype=np.int64), 0.0, {}
        )
    need_table = args.solver in ("greedy", "ga") or args.scorer in ("neighbor", "linear")
    table = (
        compatibility_table(instance.pieces)
        if need_table and grid.n_pieces >= 2
        else None
    )
    seed = args.seed
    t0 = time.perf_counter()
    if args.solver == "greedy":
        result = greedy_solve(table, grid)
        perm, diagnostics = result.permutation, {"bbm": result.bbm}
    elif args.solver == "ga":
        rng = np.random.default_rng(derive_puzzle_seed(seed, instance.puzzle_id))
        result = ga_solve(table, grid, GaConfig(), rng)
        perm, diagnostics = result.permutation, {"generations": result.generations}
    else:
        rng = np.random.default_rng(derive_puzzle_seed(seed, instance.puzzle_id))
        if args.scorer == "oracle":
            scorer = OracleScorer(instance.ground_truth)
        elif args.scorer == "neighbor":
            scorer = NeighborCompatScorer(table, grid.k)
        else:
            scorer = LinearScorer(params, table, grid.k)
        result = flow_solve(scorer, grid, FlowConfig(steps=args.steps), rng)
        perm, diagnostics = result.permutation, {"steps": result.steps}
    wall_ms = (time.perf_counter() - t0) * 1000.0
    return _solver_record(instance, args.solver, seed, perm, wall_ms, diagnostics)


def _cmd_solve(args) -> int:
    if args.solver in _STOCHASTIC_SOLVERS and args.seed is None:
        raise CliError(f"--seed is required for solver '{args.solver}'")
    params = None
    if args.solver == "flow" and args.scorer == "linear":
        if not args.weights:
            raise CliError("--weights is required for the linear scorer")
        with open(args.weights) as fh:
            doc = json.load(fh)
        params = LinearScorerParams(
            weights=np.asarray(doc["weights"], dtype=np.float64),
            feature_version=int(doc.get("feature_version", 1)),
        )
    puzzles = _dataset_puzzles(args.dataset, args.split)
    os.makedirs(args.out, exist_ok=True)
    for instance in puzzles:
        record = _solve_one(instance, args, params)
        path = os.path.join(args.out, f"{instance.puzzle_id}.json")
        with open(path, "w") as fh:
            json.dump(record, fh, indent=2)
            fh.write("\n")
    print(f"solved {len(puzzles)} puzzles into {args.out}")
    return 0


def _cmd_train_scorer(args) -> int:
    puzzles = _dataset_puzzles(args.dataset, args.split)
    examples = [
        FlowTrainingExample(
            table=compatibility_table(p.pieces), k=p.grid.k, target=p.ground_truth
        )
        for p in puzzles
    ]
    result = train_linear_scorer(
        examples, args.epochs, args.lr, np.random.default_rng(args.seed)
    )
    doc = {
        "weights": [float(w) for w in result.params.weights],
        "feature_version": result.params.feature_version,
        "final_loss": result.final_loss,
        "epochs": result.epochs,
    }
    _write_text(args.out, json.dumps(doc, indent=2) + "\n")
    print(f"trained on {len(examples)} puzzles; final loss {result.final_loss:.4f}")
    return 0


def _cmd_eval(args) -> int:
    puzzles = {p.puzzle_id: p for p in _dataset_puzzles(args.dataset, args.split)}
    files = sorted(glob.glob(os.path.join(args.predictions, "*.json")))
    if not files:
        raise ValueError(f"no prediction files under {args.predictions}")
    by_solver: dict[str, list] = {}
    for f in files:
        with open(f) as fh:
            rec = json.load(fh)
        pid = rec["puzzle_id"]
        if pid not in puzzles:
            raise ValueError(f"prediction {f} references unknown puzzle {pid}")
        by_solver.setdefault(rec.get("solver", "solver"), []).append(
            (pid, rec["permutation"])
        )
    reports = {}
    for solver, rows in by_solver.items():
        preds = [perm for _, perm in rows]
        gts = [puzzles[pid].ground_truth for pid, _ in rows]
        reports[solver] = metrics.evaluate(preds, gts, [pid for pid, _ in rows])
    doc = {name: rep.to_json_dict() for name, rep in sorted(reports.items())}
    _write_text(args.out + ".json", json.dumps(doc, indent=2) + "\n")
    _write_text(
        args.out + ".csv",
        "".join(rep.to_csv() for _, rep in sorted(reports.items())),
    )
    _write_text(args.out + ".svg", metrics.report_bar_svg(reports))
    for name, rep in sorted(reports.items()):
        print(
            f"{name}: n={rep.n_puzzles} PA={rep.pa:.2f} AA={rep.aa:.2f} SRA={rep.sra:.2f}"
        )
    return 0


def compose_layout(instance: PuzzleInstance, perm: np.ndarray) -> RasterImage:
    """Paint pieces at their assigned slots on a white canvas."""
    spec = instance.grid
    out = np.full((spec.canvas, spec.canvas, 3), 255, dtype=np.uint8)
    offset = (spec.cell - FRAME) // 2
    for piece, slot in zip(instance.pieces, perm):
        r, c = divmod(int(slot), spec.k)
        top = r * spec.cell + offset
        left = c * spec.cell + offset
        region = out[top : top + FRAME, left : left + FRAME]
        alpha = piece.image.pixels[:, :, 3] >= 128
        region[alpha] = piece.image.pixels[:, :, :3][alpha]
    return RasterImage(pixels=out)


def _cmd_render(args) -> int:
    instance = None
    for split in ([args.split] if args.split else []):
        path = os.path.join(args.dataset, split, args.puzzle_id, "manifest.json")
        if os.path.exists(path):
            instance = read_manifest(path)
    if instance is None:
        raise ValueError(f"puzzle {args.puzzle_id} not found in split {args.split}")
    n = instance.grid.n_pieces
    scrambled = compose_layout(instance, np.arange(n))
    if args.solution:
        with open(args.solution) as fh:
            perm = np.asarray(json.load(fh)["permutation"], dtype=np.int64)
    else:
        perm = instance.ground_truth
    solved = compose_layout(instance, perm)
    gap = 16
    h = scrambled.height
    combined = np.full((h, scrambled.width + gap + solved.width, 3), 255, dtype=np.uint8)
    combined[:, : scrambled.width] = scrambled.pixels
    combined[:, scrambled.width + gap :] = solved.pixels
    _write_bytes(args.out, encode_png(RasterImage(pixels=combined)))
    print(f"rendered {args.out}")
    return 0


def _write_bytes(path: str, data: bytes) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(data)


_HANDLERS = {
    "fetch": _cmd_fetch,
    "masks": _cmd_masks,
    "generate": _cmd_generate,
    "features": _cmd_features,
    "stats-compare": _cmd_stats_compare,
    "solve": _cmd_solve,
    "train-scorer": _cmd_train_scorer,
    "eval": _cmd_eval,
    "render": _cmd_render,
}

_DATA_ERRORS = (
    ValueError,
    KeyError,
    OSError,
    json.JSONDecodeError,
    DecodeError,
    EmptyMaskError,
    MaskSamplingError,
    PuzzleConfigError,
    ManifestVersionError,
    ingest.SchemaError,
    ingest.EmptyCorpusError,
)

_NETWORK_ERRORS = (ingest.TransportError, requests.RequestException)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()

    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            defaults = _load_config(known.config)
            parser.set_defaults(**defaults)
            for sp in subparsers.values():
                known_dests = {a.dest for a in sp._actions}
                sp.set_defaults(**{k: v for k, v in defaults.items() if k in known_dests})
    except CliError as exc:
        print(f"jigsawlab: error: {exc}", file=sys.stderr)
        return 1

    args, extras = parser.parse_known_args(argv)
    if extras:
        options = []
        if args.command in subparsers:
            for action in subparsers[args.command]._actions:
                options.extend(action.option_strings)
        hints = []
        for tok in extras:
            if tok.startswith("-"):
                close = difflib.get_close_matches(tok, options, n=1)
                if close:
                    hints.append(f"(did you mean '{close[0]}'?)")
        extra_str = " ".join(extras)
        hint_str = (" " + " ".join(hints)) if hints else ""
        print(
            f"jigsawlab: error: unrecognized arguments: {extra_str}{hint_str}",
            file=sys.stderr,
        )
        return 1
    if not args.command:
        parser.print_usage(sys.stderr)
        print("jigsawlab: error: a subcommand is required", file=sys.stderr)
        return 1

    try:
        return _HANDLERS[args.command](args)
    except CliError as exc:
        print(f"jigsawlab: error: {exc}", file=sys.stderr)
        return 1
    except _NETWORK_ERRORS as exc:
        print(f"jigsawlab: network error: {exc}", file=sys.stderr)
        return 3
    except _DATA_ERRORS as exc:
        print(f"jigsawlab: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
