"""Command-line entry point: ``curate``, ``transfer``, ``edit`` and ``batch``.

Images passed to ``transfer`` and ``edit`` follow the data-directory
convention: ``X.png`` comes with ``X_face.png`` and ``X_hair.png``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import build_extractor, build_generator, load_config
from .curation import MIN_HAIR_FRACTION, build_manifest, read_manifest, write_manifest
from .errors import HairTransferError
from .pipeline import Portrait, TransferJob, execute, run_batch

log = logging.getLogger("hairtransfer")


def _portrait(path) -> Portrait:
    path = Path(path)
    stem = path.with_suffix("")
    return Portrait.load(path, f"{stem}_face.png", f"{stem}_hair.png")


def _backends(config):
    generator = build_generator(config.generator)
    log.info("generator geometry: %s", generator.geometry)
    return generator, build_extractor(config.extractor)


def _run_job(job):
    generator, extractor = _backends(job.config)
    result = execute(job, generator, extractor)
    print(json.dumps(result.metrics, indent=2, sort_keys=True))


def cmd_curate(args) -> int:
    records = build_manifest(args.data_dir, args.min_hair, args.include_rejected)
    write_manifest(records, args.out)
    print(f"wrote {len(records)} tuples to {args.out}")
    return 0


def cmd_transfer(args) -> int:
    identity = _portrait(args.identity)
    job = TransferJob(
        tuple_id=f"{Path(args.identity).stem}__{Path(args.shape).stem}__{Path(args.appearance).stem}",
        identity=identity,
        shape_ref=_portrait(args.shape),
        appearance_ref=_portrait(args.appearance),
        config=load_config(args.config),
        out_dir=Path(args.out_dir),
    )
    _run_job(job)
    return 0


def cmd_edit(args) -> int:
    identity = _portrait(args.identity)
    reference = _portrait(args.reference)
    ref = Path(args.reference).stem
    job = TransferJob(
        tuple_id=f"{Path(args.identity).stem}__{args.mode}__{ref}",
        identity=identity,
        shape_ref=reference,
        appearance_ref=reference,
        config=load_config(args.config),
        out_dir=Path(args.out_dir),
        mode=args.mode,
    )
    _run_job(job)
    return 0


def cmd_batch(args) -> int:
    manifest = Path(args.manifest)
    config = load_config(args.config)
    data_dir = Path(args.data_dir) if args.data_dir else manifest.parent
    out_dir = Path(args.out_dir) if args.out_dir else manifest.with_name(manifest.stem + "-runs")
    generator, extractor = _backends(config)
    report = run_batch(
        read_manifest(manifest), config, data_dir, out_dir, args.jobs, generator, extractor
    )
    print(json.dumps({"categories": report["categories"], "failed": report["failed"]}, indent=2))
    print(f"report written to {out_dir / 'report.json'}")
    return 1 if report["failed"] else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hairtransfer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="build a JSONL tuple manifest from a data directory")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-hair", type=float, default=MIN_HAIR_FRACTION)
    p.add_argument("--include-rejected", action="store_true",
                   help="keep tuples outside every alignment category")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("transfer", help="transfer hair shape and appearance onto an identity")
    p.add_argument("--identity", required=True)
    p.add_argument("--shape", required=True)
    p.add_argument("--appearance", required=True)
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("edit", help="edit a single hair attribute")
    p.add_argument("--mode", choices=("appearance", "shape"), required=True)
    p.add_argument("--identity", required=True)
    p.add_argument("--reference", required=True, help="source of the edited attribute")
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("batch", help="run every tuple of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--data-dir", help="directory the manifest paths are relative to "
                   "(default: the manifest's directory)")
    p.add_argument("--out-dir", help="default: <manifest stem>-runs next to the manifest")
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HairTransferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
