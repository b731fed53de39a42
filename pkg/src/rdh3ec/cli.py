"""Command-line entry point: embed, transmit, conceal and sweep."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .analytics import REPORT_COLUMNS
from .channel import LossMask, draw_mask, read_masks, write_masks
from .codec import ContainerHeader, mb_grid, read_container, write_container
from .concealment import PLACEMENTS, decode_frame, encode_sequence, run_pipeline
from .frame_io import LAYOUTS, SYNTH_KINDS, load_raw_sequence, save_sequence, synth_sequence
from .mv import CapacityExhaustedError, build_slotmap
from .rdh3 import UnreachablePatternError

EXIT_OK, EXIT_VALIDATION, EXIT_CAPACITY, EXIT_INTEGRITY = 0, 2, 3, 4


class ValidationError(ValueError):
    pass


class IntegrityError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    input: str | None = None
    synth: str | None = "translating-texture:0"
    width: int = 176
    height: int = 144
    frames: int = 30
    layout: str = "Y8"
    qp: list[int] = field(default_factory=lambda: [24])
    alpha: list[int] = field(default_factory=lambda: [1])
    key: int = 0
    plr: list[float] = field(default_factory=lambda: [0.1])
    seeds: list[int] = field(default_factory=lambda: [0])
    placement: str = "random"
    gop: int = 10
    out: str = "out"
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        if (self.input is None) == (self.synth is None):
            raise ValidationError("give exactly one of input or synth")
        if self.synth is not None:
            kind = self.synth.split(":")[0]
            if kind not in SYNTH_KINDS:
                raise ValidationError(f"unknown synth kind {kind!r}; expected one of {SYNTH_KINDS}")
        if self.input is not None and not Path(self.input).is_file():
            raise ValidationError(f"input file {self.input} not found")
        if self.width <= 0 or self.height <= 0 or self.width % 16 or self.height % 16:
            raise ValidationError("width and height must be positive multiples of 16")
        if self.frames < 1:
            raise ValidationError("frames must be >= 1")
        if self.layout not in LAYOUTS:
            raise ValidationError(f"layout must be one of {LAYOUTS}")
        if not self.qp or any(not 0 <= q <= 51 for q in self.qp):
            raise ValidationError("qp values must lie in [0, 51]")
        n = mb_grid(self.width, self.height)[0] * mb_grid(self.width, self.height)[1]
        if not self.alpha or any(not 1 <= a <= min(n, 255) for a in self.alpha):
            raise ValidationError(f"alpha values must lie in [1, {min(n, 255)}]")
        if not 0 <= self.key < 2 ** 64:
            raise ValidationError("key must fit in 64 bits")
        if not self.plr or any(not 0.0 <= p < 1.0 for p in self.plr):
            raise ValidationError("plr values must lie in [0, 1)")
        if not self.seeds or any(s < 0 for s in self.seeds):
            raise ValidationError("seeds must be non-negative")
        if self.placement not in PLACEMENTS:
            raise ValidationError(f"placement must be one of {PLACEMENTS}")
        if self.gop < 1:
            raise ValidationError("gop must be >= 1")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("qp", "alpha", "plr", "seeds"):
            if key in data and not isinstance(data[key], list):
                data[key] = [data[key]]
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def single(self, name: str):
        values = getattr(self, name)
        if len(values) != 1:
            raise ValidationError(f"this command takes a single {name} value, got {values}")
        return values[0]


def load_sequence(cfg: ExperimentConfig):
    if cfg.input is not None:
        try:
            return load_raw_sequence(cfg.input, cfg.width, cfg.height, cfg.frames, cfg.layout, cfg.gop)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
    kind, _, seed = cfg.synth.partition(":")
    try:
        seed = int(seed or 0)
    except ValueError as exc:
        raise ValidationError(f"bad synth seed in {cfg.synth!r}") from exc
    return synth_sequence(kind, seed, cfg.width, cfg.height, cfg.frames, gop_length=cfg.gop)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


# -- embed -------------------------------------------------------------------

def cmd_embed(cfg: ExperimentConfig) -> dict:
    qp, alpha = cfg.single("qp"), cfg.single("alpha")
    seq = load_sequence(cfg)
    encoded = encode_sequence(seq, qp, alpha, cfg.key, cfg.placement)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ContainerHeader(seq.width, seq.height, qp, alpha, len(encoded), cfg.key)
    write_container(out / "marked.rdh3", header, [e.marked for e in encoded])
    report = {
        "width": seq.width, "height": seq.height, "qp": qp, "alpha": alpha, "key": cfg.key,
        "placement": cfg.placement, "gop": cfg.gop,
        "frames": [
            {
                "index": e.index,
                "gop_start": e.gop_start,
                "capacity": list(e.capacities),
                "payload_bits": e.payload_bits,
                "spill_events": [list(s) for s in e.payload.spill_events],
                "segments": [[list(seg) for seg in segs] for segs in e.payload.segments],
            }
            for e in encoded
        ],
    }
    _atomic_write(out / "framing.json", json.dumps(report, indent=1, sort_keys=True).encode())
    return report


# -- transmit ----------------------------------------------------------------

def cmd_transmit(container: Path, plr: float, seed: int, out: Path) -> list[LossMask]:
    try:
        header, frames = read_container(container)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    n = frames[0].shape[0] if frames else 0
    masks = [draw_mask(n, plr, seed, t) for t in range(header.frame_count)]
    received = []
    for coeffs, mask in zip(frames, masks):
        r = coeffs.copy()
        r[mask.flags] = 0
        received.append(r)
    out.mkdir(parents=True, exist_ok=True)
    write_container(out / "received.rdh3", header, received)
    write_masks(out / "mask.bin", masks)
    return masks


# -- conceal -----------------------------------------------------------------

def cmd_conceal(container: Path, mask_path: Path, framing_path: Path, key: int | None, out: Path):
    try:
        header, frames = read_container(container)
        framing = json.loads(Path(framing_path).read_text())
    except (OSError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc
    w, h = header.width, header.height
    n = frames[0].shape[0] if frames else 0
    if len(framing["frames"]) != header.frame_count:
        raise ValidationError("framing sidecar and container disagree on frame count")
    try:
        masks = read_masks(mask_path, n, header.frame_count)
    except (OSError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc
    key = header.key if key is None else key
    gop = framing["gop"]
    outcomes = []
    prev = None
    for t, (coeffs, mask) in enumerate(zip(frames, masks)):
        slotmap = build_slotmap(n, header.alpha, key, t, framing["placement"])
        segments = tuple(tuple(tuple(s) for s in segs) for segs in framing["frames"][t]["segments"])
        received = [None if lost else coeffs[k] for k, lost in enumerate(mask.flags)]
        ref = None if t % gop == 0 else prev
        try:
            outcome = decode_frame(received, mask, slotmap, header.qp, ref, w, h, segments)
        except (UnreachablePatternError, ValueError) as exc:
            raise IntegrityError(f"frame {t}: {exc}") from exc
        outcomes.append(outcome)
        prev = outcome.frame
    out.mkdir(parents=True, exist_ok=True)
    save_sequence([o.frame for o in outcomes], out / "concealed.y8")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["frame", "mb_index", "status"])
    for t, o in enumerate(outcomes):
        for k, s in enumerate(o.status):
            writer.writerow([t, k, s])
    _atomic_write(out / "status.csv", buf.getvalue().encode())
    return outcomes


# -- sweep -------------------------------------------------------------------

def cell_config(cfg: ExperimentConfig, qp: int, alpha: int, plr: float, seed: int) -> dict:
    return {"input": cfg.input, "synth": cfg.synth, "width": cfg.width, "height": cfg.height,
            "frames": cfg.frames, "layout": cfg.layout, "qp": qp, "alpha": alpha, "key": cfg.key,
            "plr": plr, "seed": seed, "placement": cfg.placement, "gop": cfg.gop}


def cell_id(cell: dict) -> str:
    return hashlib.sha256(json.dumps(cell, sort_keys=True).encode()).hexdigest()[:16]


def _rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _run_group(cfg: ExperimentConfig, qp: int, alpha: int, cells: list[tuple[float, int]],
               cell_dir: str) -> list[str]:
    """Encode once for (qp, alpha) and run every pending (plr, seed) cell against it."""
    seq = load_sequence(cfg)
    encoded = encode_sequence(seq, qp, alpha, cfg.key, cfg.placement)
    done = []
    for plr, seed in cells:
        cid = cell_id(cell_config(cfg, qp, alpha, plr, seed))
        result = run_pipeline(seq, qp, alpha, cfg.key, plr, seed, cfg.placement, encoded, experiment=cid)
        rows = [r.row() for r in result.reports]
        _atomic_write(Path(cell_dir) / f"{cid}.csv", _rows_csv(rows).encode())
        done.append(cid)
    return done


def cmd_sweep(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    cell_dir = out / "cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    load_sequence(cfg)  # fail fast on bad input before spawning workers
    order = []
    pending: dict[tuple[int, int], list[tuple[float, int]]] = {}
    for qp in cfg.qp:
        for alpha in cfg.alpha:
            for plr in cfg.plr:
                for seed in cfg.seeds:
                    cid = cell_id(cell_config(cfg, qp, alpha, plr, seed))
                    order.append(cid)
                    if not (cell_dir / f"{cid}.csv").exists():
                        pending.setdefault((qp, alpha), []).append((plr, seed))
    groups = list(pending.items())
    if cfg.workers > 1 and len(groups) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(groups))) as pool:
            futures = [pool.submit(_run_group, cfg, qp, a, cells, str(cell_dir)) for (qp, a), cells in groups]
            for fut in futures:
                fut.result()
    else:
        for (qp, a), cells in groups:
            _run_group(cfg, qp, a, cells, str(cell_dir))

    rows = []
    for cid in order:
        with open(cell_dir / f"{cid}.csv", newline="") as fh:
            rows.extend(csv.DictReader(fh))
    _atomic_write(out / "metrics.csv", _rows_csv(rows).encode())
    typed = [{k: _json_safe(_parse_cell(v)) for k, v in row.items()} for row in rows]
    _atomic_write(out / "metrics.json", json.dumps(typed, indent=1).encode())
    return out


def _parse_cell(v: str):
    if v in ("True", "False"):
        return v == "True"
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


# -- argument handling ---------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, multi: bool) -> None:
    S = argparse.SUPPRESS
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", default=S, help="raw Y8 or YUV420 file")
    src.add_argument("--synth", default=S, help=f"synthetic source KIND[:SEED], KIND in {SYNTH_KINDS}")
    p.add_argument("--width", type=int, default=S)
    p.add_argument("--height", type=int, default=S)
    p.add_argument("--frames", type=int, default=S)
    p.add_argument("--layout", choices=LAYOUTS, default=S)
    nargs = "+" if multi else None
    p.add_argument("--qp", type=int, nargs=nargs, default=S)
    p.add_argument("--alpha", type=int, nargs=nargs, default=S)
    p.add_argument("--key", type=int, default=S)
    p.add_argument("--placement", choices=PLACEMENTS, default=S)
    p.add_argument("--gop", type=int, default=S)
    p.add_argument("--out", default=S)
    p.add_argument("--config", help="JSON config file; explicit flags win over it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdh3ec", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="encode a sequence and hide its motion vectors")
    _add_common(p, multi=False)

    p = sub.add_parser("transmit", help="drop macroblocks from a marked container")
    p.add_argument("container")
    p.add_argument("--plr", type=float, required=True)
    p.add_argument("--seeds", type=int, default=0, help="channel seed")
    p.add_argument("--out", default="out")

    p = sub.add_parser("conceal", help="extract, restore and conceal a received container")
    p.add_argument("container")
    p.add_argument("--mask", required=True)
    p.add_argument("--framing", required=True, help="framing.json written by embed")
    p.add_argument("--key", type=int, default=None, help="defaults to the key id in the container")
    p.add_argument("--out", default="out")

    p = sub.add_parser("sweep", help="run the qp x alpha x plr x seed grid")
    _add_common(p, multi=True)
    p.add_argument("--plr", type=float, nargs="+", default=argparse.SUPPRESS)
    p.add_argument("--seeds", type=int, nargs="+", default=argparse.SUPPRESS)
    p.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then the config file, then explicit flags."""
    merged: dict = {}
    if getattr(args, "config", None):
        try:
            merged.update(json.loads(Path(args.config).read_text()))
        except (OSError, ValueError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if "input" in flags:
        merged["synth"] = None
    if "synth" in flags:
        merged["input"] = None
    merged.update(flags)
    if merged.get("input") is not None and "synth" not in merged:
        merged["synth"] = None
    return ExperimentConfig.from_dict(merged).validate()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "embed":
            report = cmd_embed(resolve_config(args))
            spills = sum(len(f["spill_events"]) for f in report["frames"])
            print(f"embedded {len(report['frames'])} frames, {spills} spill events")
        elif args.command == "transmit":
            if not 0.0 <= args.plr < 1.0:
                raise ValidationError("plr must lie in [0, 1)")
            masks = cmd_transmit(Path(args.container), args.plr, args.seeds, Path(args.out))
            print(f"lost {sum(m.n_lost for m in masks)} macroblocks over {len(masks)} frames")
        elif args.command == "conceal":
            outcomes = cmd_conceal(Path(args.container), Path(args.mask), Path(args.framing),
                                   args.key, Path(args.out))
            black = sum(o.count("black") for o in outcomes)
            print(f"decoded {len(outcomes)} frames, {black} black macroblocks")
        elif args.command == "sweep":
            out = cmd_sweep(resolve_config(args))
            print(f"metrics written to {out}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CapacityExhaustedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except IntegrityError as exc:
        print(f"error: extraction failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
