"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 usage, config or input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import PIL
import scipy

from . import __version__, core, rankpool, verify
from .errors import SemImgError
from .lssgc import LssgcConfig, load_config, segment_sequence
from .rankpool import KINDS, WindowSpec

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2

_FLAG_KEYS = ("n0", "z", "a", "p0", "epsilon", "v", "gamma", "tau", "stride",
              "alpha_blend", "sil_threshold")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_jobs():
    env = os.environ.get("SEMIMG_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _add_config_flags(p):
    p.add_argument("--config", type=Path, help="flat 'key = value' config file")
    for key in _FLAG_KEYS:
        kind = LssgcConfig.__dataclass_fields__[key].type
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=int if kind == "int" else float,
                       default=None, help=f"override config key {key}")
    p.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: $SEMIMG_JOBS or logical cores)")


def _config_from(args) -> LssgcConfig:
    return load_config(args.config, **{k: getattr(args, k) for k in _FLAG_KEYS})


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path, command: str, inputs, config: LssgcConfig, extra=None) -> Path:
    """Run record; contains nothing time- or host-dependent beyond versions."""
    manifest = {
        "command": command,
        "inputs": [{"file": p.name, "sha256": _sha256(p)} for p in inputs],
        "config": asdict(config),
        "config_sha256": config.digest(),
        "versions": {
            "semimg": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pillow": PIL.__version__,
            "python": platform.python_version(),
        },
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def cmd_segment(args) -> int:
    config = _config_from(args)
    files = core.list_frame_files(args.input, args.pattern)
    frames = core.load_frames(args.input, args.pattern)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    seg = segment_sequence(frames, config, jobs=args.jobs or _default_jobs())
    for src, frame in zip(files, seg):
        core.save_frame(out / f"{src.stem}_seg.png", frame)
    write_manifest(out, "segment", files, config)
    print(f"segmented {len(seg)} frames -> {out}")
    return EXIT_OK


def _pooled_outputs(kind, frames, flows, config, jobs):
    spec = WindowSpec(config.tau, config.stride)
    if kind == "semi":
        return rankpool.multiple_semi(frames, config, jobs=jobs)
    if kind == "semof":
        wins = rankpool.windows(len(flows), spec)
        coeffs = rankpool.coefficients(config.tau)
        return [rankpool.semof([flows[i] for i in w], coeffs) for w in wins]
    stack = np.asarray(frames)
    wins = rankpool.windows(len(stack), spec)
    if kind == "dynamic":
        coeffs = rankpool.coefficients(config.tau)
        return [rankpool.PooledImage(rankpool.pool(stack[w.start:w.stop], coeffs), "dynamic") for w in wins]
    if kind == "mhi":
        return [rankpool.mhi(stack[w.start:w.stop], config.tau, config.sil_threshold) for w in wins]
    if kind == "mean":
        return [rankpool.mean_pool(stack[w.start:w.stop]) for w in wins]
    return [rankpool.max_pool(stack[w.start:w.stop]) for w in wins]


def cmd_represent(args) -> int:
    config = _config_from(args)
    kind = args.kind
    inputs = []
    frames = flows = None
    if kind == "semof":
        if args.flows is None:
            raise SemImgError("--kind semof requires --flows DIR")
        flows = core.load_flows(args.flows)
        inputs = sorted(p for p in Path(args.flows).iterdir() if p.suffix.lower() == ".png")
    else:
        inputs = core.list_frame_files(args.input, args.pattern)
        frames = core.load_frames(args.input, args.pattern)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    pooled = _pooled_outputs(kind, frames, flows, config, args.jobs or _default_jobs())
    for i, img in enumerate(pooled, start=1):
        stem = f"win_{i:04d}_{kind}"
        core.save_png(out / f"{stem}.png", core.normalize_to_u8(img.data))
        core.write_dump(out / f"{stem}.semi", img.data)
    write_manifest(out, "represent", inputs, config, {"kind": kind, "windows": len(pooled)})
    print(f"wrote {len(pooled)} {kind} image(s) -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    ok_all = True
    for suite, label, ok, detail in verify.run(args.suite):
        ok = bool(ok)
        ok_all &= ok
        print(f"[{'PASS' if ok else 'FAIL'}] {suite}: {label} ({detail})")
    return EXIT_OK if ok_all else EXIT_VERIFY


def cmd_windows(args) -> int:
    config = _config_from(args)
    if args.frames is not None:
        total = args.frames
    elif args.input is not None:
        total = len(core.list_frame_files(args.input, args.pattern))
    else:
        raise SemImgError("give a frame directory or --frames N")
    spec = WindowSpec(config.tau, config.stride)
    wins = rankpool.windows(total, spec)
    for i, w in enumerate(wins, start=1):
        print(f"win_{i:04d}: frames {w.start + 1}..{w.stop}")
    print(f"{len(wins)} windows, tau={spec.tau}, stride={spec.stride}, "
          f"overlap={spec.overlap} frames ({100 * spec.overlap / spec.tau:.0f}%)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="semimg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"semimg {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("segment", help="segment every frame of a directory")
    s.add_argument("input", type=Path)
    s.add_argument("-o", "--output", type=Path, required=True)
    s.add_argument("--pattern", help="glob selecting frame files")
    _add_config_flags(s)
    s.set_defaults(func=cmd_segment)

    r = sub.add_parser("represent", help="windowed SemI / dynamic / MHI / mean / max / SemOF images")
    r.add_argument("input", type=Path, nargs="?")
    r.add_argument("-k", "--kind", choices=KINDS, required=True)
    r.add_argument("-o", "--output", type=Path, required=True)
    r.add_argument("--flows", type=Path, help="directory of u_%%05d.png / v_%%05d.png pairs")
    r.add_argument("--pattern", help="glob selecting frame files")
    _add_config_flags(r)
    r.set_defaults(func=cmd_represent)

    v = sub.add_parser("verify", help="run the built-in oracle checks")
    v.add_argument("suite", nargs="?", default="all", choices=verify.SUITES + ("all",))
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("windows", help="list the windows a video would be cut into")
    w.add_argument("input", type=Path, nargs="?")
    w.add_argument("--frames", type=int, help="frame count instead of a directory")
    w.add_argument("--pattern", help="glob selecting frame files")
    _add_config_flags(w)
    w.set_defaults(func=cmd_windows)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "represent" and args.kind != "semof" and args.input is None:
        parser.error("represent needs an input frame directory")
    try:
        return args.func(args)
    except SemImgError as exc:
        print(f"semimg {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
