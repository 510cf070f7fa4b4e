"""Command-line entry point: ``scatenc <subcommand> [flags]``.

Every subcommand accepts ``--config FILE`` with ``key=value`` lines named
after its flags; explicit flags override the file. The resolved settings
are written next to each run's outputs.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .decoding import DEFAULT_DECODE_LAMBDAS, LabeledActivity, block_cv_decode
from .encoding import DEFAULT_LAMBDAS, CVResult, nested_cv_encode
from .filterbank import FilterParams, build_filter_bank, littlewood_paley
from .encoding import compare_models
from .report import _wilcoxon, write_map_csv, write_scatter_csv
from .scattering import ScatteringConfig, batch_scatter
from .study import StudyConfig, run_study
from .synth import PlantSpec, default_class_specs, gen_session_labels, gen_voxels, texture_set

log = logging.getLogger("scatenc")

COMMANDS = ("filters", "scatter", "encode", "decode", "compare", "synth", "reproduce")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def floats(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")
    return w, h


def _filter_flags(p, M=True):
    if M:
        p.add_argument("--M", type=int, default=2, choices=(1, 2))
    p.add_argument("--J", type=int, default=5)
    p.add_argument("--L", type=int, default=4)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--xi0", type=float)
    p.add_argument("--slant", type=float)


def build_parser() -> _Parser:
    ap = _Parser(prog="scatenc", description="Scattering-feature encoding models for texture fMRI.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="key=value settings file; flags override it")
        p.add_argument("-v", "--verbose", action="store_true", help="progress logging")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: $SCATTER_THREADS or 1)")
        return p

    p = add("filters", "build a Morlet bank and report Littlewood-Paley coverage")
    _filter_flags(p, M=False)
    p.add_argument("--size", type=size, default=(128, 128), help="WxH")
    p.add_argument("--annulus", type=floats, help="r_lo,r_hi in rad/pixel (default xi0/2^J,xi0)")
    p.add_argument("--spectra-dir", help="write |spectrum| of every filter as rasters here")
    p.add_argument("--out", help="LP report JSON (default: stdout)")

    p = add("scatter", "scattering coefficients of a set of images")
    p.add_argument("--images", required=True, help="directory, list file, or comma list")
    _filter_flags(p)
    p.add_argument("--out", required=True, help="features .bin or .csv")

    p = add("encode", "nested leave-one-session-out ridge encoding")
    p.add_argument("--features", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--sessions", required=True)
    p.add_argument("--lambda-grid", type=floats, default=list(DEFAULT_LAMBDAS))
    p.add_argument("--max-layer", type=int, choices=(0, 1, 2), default=2,
                   help="drop feature paths above this layer")
    p.add_argument("--shared-lambda", action="store_true",
                   help="one lambda for all voxels instead of per voxel")
    p.add_argument("--out", required=True)

    p = add("compare", "per-voxel r2 difference map and scatter table")
    p.add_argument("--a", required=True, help="CV result of the first (reference) model")
    p.add_argument("--b", required=True, help="CV result of the second model")
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--top-k", type=int, default=2000)
    p.add_argument("--out", required=True, help="map.csv,scatter.csv")

    p = add("decode", "one-vs-rest logistic decoding of class labels")
    p.add_argument("--responses", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--blocks", required=True, help="sessions.csv")
    p.add_argument("--lambda-grid", type=floats, default=list(DEFAULT_DECODE_LAMBDAS))
    p.add_argument("--cv-unit", choices=("block", "session"), default="block")
    p.add_argument("--out", required=True)

    p = add("synth", "synthetic textures and planted voxel responses")
    p.add_argument("--textures", help="texture study JSON (default: built-in six classes)")
    p.add_argument("--plant", help="plant JSON (default: 50 voxels per kind, snr 1)")
    p.add_argument("--out-dir", required=True)

    p = add("reproduce", "run the full synthetic study")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-images", type=int, default=216)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--J", type=int, default=5)
    p.add_argument("--L", type=int, default=4)
    p.add_argument("--voxels-per-kind", type=int, default=50)
    p.add_argument("--snr", type=float, default=1.0)
    p.add_argument("--lambda-grid", type=floats, default=list(DEFAULT_LAMBDAS))
    p.add_argument("--decode-lambda-grid", type=floats, default=list(DEFAULT_DECODE_LAMBDAS))
    p.add_argument("--decode-cv-unit", choices=("block", "session"), default="session")
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--top-k", type=int, default=2000)
    return ap


def _subparser(ap: _Parser, cmd: str) -> argparse.ArgumentParser:
    for a in ap._subparsers._group_actions:
        if cmd in a.choices:
            return a.choices[cmd]
    raise UsageError(f"unknown subcommand {cmd!r}")


def _flag_actions(sp) -> dict:
    return {a.dest: a for a in sp._actions
            if a.option_strings and a.dest not in ("help", "config", "verbose")}


def read_config(path, sp) -> list[str]:
    """Turn a key=value file into argv tokens, rejecting unknown keys."""
    actions = _flag_actions(sp)
    argv = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e.strerror}")
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        dest = key.replace("-", "_")
        if dest not in actions:
            raise UsageError(f"{path}:{n}: unknown config key {key!r}")
        act = actions[dest]
        flag = act.option_strings[-1]
        if isinstance(act, argparse._StoreTrueAction):
            if val.lower() in ("1", "true", "yes"):
                argv.append(flag)
            elif val.lower() not in ("0", "false", "no"):
                raise UsageError(f"{path}:{n}: {key} expects true/false")
        else:
            argv += [flag, val]
    return argv


def _config_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        if len(v) == 2 and all(isinstance(x, int) for x in v):
            return f"{v[0]}x{v[1]}"
        return ",".join(repr(float(x)) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_resolved(path, args, sp, skip=("threads",)):
    lines = [f"# resolved settings for `scatenc {args.command}`"]
    for dest, act in _flag_actions(sp).items():
        v = getattr(args, dest, None)
        if v is None or dest in skip:
            continue
        lines.append(f"{act.option_strings[-1].lstrip('-')}={_config_value(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("SCATTER_THREADS", "1")
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"SCATTER_THREADS must be an integer, got {env!r}")
    if n < 1:
        raise UsageError(f"threads must be >= 1, got {n}")
    return n


def _scat_config(args) -> ScatteringConfig:
    return ScatteringConfig(M=getattr(args, "M", 2), J=args.J, L=args.L,
                            sigma0=args.sigma0, xi0=args.xi0, slant=args.slant)


def cmd_filters(args, sp):
    w, h = args.size
    kw = {k: getattr(args, k) for k in ("sigma0", "xi0", "slant") if getattr(args, k) is not None}
    params = FilterParams(J=args.J, L=args.L, width=w, height=h, **kw)
    bank = build_filter_bank(params)
    annulus = tuple(args.annulus) if args.annulus else (params.xi0 / 2 ** params.J, params.xi0)
    if len(annulus) != 2:
        raise UsageError("--annulus expects two numbers r_lo,r_hi")
    rep = littlewood_paley(bank, annulus)
    out = rep.to_dict()
    out["n_filters"] = len(bank)
    out["orientations_deg"] = params.orientations()
    if args.spectra_dir:
        d = Path(args.spectra_dir)
        d.mkdir(parents=True, exist_ok=True)
        for f in bank:
            g = params.orientations().index(f.gamma)
            io.write_raster(d / f"psi_j{f.j}g{g}.ras", np.abs(np.fft.fftshift(f.spectrum)))
    if args.out:
        io.write_json(args.out, out)
        write_resolved(args.out + ".config", args, sp)
    else:
        import json
        print(json.dumps(out, indent=2, sort_keys=True))


def cmd_scatter(args, sp):
    files = io.list_images(args.images)
    images = [io.read_raster(f).astype(float) for f in files]
    fm = batch_scatter(images, _scat_config(args), [f.stem for f in files], threads=_threads(args))
    io.save_features(args.out, fm)
    write_resolved(args.out + ".config", args, sp)
    log.info("wrote %d x %d features to %s", *fm.values.shape, args.out)


def cmd_encode(args, sp):
    fm = io.load_features(args.features)
    if args.max_layer < 2:
        fm = fm.select_layers(args.max_layer)
    y = io.load_responses(args.responses)
    sessions = io.read_sessions(args.sessions)
    cv = nested_cv_encode(fm, y, sessions, args.lambda_grid, per_voxel=not args.shared_lambda)
    io.write_json(args.out, cv.to_dict())
    write_resolved(args.out + ".config", args, sp)
    log.info("mean r2 over voxels: %.4f", float(np.nanmean(cv.mean_r2)))


def cmd_compare(args, sp):
    outs = [s for s in args.out.split(",") if s]
    if len(outs) != 2:
        raise UsageError("--out expects map.csv,scatter.csv")
    a = CVResult.from_dict(io.read_json(args.a))
    b = CVResult.from_dict(io.read_json(args.b))
    cmp = compare_models(a.mean_r2, b.mean_r2, a.voxel_ids, b.voxel_ids,
                         threshold=args.threshold, top_k=args.top_k)
    write_map_csv(outs[0], cmp)
    write_scatter_csv(outs[1], cmp)
    write_resolved(outs[0] + ".config", args, sp)
    idx = np.array(cmp.top_k, dtype=int)
    import json
    print(json.dumps({"counts": cmp.counts(),
                      "wilcoxon_top_k": _wilcoxon(cmp.scores1[idx], cmp.scores2[idx])},
                     indent=2, sort_keys=True))


def cmd_decode(args, sp):
    y = io.load_responses(args.responses)
    labels = io.read_labels(args.labels)
    sessions = io.read_sessions(args.blocks).aligned(y.image_ids)
    missing = [i for i in y.image_ids if i not in labels]
    if missing:
        raise UsageError(f"{args.labels}: no label for image ids {missing[:5]}")
    groups = sessions.session if args.cv_unit == "session" else sessions.block
    data = LabeledActivity(y.values, np.array([labels[i] for i in y.image_ids]), groups,
                           y.image_ids)
    res = block_cv_decode(data, args.lambda_grid, threads=_threads(args))
    io.write_json(args.out, res.to_dict())
    write_resolved(args.out + ".config", args, sp)
    log.info("mean accuracy %.3f (chance %.3f)", res.mean_accuracy, res.chance)


TEXTURE_DEFAULTS = {"n_images": 216, "size": 128, "seed": 7, "n_sessions": 6,
                    "blocks_per_session": 36, "J": 5, "L": 4}


def cmd_synth(args, sp):
    tex = dict(TEXTURE_DEFAULTS, classes=default_class_specs())
    if args.textures:
        user = io.read_json(args.textures)
        unknown = set(user) - set(tex)
        if unknown:
            raise UsageError(f"{args.textures}: unknown keys {sorted(unknown)}")
        tex.update(user)
    try:
        plant = PlantSpec(**io.read_json(args.plant)) if args.plant else PlantSpec()
    except TypeError as e:
        raise UsageError(f"{args.plant}: {e}") from None
    out = Path(args.out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    images, ids, labels = texture_set(tex["classes"], tex["n_images"], tex["size"], tex["seed"])
    for im, iid in zip(images, ids):
        io.write_raster(out / "images" / f"{iid}.ras", im)
    fm = batch_scatter(images, ScatteringConfig(M=2, J=tex["J"], L=tex["L"]), ids,
                       threads=_threads(args))
    sessions = gen_session_labels(tex["n_images"], tex["n_sessions"], tex["blocks_per_session"], ids)
    y, gt = gen_voxels(fm, plant, sessions)
    io.save_features(out / "features.bin", fm)
    io.save_responses(out / "responses.bin", y)
    io.write_sessions(out / "sessions.csv", sessions)
    io.write_labels(out / "labels.csv", ids, labels)
    io.write_json(out / "ground_truth.json", gt.to_dict())
    io.write_json(out / "textures.json", tex)
    io.write_json(out / "plant.json", {"kinds": plant.kinds, "snr": plant.snr, "seed": plant.seed})
    write_resolved(out / "run_config.txt", args, sp)


def cmd_reproduce(args, sp):
    cfg = StudyConfig(seed=args.seed, n_images=args.n_images, size=args.size, J=args.J, L=args.L,
                      voxels_per_kind=args.voxels_per_kind, snr=args.snr,
                      lambda_grid=tuple(args.lambda_grid),
                      decode_lambda_grid=tuple(args.decode_lambda_grid),
                      decode_cv_unit=args.decode_cv_unit, threshold=args.threshold,
                      top_k=args.top_k)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(out / "run_config.txt", args, sp)
    summary = run_study(cfg, out, threads=_threads(args))
    comp = summary.get("comparison", {}).get("counts")
    log.info("done: %s", comp)


HANDLERS = {"filters": cmd_filters, "scatter": cmd_scatter, "encode": cmd_encode,
            "compare": cmd_compare, "decode": cmd_decode, "synth": cmd_synth,
            "reproduce": cmd_reproduce}


def run_subcommand(argv: list[str] | None = None) -> int:
    """Run one subcommand. Exit 0 on success, 1 on validation errors, 2 on runtime errors."""
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        if not argv:
            ap.print_usage(sys.stderr)
            return 1
        cmd = next((a for a in argv if a in COMMANDS), None)
        if cmd is not None and "--config" in argv:
            i = argv.index("--config")
            if i + 1 >= len(argv):
                raise UsageError("--config needs a file")
            pre = read_config(argv[i + 1], _subparser(ap, cmd))
            c = argv.index(cmd)
            argv = argv[:c + 1] + pre + argv[c + 1:]
        args = ap.parse_args(argv)
        if args.command is None:
            ap.print_usage(sys.stderr)
            return 1
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        HANDLERS[args.command](args, _subparser(ap, args.command))
        return 0
    except (UsageError, ValueError, OSError, KeyError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        print(f"error: runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_subcommand())


if __name__ == "__main__":
    main()
