"""Command line front end for batch processing and scripting.

Exit codes: 0 success, 1 usage error, 2 data or format error.  All
defaults come from the config registry; --config FILE loads key=value
overrides and explicit flags win over both.  Progress and timing go to
standard error so standard output stays parseable.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, config
from .exceptions import (ArgumentError, DataError, DegenerateInputError,
                         FormatError)
from .volume import (VERSION as FORMAT_VERSION, ComplexTomogram,
                     ContrastWindow, Domain, Volume, convert_domain,
                     read_octv, read_volume, write_tomogram, write_volume)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse parser that reports usage errors as exit code 1."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _note(message: str) -> None:
    print(message, file=sys.stderr)


def _ints(count):
    def parse(text: str):
        parts = text.split(",")
        if len(parts) != count:
            raise ArgumentError(f"expected {count} comma-separated integers, got {text!r}")
        return tuple(config.parse_int(p.strip()) for p in parts)
    return parse


def _floats(count):
    def parse(text: str):
        parts = text.split(",")
        if len(parts) != count:
            raise ArgumentError(f"expected {count} comma-separated numbers, got {text!r}")
        return tuple(config.parse_float(p.strip()) for p in parts)
    return parse


def _float_list(text: str):
    return tuple(config.parse_float(p.strip()) for p in text.split(","))


_TNODE_KEYS = ("h0", "h1", "search_rz", "search_rx", "search_ry",
               "patch_pz", "patch_px", "patch_py",
               "noise_floor_db", "snr_scale_db")
_WINDOW_KEYS = ("lower_db", "upper_db")
_PAIR_KEYS = ("pair_n", "pair_count", "lower_jitter_lo", "lower_jitter_hi",
              "upper_jitter_lo", "upper_jitter_hi", "voi_z", "voi_x", "voi_y",
              "flip", "rotate", "crop_resize", "free_angle",
              "crop_lo", "crop_hi", "min_crop_px", "output_size")
_PHANTOM_KEYS = ("preset", "nz", "nx", "ny", "psf_z", "psf_x", "psf_y",
                 "pitch_z", "pitch_x", "pitch_y", "uniform_level",
                 "vessel_level", "vessel_radius", "step_position",
                 "step_lo", "step_hi")


def _add_key_flags(parser, names):
    """One flag per config key, same spelling, default None = unset."""
    for name in names:
        key = config.BY_NAME[name]
        flag = "--" + name.replace("_", "-")
        if key.parse is config.parse_bool:
            parser.add_argument(flag, dest=name,
                                action=argparse.BooleanOptionalAction,
                                default=None)
        else:
            parser.add_argument(flag, dest=name, type=key.parse,
                                default=None, metavar="V")


def _build_parser() -> _Parser:
    parser = _Parser(prog="octdespeckle",
                     description="Volumetric OCT speckle suppression toolkit.")
    parser.add_argument(
        "--version", action="version",
        version=f"octdespeckle {__version__} (octv format {FORMAT_VERSION})")
    parser.add_argument("--dump-config", action="store_true",
                        help="print every default as key=value and exit")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE",
                        help="key=value file overriding the defaults")
    common.add_argument("--dump-config", action="store_true",
                        help="print every default as key=value and exit")

    sub = parser.add_subparsers(dest="cmd", metavar="subcommand")

    p = sub.add_parser("despeckle", parents=[common],
                       help="non-local-means despeckle a volume")
    p.add_argument("--input", required=True, metavar="OCTV")
    p.add_argument("--output", required=True, metavar="OCTV")
    p.add_argument("--search", type=_ints(3), metavar="RZ,RX,RY",
                   help="search radii, shorthand for the three search-* keys")
    p.add_argument("--patch", type=_ints(3), metavar="PZ,PX,PY",
                   help="patch radii, shorthand for the three patch-* keys")
    _add_key_flags(p, _TNODE_KEYS + _WINDOW_KEYS + ("db_floor", "threads"))

    p = sub.add_parser("register", parents=[common],
                       help="cancel slow-axis drift by B-scan registration")
    p.add_argument("--input", required=True, metavar="OCTV")
    p.add_argument("--output", required=True, metavar="OCTV")
    p.add_argument("--shift-log", metavar="FILE",
                   help="write per-B-scan 'y dz dx peak' lines here instead of stdout")
    _add_key_flags(p, ("upsample", "sigma_z", "sigma_x", "db_floor"))

    p = sub.add_parser("phantom", parents=[common],
                       help="generate a synthetic speckle phantom")
    p.add_argument("--truth-out", metavar="OCTV",
                   help="incoherent reflectivity map (linear)")
    p.add_argument("--field-out", metavar="OCTV",
                   help="complex speckle field (single channel)")
    p.add_argument("--intensity-out", metavar="OCTV",
                   help="speckle intensity (linear)")
    p.add_argument("--log-out", metavar="OCTV",
                   help="speckle intensity in log dB")
    p.add_argument("--dims", type=_ints(3), metavar="NZ,NX,NY")
    p.add_argument("--psf", type=_floats(3), metavar="SZ,SX,SY")
    p.add_argument("--pitch", type=_floats(3), metavar="DZ,DX,DY")
    p.add_argument("--layer-edges", type=_float_list, metavar="E1,E2,...")
    p.add_argument("--layer-levels", type=_float_list, metavar="L1,L2,...")
    p.add_argument("--vessel-center", type=_floats(2), metavar="CZ,CX")
    _add_key_flags(p, _PHANTOM_KEYS + ("db_floor", "seed"))

    p = sub.add_parser("metrics", parents=[common],
                       help="image quality metrics between volumes")
    p.add_argument("--metric", required=True,
                   choices=("psnr", "cnr", "ssim", "msssim",
                            "speckle-contrast", "ssim-ttest"))
    p.add_argument("--ref", metavar="OCTV")
    p.add_argument("--test", metavar="OCTV")
    p.add_argument("--test2", metavar="OCTV",
                   help="second candidate for ssim-ttest")
    p.add_argument("--input", metavar="OCTV",
                   help="volume for single-input metrics (cnr, speckle-contrast)")
    p.add_argument("--roi1", type=_ints(6), metavar="Z,X,Y,DZ,DX,DY")
    p.add_argument("--roi2", type=_ints(6), metavar="Z,X,Y,DZ,DX,DY")
    p.add_argument("--map-out", metavar="OCTV",
                   help="write the local ssim map (signed domain)")
    p.add_argument("--json", action="store_true",
                   help="print a JSON report instead of the bare value")
    _add_key_flags(p, ("msssim_scales", "data_range"))

    p = sub.add_parser("export-pairs", parents=[common],
                       help="export quantized training pairs and a manifest")
    p.add_argument("--input", required=True, metavar="OCTV",
                   help="raw volume in log dB")
    p.add_argument("--target", metavar="OCTV",
                   help="despeckled volume (unit or log dB, same window); "
                        "omitted targets are despeckled on the fly")
    p.add_argument("--out-dir", required=True, metavar="DIR")
    p.add_argument("--voi", type=_ints(3), metavar="VZ,VX,VY",
                   help="shorthand for the three voi-* keys")
    p.add_argument("--search", type=_ints(3), metavar="RZ,RX,RY")
    p.add_argument("--patch", type=_ints(3), metavar="PZ,PX,PY")
    _add_key_flags(p, _PAIR_KEYS + _TNODE_KEYS + _WINDOW_KEYS
                   + ("threads", "seed"))

    p = sub.add_parser("convert", parents=[common],
                       help="convert a volume between value domains")
    p.add_argument("--input", required=True, metavar="OCTV")
    p.add_argument("--output", required=True, metavar="OCTV")
    p.add_argument("--to", required=True, dest="target",
                   choices=("linear", "log", "unit", "signed"))
    _add_key_flags(p, _WINDOW_KEYS + ("db_floor",))

    return parser


def _load_cfg(args) -> dict:
    cfg = config.defaults()
    path = getattr(args, "config", None)
    if path:
        cfg.update(config.parse_config(Path(path).read_text()))
    return cfg


def _resolve(args, cfg, name):
    value = getattr(args, name, None)
    return cfg[name] if value is None else value


def _triplet(args, cfg, triplet_name, key_names):
    """Resolve three axis keys; a triplet flag fills unset ones."""
    combined = getattr(args, triplet_name, None)
    values = []
    for i, name in enumerate(key_names):
        value = getattr(args, name, None)
        if value is None and combined is not None:
            value = combined[i]
        if value is None:
            value = cfg[name]
        values.append(value)
    return tuple(values)


def _window_from(args, cfg, db_data: np.ndarray | None) -> ContrastWindow | None:
    lower = _resolve(args, cfg, "lower_db")
    upper = _resolve(args, cfg, "upper_db")
    if lower is None or upper is None:
        if db_data is None:
            return None
        lower = float(db_data.min()) if lower is None else float(lower)
        upper = float(db_data.max()) if upper is None else float(upper)
        if upper <= lower:
            upper = lower + 1.0
    return ContrastWindow(float(lower), float(upper))


def _tnode_params(args, cfg, db_data: np.ndarray | None,
                  fallback_floor: float | None = None):
    from .nlm import TNodeParams
    from .pairs import noise_floor

    floor = _resolve(args, cfg, "noise_floor_db")
    if floor is None:
        if db_data is not None:
            floor = noise_floor(db_data)
        elif fallback_floor is not None:
            floor = fallback_floor
        else:
            raise ArgumentError(
                "noise_floor_db=auto needs log-dB data to estimate from")
    return TNodeParams(
        h0=_resolve(args, cfg, "h0"),
        h1=_resolve(args, cfg, "h1"),
        search_radii=_triplet(args, cfg, "search",
                              ("search_rz", "search_rx", "search_ry")),
        patch_radii=_triplet(args, cfg, "patch",
                             ("patch_pz", "patch_px", "patch_py")),
        noise_floor_db=floor,
        snr_scale_db=_resolve(args, cfg, "snr_scale_db"))


def _run_despeckle(args) -> int:
    from .nlm import despeckle

    cfg = _load_cfg(args)
    start = time.perf_counter()
    vol = read_volume(args.input)
    threads = _resolve(args, cfg, "threads")

    if vol.domain == Domain.LINEAR:
        db = convert_domain(vol, Domain.LOG_DB,
                            floor=_resolve(args, cfg, "db_floor"))
    elif vol.domain == Domain.LOG_DB:
        db = vol
    elif vol.domain == Domain.UNIT:
        db = None
    else:
        raise ArgumentError(
            f"despeckle expects linear, log dB or unit input, got {vol.domain.name}")

    if db is not None:
        window = _window_from(args, cfg, db.data)
        params = _tnode_params(args, cfg, db.data)
        unit = convert_domain(db, Domain.UNIT, window=window)
    else:
        window = _window_from(args, cfg, None)
        h1 = _resolve(args, cfg, "h1")
        if window is None and h1 > 0:
            raise ArgumentError(
                "unit-domain input needs --lower-db and --upper-db "
                "(or h1=0) for SNR-adaptive filtering")
        fallback = window.lower_db if window is not None else 0.0
        params = _tnode_params(args, cfg, None, fallback_floor=fallback)
        unit = vol

    out_unit = despeckle(unit, params, window, threads=threads)
    out = convert_domain(out_unit, vol.domain, window=window) \
        if vol.domain != Domain.UNIT else out_unit
    write_volume(out, args.output)
    nz, nx, ny = vol.dims
    _note(f"despeckled {nz}x{nx}x{ny} in {time.perf_counter() - start:.1f} s "
          f"-> {args.output}")
    return 0


def _run_register(args) -> int:
    from .preprocess import (combine_polarization, lowpass, register_volume,
                             stabilize_phase)

    cfg = _load_cfg(args)
    start = time.perf_counter()
    obj = read_octv(args.input)
    if isinstance(obj, ComplexTomogram):
        tomo = stabilize_phase(obj)
        tomo = lowpass(tomo, _resolve(args, cfg, "sigma_z"),
                       _resolve(args, cfg, "sigma_x"))
        intensity = combine_polarization(tomo)
        vol = convert_domain(intensity, Domain.LOG_DB,
                             floor=_resolve(args, cfg, "db_floor"))
    else:
        vol = obj
    corrected, trace = register_volume(vol, upsample=_resolve(args, cfg, "upsample"))
    write_volume(corrected, args.output)
    lines = "".join(f"{int(y)} {dz:.6f} {dx:.6f} {peak:.6f}\n"
                    for y, dz, dx, peak in trace)
    if args.shift_log:
        Path(args.shift_log).write_text(lines)
    else:
        sys.stdout.write(lines)
    drift = np.abs(trace[:, 1:3]).max() if len(trace) else 0.0
    _note(f"registered {vol.dims[2]} B-scans (max |shift| {drift:.3f} px) "
          f"in {time.perf_counter() - start:.1f} s -> {args.output}")
    return 0


def _run_phantom(args) -> int:
    from .phantom import PhantomSpec, generate_incoherent, speckle_realization

    cfg = _load_cfg(args)
    start = time.perf_counter()
    outputs = [args.truth_out, args.field_out, args.intensity_out, args.log_out]
    if not any(outputs):
        raise ArgumentError("phantom needs at least one of --truth-out, "
                            "--field-out, --intensity-out, --log-out")
    kwargs = dict(
        preset=_resolve(args, cfg, "preset"),
        dims=_triplet(args, cfg, "dims", ("nz", "nx", "ny")),
        psf_sigma=_triplet(args, cfg, "psf", ("psf_z", "psf_x", "psf_y")),
        pitch=_triplet(args, cfg, "pitch", ("pitch_z", "pitch_x", "pitch_y")),
        seed=_resolve(args, cfg, "seed"),
        uniform_level=_resolve(args, cfg, "uniform_level"),
        vessel_level=_resolve(args, cfg, "vessel_level"),
        vessel_radius=_resolve(args, cfg, "vessel_radius"),
        step_position=_resolve(args, cfg, "step_position"),
        step_levels=(_resolve(args, cfg, "step_lo"),
                     _resolve(args, cfg, "step_hi")),
    )
    if args.layer_edges is not None:
        kwargs["layer_edges"] = args.layer_edges
    if args.layer_levels is not None:
        kwargs["layer_levels"] = args.layer_levels
    if args.vessel_center is not None:
        kwargs["vessel_center"] = args.vessel_center
    spec = PhantomSpec(**kwargs)

    truth = generate_incoherent(spec)
    if args.truth_out:
        write_volume(truth, args.truth_out)
    if args.field_out or args.intensity_out or args.log_out:
        tomo, intensity = speckle_realization(truth, spec.psf_sigma, spec.seed)
        if args.field_out:
            write_tomogram(tomo, args.field_out)
        if args.intensity_out:
            write_volume(intensity, args.intensity_out)
        if args.log_out:
            log = convert_domain(intensity, Domain.LOG_DB,
                                 floor=_resolve(args, cfg, "db_floor"))
            write_volume(log, args.log_out)
    written = ", ".join(str(p) for p in outputs if p)
    _note(f"phantom {spec.preset} {spec.dims[0]}x{spec.dims[1]}x{spec.dims[2]} "
          f"in {time.perf_counter() - start:.1f} s -> {written}")
    return 0


def _format_value(value: float) -> str:
    if value != value or value in (float("inf"), float("-inf")):
        return "identical" if value == float("inf") else str(value)
    return str(float(value))


def _roi_from(spec, what: str):
    from .metrics import Roi

    if spec is None:
        raise ArgumentError(f"this metric needs {what} as Z,X,Y,DZ,DX,DY")
    return Roi(spec[:3], spec[3:])


def _run_metrics(args) -> int:
    from .metrics import cnr, msssim3d, psnr, speckle_contrast, ssim3d, ssim_ttest

    cfg = _load_cfg(args)
    metric = args.metric
    data_range = _resolve(args, cfg, "data_range")
    report = {"metric": metric, "parameters": {}}

    def need(flag_value, flag_name):
        if flag_value is None:
            raise ArgumentError(f"metric {metric} needs {flag_name}")
        return flag_value

    if metric in ("psnr", "ssim", "msssim", "ssim-ttest"):
        ref = read_volume(need(args.ref, "--ref"))
        test = read_volume(need(args.test, "--test"))
        report["ref"] = args.ref
        report["test"] = args.test

    if metric == "psnr":
        value = psnr(ref, test)
        report["psnr_db"] = _format_value(value) if value == float("inf") else value
        plain = _format_value(value)
    elif metric == "ssim":
        if data_range is not None:
            report["parameters"]["data_range"] = data_range
        value, local = ssim3d(ref, test, data_range=data_range)
        if args.map_out:
            map_vol = Volume(np.clip(local, -1.0, 1.0).astype(np.float32),
                             ref.pitch, Domain.SIGNED)
            write_volume(map_vol, args.map_out)
            report["map"] = args.map_out
        report["ssim"] = value
        plain = _format_value(value)
    elif metric == "msssim":
        scales = _resolve(args, cfg, "msssim_scales")
        report["parameters"]["scales"] = scales
        if data_range is not None:
            report["parameters"]["data_range"] = data_range
        value = msssim3d(ref, test, scales=scales, data_range=data_range)
        report["ms_ssim"] = value
        plain = _format_value(value)
    elif metric == "ssim-ttest":
        test2 = read_volume(need(args.test2, "--test2"))
        report["test2"] = args.test2
        _, map_a = ssim3d(ref, test, data_range=data_range)
        _, map_b = ssim3d(ref, test2, data_range=data_range)
        t, p = ssim_ttest(map_a, map_b)
        report["t"] = t
        report["p"] = p
        plain = f"{_format_value(t)} {_format_value(p)}"
    elif metric == "cnr":
        vol = read_volume(need(args.input, "--input"))
        report["input"] = args.input
        roi_a = _roi_from(args.roi1, "--roi1")
        roi_b = _roi_from(args.roi2, "--roi2")
        report["rois"] = [list(args.roi1), list(args.roi2)]
        value = cnr(vol, roi_a, roi_b)
        report["cnr"] = value
        plain = _format_value(value)
    else:  # speckle-contrast
        vol = read_volume(need(args.input, "--input"))
        report["input"] = args.input
        roi = _roi_from(args.roi1, "--roi1") if args.roi1 is not None else None
        if args.roi1 is not None:
            report["rois"] = [list(args.roi1)]
        value = speckle_contrast(vol, roi)
        report["speckle_contrast"] = value
        plain = _format_value(value)

    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(plain)
    return 0


def _run_export(args) -> int:
    import os

    from .pairs import AugmentPolicy, export_pairs

    cfg = _load_cfg(args)
    start = time.perf_counter()
    raw = read_volume(args.input)
    if raw.domain != Domain.LOG_DB:
        raise ArgumentError("export-pairs needs the raw volume in log dB")
    window = _window_from(args, cfg, raw.data)

    target = None
    if args.target:
        target = read_volume(args.target)
        if target.domain == Domain.LOG_DB:
            target = convert_domain(target, Domain.UNIT, window=window)
        elif target.domain != Domain.UNIT:
            raise ArgumentError(
                f"target volume must be unit or log dB, got {target.domain.name}")

    out_size = _resolve(args, cfg, "output_size")
    policy = AugmentPolicy(
        lower_jitter_db=(_resolve(args, cfg, "lower_jitter_lo"),
                         _resolve(args, cfg, "lower_jitter_hi")),
        upper_jitter_db=(_resolve(args, cfg, "upper_jitter_lo"),
                         _resolve(args, cfg, "upper_jitter_hi")),
        voi_extent=_triplet(args, cfg, "voi", ("voi_z", "voi_x", "voi_y")),
        flip=_resolve(args, cfg, "flip"),
        rotate=_resolve(args, cfg, "rotate"),
        crop_resize=_resolve(args, cfg, "crop_resize"),
        free_angle=_resolve(args, cfg, "free_angle"),
        crop_area=(_resolve(args, cfg, "crop_lo"),
                   _resolve(args, cfg, "crop_hi")),
        min_crop_px=_resolve(args, cfg, "min_crop_px"),
        output_size=None if out_size is None else (out_size, out_size),
    )
    params = None if target is not None else _tnode_params(args, cfg, raw.data)
    threads = _resolve(args, cfg, "threads")
    if threads is None:
        threads = os.cpu_count() or 1
    count = _resolve(args, cfg, "pair_count")

    manifest = export_pairs(
        raw, target, window,
        n=_resolve(args, cfg, "pair_n"), count=count,
        seed=_resolve(args, cfg, "seed"), out_dir=args.out_dir,
        policy=policy, tnode_params=params, threads=threads,
        noise_floor_db=_resolve(args, cfg, "noise_floor_db"))
    _note(f"exported {len(manifest['entries'])} pairs "
          f"in {time.perf_counter() - start:.1f} s -> {args.out_dir}")
    return 0


_DOMAIN_NAMES = {"linear": Domain.LINEAR, "log": Domain.LOG_DB,
                 "unit": Domain.UNIT, "signed": Domain.SIGNED}


def _run_convert(args) -> int:
    cfg = _load_cfg(args)
    vol = read_volume(args.input)
    lower = _resolve(args, cfg, "lower_db")
    upper = _resolve(args, cfg, "upper_db")
    window = None
    if lower is not None and upper is not None:
        window = ContrastWindow(float(lower), float(upper))
    out = convert_domain(vol, _DOMAIN_NAMES[args.target], window=window,
                         floor=_resolve(args, cfg, "db_floor"))
    write_volume(out, args.output)
    _note(f"converted {args.input} ({vol.domain.name}) "
          f"-> {args.output} ({out.domain.name})")
    return 0


_RUNNERS = {
    "despeckle": _run_despeckle,
    "register": _run_register,
    "phantom": _run_phantom,
    "metrics": _run_metrics,
    "export-pairs": _run_export,
    "convert": _run_convert,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and --version paths
        return 0 if exc.code in (0, None) else 1
    try:
        if getattr(args, "dump_config", False):
            sys.stdout.write(config.dump_config())
            return 0
        if args.cmd is None:
            print("usage error: a subcommand is required, one of "
                  + ", ".join(sorted(_RUNNERS)), file=sys.stderr)
            return 1
        return _RUNNERS[args.cmd](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ArgumentError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, DataError, DegenerateInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
