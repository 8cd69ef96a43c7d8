"""Key=value run configuration shared by the command line tool.

Every tunable default lives in one registry so a run can be archived
as a flat text file and replayed with --config.  CLI flags mirror the
keys one to one and override the file.  The value "auto" stands for
"derive from the data at run time" and parses to None.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .exceptions import ArgumentError

_BOOL_WORDS = {"true": True, "false": False, "on": True, "off": False,
               "1": True, "0": False, "yes": True, "no": False}


def parse_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ArgumentError(f"expected a number, got {text!r}") from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ArgumentError(f"expected a finite number, got {text!r}")
    return value


def parse_int(text: str) -> int:
    try:
        return int(text, 10)
    except ValueError:
        raise ArgumentError(f"expected an integer, got {text!r}") from None


def parse_bool(text: str) -> bool:
    try:
        return _BOOL_WORDS[text.strip().lower()]
    except KeyError:
        raise ArgumentError(f"expected true/false, got {text!r}") from None


def parse_auto(inner: Callable) -> Callable:
    def parse(text: str):
        if text.strip().lower() == "auto":
            return None
        return inner(text)
    return parse


def parse_choice(*options: str) -> Callable:
    def parse(text: str) -> str:
        if text not in options:
            raise ArgumentError(f"expected one of {options}, got {text!r}")
        return text
    return parse


@dataclass(frozen=True)
class ConfigKey:
    name: str
    default: str          # dumped verbatim, so formatting is stable
    parse: Callable
    section: str


_K = ConfigKey

REGISTRY: tuple[ConfigKey, ...] = (
    # despeckling
    _K("h0", "0.080", parse_float, "despeckle"),
    _K("h1", "0.040", parse_float, "despeckle"),
    _K("search_rz", "8", parse_int, "despeckle"),
    _K("search_rx", "8", parse_int, "despeckle"),
    _K("search_ry", "8", parse_int, "despeckle"),
    _K("patch_pz", "1", parse_int, "despeckle"),
    _K("patch_px", "1", parse_int, "despeckle"),
    _K("patch_py", "1", parse_int, "despeckle"),
    _K("noise_floor_db", "auto", parse_auto(parse_float), "despeckle"),
    _K("snr_scale_db", "10.0", parse_float, "despeckle"),
    _K("lower_db", "auto", parse_auto(parse_float), "despeckle"),
    _K("upper_db", "auto", parse_auto(parse_float), "despeckle"),
    # registration
    _K("upsample", "100", parse_int, "register"),
    _K("sigma_z", "1.0", parse_float, "register"),
    _K("sigma_x", "1.0", parse_float, "register"),
    _K("db_floor", "1e-12", parse_auto(parse_float), "register"),
    # phantom
    _K("preset", "uniform", parse_choice("uniform", "layers", "vessel", "step"),
       "phantom"),
    _K("nz", "128", parse_int, "phantom"),
    _K("nx", "128", parse_int, "phantom"),
    _K("ny", "64", parse_int, "phantom"),
    _K("psf_z", "1.0", parse_float, "phantom"),
    _K("psf_x", "1.5", parse_float, "phantom"),
    _K("psf_y", "1.5", parse_float, "phantom"),
    _K("pitch_z", "4.0", parse_float, "phantom"),
    _K("pitch_x", "10.0", parse_float, "phantom"),
    _K("pitch_y", "10.0", parse_float, "phantom"),
    _K("uniform_level", "1.0", parse_float, "phantom"),
    _K("vessel_level", "0.05", parse_float, "phantom"),
    _K("vessel_radius", "auto", parse_auto(parse_float), "phantom"),
    _K("step_position", "auto", parse_auto(parse_int), "phantom"),
    _K("step_lo", "1.0", parse_float, "phantom"),
    _K("step_hi", "100.0", parse_float, "phantom"),
    # training-pair export
    _K("pair_n", "8", parse_int, "pairs"),
    _K("pair_count", "64", parse_int, "pairs"),
    _K("lower_jitter_lo", "0.0", parse_float, "pairs"),
    _K("lower_jitter_hi", "10.0", parse_float, "pairs"),
    _K("upper_jitter_lo", "-15.0", parse_float, "pairs"),
    _K("upper_jitter_hi", "1.0", parse_float, "pairs"),
    _K("voi_z", "11", parse_int, "pairs"),
    _K("voi_x", "11", parse_int, "pairs"),
    _K("voi_y", "3", parse_int, "pairs"),
    _K("flip", "true", parse_bool, "pairs"),
    _K("rotate", "true", parse_bool, "pairs"),
    _K("crop_resize", "true", parse_bool, "pairs"),
    _K("free_angle", "false", parse_bool, "pairs"),
    _K("crop_lo", "0.5", parse_float, "pairs"),
    _K("crop_hi", "1.0", parse_float, "pairs"),
    _K("min_crop_px", "16", parse_int, "pairs"),
    _K("output_size", "auto", parse_auto(parse_int), "pairs"),
    # metrics
    _K("msssim_scales", "5", parse_int, "metrics"),
    _K("data_range", "auto", parse_auto(parse_float), "metrics"),
    # runtime
    _K("threads", "auto", parse_auto(parse_int), "runtime"),
    _K("seed", "0", parse_int, "runtime"),
)

BY_NAME = {key.name: key for key in REGISTRY}


def defaults() -> dict:
    """Parsed default value of every key."""
    return {key.name: key.parse(key.default) for key in REGISTRY}


def dump_config() -> str:
    """All defaults as archivable key=value text."""
    lines = []
    section = None
    for key in REGISTRY:
        if key.section != section:
            if lines:
                lines.append("")
            lines.append(f"# {key.section}")
            section = key.section
        lines.append(f"{key.name}={key.default}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> dict:
    """Parse key=value text; blank lines and # comments are skipped.

    Unknown keys are rejected so a stale or misspelled archive fails
    loudly instead of silently running with defaults.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ArgumentError(f"config line {lineno}: expected key=value, got {raw!r}")
        name, _, value = line.partition("=")
        name = name.strip()
        if name not in BY_NAME:
            raise ArgumentError(f"config line {lineno}: unknown key {name!r}")
        try:
            values[name] = BY_NAME[name].parse(value.strip())
        except ArgumentError as exc:
            raise ArgumentError(f"config line {lineno}, key {name!r}: {exc}") from None
    return values
