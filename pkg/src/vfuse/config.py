"""Pipeline configuration.

Config files are INI-style text; every setting is addressed as
``section.key`` both in the file and in command-line overrides::

    [voxel]
    size = 0.05, 0.05, 0.1
    [fb]
    threshold = 0.5
"""

import configparser
import dataclasses
from dataclasses import dataclass

from .p2fusion import COMBINERS, PatchPattern
from .voxelgrid import VoxelGridSpec


def _floats(text):
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _bool(text):
    val = str(text).strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    val = str(text).strip().lower()
    return None if val in ("", "none", "auto") else int(val)


# dotted key -> (field name, parser)
KEYS = {
    "voxel.size": ("voxel_size", _floats),
    "voxel.range": ("pc_range", _floats),
    "voxel.stride": ("stride", _opt_int),
    "voxel.max_points": ("max_points", int),
    "voxel.center_offset": ("center_offset", _bool),
    "fusion.stage": ("stage", int),
    "fusion.patch": ("patch", _ints),
    "fusion.combiner": ("combiner", str),
    "fusion.channels": ("channels", int),
    "fusion.chunk": ("chunk", _opt_int),
    "fusion.mlp_depth": ("mlp_depth", int),
    "fusion.scale_h": ("scale_h", float),
    "fusion.mask_invalid": ("mask_invalid", _bool),
    "fb.k_s": ("k_s", int),
    "fb.threshold": ("threshold", float),
    "fb.fore_first": ("fore_first", _bool),
    "fb.score_gain": ("score_gain", float),
    "run.seed": ("seed", int),
}


@dataclass(frozen=True)
class FusionConfig:
    voxel_size: tuple = (0.05, 0.05, 0.1)
    pc_range: tuple = (0.0, -40.0, -3.0, 70.4, 40.0, 1.0)
    stride: int = None
    max_points: int = 5
    center_offset: bool = False
    stage: int = 1
    patch: tuple = (-1, 0, 1)
    combiner: str = "add"
    channels: int = 16
    chunk: int = 1024
    mlp_depth: int = 1
    scale_h: float = 1.0
    mask_invalid: bool = True
    k_s: int = 3
    threshold: float = 0.5
    fore_first: bool = False
    score_gain: float = 24.0
    seed: int = 0

    def __post_init__(self):
        if len(self.voxel_size) != 3 or len(self.pc_range) != 6:
            raise ValueError("voxel.size needs 3 values and voxel.range needs 6")
        if self.stage < 1:
            raise ValueError("fusion.stage must be >= 1")
        if self.combiner not in COMBINERS:
            raise ValueError(f"fusion.combiner must be one of {COMBINERS}")
        if self.k_s < 1 or self.k_s % 2 == 0:
            raise ValueError("fb.k_s must be a positive odd integer")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("fb.threshold must lie in (0, 1)")
        if self.channels < 1 or self.max_points < 1 or self.mlp_depth < 1:
            raise ValueError("channels, max_points and mlp_depth must be >= 1")
        if self.chunk is not None and self.chunk < 1:
            raise ValueError("fusion.chunk must be >= 1")
        if not self.score_gain > 0:
            raise ValueError("fb.score_gain must be positive")
        if not self.scale_h > 0:
            raise ValueError("fusion.scale_h must be positive")
        self.pattern()

    @property
    def effective_stride(self):
        """Explicit stride, else ``2 ** (stage - 1)``."""
        return self.stride if self.stride is not None else 2 ** (self.stage - 1)

    def grid_spec(self):
        return VoxelGridSpec(self.voxel_size, self.pc_range[:3], self.pc_range[3:],
                             self.effective_stride, self.center_offset)

    def pattern(self):
        return PatchPattern.square(self.patch)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        sections = {}
        for dotted, (name, _) in KEYS.items():
            sec, key = dotted.split(".")
            val = getattr(self, name)
            if isinstance(val, tuple):
                val = ", ".join(repr(v) for v in val)
            elif val is None:
                val = "auto"
            sections.setdefault(sec, []).append(f"{key} = {val}")
        return "\n".join(f"[{s}]\n" + "\n".join(lines) + "\n" for s, lines in sections.items())


def parse_overrides(pairs):
    """``["fb.threshold=0.3", ...]`` -> ``{"threshold": 0.3, ...}``."""
    out = {}
    for pair in pairs:
        key, sep, val = pair.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"override {pair!r} must look like section.key=value")
        if key not in KEYS:
            raise ValueError(f"unknown setting '{key}'")
        name, parse = KEYS[key]
        out[name] = parse(val.strip())
    return out


def load_config(path=None, overrides=()):
    """Defaults, then the file at ``path`` (if any), then ``overrides``."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
        pairs = []
        for sec in parser.sections():
            for key, val in parser.items(sec):
                pairs.append(f"{sec}.{key}={val}")
        values.update(parse_overrides(pairs))
    values.update(parse_overrides(overrides))
    return FusionConfig(**values)
