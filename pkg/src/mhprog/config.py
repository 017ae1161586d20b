"""Flat ``key = value`` run configuration. Command-line flags override file values."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .core_data import DEFAULT_STAGE_DAYS, PixelSpacing, Stage, check_stage_days
from .dynamics import Lesion

PROFILES = ("paper-replication", "extended")


@dataclass
class RunConfig:
    manifest: Path | None = None
    scan_root: Path | None = None
    um_per_px_x: float = 10.0
    um_per_px_y: float = 4.0
    stage_days: dict = field(default_factory=lambda: dict(DEFAULT_STAGE_DAYS))
    epsilon_hole: float = 0.0
    epsilon_cyst: float = 0.0
    epsilon_elm: float = 0.0
    epsilon_ez: float = 0.0
    lam: float = 1.0
    superior_threshold: int = 20
    classification_threshold: str = "0.5"
    seed: int = 0
    out: Path = Path("out")
    profile: str = "paper-replication"
    min_pixels: int = 10
    dp_window: str = "full"
    missing_threshold: float = 0.10
    vif_limit: float = 5.0
    screen_alpha: float = 0.10
    # fusion
    image_size: int = 64
    patch: int = 16
    d_model: int = 32
    n_heads: int = 4
    n_encoder_blocks: int = 2
    head_hidden: int = 32
    epochs: int = 60
    lr_grid: tuple = (1e-2, 3e-3)
    batch_size: int = 16
    folds: int = 5

    def __post_init__(self):
        self.apply_profile()

    def apply_profile(self) -> None:
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.profile == "paper-replication":
            self.lam = 0.0
            self.superior_threshold = 20
        if self.dp_window not in ("full", "horizon"):
            raise ValueError("dp_window must be 'full' or 'horizon'")
        if self.classification_threshold != "youden":
            float(self.classification_threshold)
        self.stage_days = check_stage_days(self.stage_days)

    @property
    def spacing(self) -> PixelSpacing:
        return PixelSpacing(self.um_per_px_x, self.um_per_px_y)

    @property
    def epsilon(self) -> dict:
        return {
            Lesion.MacularHoleArea: self.epsilon_hole,
            Lesion.PseudocystArea: self.epsilon_cyst,
            Lesion.ElmDefect: self.epsilon_elm,
            Lesion.EzDefect: self.epsilon_ez,
        }

    @property
    def threshold(self):
        t = self.classification_threshold
        return t if t == "youden" else float(t)

    @property
    def weighted_dp(self) -> bool:
        return self.lam != 0


_ALIASES = {"lambda": "lam", "output": "out", "alpha": "screen_alpha"}


def _convert(name: str, text: str, base: Path):
    kinds = {f.name: f for f in fields(RunConfig)}
    if name == "stage_days":
        out = {}
        for part in text.split(","):
            k, _, v = part.partition(":")
            out[Stage.parse(k)] = int(v)
        return out
    if name == "lr_grid":
        return tuple(float(v) for v in text.split(","))
    if name in ("manifest", "scan_root", "out"):
        p = Path(text)
        return p if p.is_absolute() else (base / p)
    default = kinds[name].default
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def parse_config_text(text: str, base: Path = Path(".")) -> dict:
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno}: expected key = value")
        key = _ALIASES.get(key.strip(), key.strip())
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, val.strip(), base)
    return values


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a config file (paths relative to it), then apply non-None overrides."""
    values = {}
    if path is not None:
        path = Path(path)
        values = parse_config_text(path.read_text(encoding="utf-8"), path.parent)
    for k, v in (overrides or {}).items():
        if v is not None:
            values[_ALIASES.get(k, k)] = v
    if values.get("profile", "paper-replication") == "paper-replication":
        # the profile pins these; an explicit different value is a mistake, not something to drop silently
        if values.get("lam", 0.0) != 0.0 or values.get("superior_threshold", 20) != 20:
            raise ValueError("profile 'paper-replication' fixes lambda = 0 and superior threshold = 20; "
                             "use --profile extended to change them")
    return RunConfig(**values)
