"""Runtime configuration: weight profiles, library location, service bind.

Weight profiles let the same model serve audiences with different expertise
(an expert-targeted profile can weigh insult higher, a novice profile risk).
Resolution order for the config file: explicit ``--config`` flag, then the
``BATS_CONFIG`` environment variable, then ``./bats.config.json``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from bats.errors import ParseError
from bats.model import CostWeights

ENV_VAR = "BATS_CONFIG"
DEFAULT_CONFIG_FILENAME = "bats.config.json"


@dataclass(frozen=True)
class CliConfig:
    profiles: Mapping[str, CostWeights] = field(
        default_factory=lambda: {"default": CostWeights(1.0, 1.0, 1.0, 1.0, "default")})
    default_profile: str = "default"
    library_dir: str = "library"
    bind: str = "127.0.0.1:8330"
    webui_dir: str | None = None

    def __post_init__(self) -> None:
        if self.default_profile not in self.profiles:
            raise ValueError(
                f"default profile {self.default_profile!r} is not a declared profile")

    def weights(self, profile: str | None = None) -> CostWeights:
        name = profile or self.default_profile
        try:
            return self.profiles[name]
        except KeyError:
            raise ValueError(f"unknown weight profile {name!r}") from None


def config_from_document(doc: dict) -> CliConfig:
    profiles: dict[str, CostWeights] = {}
    for name, entry in doc.get("profiles", {}).items():
        profiles[name] = CostWeights(
            alpha=float(entry.get("alpha", 1.0)),
            beta=float(entry.get("beta", 1.0)),
            gamma=float(entry.get("gamma", 1.0)),
            delta=float(entry.get("delta", 1.0)),
            profile_name=name,
        )
    if not profiles:
        profiles = {"default": CostWeights(1.0, 1.0, 1.0, 1.0, "default")}
    default_profile = doc.get("default_profile", next(iter(profiles)))
    return CliConfig(
        profiles=profiles,
        default_profile=default_profile,
        library_dir=doc.get("library_dir", "library"),
        bind=doc.get("bind", "127.0.0.1:8330"),
        webui_dir=doc.get("webui_dir"),
    )


def load_config(path: str | Path | None = None) -> CliConfig:
    """Load configuration; fall back to built-in defaults when no file exists."""
    candidate: Path | None
    if path is not None:
        candidate = Path(path)
        if not candidate.is_file():
            raise ParseError(f"config file {str(candidate)!r} does not exist")
    elif os.environ.get(ENV_VAR):
        candidate = Path(os.environ[ENV_VAR])
        if not candidate.is_file():
            raise ParseError(f"{ENV_VAR} points at {str(candidate)!r}, which does not exist")
    else:
        candidate = Path(DEFAULT_CONFIG_FILENAME)
        if not candidate.is_file():
            return CliConfig()
    try:
        doc = json.loads(candidate.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"config file {candidate.name}: {exc.msg}",
                         position=(exc.lineno, exc.colno)) from exc
    return config_from_document(doc)
