"""Sectioned key=value run configuration with a fixed schema.

Unknown sections or keys are errors, as are missing required keys; every
error message names the offending ``section.key``.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass

REQUIRED = object()


class ConfigError(ValueError):
    """Invalid configuration; the message names the key."""


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    parse.__name__ = "choice"
    return parse


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


# section -> key -> (parser, default).  ``REQUIRED`` defaults are only
# enforced for the sections a subcommand actually needs.
SCHEMA: dict[str, dict[str, tuple]] = {
    "image": {
        "source": (str, REQUIRED),          # path, or "synthetic:shapes"
        "size": (int, 256),                 # size of the synthetic image
        "noise_sigma": (float, 15.0),       # intensity units
        "mode": (_choice("raw", "lift"), "lift"),
        "spacing": (float, 1.0),            # physical width of one pixel
        "resample": (_choice("none", "nearest"), "none"),
        "nx": (int, 0),                     # 0: use the image size
        "ny": (int, 0),
        "output_format": (_choice("pgm", "png"), "pgm"),
    },
    "model": {
        "a": (float, 1.0),
        "b": (float, 1.0),
        "c": (float, 300.0),
        "d": (float, 2.0),
        "lambda": (_choice("constant", "ramp", "image"), "constant"),
        "lambda_image": (str, ""),          # grayscale mask for lambda = image
        "lambda_min": (float, 0.5),
        "lambda_max": (float, 1.0),
        "epsilon": (float, 0.0),
        "delta": (float, 1.0),
        "v0": (_choice("grad", "zero"), "grad"),
    },
    "solver": {
        "dt": (float, 0.5),
        "T": (float, 3.0),
        "scheme": (_choice("semi-implicit", "explicit"), "semi-implicit"),
        "picard_tol": (float, 1e-8),
        "picard_max": (int, 50),
        "linsolve_tol": (float, 1e-10),
        "linsolve_max": (int, 5000),
        "face_mean": (_choice("arithmetic", "harmonic"), "arithmetic"),
    },
    "run": {
        "seed": (int, 0),
        "workers": (int, 1),
    },
    "verify": {
        "scenario": (str, REQUIRED),
        "n": (int, 31),
        "gamma": (float, 1.1),
        "gamma_min": (float, 1.01),
        "gamma_max": (float, 1e6),
        "gamma_points": (int, 64),
        "eigen_amplitude": (float, 0.1),
        "inadmissible_bound": (float, 0.0),  # > 0 forces a tiny admissibility bound on one pair
    },
    "sweep": {
        "a": (_floats, ()),
        "b": (_floats, ()),
        "c": (_floats, ()),
        "d": (_floats, ()),
        "lambda_min": (_floats, ()),
        "dt": (_floats, ()),
        "T": (_floats, ()),
        "check_sequential": (_bool, False),
    },
    "converge": {
        "scenario": (str, REQUIRED),
        "levels": (int, 3),
        "base": (int, 8),
        "dt_refine": (float, 4.0),
        "eps_scenario": (str, "regularized"),
        "eps": (_floats, (1e-2, 5e-3, 2.5e-3, 1.25e-3)),
        "eps_n": (int, 15),
    },
}

# sections each subcommand requires to be present (their REQUIRED keys are enforced)
COMMAND_SECTIONS = {
    "restore": ("image",),
    "verify": ("verify",),
    "sweep": ("image",),
    "converge": ("converge",),
}


@dataclass
class RunConfig:
    """Parsed configuration: ``values[section][key]`` with defaults filled in."""

    values: dict
    present: dict  # section -> set of keys given explicitly

    def __getitem__(self, section):
        return self.values[section]

    def has_section(self, section: str) -> bool:
        return section in self.present

    def snapshot(self) -> dict:
        """Every key, defaults included, as plain JSON-friendly values."""
        out = {}
        for sec, kv in self.values.items():
            out[sec] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in kv.items()}
        return out

    def to_text(self) -> str:
        """Render back to the key=value format (only explicitly set keys)."""
        lines = []
        for sec in SCHEMA:
            if sec not in self.present:
                continue
            lines.append(f"[{sec}]")
            for key in SCHEMA[sec]:
                if key in self.present[sec]:
                    lines.append(f"{key} = {_render(self.values[sec][key])}")
            lines.append("")
        return "\n".join(lines)

    def require(self, command: str):
        for sec in COMMAND_SECTIONS.get(command, ()):
            for key, (_, default) in SCHEMA[sec].items():
                if default is REQUIRED and key not in self.present.get(sec, ()):
                    raise ConfigError(f"missing required key {sec}.{key}")

    def with_override(self, section: str, key: str, value) -> "RunConfig":
        values = {s: dict(kv) for s, kv in self.values.items()}
        present = {s: set(k) for s, k in self.present.items()}
        values[section][key] = value
        present.setdefault(section, set()).add(key)
        return RunConfig(values, present)


def _render(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",), default_section="__none__")
    parser.optionxform = str  # keys are case-sensitive (T vs t)
    try:
        parser.read_file(io.StringIO(text))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from None
    values = {sec: {k: (None if d is REQUIRED else d) for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    present: dict[str, set] = {}
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        present[sec] = set()
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{key}")
            conv = SCHEMA[sec][key][0]
            try:
                values[sec][key] = conv(raw.strip())
            except ValueError as exc:
                raise ConfigError(f"bad value for {sec}.{key}: {raw.strip()!r} ({exc})") from None
            present[sec].add(key)
    return RunConfig(values, present)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def default_config(command: str = "restore") -> RunConfig:
    """A runnable configuration for ``command`` (the shipped defaults)."""
    text = {
        "restore": "[image]\nsource = synthetic:shapes\n",
        "sweep": "[image]\nsource = synthetic:shapes\n",
        "verify": "[verify]\nscenario = eigenmode\n",
        "converge": "[converge]\nscenario = heat\n",
    }[command]
    return parse_config(text)
