"""INI run configuration with a fail-closed schema.

Every section and key must appear in :data:`SCHEMA`; anything else is a
:class:`ConfigError`.  Path-valued keys resolve against the directory of the
config file.  ``[catalog]`` takes ``<label>.<field>`` overrides where field is
``zpl_nm``, ``class`` or ``lifetime``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from pathlib import Path

from ..geometry import DEFAULT_DIAMETERS
from ..nvmodel import DEFAULT_CATALOG, catalog


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _band(text):
    lo, hi = _floats(text)
    return lo, hi


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _weights(text):
    """``label:weight`` pairs separated by commas or whitespace."""
    out = {}
    for item in str(text).replace(",", " ").split():
        label, _, w = item.partition(":")
        out[label] = float(w)
    return out


def _files(text):
    """``diameter:path`` pairs separated by commas."""
    out = {}
    for item in str(text).split(","):
        item = item.strip()
        if item:
            d, _, path = item.partition(":")
            out[float(d)] = path.strip()
    return out


class _Path(str):
    pass


def _path(text):
    return _Path(text)


_DIAMETERS = " ".join(str(d) for d in DEFAULT_DIAMETERS)

SCHEMA = {
    "run": {
        "seed": (int, 0),
        "out": (_path, "out"),
        "threads": (int, 1),
        "cache_dir": (_path, ".pillarsim-cache"),
    },
    "grid": {
        "cell_size": (float, 25.0),
        "lateral_span": (float, 2500.0),
        "substrate_margin": (float, 400.0),
        "air_margin": (float, 500.0),
        "pml_cells": (int, 10),
        "courant_factor": (float, 0.5),
        "precision": (str, "single"),
    },
    "structure": {
        "diameters": (_floats, _DIAMETERS),
        "pillar_height": (float, 1000.0),
        "bulk_depth": (float, 500.0),
        "substrate_index": (float, 2.6),
        "ambient_index": (float, 1.0),
    },
    "source": {
        "wavelength": (float, 1300.0),
        "pulse_bandwidth": (float, 0.15),
        "decay": (float, 1e-5),
        "max_steps": (int, 30000),
    },
    "objective": {
        "numerical_aperture": (float, 0.85),
    },
    "catalog": {},
    "spectra": {
        "weights": (_weights, "line1173:1 kh:1 hh:1 kk:1 hk:1"),
        "diameters": (_floats, _DIAMETERS),
        "collection_csv": (_path, ""),
        "axial_gain": (float, 2.0),
        "basal_gain": (float, 10.0),
        "gain_peak": (float, 800.0),
        "gain_width": (float, 300.0),
        "exposure": (float, 5e6),
        "zpl_fwhm": (float, 1.5),
        "zpl_broadening": (float, 1.0),
        "zpl_shift": (float, 0.0),
        "dark_per_bin": (float, 1.0),
        "bulk_file": (_path, ""),
        "pillar_files": (_files, ""),
    },
    "detector": {
        "efficiency": (float, 0.8),
        "dark_rate": (float, 100.0),
        "dead_time": (float, 50.0),
        "irf_fwhm": (float, 170.0),
    },
    "tcspc": {
        "diameters": (_floats, "500 600 700 800 900"),
        "rep_rate": (float, 20.0),
        "duration": (float, 2.5),
        "photons_per_pulse": (float, 0.025),
        "bin_ps": (float, 16.0),
        "kk_band": (_band, "1217 1227"),
        "hk_band": (_band, "1237 1247"),
        "backscatter_amplitude": (float, 5.0),
        "fix_tau2": (_bool, "true"),
        "tau2": (float, 0.54),
        "max_spread": (float, 0.1),
    },
    "scan": {
        "width": (float, 30.0),
        "height": (float, 20.0),
        "pillar_diameter": (float, 800.0),
        "pitch": (float, 5.0),
        "bulk_width": (float, 10.0),
        "pixel": (float, 0.02),
        "emitter_density": (float, 5e6),
        "beam_fwhm": (float, 1.2),
        "step": (float, 0.2),
        "dwell": (float, 10.0),
    },
    "fit": {
        "spectrum_file": (_path, ""),
        "histogram_file": (_path, ""),
        "structure": (str, "bulk"),
    },
}

_CATALOG_FIELDS = {"zpl_nm": ("zpl_wavelength", float), "class": ("site_class", str),
                   "lifetime": ("lifetime", float)}


class RunConfig:
    """Parsed configuration: ``cfg[section][key]`` with schema defaults filled in."""

    def __init__(self, values: dict, base_dir: Path, catalog_overrides: dict):
        self._values = values
        self.base_dir = Path(base_dir)
        self.catalog_overrides = catalog_overrides

    def __getitem__(self, section):
        return self._values[section]

    @classmethod
    def defaults(cls, base_dir=".") -> "RunConfig":
        return cls.from_string("", base_dir)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_string(text, path.resolve().parent)

    @classmethod
    def from_string(cls, text: str, base_dir=".") -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        base = Path(base_dir).resolve()
        values, overrides = {}, {}
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
        for section, keys in SCHEMA.items():
            raw = dict(parser[section]) if parser.has_section(section) else {}
            if section == "catalog":
                overrides = _catalog_overrides(raw)
                continue
            unknown = sorted(set(raw) - set(keys))
            if unknown:
                raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
            out = {}
            for key, (conv, default) in keys.items():
                text_value = raw.get(key, default)
                try:
                    value = conv(text_value) if isinstance(text_value, str) else text_value
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from exc
                if conv is _path:
                    value = (base / value) if value else None
                out[key] = value
            values[section] = out
        try:
            catalog(overrides)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"[catalog]: {exc}") from exc
        return cls(values, base, overrides)

    @property
    def sites(self):
        return catalog(self.catalog_overrides)

    def digest(self, *sections, extra=None) -> str:
        """sha256 over the named sections (all when none given) plus ``extra``."""
        names = sections or tuple(self._values)
        blob = {s: self._values[s] for s in names if s in self._values}
        blob["_catalog"] = self.catalog_overrides
        blob["_extra"] = extra
        text = json.dumps(blob, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()


def _catalog_overrides(raw: dict) -> dict:
    labels = {s.label for s in DEFAULT_CATALOG}
    out = {}
    for key, text in raw.items():
        label, _, fld = key.partition(".")
        if label not in labels or fld not in _CATALOG_FIELDS:
            raise ConfigError(f"unknown key in [catalog]: {key}")
        name, conv = _CATALOG_FIELDS[fld]
        try:
            out.setdefault(label, {})[name] = conv(text)
        except ValueError as exc:
            raise ConfigError(f"[catalog] {key}: {exc}") from exc
    return out
