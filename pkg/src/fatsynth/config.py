"""Experiment configuration: JSON schema, defaults and typed accessors."""

import copy
import json

import jsonschema
import numpy as np

from .diffusion import linear_beta_schedule
from .phantom import PhantomConfig, TISSUES
from .signal import EchoProtocol, FatSpectrum
from .wffit import FitConfig

__all__ = ["SCHEMA", "DEFAULTS", "SEED_KEYS", "ConfigError", "ExperimentConfig", "load_config"]

SEED_KEYS = ("phantom", "test", "noise", "latent", "diffusion", "sample", "evaluation")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_seed = {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1}
_range = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

_protocol = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"te1": _pos, "delta_te": _pos, "n": _int1, "field_strength": _pos,
                   "echo_times": {"type": "array", "items": _pos, "minItems": 1}},
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["protocol", "seeds", "dataset"],
    "properties": {
        "protocol": _protocol,
        "protocol_variants": {"type": "array", "items": _protocol},
        "spectrum": {
            "type": "object",
            "additionalProperties": False,
            "required": ["amplitudes"],
            "properties": {
                "ppm": {"type": "array", "items": _num, "minItems": 1},
                "frequencies_hz": {"type": "array", "items": _num, "minItems": 1},
                "amplitudes": {"type": "array", "items": _pos, "minItems": 1},
            },
        },
        "phantom": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "grid": {"type": "array", "items": {"type": "integer", "minimum": 64}, "minItems": 2, "maxItems": 2},
                "pixel_size": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "field_amplitude": {"type": "number", "minimum": 0},
                "phi0_amplitude": {"type": "number", "minimum": 0},
                "variation": {"type": "number", "minimum": 0},
                "smoothness": {"type": "number", "minimum": 0},
                "boundary_perturbation": {"type": "number", "minimum": 0},
                "tissues": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {name: {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {"pdff": _range, "rho": _range, "r2star": _range},
                    } for name in TISSUES},
                },
            },
        },
        "latent": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"k": _int1, "scale_channels": {"type": "boolean"}},
        },
        "diffusion": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "integer", "minimum": 2},
                "beta_start": _pos,
                "beta_end": _pos,
                "sampler": {"enum": ["ancestral", "literal"]},
                "arch": {"type": "object", "additionalProperties": False,
                         "properties": {"hidden": _int1, "n_layers": _int1, "time_dim": _int1}},
                "optimizer": {"type": "object", "additionalProperties": False,
                              "properties": {"lr": _pos, "batch_size": _int1, "epochs": _int1,
                                             "beta1": _num, "beta2": _num}},
            },
        },
        "fit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "field_window": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "r2star_range": _range,
                "n_field_grid": _int1,
                "n_r2star_grid": _int1,
                "max_iter": _int1,
                "n_starts": _int1,
                "tol": _pos,
                "max_halvings": _int1,
                "downsample": _int1,
                "median_size": _int1,
            },
        },
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "required": ["real", "synthetic", "test"],
            "properties": {
                "real": _int1,
                "synthetic": {"type": "integer", "minimum": 0},
                "test": _int1,
                "snr": {"oneOf": [_pos, {"const": "inf"}]},
                "fit_synthetic": {"type": "integer", "minimum": 0},
            },
        },
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_pairs": _int1,
                "slices_per_subject": _int1,
                "mmd_samples": _int1,
            },
        },
        "seeds": {
            "type": "object",
            "additionalProperties": False,
            "required": list(SEED_KEYS),
            "properties": {k: _seed for k in SEED_KEYS},
        },
        "output_dir": {"type": "string"},
    },
}

DEFAULTS = {
    "protocol": {"te1": 1.4e-3, "delta_te": 2.2e-3, "n": 6, "field_strength": 1.5},
    "protocol_variants": [],
    "phantom": {"grid": [256, 256], "pixel_size": None, "field_amplitude": 150.0,
                "phi0_amplitude": 0.1, "variation": 0.05, "smoothness": 0.08,
                "boundary_perturbation": 0.04, "tissues": {}},
    "latent": {"k": 64, "scale_channels": True},
    "diffusion": {"T": 500, "beta_start": 1e-4, "beta_end": 0.02, "sampler": "ancestral",
                  "arch": {"hidden": 128, "n_layers": 3, "time_dim": 32},
                  "optimizer": {"lr": 7e-5, "batch_size": 8, "epochs": 300, "beta1": 0.9, "beta2": 0.999}},
    "fit": {},
    "dataset": {"snr": 100.0, "fit_synthetic": 20},
    "evaluation": {"n_pairs": 100, "slices_per_subject": 1, "mmd_samples": 200},
    "output_dir": "runs/experiment",
}


class ConfigError(ValueError):
    """Configuration does not satisfy the schema or is inconsistent."""


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _protocol(block, default_field=1.5):
    field = block.get("field_strength", default_field)
    if "echo_times" in block:
        if any(k in block for k in ("te1", "delta_te", "n")):
            raise ConfigError("give either echo_times or te1/delta_te/n, not both")
        return EchoProtocol(tuple(block["echo_times"]), field)
    missing = [k for k in ("te1", "delta_te", "n") if k not in block]
    if missing:
        raise ConfigError(f"protocol block missing {missing}")
    return EchoProtocol.uniform(block["te1"], block["delta_te"], block["n"], field)


class ExperimentConfig:
    """Validated configuration document plus typed views of its blocks."""

    def __init__(self, doc):
        try:
            jsonschema.validate(doc, SCHEMA)
        except jsonschema.ValidationError as e:
            path = "/".join(str(p) for p in e.absolute_path) or "<root>"
            raise ConfigError(f"{path}: {e.message}") from None
        self.raw = doc
        self.doc = _merge(DEFAULTS, doc)
        # a protocol is taken as given: te1/delta_te/n defaults must not leak into echo_times
        self.doc["protocol"] = {"field_strength": DEFAULTS["protocol"]["field_strength"],
                                **copy.deepcopy(doc["protocol"])}
        try:
            self.protocol = _protocol(self.doc["protocol"])
            self.variants = [_protocol(v, self.protocol.field_strength) for v in self.doc["protocol_variants"]]
            self.spectrum = self._spectrum()
            self.phantom = PhantomConfig(**self.doc["phantom"])
            self.fit = FitConfig(**self.doc["fit"])
            d = self.doc["diffusion"]
            self.schedule = linear_beta_schedule(d["T"], d["beta_start"], d["beta_end"])
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None
        if self.protocol.n_echoes < 3:
            raise ConfigError("fitting workflows need at least three echoes")

    def _spectrum(self):
        sp = self.doc.get("spectrum")
        field = self.protocol.field_strength
        if sp is None:
            return FatSpectrum.default(field)
        if ("ppm" in sp) == ("frequencies_hz" in sp):
            raise ConfigError("spectrum needs exactly one of ppm or frequencies_hz")
        if "ppm" in sp:
            return FatSpectrum.from_ppm(sp["ppm"], sp["amplitudes"], field)
        return FatSpectrum(tuple(sp["frequencies_hz"]), tuple(sp["amplitudes"]), field)

    @property
    def seeds(self):
        return dict(self.doc["seeds"])

    @property
    def snr(self):
        v = self.doc["dataset"]["snr"]
        return np.inf if v == "inf" else float(v)

    def with_overrides(self, seed=None, snr=None, out=None, protocol=None):
        doc = copy.deepcopy(self.raw)
        if seed is not None:
            ss = np.random.SeedSequence(int(seed))
            doc["seeds"] = {k: int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
                            for k, c in zip(SEED_KEYS, ss.spawn(len(SEED_KEYS)))}
        if snr is not None:
            doc.setdefault("dataset", {})["snr"] = "inf" if np.isinf(snr) else float(snr)
        if out is not None:
            doc["output_dir"] = str(out)
        if protocol is not None:
            te1, dte, n = protocol
            doc["protocol"] = {"te1": te1, "delta_te": dte, "n": int(n),
                               "field_strength": doc.get("protocol", {}).get("field_strength", 1.5)}
        return ExperimentConfig(doc)

    def hash_document(self):
        """What the config hash covers: the effective config minus the output path."""
        d = copy.deepcopy(self.doc)
        d.pop("output_dir", None)
        return d


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return ExperimentConfig(doc)
