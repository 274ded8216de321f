"""INI configuration files for generation, fitting and summarizing.

Sections and keys (defaults in brackets)::

    [synth]      n_individuals_x, n_individuals_y, series_length_min,
                 series_length_max, p_x, p_y, k_x, k_y, n_states (all required),
                 residual_sd [1], loading_scale [1], negative_loading_prob [0.2],
                 grand_mean_sd [1], advance_prob [0.5], seed [0]
    [effect.N]   kind, clusters (1-based, comma separated), values (comma separated)
    [sampler]    n_burn_in [1000], n_samples [1000], thinning [1], seed [0],
                 n_states [5], k_x [3], k_y [3], path_kernel [single_site]
    [priors]     tau_v [1], tau_e [2], tau_spec_ratio [0.25], a0 [1], b0 [1],
                 c1 [1], c2 [1], mu_sd [10]
    [flags]      include_beta_b [true], shared_transitions [false],
                 log1p [false], align_time [true]
    [summary]    level [0.9], epsilon [0.1]
"""
from __future__ import annotations

import configparser
import dataclasses

from .sampler import GibbsConfig
from .synth import PlantedEffect, SynthConfig


class ConfigError(ValueError):
    pass


SYNTH_REQUIRED = ("n_individuals_x", "n_individuals_y", "series_length_min", "series_length_max",
                  "p_x", "p_y", "k_x", "k_y", "n_states")
SYNTH_OPTIONAL = {"residual_sd": float, "loading_scale": float, "negative_loading_prob": float,
                  "grand_mean_sd": float, "advance_prob": float, "seed": int}
SAMPLER_KEYS = ("n_burn_in", "n_samples", "thinning", "seed", "n_states", "k_x", "k_y", "path_kernel")
PRIOR_KEYS = ("tau_v", "tau_e", "tau_spec_ratio", "a0", "b0", "c1", "c2", "mu_sd")
FLAG_KEYS = ("include_beta_b", "shared_transitions", "log1p", "align_time")


def read(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cp


def _get(cp, section, key, conv):
    raw = cp.get(section, key)
    try:
        if conv is bool:
            return cp.getboolean(section, key)
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def synth_config(cp, seed: int | None = None) -> SynthConfig:
    if not cp.has_section("synth"):
        raise ConfigError("missing section [synth]")
    for key in SYNTH_REQUIRED:
        if not cp.has_option("synth", key):
            raise ConfigError(f"missing required key [synth] {key}")
    kw = {k: _get(cp, "synth", k, int) for k in SYNTH_REQUIRED}
    kw["series_length_range"] = (kw.pop("series_length_min"), kw.pop("series_length_max"))
    for key, conv in SYNTH_OPTIONAL.items():
        if cp.has_option("synth", key):
            kw[key] = _get(cp, "synth", key, conv)
    if seed is not None:
        kw["seed"] = seed
    effects = []
    for section in sorted((s for s in cp.sections() if s.startswith("effect.")), key=lambda s: s.split(".", 1)[1]):
        for key in ("kind", "clusters", "values"):
            if not cp.has_option(section, key):
                raise ConfigError(f"missing required key [{section}] {key}")
        try:
            clusters = tuple(int(v) - 1 for v in cp.get(section, "clusters").replace(",", " ").split())
            values = _floats(cp.get(section, "values"))
        except ValueError as exc:
            raise ConfigError(f"[{section}]: {exc}") from exc
        effects.append(PlantedEffect(cp.get(section, "kind").strip(), clusters, values))
    try:
        return SynthConfig(planted_effects=effects, **kw).validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def gibbs_config(cp, seed: int | None = None) -> GibbsConfig:
    defaults = GibbsConfig()
    kw = {}
    for section, keys in (("sampler", SAMPLER_KEYS), ("priors", PRIOR_KEYS), ("flags", FLAG_KEYS)):
        if not cp.has_section(section):
            continue
        known = set(keys)
        for key in cp.options(section):
            if key not in known:
                raise ConfigError(f"unknown key [{section}] {key}")
        for key in keys:
            if cp.has_option(section, key):
                kw[key] = _get(cp, section, key, type(getattr(defaults, key)))
    if seed is not None:
        kw["seed"] = seed
    try:
        return dataclasses.replace(defaults, **kw).validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def summary_options(cp) -> dict:
    out = {"level": 0.9, "epsilon": 0.1}
    if cp.has_section("summary"):
        for key in out:
            if cp.has_option("summary", key):
                out[key] = _get(cp, "summary", key, float)
    return out


def write_gibbs_config(config: GibbsConfig) -> str:
    """Render a :class:`GibbsConfig` in the file format read by :func:`gibbs_config`."""
    d = config.to_dict()
    lines = []
    for section, keys in (("sampler", SAMPLER_KEYS), ("priors", PRIOR_KEYS), ("flags", FLAG_KEYS)):
        lines.append(f"[{section}]")
        lines += [f"{k} = {str(d[k]).lower() if isinstance(d[k], bool) else d[k]}" for k in keys]
        lines.append("")
    return "\n".join(lines)
