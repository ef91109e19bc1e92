"""Line-oriented experiment config files.

Format: UTF-8 text, ``#`` comments, ``[section]`` headers, ``key = value``
lines.  Unknown sections or keys are rejected with the offending line number;
so are duplicates and type errors.  Step sizes accept the exact power form
``2^-6`` (or ``2**-6``) besides plain decimal floats.

Sections and keys:

    [model]       alpha, lambda, epsilon
    [grid]        J
    [noise]       P, spectrum, seed
    [time]        tau, T
    [experiment]  kind, M, record_stride, initial, initials, observables,
                  tau_ladder, tau_ref, horizons

`spectrum` is ``power-law(r)`` or ``explicit: v1, v2, ...`` (P entries).
`initial` names a profile or gives ``explicit: z1, z2, ...`` (J complex
entries).  Defaults are applied for every omitted optional key and echoed
into the run manifest.
"""

from __future__ import annotations

from .harness import EXPERIMENT_KINDS, ExperimentConfig
from .model import GridSpec, ModelParams, NoiseSpec, spectrum

__all__ = ["ConfigError", "parse_config", "serialize_config", "apply_overrides"]


class ConfigError(ValueError):
    """Config rejected; message carries line number and key where known."""


def _parse_number(text: str, line: int, key: str) -> float:
    tok = text.strip().replace("**", "^")
    try:
        if "^" in tok:
            base, exp = tok.split("^", 1)
            return float(base) ** float(exp)
        return float(tok)
    except ValueError:
        raise ConfigError(f"line {line}: key '{key}': cannot parse number {text!r}") from None


def _parse_int(text: str, line: int, key: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"line {line}: key '{key}': cannot parse integer {text!r}") from None


def _parse_str_list(text: str, line: int, key: str) -> tuple:
    items = tuple(tok.strip() for tok in text.split(",") if tok.strip())
    if not items:
        raise ConfigError(f"line {line}: key '{key}': empty list")
    return items


def _parse_number_list(text: str, line: int, key: str) -> tuple:
    return tuple(_parse_number(tok, line, key) for tok in text.split(",") if tok.strip())


_SCHEMA = {
    "model": ("alpha", "lambda", "epsilon"),
    "grid": ("J",),
    "noise": ("P", "spectrum", "seed"),
    "time": ("tau", "T"),
    "experiment": ("kind", "M", "record_stride", "initial", "initials",
                   "observables", "tau_ladder", "tau_ref", "horizons"),
}

_REQUIRED = (
    ("model", "alpha"), ("model", "lambda"), ("model", "epsilon"),
    ("grid", "J"), ("noise", "P"), ("noise", "spectrum"),
    ("time", "tau"), ("time", "T"), ("experiment", "kind"),
)

_DEFAULTS = {
    ("noise", "seed"): "0",
    ("experiment", "M"): "1",
    ("experiment", "record_stride"): "1",
    ("experiment", "initial"): "sine",
    ("experiment", "observables"): "exp-norm2, sin-norm2",
}


def _scan(text: str) -> dict:
    """Raw (section, key) -> (value, line) map with duplicate/unknown checks."""
    entries = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key '{key}' in section [{section}]")
        if (section, key) in entries:
            raise ConfigError(f"line {lineno}: duplicate key '{key}' in section [{section}]")
        entries[(section, key)] = (value, lineno)
    return entries


def apply_overrides(entries: dict, overrides) -> dict:
    """Apply ``key=value`` / ``section.key=value`` pairs on top of parsed entries.

    Bare keys must be unambiguous across the schema.
    """
    out = dict(entries)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        if "." in key:
            section, name = key.split(".", 1)
            if section not in _SCHEMA or name not in _SCHEMA[section]:
                raise ConfigError(f"override {item!r}: unknown key '{key}'")
        else:
            hits = [s for s, keys in _SCHEMA.items() if key in keys]
            if not hits:
                raise ConfigError(f"override {item!r}: unknown key '{key}'")
            if len(hits) > 1:
                raise ConfigError(
                    f"override {item!r}: ambiguous key '{key}' (sections {', '.join(hits)})")
            section, name = hits[0], key
        out[(section, name)] = (value, 0)
    return out


def build_config(entries: dict) -> ExperimentConfig:
    """Typed, validated ExperimentConfig from raw entries (defaults applied)."""
    missing = [f"[{s}] {k}" for s, k in _REQUIRED if (s, k) not in entries]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))
    data = dict(entries)
    for loc, default in _DEFAULTS.items():
        data.setdefault(loc, (default, 0))

    def get(section, key, default=None):
        if (section, key) not in data:
            return default, 0
        return data[(section, key)]

    val, ln = get("model", "alpha")
    alpha = _parse_number(val, ln, "alpha")
    val, ln = get("model", "lambda")
    lam = _parse_int(val, ln, "lambda")
    val, ln = get("model", "epsilon")
    epsilon = _parse_number(val, ln, "epsilon")
    val, ln = get("grid", "J")
    J = _parse_int(val, ln, "J")
    val, ln = get("noise", "P")
    P = _parse_int(val, ln, "P")
    spec_desc, spec_line = get("noise", "spectrum")
    val, ln = get("noise", "seed")
    seed = _parse_int(val, ln, "seed")
    val, ln = get("time", "tau")
    tau = _parse_number(val, ln, "tau")
    val, ln = get("time", "T")
    T = _parse_number(val, ln, "T")
    kind, kind_line = get("experiment", "kind")
    kind = kind.strip()
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"line {kind_line}: key 'kind': unknown experiment kind {kind!r}")
    val, ln = get("experiment", "M")
    M = _parse_int(val, ln, "M")
    val, ln = get("experiment", "record_stride")
    record_stride = _parse_int(val, ln, "record_stride")
    initial, _ = get("experiment", "initial")
    initials_raw, ln_i = get("experiment", "initials")
    initials = _parse_str_list(initials_raw, ln_i, "initials") if initials_raw else ()
    obs_raw, ln_o = get("experiment", "observables")
    observables = _parse_str_list(obs_raw, ln_o, "observables")
    ladder_raw, ln_l = get("experiment", "tau_ladder")
    tau_ladder = _parse_number_list(ladder_raw, ln_l, "tau_ladder") if ladder_raw else ()
    ref_raw, ln_r = get("experiment", "tau_ref")
    tau_ref = _parse_number(ref_raw, ln_r, "tau_ref") if ref_raw else None
    hor_raw, ln_h = get("experiment", "horizons")
    horizons = _parse_number_list(hor_raw, ln_h, "horizons") if hor_raw else ()

    spec_desc = spec_desc.strip()
    try:
        if spec_desc.startswith("explicit:"):
            eta = spectrum([float(tok) for tok in spec_desc[len("explicit:"):].split(",")], P)
        else:
            eta = spectrum(spec_desc, P)
        config = ExperimentConfig(
            kind=kind,
            params=ModelParams(alpha=alpha, lam=lam, epsilon=epsilon),
            grid=GridSpec(J=J),
            noise=NoiseSpec(P=P, eta=eta, seed=seed),
            spectrum_desc=spec_desc,
            tau=tau,
            T=T,
            M=M,
            initial=initial.strip(),
            initials=initials,
            observables=observables,
            tau_ladder=tau_ladder,
            tau_ref=tau_ref,
            horizons=horizons,
            record_stride=record_stride,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return config


def parse_config(text: str, overrides=()) -> ExperimentConfig:
    """Parse a config document, apply overrides, validate, return the config."""
    return build_config(apply_overrides(_scan(text), overrides))


def serialize_config(config: ExperimentConfig) -> str:
    """Canonical text form; parse_config(serialize_config(c)) == c."""
    lines = [
        "[model]",
        f"alpha = {config.params.alpha!r}",
        f"lambda = {config.params.lam}",
        f"epsilon = {config.params.epsilon!r}",
        "",
        "[grid]",
        f"J = {config.grid.J}",
        "",
        "[noise]",
        f"P = {config.noise.P}",
        f"spectrum = {config.spectrum_desc}",
        f"seed = {config.noise.seed}",
        "",
        "[time]",
        f"tau = {config.tau!r}",
        f"T = {config.T!r}",
        "",
        "[experiment]",
        f"kind = {config.kind}",
        f"M = {config.M}",
        f"record_stride = {config.record_stride}",
        f"initial = {config.initial}",
    ]
    if config.initials:
        lines.append("initials = " + ", ".join(config.initials))
    lines.append("observables = " + ", ".join(config.observables))
    if config.tau_ladder:
        lines.append("tau_ladder = " + ", ".join(repr(t) for t in config.tau_ladder))
    if config.tau_ref is not None:
        lines.append(f"tau_ref = {config.tau_ref!r}")
    if config.horizons:
        lines.append("horizons = " + ", ".join(repr(t) for t in config.horizons))
    return "\n".join(lines) + "\n"
