"""INI-style session configuration files.

Sections map onto :class:`SessionConfig` fields::

    [session]     session_id, start_ts, participants
    [windows]     bucket_len_ms, hop_ms, late_tolerance_ms
    [thresholds]  proximity_close_m, proximity_social_m, facing_threshold_deg,
                  speaking_low, speaking_high, min_action_confidence,
                  turn_cap, distance_cap_m
    [vocab]       speaking_states, speech_acts, proximity_states, actions
    [insight]     timeout_ms, parallelism, few_shot_k

List values are comma separated. ``start_ts`` may be omitted; the session
start control then fixes it.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .domain import IndicatorVocabulary, SessionConfig
from .errors import ConfigError

_INT_KEYS = {
    ("windows", "bucket_len_ms"): "bucket_len_ms",
    ("windows", "hop_ms"): "hop_ms",
    ("windows", "late_tolerance_ms"): "late_tolerance_ms",
    ("thresholds", "turn_cap"): "turn_cap",
    ("insight", "timeout_ms"): "insight_timeout_ms",
    ("insight", "parallelism"): "insight_parallelism",
    ("insight", "few_shot_k"): "few_shot_k",
}
_FLOAT_KEYS = {
    ("thresholds", "proximity_close_m"): "proximity_close_m",
    ("thresholds", "proximity_social_m"): "proximity_social_m",
    ("thresholds", "facing_threshold_deg"): "facing_threshold_deg",
    ("thresholds", "speaking_low"): "speaking_low",
    ("thresholds", "speaking_high"): "speaking_high",
    ("thresholds", "min_action_confidence"): "min_action_confidence",
    ("thresholds", "distance_cap_m"): "distance_cap_m",
}
_KNOWN = {
    "session": {"session_id", "start_ts", "participants"},
    "windows": {k for s, k in _INT_KEYS if s == "windows"},
    "thresholds": {k for s, k in list(_INT_KEYS) + list(_FLOAT_KEYS) if s == "thresholds"},
    "vocab": {"speaking_states", "speech_acts", "proximity_states", "actions"},
    "insight": {k for s, k in _INT_KEYS if s == "insight"},
}


def _split_list(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.replace("\n", ",").split(",") if v.strip())


def parse_config(text: str) -> SessionConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    for section in parser.sections():
        if section not in _KNOWN:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(parser[section]) - _KNOWN[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    if not parser.has_section("session"):
        raise ConfigError("missing [session] section")

    sess = parser["session"]
    kwargs = {
        "session_id": sess.get("session_id", "session"),
        "participants": _split_list(sess.get("participants", "")),
    }
    try:
        kwargs["start_ts"] = int(sess["start_ts"]) if "start_ts" in sess else None
        for (section, key), name in _INT_KEYS.items():
            if parser.has_option(section, key):
                kwargs[name] = parser.getint(section, key)
        for (section, key), name in _FLOAT_KEYS.items():
            if parser.has_option(section, key):
                kwargs[name] = parser.getfloat(section, key)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if parser.has_section("vocab"):
        kwargs["vocab"] = IndicatorVocabulary(**{k: _split_list(v) for k, v in parser["vocab"].items()})
    return SessionConfig(**kwargs)


def load_config(path: str | Path) -> SessionConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: SessionConfig) -> str:
    lines = ["[session]", f"session_id = {cfg.session_id}"]
    if cfg.start_ts is not None:
        lines.append(f"start_ts = {cfg.start_ts}")
    lines.append(f"participants = {', '.join(cfg.participants)}")
    sections: dict[str, list[str]] = {}
    for (section, key), name in list(_INT_KEYS.items()) + list(_FLOAT_KEYS.items()):
        sections.setdefault(section, []).append(f"{key} = {getattr(cfg, name)!r}")
    for section in ("windows", "thresholds", "insight"):
        lines += ["", f"[{section}]"] + sections[section]
    lines += ["", "[vocab]"]
    for key in sorted(_KNOWN["vocab"]):
        lines.append(f"{key} = {', '.join(getattr(cfg.vocab, key))}")
    return "\n".join(lines) + "\n"
