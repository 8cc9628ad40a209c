"""Agent configuration with dotted-key file overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from typing import Dict, Optional

ENV_VAR = "SCHED_CONFIG"

# dotted config keys -> AgentConfig attributes
_KEY_MAP = {
    "ballot.options_k": "ballot_options_k",
    "timers.reminder1_hours": "reminder1_hours",
    "timers.reminder2_hours": "reminder2_hours",
    "timers.warning_hours": "warning_hours",
    "timers.cancel_hours": "cancel_hours",
    "timers.phone_wait_hours": "phone_wait_hours",
    "business_hours.start": "business_start_hour",
    "business_hours.end": "business_end_hour",
    "workhours.grid_minutes": "grid_minutes",
    "assistant.name": "assistant_name",
    "assistant.address": "assistant_address",
    "taskboard.lease_minutes": "lease_minutes",
    "workers.micro_service_seconds": "micro_service_seconds",
    "workers.macro_service_seconds": "macro_service_seconds",
}


@dataclass
class AgentConfig:
    ballot_options_k: int = 3
    reminder1_hours: float = 24.0
    reminder2_hours: float = 48.0
    warning_hours: float = 72.0
    cancel_hours: float = 96.0
    phone_wait_hours: float = 48.0
    business_start_hour: int = 9
    business_end_hour: int = 17
    grid_minutes: int = 30
    assistant_name: str = "Cal"
    assistant_address: str = "cal@assistant.test"
    lease_minutes: float = 10.0
    micro_service_seconds: float = 40.0
    macro_service_seconds: float = 480.0

    def merged(self, overrides: Optional[Dict] = None) -> "AgentConfig":
        """Copy with dotted-key or attribute-name overrides applied."""
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, value in (overrides or {}).items():
            attr = _KEY_MAP.get(key, key)
            if attr not in values:
                raise KeyError(f"unknown config key {key!r}")
            values[attr] = type(values[attr])(value)
        return AgentConfig(**values)


def load_config(path: Optional[str] = None) -> AgentConfig:
    """Defaults, overlaid with the JSON file at path or $SCHED_CONFIG."""
    path = path or os.environ.get(ENV_VAR)
    base = AgentConfig()
    if not path:
        return base
    with open(path, "r", encoding="utf-8") as fh:
        overrides = json.load(fh)
    return base.merged(overrides)
