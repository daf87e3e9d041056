"""Typed defaults loaded from config/default.yaml."""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple
import logging

import yaml

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS_PATH = Path(__file__).parent.parent / "config" / "default.yaml"


@dataclass(frozen=True)
class Settings:
    """Numeric defaults shared by validation, simulation and the checks."""

    grid_points: int = 1001
    eps_lead: float = 1e-9
    step: float = 1e-3
    refinement: int = 2
    blowup_threshold: float = 1e12
    domain: Tuple[float, float] = (0.0, 5.0)
    tau_const: float = 1e-6
    tau_pass: float = 1e-5
    tau_fail: float = 1e-3
    eps_degenerate: float = 1e-12
    outputs: Dict[str, bool] = field(
        default_factory=lambda: {'workbook': True, 'markdown': True, 'plots': True}
    )

    def merged(self, document: Optional[Dict[str, Any]]) -> 'Settings':
        """
        Return a copy with the sections of a settings-shaped document applied.

        Args:
            document: Mapping with any of the validation, solver, domain,
                tolerances and output sections

        Returns:
            New Settings instance
        """
        if not document:
            return self

        changes: Dict[str, Any] = {}
        validation = document.get('validation') or {}
        solver = document.get('solver') or {}
        tolerances = document.get('tolerances') or {}

        if 'grid_points' in validation:
            changes['grid_points'] = int(validation['grid_points'])
        if 'eps_lead' in validation:
            changes['eps_lead'] = float(validation['eps_lead'])

        if 'step' in solver:
            changes['step'] = float(solver['step'])
        if 'refinement' in solver:
            changes['refinement'] = int(solver['refinement'])
        if 'blowup_threshold' in solver:
            changes['blowup_threshold'] = float(solver['blowup_threshold'])

        if document.get('domain') is not None:
            t0, t1 = document['domain']
            changes['domain'] = (float(t0), float(t1))

        for key in ('tau_const', 'tau_pass', 'tau_fail', 'eps_degenerate'):
            if key in tolerances:
                changes[key] = float(tolerances[key])

        if document.get('output'):
            outputs = dict(self.outputs)
            outputs.update({k: bool(v) for k, v in document['output'].items()})
            changes['outputs'] = outputs

        return replace(self, **changes)


DEFAULTS = Settings()


def load_settings(
    path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None
) -> Settings:
    """
    Load settings from the defaults file and apply overrides.

    Args:
        path: YAML file to read (default: config/default.yaml)
        overrides: Settings-shaped mapping applied after the file

    Returns:
        Settings instance
    """
    path = Path(path) if path else DEFAULT_SETTINGS_PATH
    settings = DEFAULTS
    if path.exists():
        with open(path, 'r') as f:
            document = yaml.safe_load(f) or {}
        settings = settings.merged(document)
        logger.debug(f"Loaded settings from {path}")
    else:
        logger.warning(f"Settings file not found, using built-in defaults: {path}")
    return settings.merged(overrides)
