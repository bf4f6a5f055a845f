"""BRST verification commands for Auto-GPT."""
import json
import logging
from typing import Any, Dict, Optional

try:
    from .brst_engine import CheckSettings
    from .graded_core import BrstError
    from .script_cli import (
        ExecuteOptions,
        builtin_script,
        execute_script,
        explain,
        parse_script,
    )
except ImportError:
    from brst_engine import CheckSettings
    from graded_core import BrstError
    from script_cli import (
        ExecuteOptions,
        builtin_script,
        execute_script,
        explain,
        parse_script,
    )

logger = logging.getLogger(__name__)

SCENES = {"gr": "gr", "conformal": "conformal", "ym": "ym", "yang_mills": "ym"}


def _as_int(value: Any, name: str) -> Optional[int]:
    if value in (None, ""):
        return None
    try:
        return int(value)
    except (TypeError, ValueError):
        raise BrstError(f"{name} must be an integer") from None


def _as_bool(value: Any) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes")
    return bool(value)


def _summary(report) -> Dict[str, Any]:
    return {
        "status": report.status,
        "passed": len(report.identities) - len(report.failed),
        "failed": [
            {
                "identity": r.identity_id,
                "anchor": r.anchor,
                "residual_terms": r.residual_term_count,
                "residual": r.residual,
            }
            for r in report.failed
        ],
        "seed": report.settings["seed"],
        "version": report.version,
    }


class BrstVerifyCommands:
    """Commands the plugin registers; each answers with a JSON string."""

    def __init__(self, plugin):
        self.plugin = plugin

    def _run(self, text: str) -> Dict[str, Any]:
        options = ExecuteOptions(CheckSettings.from_env(), write_reports=False)
        return _summary(execute_script(parse_script(text), options))

    def verify_suite(
        self, scene: str = "gr", dim: Any = None, normal: Any = False
    ) -> str:
        """
        Run the built-in identity suite of a scene.

        Args:
            scene (str): gr, conformal or ym
            dim (int): base dimension of the scene
            normal (bool): restrict the conformal scene to a normal connection

        Returns:
            str: json object with the overall status and the failing identities
        """
        try:
            kind = SCENES.get(str(scene).strip().lower())
            if kind is None:
                raise BrstError(f"unknown scene '{scene}'")
            text = builtin_script(kind, _as_int(dim, "dim"), _as_bool(normal))
            return json.dumps(self._run(text))
        except BrstError as e:
            logger.warning("brst_verify_suite: %s", e)
            return json.dumps({"error": str(e)})

    def run_script(self, script: str) -> str:
        """
        Parse and execute a scene script.

        Args:
            script (str): the script text

        Returns:
            str: json object with the overall status and the failing identities
        """
        try:
            return json.dumps(self._run(script))
        except BrstError as e:
            logger.warning("brst_run_script: %s", e)
            return json.dumps({"error": str(e)})

    def explain_identity(self, identity: str) -> str:
        """
        Describe one identity without running it.

        Args:
            identity (str): identity id, e.g. gr.v_hat_zero

        Returns:
            str: json object with the anchor, formula, tier and scene of the identity
        """
        try:
            return json.dumps({"identity": identity, "explanation": explain(identity)})
        except BrstError as e:
            return json.dumps({"error": str(e)})
