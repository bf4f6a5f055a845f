import json
from unittest import TestCase
from unittest.mock import Mock

try:
    from .brst_commands import BrstVerifyCommands
except ImportError:
    from brst_commands import BrstVerifyCommands

SCRIPT = """
scene g = gr(dim=2, jet_order=3);
shift g;
dress g with vielbein;
check "gr.v_hat_zero" in g;
"""


class TestBrstVerifyCommands(TestCase):
    def setUp(self):
        self.commands = BrstVerifyCommands(Mock())

    def test_run_script(self):
        result = json.loads(self.commands.run_script(SCRIPT))
        self.assertEqual(result["status"], "pass")
        self.assertEqual(result["passed"], 1)
        self.assertEqual(result["failed"], [])

    def test_run_script_error(self):
        result = json.loads(self.commands.run_script("check suite h;"))
        self.assertEqual(
            result, {"error": "line 1, column 13: undefined scene 'h'"}
        )

    def test_verify_suite_rejects_garbage(self):
        result = json.loads(self.commands.verify_suite("gr", dim="two"))
        self.assertEqual(result, {"error": "dim must be an integer"})
        result = json.loads(self.commands.verify_suite("ads"))
        self.assertEqual(result, {"error": "unknown scene 'ads'"})

    def test_verify_suite_small_dimension_error(self):
        result = json.loads(self.commands.verify_suite("conformal", dim="2"))
        self.assertIn("conformal scene needs m >= 3, got 2", result["error"])

    def test_verify_yang_mills_suite(self):
        result = json.loads(self.commands.verify_suite("ym", dim=2))
        self.assertEqual(result["status"], "pass")
        self.assertGreater(result["passed"], 10)

    def test_explain_identity(self):
        result = json.loads(self.commands.explain_identity("gr.v_hat_zero"))
        self.assertIn("composite Lorentz ghost vanishes", result["explanation"])
        result = json.loads(self.commands.explain_identity("nope"))
        self.assertEqual(result, {"error": "unknown identity 'nope'"})

    def test_commands_are_documented(self):
        for command in ("verify_suite", "run_script", "explain_identity"):
            doc = getattr(BrstVerifyCommands, command).__doc__
            self.assertIn("Returns:", doc or "", command)
