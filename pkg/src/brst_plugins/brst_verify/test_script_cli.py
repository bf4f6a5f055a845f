import json
import os
from pathlib import Path
from unittest import TestCase

import pytest
from hypothesis import given, settings as hypothesis_settings
from hypothesis import strategies as st

try:
    from .brst_engine import ANCHORS, CheckSettings
    from .geometry_conformal import CONFORMAL_ANCHORS
    from .geometry_gr import GR_ANCHORS
    from .reports import find
    from .script_cli import (
        KEYWORDS,
        LAWS,
        REPORT_FORMATS,
        SCENE_KINDS,
        CheckDirective,
        DressDirective,
        ExecuteOptions,
        ReportDirective,
        RuleDecl,
        SceneDecl,
        ScriptAst,
        ScriptError,
        ShiftDirective,
        _apply,
        builtin_script,
        execute_script,
        explain,
        main,
        override_scenes,
        parse_script,
        print_script,
    )
except ImportError:
    from brst_engine import ANCHORS, CheckSettings
    from geometry_conformal import CONFORMAL_ANCHORS
    from geometry_gr import GR_ANCHORS
    from reports import find
    from script_cli import (
        KEYWORDS,
        LAWS,
        REPORT_FORMATS,
        SCENE_KINDS,
        CheckDirective,
        DressDirective,
        ExecuteOptions,
        ReportDirective,
        RuleDecl,
        SceneDecl,
        ScriptAst,
        ScriptError,
        ShiftDirective,
        _apply,
        builtin_script,
        execute_script,
        explain,
        main,
        override_scenes,
        parse_script,
        print_script,
    )

SMALL_GR = """
# gravitational scene at the smallest size
scene g = gr(dim=2, jet_order=3);
shift g;
dress g with vielbein;
"""


def options(seed="script-tests", faults=()):
    return ExecuteOptions(
        CheckSettings(seed=seed, trials=1), frozenset(faults), write_reports=False
    )


class TestParseScript(TestCase):
    def test_four_statements(self):
        ast = parse_script(
            "scene g = gr(dim=4); shift g; dress g with vielbein; check suite g;"
        )
        self.assertEqual(
            ast.statements,
            (
                SceneDecl("g", "gr", (("dim", 4),)),
                ShiftDirective("g"),
                DressDirective("g", "vielbein"),
                CheckDirective("g"),
            ),
        )

    def test_undefined_scene_points_at_the_name(self):
        with self.assertRaises(ScriptError) as e:
            parse_script("check suite h;")
        self.assertEqual(e.exception.message, "undefined scene 'h'")
        self.assertEqual((e.exception.line, e.exception.column), (1, 13))

    def test_undefined_scene_on_a_later_line(self):
        with self.assertRaises(ScriptError) as e:
            parse_script('scene g = gr();\ncheck "gr.v_hat_zero" in x;')
        self.assertEqual(e.exception.line, 2)
        self.assertIn("undefined scene 'x'", str(e.exception))

    def test_syntax_error(self):
        with self.assertRaises(ScriptError) as e:
            parse_script("scene g = gr(dim=4)\nshift g;")
        self.assertTrue(e.exception.message.startswith("syntax error"))
        self.assertEqual(e.exception.line, 2)

    def test_unknown_scene_kind(self):
        with self.assertRaises(ScriptError):
            parse_script("scene g = ads(dim=4);")

    def test_redefinition(self):
        with self.assertRaises(ScriptError) as e:
            parse_script("scene g = gr();\nscene g = conformal();")
        self.assertEqual(e.exception.message, "scene 'g' already defined")

    def test_duplicate_option(self):
        with self.assertRaises(ScriptError) as e:
            parse_script("scene g = gr(dim=2, dim=3);")
        self.assertEqual(e.exception.message, "duplicate option 'dim'")

    def test_values_and_comments(self):
        ast = parse_script(
            "# header\n"
            'scene c = conformal(dim=3, normal=true, eta="euclidean"); # trailing\n'
            "scene y = yang_mills(matter=false, eta=minkowski);\n"
            "rule y sigma u = tensorial;\n"
            'report md "out/run.md";\n'
        )
        c, y, rule, report = ast.statements
        self.assertEqual(
            c.options, (("dim", 3), ("normal", True), ("eta", "euclidean"))
        )
        self.assertEqual(y.options, (("matter", False), ("eta", "minkowski")))
        self.assertEqual(rule, RuleDecl("y", "u", "tensorial"))
        self.assertEqual(report, ReportDirective("md", "out/run.md"))
        self.assertEqual([s.name for s in ast.scenes()], ["c", "y"])

    def test_builtin_scripts_parse(self):
        for kind in ("gr", "conformal", "ym"):
            ast = parse_script(builtin_script(kind, 3, True, 3))
            self.assertIsInstance(ast.statements[-1], CheckDirective)


names = st.from_regex(r"\A[a-z_][a-z0-9_]{0,5}\Z").filter(
    lambda s: s not in KEYWORDS
)
texts = st.text(alphabet="abcxyz019._-/ ", max_size=12)
values = st.integers(-5, 50) | st.booleans() | texts


@st.composite
def scripts(draw):
    scenes = draw(st.lists(names, min_size=1, max_size=3, unique=True))
    statements = []
    for name in scenes:
        keys = draw(
            st.lists(
                st.sampled_from(["dim", "jet_order", "normal", "eta", "size"]),
                unique=True,
                max_size=3,
            )
        )
        kind = draw(st.sampled_from(SCENE_KINDS))
        statements.append(
            SceneDecl(name, kind, tuple((k, draw(values)) for k in keys))
        )
    defined = st.sampled_from(scenes)
    directives = st.one_of(
        st.builds(ShiftDirective, defined),
        st.builds(DressDirective, defined, names),
        st.builds(RuleDecl, defined, names, st.sampled_from(LAWS)),
        st.builds(CheckDirective, defined, st.none() | texts),
        st.builds(ReportDirective, st.sampled_from(REPORT_FORMATS), texts),
    )
    statements += draw(st.lists(directives, max_size=6))
    return ScriptAst(tuple(statements))


@hypothesis_settings(max_examples=60, deadline=None)
@given(scripts())
def test_print_then_parse_is_identity(ast):
    parsed = parse_script(print_script(ast))
    assert parsed == ast
    assert parse_script(print_script(parsed)) == parsed


class TestExecuteScript(TestCase):
    def run_script(self, text, **kwargs):
        return execute_script(parse_script(text), options(**kwargs))

    def test_single_identity(self):
        report = self.run_script(SMALL_GR + 'check "gr.v_hat_zero" in g;')
        self.assertEqual(report.status, "pass")
        self.assertEqual([r.identity_id for r in report.identities], ["gr.v_hat_zero"])
        self.assertEqual(report.scene["name"], "g")
        self.assertEqual(report.scene["dim"], 2)
        self.assertEqual(report.settings["seed"], "script-tests")

    def test_repeated_checks_run_once(self):
        text = SMALL_GR + 'check "gr.v_hat_zero" in g;\ncheck "gr.v_hat_zero" in g;'
        self.assertEqual(len(self.run_script(text).identities), 1)

    def test_fault_is_reported(self):
        report = self.run_script(
            SMALL_GR + 'check "gr.nilpotency.s" in g;', faults=["gr.nilpotency.s"]
        )
        self.assertEqual(report.status, "fail")
        self.assertGreater(report.failed[0].residual_term_count, 0)
        self.assertEqual(report.settings["faults"], ["gr.nilpotency.s"])

    def test_reports_are_reproducible(self):
        text = SMALL_GR + 'check "gr.sigma_e" in g;\ncheck "gr.v_hat_zero" in g;'
        first = self.run_script(text).to_json()
        self.assertEqual(first, self.run_script(text).to_json())

    def test_seed_changes_points_not_verdicts(self):
        text = SMALL_GR + 'check "gr.v_hat_zero" in g;'
        one = self.run_script(text, seed="one")
        two = self.run_script(text, seed="two")
        self.assertNotEqual(one.identities[0].seeds, two.identities[0].seeds)
        self.assertEqual(one.status, two.status)
        self.assertEqual(one.status, "pass")

    def test_markdown_carries_anchor(self):
        report = self.run_script(SMALL_GR + 'check "gr.v_hat_zero" in g;')
        self.assertIn("composite Lorentz ghost vanishes", report.to_markdown())

    def test_tensorial_rule(self):
        report = self.run_script(
            "scene y = yang_mills(size=2, dim=2, jet_order=3);\nshift y;\n"
            "rule y sigma u = tensorial;\ndress y with u;\n"
            'check "ym.footnote_ghost" in y;'
        )
        self.assertEqual(report.status, "pass")
        self.assertEqual(report.scene["dressing"], "u")

    def test_check_needs_shift(self):
        with self.assertRaises(ScriptError) as e:
            self.run_script("scene g = gr(dim=2);\ncheck suite g;")
        self.assertEqual(e.exception.message, "check needs 'shift g' first")
        self.assertEqual(e.exception.line, 2)

    def test_check_needs_dressing(self):
        with self.assertRaises(ScriptError) as e:
            self.run_script("scene g = gr(dim=2);\nshift g;\ncheck suite g;")
        self.assertEqual(e.exception.message, "check needs 'dress g' first")

    def test_unknown_identity(self):
        with self.assertRaises(ScriptError) as e:
            self.run_script(SMALL_GR + 'check "gr.nothing" in g;')
        self.assertIn("unknown identity 'gr.nothing'", str(e.exception))

    def test_bad_option_and_dressing(self):
        with self.assertRaises(ScriptError):
            self.run_script("scene g = gr(dim=true);")
        with self.assertRaises(ScriptError):
            self.run_script("scene g = gr(normal=true);")
        with self.assertRaises(ScriptError):
            self.run_script('scene g = gr(eta="ads");')
        with self.assertRaises(ScriptError):
            self.run_script("scene g = gr();\ndress g with u;")
        with self.assertRaises(ScriptError):
            self.run_script("scene g = gr();\nrule g sigma u = lie;")

    def test_second_conformal_stage_needs_the_first(self):
        with self.assertRaises(ScriptError) as e:
            self.run_script("scene c = conformal(dim=3);\nshift c;\ndress c with u0;")
        self.assertEqual(
            e.exception.message, "dressing u0 needs 'dress c with u1' first"
        )
        self.assertEqual(e.exception.line, 3)
        self.assertEqual(e.exception.column, 1)

    def test_engine_error_carries_statement_span(self):
        with self.assertRaises(ScriptError) as e:
            self.run_script(
                "scene c = conformal(dim=2);\nshift c;\ndress c with u;\n"
                "check suite c;"
            )
        self.assertEqual(e.exception.line, 4)
        self.assertIn("conformal scene needs m >= 3, got 2", str(e.exception))


def test_every_identity_is_reachable():
    for kind, dim, normal in [
        ("gr", 2, False),
        ("ym", 2, False),
        ("conformal", 3, False),
        ("conformal", 3, True),
    ]:
        states = {}
        for item in parse_script(builtin_script(kind, dim, normal, 3)).statements:
            _apply(item, states)
        (name,) = states
        (state,) = states.values()
        ids = [c.identity_id for c in state.checks]
        assert len(ids) == len(set(ids))
        text = builtin_script(kind, dim, normal, 3).replace(f"check suite {name};", "")
        text += "".join(f'check "{i}" in {name};\n' for i in ids)
        picked = {}
        for item in parse_script(text).statements:
            _apply(item, picked)
        assert [c.identity_id for c in picked[name].selected] == ids


def test_main_verify_writes_report(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("BRST_TRIALS", "1")
    path = tmp_path / "gr.json"
    code = main(
        ["verify", "gr", "--dim", "2", "--report", str(path)]
    )
    assert code == 0
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["status"] == "pass"
    assert data["settings"]["trials"] == 1
    assert all(r["status"] == "pass" for r in data["identities"])
    assert "gr.v_hat_zero" in capsys.readouterr().out


def test_main_fault_exit_code(tmp_path, monkeypatch):
    monkeypatch.setenv("BRST_TRIALS", "1")
    script = tmp_path / "gr.brst"
    script.write_text(SMALL_GR + 'check "gr.v_hat_zero" in g;\n', encoding="utf-8")
    assert main(["run", str(script)]) == 0
    assert main(["run", str(script), "--inject-fault", "gr.v_hat_zero"]) == 1


def test_main_markdown_report(tmp_path, monkeypatch):
    monkeypatch.setenv("BRST_TRIALS", "1")
    script = tmp_path / "gr.brst"
    out = tmp_path / "gr.md"
    script.write_text(SMALL_GR + 'check "gr.v_hat_zero" in g;\n', encoding="utf-8")
    assert main(["run", str(script), "--format", "md", "--report", str(out)]) == 0
    assert "composite Lorentz ghost vanishes" in out.read_text(encoding="utf-8")


def test_report_directive_writes_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    ast = parse_script(SMALL_GR + 'check "gr.v_hat_zero" in g;\nreport json "r.json";')
    report = execute_script(
        ast, ExecuteOptions(CheckSettings(seed="s", trials=1))
    )
    written = json.loads((tmp_path / "r.json").read_text(encoding="utf-8"))
    assert written["status"] == report.status == "pass"
    assert find(report, "gr.v_hat_zero").tier == 2


def test_main_script_error(tmp_path, capsys):
    script = tmp_path / "bad.brst"
    script.write_text("check suite h;\n", encoding="utf-8")
    assert main(["run", str(script)]) == 2
    assert "line 1, column 13: undefined scene 'h'" in capsys.readouterr().err


def test_explain(capsys):
    assert main(["explain", "gr.v_hat_zero", "--dim", "2"]) == 0
    out = capsys.readouterr().out
    assert "composite Lorentz ghost vanishes" in out
    assert "tier:" in out
    assert "gr.v_hat_zero" in explain("gr.v_hat_zero", 2)


def test_explain_unknown(capsys):
    assert main(["explain", "gr.nothing", "--dim", "2"]) == 2
    assert "unknown identity 'gr.nothing'" in capsys.readouterr().err


def test_command_line_options_override_script_scenes():
    ast = parse_script(
        'scene g = gr(dim=4, eta="minkowski");\nscene y = yang_mills();'
    )
    gr, ym = override_scenes(ast, dim=2, jet_order=3).scenes()
    assert gr.options == (("dim", 2), ("eta", "minkowski"), ("jet_order", 3))
    assert ym.options == (("dim", 2), ("jet_order", 3))
    assert override_scenes(ast) == ast
    normal = override_scenes(parse_script("scene c = conformal();"), normal=True)
    assert normal.scenes()[0].options == (("normal", True),)
    try:
        override_scenes(ast, normal=True)
    except ScriptError as e:
        assert e.message == "--normal applies to conformal scenes, not 'g'"
        assert e.line == 1
    else:
        raise AssertionError("--normal was accepted for a gr scene")


def test_main_run_applies_dimension(tmp_path, monkeypatch):
    monkeypatch.setenv("BRST_TRIALS", "1")
    script = tmp_path / "gr.brst"
    out = tmp_path / "gr.json"
    text = SMALL_GR.replace("dim=2", "dim=5") + 'check "gr.v_hat_zero" in g;\n'
    script.write_text(text, encoding="utf-8")
    assert main(["run", str(script), "--dim", "2", "--report", str(out)]) == 0
    assert json.loads(out.read_text(encoding="utf-8"))["scene"]["dim"] == 2


def builtin_anchors():
    anchors = set()
    for kind, dim, normal in [
        ("gr", 2, False),
        ("ym", 2, False),
        ("conformal", 3, False),
        ("conformal", 4, True),
    ]:
        states = {}
        for item in parse_script(builtin_script(kind, dim, normal, 3)).statements:
            _apply(item, states)
        (state,) = states.values()
        anchors |= {c.anchor for c in state.checks}
    return anchors


ANCHOR_TABLES = {**ANCHORS, **GR_ANCHORS, **CONFORMAL_ANCHORS}.values()


def test_every_anchor_comes_from_a_table():
    assert builtin_anchors() <= set(ANCHOR_TABLES)


@pytest.mark.skipif(
    not os.getenv("BRST_ANCHOR_SOURCE"), reason="BRST_ANCHOR_SOURCE is not set"
)
def test_anchors_are_verbatim_quotes():
    text = Path(os.environ["BRST_ANCHOR_SOURCE"]).read_text(encoding="utf-8")
    assert sorted(a for a in set(ANCHOR_TABLES) if a not in text) == []
