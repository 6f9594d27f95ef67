import io
import json
from pathlib import Path

import pytest

from physbus.cli import (
    ScenarioRunner,
    ScriptSyntaxError,
    inspect_trace,
    main,
    parse_script,
)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


class TestParseScript:
    def test_one_liner(self):
        script = parse_script("0 plug 1 fan.module.json\n", base_dir=SCENARIOS)
        assert len(script.commands) == 1
        assert script.commands[0].verb == "plug"
        assert script.commands[0].path is not None

    def test_packaged_descriptor_fallback(self, tmp_path):
        script = parse_script("0 plug 1 vibration.module.json\n", base_dir=tmp_path)
        assert script.commands[0].path.name == "vibration.module.json"

    def test_comments_and_blanks(self):
        script = parse_script("# comment\n\n0 unplug 2  # trailing\n")
        assert len(script.commands) == 1

    def test_decreasing_timestamps(self):
        with pytest.raises(ScriptSyntaxError) as err:
            parse_script("10 unplug 1\n5 unplug 2\n")
        assert "line 2" in str(err.value)

    def test_unknown_verb_named(self):
        with pytest.raises(ScriptSyntaxError) as err:
            parse_script("0 wiggle 1\n")
        assert "wiggle" in str(err.value)

    def test_missing_descriptor_file(self, tmp_path):
        with pytest.raises(ScriptSyntaxError) as err:
            parse_script("0 plug 1 nope.module.json\n", base_dir=tmp_path)
        assert "nope" in str(err.value)

    def test_missing_csv(self, tmp_path):
        with pytest.raises(ScriptSyntaxError):
            parse_script("0 load_csv nope.csv\n", base_dir=tmp_path)

    def test_bad_arg_counts(self):
        for line in ["0 plug 1", "0 set 1 2", "0 expect", "0 expect level-equals 1"]:
            with pytest.raises(ScriptSyntaxError):
                parse_script(line + "\n")

    def test_run_until_raises_time_floor(self):
        with pytest.raises(ScriptSyntaxError):
            parse_script("0 run_until 500\n100 unplug 1\n")

    def test_run_until_target_before_command(self):
        with pytest.raises(ScriptSyntaxError):
            parse_script("100 run_until 50\n")

    def test_bad_timestamp(self):
        with pytest.raises(ScriptSyntaxError):
            parse_script("abc unplug 1\n")
        with pytest.raises(ScriptSyntaxError):
            parse_script("-5 unplug 1\n")


class TestRunner:
    def run(self, text: str, seed=None, config=None):
        script = parse_script(text, base_dir=SCENARIOS)
        runner = ScenarioRunner(script, seed=seed, config_doc=config)
        status = runner.run()
        return status, runner

    def test_passing_script(self):
        status, runner = self.run("0 plug 1 fan.module.json\n40 expect registry-contains 1\n")
        assert status == 0
        assert runner.failures == []

    def test_failing_expectation(self):
        status, runner = self.run("0 plug 1 fan.module.json\n40 expect registry-contains 5\n")
        assert status == 1
        assert len(runner.failures) == 1
        assert any("result=fail" in line for line in runner.trace)

    def test_out_of_range_set_rejected_and_level_unchanged(self):
        status, runner = self.run(
            "0 plug 1 fan.module.json\n"
            "40 set 1 0 300\n"
            "60 expect level-equals 1 0 0\n"
        )
        assert status == 0
        assert any("REJECTED set" in line and "ValueOutOfRange" in line for line in runner.trace)

    def test_level_change_assertion_fails_after_rejected_set(self):
        status, _ = self.run(
            "0 plug 1 fan.module.json\n"
            "40 set 1 0 300\n"
            "60 expect level-equals 1 0 255\n"
        )
        assert status == 1

    def test_plug_occupied_rejected(self):
        status, runner = self.run(
            "0 plug 1 fan.module.json\n0 plug 1 vibration.module.json\n"
        )
        assert status == 0
        assert any("REJECTED plug" in line and "SlotOccupied" in line for line in runner.trace)

    def test_config_overrides(self):
        config = {"n_slots": 2, "heartbeat": {"interval_ms": 100, "reply_window_ms": 20}}
        status, runner = self.run(
            "0 plug 2 fan.module.json\n"
            "30 unplug 2\n"
            "900 expect disconnect-detected-by 2 430\n",
            config=config,
        )
        assert status == 0

    def test_map_without_dataset_rejected(self):
        status, runner = self.run("0 map anomaly 1 0\n")
        assert status == 0
        assert any("REJECTED map" in line for line in runner.trace)

    def test_map_rules_file(self, tmp_path):
        rules = tmp_path / "warming.rules.json"
        rules.write_text(
            '[{"column": "anomaly", "address": 1, "var_index": 0},'
            ' {"column": "anomaly", "address": 2, "var_index": 0,'
            '  "domain_min": -0.5, "domain_max": 1.5}]'
        )
        script = tmp_path / "s.script"
        script.write_text(
            "0 plug 1 fan.module.json\n"
            "0 plug 2 vibration.module.json\n"
            f"50 load_csv {SCENARIOS / 'warming.csv'}\n"
            f"50 map {rules}\n"
            "50 replay 100\n"
            "900 expect level-equals 1 0 255\n"
            "900 run_until 1000\n"
        )
        parsed = parse_script(script.read_text(), base_dir=tmp_path)
        runner = ScenarioRunner(parsed)
        assert runner.run() == 0
        assert any("MAP_FILE" in line and "rules=2" in line for line in runner.trace)
        assert sum("source=declared" in line for line in runner.trace) == 1

    def test_map_missing_rules_file(self, tmp_path):
        with pytest.raises(ScriptSyntaxError):
            parse_script("0 map nope.rules.json\n", base_dir=tmp_path)

    def test_determinism(self):
        text = (SCENARIOS / "warming.script").read_text()
        traces = []
        for _ in range(2):
            script = parse_script(text, base_dir=SCENARIOS)
            runner = ScenarioRunner(script, seed=11)
            status = runner.run()
            traces.append((status, "\n".join(runner.trace)))
        assert traces[0] == traces[1]


class TestMainEntry:
    def test_run_exit_codes(self, tmp_path, capsys):
        script = tmp_path / "ok.script"
        script.write_text("0 plug 1 fan.module.json\n40 expect registry-contains 1\n")
        assert main(["run", str(script)]) == 0
        bad = tmp_path / "bad.script"
        bad.write_text("0 plug 1 fan.module.json\n40 expect registry-contains 4\n")
        assert main(["run", str(bad)]) == 1

    def test_parse_error_exit_2(self, tmp_path, capsys):
        script = tmp_path / "broken.script"
        script.write_text("0 frobnicate\n")
        assert main(["run", str(script)]) == 2

    def test_missing_script_exit_2(self):
        assert main(["run", "/does/not/exist.script"]) == 2

    def test_bad_config_exit_2(self, tmp_path):
        script = tmp_path / "ok.script"
        script.write_text("0 unplug 1\n")
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"bogus_key": 1}))
        assert main(["run", str(script), "--config", str(config)]) == 2

    def test_usage_error_exit_2(self, capsys):
        assert main(["frobnicate"]) == 2

    def test_trace_file_written(self, tmp_path):
        script = tmp_path / "s.script"
        script.write_text("0 plug 1 fan.module.json\n20 run_until 30\n")
        trace = tmp_path / "out.trace"
        assert main(["run", str(script), "--trace", str(trace)]) == 0
        assert "SLOT_POWERED" in trace.read_text()

    def test_inspect_summarizes(self, capsys):
        assert main(["inspect", str(SCENARIOS / "figure3.golden.trace")]) == 0
        out = capsys.readouterr().out
        assert "disconnect detections: addr=1 t=2500" in out

    def test_inspect_garbage_exit_2(self, tmp_path):
        junk = tmp_path / "junk.trace"
        junk.write_text("this is not a trace\n")
        assert main(["inspect", str(junk)]) == 2


class TestInspect:
    def test_levels_reconstructed(self):
        runner_lines = [
            "t=10 SLOT_POWERED slot=1 addr=1",
            "t=11 FRAME ID=1 [01 6e 00 ff 08 00]",
            "t=41 FRAME ID=0 [00 73 01 00 80]",
        ]
        out = io.StringIO()
        inspect_trace(runner_lines, out)
        text = out.getvalue()
        assert "addr 1" in text
        assert "level 146" in text
