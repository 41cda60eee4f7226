import math

import numpy as np
import pytest
import yaml

from bistochastic.cli import main
from bistochastic.config import load_plan, plan_from_dict
from bistochastic.errors import SchemaError
from bistochastic.ledger import ReleaseLedger
from bistochastic.matrices import build_matrix, read_matrix, resolve_size, spec_from_dict, spec_to_dict, write_matrix
from bistochastic.panel import protect_period, read_panel

from panels import STATUS, read_body, write_panel, write_plan

DEFAULT = {"status": {"type": "dp_circulant", "epsilon": 1.0}, "income": {"type": "entropy_target", "beta": 0.3}}


@pytest.fixture
def panel(tmp_path):
    paths = write_panel(tmp_path, n=60, periods=3)
    return write_plan(tmp_path, paths, DEFAULT)


class TestGenmat:
    def test_perfect(self, tmp_path, capsys):
        out = tmp_path / "m.txt"
        assert main(["genmat", "--type", "perfect_secrecy", "--n", "4", "--out", str(out)]) == 0
        assert np.all(read_matrix(out) == 0.25)
        assert "beta=1" in capsys.readouterr().out

    def test_dp(self, tmp_path):
        out = tmp_path / "m.txt"
        main(["genmat", "--type", "dp_circulant", "--n", "2", "--epsilon", repr(math.log(9)), "--out", str(out)])
        np.testing.assert_allclose(read_matrix(out), [[0.9, 0.1], [0.1, 0.9]], atol=1e-14)

    def test_entropy_target(self, tmp_path):
        out = tmp_path / "m.txt"
        main(["genmat", "--type", "entropy_target", "--n", "2", "--beta", "0.469", "--out", str(out)])
        np.testing.assert_allclose(read_matrix(out), [[0.9, 0.1], [0.1, 0.9]], atol=2e-6)

    def test_kanon_stdout(self, capsys):
        assert main(["genmat", "--type", "k_anon_blocks", "--partition", "2,4"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("6\n")
        assert "bits=1.66666666666667" in out

    def test_bad_spec(self, capsys):
        assert main(["genmat", "--type", "dp_circulant", "--n", "3", "--epsilon", "-1"]) == 1


class TestPlan:
    def test_load(self, panel):
        plan = load_plan(panel)
        assert [u.name for u in plan.units()] == ["status", "income"]
        assert plan.targets.convention.value == "t2"

    def base(self):
        return {
            "master_seed": 1,
            "attributes": [{"name": "a", "kind": "categorical", "catalog": ["x", "y"]}],
            "periods": [{"t": 1, "input": "f.csv", "matrices": {"a": {"type": "identity"}}}],
        }

    def test_missing_matrix(self):
        d = self.base()
        d["periods"][0]["matrices"] = {}
        with pytest.raises(SchemaError):
            plan_from_dict(d)

    def test_unknown_reference(self):
        d = self.base()
        d["joint_groups"] = [{"attributes": ["a", "b"]}]
        with pytest.raises(SchemaError):
            plan_from_dict(d)

    def test_overlapping_groups(self):
        d = self.base()
        d["attributes"].append({"name": "b", "kind": "categorical", "catalog": ["u"]})
        d["joint_groups"] = [{"attributes": ["a", "b"]}, {"attributes": ["a"]}]
        with pytest.raises(SchemaError):
            plan_from_dict(d)

    def test_numerical_in_group(self):
        d = self.base()
        d["attributes"].append({"name": "b", "kind": "numerical"})
        d["joint_groups"] = [{"attributes": ["a", "b"]}]
        with pytest.raises(SchemaError):
            plan_from_dict(d)

    def test_bad_matrix(self):
        d = self.base()
        d["periods"][0]["matrices"]["a"] = {"type": "entropy_target", "beta": 3}
        with pytest.raises(SchemaError):
            plan_from_dict(d)


class TestProtect:
    def test_all_periods(self, panel, capsys):
        assert main(["protect", "--config", str(panel)]) == 0
        out_dir = panel.parent / "out"
        assert sorted(p.name for p in out_dir.iterdir()) == [
            "ledger_income.json", "ledger_status.json", "release_t1.csv", "release_t2.csv", "release_t3.csv"]
        text = capsys.readouterr().out
        assert "beta_L[t1]" in text and "beta_L[t2]" in text

    def test_header_and_schema(self, panel):
        main(["protect", "--config", str(panel), "--period", "1"])
        out = panel.parent / "out" / "release_t1.csv"
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# bistochastic release period=1 seed_fingerprint=")
        assert lines[1].startswith("# status: spec=")
        assert lines[3] == "id,status,income"
        f = read_panel(out, "id")
        assert all(r[1] in STATUS for r in f.rows)

    def test_identity_is_byte_identical(self, tmp_path):
        paths = write_panel(tmp_path, n=30, periods=2)
        plan = write_plan(tmp_path, paths, {"status": {"type": "identity"}, "income": {"type": "identity"}})
        main(["protect", "--config", str(plan)])
        for t, p in enumerate(paths, start=1):
            assert read_body(tmp_path / "out" / f"release_t{t}.csv") == p.read_text()

    def test_uniform_histogram(self, tmp_path):
        n = 100_000
        path = tmp_path / "w.csv"
        path.write_text("id,status,income\n" + "".join(f"i{i},employed,1\n" for i in range(n)))
        plan = write_plan(tmp_path, [path], {"status": {"type": "perfect_secrecy"}}, income=False)
        assert main(["protect", "--config", str(plan)]) == 0
        rows = read_panel(tmp_path / "out" / "release_t1.csv", "id").rows
        counts = np.array([sum(1 for r in rows if r[1] == s) for s in STATUS])
        sigma = math.sqrt(n * (1 / 3) * (2 / 3))
        assert np.all(np.abs(counts - n / 3) < 4 * sigma)

    def test_numerical_hand_case(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("id,status,income\na,employed,10\nb,inactive,20\n")
        plan = write_plan(tmp_path, [path], {
            "status": {"type": "identity"},
            "income": {"type": "dp_circulant", "epsilon": math.log(9)},
        })
        main(["protect", "--config", str(plan)])
        rows = read_panel(tmp_path / "out" / "release_t1.csv", "id").rows
        assert [float(r[2]) for r in rows] == pytest.approx([11.0, 19.0], abs=1e-12)

    def test_unknown_label_aborts_before_output(self, tmp_path, capsys):
        path = tmp_path / "w.csv"
        path.write_text("id,status,income\na,employed,10\nb,retired,20\n")
        plan = write_plan(tmp_path, [path], DEFAULT)
        assert main(["protect", "--config", str(plan)]) == 1
        assert "retired" in capsys.readouterr().err
        assert not (tmp_path / "out").exists()

    def test_missing_id(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("key,status,income\na,employed,10\n")
        assert main(["protect", "--config", str(write_plan(tmp_path, [path], DEFAULT))]) == 1

    def test_new_arrival_rejected(self, tmp_path):
        p1 = tmp_path / "w1.csv"
        p1.write_text("id,status,income\na,employed,10\nb,employed,20\n")
        p2 = tmp_path / "w2.csv"
        p2.write_text("id,status,income\na,employed,10\nc,employed,20\n")
        plan = write_plan(tmp_path, [p1, p2], DEFAULT)
        assert main(["protect", "--config", str(plan)]) == 1

    def test_repeat_period_needs_revise(self, panel):
        assert main(["protect", "--config", str(panel), "--period", "1"]) == 0
        assert main(["protect", "--config", str(panel), "--period", "1"]) == 1
        assert main(["protect", "--config", str(panel), "--period", "1", "--revise"]) == 0
        led = ReleaseLedger.load(panel.parent / "out" / "ledger_status.json")
        assert led.version == 2 and led.periods == (1,)

    def test_ledger_matches_programmatic(self, panel):
        plan = load_plan(panel)
        for t in (1, 2, 3):
            protect_period(plan, t)
        expected = ReleaseLedger()
        for t in (1, 2, 3):
            spec = resolve_size(spec_from_dict(DEFAULT["status"]), 3)
            # the pipeline loads the persisted ledger, records, then saves
            expected = ReleaseLedger.from_json(expected.to_json())
            expected = expected.record_release(t, build_matrix(spec), 60, spec_to_dict(spec))
        assert (panel.parent / "out" / "ledger_status.json").read_text() == expected.to_json()

    def test_joint_group(self, tmp_path):
        paths = write_panel(tmp_path, n=50, periods=2, region=True)
        plan = write_plan(tmp_path, paths, {
            "status_region": {"type": "perfect_secrecy"},
            "income": {"type": "identity"},
        }, region=True, joint=True)
        assert main(["protect", "--config", str(plan)]) == 0
        led = ReleaseLedger.load(tmp_path / "out" / "ledger_status_region.json")
        assert led.records[0].n_t == 6
        assert led.records[0].beta_t == pytest.approx(1.0)
        rows = read_panel(tmp_path / "out" / "release_t1.csv", "id").rows
        assert {r[1] for r in rows} <= set(STATUS) and {r[3] for r in rows} <= {"north", "south"}

    def test_custom_matrix(self, tmp_path):
        paths = write_panel(tmp_path, n=20, periods=1)
        write_matrix(tmp_path / "status.txt", [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]])
        plan = write_plan(tmp_path, paths, {"status": {"type": "custom", "path": "status.txt"},
                                            "income": {"type": "identity"}})
        assert main(["protect", "--config", str(plan)]) == 0

    def test_custom_matrix_wrong_size(self, tmp_path):
        paths = write_panel(tmp_path, n=20, periods=1)
        write_matrix(tmp_path / "status.txt", [[0.5, 0.5], [0.5, 0.5]])
        plan = write_plan(tmp_path, paths, {"status": {"type": "custom", "path": "status.txt"},
                                            "income": {"type": "identity"}})
        assert main(["protect", "--config", str(plan)]) == 1

    def test_numerical_cap(self, tmp_path, capsys):
        path = tmp_path / "w.csv"
        path.write_text("id,status,income\n" + "".join(f"i{i},employed,1\n" for i in range(5000)))
        plan = write_plan(tmp_path, [path], {"status": {"type": "identity"}, "income": {"type": "identity"}})
        assert main(["protect", "--config", str(plan)]) == 1
        assert "exceeds the cap" in capsys.readouterr().err

    def test_empty_cell_is_absent(self, tmp_path):
        p1 = tmp_path / "w1.csv"
        p1.write_text("id,status,income\na,employed,10\nb,employed,20\nc,inactive,30\n")
        p2 = tmp_path / "w2.csv"
        p2.write_text("id,status,income\na,employed,\nb,,20\nc,inactive,30\n")
        plan = write_plan(tmp_path, [p1, p2], {"status": {"type": "perfect_secrecy"}, "income": {"type": "perfect_secrecy"}})
        assert main(["protect", "--config", str(plan)]) == 0
        rows = read_panel(tmp_path / "out" / "release_t2.csv", "id").rows
        assert rows[0][2] == "" and rows[1][1] == ""
        assert float(rows[1][2]) == pytest.approx(25.0)
        led = ReleaseLedger.load(tmp_path / "out" / "ledger_income.json")
        assert [r.n_t for r in led.records] == [3, 2]
        assert [r.active_count for r in ReleaseLedger.load(tmp_path / "out" / "ledger_status.json").records] == [3, 2]


class TestLedgerCommand:
    def example_ledger(self, tmp_path):
        led = ReleaseLedger().record_release(1, [[0.9, 0.1], [0.1, 0.9]]).record_release(2, [[0.7, 0.3], [0.3, 0.7]])
        path = tmp_path / "l.json"
        led.save(path)
        return path

    def test_report(self, tmp_path, capsys):
        assert main(["ledger", "--ledger", str(self.example_ledger(tmp_path))]) == 0
        out = capsys.readouterr().out
        assert "beta_L[t1] = 0.675143" in out
        assert "beta_L[t2] = 0.881291" in out

    def test_targets(self, tmp_path, capsys):
        path = self.example_ledger(tmp_path)
        assert main(["ledger", "--ledger", str(path), "--targets", "0.4,0.4", "--beta-l", "0.6", "--convention", "t1"]) == 0
        assert main(["ledger", "--ledger", str(path), "--targets", "0.5", "--beta-l", "0.6"]) == 2
        out = capsys.readouterr().out
        assert "period 1: beta_t=0.468996 < 0.5" in out

    def test_next(self, tmp_path, capsys):
        path = self.example_ledger(tmp_path)
        main(["ledger", "--ledger", str(path), "--next-target", "0.8", "--n-next", "2"])
        assert "cannot reach" in capsys.readouterr().out
        main(["ledger", "--ledger", str(path), "--next-target", "0.7", "--n-next", "2"])
        assert "needs >= 0.749714 bits" in capsys.readouterr().out

    def test_empty(self, tmp_path, capsys):
        path = tmp_path / "e.json"
        ReleaseLedger().save(path)
        assert main(["ledger", "--ledger", str(path)]) == 0
        out = capsys.readouterr().out
        assert "InsufficientPeriods" in out and "t=" not in out

    def test_corrupt(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{oops")
        assert main(["ledger", "--ledger", str(path)]) == 1

    def test_constant_protection(self, tmp_path, capsys):
        P = build_matrix(spec_from_dict({"type": "dp_circulant", "epsilon": 1, "n": 5}))
        led = ReleaseLedger()
        for t in range(1, 4):
            led = led.record_release(t, P)
        led.save(tmp_path / "c.json")
        main(["ledger", "--ledger", str(tmp_path / "c.json")])
        beta = f"{led.records[0].beta_t:.6f}"
        out = capsys.readouterr().out
        assert f"beta_L[t1] = {beta}" in out and f"beta_L[t2] = {beta}" in out

    def test_from_config(self, panel, capsys):
        main(["protect", "--config", str(panel)])
        assert main(["ledger", "--config", str(panel), "--targets", "1.0", "--beta-l", "1.0"]) == 2
        assert main(["ledger", "--config", str(panel), "--targets", "0.0", "--beta-l", "0.0"]) == 0


class TestSimulateAndVerify:
    def test_simulate(self, capsys):
        assert main(["simulate-table1", "--schedule", "2,2,2,2,2", "--n", "100"]) == 0
        lines = capsys.readouterr().out.splitlines()[2:]
        pcts = [ln.split()[2:4] for ln in lines]
        assert all(p[1] == p[0] for p in pcts[1:])

    def test_simulate_cross_section(self, capsys):
        main(["simulate-table1", "--schedule", "3,2,1.5,1,0.5", "--cross-section", "42,70,83,93,98"])
        out = capsys.readouterr().out
        assert "T=2 cross=70% traj=56%" in out and "T=5 cross=98% traj=77%" in out

    def test_verify(self, capsys):
        assert main(["verify", "--trials", "20"]) == 0
        first = capsys.readouterr().out
        assert "oracle: PASS" in first
        main(["verify", "--trials", "20"])
        assert capsys.readouterr().out == first

    def test_verify_faulty_matrix(self, tmp_path, capsys):
        path = tmp_path / "bad.txt"
        path.write_text("2\n0.91 0.1\n0.1 0.9\n")
        assert main(["verify", "--matrix", str(path), "--trials", "5"]) == 1
        assert "validation failure" in capsys.readouterr().out
