import json
from fractions import Fraction as F
from pathlib import Path

import pytest

from portauction import cli
from portauction.scenario import (
    ScenarioParseError,
    ScenarioValidationError,
    builtin_scenario,
    load_scenario,
    loads_scenario,
)

pytestmark = pytest.mark.filterwarnings("ignore::portauction.model.ModelWarning")

GOLDEN = Path(__file__).parent / "golden"


def _example1_text():
    import importlib.resources as res

    return res.files("portauction").joinpath("scenarios/example1.json").read_text()


def test_builtin_scenarios_load():
    sc = builtin_scenario("example1")
    assert sc.name == "example1"
    assert tuple(sc.weights) == (F(3, 5), F(2, 5))
    assert sc.strategies["L1"].round1.value == F(27, 10_000)
    assert len(sc.digest) == 64

    sc = builtin_scenario("table1")
    assert tuple(sc.weights) == (
        F(18, 100), F(22, 100), F(18, 100), F(20, 100), F(22, 100)
    )
    with pytest.raises(FileNotFoundError):
        builtin_scenario("nope")


def test_load_scenario_from_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(_example1_text())
    sc = load_scenario(p)
    assert sc.source_path == str(p)
    assert sc.digest == builtin_scenario("example1").digest


def test_parse_error_has_line_context():
    with pytest.raises(ScenarioParseError, match="line"):
        loads_scenario("{ not json }")


def test_unknown_keys_rejected():
    data = json.loads(_example1_text())
    data["reserve_price"] = 3
    with pytest.raises(ScenarioValidationError, match="reserve_price"):
        loads_scenario(json.dumps(data))


def test_partition_error_names_security():
    data = json.loads(_example1_text())
    data["portfolio"]["packages"][0] = [5, 0, 0]
    with pytest.raises(ScenarioValidationError, match="S1"):
        loads_scenario(json.dumps(data))


def test_validation_errors_accumulate():
    data = json.loads(_example1_text())
    data["rule"] = "third-price"
    data["brokers"][0]["package_index"] = 9
    del data["strategies"]["L2"]
    try:
        loads_scenario(json.dumps(data))
    except ScenarioValidationError as e:
        msgs = "\n".join(e.errors)
        assert "rule" in msgs
        assert "package_index 9" in msgs
        assert "L2" in msgs
    else:
        pytest.fail("expected ScenarioValidationError")


def test_bps_quantities_parse_exactly():
    sc = builtin_scenario("table1")
    assert sc.strategies["L3"].round1.value == F(36, 10_000)
    assert sc.brokers[0].valuation == 0


def run_cli(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_run_table(capsys):
    code, out, _ = run_cli(["run", "example1", "--rule", "dnvcg"], capsys)
    assert code == 0
    assert "winner: coalition" in out
    assert "L1=28, L2=13" in out


def test_cli_run_records(capsys):
    code, out, _ = run_cli(["run", "example1", "--format", "records"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["command"] == "run"
    assert doc["engine_version"]
    assert doc["scenario_digest"]
    assert doc["seed"] == 7
    assert doc["result"]["outcome"]["winner"] == "coalition"


def test_cli_simulate(capsys, tmp_path):
    out_path = tmp_path / "m.json"
    code, _, _ = run_cli(
        ["simulate", "powerlaw", "-n", "50", "--seed", "3",
         "--format", "records", "--out", str(out_path)],
        capsys,
    )
    assert code == 0
    doc = json.loads(out_path.read_text())
    assert doc["result"]["replications"] == 50
    assert 0 <= doc["result"]["coalition_win_rate"] <= 1


def test_cli_equilibrium_sweep(capsys):
    code, out, _ = run_cli(
        ["equilibrium", "powerlaw", "--sweep", "shape=2,3;q=2;alpha_bps=15"],
        capsys,
    )
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("rule,shape,q,alpha_bps,bid_bps")
    assert len(lines) == 3
    for row in lines[1:]:
        bid = float(row.split(",")[4])
        assert abs(bid - 15.0) < 1e-6


def test_cli_validate(capsys):
    code, out, _ = run_cli(["validate", "table1"], capsys)
    assert code == 0
    assert "valid" in out


def test_cli_exit_codes(capsys, tmp_path):
    code, _, err = run_cli(["run", "missing-file.json"], capsys)
    assert code == 3
    assert "parse error" in err

    bad = tmp_path / "bad.json"
    bad.write_text("{")
    code, _, err = run_cli(["run", str(bad)], capsys)
    assert code == 3

    invalid = tmp_path / "invalid.json"
    data = json.loads(_example1_text())
    data["rule"] = "nope"
    invalid.write_text(json.dumps(data))
    code, _, err = run_cli(["run", str(invalid)], capsys)
    assert code == 4
    assert "validation error" in err

    with pytest.raises(SystemExit) as exc:
        cli.main(["run"])  # argparse usage error
    assert exc.value.code == 2

    code, _, err = run_cli(
        ["reproduce", "example1", "--out", str(tmp_path / "no-such-dir" / "x.txt")],
        capsys,
    )
    assert code == 5  # runtime failure (unwritable output path)


def test_cli_equilibrium_needs_distribution(capsys):
    code, _, err = run_cli(["equilibrium", "example1"], capsys)
    assert code == 4
    assert "distribution" in err


# value-level anchors so a wrongly regenerated golden file cannot pass
GOLDEN_TOKENS = {
    "example1": ("nvcg    27        14.5      22", "dnvcg   28        13        22"),
    "example2": ("24.08", "25.77", "delta: 10"),
    "figure1": ("frontier segment: (25, 17.5) -> (30, 10)",
                "nvcg point: (27, 14.5)  [on frontier]"),
    "figure2": ("(21, 22.55)", "(23, 25)"),
}


@pytest.mark.parametrize("target", ["example1", "example2", "figure1", "figure2"])
def test_reproduce_golden_files(target, capsys):
    code, out, _ = run_cli(["reproduce", target], capsys)
    assert code == 0
    golden = (GOLDEN / f"{target}.txt").read_bytes()
    assert out.encode() == golden
    for token in GOLDEN_TOKENS[target]:
        assert token in out


def test_reproduce_records_content(capsys):
    code, out, _ = run_cli(["reproduce", "example2", "--format", "records"], capsys)
    assert code == 0
    doc = json.loads(out)
    rec = doc["result"]
    assert rec["nvcg_bps"] == pytest.approx([23.888888888888889, 22.363636363636363,
                                             25.888888888888889, 25.5,
                                             27.363636363636363])
    assert rec["dnvcg_bps"][1] == pytest.approx(22.55718475073314)
    assert any("25.55" in a for a in rec["annotations"])


def test_reproduce_figure2_includes_pinned_point(capsys):
    code, out, _ = run_cli(["reproduce", "figure2"], capsys)
    assert code == 0
    assert "(21, 22.55)" in out
    assert "annotations" not in out  # computed series matches the plot data
