import datetime as dt
import json
import math

import numpy as np
import pytest

from spotforward.config import load_config, parse_config
from spotforward.model import Constant, RegimeSwitch, ValidationError
from spotforward.output import fmt, paths_table, to_csv, to_json
from spotforward.quotes import HEADER, QuoteRow, annualized_ratio, read_quotes, wedge_stats


def write_quotes(path, rows):
    path.write_text(",".join(HEADER) + "\n" + "".join(",".join(map(str, r)) + "\n" for r in rows))
    return path


class TestQuotes:
    def test_annualized_ratio(self):
        r = QuoteRow(dt.date(2024, 1, 2), 3, 7.0 * math.exp(-0.011), 7.0, 7.0, 7.0)
        assert annualized_ratio(r) == pytest.approx(-0.044, abs=1e-15)

    def test_stats_small(self, tmp_path):
        ratios = [-0.06, -0.04, -0.02]
        rows = [("2024-01-0%d" % (i + 1), 12, math.exp(x), 1.0, 1.0, 1.0) for i, x in enumerate(ratios)]
        st = wedge_stats(read_quotes(write_quotes(tmp_path / "q.csv", rows)))
        assert len(st) == 1 and st[0].tenor_months == 12 and st[0].n == 3
        assert st[0].mean == pytest.approx(-0.04, abs=1e-15)
        assert st[0].median == pytest.approx(-0.04, abs=1e-15)
        assert st[0].q25 == pytest.approx(-0.05, abs=1e-15)
        assert st[0].q75 == pytest.approx(-0.03, abs=1e-15)
        assert st[0].std == pytest.approx(0.02, abs=1e-15)

    def test_single_row_std_zero(self, tmp_path):
        st = wedge_stats(read_quotes(write_quotes(tmp_path / "q.csv", [("2024-01-01", 1, 2.0, 1.0, 1.0, 1.0)])))
        assert st[0].std == 0.0

    def test_bundled_fixture(self):
        from importlib.resources import files
        rows = read_quotes(files("spotforward") / "data" / "quotes_constant_ratio.csv")
        st = wedge_stats(rows)
        assert [s.tenor_months for s in st] == [1, 2, 3, 6, 12]
        for s in st:
            assert round(100 * s.mean, 2) == -4.40

    @pytest.mark.parametrize("row, field", [
        (("2024-01-01", 4, 1.0, 1.0, 1.0, 1.0), "tenor_months"),
        (("2024-01-01", 1, -1.0, 1.0, 1.0, 1.0), "forward_onshore"),
        (("2024-01-01", 1, 1.0, 1.0, 0.0, 1.0), "spot_onshore"),
        (("bad-date", 1, 1.0, 1.0, 1.0, 1.0), "quotes"),
    ])
    def test_bad_rows(self, tmp_path, row, field):
        with pytest.raises(ValidationError) as e:
            read_quotes(write_quotes(tmp_path / "q.csv", [row]))
        assert e.value.field == field

    def test_bad_header(self, tmp_path):
        p = tmp_path / "q.csv"
        p.write_text("date,tenor,a,b,c,d\n")
        with pytest.raises(ValidationError):
            read_quotes(p)


class TestOutput:
    def test_fmt(self):
        assert fmt(0.1) == "0.1"
        assert fmt(1 / 3) == "0.333333333333"
        assert fmt(-2.0) == "-2"
        assert fmt(1e-20) == "0.00000000000000000001"
        assert fmt(True) == "true" and fmt(float("nan")) == "nan" and fmt(None) == ""
        assert fmt(np.int64(3)) == "3"

    def test_csv(self):
        text = to_csv([{"a": 1, "b": "x,y"}], ["a", "b"])
        assert text == 'a,b\n1,"x,y"\n'
        assert to_csv([], ["a"]) == "a\n"

    def test_json_round_trip(self):
        rows = [{"x": np.float64(0.5), "n": np.int64(2), "ok": np.bool_(True), "z": float("nan")}]
        back = json.loads(to_json("cmd", rows))
        assert back == {"command": "cmd", "rows": [{"x": 0.5, "n": 2, "ok": True, "z": None}]}

    def test_paths_table(self):
        assert paths_table({"t": [0, 1], "P": [2, 3]}) == [{"t": 0, "P": 2}, {"t": 1, "P": 3}]


class TestConfig:
    def test_nested_and_dotted_agree(self):
        a = parse_config({"horizon_T": 1, "rho": 1, "cost": {"kind": "constant", "c": 0.5}})
        b = parse_config({"horizon_T": 1, "rho": 1, "cost.kind": "constant", "cost.c": 0.5})
        assert a.params == b.params and a.cost == b.cost == Constant(0.5)

    def test_unknown_key(self):
        with pytest.raises(ValidationError) as e:
            parse_config({"horizon_T": 1, "rho": 1, "cost": {"c": 1}, "bogus": 2})
        assert e.value.field == "bogus"

    def test_missing_and_invalid(self):
        with pytest.raises(ValidationError) as e:
            parse_config({"rho": 1, "cost": {"c": 1}})
        assert e.value.field == "horizon_T"
        with pytest.raises(ValidationError):
            parse_config({"horizon_T": 1, "rho": 1, "cost": {"c": -1}})
        with pytest.raises(ValidationError):
            parse_config({"horizon_T": 1, "rho": "x", "cost": {"c": 1}})

    def test_regime_switch_and_parity_demand(self):
        cfg = parse_config({"horizon_T": 1, "rho": 0.06, "demand": {"d_bar": "parity"},
                            "cost": {"kind": "regime_switch", "c_normal": 0.058, "lambda": 0.5},
                            "onshore": {"c": 0.06}})
        assert cfg.cost == RegimeSwitch(0.058, 0.058, 0.5)
        assert cfg.demand_is_parity

    @pytest.mark.parametrize("name", ["default.yaml", "benchmark.yaml", "picard.yaml", "picard_divergent.yaml"])
    def test_bundled_configs_load(self, name):
        from importlib.resources import files
        load_config(files("spotforward") / "data" / name)

    def test_bad_file(self, tmp_path):
        with pytest.raises(ValidationError):
            load_config(tmp_path / "missing.yaml")
        p = tmp_path / "bad.yaml"
        p.write_text("a: [1,\n")
        with pytest.raises(ValidationError):
            load_config(p)
