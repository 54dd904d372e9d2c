import csv
import io
import json
import math

import numpy as np
import pytest

from rmtwalks import cli


@pytest.fixture(autouse=True)
def cache_dir(tmp_path, monkeypatch):
    d = tmp_path / "cache"
    monkeypatch.setenv(cli.CACHE_ENV, str(d))
    return d


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def replay_argv(manifest):
    argv = [manifest["command"]]
    for key, v in manifest["parameters"].items():
        if key == "precision_bits":
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(v, bool):
            if v:
                argv.append(flag)
            continue
        argv += [flag, str(v)]
    return argv


class TestGrid:
    def test_inclusive(self):
        assert cli.parse_grid("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]

    def test_snapping(self):
        g = cli.parse_grid("0:0.3:0.1")
        assert len(g) == 4 and g[-1] == 0.3
        assert cli.parse_grid("-0.3:0.3:0.1")[3] == 0.0

    def test_single_and_degenerate(self):
        assert cli.parse_grid("2.5") == [2.5]
        assert cli.parse_grid("0:0:0") == [0.0]

    @pytest.mark.parametrize("text", ["a:b:c", "0:1", "0:1:0", "1:0:0.5", "0:inf:1"])
    def test_bad(self, text):
        with pytest.raises(cli.InvalidArgumentError):
            cli.parse_grid(text)

    def test_negative_grid_tokens(self):
        assert cli._join_negative_grids(["tw", "--xi", "-4:2:0.5"]) == ["tw", "--xi=-4:2:0.5"]
        assert cli._join_negative_grids(["tw", "--order", "60"]) == ["tw", "--order", "60"]


class TestFormat:
    def test_float_round_trip(self):
        for v in (0.1, 1 / 3, 1e-300, -2.5e17):
            assert float(cli._fmt(v)) == v

    def test_csv_layout(self):
        text = cli.csv_text(["a", "b"], [(1, 0.5), (2, True)])
        assert text == "a,b\n1,0.5\n2,1\n"


class TestDeterminantCommands:
    def test_tw_example(self, tmp_path, capsys):
        out = tmp_path / "tw.csv"
        code, _, _ = run(capsys, "tw", "--xi", "-4:2:0.5", "--order", "120", "--out", str(out))
        assert code == 0
        data = rows(out.read_text())
        assert len(data) == 13
        vals = [float(r["value"]) for r in data]
        assert all(0 <= v <= 1 for v in vals) and np.all(np.diff(vals) >= 0)
        assert b"\r" not in out.read_bytes()

    def test_sine_grid(self, capsys):
        code, text, _ = run(capsys, "sine", "--eta", "0:2:0.25", "--order", "60")
        vals = [float(r["value"]) for r in rows(text)]
        assert code == 0 and len(vals) == 9 and vals[0] == 1.0
        assert np.all(np.diff(vals) <= 0)

    def test_sine_small_eta(self, capsys):
        _, text, _ = run(capsys, "sine", "--eta", "0.01:0.01:0.01")
        v = float(rows(text)[0]["value"])
        assert v == pytest.approx(1 - 0.02 + 4 * math.pi**2 / 9 * 1e-8, abs=1e-8)

    def test_header(self, capsys):
        _, text, _ = run(capsys, "sine", "--eta", "0.5", "--order", "16")
        assert text.splitlines()[0] == "param,value,node_doubling_error,truncation_error"


class TestFinite:
    def test_compare_schema(self, capsys):
        code, text, _ = run(capsys, "finite", "--k", "10", "--event", "edge", "--param", "-2:2:1", "--compare")
        data = rows(text)
        assert code == 0 and len(data) == 5
        assert {"limit", "difference"} <= set(data[0])
        for r in data:
            assert float(r["difference"]) == pytest.approx(float(r["value"]) - float(r["limit"]), abs=1e-15)

    def test_differences_shrink(self, capsys):
        diffs = []
        for k in ("10", "40"):
            _, text, _ = run(capsys, "finite", "--k", k, "--event", "edge", "--param", "0", "--compare")
            diffs.append(abs(float(rows(text)[0]["difference"])))
        assert diffs[1] < diffs[0]

    def test_bulk_empty_window(self, capsys):
        _, text, _ = run(capsys, "finite", "--k", "10", "--event", "bulk", "--param", "0:0:0")
        assert float(rows(text)[0]["value"]) == 1.0

    def test_basis_cache_reused(self, capsys, cache_dir):
        run(capsys, "finite", "--k", "7", "--event", "edge", "--param", "0")
        files = list(cache_dir.iterdir())
        assert len(files) == 1
        mtime = files[0].stat().st_mtime_ns
        run(capsys, "finite", "--k", "7", "--event", "edge", "--param", "1")
        assert files[0].stat().st_mtime_ns == mtime

    def test_k_out_of_range(self, capsys):
        code, _, err = run(capsys, "finite", "--k", "0", "--event", "edge", "--param", "0")
        assert code == 2 and "k must" in err


class TestEquilibrium:
    def test_k10(self, capsys):
        code, text, _ = run(capsys, "equilibrium", "--k", "10")
        r = rows(text)[0]
        assert code == 0
        assert float(r["a"]) == pytest.approx(0.46983571143, abs=1e-10)
        assert float(r["b"]) == pytest.approx(3.1752050, abs=1e-7)
        assert abs(float(r["mass_residual"])) <= 1e-8

    def test_grid(self, capsys):
        _, text, _ = run(capsys, "equilibrium", "--k", "10:30:10")
        assert [int(r["k"]) for r in rows(text)] == [10, 20, 30]


class TestSample:
    ARGS = ("sample", "--mode", "mcmc", "--k", "3", "--n", "400", "--seed", "7", "--burn-in", "200", "--chains", "4")

    def test_byte_identical_reruns(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, *self.ARGS, "--out", str(a))
        run(capsys, *self.ARGS, "--out", str(b), "--workers", "2")
        assert a.read_bytes() == b.read_bytes()

    def test_long_format(self, tmp_path, capsys):
        out = tmp_path / "s.csv"
        run(capsys, "sample", "--mode", "bridge", "--k", "2", "--n", "50", "--seed", "1", "--out", str(out))
        data = rows(out.read_text())
        assert len(data) == 50 * 3
        assert list(data[0]) == ["run_id", "method", "k", "sample_index", "particle_index", "position"]
        assert len({r["run_id"] for r in data}) == 1
        pos = np.array([float(r["position"]) for r in data]).reshape(50, 3)
        assert np.all(np.diff(pos, axis=1) > 0)

    def test_walk_mode(self, capsys):
        code, text, _ = run(capsys, "sample", "--mode", "walk", "--k", "1", "--n", "20", "--seed", "2",
                            "--increments", "bernoulli")
        assert code == 0 and len(rows(text)) == 40

    def test_manifest_and_replay(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
        out = tmp_path / "run.csv"
        run(capsys, *self.ARGS, "--out", str(out))
        man = json.loads(cli.manifest_path(out).read_text())
        assert man["command"] == "sample" and man["seed"] == 7
        assert man["timestamp"] == "2023-11-14T22:13:20Z"
        assert man["outputs"] == [str(out)]
        assert man["diagnostics"]["accepted"] == 400
        again = tmp_path / "again.csv"
        assert cli.main(replay_argv(man) + ["--out", str(again)]) == 0
        assert again.read_bytes() == out.read_bytes()

    def test_replay_determinant_command(self, tmp_path, capsys):
        out = tmp_path / "f.csv"
        run(capsys, "finite", "--k", "6", "--event", "bulk", "--param", "0:1:0.5", "--order", "40", "--out", str(out))
        man = json.loads(cli.manifest_path(out).read_text())
        again = tmp_path / "g.csv"
        cli.main(replay_argv(man) + ["--out", str(again)])
        assert again.read_bytes() == out.read_bytes()

    def test_bridge_k_limit_exit_code(self, capsys):
        code, _, _ = run(capsys, "sample", "--mode", "bridge", "--k", "9", "--n", "5", "--seed", "0")
        assert code == 2


class TestMisc:
    def test_basis_export(self, capsys):
        code, text, _ = run(capsys, "basis", "--k", "3", "--digits", "20")
        assert code == 0 and text.splitlines()[1] == "n alpha beta gamma"

    def test_bad_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["tw", "--bogus"])
        assert exc.value.code == 2

    def test_bad_grid_exit(self, capsys):
        code, _, err = run(capsys, "tw", "--xi", "0:1:0")
        assert code == 2 and "step" in err

    def test_selftest(self, capsys):
        code, text, _ = run(capsys, "selftest")
        assert code == 0
        assert text.count("PASS") == 10
