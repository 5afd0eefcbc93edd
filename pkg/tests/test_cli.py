import subprocess
import sys

import pytest

from spnbn.cli import UsageError, main, parse_evidence
from spnbn.formats import parse_bn, parse_spn
from spnbn.spn_core import distribution, validate


@pytest.fixture
def run(capsys):
    def _run(*argv):
        code = main([str(a) for a in argv])
        out, err = capsys.readouterr()
        return code, out, err

    return _run


class TestExitCodes:
    def test_success(self, run, data_dir):
        code, out, _ = run("validate", data_dir / "worked.spn")
        assert code == 0
        assert "complete: true" in out and "normal: false" in out

    def test_property_failure_names_node(self, run, data_dir):
        code, out, _ = run("validate", data_dir / "broken.spn")
        assert code == 1
        assert "consistent: false" in out
        assert "offending node 3: consistent" in out

    def test_parse_error(self, run, data_dir):
        code, out, err = run("validate", data_dir / "malformed.spn")
        assert code == 2 and out == ""
        assert err.startswith("error[E105]: 5:1: ")

    def test_missing_file(self, run, tmp_path):
        code, _, err = run("validate", tmp_path / "nope.spn")
        assert code == 2 and err.startswith("error[E900]:")

    @pytest.mark.parametrize("argv", [[], ["frobnicate"], ["gen", "--vars", "2"], ["validate"]])
    def test_usage(self, run, argv):
        code, _, err = run(*argv)
        assert code == 2 and err.startswith("error[E900]:")

    def test_normal_flag(self, run, data_dir, tmp_path):
        assert run("validate", "--normal", data_dir / "worked.spn")[0] == 1
        out = tmp_path / "n.spn"
        assert run("normalize", data_dir / "worked.spn", "-o", out)[0] == 0
        code, stdout, _ = run("validate", "--normal", out)
        assert code == 0 and "normal: true" in stdout

    def test_module_entry_point(self, data_dir):
        proc = subprocess.run(
            [sys.executable, "-m", "spnbn", "partition", str(data_dir / "worked.spn")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0 and proc.stdout.strip() == "3500"


class TestCommands:
    def test_eval_worked_example(self, run, data_dir):
        code, out, _ = run("eval", data_dir / "worked.spn", "--evidence", "X1=x1,X2=x2")
        assert code == 0
        assert out.splitlines() == ["unnormalized: 594", "normalized: 0.16971428571428571"]

    def test_eval_value_indices(self, run, data_dir):
        # value 0 is the positive literal, so this is the same query as above
        _, out, _ = run("eval", data_dir / "worked.spn", "--evidence", "X1=0,X2=0")
        assert out.splitlines()[0] == "unnormalized: 594"
        _, out, _ = run("eval", data_dir / "worked.spn", "--evidence", "X1=1,X2=0")
        assert out.splitlines()[0] == "unnormalized: 306"

    def test_eval_marginal(self, run, data_dir):
        _, out, _ = run("eval", data_dir / "worked.spn", "--evidence", "X1=!x1")
        assert out.splitlines()[0] == "unnormalized: 1130"

    def test_eval_bad_evidence(self, run, data_dir):
        code, _, err = run("eval", data_dir / "worked.spn", "--evidence", "X3=0")
        assert code == 2 and "unknown variable" in err

    def test_partition(self, run, data_dir):
        assert run("partition", data_dir / "worked.spn")[1].strip() == "3500"

    def test_normalize_trace(self, run, data_dir):
        code, out, err = run("normalize", "--trace", data_dir / "worked.spn")
        assert code == 0
        assert validate(parse_spn(out)).normal
        assert "# decompose:" in err and "# reduce_terminal_sums:" in err

    def test_to_bn_and_recover(self, run, data_dir, tmp_path):
        bundle = tmp_path / "worked.bn"
        assert run("to-bn", data_dir / "worked.spn", "-o", bundle)[0] == 0
        assert bundle.read_text() == (data_dir / "worked.bn").read_text()
        code, out, _ = run("recover", bundle)
        assert code == 0
        rec = parse_spn(out)
        ref = parse_spn((data_dir / "worked.spn").read_text())
        assert distribution(rec).max_deviation(distribution(ref)) <= 1e-12

    def test_roundtrip(self, run, data_dir):
        code, out, _ = run("roundtrip", data_dir / "worked.spn")
        assert code == 0 and "pass: true" in out

    def test_roundtrip_rejects_broken(self, run, data_dir):
        code, _, err = run("roundtrip", data_dir / "broken.spn")
        assert code == 1 and err.startswith("error[E401]:")

    def test_gen_is_deterministic(self, run, tmp_path):
        argv = ["gen", "--vars", "4", "--nodes", "40", "--seed", "3", "--mode", "consistent_nondecomposable"]
        first, second = run(*argv)[1], run(*argv)[1]
        assert first == second
        assert validate(parse_spn(first)).complete
        assert run("--seed", "3", "gen", "--vars", "4", "--nodes", "40", "--mode", "consistent_nondecomposable")[1] == first

    def test_gen_bad_config(self, run):
        code, _, err = run("gen", "--vars", "3", "--nodes", "2")
        assert code == 2 and err.startswith("error[E900]:")

    def test_stats(self, run, data_dir):
        code, out, _ = run("stats", data_dir / "worked.spn")
        lines = dict(l.split(": ", 1) for l in out.splitlines())
        assert code == 0
        assert lines["size"] == "29" and lines["normal_size"] == "17"
        assert lines["max_in_degree"] == "1" and lines["floor_half_height"] == "1"
        assert lines["bn_size_bound"].endswith("(holds)")

    def test_stats_broken_skips_bn(self, run, data_dir):
        code, out, _ = run("stats", data_dir / "broken.spn")
        assert code == 0 and "hidden_vars" not in out

    def test_dot_spn(self, run, data_dir):
        code, out, _ = run("dot", data_dir / "worked.spn")
        assert code == 0 and out.startswith("digraph")

    def test_dot_bundle_and_cpd(self, run, data_dir):
        assert "rank=same" in run("dot", data_dir / "worked.bn")[1]
        code, out, _ = run("dot", data_dir / "worked.bn", "--cpd", "X1")
        assert code == 0 and 'label="X1: (0.6, 0.4)"' in out
        assert run("dot", data_dir / "worked.bn", "--cpd", "X9")[0] == 2

    def test_dot_unknown_document(self, run, tmp_path):
        p = tmp_path / "x.txt"
        p.write_text("hello\n")
        code, _, err = run("dot", p)
        assert code == 2 and err.startswith("error[E201]:")

    def test_tolerance_flag(self, run, data_dir):
        assert run("--tolerance", "1e-6", "roundtrip", data_dir / "worked.spn")[0] == 0


class TestEvidence:
    @pytest.fixture
    def spn(self, data_dir):
        return parse_spn((data_dir / "worked.spn").read_text())

    def test_forms(self, spn):
        assert parse_evidence("X1=1, X2=x2", spn) == {"X1": 1, "X2": 0}
        assert parse_evidence("X1=!x1", spn) == {"X1": 1}
        assert parse_evidence("", spn) == {}

    @pytest.mark.parametrize("bad", ["X1", "X1=2", "X1=!0", "X1=maybe", "Q=0"])
    def test_rejects(self, spn, bad):
        with pytest.raises(UsageError):
            parse_evidence(bad, spn)


def test_bundle_fixture_parses(data_dir):
    assert parse_bn((data_dir / "worked.bn").read_text()).hidden_order == ("H_11",)
