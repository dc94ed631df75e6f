import json
import math

import numpy as np
import pytest

from ltmoments import generator_to_json
from ltmoments.cli import main, parse_kernel_spec


def run(argv):
    return main(argv)


def test_kernel_grammar_families():
    kernel, gen = parse_kernel_spec("pure-escape:q=2")
    assert kernel.q == 2.0
    assert gen.n_states == 2
    kernel, gen = parse_kernel_spec("two-state:a=1,b=3")
    assert (kernel.a, kernel.b) == (1.0, 3.0)
    kernel, gen = parse_kernel_spec("constant-one")
    assert gen.n_states == 1
    kernel, gen = parse_kernel_spec("poly-tail:alpha=1.5,t0=2")
    assert gen is None
    kernel, gen = parse_kernel_spec("difference-walk:d=1,radius=3")
    assert gen.n_states == 7


def test_solve_against_closed_form(tmp_path):
    out = tmp_path / "run"
    code = run(["solve", "--kernel", "pure-escape:q=2", "--gamma", "5",
                "--horizon", "3", "--target", "1e-6", "--output-dir", str(out)])
    assert code == 0
    lines = (out / "solution.csv").read_text().splitlines()
    last = lines[-1].split(",")
    expected = (5.0 / 3.0) * math.exp(9.0) - 2.0 / 3.0
    assert float(last[0]) == pytest.approx(3.0)
    assert float(last[1]) == pytest.approx(expected, rel=1e-5)


def test_solve_gamma_zero_all_ones(tmp_path):
    out = tmp_path / "run"
    assert run(["solve", "--kernel", "two-state:a=1,b=1", "--gamma", "0",
                "--horizon", "2", "--output-dir", str(out)]) == 0
    rows = [l for l in (out / "solution.csv").read_text().splitlines()
            if l and not l.startswith("#") and not l.startswith("t,")]
    assert all(float(r.split(",")[1]) == 1.0 for r in rows)


def test_solve_ctmc_from_file(tmp_path, two_state_gen):
    gen_path = tmp_path / "gen.json"
    gen_path.write_text(json.dumps(generator_to_json(two_state_gen)))
    out = tmp_path / "run"
    assert run(["solve", "--kernel", "ctmc:file=%s" % gen_path, "--gamma", "1",
                "--horizon", "2", "--output-dir", str(out)]) == 0
    rows = [l for l in (out / "solution.csv").read_text().splitlines()
            if l and not l.startswith("#") and not l.startswith("t,")]
    zs = np.array([float(r.split(",")[1]) for r in rows])
    assert np.all(np.diff(zs) >= -1e-12)


def test_outputs_embed_config_and_are_reproducible(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    argv = ["solve", "--kernel", "pure-escape:q=2", "--gamma", "1", "--horizon", "2"]
    assert run(argv + ["--output-dir", str(out1)]) == 0
    assert run(argv + ["--output-dir", str(out2)]) == 0
    b1 = (out1 / "solution.csv").read_bytes()
    b2 = (out2 / "solution.csv").read_bytes()
    # identical modulo the differing output-dir recorded in the config line
    assert b1.replace(str(out1).encode(), b"") == b2.replace(str(out2).encode(), b"")
    assert b"# config:" in b1


def test_asymptotics_three_regimes(tmp_path):
    for gamma, regime, field, value in ((1.0, "subcritical", "limit", 2.0),
                                        (2.0, "critical", "h_infinity", 0.25),
                                        (5.0, "supercritical", "rate", 3.0)):
        out = tmp_path / ("g%s" % gamma)
        assert run(["asymptotics", "--kernel", "pure-escape:q=2",
                    "--gamma", str(gamma), "--output-dir", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["regime"] == regime
        assert report[field] == pytest.approx(value, rel=1e-6)
        csv_head = (out / "report.csv").read_text().splitlines()
        assert any(l.startswith("gamma,regime,rate,prefactor,limit") for l in csv_head)


def test_asymptotics_with_solution_trajectory(tmp_path):
    out = tmp_path / "run"
    assert run(["solve", "--kernel", "pure-escape:q=2", "--gamma", "5",
                "--horizon", "3", "--output-dir", str(out)]) == 0
    assert run(["asymptotics", "--kernel", "pure-escape:q=2", "--gamma", "5",
                "--solution", str(out / "solution.csv"), "--output-dir", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    traj = report["observed_prefactor_trajectory"]
    assert traj["exp_rate_t_Z"][-1] == pytest.approx(5.0 / 3.0, rel=1e-3)


def test_rate_curve_includes_identity_column(tmp_path):
    out = tmp_path / "run"
    assert run(["rate-curve", "--kernel", "two-state:a=1,b=1",
                "--gammas", "0.5,1,2,4", "--output-dir", str(out)]) == 0
    lines = (out / "rate_curve.csv").read_text().splitlines()
    header = [l for l in lines if l.startswith("gamma,")][0]
    assert header == "gamma,r,second_diff,identity"
    rows = [l for l in lines if l and not l.startswith("#") and not l.startswith("gamma,")]
    for row in rows:
        cells = row.split(",")
        assert cells[0] == cells[-1]


def test_verify_happy_path_and_negative_control(tmp_path, capsys):
    base = ["verify", "--kernel", "two-state:a=1,b=1", "--horizons", "1,2",
            "--replicas", "20000", "--seed", "42"]
    out = tmp_path / "ok"
    assert run(base + ["--gamma", "1", "--output-dir", str(out)]) == 0
    assert (out / "verify.csv").exists()
    out2 = tmp_path / "bad"
    code = run(base + ["--gamma", "1", "--solver-gamma", "1.3", "--output-dir", str(out2)])
    assert code == 4
    out3 = tmp_path / "zero"
    assert run(["verify", "--kernel", "two-state:a=1,b=1", "--horizons", "1,2",
                "--replicas", "200", "--seed", "1", "--gamma", "0",
                "--output-dir", str(out3)]) == 0


def test_verify_refuses_kernel_without_generator(tmp_path):
    code = run(["verify", "--kernel", "poly-tail:alpha=1.5", "--gamma", "1",
                "--output-dir", str(tmp_path)])
    assert code == 2


def test_torus_rate_command(tmp_path):
    out = tmp_path / "run"
    assert run(["torus-rate", "--d", "1", "--gamma", "4", "--output-dir", str(out)]) == 0
    row = (out / "torus_rate.csv").read_text().splitlines()[-1]
    assert float(row.split(",")[-1]) == pytest.approx(math.sqrt(20.0) - 2.0, abs=1e-6)


def test_precondition_exit_code(tmp_path):
    assert run(["solve", "--kernel", "pure-escape:q=-1", "--gamma", "1",
                "--horizon", "2", "--output-dir", str(tmp_path)]) == 2
    assert run(["torus-rate", "--d", "5", "--gamma", "1",
                "--output-dir", str(tmp_path)]) == 2
    assert run(["torus-rate", "--d", "3", "--gamma", "0.5",
                "--output-dir", str(tmp_path)]) == 2
    assert run(["solve", "--kernel", "no-such-family", "--gamma", "1",
                "--horizon", "2", "--output-dir", str(tmp_path)]) == 2
