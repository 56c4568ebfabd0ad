import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from homsim import cli, correlator, ptt
from homsim.interfere import D1, D2
from test_analysis import LONG, SHORT, model_pair

DEFAULT_FLAGS = ["--eta", "0.2", "--v0", "0.85", "--tau-l", "150ns", "--tau-c", "115ps", "--g2sp0", "0.03"]


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# -- model -----------------------------------------------------------------------


def test_model_zero_delay(capsys):
    code, out, _ = run(["model", *DEFAULT_FLAGS, "--df", "0"], capsys)
    assert code == 0
    assert out.splitlines()[0] == "tau_ps,g2_perp,g2_par,v_hom"
    zero = [r for r in rows(out) if float(r["tau_ps"]) == 0.0][0]
    assert float(zero["v_hom"]) == pytest.approx(0.7234, abs=1e-4)


def test_model_beat_period(capsys):
    code, out, _ = run(["model", *DEFAULT_FLAGS, "--df", "50MHz", "--tau-max", "100ns", "--step", "100ps"], capsys)
    assert code == 0
    r = rows(out)
    tau = np.array([float(x["tau_ps"]) for x in r])
    v = np.array([float(x["v_hom"]) for x in r])
    pos = tau > 1_000
    t, y = tau[pos], v[pos]
    crossings = t[1:][np.sign(y[1:]) != np.sign(y[:-1])]
    # two zero crossings per 20 ns period
    assert np.allclose(np.diff(crossings), 10_000, atol=200)


def test_model_no_overlap(capsys):
    _, out, _ = run(["model", *DEFAULT_FLAGS, "--v0", "0"], capsys)
    for r in rows(out):
        assert r["g2_par"] == r["g2_perp"]


def test_model_same_port(capsys):
    _, out, _ = run(["model", *DEFAULT_FLAGS, "--same-port"], capsys)
    zero = [r for r in rows(out) if float(r["tau_ps"]) == 0.0][0]
    assert float(zero["g2_par"]) == pytest.approx(0.5625, abs=1e-12)
    assert float(zero["v_hom"]) == pytest.approx(0.7234, abs=1e-4)


@pytest.mark.parametrize("bad", [["--v0", "1.5"], ["--tau-l", "3 parsecs"], ["--eta", "-1"], ["--step", "0ps"]])
def test_model_invalid(bad, capsys):
    code, _, err = run(["model", *bad], capsys)
    assert code == 2
    assert "homsim:" in err


def test_model_writes_file(tmp_path, capsys):
    out = tmp_path / "curve.csv"
    assert run(["model", "-o", str(out)], capsys)[0] == 0
    assert b"\r" not in out.read_bytes()


def test_argparse_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["model", "--eta"])
    assert exc.value.code == 2


# -- simulate ------------------------------------------------------------------------


def write_config(tmp_path, **synth):
    doc = {
        "seed": 5,
        "synth": {"rate_laser_hz": 2e5, "rate_sp_hz": 1e6, "duration": "10ms", **synth},
        "interferometer": {"engine": "kernel", "v0": 0.85},
    }
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return p


def test_simulate_empty(tmp_path, capsys):
    cfg = write_config(tmp_path, duration=0)
    out = tmp_path / "e.ptt"
    code, stdout, _ = run(["simulate", str(cfg), "-o", str(out)], capsys)
    assert code == 0
    man = json.loads(stdout)
    assert man["counts"] == {"D1": 0, "D2": 0}
    f = ptt.read_ptt(out)
    assert len(f) == 0 and out.stat().st_size == 24


def test_simulate_byte_identical(tmp_path, capsys):
    cfg = write_config(tmp_path)
    a, b = tmp_path / "a.ptt", tmp_path / "b.ptt"
    ma = run(["simulate", str(cfg), "-o", str(a)], capsys)[1]
    mb = run(["simulate", str(cfg), "-o", str(b)], capsys)[1]
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(ma)["seed"] == 5
    assert json.loads(ma)["counts"] == json.loads(mb)["counts"]
    c = tmp_path / "c.ptt"
    run(["simulate", str(cfg), "-o", str(c), "--seed", "6"], capsys)
    assert c.read_bytes() != a.read_bytes()


def test_simulate_env_seed(tmp_path, capsys, monkeypatch):
    doc = {"synth": {"duration": "1ms"}}
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    monkeypatch.setenv("HOMSIM_SEED", "77")
    _, out, _ = run(["simulate", str(p), "-o", str(tmp_path / "x.ptt")], capsys)
    assert json.loads(out)["seed"] == 77


def test_simulate_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"interferometer": {"amp_overlap": 0.3}}))
    assert run(["simulate", str(bad), "-o", str(tmp_path / "x.ptt")], capsys)[0] == 2
    bad.write_text("{not json")
    assert run(["simulate", str(bad), "-o", str(tmp_path / "x.ptt")], capsys)[0] == 2
    cfg = write_config(tmp_path, duration="1ms")
    assert run(["simulate", str(cfg), "-o", str(tmp_path / "missing" / "x.ptt")], capsys)[0] == 3
    assert run(["simulate", str(tmp_path / "nope.json"), "-o", str(tmp_path / "x.ptt")], capsys)[0] == 3


# -- correlate ---------------------------------------------------------------------------


def test_correlate_poisson_flat(tmp_path, capsys):
    cfg = write_config(tmp_path, rate_laser_hz=2e6, rate_sp_hz=0, duration="200ms")
    f = tmp_path / "p.ptt"
    run(["simulate", str(cfg), "-o", str(f)], capsys)
    out = tmp_path / "h.csv"
    code, _, _ = run(["correlate", str(f), "--bin", "1ns", "--tau-max", "50ns", "-o", str(out)], capsys)
    assert code == 0
    h = correlator.read_histogram_csv(out)
    assert h.g2.mean() == pytest.approx(1.0, abs=0.01)
    assert np.all(np.abs(h.g2 - 1) < 5 * h.sigma)


def test_correlate_auto_antibunching(tmp_path, capsys):
    cfg = write_config(tmp_path, rate_laser_hz=0, rate_sp_hz=2e7, duration="100ms")
    f = tmp_path / "s.ptt"
    run(["simulate", str(cfg), "-o", str(f)], capsys)
    code, out, _ = run(["correlate", str(f), "--auto", "--channel", "D1", "--bin", "20ps", "--tau-max", "2ns"], capsys)
    assert code == 0
    r = rows(out)
    tau = np.array([int(x["tau_ps"]) for x in r])
    g2 = np.array([float(x["g2"]) for x in r])
    assert g2[tau == 0][0] < 0.3 and g2[tau == -20][0] < 0.3
    assert np.mean(g2[np.abs(tau) > 1500]) == pytest.approx(1.0, abs=0.05)


def test_correlate_empty_file(tmp_path, capsys):
    f = tmp_path / "e.ptt"
    ptt.write_ptt(f, ptt.records_from_channels({}))
    code, out, _ = run(["correlate", str(f)], capsys)
    assert code == 0
    assert out == "tau_ps,counts,g2,sigma\n"


def test_correlate_malformed(tmp_path, capsys):
    f = tmp_path / "bad.ptt"
    f.write_bytes(b"NOPE" + bytes(20))
    assert run(["correlate", str(f)], capsys)[0] == 4
    rec = np.zeros(2, ptt.RECORD_DTYPE)
    rec["ticks"] = [10, 2]
    ptt.write_ptt(f, rec)
    assert run(["correlate", str(f)], capsys)[0] == 4
    assert run(["correlate", str(tmp_path / "missing.ptt")], capsys)[0] == 3


# -- fit -----------------------------------------------------------------------------------


def write_pair(tmp_path, tag, pair):
    paths = []
    for name, h in zip(("perp", "par"), pair):
        p = tmp_path / f"{tag}_{name}.csv"
        correlator.write_histogram_csv(h, p)
        paths.append(str(p))
    return paths


def test_fit_noiseless(tmp_path, capsys):
    from homsim.model import ModelParams

    truth = ModelParams(delta_f_hz=10e6)
    s = write_pair(tmp_path, "s", model_pair(truth, *SHORT))
    l = write_pair(tmp_path, "l", model_pair(truth, *LONG))
    init = tmp_path / "init.json"
    init.write_text(json.dumps({"eta": 0.2, "v0": 0.7, "tau_l_ps": 120000, "tau_c_ps": 100, "g2_sp0": 0.05, "delta_f_hz": 1.01e7}))
    out = tmp_path / "fit.json"
    code, _, err = run(["fit", "--perp", s[0], "--par", s[1], "--perp", l[0], "--par", l[1], "--init", str(init), "-o", str(out)], capsys)
    assert code == 0, err
    doc = json.loads(out.read_text())
    assert {"params", "stderr", "chi2_reduced", "converged", "n_iter"} <= doc.keys()
    assert doc["converged"]
    for k in ("v0", "tau_l_ps", "tau_c_ps", "g2_sp0", "delta_f_hz"):
        assert doc["params"][k] == pytest.approx(getattr(truth, k), rel=1e-6)
    assert doc["v_hom0"] == pytest.approx(0.7234, abs=1e-4)


def test_fit_mismatched_binning(tmp_path, capsys):
    from homsim.model import ModelParams

    a = write_pair(tmp_path, "a", model_pair(ModelParams(), 10, 1000))
    b = write_pair(tmp_path, "b", model_pair(ModelParams(), 20, 1000))
    assert run(["fit", "--perp", a[0], "--par", b[1]], capsys)[0] == 2
    assert run(["fit", "--perp", a[0], "--par", a[1], "--free", "v0,bogus"], capsys)[0] == 2


def test_fit_malformed_csv(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("x,y\n1,2\n")
    assert run(["fit", "--perp", str(p), "--par", str(p)], capsys)[0] == 4


def test_scan_eta(capsys):
    code, out, _ = run(["scan-eta", "--eta-step", "0.01"], capsys)
    assert code == 0
    r = rows(out)
    best = max(r, key=lambda x: float(x["v_hom0"]))
    assert float(best["eta"]) == pytest.approx(0.17, abs=1e-9)


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "homsim", "model", "--tau-max", "10ps"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.startswith("tau_ps,g2_perp,g2_par,v_hom\n")
