import csv
import io
import json

import pytest

from jbb import closedform, cli
from jbb.scenario import load


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def _rows(text):
    return list(csv.reader(io.StringIO("\n".join(l for l in text.splitlines() if not l.startswith("#")))))


def _write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_rates_fig_a(capsys):
    code, out, _ = run(["rates", "--scenario", "fig_a", "--format", "json"], capsys)
    assert code == 0
    s = json.loads(out)["summary"]["JBB_PRIME"]
    assert s["b_net_sum"] == pytest.approx(2.0, abs=0.01)
    assert s["o_net"] == pytest.approx(0.75, abs=0.01)


def test_rates_zero_power(tmp_path, capsys):
    d = load("fig_a").to_dict()
    d["operating_point"] = {"rho_b_db": "-inf", "rho_o": 0.0}
    code, out, _ = run(["rates", "--scenario", _write(tmp_path, d), "--format", "json"], capsys)
    assert code == 0
    s = json.loads(out)["summary"]
    assert s["JBB_PRIME"]["b_net_sum"] == 0 and s["JBB_PRIME"]["o_net"] == 0
    assert s["JBB"]["b_net_sum"] == 0 and s["OA"]["o_net"] == 0


def test_malformed_scenario_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"system": {"M": 100}}')
    out_dir = tmp_path / "out"
    code, out, err = run(["rates", "--scenario", str(p), "--out", str(out_dir)], capsys)
    assert code == 2 and out == "" and "system.K" in err
    assert not out_dir.exists()


def test_bad_flags_exit_2(capsys):
    assert run(["rates", "--scenario", "fig_a", "--threads", "0"], capsys)[0] == 2
    assert run(["rates"], capsys)[0] == 2


def test_curves_deterministic(tmp_path, capsys):
    d = load("fig_a").to_dict()
    d["grid"] = {"ratio_db_min": 0.0, "ratio_db_max": 15.0, "n": 16}
    scn = _write(tmp_path, d)
    outs = []
    for k in range(2):
        code, _, _ = run(["curves", "--scenario", scn, "--out", str(tmp_path / f"o{k}")], capsys)
        assert code == 0
        outs.append({p.name: p.read_bytes() for p in (tmp_path / f"o{k}").iterdir() if p.suffix != ".png"})
    assert outs[0] == outs[1]
    assert (tmp_path / "o0" / "curves.png").stat().st_size > 0
    rows = _rows(outs[0]["curves_b_jbb_prime.csv"].decode())
    assert rows[0] == cli.CURVE_COLUMNS
    meta = outs[0]["curves.json"].decode()
    assert load(scn).sha256() in meta and '"seed": 20240601' in meta
    summary = json.loads(meta)["summary"]
    assert summary["saving_db"] == pytest.approx(3.2, abs=0.3)


def test_curves_fig_e1_saving(tmp_path, capsys):
    d = load("fig_e1").to_dict()
    d["grid"] = {"ratio_db_min": 0.0, "ratio_db_max": 12.0, "n": 7}
    code, out, _ = run(["curves", "--scenario", _write(tmp_path, d), "--format", "json"], capsys)
    assert code == 0
    assert json.loads(out)["summary"]["saving_db"] == pytest.approx(2.6, abs=0.2)


def test_curves_all_infeasible_exit_3(tmp_path, capsys):
    d = load("fig_a").to_dict()
    d["targets"]["net_b_sum"] = 40.0
    d["grid"] = {"ratio_db_min": 0.0, "ratio_db_max": 10.0, "n": 3}
    code, out, err = run(["curves", "--scenario", _write(tmp_path, d)], capsys)
    assert code == 3 and out == ""


def test_sweep_command(capsys):
    code, out, _ = run(["sweep", "--scenario", "fig_e2"], capsys)
    assert code == 0
    rows = _rows(out)
    assert rows[0] == ["rho_o_db", "rho_u_db", "rho_b_db", "feasible"]
    by_o = {}
    for r in rows[1:]:
        by_o.setdefault(r[0], []).append((float(r[1]), float(r[2])))
    for pts in by_o.values():
        assert [u for u, _ in pts] == sorted(u for u, _ in pts)
        assert all(a[1] >= b[1] for a, b in zip(pts, pts[1:]))


def test_sweep_single_point(tmp_path, capsys):
    d = load("fig_e2").to_dict()
    d["sweep"] = {"rho_u_db": [0.0], "rho_o_db": [10.0]}
    code, out, _ = run(["sweep", "--scenario", _write(tmp_path, d)], capsys)
    assert code == 0 and len(_rows(out)) == 2


def test_table1(capsys):
    code, out, _ = run(["table1", "--scenario", "fig_a"], capsys)
    assert code == 0
    rows = _rows(out)
    assert [r[0] for r in rows[1:]] == ["JBB_PRIME", "OA"]
    assert rows[2][-1] == "-inf"


def _small_verify(tmp_path):
    d = load("fig_a").to_dict()
    d["mc"] = {"n_channel": 40000, "n_scalar": 200000, "seed": 3}
    return _write(tmp_path, d)


def test_verify_passes(tmp_path, capsys):
    code, out, _ = run(["verify", "--scenario", _small_verify(tmp_path), "--threads", "1"], capsys)
    assert code == 0
    assert all(r[-1] == "true" for r in _rows(out)[1:])


def test_verify_negative_control(tmp_path, capsys, monkeypatch):
    # a wrong leakage formula must be caught by the Monte Carlo oracle
    monkeypatch.setattr(closedform, "leakage_var", lambda b, g, r: 1.5 * r * (b - g))
    code, out, err = run(["verify", "--scenario", _small_verify(tmp_path), "--threads", "1"], capsys)
    assert code == 4 and "leakage[0]" in err


def test_seed_changes_values_not_verdict(tmp_path, capsys):
    scn = _small_verify(tmp_path)
    outs = []
    for seed in ("11", "12"):
        code, out, _ = run(["verify", "--scenario", scn, "--seed", seed, "--threads", "1", "--format", "json"], capsys)
        assert code == 0
        outs.append(json.loads(out))
    m = [[c["measured"] for c in o["summary"]["checks"]] for o in outs]
    assert m[0] != m[1]
    assert outs[0]["meta"]["seed"] == 11
