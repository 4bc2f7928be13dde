from tamedbsde.cli import main

CONV = """
horizon = 1.0
seed = 7
sde.sigma = 1.0
terminal.coeffs = 0,1
driver.y_poly = 0,0,0,-1
grids = 4,8
paths = 600
basis.size = 4
scheme.1.label = implicit
scheme.1.kind = implicit
scheme.1.taming = none
scheme.2.label = inner
scheme.2.kind = explicit_tamed
scheme.2.taming = inner_proj
scheme.2.exponent = 0.25
output = {out}
"""

POSITIVITY = """
horizon = 1.0
seed = 7
sde.sigma = 1.25
terminal.coeffs = 0,0,1
driver.y_poly = 0,0,-1
driver.m_y = 0
driver.l_y = 1
grids = 10
paths = 500
basis.size = 6
scheme.1.label = outer
scheme.1.kind = explicit_tamed
scheme.1.taming = outer_proj
scheme.1.r0 = 1.5
output = {out}
"""


def write(tmp_path, name, text, out):
    cfg = tmp_path / name
    cfg.write_text(text.format(out=out))
    return str(cfg)


def test_converge_roundtrip(tmp_path, capsys):
    out = tmp_path / "conv.csv"
    cfg = write(tmp_path, "c.cfg", CONV, out)
    assert main(["converge", cfg]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "scheme,N,h,error,wallclock_ms,exploded,seed"
    assert len(lines) == 5
    assert "proxy: implicit+inner" in capsys.readouterr().out


def test_positivity_roundtrip(tmp_path, capsys):
    out = tmp_path / "pos.csv"
    cfg = write(tmp_path, "p.cfg", POSITIVITY, out)
    assert main(["positivity", cfg]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "scheme,i,t,min_Y,max_Y"
    assert len(lines) == 12
    assert "h*L_y^h" in capsys.readouterr().out


def test_tree_oracle_roundtrip(tmp_path):
    out = tmp_path / "tree.csv"
    cfg = write(tmp_path, "t.cfg", POSITIVITY, out)
    assert main(["tree-oracle", cfg]) == 0
    assert out.read_text().splitlines()[0] == "scheme,i,t,min_Y,max_Y"


def test_verify_taming_roundtrip(tmp_path):
    out = tmp_path / "taming.csv"
    cfg = write(tmp_path, "v.cfg", POSITIVITY, out)
    assert main(["verify-taming", cfg]) == 0
    header = out.read_text().splitlines()[0]
    assert header.startswith("taming,N,h,radius")


def test_seed_override_changes_output(tmp_path):
    out_a, out_b, out_c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
    cfg = write(tmp_path, "c.cfg", CONV, "{placeholder}")
    assert main(["converge", cfg, "--out", str(out_a)]) == 0
    assert main(["converge", cfg, "--out", str(out_b), "--seed", "8"]) == 0
    assert main(["converge", cfg, "--out", str(out_c), "--seed", "7"]) == 0
    assert out_a.read_bytes() != out_b.read_bytes()
    assert out_a.read_bytes() == out_c.read_bytes()


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("horizon = -1\n")
    assert main(["converge", str(cfg)]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path):
    assert main(["converge", str(tmp_path / "absent.cfg")]) == 2


def test_unwritable_output_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "c.cfg", CONV, str(tmp_path / "no" / "dir" / "x.csv"))
    assert main(["converge", cfg]) == 3
    assert "i/o error" in capsys.readouterr().err


def test_unknown_scheme_kind_is_config_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(CONV.format(out=tmp_path / "x.csv").replace(
        "scheme.1.kind = implicit", "scheme.1.kind = sideways"))
    assert main(["converge", str(cfg)]) == 2
