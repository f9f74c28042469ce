import json
import struct

import numpy as np
import pytest
from scipy.linalg import subspace_angles

from cvodcssp import bounds as bounds_mod
from cvodcssp.cli import main
from cvodcssp.exceptions import MatrixFormatError, ParameterError, ValidationError
from cvodcssp.generators import clustered, generate, lowrank_noise, parse_generator, spectrum
from cvodcssp.matrix_io import load_matrix, read_csv, read_pmat, save_matrix, write_pmat
from cvodcssp.partitioner import PartitionConfig, run_cvod
from cvodcssp.runner import RunConfig, RunReport, render_text, run, verify
from cvodcssp.selectors import SelectorKind, SelectorSpec

from conftest import eig_singular_values

CPQR = SelectorSpec(SelectorKind.CPQR)


class TestMatrixIO:
    def test_single_value_csv(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("2.5\n")
        np.testing.assert_array_equal(read_csv(p), [[2.5]])

    def test_empty_file(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("")
        with pytest.raises(MatrixFormatError, match="empty matrix file"):
            load_matrix(p)

    def test_binary_round_trip_seed_44(self, tmp_path):
        a = np.random.default_rng(44).standard_normal((16, 16))
        save_matrix(tmp_path / "a.pmat", a)
        b = load_matrix(tmp_path / "a.pmat")
        assert b.tobytes() == a.tobytes()

    def test_csv_round_trip_is_exact(self, tmp_path):
        a = np.random.default_rng(45).standard_normal((5, 3))
        save_matrix(tmp_path / "a.csv", a)
        np.testing.assert_array_equal(load_matrix(tmp_path / "a.csv"), a)

    def test_byte_layout(self, tmp_path):
        a = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        write_pmat(tmp_path / "a.bin", a)
        expected = b"PMAT1" + struct.pack("<QQ", 2, 3) + struct.pack("<6d", 1, 4, 2, 5, 3, 6)
        assert (tmp_path / "a.bin").read_bytes() == expected
        # no extension: format detected from the magic bytes
        np.testing.assert_array_equal(load_matrix(tmp_path / "a.bin"), a)

    def test_ragged_csv(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n3\n")
        with pytest.raises(MatrixFormatError, match="line 2"):
            read_csv(p)

    def test_unparseable_csv(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n3,x\n")
        with pytest.raises(MatrixFormatError, match="line 2"):
            read_csv(p)

    def test_nan(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,nan\n")
        with pytest.raises(ValidationError):
            read_csv(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "a.pmat"
        p.write_bytes(b"PMAT2" + struct.pack("<QQd", 1, 1, 1.0))
        with pytest.raises(MatrixFormatError, match="magic"):
            read_pmat(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "a.pmat"
        p.write_bytes(b"PMAT1" + struct.pack("<QQ", 2, 2) + struct.pack("<3d", 1, 2, 3))
        with pytest.raises(MatrixFormatError, match="size mismatch"):
            read_pmat(p)

    def test_truncated_header(self, tmp_path):
        p = tmp_path / "a.pmat"
        p.write_bytes(b"PMAT1" + b"\x01\x00")
        with pytest.raises(MatrixFormatError, match="header"):
            read_pmat(p)


class TestGenerators:
    def test_spectrum(self):
        a = spectrum([3.0, 2.0, 1.0], seed=1)
        assert a.shape == (3, 3)
        np.testing.assert_allclose(eig_singular_values(a), [3, 2, 1], atol=1e-10)

    def test_spectrum_rectangular(self):
        a = spectrum([4.0, 0.5], m=6, n=5, seed=2)
        np.testing.assert_allclose(eig_singular_values(a)[:2], [4, 0.5], atol=1e-10)
        assert np.linalg.matrix_rank(a) == 2

    def test_lowrank_exact_rank(self):
        a = lowrank_noise(10, 12, 4, 0.0, seed=3)
        s = eig_singular_values(a)
        assert s[3] > 1e-6 * s[0] and s[4] <= 1e-7 * s[0]
        assert np.linalg.matrix_rank(a) == 4

    def test_clustered_principal_angles(self):
        a = clustered(3, 2, angle=60.0, per_cluster=8, seed=4)
        # the columns are shuffled; an exact partition recovers each cluster's span
        runs = [run_cvod(a, PartitionConfig(k=3, r=6, seed=seed)) for seed in range(10)]
        p, trace = min(runs, key=lambda pt: pt[1].final_energy)
        assert trace.final_energy <= 1e-12 * np.sum(a * a)
        spans = [np.linalg.svd(a[:, s])[0][:, :2] for s in p.sets]
        for i in range(3):
            for j in range(i + 1, 3):
                np.testing.assert_allclose(np.degrees(subspace_angles(spans[i], spans[j])), [60, 60], atol=1e-6)

    def test_clustered_orthogonal_reaches_zero_energy(self):
        a = clustered(3, 2, angle=90.0, per_cluster=10, seed=5)
        best = np.inf
        for seed in range(5):
            _, trace = run_cvod(a, PartitionConfig(k=3, r=6, seed=seed))
            best = min(best, trace.final_energy)
        assert best <= 1e-12 * np.sum(a * a)

    def test_clustered_angle_between_two(self):
        a = clustered(2, 1, angle=30.0, per_cluster=3, seed=6)
        cols = a / np.linalg.norm(a, axis=0)
        cosines = np.abs(cols.T @ cols)
        off = cosines[~np.isclose(cosines, 1.0)]
        np.testing.assert_allclose(off, np.cos(np.radians(30.0)), atol=1e-10)

    def test_parse(self):
        assert parse_generator("clustered:clusters=3,dim=2,angle=90") == (
            "clustered", {"clusters": 3, "dim": 2, "angle": 90.0})
        assert parse_generator("spectrum:sigma=3/2/1") == ("spectrum", {"sigma": [3.0, 2.0, 1.0]})
        assert parse_generator("lowrank_noise:m=4,n=5,true_rank=2,noise=0.1")[1]["noise_sigma"] == 0.1

    def test_unknown(self):
        with pytest.raises(ParameterError):
            generate("gaussian", {})
        with pytest.raises(ParameterError):
            generate("spectrum", {"bogus": 1})


def _config(**kw):
    base = {"selector": CPQR, "r": 4, "k": 2, "generator": "lowrank_noise:m=10,n=16,true_rank=6,noise=0.01"}
    base.update(kw)
    return RunConfig(**base)


class TestRunner:
    def test_none_full_rank_zero_error(self):
        a = np.random.default_rng(7).standard_normal((8, 5))
        rep = run(RunConfig(selector=CPQR, r=5, algorithm="none", input="-"), matrix=a)
        assert rep.id_error <= 1e-12 * np.linalg.norm(a)

    def test_clustered_all_satisfied(self):
        rep = run(_config(generator="clustered:clusters=3,dim=2,angle=90", k=3, r=6))
        assert rep.all_satisfied and rep.exit_code == 0

    def test_deterministic_json(self):
        cfg = _config(selector=SelectorSpec.parse("leverage:seed=5"), algorithm="adapt_cvod", cur=True)
        assert run(cfg).to_json(timing=False) == run(cfg).to_json(timing=False)

    def test_round_trip(self):
        rep = run(_config())
        back = RunReport.from_dict(json.loads(rep.to_json()))
        assert back.to_json() == rep.to_json()

    def test_schema_check(self):
        with pytest.raises(ParameterError):
            RunReport.from_dict({"schema_version": 99})

    def test_verify(self, tmp_path):
        a = np.random.default_rng(8).standard_normal((9, 14))
        save_matrix(tmp_path / "a.pmat", a)
        rep = run(_config(generator=None, input=str(tmp_path / "a.pmat"), cur=True))
        (tmp_path / "r.json").write_text(rep.to_json())
        again = verify(tmp_path / "a.pmat", tmp_path / "r.json")
        assert again.kind == "verify" and again.all_satisfied
        assert [b["lhs"] for b in again.bounds] == pytest.approx([b["lhs"] for b in rep.bounds], rel=1e-9)

    def test_verify_rejects_other_matrix(self, tmp_path):
        a = np.random.default_rng(9).standard_normal((6, 8))
        save_matrix(tmp_path / "a.pmat", a)
        rep = run(_config(generator=None, input=str(tmp_path / "a.pmat"), r=3))
        (tmp_path / "r.json").write_text(rep.to_json())
        save_matrix(tmp_path / "b.pmat", a + 1.0)
        with pytest.raises(ParameterError, match="does not match"):
            verify(tmp_path / "b.pmat", tmp_path / "r.json")

    def test_text_uses_one_based_indices(self):
        rep = run(_config())
        line = next(x for x in render_text(rep).splitlines() if x.startswith("selected"))
        shown = [int(t) for t in line.split(":")[1].split()]
        assert shown == [j + 1 for j in rep.selection["global_indices"]]

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            RunConfig(selector=CPQR, r=2)
        with pytest.raises(ParameterError):
            RunConfig(selector=CPQR, r=2, input="a", generator="b")
        with pytest.raises(ParameterError):
            _config(algorithm="adapt_cvod", dims=(2, 2))


def _near_singular(tmp_path):
    # third singular value sits between the rank cutoff and the independence floor
    a = np.zeros((3, 4))
    a[0, 0], a[1, 1], a[2, 2], a[0, 3] = 1.0, 1.0, 1e-12, 0.5
    path = tmp_path / "a.csv"
    save_matrix(path, a)
    return str(path)


class TestCli:
    def test_run_json_to_stdout(self, capsys):
        code = main(["run", "--generate", "spectrum:sigma=3/2/1", "--algorithm", "none", "--r", "3"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["id_error"] <= 1e-12 and out["schema_version"] == 1

    def test_run_report_file_and_verify(self, tmp_path, capsys):
        main(["generate", "--kind", "clustered", "--clusters", "3", "--dim", "2", "--output",
              str(tmp_path / "a.pmat"), "--seed", "3"])
        code = main(["run", "--input", str(tmp_path / "a.pmat"), "--algorithm", "adapt-cvod", "--k", "3",
                     "--r", "6", "--selector", "deim", "--seed", "7", "--report", str(tmp_path / "r.json")])
        assert code == 0
        assert "selected" in capsys.readouterr().out
        saved = json.loads((tmp_path / "r.json").read_text())
        assert saved["config"]["algorithm"] == "adapt_cvod"
        code = main(["verify", "--input", str(tmp_path / "a.pmat"), "--report", str(tmp_path / "r.json"),
                     "--format", "text"])
        assert code == 0
        assert "[FAIL]" not in capsys.readouterr().out

    def test_strict_rank_deficient_block(self, tmp_path, capsys):
        path = _near_singular(tmp_path)
        code = main(["run", "--input", path, "--algorithm", "none", "--r", "3", "--strict"])
        assert code == 1
        assert "independent directions" in capsys.readouterr().err

    def test_non_strict_records_event(self, tmp_path, capsys):
        path = _near_singular(tmp_path)
        code = main(["run", "--input", path, "--algorithm", "none", "--r", "3"])
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        assert out["selection"]["r_achieved"] == 2 and out["selection"]["events"]

    def test_falsified_bound_exit_2(self, monkeypatch, capsys):
        real = bounds_mod.check_all

        def broken(*args, **kwargs):
            reps = real(*args, **kwargs)
            reps[0].satisfied = False
            return reps

        monkeypatch.setattr(bounds_mod, "check_all", broken)
        code = main(["run", "--generate", "spectrum:sigma=3/2/1", "--r", "2", "--k", "2"])
        assert code == 2

    def test_missing_file(self, tmp_path, capsys):
        assert main(["run", "--input", str(tmp_path / "nope.csv"), "--r", "1"]) == 1
        assert "error" in capsys.readouterr().err

    def test_sampling_selector_inherits_seed(self, capsys):
        main(["run", "--generate", "spectrum:sigma=3/2/1", "--r", "2", "--selector", "norm", "--seed", "11",
              "--algorithm", "none"])
        out = json.loads(capsys.readouterr().out)
        assert out["config"]["selector"] == "norm_sampling:seed=11"

    def test_env_tolerance_override(self, monkeypatch, capsys):
        monkeypatch.setenv("CVODCSSP_TOL_BOUND_RTOL", "0.001")
        main(["run", "--generate", "spectrum:sigma=3/2/1", "--r", "2", "--algorithm", "none"])
        out = json.loads(capsys.readouterr().out)
        assert out["tolerances"]["bound_rtol"] == 0.001

    def test_generate_spectrum_csv(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["generate", "--kind", "spectrum", "--sigma", "5,1", "--output", str(out)]) == 0
        np.testing.assert_allclose(eig_singular_values(load_matrix(out)), [5, 1], atol=1e-10)

    def test_generate_lowrank_needs_shape(self, tmp_path, capsys):
        assert main(["generate", "--kind", "lowrank_noise", "--output", str(tmp_path / "x.pmat")]) == 1

    def test_bad_dims(self, capsys):
        assert main(["run", "--generate", "spectrum:sigma=3/2/1", "--r", "2", "--dims", "a,b"]) == 1
