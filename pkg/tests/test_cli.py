import numpy as np
import pytest

from tractconn import __version__
from tractconn.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from tractconn.formats.matrix import read_matrix
from tractconn.formats.nifti import load_label_volume
from tractconn.formats.tck import read_tck, write_tck
from tractconn.phantoms import make_phantom, write_phantom
from tractconn.streamline import Tractogram
from tractconn.tracking import DirectionField, save_direction_field


@pytest.fixture(autouse=True)
def single_thread(clean_env):
    clean_env.setenv("TRACTCONN_THREADS", "1")


@pytest.fixture
def files(tmp_path):
    return write_phantom(make_phantom("bar", 2.0), tmp_path / "bar")


def _source(files):
    return ["--source", str(files["source"]), "--label", "1"]


def _connectivity(files, out, *extra):
    return main(
        ["connectivity", *_source(files), "--targets", str(files["targets"]), "--field", str(files["field"]),
         "--out", str(out), *extra]
    )


def test_track_region(files, tmp_path, capsys):
    out = tmp_path / "t.tck"
    argv = ["track", "--field", str(files["field"]), *_source(files), "--kstar", "20", "--noise-deg", "5", "--out", str(out)]
    assert main(argv) == EXIT_OK
    assert len(read_tck(out)) == 20
    assert f"wrote 20 streamlines to {out}" in capsys.readouterr().out
    first = out.read_bytes()
    assert main(argv) == EXIT_OK
    assert out.read_bytes() == first


def test_track_per_voxel(files, tmp_path):
    out = tmp_path / "v.tck"
    argv = ["track", "--algorithm", "per-voxel", "--k", "2", "--field", str(files["field"]), *_source(files), "--out", str(out)]
    assert main(argv) == EXIT_OK
    assert len(read_tck(out)) == 6


def test_missing_input_file(files, tmp_path, capsys):
    argv = ["track", "--field", str(tmp_path / "nope.nii.gz"), *_source(files), "--out", str(tmp_path / "t.tck")]
    assert main(argv) == EXIT_USAGE
    assert "nope.nii.gz" in capsys.readouterr().err


def test_missing_flag(files, capsys):
    assert main(["track", "--field", str(files["field"]), *_source(files)]) == EXIT_USAGE
    assert "--out" in capsys.readouterr().err


def test_bad_choice_is_a_usage_error(files):
    with pytest.raises(SystemExit) as info:
        main(["connectivity", "--algorithm", "fancy"])
    assert info.value.code == EXIT_USAGE


def test_no_command(capsys):
    assert main([]) == EXIT_USAGE


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_proposed_connectivity_csv(files, tmp_path):
    out = tmp_path / "c.csv"
    assert _connectivity(files, out, "--kstar", "50") == EXIT_OK
    assert out.read_text().splitlines() == ["unassigned,7,9"] + ["0,50,50"] * 3
    assert (tmp_path / "c_index.csv").exists()
    assert (tmp_path / "c_provenance.json").exists()


def test_thread_count_does_not_change_results(files, tmp_path):
    outputs = []
    for threads in ("1", "2", "8"):
        out = tmp_path / f"c{threads}.csv"
        assert _connectivity(files, out, "--kstar", "40", "--noise-deg", "20", "--seed", "6", "--threads", threads) == EXIT_OK
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_traditional_last_mode(files, tmp_path):
    out = tmp_path / "trad.csv"
    assert _connectivity(files, out, "--algorithm", "traditional", "--k", "4", "--endpoint-mode", "last") == EXIT_OK
    np.testing.assert_array_equal(read_matrix(out).counts, np.tile([0, 0, 4], (3, 1)))


def test_from_tck_matches_proposed(files, tmp_path):
    tck = tmp_path / "t.tck"
    flags = ["--noise-deg", "10", "--seed", "3"]
    assert main(["track", "--field", str(files["field"]), *_source(files), "--kstar", "30", *flags, "--out", str(tck)]) == 0
    offline = tmp_path / "offline.csv"
    online = tmp_path / "online.csv"
    assert main(["connectivity", "--algorithm", "from-tck", "--tck", str(tck), *_source(files),
                 "--targets", str(files["targets"]), "--out", str(offline)]) == EXIT_OK
    assert _connectivity(files, online, "--kstar", "30", *flags) == EXIT_OK
    assert offline.read_text() == online.read_text()


def test_from_tck_needs_a_tractogram(files, tmp_path, capsys):
    argv = ["connectivity", "--algorithm", "from-tck", *_source(files), "--targets", str(files["targets"]),
            "--out", str(tmp_path / "c.csv")]
    assert main(argv) == EXIT_USAGE
    assert "--tck" in capsys.readouterr().err


@pytest.mark.parametrize("command", ["connectivity", "superres"])
def test_empty_tractogram_is_a_usage_error(files, tmp_path, capsys, command):
    tck = tmp_path / "empty.tck"
    write_tck(Tractogram(), tck)
    source = ["--hi-source", str(files["source"]), "--label", "1"] if command == "superres" else _source(files)
    extra = ["--algorithm", "from-tck"] if command == "connectivity" else []
    argv = [command, *extra, "--tck", str(tck), *source, "--targets", str(files["targets"]),
            "--out", str(tmp_path / "c.csv")]
    assert main(argv) == EXIT_USAGE
    assert "no streamlines" in capsys.readouterr().err


def test_superres_names_the_hi_source_flag(files, tmp_path, capsys):
    argv = ["superres", "--tck", str(tmp_path / "t.tck"), "--label", "1", "--targets", str(files["targets"]),
            "--out", str(tmp_path / "c.csv")]
    assert main(argv) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "--hi-source" in err
    assert "--source" not in err.replace("--hi-source", "")


def test_parcellate(files, tmp_path):
    matrix = tmp_path / "c.csv"
    assert _connectivity(files, matrix, "--kstar", "10") == EXIT_OK
    out = tmp_path / "parcels.nii.gz"
    assert main(["parcellate", "--matrix", str(matrix), *_source(files), "--out", str(out)]) == EXIT_OK
    parcels = load_label_volume(out)
    assert parcels.data[5:8, 2, 2].tolist() == [7, 7, 7]
    assert parcels.labels.tolist() == [7]


def test_parcellate_rejects_other_source(files, tmp_path):
    matrix = tmp_path / "c.csv"
    assert _connectivity(files, matrix, "--kstar", "10") == EXIT_OK
    other = write_phantom(make_phantom("slab", 2.0), tmp_path / "slab")
    argv = ["parcellate", "--matrix", str(matrix), *_source(other), "--out", str(tmp_path / "p.nii.gz")]
    assert main(argv) == EXIT_USAGE


def test_superres(files, tmp_path):
    tck = tmp_path / "t.tck"
    assert main(["track", "--field", str(files["field"]), *_source(files), "--kstar", "40", "--out", str(tck)]) == 0
    hi = write_phantom(make_phantom("bar", 1.0, bar_voxels=6), tmp_path / "hi")
    out = tmp_path / "hi.csv"
    argv = ["superres", "--tck", str(tck), "--hi-source", str(hi["source"]), "--label", "1",
            "--targets", str(files["targets"]), "--verify", "--out", str(out)]
    assert main(argv) == EXIT_OK
    C = read_matrix(out)
    assert C.n_rows == 6
    assert C.provenance.algorithm == "superres"


def test_pieglyph(files, tmp_path):
    matrix = tmp_path / "c.csv"
    assert _connectivity(files, matrix, "--kstar", "10") == EXIT_OK
    names = tmp_path / "names.tsv"
    names.write_text("7\tleft\n9\tright\n")
    out = tmp_path / "slice.svg"
    argv = ["pieglyph", "--matrix", str(matrix), *_source(files), "--slice", "2", "--names", str(names), "--out", str(out)]
    assert main(argv) == EXIT_OK
    svg = out.read_text()
    assert svg.count("<path ") == 6
    assert "7 left" in svg
    argv[argv.index("--slice") + 1] = "9"
    assert main(argv) == EXIT_USAGE


def test_config_file_supplies_defaults(files, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("kstar=12\nnoise-deg=5\n")
    out = tmp_path / "t.tck"
    argv = ["track", "--config", str(cfg), "--field", str(files["field"]), *_source(files), "--out", str(out)]
    assert main(argv) == EXIT_OK
    assert len(read_tck(out)) == 12
    assert read_tck(out).metadata["angular_noise_deg"] == "5.0"
    # flags on the command line win over the file
    assert main(argv + ["--kstar", "3"]) == EXIT_OK
    assert len(read_tck(out)) == 3


@pytest.mark.parametrize("text", ["colour=blue\n", "kstar=many\n", "algorithm=fancy\n"])
def test_bad_config_file(files, tmp_path, text, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(text)
    argv = ["track", "--config", str(cfg), "--field", str(files["field"]), *_source(files), "--out", str(tmp_path / "t.tck")]
    assert main(argv) == EXIT_USAGE
    assert "run.cfg" in capsys.readouterr().err


def test_attempt_cap_is_a_runtime_failure(files, tmp_path, capsys):
    ph = make_phantom("bar", 2.0)
    dead = tmp_path / "dead.nii.gz"
    save_direction_field(DirectionField(np.zeros_like(ph.field.vectors), ph.field.affine), dead)
    argv = ["connectivity", *_source(files), "--targets", str(files["targets"]), "--field", str(dead),
            "--kstar", "2", "--out", str(tmp_path / "c.csv")]
    assert main(argv) == EXIT_RUNTIME
    assert "attempt" in capsys.readouterr().err.lower()


def test_invalid_threads(files, tmp_path):
    assert _connectivity(files, tmp_path / "c.csv", "--threads", "0") == EXIT_USAGE


def test_bench(tmp_path):
    out = tmp_path / "bench.csv"
    argv = ["bench", "--resolutions", "2,1", "--k", "2", "--kstar", "20", "--out", str(out)]
    assert main(argv) == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 5
    assert lines[0].startswith("phantom,resolution_mm,algorithm")
    assert main(["bench", "--resolutions", "1,2", "--out", str(out)]) == EXIT_USAGE
