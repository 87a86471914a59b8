import json

import numpy as np
import pytest
from PIL import Image

from deepmatch.cli import main
from deepmatch.core import Homography, read_matches, write_homography_file, write_matches
from deepmatch.core import PixelMatch
from deepmatch.evaluation import match_errors

from conftest import multiscale_texture


@pytest.fixture(scope="module")
def image_pair(tmp_path_factory):
    root = tmp_path_factory.mktemp("images")
    tex = multiscale_texture(128, seed=21)
    arr = np.round(tex.data[:, :, 0] * 255).astype(np.uint8)
    path = root / "a.png"
    Image.fromarray(arr, mode="L").save(path)
    return str(path)


@pytest.fixture(scope="module")
def toy_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    rng = np.random.default_rng(0)
    for name in ("i_toy", "v_toy"):
        seq = root / name
        seq.mkdir()
        tex = multiscale_texture(64, seed=hash(name) % 1000)
        arr = np.round(tex.data[:, :, 0] * 255).astype(np.uint8)
        for k in range(1, 7):
            Image.fromarray(arr, mode="L").save(seq / f"{k}.png")
            if k >= 2:
                write_homography_file(seq / f"H_1_{k}", Homography.identity())
    return str(root)


class TestMatchCommand:
    def test_self_pair(self, image_pair, tmp_path):
        out = tmp_path / "matches.txt"
        code = main(["match", "--image-a", image_pair, "--image-b", image_pair,
                     "--out", str(out)])
        assert code == 0
        matches = read_matches(out)
        assert len(matches) > 0
        errs = match_errors(matches, Homography.identity())
        assert float(errs.max()) <= 1e-6
        diag = json.loads((tmp_path / "matches.txt.json").read_text())
        assert diag["final_count"] == len(matches)

    def test_missing_image_b(self, image_pair, tmp_path, capsys):
        code = main(["match", "--image-a", image_pair,
                     "--out", str(tmp_path / "m.txt")])
        assert code == 1
        err = capsys.readouterr().err
        assert "usage" in err.lower()

    def test_tensor_files_without_manifests(self, image_pair, tmp_path):
        code = main(["match", "--image-a", image_pair, "--image-b", image_pair,
                     "--extractor", "tensor_files",
                     "--out", str(tmp_path / "m.txt")])
        assert code == 1

    def test_unreadable_image_is_runtime_error(self, tmp_path):
        missing = str(tmp_path / "none.png")
        code = main(["match", "--image-a", missing, "--image-b", missing,
                     "--out", str(tmp_path / "m.txt")])
        assert code == 2


class TestEvalCommands:
    def test_mma_report_schema(self, toy_dataset, tmp_path):
        report_path = tmp_path / "mma.json"
        code = main(["eval-mma", "--dataset", toy_dataset,
                     "--report", str(report_path)])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["pair_count"] == 10
        for split in ("overall", "illumination", "viewpoint"):
            curve = report["curves"][split]
            assert set(curve) == {str(t) for t in range(1, 11)}
        assert report["mean_match_count"] > 0

    def test_homography_report_schema(self, toy_dataset, tmp_path):
        report_path = tmp_path / "h.json"
        code = main(["eval-homography", "--dataset", toy_dataset,
                     "--report", str(report_path), "--runs", "3"])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["runs"] == 3
        for t in ("1", "3", "5"):
            stats = report["thresholds"][t]
            assert set(stats) == {"mean", "std", "boe", "woe"}

    def test_seed_reproducibility(self, toy_dataset, tmp_path):
        p1, p2 = tmp_path / "r1.json", tmp_path / "r2.json"
        for p in (p1, p2):
            assert main(["eval-mma", "--dataset", toy_dataset,
                         "--report", str(p), "--seed", "7"]) == 0
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_dataset_is_runtime_error(self, tmp_path):
        code = main(["eval-mma", "--dataset", str(tmp_path / "nowhere"),
                     "--report", str(tmp_path / "r.json")])
        assert code == 2


def line_count(svg: str) -> int:
    return svg.count("<line ")


class TestVizCommand:
    def run_viz(self, image_pair, tmp_path, matches, extra=()):
        mfile = tmp_path / "m.txt"
        write_matches(mfile, matches)
        out = tmp_path / "o.svg"
        code = main(["viz", "--image-a", image_pair, "--image-b", image_pair,
                     "--matches", str(mfile), "--out", str(out), *extra])
        return code, out.read_text() if out.exists() else ""

    def test_three_matches(self, image_pair, tmp_path):
        matches = [PixelMatch(float(i), float(i), float(i), float(i))
                   for i in range(3)]
        code, svg = self.run_viz(image_pair, tmp_path, matches)
        assert code == 0
        assert line_count(svg) == 3
        assert svg.count("<image ") == 2

    def test_empty_match_file(self, image_pair, tmp_path):
        code, svg = self.run_viz(image_pair, tmp_path, [])
        assert code == 0
        assert line_count(svg) == 0
        assert svg.count("<image ") == 2

    def test_max_lines_subsample(self, image_pair, tmp_path):
        rng = np.random.default_rng(4)
        matches = [PixelMatch(*rng.uniform(0, 100, 4)) for _ in range(500)]
        code, svg = self.run_viz(image_pair, tmp_path, matches,
                                 extra=["--max-lines", "50"])
        assert code == 0
        assert line_count(svg) == 50

    def test_bad_match_file(self, image_pair, tmp_path):
        mfile = tmp_path / "bad.txt"
        mfile.write_text("not a number line\n")
        out = tmp_path / "o.svg"
        code = main(["viz", "--image-a", image_pair, "--image-b", image_pair,
                     "--matches", str(mfile), "--out", str(out)])
        assert code == 2
        assert not out.exists()
