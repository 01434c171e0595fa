import json
import math

import numpy as np
import pytest
import torch

from priorlens.blur_synth import NoiseSpec, TrajectoryParams, build_dataset
from priorlens.evaluation import (
    MetricReport,
    evaluate,
    psnr,
    ssim,
    visualize_priors,
)
from priorlens.system import AblationConfig, DeblurSystem, save_system


@pytest.fixture
def toy_dataset(sharp_dir, tmp_path):
    out = tmp_path / "ds"
    build_dataset(
        sharp_dir, out, 4, TrajectoryParams(max_extent=6), NoiseSpec(0.01),
        support=11, seed=5,
    )
    return out


def identity_system():
    """A residual restorer with a zeroed head is exactly the identity map."""
    torch.manual_seed(0)
    system = DeblurSystem(AblationConfig(False, False, False, "none"))
    with torch.no_grad():
        system.net.head[-1].weight.zero_()
        system.net.head[-1].bias.zero_()
    return system.eval()


class TestPsnr:
    def test_constant_offset_closed_form(self):
        a = np.full((32, 32, 3), 0.4)
        b = a + 0.1
        assert abs(psnr(a, b) - 20.0) < 1e-6

    def test_identical_images_capped(self):
        a = np.random.default_rng(0).random((16, 16, 3))
        assert psnr(a, a.copy()) == 100.0

    def test_matches_scripted_oracle(self, rng):
        for _ in range(32):
            a = rng.random((24, 24, 3))
            b = rng.random((24, 24, 3))
            expected = 10.0 * math.log10(1.0 / float(np.mean((a - b) ** 2)))
            assert abs(psnr(a, b) - expected) < 1e-9

    def test_monotone_in_perturbation(self):
        gt = np.random.default_rng(1).random((32, 32, 3)) * 0.8
        values = [psnr(gt + d, gt) for d in (0.01, 0.05, 0.1)]
        assert values[0] > values[1] > values[2]

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            psnr(np.zeros((4, 4, 3)), np.zeros((8, 8, 3)))


class TestSsim:
    def test_self_similarity_is_one(self, rng):
        a = rng.random((32, 32, 3))
        assert abs(ssim(a, a.copy()) - 1.0) < 1e-9

    def test_symmetric(self, rng):
        a = rng.random((24, 24, 3))
        b = rng.random((24, 24, 3))
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-12

    def test_inverted_checkerboard_negative(self):
        tile = np.indices((32, 32)).sum(axis=0) % 2
        a = np.repeat(tile[:, :, None], 3, axis=2).astype(np.float64)
        assert ssim(a, 1.0 - a) < 0.0

    def test_matches_skimage_oracle(self, rng):
        from skimage.metrics import structural_similarity

        for _ in range(32):
            a = rng.random((20, 20, 3))
            b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
            expected = structural_similarity(
                a, b, channel_axis=-1, gaussian_weights=True, sigma=1.5,
                use_sample_covariance=False, data_range=1.0,
            )
            assert abs(ssim(a, b) - expected) < 1e-6

    def test_small_image_rejected(self):
        with pytest.raises(ValueError, match="window"):
            ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


class TestMetricReport:
    def test_aggregate_is_arithmetic_mean(self, rng):
        report = MetricReport(config_digest="x")
        values = []
        for i in range(7):
            p, s = float(rng.uniform(20, 40)), float(rng.uniform(0.5, 1.0))
            report.per_image.append({"name": f"img{i}", "psnr": p, "ssim": s})
            values.append((p, s))
        agg = report.aggregate
        assert abs(agg["mean_psnr"] - np.mean([v[0] for v in values])) < 1e-9
        assert abs(agg["mean_ssim"] - np.mean([v[1] for v in values])) < 1e-9
        assert agg["n"] == 7


class TestEvaluate:
    def test_identity_model_reports_blurry_psnr(self, toy_dataset, tmp_path):
        from priorlens.blur_synth import load_manifest, load_pairs

        ckpt = tmp_path / "identity.pt"
        save_system(ckpt, identity_system())
        report = evaluate(ckpt, toy_dataset)
        manifest, ds_dir = load_manifest(toy_dataset)
        pairs = load_pairs(manifest, ds_dir)
        for entry, (blurry, sharp) in zip(report.per_image, pairs):
            assert abs(entry["psnr"] - psnr(blurry, sharp)) < 1e-9

    def test_report_files_and_determinism(self, toy_dataset, tmp_path):
        ckpt = tmp_path / "identity.pt"
        save_system(ckpt, identity_system())
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        evaluate(ckpt, toy_dataset, out_dir=out1, save_images=True)
        evaluate(ckpt, toy_dataset, out_dir=out2)
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
        assert (out1 / "report.csv").exists()
        assert (out1 / "report.png").exists()
        data = json.loads((out1 / "report.json").read_text())
        assert data["aggregate"]["n"] == 4
        assert data["psnr_convention"]
        deblurred = list(out1.glob("*_deblurred.png"))
        assert len(deblurred) == 4


class TestVisualizePriors:
    def test_writes_one_png_per_level(self, tmp_path, scene64):
        torch.manual_seed(1)
        system = DeblurSystem(AblationConfig())
        paths = visualize_priors((system, {}), scene64, tmp_path, image_id="probe")
        assert [p.split("/")[-1] for p in paths] == [
            "probe_prior_L1.png", "probe_prior_L2.png", "probe_prior_L3.png",
        ]
        from PIL import Image

        sizes = [Image.open(p).size for p in paths]
        assert sizes == [(32, 32), (16, 16), (8, 8)]

    def test_upscale_factor(self, tmp_path, scene64):
        torch.manual_seed(1)
        system = DeblurSystem(AblationConfig())
        paths = visualize_priors((system, {}), scene64, tmp_path, image_id="z", upscale=4)
        from PIL import Image

        assert Image.open(paths[0]).size == (128, 128)

    def test_constant_feature_warns_and_renders(self, tmp_path, scene64, caplog):
        torch.manual_seed(1)
        system = DeblurSystem(AblationConfig())
        with torch.no_grad():
            last_stage = system.student.trunk.stages[2]
            last_stage[2].weight.zero_()
            last_stage[2].bias.zero_()
        import logging

        with caplog.at_level(logging.WARNING):
            paths = visualize_priors((system, {}), scene64, tmp_path, image_id="c")
        assert "constant" in caplog.text
        from PIL import Image

        arr = np.asarray(Image.open(paths[2]))
        assert (arr == arr[0, 0]).all()

    def test_distinct_inputs_give_distinct_maps(self, tmp_path, rng):
        from PIL import Image

        from priorlens.synthetic import random_scene

        torch.manual_seed(2)
        system = DeblurSystem(AblationConfig())
        p1 = visualize_priors((system, {}), random_scene(rng, 64, 64), tmp_path, image_id="a")
        p2 = visualize_priors((system, {}), random_scene(rng, 64, 64), tmp_path, image_id="b")
        a = np.asarray(Image.open(p1[1]))
        b = np.asarray(Image.open(p2[1]))
        assert not np.array_equal(a, b)

    def test_prior_free_checkpoint_rejected(self, tmp_path, scene64):
        system = DeblurSystem(AblationConfig(False, False, False, "none"))
        with pytest.raises(ValueError, match="prior"):
            visualize_priors((system, {}), scene64, tmp_path)
