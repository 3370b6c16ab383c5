"""Desk-scale (64x64) experiment phenomena beyond the acceptance gate:
cross-domain degradation (exp1), the three-model comparison on the combined
corpus (exp2), and the with/without-dropout final comparison. Each test
trains real models and takes a few minutes on CPU; all runs are seeded.
"""

import numpy as np
import pytest

from partseg.experiments import ExperimentConfig, run_exp1, run_exp2, run_final


@pytest.fixture(scope="module")
def out_root(tmp_path_factory):
    return tmp_path_factory.mktemp("desk")


class TestExp1Desk:
    def test_diagonal_dominates_off_diagonal(self, out_root):
        cfg = ExperimentConfig(experiment="exp1", out_dir=str(out_root), seed=0)
        res = run_exp1(cfg)
        diag = np.diag(res.matrix)
        off = res.matrix[~np.eye(len(res.domains), dtype=bool)]
        assert float(diag.mean() - off.mean()) > 0.05
        assert res.matrix.shape == (3, 3)
        assert res.heatmap_png.exists()

    def test_rerun_reproduces_matrix_csv(self, out_root, tmp_path):
        first = (out_root / "exp1" / "matrix.csv").read_bytes()
        cfg = ExperimentConfig(experiment="exp1", out_dir=str(tmp_path), seed=0)
        run_exp1(cfg)
        assert (tmp_path / "exp1" / "matrix.csv").read_bytes() == first


class TestExp2Desk:
    @pytest.fixture(scope="class")
    def reports(self, out_root):
        cfg = ExperimentConfig(experiment="exp2", out_dir=str(out_root), seed=0)
        return run_exp2(cfg).reports

    def test_standard_loss_shortcut_on_pool_only_domain(self, reports):
        rep = reports["standard-aug"]
        assert rep.mean_std("echonet_like", "LVM")[0] < 0.1
        assert rep.mean_std("echonet_like", "LA")[0] < 0.1
        assert rep.mean_std("echonet_like", "LV")[0] > 0.8

    def test_pool_dice_similar_across_models(self, reports):
        lvs = [rep.mean_std(class_name="LV")[0] for rep in reports.values()]
        assert max(lvs) - min(lvs) < 0.05

    def test_presence_aware_loss_improves_missing_structures(self, reports):
        # the ring recovers partially under the presence-aware loss; the
        # chamber needs label dropout on top (see TestFinalDesk) and at this
        # domain distance stays at zero for every loss here
        std = reports["standard-aug"]
        ada = reports["adaptive-aug"]
        assert ada.mean_std("echonet_like", "LVM")[0] > std.mean_std("echonet_like", "LVM")[0]
        for cname in ("LVM", "LA"):
            assert ada.mean_std("echonet_like", cname)[0] >= std.mean_std("echonet_like", cname)[0]
            assert ada.mean_std("echonet_like", cname)[0] < 0.95  # below full supervision


class TestFinalDesk:
    def test_dropout_recovers_missing_structures(self, out_root):
        cfg = ExperimentConfig(experiment="final", out_dir=str(out_root), seed=0)
        res = run_final(cfg)
        without = res.table["adaptive-aug"]
        with_ld = res.table["adaptive-aug-ld"]
        assert with_ld["LVM"] - without["LVM"] >= 0.05
        assert with_ld["LA"] - without["LA"] >= 0.05
        assert abs(with_ld["LV"] - without["LV"]) < 0.05
        lines = res.table_csv.read_text().strip().splitlines()
        assert len(lines) == 3 and lines[0] == "model,LV,LVM,LA"
