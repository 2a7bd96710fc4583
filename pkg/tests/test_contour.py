import numpy as np

from sladecomp.config import default_domains
from sladecomp.contour import BANDS, band_color, evaluate_grid, export_contour
from sladecomp.mlp import Mlp
from sladecomp.rng import make_rng
from sladecomp.slo import FeatureSpec
from sladecomp.train import MethodKind, RiskModel

GT = default_domains()[0].truth


def test_csv_cell_count_and_header(tmp_path):
    grid = export_contour(GT, FeatureSpec(), 17, tmp_path / "gt", "gt")
    lines = (tmp_path / "gt.csv").read_text().splitlines()
    assert lines[0] == "delay_ms,throughput_gbps,prob"
    assert len(lines) - 1 == 17 * 17
    svg = (tmp_path / "gt.svg").read_text()
    assert svg.count("<rect") == 17 * 17 + 1
    assert grid.prob.shape == (17, 17)


def test_awet_rows_monotone():
    m = Mlp(awet=True).init_weights(make_rng("contour"))
    model = RiskModel(m, FeatureSpec(), MethodKind.AWET)
    grid = evaluate_grid(model, FeatureSpec(), 41)
    assert np.all(np.diff(grid.prob, axis=1) >= 0)   # delay grows along a row
    assert np.all(np.diff(grid.prob, axis=0) <= 0)   # throughput grows down the columns


def test_ground_truth_bands_are_straight_lines():
    # level set P = p is the line a*d - b*t + c = logit(p)
    for edge, _ in BANDS:
        logit = np.log(edge / (1 - edge))
        t = np.linspace(0, 1, 7)
        d = (logit - GT.c_off + GT.b_thr * t) / GT.a_delay
        np.testing.assert_allclose(GT.predict(d, t), edge, rtol=1e-9)
        # constant slope in the (delay, throughput) plane
        assert np.allclose(np.diff(d) / np.diff(t), GT.b_thr / GT.a_delay)


def test_band_colors():
    assert band_color(0.995) == BANDS[0][1]
    assert band_color(0.5) == BANDS[3][1]
    assert band_color(0.001) not in {c for _, c in BANDS}
    assert [e for e, _ in BANDS] == [0.99, 0.9, 0.5, 0.1, 0.01]


def test_default_domains_cover_every_band():
    for dom in default_domains():
        grid = evaluate_grid(dom.truth, dom.spec, 101)
        assert grid.prob.max() > 0.99 and grid.prob.min() < 0.01
