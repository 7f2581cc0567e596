import math
import os
import sys

import pytest

sys.path.insert(0, os.environ.get("MADPY_DIR", "build"))

madpy = pytest.importorskip("_madpy")


def test_vocab_layout():
    spec = madpy.default_vocab_spec(500)
    assert spec.num_bins == 500
    vocab = madpy.Vocab.build(spec)
    # shapes world: 5 classes, 16 words -> 2 + 4 + 500 + 6 + 4 + 16
    assert vocab.total_size() == 532
    assert vocab.pad() == 0
    assert vocab.mask() == 1


def test_quantization_round_trip():
    for i in range(101):
        x = i / 100.0
        back = madpy.dequantize_coord(madpy.quantize_coord(x, 500), 500)
        assert abs(back - x) <= 0.5 / 500 + 1e-12


def test_hungarian_worked_example():
    cost = madpy.CostMatrix(3, 3, [4, 1, 3, 2, 0, 5, 3, 2, 2])
    a = madpy.hungarian(cost)
    assert a.total_cost == pytest.approx(5.0)
    assert sorted(a.pairs) == [(0, 1), (1, 0), (2, 2)]


def test_masked_count():
    assert madpy.masked_count(10, 0.75) == 8
    assert madpy.masked_count(10, 0.0) == 1
    assert madpy.masked_count(500, 0.7) == 350


def test_bleu_oracle():
    got = madpy.bleu4_single(["a", "b", "c", "d", "e"], [["a", "b", "c", "d", "f"]])
    assert got == pytest.approx(0.2 ** 0.25, abs=1e-9)
    assert madpy.bleu4_single(["a", "b", "c", "d"], [["a", "b", "c", "d"]]) == pytest.approx(1.0)


def test_ground_truth_self_eval_is_perfect():
    rep = madpy.generate_and_evaluate_ground_truth(10, 3)
    assert rep.det_ap50 == pytest.approx(1.0)
    assert rep.seg_ap50 == pytest.approx(1.0)
    assert rep.caption_bleu4 == pytest.approx(1.0)


def test_train_and_eval_smoke():
    losses, rep = madpy.train_and_eval_smoke(8, 2, 20, False, 7)
    assert len(losses) == 20
    assert all(math.isfinite(l) for l in losses)
    assert sum(losses[-5:]) < sum(losses[:5])
    assert rep.images == 2
