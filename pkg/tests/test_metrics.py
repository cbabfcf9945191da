import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pansharp.errors import (DegenerateBand, DegenerateHighPass, DegenerateVariance, NotFourBands,
                             OutOfRange, ZeroMeanBand)
from pansharp.metrics import (LAPLACIAN, MetricReport, QConfig, cc, d_lambda, d_s, ergas, evaluate,
                              from_csv, high_pass, q4, q_index, qnr, sam, scc, to_csv, to_json,
                              to_markdown)
from pansharp.raster import ResampleFilter, downsample, upsample
from tests import oracles
from tests.conftest import img


def _rand(rng, shape=(4, 8, 8), lo=0.1):
    return lo + rng.random(shape)


# SAM ------------------------------------------------------------------------

def test_sam_examples():
    assert sam(img(np.ones((4, 3, 3))), img(np.ones((4, 3, 3)))) == 0.0
    a = np.array([1.0, 0, 0, 0]).reshape(4, 1, 1)
    b = np.array([0.0, 1, 0, 0]).reshape(4, 1, 1)
    assert sam(a, b) == pytest.approx(90.0, abs=1e-12)
    a = np.ones((4, 1, 1))
    b = np.array([1.0, 1, 1, 0]).reshape(4, 1, 1)
    assert sam(a, b) == pytest.approx(30.0, abs=1e-9)


def test_sam_skips_zero_vectors():
    a = np.ones((4, 1, 2))
    b = np.ones((4, 1, 2))
    b[:, 0, 1] = 0
    notes = []
    assert sam(a, b, notes) == 0.0
    assert notes and "1 zero-vector" in notes[0]
    with pytest.raises(DegenerateBand):
        sam(np.zeros((4, 1, 1)), np.zeros((4, 1, 1)))


def test_sam_invariant_to_positive_pixel_scaling(rng):
    f, r = _rand(rng), _rand(rng)
    s = 0.1 + rng.random((1, 8, 8))
    assert sam(f * s, r) == pytest.approx(sam(f, r), abs=1e-9)


# CC / sCC --------------------------------------------------------------------

def test_cc_examples(rng):
    r = _rand(rng)
    assert cc(r, r) == pytest.approx(1.0, abs=1e-15)
    assert cc(-r + 3.0, r) == pytest.approx(-1.0, abs=1e-15)
    x = np.array([1.0, 2, 3, 4]).reshape(1, 1, 4)
    y = np.array([2.0, 4, 5, 9]).reshape(1, 1, 4)
    # direct evaluation of the Pearson sum: 11 / sqrt(5 * 26)
    assert cc(x, y) == pytest.approx(11 / np.sqrt(130), abs=1e-12)
    assert cc(x, y) == pytest.approx(0.9648, abs=1e-4)


def test_cc_affine_invariance(rng):
    f, r = _rand(rng), _rand(rng)
    assert cc(2.5 * f + 7, r) == pytest.approx(cc(f, r), abs=1e-12)
    assert cc(f, 0.3 * r - 1) == pytest.approx(cc(f, r), abs=1e-12)


def test_cc_degenerate():
    with pytest.raises(DegenerateBand):
        cc(np.ones((1, 3, 3)), np.arange(9.0).reshape(1, 3, 3))


def test_laplacian_kernel_exact():
    assert LAPLACIAN.shape == (3, 3)
    assert LAPLACIAN[1, 1] == 8.0
    assert np.count_nonzero(LAPLACIAN == -1.0) == 8
    assert LAPLACIAN.sum() == 0.0


def test_high_pass_constant_and_impulse():
    assert np.array_equal(high_pass(np.full((1, 5, 5), 3.0)), np.zeros((1, 5, 5)))
    with pytest.raises(DegenerateHighPass):
        scc(np.full((1, 5, 5), 3.0), np.arange(25.0).reshape(1, 5, 5))
    imp = np.zeros((1, 5, 5))
    imp[0, 2, 2] = 1.0
    assert np.array_equal(high_pass(imp)[0, 1:4, 1:4], LAPLACIAN)
    assert np.count_nonzero(high_pass(imp)) == 9


def test_scc_identity(rng):
    r = _rand(rng)
    assert scc(r, r) == pytest.approx(1.0, abs=1e-15)


# ERGAS -----------------------------------------------------------------------

def test_ergas_examples(rng):
    r = _rand(rng)
    assert ergas(r, r, 4) == 0.0
    ref = np.array([100.0, 100.0]).reshape(1, 1, 2)
    fused = np.array([110.0, 90.0]).reshape(1, 1, 2)
    assert ergas(fused, ref, 4) == pytest.approx(2.5, abs=1e-12)
    # RMSE/M = 0.01 holds exactly for a constant band
    single = np.full((1, 6, 6), 0.6)
    assert ergas(single * 1.01, single, 4) == pytest.approx(0.25, abs=1e-12)


def test_ergas_zero_mean():
    with pytest.raises(ZeroMeanBand):
        ergas(np.ones((1, 2, 2)), np.array([[[1.0, -1.0], [1.0, -1.0]]]), 4)


def test_ergas_monotone_in_band_rmse(rng):
    r = _rand(rng)
    f = r + 0.01 * rng.standard_normal(r.shape)
    g = f.copy()
    g[2] += 0.02 * np.sign(g[2] - r[2])
    assert ergas(g, r) > ergas(f, r)


# Q / Q4 ----------------------------------------------------------------------

def test_q_index_examples(rng):
    a = _rand(rng, (1, 6, 6))
    assert q_index(a, a) == pytest.approx(1.0, abs=1e-15)
    x = np.array([1.0, 2, 3, 4]).reshape(1, 1, 4)
    y = np.array([4.0, 3, 2, 1]).reshape(1, 1, 4)
    assert q_index(x, y) == pytest.approx(-1.0, abs=1e-12)
    assert q_index(a + 10.0, a) < 1.0


def test_q_index_blocks_match_oracle(rng):
    a, b = _rand(rng, (1, 70, 40)), _rand(rng, (1, 70, 40))
    got = q_index(a, b, QConfig(32))
    assert got == pytest.approx(oracles.q_blocks(a[0].tolist(), b[0].tolist(), 32), rel=1e-12)


def test_q4_examples(rng):
    r = _rand(rng)
    assert q4(r, r) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(NotFourBands):
        q4(_rand(rng, (3, 4, 4)), _rand(rng, (3, 4, 4)))
    with pytest.raises(DegenerateVariance):
        q4(np.zeros((4, 4, 4)), np.zeros((4, 4, 4)))


def test_q4_bounded_sweep():
    r = np.random.default_rng(99)
    for _ in range(200):
        a, b = r.random((4, 8, 8)), r.random((4, 8, 8))
        assert abs(q4(a, b)) <= 1.0 + 1e-12


def test_q4_reduces_to_q_index(rng):
    a = np.zeros((4, 8, 8))
    b = np.zeros((4, 8, 8))
    a[0] = _rand(rng, (8, 8))
    b[0] = a[0] + 0.3 * rng.random((8, 8))
    assert q4(a, b) == pytest.approx(q_index(a[:1], b[:1]), abs=1e-12)


# no-reference ------------------------------------------------------------------

def test_d_lambda_box_upsample_global_is_zero(rng):
    ms = _rand(rng, (4, 8, 8))
    fused = upsample(img(ms), 4, ResampleFilter.box()).data
    assert d_lambda(fused, ms, QConfig(None)) == pytest.approx(0.0, abs=1e-9)


def test_d_lambda_identical_and_two_band_arithmetic(rng):
    ms = _rand(rng, (3, 8, 8))
    assert d_lambda(ms, ms) == 0.0
    # K=2: only the off-diagonal pair contributes, sqrt(1 * |dQ|)
    assert np.sqrt(2.0 / (2 * 1) * 0.08) == pytest.approx(0.2828, abs=1e-4)
    a = _rand(rng, (2, 8, 8))
    x = _rand(rng, (2, 8, 8))
    dq = abs(q_index(a[:1], a[1:]) - q_index(x[:1], x[1:]))
    assert d_lambda(a, x, QConfig(None)) == pytest.approx(np.sqrt(dq), abs=1e-12)


def test_d_s_identities(rng):
    pan = _rand(rng, (1, 16, 16))
    pan_lr = _rand(rng, (1, 4, 4))
    fused = np.repeat(pan, 4, axis=0)
    ms = np.repeat(pan_lr, 4, axis=0)
    assert d_s(fused, ms, pan, pan_lr) == pytest.approx(0.0, abs=1e-12)
    f, x = _rand(rng, (4, 16, 16)), _rand(rng, (4, 4, 4))
    perm = [2, 0, 3, 1]
    assert d_s(f[perm], x[perm], pan, pan_lr) == pytest.approx(d_s(f, x, pan, pan_lr), abs=1e-14)
    assert np.sqrt(0.04) == pytest.approx(0.2)
    dq = abs(q_index(f[:1], pan) - q_index(x[:1], pan_lr))
    assert d_s(f[:1], x[:1], pan, pan_lr) == pytest.approx(np.sqrt(dq), abs=1e-12)


def test_qnr_examples():
    assert qnr(0.0, 0.0) == 1.0
    assert qnr(0.0019, 0.0060) == pytest.approx(0.9921, abs=5e-5)
    assert qnr(1.0, 0.3) == 0.0
    with pytest.raises(OutOfRange):
        qnr(-0.1, 0.2)
    with pytest.raises(OutOfRange):
        qnr(0.1, 1.2)


# oracle equivalence -------------------------------------------------------------

@given(st.integers(0, 2**32 - 1))
def test_metrics_match_direct_formulas(seed):
    r = np.random.default_rng(seed)
    f, ref = 0.05 + r.random((4, 8, 8)), 0.05 + r.random((4, 8, 8))
    ms, pan, pan_lr = 0.05 + r.random((4, 2, 2)), 0.05 + r.random((1, 8, 8)), 0.05 + r.random((1, 2, 2))
    fl, rl, ml, pl, pll = f.tolist(), ref.tolist(), ms.tolist(), pan.tolist(), pan_lr.tolist()
    pairs = [
        (sam(f, ref), oracles.sam(fl, rl)),
        (cc(f, ref), oracles.cc(fl, rl)),
        (scc(f, ref), oracles.scc(fl, rl)),
        (ergas(f, ref, 4), oracles.ergas(fl, rl, 4)),
        (q4(f, ref), oracles.q4(fl, rl)),
        (d_lambda(f, ms), oracles.d_lambda(fl, ml)),
        (d_s(f, ms, pan, pan_lr), oracles.d_s(fl, ml, pl, pll)),
    ]
    for got, want in pairs:
        assert abs(got - want) <= 1e-9 * max(abs(want), 1e-12) or abs(got - want) <= 1e-15


# reports ------------------------------------------------------------------------

def test_evaluate_identity(rng):
    r = _rand(rng)
    rep = evaluate(r, r)
    assert (rep.sam, rep.cc, rep.scc, rep.ergas) == (0.0, pytest.approx(1.0), pytest.approx(1.0), 0.0)
    assert rep.q4 == pytest.approx(1.0)
    assert rep.d_lambda is None and rep.d_s is None and rep.qnr is None


def test_evaluate_full_and_qnr_composition(rng):
    ref = img(_rand(rng, (4, 32, 32)))
    ms = downsample(ref, 4)
    pan = img(ref.data.mean(axis=0, keepdims=True))
    rep = evaluate(upsample(ms, 4), ref, ms, pan, method="bicubic")
    assert None not in rep.values()
    assert rep.qnr == (1 - rep.d_lambda) * (1 - rep.d_s)


def test_evaluate_collects_errors_in_notes(rng):
    flat = np.full((4, 8, 8), 0.5)
    rep = evaluate(flat, _rand(rng))
    assert rep.cc is None and any("cc" in n for n in rep.notes)
    assert rep.sam is not None and rep.ergas is not None


def test_csv_round_trip_and_format(rng):
    r = _rand(rng)
    rep = evaluate(r, r, method="same")
    text = to_csv([rep])
    header, row = text.splitlines()
    assert header == "method,SAM,CC,sCC,ERGAS,Q4,D_lambda,D_s,QNR"
    assert row.startswith("same,0.000000,1.000000,1.000000,0.000000,1.000000,,,")
    back = from_csv(text)[0]
    assert back.method == "same" and back.cc == 1.0 and back.qnr is None


def test_markdown_layout():
    rep = MetricReport("HPF", 1.5, 0.9, 0.8, 2.0, 0.7, 0.01, 0.02, qnr(0.01, 0.02))
    lines = to_markdown([rep]).splitlines()
    assert lines[0].startswith("| Method | SAM")
    assert "D_λ" in lines[0] and "QNR" in lines[0]
    assert lines[2] == "| HPF | 1.5000 | 0.9000 | 0.8000 | 2.0000 | 0.7000 | 0.0100 | 0.0200 | 0.9702 |"
    assert "**" not in "\n".join(lines)


def test_json_round_trip():
    rep = MetricReport("x", sam=1.0, notes=["n"])
    d = json.loads(to_json([rep]))[0]
    assert MetricReport.from_dict(d) == rep
