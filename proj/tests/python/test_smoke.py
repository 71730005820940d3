# Copyright 2026 The pdconv Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


import numpy as np
import pytest

import pdconv


def conv_oracle(x, w, dilation=1):
    """Depthwise 'same' convolution with zero padding, by direct summation."""
    n, c, h, width = x.shape
    k = w.shape[-1]
    pad = (k - 1) * dilation // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros_like(x)
    for i in range(k):
        for j in range(k):
            out += w[None, :, 0, i, j, None, None] * xp[:, :, i * dilation : i * dilation + h,
                                                       j * dilation : j * dilation + width]
    return out


def test_pdc_matches_numpy_blend():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (2, 3, 11, 13))
    w = rng.uniform(-1, 1, (3, 1, 7, 7))
    alpha = 0.3
    conv = conv_oracle(x, w, dilation=3)
    expected = conv - alpha * x * w.sum(axis=(1, 2, 3))[None, :, None, None]
    for mode in ("rewritten", "definitional"):
        got = pdconv.pdc(x, w, alpha, dilation=3, mode=mode)
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)


def test_alpha_zero_is_depthwise_conv():
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, (1, 4, 9, 9))
    w = rng.uniform(-1, 1, (4, 1, 5, 5))
    np.testing.assert_array_equal(pdconv.pdc(x, w, 0.0), pdconv.conv2d(x, w, groups=4))
    np.testing.assert_allclose(pdconv.conv2d(x, w, groups=4), conv_oracle(x, w), atol=1e-13)


def test_f32_entry_points():
    x = np.ones((1, 1, 8, 8), dtype=np.float32)
    w = np.full((1, 1, 3, 3), 1.0, dtype=np.float32)
    y = pdconv.conv2d_f32(x, w)
    assert y.dtype == np.float32
    assert y[0, 0, 4, 4] == 9.0 and y[0, 0, 0, 0] == 4.0
    assert np.all(pdconv.pdc_f32(x, w, 1.0)[0, 0, 1:-1, 1:-1] == 0.0)


def test_shape_errors_raise_value_error():
    with pytest.raises(ValueError):
        pdconv.pdc(np.zeros((1, 2, 4, 4)), np.zeros((3, 1, 5, 5)), 0.5)
    with pytest.raises(ValueError):
        pdconv.pdc(np.zeros((2, 4, 4)), np.zeros((2, 1, 5, 5)), 0.5)
    with pytest.raises(ValueError):
        pdconv.pdc(np.zeros((1, 2, 4, 4)), np.zeros((2, 1, 5, 5)), 0.5, mode="other")


def test_receptive_fields():
    cascade = pdconv.receptive_field("cascade")
    parallel = pdconv.receptive_field("parallel")
    np.testing.assert_array_equal(cascade, pdconv.analytic_support("cascade"))
    assert set(np.unique(cascade[cascade > 0])) <= {1, 2, 4}
    assert np.all((parallel > 0) <= (cascade > 0))
    single = pdconv.receptive_field("single7d3") > 0
    rows = np.flatnonzero(single.any(axis=1))
    assert rows[-1] - rows[0] + 1 == 19


def test_cost():
    for c in (1, 8, 64):
        assert pdconv.clk_flops(c, 32, 32) < pdconv.large_kernel_flops(c, 32, 32)
    assert pdconv.clk_depthwise_flops(1, 1, 1) == 74


def test_metrics_worked_example():
    m = pdconv.metrics(np.array([0, 1, 1, 1], dtype=np.int32), np.array([0, 0, 1, 1], dtype=np.int32), 2)
    assert m["pixel_acc"] == 0.75
    assert abs(m["miou"] - 7 / 12) < 1e-12


def test_scene_and_pdt_round_trip(tmp_path):
    rgb, depth, labels = pdconv.gen_scene(3, 32, 40, 5)
    assert rgb.shape == (1, 3, 32, 40) and depth.shape == (1, 1, 32, 40) and labels.shape == (32, 40)
    assert labels.min() >= 0 and labels.max() < 5
    for array in (rgb, labels, np.arange(6, dtype=np.float64).reshape(2, 3)):
        path = str(tmp_path / "a.pdt")
        pdconv.write_pdt(path, array)
        back = pdconv.read_pdt(path)
        assert back.dtype == array.dtype
        np.testing.assert_array_equal(back, array)
    bad = tmp_path / "bad.pdt"
    bad.write_bytes(b"NOPE\x01\x00")
    with pytest.raises(ValueError):
        pdconv.read_pdt(str(bad))
    with pytest.raises(OSError):
        pdconv.read_pdt(str(tmp_path / "missing.pdt"))


def test_gradcheck_and_equivalence():
    assert "pdc" in pdconv.gradcheck_ops()
    passed, err = pdconv.gradcheck("ecf", 1)
    assert passed and err <= 1e-4
    eq = pdconv.pdc_equivalence(20, 0)
    assert eq["passed"]
