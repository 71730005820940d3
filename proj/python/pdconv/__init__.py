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


"""Pixel-difference convolution operators."""

from ._core import (
    ConfigError,
    DataError,
    DimensionError,
    FormatError,
    IoError,
    analytic_support,
    clk_depthwise_flops,
    clk_flops,
    conv2d,
    conv2d_f32,
    gen_scene,
    gradcheck,
    gradcheck_ops,
    large_kernel_flops,
    metrics,
    pdc,
    pdc_equivalence,
    pdc_f32,
    read_pdt,
    receptive_field,
    write_pdt,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "FormatError",
    "IoError",
    "analytic_support",
    "clk_depthwise_flops",
    "clk_flops",
    "conv2d",
    "conv2d_f32",
    "gen_scene",
    "gradcheck",
    "gradcheck_ops",
    "large_kernel_flops",
    "metrics",
    "pdc",
    "pdc_equivalence",
    "pdc_f32",
    "read_pdt",
    "receptive_field",
    "write_pdt",
]
