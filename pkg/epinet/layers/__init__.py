"""Layer kernels: epitomic matching, convolution, pooling and activations."""

from __future__ import annotations

from epinet.layers.activations import (
    DropoutState,
    LrnParams,
    bias_relu_backward,
    bias_relu_forward,
    dropout_backward,
    dropout_forward,
    lrn_backward,
    lrn_forward,
)
from epinet.layers.conv import (
    ConvBank,
    conv_backward,
    conv_forward,
    conv_pool_backward,
    conv_pool_forward,
    init_conv_bank,
)
from epinet.layers.dense import fc_backward, fc_forward, init_fc, softmax, softmax_loss
from epinet.layers.epitomic import (
    ArgmaxMap,
    EpitomeBank,
    candidate_count,
    epitomic_backward,
    epitomic_forward,
    extract_filter,
    init_epitome_bank,
    match,
    match_backward,
)
from epinet.layers.pooling import maxpool_backward, maxpool_forward
from epinet.layers.topographic import (
    TopographicBank,
    init_topographic_bank,
    topographic_backward,
    topographic_channels,
    topographic_forward,
)

__all__ = [
    "ArgmaxMap",
    "ConvBank",
    "DropoutState",
    "EpitomeBank",
    "LrnParams",
    "TopographicBank",
    "bias_relu_backward",
    "bias_relu_forward",
    "candidate_count",
    "conv_backward",
    "conv_forward",
    "conv_pool_backward",
    "conv_pool_forward",
    "dropout_backward",
    "dropout_forward",
    "epitomic_backward",
    "epitomic_forward",
    "extract_filter",
    "fc_backward",
    "fc_forward",
    "init_conv_bank",
    "init_epitome_bank",
    "init_fc",
    "init_topographic_bank",
    "lrn_backward",
    "lrn_forward",
    "match",
    "match_backward",
    "maxpool_backward",
    "maxpool_forward",
    "softmax",
    "softmax_loss",
    "topographic_backward",
    "topographic_channels",
    "topographic_forward",
]
