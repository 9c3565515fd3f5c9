"""Encoder-decoder segmentation network assembled from the hand-written
layers, with explicit forward and backward passes.

Topology for depth D and base width B, all convolutions same-padded with a
square kernel:

* D encoder levels: conv -> norm -> leaky relu, then 2x2 max pool. Level i
  outputs B*2^i channels; the pre-pool activation is kept as the skip.
* bottleneck: conv -> norm -> leaky relu at B*2^D channels.
* D decoder levels (deepest first): transposed conv (stride 2) -> norm ->
  leaky relu back to B*2^i channels, concatenation with the level-i skip,
  then a fusing conv -> norm -> leaky relu.
* head: a final conv down to 1 channel followed by a sigmoid. No
  normalization here: normalizing the single logit channel would recenter
  every batch around probability 0.5, which is exactly wrong when positives
  are rare.

Parameters are created and listed in declaration order (encoder, bottleneck,
decoder deepest-first, head), which fixes the initialization draws, the
optimizer slot order, and the checkpoint tensor order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import BatchNorm, Conv2D, ConvTranspose2D, LeakyReLU, MaxPool2x2, Sigmoid

__all__ = ["NetworkSpec", "UNet"]


@dataclass(frozen=True)
class NetworkSpec:
    depth: int = 3
    base_channels: int = 8
    kernel: int = 5
    alpha: float = 0.1

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.kernel < 3 or self.kernel % 2 == 0:
            raise ValueError("kernel must be odd and >= 3")
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")


class _Block:
    """conv/transposed-conv -> batch norm -> leaky relu."""

    def __init__(self, conv, ch, alpha, dtype):
        self.conv = conv
        self.bn = BatchNorm(ch, dtype=dtype)
        self.act = LeakyReLU(alpha)

    def forward(self, x, training):
        return self.act.forward(self.bn.forward(self.conv.forward(x, training), training), training)

    def backward(self, d):
        return self.conv.backward(self.bn.backward(self.act.backward(d)))

    def layers(self):
        return [self.conv, self.bn]


class UNet:
    def __init__(self, spec=NetworkSpec(), seed=0, dtype=np.float32):
        self.spec = spec
        self.seed = seed
        self.dtype = np.dtype(dtype).type
        rng = np.random.default_rng(seed)
        d, b, k, a = spec.depth, spec.base_channels, spec.kernel, spec.alpha

        self.enc = []
        in_ch = 1
        for i in range(d):
            out_ch = b * 2**i
            self.enc.append(_Block(Conv2D(in_ch, out_ch, k, rng, dtype), out_ch, a, dtype))
            in_ch = out_ch
        self.pools = [MaxPool2x2() for _ in range(d)]
        self.bottleneck = _Block(Conv2D(in_ch, b * 2**d, k, rng, dtype), b * 2**d, a, dtype)

        self.ups = {}
        self.fuses = {}
        in_ch = b * 2**d
        for i in range(d - 1, -1, -1):
            out_ch = b * 2**i
            self.ups[i] = _Block(ConvTranspose2D(in_ch, out_ch, k, rng, dtype), out_ch, a, dtype)
            self.fuses[i] = _Block(Conv2D(2 * out_ch, out_ch, k, rng, dtype), out_ch, a, dtype)
            in_ch = out_ch
        self.head = Conv2D(in_ch, 1, k, rng, dtype)
        self.sigmoid = Sigmoid()
        self._skip_ch = [b * 2**i for i in range(d)]
        self._trained_forward = False

    # -- graph ---------------------------------------------------------------

    def _ordered_layers(self):
        layers = []
        for block in self.enc:
            layers += block.layers()
        layers += self.bottleneck.layers()
        for i in range(self.spec.depth - 1, -1, -1):
            layers += self.ups[i].layers()
            layers += self.fuses[i].layers()
        layers.append(self.head)
        return layers

    def forward(self, x, training=False):
        """(N, H, W) or (N, 1, H, W) patches -> (N, H, W) probabilities."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[:, None]
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected (N, H, W) input, got shape {x.shape}")
        h, w = x.shape[2], x.shape[3]
        divisor = 2**self.spec.depth
        if h % divisor or w % divisor:
            raise ValueError(f"patch dims {h}x{w} must be divisible by {divisor}")

        a = x
        skips = []
        for i in range(self.spec.depth):
            a = self.enc[i].forward(a, training)
            skips.append(a)
            a = self.pools[i].forward(a, training)
        a = self.bottleneck.forward(a, training)
        for i in range(self.spec.depth - 1, -1, -1):
            a = self.ups[i].forward(a, training)
            a = np.concatenate([skips[i], a], axis=1)
            a = self.fuses[i].forward(a, training)
        logits = self.head.forward(a, training)
        prob = self.sigmoid.forward(logits, training)
        self._trained_forward = training
        return prob[:, 0]

    def backward(self, dprob):
        """Gradient of the scalar loss wrt every parameter, from the loss
        gradient wrt the output probabilities. Requires a prior forward in
        training mode on the same batch."""
        if not self._trained_forward:
            raise RuntimeError("backward requires a preceding forward in training mode")
        d = np.asarray(dprob, dtype=self.dtype)[:, None]
        d = self.sigmoid.backward(d)
        d = self.head.backward(d)
        dskips = {}
        for i in range(self.spec.depth):
            d = self.fuses[i].backward(d)
            ch = self._skip_ch[i]
            dskips[i] = d[:, :ch]
            d = self.ups[i].backward(d[:, ch:])
        d = self.bottleneck.backward(d)
        for i in range(self.spec.depth - 1, -1, -1):
            d = self.pools[i].backward(d)
            d = d + dskips[i]
            d = self.enc[i].backward(d)
        return d[:, 0]

    # -- parameter access ----------------------------------------------------

    def params(self):
        """Ordered (name, array) pairs; arrays are live references."""
        out = []
        for idx, layer in enumerate(self._ordered_layers()):
            for name, arr in layer.params:
                out.append((f"layer{idx:02d}.{name}", arr))
        return out

    def grads(self):
        """Gradient arrays aligned with params(), valid after backward."""
        out = []
        for layer in self._ordered_layers():
            for name, _ in layer.params:
                out.append(layer.grads[name])
        return out

    def state(self):
        """Non-trainable persistent arrays (normalization statistics)."""
        out = []
        for idx, layer in enumerate(self._ordered_layers()):
            for name, arr in layer.state:
                out.append((f"layer{idx:02d}.{name}", arr))
        return out

    def snapshot(self):
        """Deep copy of parameters and persistent state."""
        return {name: arr.copy() for name, arr in self.params() + self.state()}

    def load_snapshot(self, snap):
        for name, arr in self.params() + self.state():
            np.copyto(arr, snap[name])
