"""Network specs and composed forward/backward over operational layers.

A NetworkSpec is an ordered layer list plus named skip connections
(source layer output concatenated onto a later layer's input, channel-wise).
Parameters live outside the spec as a list of (weights, bias) pairs in layer
order, so specs stay cheap to build, count and serialize.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L

LAYER_KINDS = ("op_conv", "op_tconv", "dense")
ACTIVATIONS = ("tanh", "sigmoid", "none")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int
    out_channels: int
    kernel: int
    q: int = 1
    stride: int = 1
    padding: int = 0
    output_trim: int = 0
    activation: str = "tanh"

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.kind != "dense" and (self.kernel < 1 or self.q < 1):
            raise ValueError("kernel size and Q must be >= 1")
        if self.kind != "dense" and (self.stride < 1 or self.padding < 0):
            raise ValueError("stride must be >= 1 and padding >= 0")


def dense_layer(in_features: int, out_features: int, activation: str = "tanh") -> LayerSpec:
    # For dense layers the "kernel" is the flattened input length itself.
    return LayerSpec(kind="dense", in_channels=in_features, out_channels=out_features,
                     kernel=in_features, q=1, activation=activation)


@dataclass
class NetworkSpec:
    """Ordered layers plus skips: dest layer index -> source layer index.

    The input to layer d with a skip is concat(output of layer d-1,
    output of layer skips[d]) along channels; in_channels of that layer
    must account for both.
    """

    layers: list
    skips: dict = field(default_factory=dict)
    input_len: int | None = None

    def validate(self):
        for d, s in self.skips.items():
            if not (0 <= s < d < len(self.layers)):
                raise ValueError(f"skip {s}->{d} out of order or out of range")
        self.trace_shapes()
        return self

    def trace_shapes(self, input_len: int | None = None):
        """Chain output shapes through the net; raises on any mismatch.

        Returns a list of (channels, length) per layer; dense layers yield
        (features, None). Unknown lengths propagate as None until a dense
        layer requires a concrete flatten size.
        """
        length = input_len if input_len is not None else self.input_len
        shapes = []
        for j, spec in enumerate(self.layers):
            if j == 0:
                in_ch, in_len = spec.in_channels, length
            else:
                prev_ch, prev_len = shapes[j - 1]
                in_ch, in_len = prev_ch, prev_len
                if j in self.skips:
                    src_ch, src_len = shapes[self.skips[j]]
                    if in_len is not None and src_len is not None and in_len != src_len:
                        raise ValueError(
                            f"skip {self.skips[j]}->{j} length mismatch: {src_len} vs {in_len}")
                    in_ch += src_ch
            if spec.kind == "dense":
                if j > 0 and self.layers[j - 1].kind == "dense":
                    flat = in_ch
                elif in_len is not None:
                    flat = in_ch * in_len
                else:
                    flat = None
                if flat is not None and flat != spec.in_channels:
                    raise ValueError(
                        f"layer {j}: dense expects {spec.in_channels} features, got {flat}")
                shapes.append((spec.out_channels, None))
                continue
            if in_ch != spec.in_channels:
                raise ValueError(
                    f"layer {j}: expects {spec.in_channels} channels, got {in_ch}")
            if in_len is None:
                shapes.append((spec.out_channels, None))
                continue
            if spec.kind == "op_conv":
                out_len = L.conv_output_len(in_len, spec.kernel, spec.stride, spec.padding)
            else:
                out_len = L.tconv_output_len(in_len, spec.kernel, spec.stride,
                                             spec.padding, spec.output_trim)
            if out_len < 1:
                raise ValueError(f"layer {j}: output length {out_len} < 1")
            shapes.append((spec.out_channels, out_len))
        return shapes


def count_params(spec: NetworkSpec) -> int:
    """Total learnable parameters: out*in*K*Q + out per operational layer,
    out*in + out per dense layer."""
    total = 0
    for ls in spec.layers:
        if ls.kind == "dense":
            total += ls.out_channels * ls.in_channels + ls.out_channels
        else:
            total += ls.out_channels * ls.in_channels * ls.kernel * ls.q + ls.out_channels
    return total


def param_shapes(spec: NetworkSpec) -> list:
    shapes = []
    for ls in spec.layers:
        if ls.kind == "dense":
            shapes.append(((ls.out_channels, ls.in_channels), (ls.out_channels,)))
        else:
            shapes.append(((ls.out_channels, ls.in_channels, ls.kernel, ls.q),
                           (ls.out_channels,)))
    return shapes


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> list:
    """Uniform init in +-sqrt(1/fan_in) with fan_in = in*K*Q (op) or in (dense)."""
    params = []
    for ls in spec.layers:
        if ls.kind == "dense":
            bound = np.sqrt(1.0 / ls.in_channels)
            w = rng.uniform(-bound, bound, size=(ls.out_channels, ls.in_channels))
        else:
            bound = np.sqrt(1.0 / (ls.in_channels * ls.kernel * ls.q))
            w = rng.uniform(-bound, bound,
                            size=(ls.out_channels, ls.in_channels, ls.kernel, ls.q))
        params.append((w.astype(np.float32), np.zeros(ls.out_channels, dtype=np.float32)))
    return params


def copy_params(params: list) -> list:
    return [(w.copy(), b.copy()) for w, b in params]


def _activate(pre, activation):
    if activation == "tanh":
        return np.tanh(pre)
    if activation == "sigmoid":
        return L.sigmoid_forward(pre)
    return pre


def _activation_grad(out, grad, activation):
    if activation == "tanh":
        return grad * (1.0 - out * out)
    if activation == "sigmoid":
        return grad * out * (1.0 - out)
    return grad


def forward_network(spec: NetworkSpec, params: list, x, want_cache: bool = False):
    """Composed forward pass. x: (C, L) or (B, C, L); returns same rank."""
    if len(params) != len(spec.layers):
        raise ValueError("params list does not match layer count")
    x = np.asarray(x)
    squeeze = x.ndim == 2
    h = x[None] if squeeze else x
    if h.shape[1] != spec.layers[0].in_channels:
        raise ValueError(f"input has {h.shape[1]} channels, "
                         f"network expects {spec.layers[0].in_channels}")
    outs = []
    caches = []
    for j, (ls, (w, b)) in enumerate(zip(spec.layers, params)):
        inp = h if j == 0 else outs[j - 1]
        if j in spec.skips:
            src = outs[spec.skips[j]]
            if src.shape[2] != inp.shape[2]:
                raise ValueError(f"skip {spec.skips[j]}->{j} length mismatch: "
                                 f"{src.shape[2]} vs {inp.shape[2]}")
            inp = np.concatenate([inp, src], axis=1)
        cache = {"skip_prev_ch": inp.shape[1] - (outs[spec.skips[j]].shape[1]
                                                 if j in spec.skips else 0)}
        if ls.kind == "dense":
            cache["unflatten"] = inp.shape
            flat = inp.reshape(inp.shape[0], -1)
            if flat.shape[1] != ls.in_channels:
                raise ValueError(f"layer {j}: dense expects {ls.in_channels} features, "
                                 f"got {flat.shape[1]}")
            pre = L.dense_forward(flat, w, b)
            cache["inp"] = flat
        elif ls.kind == "op_conv":
            pre, lc = L.op_conv1d_forward(inp, w, b, ls.stride, ls.padding, want_cache=True)
            cache["inp"] = inp
            cache["lc"] = lc
        else:
            pre, lc = L.op_tconv1d_forward(inp, w, b, ls.stride, ls.padding,
                                           ls.output_trim, want_cache=True)
            cache["inp"] = inp
            cache["lc"] = lc
        out = _activate(pre, ls.activation)
        outs.append(out)
        caches.append(cache)
    y = outs[-1]
    if squeeze:
        y = y[0]
    if want_cache:
        return y, {"outs": outs, "caches": caches, "squeeze": squeeze, "x": h}
    return y


def backward_network(spec: NetworkSpec, params: list, cache: dict, grad_out):
    """Backward through a cached forward pass.

    Returns (grad_x, grads) with grads a list of (grad_w, grad_b) per layer.
    Skip connections split their incoming gradient channel-wise and add the
    tail onto the skip source.
    """
    outs = cache["outs"]
    caches = cache["caches"]
    n = len(spec.layers)
    grad_out = np.asarray(grad_out)
    if cache["squeeze"]:
        grad_out = grad_out[None]
    grad_buf = [None] * n
    grad_buf[n - 1] = grad_out
    grad_x = None
    grads = [None] * n

    for j in range(n - 1, -1, -1):
        ls = spec.layers[j]
        w, b = params[j]
        lc = caches[j]
        g = _activation_grad(outs[j], grad_buf[j], ls.activation)
        if ls.kind == "dense":
            gi, gw, gb = L.dense_backward(lc["inp"], w, g)
            gi = gi.reshape(lc["unflatten"])
        elif ls.kind == "op_conv":
            gi, gw, gb = L.op_conv1d_backward(None, w, g, ls.stride, ls.padding,
                                              cache=lc["lc"])
        else:
            gi, gw, gb = L.op_tconv1d_backward(None, w, g, ls.stride, ls.padding,
                                               ls.output_trim, cache=lc["lc"])
        grads[j] = (gw, gb)
        if j in spec.skips:
            prev_ch = lc["skip_prev_ch"]
            g_prev, g_src = gi[:, :prev_ch], gi[:, prev_ch:]
            s = spec.skips[j]
            grad_buf[s] = g_src if grad_buf[s] is None else grad_buf[s] + g_src
        else:
            g_prev = gi
        if j == 0:
            grad_x = g_prev
        else:
            grad_buf[j - 1] = g_prev if grad_buf[j - 1] is None else grad_buf[j - 1] + g_prev

    if cache["squeeze"]:
        grad_x = grad_x[0]
    return grad_x, grads
