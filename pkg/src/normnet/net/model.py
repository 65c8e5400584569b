"""The volumetric CNN: three stride-2 residual blocks, global max pooling,
and a four-layer dense head with one 3-vector output per filtering width."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._memory import retain_freed_memory
from .layers import BatchNorm, Conv3d, Dense, GlobalMaxPool, ReLU, Tanh

DEFAULT_MU_G = (0.25, 0.3, 0.35, 0.4, 0.45, 0.5)

INIT_STD = 0.01


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description; the default mirrors the shipped models."""

    input_edge: int = 41
    input_channels: int = 3
    block_channels: tuple[int, ...] = (64, 128, 256)
    stem_kernel: int = 5
    kernel: int = 3
    fc_widths: tuple[int, ...] = (512, 256, 128)
    mu_g_list: tuple[float, ...] = DEFAULT_MU_G

    def __post_init__(self):
        if self.input_edge < 1 or self.input_channels < 1:
            raise ValueError("input dimensions must be positive")
        if len(self.mu_g_list) < 1:
            raise ValueError("need at least one filtering width head")
        if not self.block_channels or not self.fc_widths:
            raise ValueError("block_channels and fc_widths must be non-empty")

    @property
    def n_heads(self) -> int:
        return len(self.mu_g_list)

    @property
    def output_width(self) -> int:
        return 3 * self.n_heads


def default_network_spec(n_heads: int = 6, input_edge: int = 41) -> NetworkSpec:
    """Standard architecture with the first ``n_heads`` filtering widths."""
    if not 1 <= n_heads <= len(DEFAULT_MU_G):
        raise ValueError(f"n_heads must be in [1, {len(DEFAULT_MU_G)}], got {n_heads}")
    return NetworkSpec(input_edge=input_edge, mu_g_list=DEFAULT_MU_G[:n_heads])


def truncated_normal(rng: np.random.Generator, shape, std: float, dtype) -> np.ndarray:
    """Normal(0, std) draws redrawn until they land within two deviations."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out.astype(dtype)


class ResidualBlock:
    """Two stride-compressing convolutions plus a projection shortcut.

    Layout: conv1 (stride 2) - BN - ReLU - conv2 (stride 1) - BN - ReLU,
    added to a 1x1x1 stride-2 projection of the input followed by BN. The
    activation precedes the add, so zeroing the branch's final BN scale and
    shift reduces the block exactly to its shortcut path.
    """

    def __init__(self, name: str, in_channels: int, out_channels: int,
                 first_kernel: int, kernel: int, dtype=np.float32):
        self.name = name
        self.conv1 = Conv3d(f"{name}.conv1", in_channels, out_channels,
                            first_kernel, stride=2, dtype=dtype)
        self.bn1 = BatchNorm(f"{name}.bn1", out_channels, dtype=dtype)
        self.relu1 = ReLU(f"{name}.relu1")
        self.conv2 = Conv3d(f"{name}.conv2", out_channels, out_channels,
                            kernel, stride=1, dtype=dtype)
        self.bn2 = BatchNorm(f"{name}.bn2", out_channels, dtype=dtype)
        self.relu2 = ReLU(f"{name}.relu2")
        self.shortcut_conv = Conv3d(f"{name}.shortcut_conv", in_channels,
                                    out_channels, kernel=1, stride=2, dtype=dtype)
        self.shortcut_bn = BatchNorm(f"{name}.shortcut_bn", out_channels, dtype=dtype)

    def layers(self):
        return [self.conv1, self.bn1, self.relu1, self.conv2, self.bn2,
                self.relu2, self.shortcut_conv, self.shortcut_bn]

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        branch = self.relu1.forward(self.bn1.forward(self.conv1.forward(x), training))
        branch = self.relu2.forward(self.bn2.forward(self.conv2.forward(branch), training))
        shortcut = self.shortcut_bn.forward(self.shortcut_conv.forward(x), training)
        return branch + shortcut

    def backward(self, dy: np.ndarray) -> np.ndarray:
        d_branch = self.conv1.backward(
            self.bn1.backward(self.relu1.backward(
                self.conv2.backward(self.bn2.backward(self.relu2.backward(dy)))
            ))
        )
        d_short = self.shortcut_conv.backward(self.shortcut_bn.backward(dy))
        return d_branch + d_short


class Network:
    """Assembled model: blocks, pooling, dense head; owns the parameters.

    ``dtype`` float32 is the training/inference mode; float64 exists for
    finite-difference gradient checking.
    """

    def __init__(self, spec: NetworkSpec, seed: int = 0, dtype=np.float32):
        retain_freed_memory()
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.blocks = []
        in_ch = spec.input_channels
        for i, out_ch in enumerate(spec.block_channels, start=1):
            first_kernel = spec.stem_kernel if i == 1 else spec.kernel
            self.blocks.append(
                ResidualBlock(f"block{i}", in_ch, out_ch, first_kernel,
                              spec.kernel, dtype=dtype)
            )
            in_ch = out_ch
        self.pool = GlobalMaxPool("pool")
        self.fcs = []
        self.fc_bns = []
        self.fc_relus = []
        widths = [in_ch, *spec.fc_widths, spec.output_width]
        for i in range(len(widths) - 1):
            self.fcs.append(Dense(f"fc{i + 1}", widths[i], widths[i + 1], dtype=dtype))
        for i in range(len(spec.fc_widths)):
            self.fc_bns.append(BatchNorm(f"fc{i + 1}_bn", widths[i + 1], dtype=dtype))
            self.fc_relus.append(ReLU(f"fc{i + 1}_relu"))
        self.tanh = Tanh("tanh")
        self._init_parameters(seed)

    def _all_layers(self):
        out = []
        for block in self.blocks:
            out.extend(block.layers())
        out.append(self.pool)
        for i, fc in enumerate(self.fcs):
            out.append(fc)
            if i < len(self.fc_bns):
                out.append(self.fc_bns[i])
                out.append(self.fc_relus[i])
        out.append(self.tanh)
        return out

    def _init_parameters(self, seed: int) -> None:
        rng = np.random.Generator(np.random.PCG64(seed))
        for layer in self._all_layers():
            if isinstance(layer, (Conv3d, Dense)):
                layer.weight[...] = truncated_normal(
                    rng, layer.weight.shape, INIT_STD, self.dtype
                )

    def parameters(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self._all_layers():
            out.update(layer.parameters())
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self._all_layers():
            if isinstance(layer, BatchNorm):
                out.update(layer.buffers())
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {**self.parameters(), **self.buffers()}

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        edge, channels = self.spec.input_edge, self.spec.input_channels
        if x.ndim != 5 or x.shape[1:] != (edge, edge, edge, channels):
            raise ValueError(
                f"input: expected (batch, {edge}, {edge}, {edge}, {channels}), "
                f"got {x.shape}"
            )
        return x

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        x = self._check_input(x)
        for block in self.blocks:
            x = block.forward(x, training)
        x = self.pool.forward(x, training)
        for i, fc in enumerate(self.fcs):
            x = fc.forward(x, training)
            if i < len(self.fc_bns):
                x = self.fc_relus[i].forward(self.fc_bns[i].forward(x, training))
        return self.tanh.forward(x)

    def loss(self, outputs: np.ndarray, targets: np.ndarray) -> float:
        """Mean squared error over every output element, in float64."""
        targets = np.asarray(targets)
        if targets.shape != outputs.shape:
            raise ValueError(
                f"targets: expected {outputs.shape}, got {targets.shape}"
            )
        diff = outputs.astype(np.float64) - targets.astype(np.float64)
        value = float(np.mean(diff * diff))
        if not np.isfinite(value):
            raise FloatingPointError(f"non-finite loss {value}")
        return value

    def forward_backward(
        self, x: np.ndarray, targets: np.ndarray, training: bool = True
    ) -> tuple[float, dict[str, np.ndarray]]:
        """One loss evaluation plus gradients for every trainable parameter.

        ``training`` selects which statistics batch norm uses (and whether
        running estimates update); gradients are exact for either mode.
        """
        outputs = self.forward(x, training)
        value = self.loss(outputs, targets)
        dy = (2.0 / outputs.size) * (
            outputs.astype(np.float64) - np.asarray(targets, dtype=np.float64)
        )
        dy = dy.astype(self.dtype)
        dy = self.tanh.backward(dy)
        for i in range(len(self.fcs) - 1, -1, -1):
            if i < len(self.fc_bns):
                dy = self.fc_bns[i].backward(self.fc_relus[i].backward(dy))
            dy = self.fcs[i].backward(dy)
        dy = self.pool.backward(dy)
        for block in reversed(self.blocks):
            dy = block.backward(dy)
        grads: dict[str, np.ndarray] = {}
        for layer in self._all_layers():
            if hasattr(layer, "grads"):
                grads.update(layer.grads)
        return value, grads
