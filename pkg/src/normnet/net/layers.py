"""Layer primitives for the volumetric CNN: forward, backward, parameters.

Activations are channels-last: (batch, depth, height, width, channels) for
volumetric tensors and (batch, features) for dense ones. Every layer caches
what its backward pass needs during forward and exposes its trainable
parameters and gradients as name-keyed dicts.
"""

from __future__ import annotations

import math

import numpy as np

# im2col working-set ceiling; bigger batches fall back to chunked passes
# (and give up the forward-pass column cache that backward would reuse)
IM2COL_BUDGET_BYTES = 768 * 1024 * 1024


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Output size and (begin, end) zero padding for 'same' convolution.

    Output size is ceil(size / stride); total padding splits with the extra
    cell at the end when odd.
    """
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    begin = total // 2
    return out, begin, total - begin


class Conv3d:
    """Cubic 3D convolution with 'same' zero padding.

    Lowered to one GEMM per batch chunk over explicit column matrices.
    Stride-2 inputs are regrouped into parity subgrids first so every
    column block is sliced with unit stride; the column matrix is kept
    for the backward pass whenever it fits the memory budget.

    Large intermediates live in per-layer scratch buffers that the next
    forward/backward call on the same layer reuses, so repeated steps do
    not churn the allocator. The array backward returns is a view into
    that scratch: consume or copy it before calling this layer again.
    Weight layout is (k, k, k, in_channels, out_channels).
    """

    def __init__(self, name: str, in_channels: int, out_channels: int,
                 kernel: int, stride: int, dtype=np.float32):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.dtype = np.dtype(dtype)
        self.weight = np.zeros(
            (kernel, kernel, kernel, in_channels, out_channels), dtype=dtype
        )
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None
        self._scratch: dict = {}

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def _buf(self, key, shape) -> np.ndarray:
        buf = self._scratch.get(key)
        if buf is None or buf.shape != shape or buf.dtype != self.dtype:
            buf = np.empty(shape, dtype=self.dtype)
            self._scratch[key] = buf
        return buf

    def _geometry(self, shape):
        b, d, h, w, c = shape
        if c != self.in_channels:
            raise ValueError(
                f"{self.name}: expected {self.in_channels} input channels, got {c}"
            )
        od, pdb, pde = same_padding(d, self.kernel, self.stride)
        oh, phb, phe = same_padding(h, self.kernel, self.stride)
        ow, pwb, pwe = same_padding(w, self.kernel, self.stride)
        return (od, oh, ow), ((pdb, pde), (phb, phe), (pwb, pwe))

    def _pad(self, x, pads):
        (pdb, pde), (phb, phe), (pwb, pwe) = pads
        return np.pad(x, ((0, 0), (pdb, pde), (phb, phe), (pwb, pwe), (0, 0)))

    def _offsets(self):
        k = self.kernel
        return [(kd, kh, kw) for kd in range(k) for kh in range(k) for kw in range(k)]

    def _parity_grids(self, xp):
        """Contiguous stride-s subgrids of the padded input, keyed by parity."""
        s = self.stride
        if s == 1:
            return {(0, 0, 0): xp}
        grids = {}
        for pd in range(min(s, self.kernel)):
            for ph in range(min(s, self.kernel)):
                for pw in range(min(s, self.kernel)):
                    view = xp[:, pd::s, ph::s, pw::s, :]
                    grid = self._buf(("grid", pd, ph, pw), view.shape)
                    np.copyto(grid, view)
                    grids[(pd, ph, pw)] = grid
        return grids

    def _offset_view(self, grids, offset, out_sizes, lo, hi):
        """Unit-stride view of the input positions offset feeds, rows [lo, hi)."""
        kd, kh, kw = offset
        od, oh, ow = out_sizes
        s = self.stride
        grid = grids[(kd % s, kh % s, kw % s)] if s > 1 else grids[(0, 0, 0)]
        d0, h0, w0 = kd // s, kh // s, kw // s
        return grid[lo:hi, d0 : d0 + od, h0 : h0 + oh, w0 : w0 + ow, :]

    def _fill_columns(self, cols, grids, out_sizes, lo, hi):
        od, oh, ow = out_sizes
        rows = hi - lo
        for j, offset in enumerate(self._offsets()):
            view = self._offset_view(grids, offset, out_sizes, lo, hi)
            cols[:, j * self.in_channels : (j + 1) * self.in_channels] = view.reshape(
                rows * od * oh * ow, self.in_channels
            )
        return cols

    def _chunk_rows(self, positions: int) -> int:
        bytes_per_row = positions * self.kernel**3 * self.in_channels * self.dtype.itemsize
        return max(1, IM2COL_BUDGET_BYTES // max(bytes_per_row, 1))

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        out_sizes, pads = self._geometry(x.shape)
        xp = self._pad(x, pads)
        grids = self._parity_grids(xp)
        b = x.shape[0]
        od, oh, ow = out_sizes
        positions = od * oh * ow
        width = self.kernel**3 * self.in_channels
        w2d = self.weight.reshape(-1, self.out_channels)
        y2d = np.empty((b * positions, self.out_channels), dtype=self.dtype)
        chunk = min(b, self._chunk_rows(positions))
        cols_buf = self._buf("cols", (chunk * positions, width))
        whole = chunk == b
        for lo in range(0, b, chunk):
            hi = min(lo + chunk, b)
            cols = self._fill_columns(
                cols_buf[: (hi - lo) * positions], grids, out_sizes, lo, hi
            )
            np.dot(cols, w2d, out=y2d[lo * positions : hi * positions])
        y2d += self.bias
        self._cache = (grids, x.shape, out_sizes, pads, whole)
        return y2d.reshape(b, od, oh, ow, self.out_channels)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        grids, x_shape, out_sizes, pads, cols_valid = self._cache
        b = x_shape[0]
        od, oh, ow = out_sizes
        positions = od * oh * ow
        width = self.kernel**3 * self.in_channels
        dy2d = dy.reshape(b * positions, self.out_channels)
        w2d = self.weight.reshape(-1, self.out_channels)
        dw2d = np.zeros_like(w2d)
        dgrids = {}
        for key, grid in grids.items():
            dgrid = self._buf(("dgrid",) + key, grid.shape)
            dgrid[...] = 0
            dgrids[key] = dgrid

        chunk = b if cols_valid else min(b, self._chunk_rows(positions))
        cols_buf = self._scratch["cols"] if cols_valid else self._buf(
            "cols", (chunk * positions, width)
        )
        dcols_buf = self._buf("dcols", (chunk * positions, width))
        for lo in range(0, b, chunk):
            hi = min(lo + chunk, b)
            rows = hi - lo
            cols = cols_buf[: rows * positions]
            if not cols_valid:
                self._fill_columns(cols, grids, out_sizes, lo, hi)
            dy_part = dy2d[lo * positions : hi * positions]
            dw2d += cols.T @ dy_part
            dcols = np.matmul(dy_part, w2d.T, out=dcols_buf[: rows * positions])
            for j, offset in enumerate(self._offsets()):
                block = dcols[:, j * self.in_channels : (j + 1) * self.in_channels]
                self._offset_view(dgrids, offset, out_sizes, lo, hi)[...] += block.reshape(
                    rows, od, oh, ow, self.in_channels
                )

        self.grads = {
            f"{self.name}.weight": dw2d.reshape(self.weight.shape),
            f"{self.name}.bias": dy2d.sum(axis=0),
        }

        (pdb, _), (phb, _), (pwb, _) = pads
        _, d, h, w, _ = x_shape
        s = self.stride
        if s == 1:
            dxp = dgrids[(0, 0, 0)]
        else:
            padded = tuple(dim + sum(p) for dim, p in zip((d, h, w), pads))
            dxp = self._buf("dxp", (b, *padded, self.in_channels))
            dxp[...] = 0
            for (pd, ph, pw), dgrid in dgrids.items():
                dxp[:, pd::s, ph::s, pw::s, :] += dgrid
        return dxp[:, pdb : pdb + d, phb : phb + h, pwb : pwb + w, :]


class BatchNorm:
    """Batch normalization over all axes but the channel axis (the last).

    Training mode normalizes with biased batch statistics and folds them
    into the running estimates as running = momentum * running +
    (1 - momentum) * batch; inference mode normalizes with the running
    estimates alone.
    """

    def __init__(self, name: str, channels: int, eps: float = 1e-5,
                 momentum: float = 0.9, dtype=np.float32):
        self.name = name
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.dtype = np.dtype(dtype)
        self.scale = np.ones(channels, dtype=dtype)
        self.shift = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.scale": self.scale, f"{self.name}.shift": self.shift}

    def buffers(self) -> dict[str, np.ndarray]:
        return {
            f"{self.name}.running_mean": self.running_mean,
            f"{self.name}.running_var": self.running_var,
        }

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.shape[-1] != self.channels:
            raise ValueError(
                f"{self.name}: expected {self.channels} channels, got {x.shape[-1]}"
            )
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean[...] = self.momentum * self.running_mean + (
                1.0 - self.momentum
            ) * mean.astype(self.dtype)
            self.running_var[...] = self.momentum * self.running_var + (
                1.0 - self.momentum
            ) * var.astype(self.dtype)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, training, x.shape)
        return self.scale * xhat + self.shift

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_std, training, x_shape = self._cache
        axes = tuple(range(dy.ndim - 1))
        self.grads = {
            f"{self.name}.scale": (dy * xhat).sum(axis=axes),
            f"{self.name}.shift": dy.sum(axis=axes),
        }
        dxhat = dy * self.scale
        if not training:
            return dxhat * inv_std
        m = math.prod(x_shape[:-1])
        return (
            inv_std
            / m
            * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
        )


class ReLU:
    def __init__(self, name: str):
        self.name = name
        self._mask = None

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, x.dtype.type(0))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dy, dy.dtype.type(0))


class Tanh:
    def __init__(self, name: str):
        self.name = name
        self._out = None

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._out = np.tanh(x)
        return self._out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * (1.0 - self._out**2)


class GlobalMaxPool:
    """Max over the three spatial axes: (B, D, H, W, C) -> (B, C).

    Backward routes each channel's gradient to the first position attaining
    the maximum, which keeps results deterministic under ties.
    """

    def __init__(self, name: str):
        self.name = name
        self._cache = None

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        b, d, h, w, c = x.shape
        flat = x.reshape(b, d * h * w, c)
        idx = flat.argmax(axis=1)
        self._cache = (idx, x.shape)
        return np.take_along_axis(flat, idx[:, None, :], axis=1)[:, 0, :]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        idx, shape = self._cache
        b, d, h, w, c = shape
        dflat = np.zeros((b, d * h * w, c), dtype=dy.dtype)
        np.put_along_axis(dflat, idx[:, None, :], dy[:, None, :], axis=1)
        return dflat.reshape(shape)


class Dense:
    def __init__(self, name: str, in_features: int, out_features: int, dtype=np.float32):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        self.weight = np.zeros((in_features, out_features), dtype=dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self.grads: dict[str, np.ndarray] = {}
        self._x = None

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.shape[-1] != self.in_features:
            raise ValueError(
                f"{self.name}: expected {self.in_features} features, got {x.shape[-1]}"
            )
        self._x = x
        return x @ self.weight + self.bias

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.grads = {
            f"{self.name}.weight": self._x.T @ dy,
            f"{self.name}.bias": dy.sum(axis=0),
        }
        return dy @ self.weight.T
