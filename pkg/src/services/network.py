"""Forward passes and exact reverse-mode derivatives of the MLP."""

import numpy as np

from src.models.errors import DimensionMismatch
from src.models.network import MlpArch, ParamVector
from src.utils.rng import make_rng

RNG_STREAM_INIT = 1


def init_params(arch: MlpArch, seed: int) -> ParamVector:
    """Weights ~ N(0, 1/fan_in), biases zero."""
    rng = make_rng(seed, RNG_STREAM_INIT)
    chunks = []
    for fan_out, fan_in in arch.layer_shapes:
        chunks.append(rng.normal(0.0, np.sqrt(1.0 / fan_in), size=fan_out * fan_in))
        if arch.use_bias:
            chunks.append(np.zeros(fan_out))
    return ParamVector(values=np.concatenate(chunks), arch=arch)


def _as_inputs(arch: MlpArch, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1) if x.shape[0] == arch.input_dim else x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[1] != arch.input_dim:
        raise DimensionMismatch(
            f"Expected inputs with {arch.input_dim} features, got shape {np.shape(x)}"
        )
    return x


def _activate(arch: MlpArch, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if arch.activation == "tanh" else z


def forward_cache(theta: ParamVector, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Layer inputs a₀..a_{L-1} and the network output."""
    layers = theta.layers()
    activations = [x]
    a = x
    for idx, (w, b) in enumerate(layers):
        z = a @ w.T
        if b is not None:
            z = z + b
        if idx == len(layers) - 1:
            return activations, z
        a = _activate(theta.arch, z)
        activations.append(a)
    raise AssertionError("network has no layers")


def forward_batch(theta: ParamVector, x: np.ndarray) -> np.ndarray:
    """f_θ for each row of x, shape (n, output_dim)."""
    return forward_cache(theta, _as_inputs(theta.arch, x))[1]


def forward(theta: ParamVector, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != theta.arch.input_dim:
        raise DimensionMismatch(f"Expected input of length {theta.arch.input_dim}, got {x.shape[0]}")
    return forward_batch(theta, x.reshape(1, -1))[0]


def backprop(
    theta: ParamVector, activations: list[np.ndarray], cotangent: np.ndarray, per_example: bool
) -> np.ndarray:
    """Pull an output cotangent (n, o) back to parameter space.

    Returns the summed gradient (K,) or per-example gradients (n, K).
    """
    arch = theta.arch
    layers = theta.layers()
    n = cotangent.shape[0]
    grads: list[np.ndarray] = []
    delta = cotangent
    for idx in range(len(layers) - 1, -1, -1):
        w, b = layers[idx]
        a_in = activations[idx]
        if per_example:
            gw = np.einsum("ni,nj->nij", delta, a_in).reshape(n, -1)
            gb = delta if b is not None else None
        else:
            gw = (delta.T @ a_in).reshape(-1)
            gb = delta.sum(axis=0) if b is not None else None
        grads.append(gb)
        grads.append(gw)
        if idx > 0:
            delta = delta @ w
            if arch.activation == "tanh":
                delta = delta * (1.0 - a_in**2)
    parts = [g for g in reversed(grads) if g is not None]
    return np.concatenate(parts, axis=-1)


def vjp(theta: ParamVector, x: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
    """Σᵢ cotangent[i]ᵀ ∂f(xᵢ)/∂θ."""
    x = _as_inputs(theta.arch, x)
    activations, _ = forward_cache(theta, x)
    return backprop(theta, activations, np.asarray(cotangent, dtype=float), per_example=False)


def jacobian(theta: ParamVector, x: np.ndarray) -> np.ndarray:
    """Parameter Jacobians of every output at every input, shape (n, output_dim, K)."""
    x = _as_inputs(theta.arch, x)
    activations, out = forward_cache(theta, x)
    n, o = out.shape
    jac = np.empty((n, o, theta.arch.param_count))
    for j in range(o):
        cot = np.zeros((n, o))
        cot[:, j] = 1.0
        jac[:, j, :] = backprop(theta, activations, cot, per_example=True)
    return jac


def grad_params(theta: ParamVector, x: np.ndarray, j: int) -> np.ndarray:
    """∇_θ f_θ(x)[j] for a single input."""
    if not 0 <= j < theta.arch.output_dim:
        raise DimensionMismatch(f"Output index {j} out of range for {theta.arch.output_dim} outputs")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != theta.arch.input_dim:
        raise DimensionMismatch(f"Expected input of length {theta.arch.input_dim}, got {x.shape[0]}")
    cot = np.zeros((1, theta.arch.output_dim))
    cot[0, j] = 1.0
    return vjp(theta, x.reshape(1, -1), cot)
