"""Extraction of linear coefficients from affine expression trees.

``affine_coeffs`` turns an affine expression into per-variable coefficient
matrices over the variables' packed internal coordinates, plus a constant
offset, all in column-major entry order.  Dense matrices are used
throughout; problems in this package are desk scale.
"""

import numpy as np

from . import expressions as ex
from .packing import expand_matrix


def affine_coeffs(e):
    """Return ({var_id: matrix (e.size, var.packed_size)}, offset (e.size,)).

    Raises ValueError when the tree is not structurally affine.
    """
    e = ex.as_expr(e)
    if isinstance(e, ex.Constant):
        return {}, e.value_array.flatten(order="F").astype(float)
    if isinstance(e, ex.Variable):
        if e.is_symmetric:
            mat = expand_matrix(e.shape.dims[0])
        else:
            mat = np.eye(e.size)
        return {e.id: mat}, np.zeros(e.size)
    if not isinstance(e, ex.AffineOp):
        raise ValueError(f"expression is not affine at {e!r}")

    if e.op == "add":
        coeffs, const = {}, np.zeros(e.size)
        for c in e.children:
            cc, cst = affine_coeffs(c)
            const = const + cst
            for vid, mat in cc.items():
                coeffs[vid] = coeffs.get(vid, 0) + mat
        return coeffs, const

    if e.op == "hstack":
        parts = [affine_coeffs(c) for c in e.children]
        vids = sorted({vid for cc, _ in parts for vid in cc})
        sizes = [c.size for c in e.children]
        coeffs = {}
        for vid in vids:
            width = next(cc[vid].shape[1] for cc, _ in parts if vid in cc)
            blocks = [cc.get(vid, np.zeros((sz, width)))
                      for (cc, _), sz in zip(parts, sizes)]
            coeffs[vid] = np.vstack(blocks)
        const = np.concatenate([cst for _, cst in parts])
        return coeffs, const

    # remaining ops apply one linear map T to the single child
    cc, cst = affine_coeffs(e.children[0])
    T = _op_matrix(e)
    return {vid: T @ mat for vid, mat in cc.items()}, T @ cst


def _op_matrix(e):
    child = e.children[0]
    n = child.size
    if e.op == "negate":
        return -np.eye(n)
    if e.op == "scale":
        return e.data * np.eye(n)
    if e.op == "multiply":
        return np.diag(np.asarray(e.data, dtype=float).flatten(order="F"))
    if e.op == "matmul":
        arr, side, out_dims = e.data
        if side == "left":
            if child.shape.ndim == 2:
                return np.kron(np.eye(child.shape.dims[1]), arr)
            return arr.reshape(-1, n)
        if child.shape.ndim == 2:
            return np.kron(arr.T, np.eye(child.shape.dims[0])) if arr.ndim == 2 \
                else np.kron(arr.reshape(-1, 1).T, np.eye(child.shape.dims[0]))
        return arr.T.reshape(-1, n)
    if e.op == "gather":
        positions, _ = e.data
        return np.eye(n)[positions]
    if e.op == "sum":
        return np.ones((1, n))
    if e.op == "promote":
        return np.ones((e.size, 1))
    raise ValueError(f"expression is not affine at op {e.op!r}")


def affine_value(coeffs, const, env):
    """Evaluate extracted coefficients against packed variable values."""
    out = const.copy()
    for vid, mat in coeffs.items():
        out = out + mat @ env[vid]
    return out
