"""Vectorized numpy element kernels for Whitney-form mass matrices.

All functions return per-tet local matrices; assembly into global sparse
matrices happens in :mod:`derham_shape.assembly`.  The weights are constant
on each tet, so every entry is an exact barycentric integral using
``int_T l_i l_j = |T| (1 + delta_ij) / 20``.
"""

import numpy as np

_PAIR = (np.ones((4, 4)) + np.eye(4)) / 20.0


def local_mass_0(vol, w):
    return (w * vol)[:, None, None] * _PAIR


def local_mass_1(grads, vol, W, edge_local):
    I = vol[:, None, None] * _PAIR
    B = np.einsum("tic,tcd,tjd->tij", grads, W, grads)
    t = np.arange(len(vol))[:, None, None]
    a = edge_local[:, :, 0][:, :, None]
    b = edge_local[:, :, 1][:, :, None]
    c = edge_local[:, :, 0][:, None, :]
    d = edge_local[:, :, 1][:, None, :]
    return (I[t, a, c] * B[t, b, d] - I[t, a, d] * B[t, b, c]
            - I[t, b, c] * B[t, a, d] + I[t, b, d] * B[t, a, c])


def face_cross_vectors(grads, face_local):
    """(T, 4, 3, 3): for face (a, b, c) the vectors multiplying l_a, l_b, l_c."""
    t = np.arange(len(grads))[:, None]
    ga = grads[t, face_local[:, :, 0]]
    gb = grads[t, face_local[:, :, 1]]
    gc = grads[t, face_local[:, :, 2]]
    return np.stack([np.cross(gb, gc), np.cross(gc, ga), np.cross(ga, gb)], axis=2)


def local_mass_2(grads, vol, W, face_local):
    I = vol[:, None, None] * _PAIR
    cv = face_cross_vectors(grads, face_local)
    t = np.arange(len(vol))[:, None, None, None, None]
    vi = face_local[:, :, None, :, None]
    vj = face_local[:, None, :, None, :]
    Iv = I[t, vi, vj]  # (T, 4, 4, 3, 3)
    Q = np.einsum("tfic,tcd,tgjd->tfgij", cv, W, cv)
    return 4.0 * np.einsum("tfgij,tfgij->tfg", Iv, Q)


def local_mass_3(vol, w):
    return (w / vol)[:, None, None]
