#!/usr/bin/env python3
"""Regenerate the shipped kernel preset files and the validator fixtures.

Presets (src/qbrownian/presets/) are the atomic JSON forms of the named
kernels; fixtures (tests/fixtures/) are kernels constructed to fail
exactly one validator item each:

    violation_parity        measure not invariant under joint pi shifts
    violation_negative      one atom orbit with negated weight
    violation_balance       row and column exit rates differ
    violation_gap           the zero kernel (no mixing)
    violation_permutation   jump rates biased toward one axis (d = 2)
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from qbrownian import kernels as K  # noqa: E402

HERE = os.path.dirname(os.path.abspath(__file__))
PRESET_DIR = os.path.join(HERE, "..", "src", "qbrownian", "presets")
FIXTURE_DIR = os.path.join(HERE, "..", "tests", "fixtures")


def grid_spec(density, n_q, name, d=1):
    P, Q, W = K.atoms_from_density(density, d, n_q)
    keep = W > 1e-15 * max(float(W.max()), 1e-300)
    return K.MeasureSpec(d=d, p=P[keep], q=Q[keep], w=W[keep], grid_n=n_q,
                         name=name)


def make_presets():
    os.makedirs(PRESET_DIR, exist_ok=True)
    uni = grid_spec(K._uniform_density, 32, "uniform")
    K.save_spec(uni, os.path.join(PRESET_DIR, "uniform.json"))
    cos = grid_spec(K._cosine_density_1d, 32, "cosine")
    K.save_spec(cos, os.path.join(PRESET_DIR, "cosine.json"))
    bos = K.preset_spec("boson-beta0")
    K.save_spec(bos, os.path.join(PRESET_DIR, "boson_beta0.json"))


def density_parity(P, Q):
    # symmetric and positive but not pi-shift invariant
    return 1.0 + 0.5 * np.cos(P[..., 0]) + 0.5 * np.cos(Q[..., 0])


def density_balance(P, Q):
    # pi-periodic and positive, but row exits depend on p
    return 1.0 + 0.5 * np.cos(2.0 * P[..., 0])


def make_fixtures():
    os.makedirs(FIXTURE_DIR, exist_ok=True)
    n = 32
    spec = grid_spec(density_parity, n, "violation-parity")
    K.save_spec(spec, os.path.join(FIXTURE_DIR, "violation_parity.json"))

    # cosine atoms with one diagonal orbit negated (closed under pi shifts
    # and reflection): swap symmetry, parity and inversion survive, so only
    # positivity breaks
    P, Q, W = K.atoms_from_density(K._cosine_density_1d, 1, n)
    step = 2.0 * np.pi / n
    for j in (5, 5 + n // 2, n - 5, n // 2 - 5):
        hit = (np.abs(P[:, 0] - j * step) < 1e-9) & \
              (np.abs(Q[:, 0] - j * step) < 1e-9)
        W[hit] = -W[hit]
    spec = K.MeasureSpec(d=1, p=P, q=Q, w=W, grid_n=n, name="violation-negative")
    K.save_spec(spec, os.path.join(FIXTURE_DIR, "violation_negative.json"))

    spec = grid_spec(density_balance, n, "violation-balance")
    K.save_spec(spec, os.path.join(FIXTURE_DIR, "violation_balance.json"))

    spec = K.MeasureSpec(d=1, p=np.zeros((0, 1)), q=np.zeros((0, 1)),
                         w=np.zeros(0), grid_n=16, name="violation-gap")
    K.save_spec(spec, os.path.join(FIXTURE_DIR, "violation_gap.json"))

    # d=2 difference kernel with unequal axis weights: mixing, balanced,
    # inversion-invariant, but not permutation-invariant
    n2 = 16
    pts = K.torus_grid(n2)
    a, b = np.meshgrid(pts, pts, indexing="ij")
    P1 = np.stack([a.ravel(), b.ravel()], axis=1)
    step = 2.0 * np.pi / n2
    shifts = [(np.zeros(2), 1.0),
              (np.array([step, 0.0]), 0.4), (np.array([-step, 0.0]), 0.4),
              (np.array([0.0, step]), 0.2), (np.array([0.0, -step]), 0.2)]
    ps, qs, ws = [], [], []
    for s, w in shifts:
        ps.append(P1)
        qs.append(np.mod(P1 - s[None, :], 2 * np.pi))
        ws.append(np.full(len(P1), w / len(P1)))
    spec = K.MeasureSpec(d=2, p=np.vstack(ps), q=np.vstack(qs),
                         w=np.concatenate(ws), grid_n=n2,
                         name="violation-permutation")
    K.save_spec(spec, os.path.join(FIXTURE_DIR, "violation_permutation.json"))


if __name__ == "__main__":
    make_presets()
    make_fixtures()
    print("presets ->", os.path.relpath(PRESET_DIR))
    print("fixtures ->", os.path.relpath(FIXTURE_DIR))
