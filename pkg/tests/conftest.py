"""Shared helpers for the test suite."""

import numpy as np
import pytest

from kamtori.series import FourierTaylorSeries


def random_real_series(rng, d=1, n_modes=6, max_order=8, degree=2, center=None,
                       decay=1.0, amp=1.0):
    """Random series that is real for real arguments (conjugate-symmetric)."""
    center = [1.5] * d if center is None else center
    f = FourierTaylorSeries.zero(d, center, degree)
    for _ in range(n_modes):
        k = tuple(int(rng.integers(-max_order, max_order + 1)) for _ in range(d))
        l = int(rng.integers(-max_order, max_order + 1))
        order = sum(abs(x) for x in k) + abs(l)
        if order > max_order:
            continue
        poly = {}
        for alpha in _alphas(d, degree):
            if rng.random() < 0.5:
                continue
            c = (rng.normal() + 1j * rng.normal()) * amp * np.exp(-decay * order)
            poly[alpha] = c
        if not poly:
            poly = {tuple([0] * d): complex(rng.normal()) * amp}
        f = f + FourierTaylorSeries(d, center, degree, {(k, l): poly})
    return f.real_part_series()


def _alphas(d, degree):
    if d == 1:
        return [(e,) for e in range(degree + 1)]
    out = []

    def rec(prefix, remaining):
        if len(prefix) == d:
            out.append(tuple(prefix))
            return
        for e in range(remaining + 1):
            rec(prefix + [e], remaining - e)
    rec([], degree)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
