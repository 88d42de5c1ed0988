"""Momentum-space and twist-space reference values.

The integer invariants below are frozen from these independent routes:
the Diophantine rule for Hofstadter gaps, the known Haldane phase diagram,
and the Wannier-centre winding of the Rice-Mele loop.
"""
import numpy as np
import pytest

from topocurrent import oracles as o
from topocurrent.models import haldane


@pytest.mark.parametrize("p, q, bands, expect", [
    # r-th gap Chern number t solves r = q s + p t with |t| <= q/2
    (1, 3, 1, 1), (1, 3, 2, -1), (1, 5, 1, 1), (1, 5, 2, 2),
])
def test_tknn_hofstadter_follows_diophantine_rule(p, q, bands, expect):
    assert o.tknn_hofstadter(p, q, bands, N=30) == expect


@pytest.mark.parametrize("m, expect", [(0.0, -1), (2.0, 0)])
def test_tknn_haldane(m, expect):
    # trivial once |m| exceeds 3 sqrt(3) t2 sin(phi)
    assert o.tknn_haldane(m=m, N=30) == expect


def test_fhs_of_constant_frame_is_zero():
    frames = np.tile(np.eye(3)[:, :1], (6, 6, 1, 1))
    assert o.fhs_chern(frames) == 0.0


def test_hofstadter_bloch_matches_real_space_spectrum(hof12):
    cells = 12 // 3
    ev = [np.linalg.eigvalsh(o.hofstadter_bloch(2 * np.pi * a / cells, 2 * np.pi * b / 12))
          for a in range(cells) for b in range(12)]
    np.testing.assert_allclose(np.sort(np.concatenate(ev)), np.sort(hof12.evals), atol=1e-10)


def test_haldane_bloch_matches_real_space_spectrum():
    m = haldane(Lx=6, Ly=6)
    # the torus is rectangular: k.(6, 0) and k.(0, 3 sqrt3) are multiples of 2 pi,
    # so in reduced coordinates k1 = 2 pi n / 6 and k2 = pi n / 6 + 2 pi l / 6
    ks = {(round((n / 6) % 1, 9), round((n / 12 + l / 6) % 1, 9))
          for n in range(12) for l in range(6)}
    assert len(ks) == 36
    ev = [np.linalg.eigvalsh(o.haldane_bloch(2 * np.pi * a, 2 * np.pi * b)) for a, b in ks]
    np.testing.assert_allclose(np.sort(np.concatenate(ev)), np.sort(m.evals), atol=1e-10)


def test_zak_winding_is_one():
    assert o.zak_winding() == pytest.approx(1.0, abs=1e-9)
    # a quarter of the loop moves the Wannier centre part of the way only
    x = o.wannier_centers([0.0, 0.25])
    assert 0 < (x[1] - x[0]) % 1 < 1


def test_interacting_pump_oracle_is_one():
    assert o.ed_pump_oracle() == 1
