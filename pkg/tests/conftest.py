from __future__ import annotations

import numpy as np
import pytest

from hitchin_sov import sov_engine as se
from hitchin_sov import surface_kernel as sk

HEX_ROOTS = [np.exp(1j * np.pi * k / 3) for k in range(6)]
HEX_BASEPOINT = sk.SurfacePoint(0.3 + 0.2j, 1)


@pytest.fixture(scope="session")
def ctx2():
    return se.default_context(2)


@pytest.fixture(scope="session")
def ref2():
    return se.default_reference(2)


@pytest.fixture(scope="session")
def ctx3():
    return se.default_context(3)


@pytest.fixture(scope="session")
def ref3():
    return se.default_reference(3)


@pytest.fixture(scope="session")
def hex_ctx():
    """y^2 = z^6 - 1."""
    curve = sk.HyperellipticCurve(np.polynomial.polynomial.polyfromroots(HEX_ROOTS))
    return sk.build_context(curve, HEX_BASEPOINT)


@pytest.fixture(scope="session")
def scenario2(ctx2, ref2):
    return se.make_scenario(ctx2, ref2, 3)


@pytest.fixture(scope="session")
def scenarios2(ctx2, ref2):
    return [se.make_scenario(ctx2, ref2, s) for s in range(4)]
