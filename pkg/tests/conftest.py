import numpy as np
import pytest

import flowtopo as ft


@pytest.fixture(scope="session")
def mesh16():
    return ft.tag_boundary(ft.build_unit_square_mesh(16))


@pytest.fixture(scope="session")
def mesh20():
    return ft.tag_boundary(ft.build_unit_square_mesh(20))


@pytest.fixture(scope="session")
def mixed_psi16(mesh16):
    """Fixed mixed fluid/solid level set on the 16x16 mesh, unit norm."""
    x, y = mesh16.vertices[:, 0], mesh16.vertices[:, 1]
    psi = np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y) - 0.2
    return psi / ft.l2_norm(mesh16, psi)
