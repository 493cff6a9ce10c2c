import numpy as np
import pytest
from hypothesis import settings

from boot3d.geometry.mesh import TriangleMesh, icosphere
from boot3d.recon.synthetic import SyntheticFaceSpec, generate_synthetic_face
from boot3d.render import Camera

settings.register_profile("boot3d", deadline=None, max_examples=30, derandomize=True)
settings.load_profile("boot3d")


@pytest.fixture(scope="session")
def face():
    return generate_synthetic_face(SyntheticFaceSpec.random(7))


@pytest.fixture(scope="session")
def camera():
    return Camera(image_size=(128, 128))


@pytest.fixture(scope="session")
def small_camera():
    return Camera(image_size=(32, 32))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_mesh(rng, n_vertices=60, n_triangles=80, scale=1.0) -> TriangleMesh:
    v = rng.normal(size=(n_vertices, 3)) * scale
    tris = []
    while len(tris) < n_triangles:
        t = rng.choice(n_vertices, 3, replace=False)
        tris.append(t)
    return TriangleMesh(v, np.array(tris))


def sphere(r=1.0, sub=3, center=(0.0, 0.0, 0.0)):
    return icosphere(r, sub, center)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
