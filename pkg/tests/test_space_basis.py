import numpy as np
import pytest
from scipy.special import roots_legendre

from tdbem.mesh import make_icosahedron, make_square_screen
from tdbem.space_basis import (
    eval_shape,
    global_dof_map,
    local_count,
    reference_basis,
)


def triangle_quadrature(order):
    """Tensor Gauss rule on the reference triangle via the collapsed square."""
    x, w = roots_legendre(order)
    x = (x + 1) / 2
    w = w / 2
    xi, eta = np.meshgrid(x, x, indexing="ij")
    wts = np.outer(w, w) * xi
    u = xi * (1 - eta)
    v = xi * eta
    return np.column_stack([u.ravel(), v.ravel()]), wts.ravel()


class TestReferenceBasis:
    def test_counts(self):
        assert reference_basis(0).n_local == 1
        assert reference_basis(2).n_local == 6
        assert local_count(6) == 28

    def test_constant_value(self):
        ref = reference_basis(0)
        vals = ref.eval(np.array([[0.2, 0.3], [0.1, 0.05]]))
        assert np.allclose(vals, np.sqrt(2.0), atol=1e-14)

    @pytest.mark.parametrize("q", [0, 1, 2, 3, 5, 7])
    def test_orthonormal(self, q):
        ref = reference_basis(q)
        uv, w = triangle_quadrature(max(12, 2 * q + 2))
        vals = ref.eval(uv)
        gram = vals.T @ (w[:, None] * vals)
        assert np.allclose(gram, np.eye(ref.n_local), atol=1e-12)

    @pytest.mark.parametrize("q", [1, 3, 5])
    def test_polynomial_reproduction(self, q):
        # L2 projection of any total-degree <= q polynomial is exact
        ref = reference_basis(q)
        uv, w = triangle_quadrature(2 * q + 4)
        vals = ref.eval(uv)
        rng = np.random.default_rng(3)
        for _ in range(5):
            coeff = {
                (i, j): rng.standard_normal()
                for i in range(q + 1)
                for j in range(q + 1 - i)
            }
            target = sum(
                c * uv[:, 0] ** i * uv[:, 1] ** j for (i, j), c in coeff.items()
            )
            proj_coeffs = vals.T @ (w * target)
            recon = vals @ proj_coeffs
            assert np.max(np.abs(recon - target)) < 1e-12 * max(1, np.abs(target).max())

    def test_apex_evaluation_finite(self):
        ref = reference_basis(4)
        vals = ref.eval(np.array([[0.0, 1.0]]))
        assert np.all(np.isfinite(vals))


class TestGlobalBasis:
    def test_counts_square_q1(self):
        basis = global_dof_map(make_square_screen(2), 1)
        assert basis.n_dofs == 24

    def test_counts_icosa_q0(self):
        basis = global_dof_map(make_icosahedron(1.0), 0)
        assert basis.n_dofs == 20

    def test_counts_square_q6(self):
        basis = global_dof_map(make_square_screen(2), 6)
        assert basis.n_dofs == 224

    def test_constant_dof_value(self):
        basis = global_dof_map(make_square_screen(2), 0)
        tri = 3
        coords = basis.mesh.triangle_coords(tri)
        centroid = coords.mean(axis=0)
        assert eval_shape(basis, tri, centroid) == pytest.approx(np.sqrt(2.0))

    def test_centroid_matches_reference(self):
        basis = global_dof_map(make_icosahedron(1.0), 3)
        ref_vals = basis.ref.eval(np.array([[1 / 3, 1 / 3]]))[0]
        tri = 7
        centroid = basis.mesh.triangle_coords(tri).mean(axis=0)
        vals = basis.eval_local(tri, centroid[None, :])[0]
        assert np.allclose(vals, ref_vals, atol=1e-12)

    @pytest.mark.parametrize("q", [0, 1, 2, 4])
    def test_physical_mass_matrix(self, q):
        # int over T of shape_i shape_j = 2 * area * delta_ij
        mesh = make_icosahedron(1.0)
        basis = global_dof_map(mesh, q)
        uv, w = triangle_quadrature(2 * q + 4)
        tri = 11
        pts = basis.to_physical(tri, uv)
        vals = basis.eval_local(tri, pts)
        area = mesh.areas()[tri]
        gram = vals.T @ (w[:, None] * vals) * (2 * area)
        assert np.allclose(gram, 2 * area * np.eye(basis.n_local), atol=1e-12)

    def test_point_outside_raises(self):
        basis = global_dof_map(make_square_screen(2), 1)
        with pytest.raises(ValueError, match="outside"):
            eval_shape(basis, 0, np.array([10.0, 10.0, 0.0]))

    def test_round_trip_mapping(self):
        basis = global_dof_map(make_icosahedron(2.0), 2)
        rng = np.random.default_rng(11)
        for tri in (0, 9, 19):
            uv = rng.uniform(0, 0.5, size=(5, 2))
            pts = basis.to_physical(tri, uv)
            back = basis.to_reference(tri, pts)
            assert np.allclose(back, uv, atol=1e-12)

    def test_find_triangle(self):
        basis = global_dof_map(make_square_screen(2), 1)
        pt = np.array([0.3, 0.1, 0.0])
        tri = basis.find_triangle(pt)
        assert tri >= 0
        uv = basis.to_reference(tri, pt[None])[0]
        assert uv[0] >= -1e-12 and uv[1] >= -1e-12 and uv.sum() <= 1 + 1e-12
        assert basis.find_triangle(np.array([5.0, 5.0, 0.0])) == -1
