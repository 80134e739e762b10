from math import pi, sqrt

import numpy as np
import pytest

from hybridem.frequencydomain import (
    ConvergenceTable, compute_errors, convergence_study, exact_A, exact_D, exact_H,
    run_eigen,
)


@pytest.fixture(scope="module")
def r2n16():
    return run_eigen(16, 2)


def test_exact_mode_is_normalized_eigenfunction():
    # ||A||_{L2} = 1, curl curl A = 2 A, D = -omega A, H = curl A
    h = 1e-5
    for x, y in [(0.3, 1.1), (2.0, 0.7)]:
        ax, ay = exact_A(x, y)
        H = exact_H(x, y)
        curl = ((exact_A(x + h, y)[1] - exact_A(x - h, y)[1])
                - (exact_A(x, y + h)[0] - exact_A(x, y - h)[0])) / (2 * h)
        assert abs(curl - H) < 1e-8
        dx, dy = exact_D(x, y)
        assert np.allclose([dx, dy], [-sqrt(2) * ax, -sqrt(2) * ay])
    xs = (np.arange(400) + 0.5) * pi / 400
    X, Y = np.meshgrid(xs, xs)
    ax, ay = exact_A(X, Y)
    assert abs(np.sum(ax ** 2 + ay ** 2) * (pi / 400) ** 2 - 1.0) < 1e-12


def test_table_cell_r2_n16(r2n16):
    eig, _ = r2n16
    expected = {"err_H": 9.271e-02, "err_Hhat": 6.926e-03, "err_D": 7.558e-03,
                "err_Dhat": 8.906e-03}
    for key, val in expected.items():
        assert abs(eig.errors[key] - val) <= 0.01 * val, key
    assert eig.residual <= 1e-9
    assert eig.errors["div_Dhat"] <= 1e-10


def test_table_cell_r3_n8():
    eig, _ = run_eigen(8, 3)
    assert abs(eig.errors["err_Dhat"] - 1.220e-03) <= 0.01 * 1.220e-03


def test_eigenvector_sign_and_norm(r2n16):
    eig, S = r2n16
    a = eig.A.values
    assert abs(a @ (S.M_plain @ a) - 1.0) < 1e-12
    assert abs(S.B.T @ a).max() < 1e-10
    assert eig.omega2 > 2.0


def test_analytic_reference_close_on_fine_mesh(r2n16):
    eig, _ = r2n16
    interp = dict(eig.errors)
    ana = compute_errors(eig, 2, reference="analytic")
    for key in ("err_H", "err_Hhat", "err_D", "err_Dhat"):
        assert abs(ana[key] - interp[key]) < 0.02 * interp[key]
    compute_errors(eig, 2)
    with pytest.raises(ValueError):
        compute_errors(eig, 2, reference="nodal")


def test_convergence_table_round_trip(tmp_path):
    table = convergence_study([2], [2, 4])
    assert table.row(2, 2)["rate_H"] is None
    assert table.row(2, 4)["rate_Hhat"] > 1.0
    path = tmp_path / "c.csv"
    table.write_csv(path)
    back = ConvergenceTable.read_csv(path)
    for key in ("err_H", "err_Hhat", "err_D", "err_Dhat"):
        assert back.row(2, 4)[key] == pytest.approx(table.row(2, 4)[key], rel=1e-3)
    assert back.row(2, 2)["rate_D"] is None
    with pytest.raises(KeyError):
        back.row(3, 2)


def test_parallel_matches_serial():
    a = convergence_study([2], [2, 4])
    b = convergence_study([2], [2, 4], workers=2)
    for ra, rb in zip(a.rows, b.rows):
        assert ra["err_Hhat"] == pytest.approx(rb["err_Hhat"], rel=1e-8)


def test_nonconforming_eigenmode_converges():
    errs = []
    for N in (4, 8):
        eig, S = run_eigen(N, 2, m=2)
        assert not S.conforming and eig.residual <= 1e-9
        assert abs(S.B.T @ eig.A.values).max() < 1e-10
        errs.append(abs(eig.omega2 - 2.0))
    assert errs[1] < errs[0] / 3
