import numpy as np
import pytest

from dwlab import io as dio
from dwlab.dynamics import TorusPoint, birkhoff_average
from dwlab.errors import InvalidInputError
from dwlab.geometry import Circle, Constant, MatrixInput
from dwlab.spectral import assemble_operator, fourier_second_derivative, linearize, solve_spectrum


def test_spectrum_csv_roundtrip(tmp_path):
    spec = solve_spectrum(linearize(assemble_operator(Circle(2 * np.pi, 16), Constant(0.1))))
    path = dio.write_spectrum_csv(tmp_path / "spectrum.csv", spec)
    assert path.read_text().splitlines()[0] == "index,re_tau,im_tau,neg_im,cond_flag"
    np.testing.assert_array_equal(dio.read_spectrum_csv(path), spec.eigenvalues)


def test_spectrum_csv_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(InvalidInputError):
        dio.read_spectrum_csv(path)


def test_matrix_market_roundtrip(tmp_path):
    lap = fourier_second_derivative(12, 2 * np.pi)
    dio.write_matrix_market(tmp_path / "lap.mtx", lap)
    geo = MatrixInput(str(tmp_path / "lap.mtx"), volume=2 * np.pi)
    np.testing.assert_allclose(geo.laplacian, lap, rtol=0, atol=1e-12)
    op = assemble_operator(geo, Constant(0.1))
    assert op.n == 12


def test_matrix_market_missing(tmp_path):
    with pytest.raises(InvalidInputError, match="not found"):
        MatrixInput(str(tmp_path / "nope.mtx"))


def test_json_handles_numpy_and_nonfinite(tmp_path):
    path = dio.write_json(tmp_path / "x.json", {"a": np.float64(0.5), "b": np.array([1, 2]), "c": float("nan")})
    assert path.read_text() == '{\n  "a": 0.5,\n  "b": [\n    1,\n    2\n  ],\n  "c": null\n}\n'


def test_csv_floats_are_exact(tmp_path):
    x = 0.1 + 0.2
    path = dio.write_csv(tmp_path / "f.csv", ["x"], [(x,)])
    assert float(dio.read_csv(path)[0]["x"]) == x


def test_trajectory_csv(tmp_path):
    p = TorusPoint((0.1, 0.2), (0.6, 0.8), (1.0, 1.0))
    sample = birkhoff_average(0.5, p, 4)
    path = dio.write_trajectory_csv(tmp_path / "traj.csv", [sample])
    rows = dio.read_csv(path)
    assert list(rows[0]) == ["sample_id", "t", "x0", "x1", "xi0", "xi1", "birkhoff_sum"]
    assert len(rows) == 4 and float(rows[-1]["birkhoff_sum"]) == 2.0
