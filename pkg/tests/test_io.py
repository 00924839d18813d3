import numpy as np
import pytest

from mnlqr.errors import InvalidInputError
from mnlqr.instances import random_system
from mnlqr.io import (
    format_value,
    load_system,
    parse_inline_matrix,
    parse_key_values,
    read_matrix,
    rows_to_csv,
    save_system,
    write_matrix,
)


def test_matrix_round_trip(tmp_path, rng):
    M = rng.standard_normal((3, 2))
    write_matrix(tmp_path / "m.csv", M)
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.csv"), M)


def test_scalar_matrix_is_2d(tmp_path):
    (tmp_path / "s.csv").write_text("2.5\n")
    assert read_matrix(tmp_path / "s.csv").shape == (1, 1)


def test_read_matrix_errors(tmp_path):
    with pytest.raises(InvalidInputError):
        read_matrix(tmp_path / "missing.csv")
    (tmp_path / "bad.csv").write_text("1,x\n")
    with pytest.raises(InvalidInputError):
        read_matrix(tmp_path / "bad.csv")


def test_inline_matrix():
    np.testing.assert_array_equal(parse_inline_matrix("[1, 0; 0 2]"), [[1, 0], [0, 2]])
    np.testing.assert_array_equal(parse_inline_matrix("[3]"), [[3]])
    with pytest.raises(InvalidInputError):
        parse_inline_matrix("1, 2")
    with pytest.raises(InvalidInputError):
        parse_inline_matrix("[1, a]")


def test_key_values_grammar():
    kv = parse_key_values("# header\na = 1\n\nb=x y  # trailing\n")
    assert kv == {"a": "1", "b": "x y"}
    for bad in ("novalue\n", " = 3\n", "a = 1\na = 2\n"):
        with pytest.raises(InvalidInputError):
            parse_key_values(bad)


def test_system_directory_round_trip(tmp_path, rng):
    system = random_system(rng, 3, 2, 2)
    save_system(tmp_path / "sys", system)
    back = load_system(tmp_path / "sys")
    for name in ("A_blocks", "B_blocks", "Q", "R", "Sigma"):
        np.testing.assert_array_equal(getattr(back, name), getattr(system, name))


def test_system_config_file(tmp_path):
    (tmp_path / "A0.csv").write_text("0.5\n")
    (tmp_path / "sys.cfg").write_text(
        "A0 = A0.csv\nA1 = [0.1]\nB0 = [1]\nB1 = [0]\nQ = [1]\nR = [1]\nSigma = [1]\n")
    system = load_system(tmp_path / "sys.cfg")
    assert system.A_blocks[:, 0, 0].tolist() == [0.5, 0.1]


def test_system_config_missing_key(tmp_path):
    (tmp_path / "sys.cfg").write_text("Sigma = [1]\nA0 = [1]\n")
    with pytest.raises(InvalidInputError, match="A1"):
        load_system(tmp_path / "sys.cfg")


def test_system_shape_mismatch(tmp_path):
    (tmp_path / "sys.cfg").write_text(
        "A0 = [1, 0; 0, 1]\nA1 = [0.1]\nB0 = [1]\nB1 = [0]\nQ = [1]\nR = [1]\nSigma = [1]\n")
    with pytest.raises(InvalidInputError):
        load_system(tmp_path / "sys.cfg")


def test_missing_system_path(tmp_path):
    with pytest.raises(InvalidInputError):
        load_system(tmp_path / "nothing")


def test_format_value():
    assert format_value(None) == ""
    assert format_value(True) == "true"
    assert format_value(np.bool_(False)) == "false"
    assert format_value(3) == "3"
    assert format_value(0.1) == "0.1"
    assert format_value(float("nan")) == "nan"
    assert format_value(float("inf")) == "inf"
    assert float(format_value(1 / 3)) == 1 / 3


def test_rows_to_csv():
    text = rows_to_csv([{"a": 1, "b": None}, {"a": 2.5, "b": "x,y"}])
    assert text == 'a,b\n1,\n2.5,"x,y"\n'
