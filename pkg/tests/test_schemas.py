import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from qmsep.schemas import MatrixObject, ModelFile, dumps, json_number, to_jsonable, validation_messages


def test_matrix_object_validation():
    with pytest.raises(ValidationError):
        MatrixObject(re=[[1, 0], [0]], im=[[0, 0], [0, 0]])
    with pytest.raises(ValidationError):
        MatrixObject(re=[[1, 0], [0, 1]], im=[[0, 0]])
    with pytest.raises(ValidationError):
        MatrixObject(re=[[math.nan]], im=[[0.0]])


def test_matrix_object_array_conversion():
    A = np.array([[1 + 2j, 0], [0.5, -1j]])
    assert np.array_equal(MatrixObject.from_array(A).to_array(), A)
    assert MatrixObject.from_array(A).shape == (2, 2)


def test_model_file_checks_shapes():
    zero2 = MatrixObject.from_array(np.zeros((2, 2)))
    with pytest.raises(ValidationError) as excinfo:
        ModelFile(dim=2, H=zero2, L=[MatrixObject.from_array(np.zeros((3, 3)))])
    assert "L[0]" in validation_messages(excinfo.value)
    with pytest.raises(ValidationError):
        ModelFile(dim=2, H=zero2, L=[])


def test_special_floats_are_strings():
    assert json_number(math.inf) == "inf"
    assert json_number(-math.inf) == "-inf"
    assert json_number(math.nan) == "nan"
    assert json_number(np.float64(0.1)) == 0.1


def test_to_jsonable_handles_numpy_values():
    value = to_jsonable({"flag": np.bool_(True), "count": np.int64(3), "z": 1 + 2j,
                         "vec": np.array([1.0, math.inf]), "mat": np.eye(2)})
    assert value["flag"] is True
    assert value["count"] == 3
    assert value["z"] == {"re": 1.0, "im": 2.0}
    assert value["vec"] == [1.0, "inf"]
    assert value["mat"]["re"] == [[1.0, 0.0], [0.0, 1.0]]


def test_dumps_is_sorted_and_round_trips_floats():
    text = dumps({"b": 0.1 + 0.2, "a": math.log(2)})
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text)["b"] == 0.1 + 0.2
