# qmsep/schemas.py - JSON model files and report serialization
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator


class MatrixObject(BaseModel):
    """Complex matrix stored as separate real and imaginary parts."""

    re: List[List[float]]
    im: List[List[float]]

    @field_validator("re", "im")
    @classmethod
    def _rectangular(cls, rows: List[List[float]]) -> List[List[float]]:
        if not rows or any(len(row) != len(rows[0]) for row in rows):
            raise ValueError("matrix rows must be non-empty and of equal length")
        if not all(math.isfinite(x) for row in rows for x in row):
            raise ValueError("matrix entries must be finite")
        return rows

    @model_validator(mode="after")
    def _matching_parts(self) -> "MatrixObject":
        if np.shape(self.re) != np.shape(self.im):
            raise ValueError(f"re and im shapes differ: {np.shape(self.re)} vs {np.shape(self.im)}")
        return self

    @property
    def shape(self):
        return np.shape(self.re)

    def to_array(self) -> np.ndarray:
        return np.asarray(self.re, dtype=float) + 1j * np.asarray(self.im, dtype=float)

    @classmethod
    def from_array(cls, A) -> "MatrixObject":
        A = np.asarray(A, dtype=complex)
        return cls(re=A.real.tolist(), im=A.imag.tolist())


class ModelFile(BaseModel):
    dim: int = Field(ge=2)
    H: MatrixObject
    L: List[MatrixObject] = Field(min_length=1)
    rho: Optional[MatrixObject] = None
    metadata: Dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _square_of_dim(self) -> "ModelFile":
        expected = (self.dim, self.dim)
        named = [("H", self.H)] + [(f"L[{idx}]", L) for idx, L in enumerate(self.L)]
        if self.rho is not None:
            named.append(("rho", self.rho))
        for name, matrix in named:
            if matrix.shape != expected:
                raise ValueError(f"{name} has shape {matrix.shape}, expected {expected}")
        return self

    def hamiltonian(self) -> np.ndarray:
        return self.H.to_array()

    def jumps(self) -> List[np.ndarray]:
        return [L.to_array() for L in self.L]


def validation_messages(error) -> str:
    """One line per pydantic error: dotted location and message."""
    return "; ".join(f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}"
                     for err in error.errors())


def digest(paths: List[Path]) -> str:
    sha = hashlib.sha256()
    for path in paths:
        sha.update(Path(path).read_bytes())
    return sha.hexdigest()


def json_number(x: float):
    """Finite floats stay numbers (shortest round-trip repr); infinities become strings."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def to_jsonable(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        if value.ndim == 2:
            return to_jsonable(MatrixObject.from_array(value))
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": json_number(value.real), "im": json_number(value.imag)}
    if isinstance(value, (float, np.floating)):
        return json_number(value)
    return value


def dumps(report: Dict[str, Any]) -> str:
    return json.dumps(to_jsonable(report), indent=2, sort_keys=True, ensure_ascii=False)
