"""Feature schema and columnar feature storage for quote requests.

Features are either numeric (float, NaN marks missing) or categorical
(symbols from a declared vocabulary, code -1 marks missing/unknown).
Every training and serving row must carry the same schema.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    vocabulary: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.kind == CATEGORICAL and not self.vocabulary:
            raise ValueError(f"categorical feature {self.name!r} needs a vocabulary")
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureSpec, ...]

    def __post_init__(self) -> None:
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature names in schema")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def spec(self, name: str) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(f"unknown feature {name!r}")

    @classmethod
    def infer(cls, rows: Iterable[Mapping[str, object]]) -> "FeatureSchema":
        """Infer kinds and vocabularies from observed rows.

        Numbers become numeric features, strings categorical; vocabularies
        are the sorted observed symbols.
        """
        kinds: dict[str, str] = {}
        vocabs: dict[str, set[str]] = {}
        for row in rows:
            for name, value in row.items():
                if value is None:
                    continue
                if isinstance(value, str):
                    kind = CATEGORICAL
                    vocabs.setdefault(name, set()).add(value)
                elif isinstance(value, (int, float, np.integer, np.floating)):
                    kind = NUMERIC
                else:
                    raise ValueError(
                        f"feature {name!r} has unsupported value {value!r}"
                    )
                prev = kinds.setdefault(name, kind)
                if prev != kind:
                    raise ValueError(f"feature {name!r} mixes numeric and symbol values")
        specs = tuple(
            FeatureSpec(name, kinds[name], tuple(sorted(vocabs.get(name, ()))))
            for name in sorted(kinds)
        )
        return cls(specs)

    def to_dict(self) -> dict:
        return {
            "features": [
                {"name": f.name, "kind": f.kind, "vocabulary": list(f.vocabulary)}
                for f in self.features
            ]
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSchema":
        return cls(
            tuple(
                FeatureSpec(f["name"], f["kind"], tuple(f.get("vocabulary", ())))
                for f in d["features"]
            )
        )


class FeatureTable:
    """Columnar feature storage: numeric float arrays and categorical codes."""

    def __init__(
        self,
        schema: FeatureSchema,
        numeric: Mapping[str, np.ndarray],
        codes: Mapping[str, np.ndarray],
        n_rows: int | None = None,
    ):
        self.schema = schema
        self.numeric = {k: np.asarray(v, dtype=np.float64) for k, v in numeric.items()}
        self.codes = {k: np.asarray(v, dtype=np.int64) for k, v in codes.items()}
        lengths = {a.shape[0] for a in self.numeric.values()}
        lengths |= {a.shape[0] for a in self.codes.values()}
        if n_rows is not None:
            lengths.add(int(n_rows))
        if len(lengths) > 1:
            raise ValueError("feature columns disagree on row count")
        self._n = lengths.pop() if lengths else 0
        for f in schema.features:
            store = self.numeric if f.kind == NUMERIC else self.codes
            if f.name not in store:
                raise ValueError(f"missing column for feature {f.name!r}")

    def __len__(self) -> int:
        return self._n

    @classmethod
    def from_rows(
        cls, rows: Iterable[Mapping[str, object]], schema: FeatureSchema
    ) -> "FeatureTable":
        rows = list(rows)
        numeric: dict[str, np.ndarray] = {}
        codes: dict[str, np.ndarray] = {}
        for f in schema.features:
            if f.kind == NUMERIC:
                col = np.full(len(rows), np.nan)
                for i, row in enumerate(rows):
                    v = row.get(f.name)
                    if v is not None:
                        col[i] = float(v)
                numeric[f.name] = col
            else:
                index = {s: k for k, s in enumerate(f.vocabulary)}
                col = np.full(len(rows), -1, dtype=np.int64)
                for i, row in enumerate(rows):
                    v = row.get(f.name)
                    if v is not None:
                        col[i] = index.get(str(v), -1)
                codes[f.name] = col
        return cls(schema, numeric, codes)

    def row(self, i: int) -> dict[str, object]:
        out: dict[str, object] = {}
        for f in self.schema.features:
            if f.kind == NUMERIC:
                v = self.numeric[f.name][i]
                out[f.name] = None if np.isnan(v) else float(v)
            else:
                c = self.codes[f.name][i]
                out[f.name] = None if c < 0 else f.vocabulary[c]
        return out

    def subset(self, idx: np.ndarray) -> "FeatureTable":
        idx = np.atleast_1d(np.asarray(idx))
        n = int(idx.sum()) if idx.dtype == bool else idx.shape[0]
        return FeatureTable(
            self.schema,
            {k: v[idx] for k, v in self.numeric.items()},
            {k: v[idx] for k, v in self.codes.items()},
            n_rows=n,
        )

    def design_matrix(self) -> tuple[np.ndarray, tuple[str, ...]]:
        """Dense numeric encoding: raw numeric columns (NaN -> 0) plus
        one indicator column per categorical symbol."""
        cols: list[np.ndarray] = []
        names: list[str] = []
        for f in self.schema.features:
            if f.kind == NUMERIC:
                cols.append(np.nan_to_num(self.numeric[f.name], nan=0.0))
                names.append(f.name)
            else:
                code = self.codes[f.name]
                for k, symbol in enumerate(f.vocabulary):
                    cols.append((code == k).astype(np.float64))
                    names.append(f"{f.name}={symbol}")
        if not cols:
            return np.zeros((self._n, 0)), ()
        return np.column_stack(cols), tuple(names)


def encode_row(schema: FeatureSchema, x: Mapping[str, object]) -> dict[str, float | int | None]:
    """Normalize a single serving-time feature mapping against the schema.

    Numeric -> float or None; categorical -> vocabulary code or -1 for an
    unknown symbol, None for missing.  Unknown feature names are rejected.
    """
    known = set(schema.names)
    extra = set(x) - known
    if extra:
        raise ValueError(f"unknown features {sorted(extra)}")
    out: dict[str, float | int | None] = {}
    for f in schema.features:
        v = x.get(f.name)
        if v is None:
            out[f.name] = None
        elif f.kind == NUMERIC:
            out[f.name] = float(v)
        else:
            try:
                out[f.name] = f.vocabulary.index(str(v))
            except ValueError:
                out[f.name] = -1
    return out
