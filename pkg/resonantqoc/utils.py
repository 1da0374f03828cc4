from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

Edge = Tuple[int, int]


class AttributedDict(dict):
    """A JSON-serializable dict whose keys double as attributes: `config.edges` is `config["edges"]`."""

    def __setattr__(self, key, value):
        self[key] = value

    def __getattr__(self, key):
        if key in self:
            return self[key]
        raise AttributeError(key)

    def __delattr__(self, key):
        del self[key]


def edge_key(j: int, k: int) -> Edge:
    """Normalize an unordered pair of level indices to (min, max)."""
    return (j, k) if j < k else (k, j)


def parse_edge_label(label: str) -> Tuple[int, int]:
    """
    Parse a 1-based "j,k" label as used in control and cost files.

    Returns:
        Tuple[int, int]: The zero-based pair in the order written (not normalized).
    """
    parts = [part.strip() for part in str(label).split(",")]
    if len(parts) != 2:
        raise ValueError(f"Edge label must look like 'j,k', got {label!r}")
    j, k = int(parts[0]), int(parts[1])
    return j - 1, k - 1


def format_edge_label(edge: Sequence[int]) -> str:
    """Inverse of `parse_edge_label` for a zero-based pair."""
    return f"{edge[0] + 1},{edge[1] + 1}"


def to_complex_pairs(values: Iterable[complex]) -> List[List[float]]:
    return [[float(np.real(value)), float(np.imag(value))] for value in values]


def from_complex_entries(entries: Sequence[Union[float, Sequence[float]]]) -> np.ndarray:
    """
    Read a list whose items are either real numbers or [re, im] pairs.
    """
    out = np.empty(len(entries), dtype=complex)
    for i, entry in enumerate(entries):
        if isinstance(entry, (list, tuple)):
            if len(entry) != 2:
                raise ValueError(f"Complex entries must be [re, im], got {entry!r}")
            out[i] = complex(float(entry[0]), float(entry[1]))
        else:
            out[i] = complex(float(entry), 0.0)
    return out


def wrap_angle(angle):
    """Map angles to (-pi, pi]."""
    return -np.angle(np.exp(-1j * np.asarray(angle)))
