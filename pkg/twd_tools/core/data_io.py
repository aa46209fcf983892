"""
Trajectory data ingestion and serialization.

- Raw records: UTF-8 text, one `frame agent x y` record per line
  (whitespace separated, `#` comment lines ignored). This is the ETH-UCY layout;
  other sources are converted to it beforehand.
- Scenes: fixed-length sliding windows over the frame timeline that keep only
  agents observed at every frame of the window.
- Dataset container (little endian):

      magic        4 bytes  b"TWDS"
      format_version  u32
      n_obs           u32
      m_pred          u32
      frame_interval  f64
      scene_count     u32
      split_tag       u8   (index into SPLIT_TAGS)
      per scene:  num_agents u32, agent_ids i64[N],
                  observed f64[N*n*2], future f64[N*m*2]
"""

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from math import gcd
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from ..utils.exceptions import EmptyDatasetError, FormatError, InvalidArgumentError, ParseError
from .types import SPLIT_TAGS, Dataset, FutureWindow, ObservedWindow, PredictionSet, Scene, validate_scene

MAGIC = b'TWDS'
FORMAT_VERSION = 1
_HEADER = struct.Struct('<4sIIIdIB')
_COUNT = struct.Struct('<I')
_ID_RANGE = (-2 ** 63, 2 ** 63 - 1)


class RawRecord(NamedTuple):
    """One position sample: agent `agent_id` at frame `frame_id`."""
    frame_id: int
    agent_id: int
    x: float
    y: float


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window setup: observed length, prediction length, stride, seconds per step."""
    n_obs: int = 8
    m_pred: int = 12
    stride: int = 1
    frame_interval: float = 0.4

    def __post_init__(self):
        if self.n_obs < 1 or self.m_pred < 1 or self.stride < 1:
            raise InvalidArgumentError(f"WindowSpec counts must all be >= 1: {self}")
        if not self.frame_interval > 0:
            raise InvalidArgumentError(f"frame_interval must be > 0, got {self.frame_interval}")

    @property
    def total(self) -> int:
        return self.n_obs + self.m_pred


def _parse_int(token: str) -> int:
    value = float(token)
    if not value.is_integer():
        raise ValueError(f"'{token}' is not an integer")
    return int(value)


def parse_records(stream: Union[str, Iterable[str]]) -> List[RawRecord]:
    """Parse `frame agent x y` lines into records, in file order."""
    lines = stream.splitlines() if isinstance(stream, str) else stream
    records = []
    for line_number, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith('#'):
            continue
        fields = text.split()
        if len(fields) != 4:
            raise ParseError(f"expected 4 fields 'frame agent x y', got {len(fields)}", line_number)
        try:
            frame_id = _parse_int(fields[0])
            agent_id = _parse_int(fields[1])
            x, y = float(fields[2]), float(fields[3])
        except ValueError as e:
            raise ParseError(f"malformed record '{text}': {e}", line_number)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ParseError(f"non-finite coordinate in '{text}'", line_number)
        records.append(RawRecord(frame_id, agent_id, x, y))
    return records


def read_records(path: Union[str, Path]) -> List[RawRecord]:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_records(f)


def _frame_grid(frames: Sequence[int]) -> List[int]:
    """The arithmetic frame timeline spanned by the recorded frames."""
    unique = sorted(set(frames))
    if len(unique) == 1:
        return unique
    step = 0
    for a, b in zip(unique, unique[1:]):
        step = gcd(step, b - a)
    return list(range(unique[0], unique[-1] + 1, step))


def extract_scenes(records: Sequence[RawRecord], spec: WindowSpec,
                   split_tag: str = 'train') -> Dataset:
    """
    Cut fixed-length scenes from raw records.

    For every window start (stepping by stride) a scene keeps exactly the agents
    present at all n_obs + m_pred consecutive frames, in ascending agent id.
    Windows with no complete agent are skipped. Nothing is interpolated.
    """
    if not records:
        raise EmptyDatasetError("No records to extract scenes from")
    by_frame: Dict[int, Dict[int, Tuple[float, float]]] = {}
    for record in records:
        by_frame.setdefault(record.frame_id, {})[record.agent_id] = (record.x, record.y)
    grid = _frame_grid(list(by_frame))

    scenes = []
    for start in range(0, len(grid) - spec.total + 1, spec.stride):
        frames = grid[start:start + spec.total]
        present = [set(by_frame.get(frame, {})) for frame in frames]
        complete = sorted(set.intersection(*present))
        if not complete:
            continue
        positions = np.array(
            [[by_frame[frame][agent] for frame in frames] for agent in complete],
            dtype=np.float64,
        )
        scenes.append(Scene(
            ObservedWindow(positions[:, :spec.n_obs], tuple(complete)),
            FutureWindow(positions[:, spec.n_obs:]),
            spec.frame_interval,
        ))
    if not scenes:
        raise EmptyDatasetError(
            f"No window of {spec.total} frames contains an agent observed at every frame"
        )
    return Dataset(tuple(scenes), split_tag)


def dataset_to_bytes(dataset: Dataset) -> bytes:
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, dataset.n, dataset.m, dataset.frame_interval,
                          len(dataset), SPLIT_TAGS.index(dataset.split_tag))]
    for index, scene in enumerate(dataset):
        outside = [a for a in scene.observed.agent_ids if not _ID_RANGE[0] <= a <= _ID_RANGE[1]]
        if outside:
            raise FormatError(f"Scene {index} has agent ids outside the int64 range: {outside}")
        parts.append(_COUNT.pack(scene.observed.num_agents))
        parts.append(np.asarray(scene.observed.agent_ids, dtype='<i8').tobytes())
        parts.append(scene.observed.positions.astype('<f8').tobytes())
        parts.append(scene.future.positions.astype('<f8').tobytes())
    return b''.join(parts)


def dataset_from_bytes(blob: bytes) -> Dataset:
    if len(blob) < _HEADER.size:
        raise FormatError("Dataset file is truncated (incomplete header)")
    magic, version, n, m, frame_interval, count, split_index = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"Not a dataset container (magic {magic!r}, expected {MAGIC!r})")
    if version != FORMAT_VERSION:
        raise FormatError(f"Unsupported dataset format_version {version}, expected {FORMAT_VERSION}")
    if count == 0:
        raise EmptyDatasetError("Dataset file contains no scenes")
    if split_index >= len(SPLIT_TAGS):
        raise FormatError(f"Unknown split tag index {split_index}")

    offset = _HEADER.size
    scenes = []

    def take(size: int) -> bytes:
        nonlocal offset
        if offset + size > len(blob):
            raise FormatError(f"Dataset file is truncated at byte {offset}")
        chunk = blob[offset:offset + size]
        offset += size
        return chunk

    for index in range(count):
        (num_agents,) = _COUNT.unpack(take(_COUNT.size))
        agent_ids = tuple(int(a) for a in np.frombuffer(take(8 * num_agents), dtype='<i8'))
        observed = np.frombuffer(take(8 * num_agents * n * 2), dtype='<f8').reshape(num_agents, n, 2)
        future = np.frombuffer(take(8 * num_agents * m * 2), dtype='<f8').reshape(num_agents, m, 2)
        scene = Scene(ObservedWindow(observed, agent_ids), FutureWindow(future), frame_interval)
        violation = validate_scene(scene)
        if violation:
            raise FormatError(f"Scene {index} in dataset file is malformed: {violation}")
        scenes.append(scene)
    if offset != len(blob):
        raise FormatError(f"Dataset file has {len(blob) - offset} trailing bytes")
    return Dataset(tuple(scenes), SPLIT_TAGS[split_index])


def write_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dataset_to_bytes(dataset))
    return path


def read_dataset(path: Union[str, Path]) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())


def dataset_digest(dataset: Dataset) -> str:
    """SHA-256 of the serialized dataset; equal digests mean identical inputs."""
    return hashlib.sha256(dataset_to_bytes(dataset)).hexdigest()


def write_predictions(dataset: Dataset, predictions: Sequence[PredictionSet],
                      path: Union[str, Path]) -> Path:
    """Write per-scene predictions as JSON (agent ids plus K x N x m x 2 samples)."""
    if len(predictions) != len(dataset):
        raise InvalidArgumentError(
            f"{len(predictions)} prediction sets for {len(dataset)} scenes"
        )
    payload = {
        'format_version': FORMAT_VERSION,
        'frame_interval': dataset.frame_interval,
        'scenes': [
            {'agent_ids': list(scene.observed.agent_ids), 'samples': predset.samples.tolist()}
            for scene, predset in zip(dataset, predictions)
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload), encoding='utf-8')
    return path
