"""Model container: safetensors byte layout plus a graph manifest.

File layout::

    [8 bytes]  little-endian u64 header length N
    [N bytes]  UTF-8 JSON header, space padded to an 8-byte boundary
    [rest]     raw tensor payloads, contiguous and in header order

Header entries map tensor names to ``{"dtype", "shape", "data_offsets"}``
(offsets relative to the payload start). ``__metadata__`` holds free-form
string pairs; the graph manifest is stored as a JSON string under
``GRAPH_KEY``.
"""
import json
import logging
import os
import tempfile
import threading
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

from core.data_types import DType
from core.exceptions import ContainerIOError, CorruptionError, FormatError
from core.graph import ModelGraph
from core.tensor import Tensor
from .validation import require_valid

logger = logging.getLogger(__name__)

HEADER_SIZE_BYTES = 8
METADATA_KEY = '__metadata__'
GRAPH_KEY = 'splitquant.graph'

TensorTable = Dict[str, Tensor]
PathLike = Union[str, Path]

_write_lock = threading.Lock()


def _reject_duplicates(pairs: List[Tuple[str, Any]]) -> Dict[str, Any]:
    result: Dict[str, Any] = {}
    for key, value in pairs:
        if key in result:
            raise FormatError(f"Duplicate key '{key}' in container header")
        result[key] = value
    return result


def _parse_header(raw: bytes) -> Dict[str, Any]:
    try:
        header = json.loads(raw.decode('utf-8'), object_pairs_hook=_reject_duplicates)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"Container header is not valid UTF-8 JSON: {e}")
    if not isinstance(header, dict):
        raise FormatError("Container header must be a JSON object")
    return header


def _parse_entry(name: str, entry: Any) -> Tuple[DType, Tuple[int, ...], int, int]:
    if not isinstance(entry, dict):
        raise FormatError(f"Header entry for '{name}' must be an object")
    try:
        dtype = DType.parse(entry['dtype'])
    except (KeyError, ValueError) as e:
        raise FormatError(f"Tensor '{name}': bad dtype ({e})")
    shape = entry.get('shape')
    if not isinstance(shape, list) or not all(isinstance(d, int) and d >= 0 for d in shape):
        raise FormatError(f"Tensor '{name}': shape must be a list of non-negative integers")
    offsets = entry.get('data_offsets')
    if (not isinstance(offsets, list) or len(offsets) != 2
            or not all(isinstance(o, int) for o in offsets)):
        raise FormatError(f"Tensor '{name}': data_offsets must be two integers")
    begin, end = offsets
    if begin < 0 or end < begin:
        raise CorruptionError(f"Tensor '{name}': invalid data_offsets [{begin}, {end})")
    return dtype, tuple(shape), begin, end


def load_model(path: PathLike) -> Tuple[ModelGraph, TensorTable]:
    """Read and validate a container; tensors come back in payload order"""
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise ContainerIOError(f"Cannot read model '{path}': {e}")

    if len(blob) < HEADER_SIZE_BYTES:
        raise FormatError(f"'{path}' is too short for a container header")
    header_len = int.from_bytes(blob[:HEADER_SIZE_BYTES], 'little')
    payload_start = HEADER_SIZE_BYTES + header_len
    if payload_start > len(blob):
        raise FormatError(f"Header length {header_len} exceeds file size {len(blob)}")

    header = _parse_header(blob[HEADER_SIZE_BYTES:payload_start])
    payload = memoryview(blob)[payload_start:]

    metadata = header.pop(METADATA_KEY, {})
    if not isinstance(metadata, dict) or not all(isinstance(v, str) for v in metadata.values()):
        raise FormatError("__metadata__ must map strings to strings")
    metadata = dict(metadata)

    entries = [(name,) + _parse_entry(name, entry) for name, entry in header.items()]
    entries.sort(key=lambda e: (e[3], e[4]))

    tensors: TensorTable = {}
    cursor = 0
    for name, dtype, shape, begin, end in entries:
        if begin < cursor:
            raise CorruptionError(f"Tensor '{name}' overlaps the previous tensor at offset {begin}")
        if begin > cursor:
            raise CorruptionError(f"Gap in payload before tensor '{name}' ({cursor}..{begin})")
        if end > len(payload):
            raise CorruptionError(f"Tensor '{name}' ends at {end}, payload has {len(payload)} bytes")
        tensor = Tensor(name=name, dtype=dtype, shape=shape, data=payload[begin:end])
        if len(tensor.data) != tensor.expected_nbytes:
            raise CorruptionError(
                f"Tensor '{name}' spans {len(tensor.data)} bytes, "
                f"{dtype.value}{list(shape)} needs {tensor.expected_nbytes}"
            )
        tensors[name] = tensor
        cursor = end
    if cursor != len(payload):
        raise CorruptionError(f"{len(payload) - cursor} trailing payload bytes not covered by any tensor")

    graph_doc = metadata.pop(GRAPH_KEY, None)
    if graph_doc is None:
        graph = ModelGraph(metadata=metadata)
    else:
        try:
            parsed = json.loads(graph_doc)
        except json.JSONDecodeError as e:
            raise FormatError(f"Graph manifest is not valid JSON: {e}")
        graph = ModelGraph.from_dict(parsed, metadata=metadata)

    require_valid(graph, tensors)
    logger.info("Loaded %s: %d layers, %d tensors", path, len(graph.layers), len(tensors))
    return graph, tensors


def encode_model(graph: ModelGraph, tensors: TensorTable) -> bytes:
    """Serialize a validated model to container bytes"""
    require_valid(graph, tensors)

    header: Dict[str, Any] = {}
    offset = 0
    for name, tensor in tensors.items():
        size = len(tensor.data)
        header[name] = {
            'dtype': tensor.dtype.value,
            'shape': list(tensor.shape),
            'data_offsets': [offset, offset + size],
        }
        offset += size

    metadata = dict(graph.metadata)
    if graph.layers or graph.input_shape:
        metadata[GRAPH_KEY] = json.dumps(graph.to_dict(), separators=(',', ':'))
    if metadata:
        header[METADATA_KEY] = metadata

    raw = json.dumps(header, separators=(',', ':')).encode('utf-8')
    raw += b' ' * ((-len(raw)) % HEADER_SIZE_BYTES)
    parts = [len(raw).to_bytes(HEADER_SIZE_BYTES, 'little'), raw]
    parts.extend(tensor.data for tensor in tensors.values())
    return b''.join(parts)


def save_model(graph: ModelGraph, tensors: TensorTable, path: PathLike) -> None:
    """Validate, then write atomically; nothing is written when validation fails"""
    blob = encode_model(graph, tensors)
    target = Path(path)
    with _write_lock:
        tmp_name = None
        try:
            fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent or Path('.'))
            with os.fdopen(fd, 'wb') as f:
                f.write(blob)
            os.replace(tmp_name, target)
            tmp_name = None
        except OSError as e:
            raise ContainerIOError(f"Cannot write model '{path}': {e}")
        finally:
            if tmp_name is not None and os.path.exists(tmp_name):
                os.unlink(tmp_name)
    logger.info("Saved %s: %d layers, %d tensors, %d bytes",
                path, len(graph.layers), len(tensors), len(blob))
