"""
Binary containers.

Matrix file (frame features, single matrices)::

    magic[4] version:u16 dtype:u8 reserved:u8 rows:u64 cols:u64 payload

Archive (named records: necks, cluster banks, label bitmaps, checkpoints)::

    magic[4] version:u16 reserved:u16 count:u32 meta_len:u32 meta_json
    { name_len:u16 name dtype:u8 ndim:u8 dims:u64*ndim payload } * count
    crc32:u32

All integers and payloads are little-endian; payloads are row-major.
"""

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .exceptions import FeatureFileError

FEATURE_MAGIC = b'DSCF'
ARCHIVE_MAGIC = b'DSCA'
FORMAT_VERSION = 1

_MATRIX_HEADER = struct.Struct('<4sHBBQQ')
_ARCHIVE_HEADER = struct.Struct('<4sHHII')
_RECORD_HEADER = struct.Struct('<HBB')
_CRC = struct.Struct('<I')

DTYPE_CODES = {
    1: np.dtype('<f4'),
    2: np.dtype('<f8'),
    3: np.dtype('u1'),
    4: np.dtype('<i8'),
}
_CODE_OF = {dtype: code for code, dtype in DTYPE_CODES.items()}


def _dtype_code(array):
    dtype = array.dtype.newbyteorder('<') if array.dtype.byteorder == '>' else array.dtype
    try:
        return _CODE_OF[np.dtype(dtype)]
    except KeyError:
        raise ValueError(f'unsupported dtype {array.dtype}') from None


def _read_bytes(path):
    path = Path(path)
    try:
        return path.read_bytes()
    except FileNotFoundError:
        raise FeatureFileError(f'{path}: no such file') from None
    except OSError as exc:
        raise FeatureFileError(f'{path}: {exc}') from exc


def first_non_finite(array):
    """Index tuple of the first non-finite entry, or None."""
    bad = np.argwhere(~np.isfinite(array))
    return tuple(int(i) for i in bad[0]) if len(bad) else None


def write_matrix(path, matrix, magic=FEATURE_MAGIC):
    matrix = np.ascontiguousarray(matrix)
    if matrix.ndim != 2:
        raise ValueError(f'expected a 2-D matrix, got shape {matrix.shape}')
    code = _dtype_code(matrix)
    header = _MATRIX_HEADER.pack(magic, FORMAT_VERSION, code, 0, *matrix.shape)
    Path(path).write_bytes(header + matrix.astype(DTYPE_CODES[code], copy=False).tobytes())


def read_matrix(path, magic=FEATURE_MAGIC, check_finite=True):
    data = _read_bytes(path)
    if len(data) < _MATRIX_HEADER.size:
        raise FeatureFileError(f'{path}: truncated header ({len(data)} bytes)')
    found, version, code, _, rows, cols = _MATRIX_HEADER.unpack_from(data)
    if found != magic:
        raise FeatureFileError(f'{path}: bad magic {found!r}, expected {magic!r}')
    if version != FORMAT_VERSION:
        raise FeatureFileError(f'{path}: container version {version}, this build reads {FORMAT_VERSION}')
    if code not in DTYPE_CODES:
        raise FeatureFileError(f'{path}: unknown element type code {code}')
    dtype = DTYPE_CODES[code]
    payload = data[_MATRIX_HEADER.size:]
    expected = rows * cols * dtype.itemsize
    if len(payload) != expected:
        raise FeatureFileError(
            f'{path}: header declares {rows}x{cols} ({expected} bytes) but payload has {len(payload)} bytes'
        )
    matrix = np.frombuffer(payload, dtype=dtype).reshape(rows, cols).copy()
    if check_finite and dtype.kind == 'f':
        bad = first_non_finite(matrix)
        if bad is not None:
            raise FeatureFileError(f'{path}: non-finite value {matrix[bad]} at row {bad[0]}, column {bad[1]}')
    return matrix


def write_archive(path, records, meta=None):
    """Write ``records`` (name -> array, insertion order kept) plus JSON ``meta``."""
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode('utf-8')
    chunks = [_ARCHIVE_HEADER.pack(ARCHIVE_MAGIC, FORMAT_VERSION, 0, len(records), len(meta_bytes)), meta_bytes]
    for name, array in records.items():
        array = np.ascontiguousarray(array)
        code = _dtype_code(array)
        encoded = name.encode('utf-8')
        chunks.append(_RECORD_HEADER.pack(len(encoded), code, array.ndim))
        chunks.append(encoded)
        chunks.append(struct.pack(f'<{array.ndim}Q', *array.shape))
        chunks.append(array.astype(DTYPE_CODES[code], copy=False).tobytes())
    body = b''.join(chunks)
    Path(path).write_bytes(body + _CRC.pack(zlib.crc32(body)))


def read_archive(path):
    """Return ``(records, meta)``; raises ``FeatureFileError`` on any corruption."""
    data = _read_bytes(path)
    if len(data) < _ARCHIVE_HEADER.size + _CRC.size:
        raise FeatureFileError(f'{path}: truncated archive')
    body, (stored_crc,) = data[:-_CRC.size], _CRC.unpack(data[-_CRC.size:])
    if zlib.crc32(body) != stored_crc:
        raise FeatureFileError(f'{path}: checksum mismatch, file is corrupted')
    magic, version, _, count, meta_len = _ARCHIVE_HEADER.unpack_from(body)
    if magic != ARCHIVE_MAGIC:
        raise FeatureFileError(f'{path}: bad magic {magic!r}, expected {ARCHIVE_MAGIC!r}')
    if version != FORMAT_VERSION:
        raise FeatureFileError(f'{path}: archive version {version}, this build reads {FORMAT_VERSION}')
    offset = _ARCHIVE_HEADER.size
    try:
        meta = json.loads(body[offset:offset + meta_len].decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as exc:
        raise FeatureFileError(f'{path}: malformed metadata block ({exc})') from exc
    offset += meta_len
    records = {}
    try:
        for _ in range(count):
            name_len, code, ndim = _RECORD_HEADER.unpack_from(body, offset)
            offset += _RECORD_HEADER.size
            name = body[offset:offset + name_len].decode('utf-8')
            offset += name_len
            shape = struct.unpack_from(f'<{ndim}Q', body, offset)
            offset += 8 * ndim
            dtype = DTYPE_CODES[code]
            size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if offset + size > len(body):
                raise FeatureFileError(f'{path}: record {name!r} runs past the end of the file')
            records[name] = np.frombuffer(body, dtype=dtype, count=size // dtype.itemsize,
                                          offset=offset).reshape(shape).copy()
            offset += size
    except (struct.error, KeyError, UnicodeDecodeError) as exc:
        raise FeatureFileError(f'{path}: malformed record table ({exc})') from exc
    if offset != len(body):
        raise FeatureFileError(f'{path}: {len(body) - offset} trailing bytes after the last record')
    return records, meta
