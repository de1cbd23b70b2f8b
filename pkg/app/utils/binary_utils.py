# app/utils/binary_utils.py
"""Lectura y escritura de contenedores binarios little-endian (DLDS y DLDC)."""
import json
import struct
from typing import Any, BinaryIO, Dict, Tuple

import numpy as np

from app.core.exceptions import ArtifactFormatError


class BinaryWriter:
    """Escritor secuencial de campos little-endian"""

    def __init__(self, stream: BinaryIO):
        self.stream = stream

    def magic(self, value: bytes) -> None:
        self.stream.write(value)

    def u8(self, value: int) -> None:
        self.stream.write(struct.pack("<B", value))

    def u16(self, value: int) -> None:
        self.stream.write(struct.pack("<H", value))

    def u32(self, value: int) -> None:
        self.stream.write(struct.pack("<I", value))

    def u64(self, value: int) -> None:
        self.stream.write(struct.pack("<Q", value))

    def u32_array(self, values) -> None:
        self.stream.write(np.asarray(values, dtype="<u4").tobytes())

    def f64_array(self, values: np.ndarray) -> None:
        self.stream.write(np.ascontiguousarray(values, dtype="<f8").tobytes())

    def json_block(self, payload: Dict[str, Any]) -> None:
        """Bloque JSON con claves ordenadas, precedido de su longitud u32"""
        raw = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
        self.u32(len(raw))
        self.stream.write(raw)

    def named_tensor(self, name: str, values: np.ndarray) -> None:
        """Nombre (u16 + utf-8), rango u8, dimensiones u32[], datos f64"""
        raw = name.encode("utf-8")
        self.u16(len(raw))
        self.stream.write(raw)
        self.u8(values.ndim)
        self.u32_array(values.shape)
        self.f64_array(values)


class BinaryReader:
    """Lector secuencial simétrico a BinaryWriter"""

    def __init__(self, stream: BinaryIO, source: str = "<stream>"):
        self.stream = stream
        self.source = source

    def _read(self, size: int) -> bytes:
        raw = self.stream.read(size)
        if len(raw) != size:
            raise ArtifactFormatError(f"{self.source}: fichero truncado")
        return raw

    def expect_magic(self, value: bytes) -> None:
        found = self._read(len(value))
        if found != value:
            raise ArtifactFormatError(f"{self.source}: cabecera {found!r}, se esperaba {value!r}")

    def u8(self) -> int:
        return struct.unpack("<B", self._read(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self._read(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._read(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._read(8))[0]

    def u32_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self._read(4 * count), dtype="<u4").astype(np.int64)

    def f64_array(self, shape: Tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self._read(8 * count), dtype="<f8").astype(np.float64).reshape(shape)

    def json_block(self) -> Dict[str, Any]:
        raw = self._read(self.u32())
        try:
            block = json.loads(raw.decode("utf-8"))
        except ValueError as e:
            raise ArtifactFormatError(f"{self.source}: bloque de metadatos inválido ({e})") from e
        if not isinstance(block, dict):
            raise ArtifactFormatError(f"{self.source}: los metadatos deben ser un objeto JSON")
        return block

    def named_tensor(self) -> Tuple[str, np.ndarray]:
        raw = self._read(self.u16())
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ArtifactFormatError(f"{self.source}: nombre de tensor inválido ({e})") from e
        rank = self.u8()
        shape = tuple(int(d) for d in self.u32_array(rank))
        return name, self.f64_array(shape)

    def at_end(self) -> bool:
        return self.stream.read(1) == b""
