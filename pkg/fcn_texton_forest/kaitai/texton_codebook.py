# This is a generated file! Please edit source .ksy file and use kaitai-struct-compiler to rebuild

import kaitaistruct
from kaitaistruct import KaitaiStruct, KaitaiStream, BytesIO
from enum import Enum


if getattr(kaitaistruct, "API_VERSION", (0, 9)) < (0, 9):
    raise Exception(
        "Incompatible Kaitai Struct Python API: 0.9 or later is required, but you have %s"
        % (kaitaistruct.__version__)
    )


class TextonCodebook(KaitaiStruct):
    class Modalities(Enum):
        flair = 0
        t1c = 1
        t2 = 2

    def __init__(self, _io, _parent=None, _root=None):
        self._io = _io
        self._parent = _parent
        self._root = _root if _root else self
        self._read()

    def _read(self):
        self.magic = self._io.read_bytes(4)
        if not self.magic == b"\x54\x58\x43\x42":
            raise kaitaistruct.ValidationNotEqualError(
                b"\x54\x58\x43\x42", self.magic, self._io, u"/seq/0"
            )
        self.k = self._io.read_u4le()
        self.dim = self._io.read_u4le()
        self.modality = KaitaiStream.resolve_enum(
            TextonCodebook.Modalities, self._io.read_u1()
        )
        self.centroids = self._io.read_bytes(((self.k * self.dim) * 4))
