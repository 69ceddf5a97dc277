# This is a generated file! Please edit source .ksy file and use kaitai-struct-compiler to rebuild

import kaitaistruct
from kaitaistruct import KaitaiStruct, KaitaiStream, BytesIO


if getattr(kaitaistruct, "API_VERSION", (0, 9)) < (0, 9):
    raise Exception(
        "Incompatible Kaitai Struct Python API: 0.9 or later is required, but you have %s"
        % (kaitaistruct.__version__)
    )


class FeatureMatrix(KaitaiStruct):
    """Each row: n_cols float32 feature values then three int32 voxel coordinates."""

    def __init__(self, _io, _parent=None, _root=None):
        self._io = _io
        self._parent = _parent
        self._root = _root if _root else self
        self._read()

    def _read(self):
        self.magic = self._io.read_bytes(4)
        if not self.magic == b"\x46\x54\x4D\x58":
            raise kaitaistruct.ValidationNotEqualError(
                b"\x46\x54\x4D\x58", self.magic, self._io, u"/seq/0"
            )
        self.n_rows = self._io.read_u4le()
        self.n_cols = self._io.read_u4le()
        self.rows = self._io.read_bytes((self.n_rows * ((self.n_cols * 4) + 12)))
