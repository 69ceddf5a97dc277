# This is a generated file! Please edit source .ksy file and use kaitai-struct-compiler to rebuild

import kaitaistruct
from kaitaistruct import KaitaiStruct, KaitaiStream, BytesIO


if getattr(kaitaistruct, "API_VERSION", (0, 9)) < (0, 9):
    raise Exception(
        "Incompatible Kaitai Struct Python API: 0.9 or later is required, but you have %s"
        % (kaitaistruct.__version__)
    )


class ScoreMap(KaitaiStruct):
    """float32 scores, voxels in x-fastest order, the channels of one voxel
    stored contiguously.
    """

    def __init__(self, _io, _parent=None, _root=None):
        self._io = _io
        self._parent = _parent
        self._root = _root if _root else self
        self._read()

    def _read(self):
        self.magic = self._io.read_bytes(4)
        if not self.magic == b"\x53\x43\x4D\x50":
            raise kaitaistruct.ValidationNotEqualError(
                b"\x53\x43\x4D\x50", self.magic, self._io, u"/seq/0"
            )
        self.nx = self._io.read_u4le()
        self.ny = self._io.read_u4le()
        self.nz = self._io.read_u4le()
        self.channels = self._io.read_u4le()
        self.scores = self._io.read_bytes(
            ((((self.nx * self.ny) * self.nz) * self.channels) * 4)
        )
