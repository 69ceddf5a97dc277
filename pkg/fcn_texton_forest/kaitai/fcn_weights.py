# This is a generated file! Please edit source .ksy file and use kaitai-struct-compiler to rebuild

import kaitaistruct
from kaitaistruct import KaitaiStruct, KaitaiStream, BytesIO
from enum import Enum


if getattr(kaitaistruct, "API_VERSION", (0, 9)) < (0, 9):
    raise Exception(
        "Incompatible Kaitai Struct Python API: 0.9 or later is required, but you have %s"
        % (kaitaistruct.__version__)
    )


class FcnWeights(KaitaiStruct):
    """Ordered list of convolution / transposed convolution layers with float32
    weights in (out, in, kh, kw) order followed by float32 biases.
    """

    class LayerKinds(Enum):
        conv = 0
        tconv = 1

    class Activations(Enum):
        none = 0
        relu = 1

    def __init__(self, _io, _parent=None, _root=None):
        self._io = _io
        self._parent = _parent
        self._root = _root if _root else self
        self._read()

    def _read(self):
        self.magic = self._io.read_bytes(4)
        if not self.magic == b"\x46\x43\x4E\x57":
            raise kaitaistruct.ValidationNotEqualError(
                b"\x46\x43\x4E\x57", self.magic, self._io, u"/seq/0"
            )
        self.version = self._io.read_u4le()
        self.layer_count = self._io.read_u4le()
        self.layers = [None] * (self.layer_count)
        for i in range(self.layer_count):
            self.layers[i] = FcnWeights.Layer(self._io, self, self._root)

    class Layer(KaitaiStruct):
        def __init__(self, _io, _parent=None, _root=None):
            self._io = _io
            self._parent = _parent
            self._root = _root if _root else self
            self._read()

        def _read(self):
            self.name_len = self._io.read_u4le()
            self.name = (self._io.read_bytes(self.name_len)).decode(u"UTF-8")
            self.kh = self._io.read_u4le()
            self.kw = self._io.read_u4le()
            self.cin = self._io.read_u4le()
            self.cout = self._io.read_u4le()
            self.stride = self._io.read_u4le()
            self.pad = self._io.read_u4le()
            self.kind = KaitaiStream.resolve_enum(
                FcnWeights.LayerKinds, self._io.read_u1()
            )
            self.activation = KaitaiStream.resolve_enum(
                FcnWeights.Activations, self._io.read_u1()
            )
            self.weights = self._io.read_bytes(
                (((self.cout * self.cin) * self.kh) * self.kw) * 4
            )
            self.biases = self._io.read_bytes(self.cout * 4)
