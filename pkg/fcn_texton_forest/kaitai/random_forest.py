# This is a generated file! Please edit source .ksy file and use kaitai-struct-compiler to rebuild

import kaitaistruct
from kaitaistruct import KaitaiStruct, KaitaiStream, BytesIO
from enum import Enum


if getattr(kaitaistruct, "API_VERSION", (0, 9)) < (0, 9):
    raise Exception(
        "Incompatible Kaitai Struct Python API: 0.9 or later is required, but you have %s"
        % (kaitaistruct.__version__)
    )


class RandomForest(KaitaiStruct):
    """Config block followed by n_trees trees, each serialized in pre-order.
    A split node carries the feature index and float32 threshold
    (x <= threshold goes left); a leaf carries its per-class sample counts.
    """

    class NodeKinds(Enum):
        split = 0
        leaf = 1

    def __init__(self, _io, _parent=None, _root=None):
        self._io = _io
        self._parent = _parent
        self._root = _root if _root else self
        self._read()

    def _read(self):
        self.magic = self._io.read_bytes(4)
        if not self.magic == b"\x52\x46\x4F\x52":
            raise kaitaistruct.ValidationNotEqualError(
                b"\x52\x46\x4F\x52", self.magic, self._io, u"/seq/0"
            )
        self.n_trees = self._io.read_u4le()
        self.max_depth = self._io.read_u4le()
        self.k_attributes = self._io.read_u4le()
        self.min_leaf = self._io.read_u4le()
        self.seed = self._io.read_u8le()
        self.n_features = self._io.read_u4le()
        self.n_classes = self._io.read_u4le()
        self.trees = [None] * (self.n_trees)
        for i in range(self.n_trees):
            self.trees[i] = RandomForest.TreeNode(self._io, self, self._root)

    class TreeNode(KaitaiStruct):
        def __init__(self, _io, _parent=None, _root=None):
            self._io = _io
            self._parent = _parent
            self._root = _root if _root else self
            self._read()

        def _read(self):
            self.kind = KaitaiStream.resolve_enum(
                RandomForest.NodeKinds, self._io.read_u1()
            )
            _on = self.kind
            if _on == RandomForest.NodeKinds.split:
                self.body = RandomForest.SplitNode(self._io, self, self._root)
            elif _on == RandomForest.NodeKinds.leaf:
                self.body = RandomForest.LeafNode(self._io, self, self._root)

    class SplitNode(KaitaiStruct):
        def __init__(self, _io, _parent=None, _root=None):
            self._io = _io
            self._parent = _parent
            self._root = _root if _root else self
            self._read()

        def _read(self):
            self.feature = self._io.read_u2le()
            self.threshold = self._io.read_f4le()
            self.left = RandomForest.TreeNode(self._io, self, self._root)
            self.right = RandomForest.TreeNode(self._io, self, self._root)

    class LeafNode(KaitaiStruct):
        def __init__(self, _io, _parent=None, _root=None):
            self._io = _io
            self._parent = _parent
            self._root = _root if _root else self
            self._read()

        def _read(self):
            self.class_counts = [None] * (self._root.n_classes)
            for i in range(self._root.n_classes):
                self.class_counts[i] = self._io.read_u4le()
