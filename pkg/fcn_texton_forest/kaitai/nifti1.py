# This is a generated file! Please edit source .ksy file and use kaitai-struct-compiler to rebuild

import kaitaistruct
from kaitaistruct import KaitaiStruct, KaitaiStream, BytesIO
from enum import Enum


if getattr(kaitaistruct, "API_VERSION", (0, 9)) < (0, 9):
    raise Exception(
        "Incompatible Kaitai Struct Python API: 0.9 or later is required, but you have %s"
        % (kaitaistruct.__version__)
    )


class Nifti1(KaitaiStruct):
    """Single-file NIfTI-1 header followed by the voxel payload at vox_offset.
    Only the fields needed to read 3D scalar volumes are interpreted,
    orientation fields are parsed but ignored by the reader.
    """

    class Datatypes(Enum):
        uint8 = 2
        int16 = 4
        int32 = 8
        float32 = 16
        float64 = 64
        int8 = 256
        uint16 = 512
        uint32 = 768

    def __init__(self, _io, _parent=None, _root=None):
        self._io = _io
        self._parent = _parent
        self._root = _root if _root else self
        self._read()

    def _read(self):
        self.sizeof_hdr = self._io.read_s4le()
        self.data_type = self._io.read_bytes(10)
        self.db_name = self._io.read_bytes(18)
        self.extents = self._io.read_s4le()
        self.session_error = self._io.read_s2le()
        self.regular = self._io.read_u1()
        self.dim_info = self._io.read_u1()
        self.dim = [None] * (8)
        for i in range(8):
            self.dim[i] = self._io.read_s2le()

        self.intent_p1 = self._io.read_f4le()
        self.intent_p2 = self._io.read_f4le()
        self.intent_p3 = self._io.read_f4le()
        self.intent_code = self._io.read_s2le()
        self.datatype = KaitaiStream.resolve_enum(
            Nifti1.Datatypes, self._io.read_s2le()
        )
        self.bitpix = self._io.read_s2le()
        self.slice_start = self._io.read_s2le()
        self.pixdim = [None] * (8)
        for i in range(8):
            self.pixdim[i] = self._io.read_f4le()

        self.vox_offset = self._io.read_f4le()
        self.scl_slope = self._io.read_f4le()
        self.scl_inter = self._io.read_f4le()
        self.slice_end = self._io.read_s2le()
        self.slice_code = self._io.read_u1()
        self.xyzt_units = self._io.read_u1()
        self.cal_max = self._io.read_f4le()
        self.cal_min = self._io.read_f4le()
        self.slice_duration = self._io.read_f4le()
        self.toffset = self._io.read_f4le()
        self.glmax = self._io.read_s4le()
        self.glmin = self._io.read_s4le()
        self.descrip = self._io.read_bytes(80)
        self.aux_file = self._io.read_bytes(24)
        self.qform_code = self._io.read_s2le()
        self.sform_code = self._io.read_s2le()
        self.quatern = [None] * (3)
        for i in range(3):
            self.quatern[i] = self._io.read_f4le()

        self.qoffset = [None] * (3)
        for i in range(3):
            self.qoffset[i] = self._io.read_f4le()

        self.srow_x = [None] * (4)
        for i in range(4):
            self.srow_x[i] = self._io.read_f4le()

        self.srow_y = [None] * (4)
        for i in range(4):
            self.srow_y[i] = self._io.read_f4le()

        self.srow_z = [None] * (4)
        for i in range(4):
            self.srow_z[i] = self._io.read_f4le()

        self.intent_name = self._io.read_bytes(16)
        self.magic = self._io.read_bytes(4)

    @property
    def payload(self):
        if hasattr(self, "_m_payload"):
            return self._m_payload if hasattr(self, "_m_payload") else None

        _pos = self._io.pos()
        self._io.seek(int(self.vox_offset))
        self._m_payload = self._io.read_bytes_full()
        self._io.seek(_pos)
        return self._m_payload if hasattr(self, "_m_payload") else None
