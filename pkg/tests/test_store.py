import struct

import numpy as np
import pytest

from sasvfusion.data import (
    Authenticity,
    EmbeddingStore,
    Trial,
    TrialLabel,
    UtteranceMeta,
    read_metadata,
    read_protocol,
    read_store,
    store_bytes,
    store_from_bytes,
    write_metadata,
    write_protocol,
    write_store,
)
from sasvfusion.exceptions import (
    BadMagicError,
    ContractViolation,
    CorruptRecordError,
    DimensionMismatchError,
    MissingUtteranceError,
    StoreFormatError,
    TruncatedFileError,
    VersionMismatchError,
)

HEADER_SIZE = 24


@pytest.fixture
def two_records(rng):
    store = EmbeddingStore(3, 2)
    store.add(UtteranceMeta("bf", "spk", Authenticity.BONA_FIDE), rng.standard_normal(3), rng.standard_normal(2))
    store.add(UtteranceMeta("sp", "spk", Authenticity.SPOOF, "A02"), rng.standard_normal(3), rng.standard_normal(2))
    return store


class TestEmbeddingStore:
    def test_dimension_checked_on_add(self):
        store = EmbeddingStore(3, 2)
        with pytest.raises(ContractViolation):
            store.add(UtteranceMeta("u", "s", "bonafide"), np.zeros(4), np.zeros(2))

    def test_duplicate_id(self, two_records):
        with pytest.raises(ContractViolation):
            two_records.add(UtteranceMeta("bf", "other", "bonafide"), np.zeros(3), np.zeros(2))

    def test_missing_utterance(self, two_records):
        with pytest.raises(MissingUtteranceError) as info:
            two_records["nope"]
        assert info.value.missing == ["nope"]
        assert "nope" not in two_records

    def test_matrices_follow_requested_order(self, two_records):
        m = two_records.asv_matrix(["sp", "bf"])
        np.testing.assert_array_equal(m[0], two_records["sp"].asv)
        assert two_records.cm_matrix(["bf"]).shape == (1, 2)

    def test_zero_dimensions_rejected(self):
        with pytest.raises(ContractViolation):
            EmbeddingStore(0, 2)


class TestRoundTrip:
    def test_bytes_round_trip(self, two_records):
        data = store_bytes(two_records)
        restored = store_from_bytes(data)
        assert restored == two_records
        assert store_bytes(restored) == data
        assert restored["sp"].meta.attack_id == "A02"
        assert restored["bf"].meta.attack_id is None

    def test_file_round_trip(self, small_store, tmp_path):
        path = write_store(small_store, tmp_path / "out" / "store.sgem")
        assert read_store(path) == small_store

    def test_empty_store(self):
        data = store_bytes(EmbeddingStore(5, 7))
        assert len(data) == HEADER_SIZE
        restored = store_from_bytes(data)
        assert len(restored) == 0
        assert (restored.asv_dim, restored.cm_dim) == (5, 7)

    def test_extreme_values_are_bit_exact(self):
        store = EmbeddingStore(4, 1)
        values = np.array([np.finfo(float).tiny, -0.0, 1e308, 5e-324])
        store.add(UtteranceMeta("ü-1", "spk é", "bonafide"), values, [np.pi])
        restored = store_from_bytes(store_bytes(store))
        assert restored["ü-1"].asv.tobytes() == values.tobytes()

    def test_header_layout(self, two_records):
        magic, version, asv_dim, cm_dim, count = struct.unpack("<4sIIIQ", store_bytes(two_records)[:HEADER_SIZE])
        assert (magic, version, asv_dim, cm_dim, count) == (b"SGEM", 1, 3, 2, 2)


class TestParseErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_store(tmp_path / "absent.sgem")

    def test_bad_magic(self, two_records):
        with pytest.raises(BadMagicError) as info:
            store_from_bytes(b"SAGA" + store_bytes(two_records)[4:])
        assert info.value.offset == 0

    def test_version(self, two_records):
        data = store_bytes(two_records)
        with pytest.raises(VersionMismatchError) as info:
            store_from_bytes(data[:4] + struct.pack("<I", 9) + data[8:])
        assert info.value.offset == 4

    def test_zero_dimension_header(self):
        with pytest.raises(DimensionMismatchError) as info:
            store_from_bytes(struct.pack("<4sIIIQ", b"SGEM", 1, 0, 2, 0))
        assert info.value.offset == 8

    @pytest.mark.parametrize("cut", [2, 10, HEADER_SIZE + 1, HEADER_SIZE + 9, -1])
    def test_truncated(self, two_records, cut):
        data = store_bytes(two_records)
        with pytest.raises(TruncatedFileError) as info:
            store_from_bytes(data[:cut])
        assert 0 <= info.value.offset <= len(data[:cut])
        assert "byte offset" in str(info.value)

    def test_record_count_larger_than_payload(self, two_records):
        data = bytearray(store_bytes(two_records))
        data[16:24] = struct.pack("<Q", 3)
        with pytest.raises(TruncatedFileError):
            store_from_bytes(bytes(data))

    def test_trailing_bytes(self, two_records):
        data = store_bytes(two_records)
        with pytest.raises(CorruptRecordError) as info:
            store_from_bytes(data + b"\x01\x02")
        assert info.value.offset == len(data)

    def test_bad_authenticity_code(self, two_records):
        data = bytearray(store_bytes(two_records))
        # first record: u16 + "bf", u16 + "spk", then the authenticity byte
        offset = HEADER_SIZE + 2 + 2 + 2 + 3
        data[offset] = 7
        with pytest.raises(CorruptRecordError) as info:
            store_from_bytes(bytes(data))
        assert info.value.offset == offset

    def test_spoof_without_attack_tag(self, two_records):
        data = bytearray(store_bytes(two_records))
        offset = HEADER_SIZE + 2 + 2 + 2 + 3
        data[offset] = 1
        with pytest.raises(CorruptRecordError):
            store_from_bytes(bytes(data))

    def test_errors_share_a_base_class(self):
        for cls in (BadMagicError, VersionMismatchError, TruncatedFileError, DimensionMismatchError,
                    CorruptRecordError):
            assert issubclass(cls, StoreFormatError)


class TestProtocolFiles:
    def test_protocol_round_trip(self, tmp_path):
        trials = [
            Trial(("a", "b", "c"), "d", TrialLabel.TARGET),
            Trial(("x",), "d", TrialLabel.NON_TARGET),
            Trial(("a", "b"), "s1", TrialLabel.SPOOF),
        ]
        path = tmp_path / "protocol.tsv"
        write_protocol(trials, path)
        assert path.read_text(encoding="utf-8").splitlines()[0] == "a,b,c\td\ttarget"
        assert read_protocol(path) == trials

    def test_metadata_round_trip(self, small_store, tmp_path):
        path = tmp_path / "metadata.tsv"
        write_metadata(small_store.metas(), path)
        assert read_metadata(path) == small_store.metas()

    def test_metadata_bad_authenticity(self, tmp_path):
        path = tmp_path / "metadata.tsv"
        path.write_text("u1\ts1\thuman\t-\n", encoding="utf-8")
        with pytest.raises(ContractViolation):
            read_metadata(path)

    def test_protocol_bad_label(self, tmp_path):
        path = tmp_path / "protocol.tsv"
        path.write_text("a\tb\timpostor\n", encoding="utf-8")
        with pytest.raises(ContractViolation):
            read_protocol(path)
