"""AdamW updates and parameter-store checkpointing."""
import numpy as np
import pytest

from proxycomplete.nn.optim import adamw_step
from proxycomplete.nn.params import ParameterStore, parse_checkpoint
from proxycomplete.nn.tensor import Tensor


class TestAdamW:
    def test_no_gradient_no_change(self):
        store = ParameterStore(seed=0)
        p = store.create("p", (4,), fan_in=4)
        before = p.data.copy()
        adamw_step(store, weight_decay=0.0)
        np.testing.assert_array_equal(p.data, before)

    def test_zero_gradient_zero_decay_unchanged(self):
        store = ParameterStore(seed=0)
        p = store.create("p", (4,), fan_in=4)
        p.grad = np.zeros(4)
        before = p.data.copy()
        adamw_step(store, weight_decay=0.0)
        np.testing.assert_array_equal(p.data, before)

    def test_single_scalar_matches_hand_recurrence(self):
        store = ParameterStore(seed=0)
        p = store.create("p", (1,), zero=True)
        p.data[0] = 2.0
        p.grad = np.array([0.5])
        lr, wd, b1, b2, eps = 1e-3, 0.01, 0.9, 0.999, 1e-8
        adamw_step(store, lr=lr, weight_decay=wd, betas=(b1, b2), eps=eps)

        m = (1 - b1) * 0.5
        v = (1 - b2) * 0.25
        m_hat = m / (1 - b1)
        v_hat = v / (1 - b2)
        expected = 2.0 - lr * (m_hat / (np.sqrt(v_hat) + eps) + wd * 2.0)
        assert p.data[0] == pytest.approx(expected, abs=1e-12)
        assert store.step_count == 1

    def test_two_steps_hand_recurrence(self):
        store = ParameterStore(seed=0)
        p = store.create("p", (1,), zero=True)
        theta = 1.5
        p.data[0] = theta
        lr, wd, b1, b2, eps = 2e-3, 0.0, 0.9, 0.999, 1e-8
        m = v = 0.0
        for t, g in enumerate([0.3, -0.2], start=1):
            p.grad = np.array([g])
            adamw_step(store, lr=lr, weight_decay=wd, betas=(b1, b2), eps=eps)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        assert p.data[0] == pytest.approx(theta, abs=1e-12)

    def test_decoupled_weight_decay_shrinks(self):
        store = ParameterStore(seed=0)
        p = store.create("p", (1,), zero=True)
        p.data[0] = 10.0
        p.grad = np.zeros(1)
        adamw_step(store, lr=0.1, weight_decay=0.5)
        assert p.data[0] == pytest.approx(10.0 - 0.1 * 0.5 * 10.0)


class TestParameterStore:
    def test_unique_names(self):
        store = ParameterStore()
        store.create("a", (2,))
        with pytest.raises(ValueError):
            store.create("a", (2,))

    def test_creation_order_stable(self):
        store = ParameterStore(seed=1)
        for name in ("z", "a", "m"):
            store.create(name, (1,), fan_in=1)
        assert store.names() == ["z", "a", "m"]

    def test_same_seed_same_init(self):
        a = ParameterStore(seed=5)
        b = ParameterStore(seed=5)
        pa = a.create("w", (3, 3), fan_in=3)
        pb = b.create("w", (3, 3), fan_in=3)
        np.testing.assert_array_equal(pa.data, pb.data)


class TestCheckpointFormat:
    def _store(self):
        store = ParameterStore(seed=7)
        store.create("layer.w", (3, 4), fan_in=3)
        store.create("layer.b", (4,), zero=True)
        store.create("head.w", (4, 2), fan_in=4)
        return store

    def test_magic(self):
        assert self._store().serialize()[:4] == b"PXF1"

    def test_serialize_roundtrip_byte_identical(self):
        store = self._store()
        blob = store.serialize()
        store.load(blob)
        assert store.serialize() == blob

    def test_values_survive_roundtrip(self):
        store = self._store()
        blob = store.serialize()
        expected = {name: t.data.astype("<f4") for name, t in store.items()}
        other = self._store()
        other.load(blob)
        for name, t in other.items():
            np.testing.assert_array_equal(t.data.astype("<f4"), expected[name])

    def test_checksum_detects_corruption(self):
        blob = bytearray(self._store().serialize())
        blob[10] ^= 0xFF
        with pytest.raises(ValueError, match="checksum"):
            parse_checkpoint(bytes(blob))

    def test_bad_magic_rejected(self):
        with pytest.raises(ValueError, match="magic"):
            parse_checkpoint(b"NOPE" + b"\x00" * 16)

    def test_shape_mismatch_rejected(self):
        blob = self._store().serialize()
        other = ParameterStore()
        other.create("layer.w", (3, 5))
        other.create("layer.b", (4,), zero=True)
        other.create("head.w", (4, 2))
        with pytest.raises(ValueError, match="shape mismatch"):
            other.load(blob)

    def test_missing_parameter_rejected(self):
        blob = self._store().serialize()
        other = ParameterStore()
        other.create("layer.w", (3, 4))
        other.create("unknown", (1,))
        with pytest.raises(ValueError, match="unknown"):
            other.load(blob)

    def test_file_roundtrip(self, tmp_path):
        store = self._store()
        path = tmp_path / "model.pxf"
        store.save(path)
        other = self._store()
        other.load_file(path)
        assert other.serialize() == store.serialize()

    def test_zero_grads(self):
        store = self._store()
        for t in store.tensors():
            t.grad = np.ones_like(t.data)
        store.zero_grads()
        assert all(t.grad is None for t in store.tensors())

    def test_total_parameters(self):
        assert self._store().total_parameters() == 3 * 4 + 4 + 4 * 2
