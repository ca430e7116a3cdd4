import numpy as np
import pytest

from entmatch.autodiff import ShapeError, Tape, Tensor, softmax_probs
from entmatch.checkpoint import (CheckpointError, EmbeddingMismatchError,
                                 load_model, read_manifest, save_model)
from entmatch.data import ConfigError, RecordPair
from entmatch.model import (DeepERModel, ModelConfig, attribute_similarity,
                            encode_attribute, encode_pairs, gru_cell,
                            record_similarity)
from entmatch.text import EmbeddingStore

from fdcheck import assert_grads_close, numeric_grad

SCHEMA = ["title", "year"]


def toy_model(seed=1, schema=SCHEMA, dataset_names=None, **cfg):
    store = EmbeddingStore.hash_only(8)
    config = ModelConfig(embedding_dim=8, hidden_size=4, seed=seed, **cfg)
    return DeepERModel(schema, store, config, dataset_names=dataset_names)


def pair(left_title, right_title, left_year="2000", right_year="2000",
         label=None, n=0):
    return RecordPair(f"l{n:03d}", f"r{n:03d}",
                      {"title": left_title, "year": left_year},
                      {"title": right_title, "year": right_year}, label)


def np_sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def oracle_gru_last(dp, seq, hidden):
    """Straightforward per-token GRU recurrence on one sequence."""
    h = np.zeros(hidden)
    for x in seq:
        z = np_sigmoid(dp.W_z.data @ x + dp.U_z.data @ h + dp.b_z.data)
        r = np_sigmoid(dp.W_r.data @ x + dp.U_r.data @ h + dp.b_r.data)
        cand = np.tanh(dp.W_h.data @ x + dp.U_h.data @ (r * h) + dp.b_h.data)
        h = (1.0 - z) * h + z * cand
    return h


def oracle_encode(model, seq):
    fwd = oracle_gru_last(model.gru_fwd, seq, model.config.hidden_size)
    bwd = oracle_gru_last(model.gru_bwd, seq[::-1], model.config.hidden_size)
    return np.concatenate([fwd, bwd])


def oracle_highway(mlp, x):
    for layer in mlp.layers:
        t = np.maximum(x @ layer["W_t"].data.T + layer["b_t"].data, 0.0)
        g = np_sigmoid(x @ layer["W_g"].data.T + layer["b_g"].data)
        x = g * t + (1.0 - g) * x
    return x @ mlp.W_out.data.T + mlp.b_out.data


class TestGruCell:
    def zeroed(self):
        model = toy_model()
        for t in model.gru_fwd.tensors():
            t.data[...] = 0.0
        return model

    def test_zero_weights_zero_hidden(self):
        model = self.zeroed()
        x = np.ones(8)
        np.testing.assert_array_equal(
            gru_cell(model.gru_fwd, x, np.zeros(4)), np.zeros(4))

    def test_zero_weights_halve_hidden(self):
        model = self.zeroed()
        v = np.array([1.0, -2.0, 0.5, 4.0])
        np.testing.assert_allclose(
            gru_cell(model.gru_fwd, np.ones(8), v), 0.5 * v, atol=1e-15)

    def test_matches_recurrence_oracle(self):
        model = toy_model(seed=3)
        seq = np.random.default_rng(0).normal(size=(5, 8))
        step = np.zeros(4)
        for x in seq:
            step = gru_cell(model.gru_fwd, x, step)
        np.testing.assert_allclose(step, oracle_gru_last(model.gru_fwd, seq, 4),
                                   atol=1e-12)

    def test_shape_mismatch_rejected(self):
        model = toy_model()
        with pytest.raises(ShapeError):
            gru_cell(model.gru_fwd, np.ones(3), np.zeros(4))


class TestEncodeAttribute:
    def test_empty_sequence_is_zero_vector(self):
        model = toy_model()
        out = encode_attribute(model, np.zeros((0, 8)))
        np.testing.assert_array_equal(out, np.zeros(8))

    def test_single_token_shape(self):
        model = toy_model()
        out = encode_attribute(model, np.random.default_rng(1).normal(size=(1, 8)))
        assert out.shape == (8,)

    def test_matches_oracle(self):
        model = toy_model(seed=5)
        rng = np.random.default_rng(2)
        for length in (1, 2, 7):
            seq = rng.normal(size=(length, 8))
            np.testing.assert_allclose(encode_attribute(model, seq),
                                       oracle_encode(model, seq), atol=1e-12)

    def test_tied_directions_swap_halves_on_reversal(self):
        model = toy_model(seed=6)
        for fwd_t, bwd_t in zip(model.gru_fwd.tensors(), model.gru_bwd.tensors()):
            bwd_t.data[...] = fwd_t.data
        seq = np.random.default_rng(3).normal(size=(5, 8))
        enc = encode_attribute(model, seq)
        rev = encode_attribute(model, seq[::-1])
        np.testing.assert_allclose(enc[:4], rev[4:], atol=1e-12)
        np.testing.assert_allclose(enc[4:], rev[:4], atol=1e-12)

    def test_batched_padding_matches_per_sequence_oracle(self):
        model = toy_model(seed=7)
        rng = np.random.default_rng(4)
        seqs = [rng.normal(size=(n, 8)) for n in (3, 0, 1, 5, 2, 0)]
        tape = Tape(record=False)
        batched = model.encode_sequences(tape, seqs).data
        for row, seq in zip(batched, seqs):
            np.testing.assert_allclose(row, oracle_encode(model, seq), atol=1e-12)

    def test_all_empty_batch(self):
        model = toy_model()
        tape = Tape(record=False)
        out = model.encode_sequences(tape, [np.zeros((0, 8))] * 3).data
        np.testing.assert_array_equal(out, np.zeros((3, 8)))


class TestSimilarity:
    def test_absolute_difference(self):
        v = np.array([1.0, 2.0])
        np.testing.assert_array_equal(attribute_similarity(v, v), [0.0, 0.0])
        np.testing.assert_array_equal(
            attribute_similarity(np.array([1.0, 2.0]), np.array([3.0, -1.0])),
            [2.0, 3.0])

    def test_symmetric(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a, b = rng.normal(size=6), rng.normal(size=6)
            np.testing.assert_array_equal(attribute_similarity(a, b),
                                          attribute_similarity(b, a))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            attribute_similarity(np.zeros(3), np.zeros(4))

    def test_record_similarity_sums(self):
        np.testing.assert_array_equal(
            record_similarity([np.array([1.0, 2.0]), np.array([3.0, 4.0])]),
            [4.0, 6.0])
        one = np.array([0.5, -1.0])
        np.testing.assert_array_equal(record_similarity([one]), one)

    def test_empty_schema_rejected(self):
        with pytest.raises(ConfigError):
            record_similarity([])

    def test_dimension_independent_of_attribute_count(self):
        for n_attrs in (4, 8):
            schema = [f"a{i}" for i in range(n_attrs)]
            model = toy_model(schema=schema)
            rec = {a: "x y" for a in schema}
            act = model.classify_pair(RecordPair("l", "r", rec, rec))
            assert act.record_similarity.shape == (8,)


class TestClassifyPair:
    def test_identical_records_zero_similarity_and_bias_path(self):
        model = toy_model(seed=9)
        act = model.classify_pair(pair("deep matching", "deep matching"))
        np.testing.assert_array_equal(act.record_similarity, np.zeros(8))
        expected_logits = oracle_highway(model.matching_mlp, np.zeros((1, 8)))[0]
        np.testing.assert_allclose(act.logits, expected_logits, atol=1e-12)
        other = model.classify_pair(pair("something else", "something else"))
        assert act.probability == other.probability

    def test_probabilities_sum_to_one(self):
        model = toy_model(seed=10)
        act = model.classify_pair(pair("a b c", "a d"))
        p = softmax_probs(act.logits)
        assert abs(p.sum() - 1.0) <= 1e-12
        assert 0.0 <= act.probability <= 1.0

    def test_full_pipeline_matches_numpy_oracle(self):
        model = toy_model(seed=11)
        p = pair("sigmod conference", "sigmod conf", "1999", "2000")
        act = model.classify_pair(p)
        ep = encode_pairs(model.store, model.schema, [p], model.tokenizer)[0]
        sims = []
        for j in range(2):
            left = oracle_encode(model, ep.left_vecs[j])
            right = oracle_encode(model, ep.right_vecs[j])
            np.testing.assert_allclose(act.attribute_left[j], left, atol=1e-12)
            np.testing.assert_allclose(act.attribute_right[j], right, atol=1e-12)
            sims.append(np.abs(left - right))
        rec = sims[0] + sims[1]
        np.testing.assert_allclose(act.record_similarity, rec, atol=1e-12)
        logits = oracle_highway(model.matching_mlp, rec[None, :])[0]
        np.testing.assert_allclose(act.logits, logits, atol=1e-10)
        np.testing.assert_allclose(act.probability,
                                   softmax_probs(logits)[1], atol=1e-12)

    def test_attribute_permutation_invariance(self):
        m1 = toy_model(seed=12, schema=["title", "year"])
        m2 = toy_model(seed=99, schema=["year", "title"])
        m2.restore(m1.snapshot())
        p = pair("entity matching systems", "entity matching", "2001", "2002")
        assert m1.classify_pair(p).probability == pytest.approx(
            m2.classify_pair(p).probability, abs=1e-12)

    def test_deterministic(self):
        model = toy_model(seed=13)
        p = pair("x y z", "x z")
        assert model.classify_pair(p).probability == model.classify_pair(p).probability

    def test_predict_proba_matches_classify_and_ignores_batching(self):
        model = toy_model(seed=14)
        pairs = [pair(f"paper {i} title", f"paper {i}", n=i) for i in range(7)]
        eps = encode_pairs(model.store, model.schema, pairs, model.tokenizer)
        full = model.predict_proba(eps, batch_size=64)
        small = model.predict_proba(eps, batch_size=3)
        np.testing.assert_allclose(full, small, atol=1e-12)
        singles = [model.classify_pair(p).probability for p in pairs]
        np.testing.assert_allclose(full, singles, atol=1e-12)

    def test_empty_batch_rejected(self):
        model = toy_model()
        with pytest.raises(ShapeError):
            model.forward_batch(Tape(record=False), [])
        assert model.predict_proba([]).shape == (0,)


class TestHighway:
    def test_gate_zero_is_identity(self):
        model = toy_model(seed=15)
        for layer in model.matching_mlp.layers:
            layer["b_g"].data[...] = -1000.0
        x = np.random.default_rng(6).normal(size=(3, 8))
        out = model.highway_forward(Tape(record=False), model.matching_mlp,
                                    Tensor(x)).data
        affine = x @ model.matching_mlp.W_out.data.T + model.matching_mlp.b_out.data
        np.testing.assert_allclose(out, affine, atol=1e-12)

    def test_gate_one_is_pure_transform(self):
        model = toy_model(seed=16)
        for layer in model.matching_mlp.layers:
            layer["b_g"].data[...] = 1000.0
            layer["W_g"].data[...] = 0.0
        x = np.random.default_rng(7).normal(size=(3, 8))
        h = x
        for layer in model.matching_mlp.layers:
            h = np.maximum(h @ layer["W_t"].data.T + layer["b_t"].data, 0.0)
        affine = h @ model.matching_mlp.W_out.data.T + model.matching_mlp.b_out.data
        out = model.highway_forward(Tape(record=False), model.matching_mlp,
                                    Tensor(x)).data
        np.testing.assert_allclose(out, affine, atol=1e-12)


class TestDatasetHead:
    def test_requires_two_datasets(self):
        model = toy_model()
        with pytest.raises(ConfigError):
            model.set_dataset_head(["only"])

    def test_output_width_equals_dataset_count(self):
        model = toy_model(dataset_names=["a", "b", "c"])
        p = pair("x", "y")
        act = model.classify_pair(p)
        assert act.dataset_logits.shape == (3,)

    def test_forward_unaffected_by_lambda(self):
        base = toy_model(seed=17, dataset_names=["a", "b"])
        tweaked = toy_model(seed=17, dataset_names=["a", "b"],
                            reversal_lambda=7.5)
        p = pair("some title", "another")
        a1, a2 = base.classify_pair(p), tweaked.classify_pair(p)
        np.testing.assert_array_equal(a1.dataset_logits, a2.dataset_logits)
        assert a1.probability == a2.probability

    def test_encoder_gradient_is_exact_negation(self):
        model = toy_model(seed=18, dataset_names=["a", "b"])
        p = pair("alpha beta", "alpha gamma", label=1)
        ep = encode_pairs(model.store, model.schema, [p], model.tokenizer)[0]
        params = model.gru_fwd.tensors() + model.gru_bwd.tensors()

        tape = Tape()
        act = model.forward_batch(tape, [ep], need_dataset=True)
        loss, _ = tape.softmax_nll(act["dataset_logits"], [0])
        g_rev = tape.backward(loss, params=params)

        plain = Tape()
        sims = model.forward_batch(plain, [ep])
        logits = model.highway_forward(plain, model.dataset_mlp,
                                       sims["record_sim"])
        loss2, _ = plain.softmax_nll(logits, [0])
        g_plain = plain.backward(loss2, params=params)
        for t in params:
            np.testing.assert_allclose(g_rev[t], -g_plain[t], rtol=0, atol=1e-12)

    def test_dataset_index_modes(self):
        per = toy_model(dataset_names=["s1", "s2", "tgt"])
        assert [per.dataset_index(n) for n in ("s1", "s2", "tgt")] == [0, 1, 2]
        collapsed = toy_model(dataset_names=["s1", "s2", "tgt"],
                              dataset_mode="source-vs-target")
        assert [collapsed.dataset_index(n) for n in ("s1", "s2", "tgt")] == [0, 0, 1]
        assert collapsed.dataset_mlp.W_out.data.shape[0] == 2

    def test_unknown_dataset_name_rejected(self):
        model = toy_model(dataset_names=["a", "b"])
        with pytest.raises(ConfigError):
            model.dataset_index("missing")


class TestParameters:
    def test_single_shared_encoder(self):
        model = toy_model(schema=["a", "b", "c", "d"])
        names = model.named_parameters()
        gru_names = [n for n in names if n.startswith("gru.")]
        assert len(gru_names) == 18           # 2 directions x 9 tensors
        assert len(model.parameters()) == 28  # encoder + matching MLP

    def test_dataset_head_adds_ten(self):
        model = toy_model(dataset_names=["a", "b"])
        assert len(model.parameters()) == 38

    def test_init_deterministic_and_bounded(self):
        m1, m2 = toy_model(seed=21), toy_model(seed=21)
        for name, t in m1.named_parameters().items():
            assert t.data.tobytes() == m2.named_parameters()[name].data.tobytes()
        m3 = toy_model(seed=22)
        assert any(not np.array_equal(t.data, m3.named_parameters()[n].data)
                   for n, t in m1.named_parameters().items())
        for name, t in m1.named_parameters().items():
            if name.endswith(("b_z", "b_r", "b_h", "b_t", "b_g", "b_out")):
                np.testing.assert_array_equal(t.data, np.zeros_like(t.data))
            else:
                fan_in = t.data.shape[-1]
                assert np.abs(t.data).max() <= 1.0 / np.sqrt(fan_in)

    def test_snapshot_restore_round_trip(self):
        model = toy_model(seed=23)
        snap = model.snapshot()
        before = model.version
        for t in model.parameters():
            t.data += 1.0
        model.restore(snap)
        assert model.version == before + 1
        for name, t in model.named_parameters().items():
            np.testing.assert_array_equal(t.data, snap[name])


def scaled_model(seed, **cfg):
    """Unit-scale token vectors keep activations O(1), so the nonsmooth
    points (abs-diff zero crossings, relu kinks) sit far from the finite-
    difference step."""
    store = EmbeddingStore.hash_only(8, init_scale=1.0)
    return DeepERModel(SCHEMA, store,
                       ModelConfig(embedding_dim=8, hidden_size=4, seed=seed,
                                   **cfg))


def kink_margin(model, eps):
    """Smallest nonzero distance to an abs-diff or relu kink for a batch."""
    margin = np.inf
    rows = []
    for ep in eps:
        rec = np.zeros(2 * model.config.hidden_size)
        for j in range(len(model.schema)):
            d = np.abs(oracle_encode(model, ep.left_vecs[j])
                       - oracle_encode(model, ep.right_vecs[j]))
            nonzero = d[d > 0]
            if nonzero.size:
                margin = min(margin, nonzero.min())
            rec += d
        rows.append(rec)
    x = np.vstack(rows)
    for layer in model.matching_mlp.layers:
        pre = x @ layer["W_t"].data.T + layer["b_t"].data
        nonzero = np.abs(pre)[np.abs(pre) > 0]
        if nonzero.size:
            margin = min(margin, nonzero.min())
        g = np_sigmoid(x @ layer["W_g"].data.T + layer["b_g"].data)
        x = g * np.maximum(pre, 0.0) + (1.0 - g) * x
    return margin


class TestEndToEndGradients:
    def test_matching_loss_gradients_match_finite_differences(self):
        model = scaled_model(seed=48)
        pairs = [pair("gru encoder", "gru encoders", label=1),
                 pair("alpha", "omega beta", "1990", "2010", label=0)]
        eps = encode_pairs(model.store, model.schema, pairs, model.tokenizer)
        assert kink_margin(model, eps) > 2e-3
        labels = [p.label for p in pairs]
        params = model.named_parameters()

        def loss_value():
            tape = Tape(record=False)
            act = model.forward_batch(tape, eps)
            loss, _ = tape.softmax_nll(act["logits"], labels)
            return float(loss.data)

        tape = Tape()
        act = model.forward_batch(tape, eps)
        loss, _ = tape.softmax_nll(act["logits"], labels)
        grads = tape.backward(loss, params=list(params.values()))
        for name, t in params.items():
            numeric = numeric_grad(loss_value, t.data)
            assert_grads_close(numeric, grads[t], label=name)

    def test_fine_tuned_embedding_gradients(self):
        model = scaled_model(seed=54, fine_tune_embeddings=True)
        pairs = [pair("ab cd", "ab ce", label=1)]
        eps = encode_pairs(model.store, model.schema, pairs, model.tokenizer)
        assert kink_margin(model, eps) > 2e-3
        model.enable_embedding_training(eps)
        labels = [1]

        def loss_value():
            tape = Tape(record=False)
            act = model.forward_batch(tape, eps)
            loss, _ = tape.softmax_nll(act["logits"], labels)
            return float(loss.data)

        tape = Tape()
        act = model.forward_batch(tape, eps)
        loss, _ = tape.softmax_nll(act["logits"], labels)
        grads = tape.backward(loss, params=[model.embed_matrix])
        numeric = numeric_grad(loss_value, model.embed_matrix.data)
        assert_grads_close(numeric, grads[model.embed_matrix], label="embeddings")
        assert np.abs(grads[model.embed_matrix]).sum() > 0


class TestCheckpoint:
    def build(self, tmp_path, seed=30):
        model = toy_model(seed=seed, dataset_names=["src", "tgt"])
        path = tmp_path / "model.ckpt"
        save_model(model, path)
        return model, path

    def test_round_trip_preserves_decisions(self, tmp_path):
        model, path = self.build(tmp_path)
        clone = load_model(path, model.store)
        pairs = [pair(f"t {i}", f"t {i} x", n=i) for i in range(5)]
        eps = encode_pairs(model.store, model.schema, pairs, model.tokenizer)
        np.testing.assert_allclose(clone.predict_proba(eps),
                                   model.predict_proba(eps), atol=1e-6)
        assert clone.schema == model.schema
        assert clone.dataset_names == model.dataset_names

    def test_round_trip_is_float32_exact(self, tmp_path):
        model, path = self.build(tmp_path)
        clone = load_model(path, model.store)
        for name, t in model.named_parameters().items():
            np.testing.assert_array_equal(
                clone.named_parameters()[name].data,
                t.data.astype(np.float32).astype(np.float64))

    def test_manifest_contents(self, tmp_path):
        model, path = self.build(tmp_path)
        manifest = read_manifest(path)
        assert manifest["schema"] == SCHEMA
        assert manifest["dataset_names"] == ["src", "tgt"]
        assert manifest["embedding_fingerprint"] == model.store.fingerprint
        assert manifest["config"]["hidden_size"] == 4

    def test_tampered_magic_rejected(self, tmp_path):
        _, path = self.build(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            read_manifest(path)

    def test_truncated_file_rejected(self, tmp_path):
        model, path = self.build(tmp_path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) - 16])
        with pytest.raises(CheckpointError):
            load_model(path, model.store)

    def test_fingerprint_mismatch_refused_unless_forced(self, tmp_path):
        model, path = self.build(tmp_path)
        other = EmbeddingStore.hash_only(8, hash_seed=99)
        with pytest.warns(UserWarning, match="fingerprint"):
            with pytest.raises(EmbeddingMismatchError):
                load_model(path, other)
        with pytest.warns(UserWarning, match="fingerprint"):
            clone = load_model(path, other, force=True)
        assert clone.schema == model.schema
