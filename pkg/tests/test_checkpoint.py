import numpy as np
import pytest

from conftest import make_separable
from reckoner.checkpoint import load_checkpoint, save_checkpoint
from reckoner.data import SplitSpec, split_dataset, standardize
from reckoner.errors import ConfigError
from reckoner.pipeline import TrainConfig, predict, train


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = make_separable(n=240, seed=42, m=3)
    tr, va, te = split_dataset(d, SplitSpec(0.6, 0.2, 0.2, seed=1))
    (tr, va, te), mean, std = standardize(tr, [va, te])
    cfg = TrainConfig(total_iterations=80, batch_size=32, hidden1=8, hidden2=4,
                      identifier_epochs=40, learning_rate=0.01, seed=5)
    model = train(tr, va, cfg)
    path = tmp_path_factory.mktemp("ckpt") / "model.json"
    save_checkpoint(path, model, d.schema, mean, std, manifest_sha256="abc123")
    return model, d.schema, te, path


class TestCheckpointRoundtrip:
    def test_scores_are_bit_identical_after_reload(self, trained):
        model, _, te, path = trained
        loaded = load_checkpoint(path)
        _, before = predict(model, te.x)
        _, after = predict(loaded.model, te.x)
        np.testing.assert_array_equal(before, after)

    def test_config_and_metadata_survive(self, trained):
        model, schema, _, path = trained
        loaded = load_checkpoint(path)
        assert loaded.model.config == model.config
        assert loaded.manifest_sha256 == "abc123"
        assert loaded.schema == schema

    def test_standardization_stats_survive(self, trained):
        model, _, _, path = trained
        loaded = load_checkpoint(path)
        assert loaded.mean.shape == (model.m,)
        assert loaded.std.shape == (model.m,)

    def test_low_snapshot_survives(self, trained):
        model, _, _, path = trained
        loaded = load_checkpoint(path)
        np.testing.assert_array_equal(loaded.model.low_snapshot.values,
                                      model.low_snapshot.values)

    def test_version_mismatch_rejected(self, trained, tmp_path):
        import json
        _, _, _, path = trained
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(ConfigError):
            load_checkpoint(bad)

    def test_unreadable_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_checkpoint(tmp_path / "missing.json")
