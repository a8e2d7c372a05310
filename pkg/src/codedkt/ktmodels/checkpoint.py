"""Single-file model checkpoints: an ``.npz`` holding every parameter array
plus a JSON metadata blob (config, vocabulary, featurizer state)."""
import json

import numpy as np

from ..codepaths import Vocab
from .config import ModelConfig
from .features import ExpertFeaturizer, TfidfFeaturizer
from .training import KTModel

FORMAT_VERSION = 1
_META = "__meta__"


def save(model, path):
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "config": model.config.to_dict(),
        "M": model.M,
        "skill_vectors": model.skill_vectors,
        "vocab": model.vocab.to_dict() if model.vocab is not None else None,
        "vocab_digest": model.vocab.digest() if model.vocab is not None else None,
        "featurizer": model.featurizer.to_dict() if model.featurizer is not None else None,
        "loss_history": model.loss_history,
        "pretrain_history": model.pretrain_history,
        "param_names": list(model.params),
    }
    blob = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **{_META: blob}, **{"p_" + k: v for k, v in model.params.items()})


def load(path):
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(bytes(z[_META]).decode("utf-8"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
        params = {k: np.array(z["p_" + k]) for k in meta["param_names"]}
    vocab = Vocab.from_dict(meta["vocab"]) if meta["vocab"] is not None else None
    if vocab is not None and vocab.digest() != meta["vocab_digest"]:
        raise ValueError(f"{path}: vocabulary digest mismatch")
    featurizer = None
    if meta["featurizer"] is not None:
        cls = TfidfFeaturizer if meta["kind"] == "dkt_tfidf" else ExpertFeaturizer
        featurizer = cls.from_dict(meta["featurizer"])
    return KTModel(meta["kind"], ModelConfig.from_dict(meta["config"]), meta["M"],
                   meta["skill_vectors"], params, vocab, featurizer,
                   list(meta["loss_history"]), list(meta["pretrain_history"]))
