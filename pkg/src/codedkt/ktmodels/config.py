import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

MODEL_KINDS = ("dkt", "codedkt", "dkt_tfidf", "dkt_expert")
CELLS = ("rnn", "lstm")
PLACEMENTS = ("attention_and_trace", "attention_only", "trace_only")
EMBEDDING_MODES = ("joint", "static_pretrained")

DEFAULT_EXPERT_RULES = (
    "has_if", "has_else", "has_else_if", "has_nested_if", "uses_and",
    "uses_or", "uses_not", "returns_boolean_expression", "calls_qualified_function",
)


@dataclass(frozen=True)
class ModelConfig:
    hidden_size: int = 128
    code_embedding_size: int = 300
    # width of the code vector z; None means code_embedding_size
    code_vector_size: int = None
    learning_rate: float = 0.0005
    epochs: int = 40
    max_seq_len: int = 50
    R: int = 200
    batch_size: int = 32
    cell: str = "lstm"
    correctness_placement: str = "attention_and_trace"
    embedding_mode: str = "joint"
    seed: int = 0
    max_path_nodes: int = 8
    min_count: int = 2
    direction_markers: bool = False
    resample_paths: bool = True
    grad_clip: float = 5.0
    embed_init_std: float = 0.05
    pretrain_epochs: int = 10
    pretrain_batch_size: int = 128
    tfidf_k: int = 50
    expert_rules: tuple = field(default=DEFAULT_EXPERT_RULES)

    def __post_init__(self):
        for name in ("hidden_size", "code_embedding_size", "epochs", "max_seq_len", "R",
                     "batch_size", "tfidf_k"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.code_vector_size is not None and self.code_vector_size <= 0:
            raise ValueError("code_vector_size must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.cell not in CELLS:
            raise ValueError(f"cell must be one of {CELLS}")
        if self.correctness_placement not in PLACEMENTS:
            raise ValueError(f"correctness_placement must be one of {PLACEMENTS}")
        if self.embedding_mode not in EMBEDDING_MODES:
            raise ValueError(f"embedding_mode must be one of {EMBEDDING_MODES}")
        object.__setattr__(self, "expert_rules", tuple(self.expert_rules))

    @property
    def z_size(self):
        return self.code_vector_size or self.code_embedding_size

    @property
    def code_in_attention(self):
        return self.correctness_placement in ("attention_and_trace", "attention_only")

    @property
    def trace_in_lstm(self):
        return self.correctness_placement in ("attention_and_trace", "trace_only")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["expert_rules"] = list(self.expert_rules)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown ModelConfig fields: {sorted(unknown)}")
        return cls(**d)

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]


# ablation rows: label -> ModelConfig overrides applied to a Code-DKT config
ABLATION_VARIANTS = (
    ("Code-DKT (Final Model)", {}),
    ("Correctness: Attention Only", {"correctness_placement": "attention_only"}),
    ("Correctness: Trace Only", {"correctness_placement": "trace_only"}),
    ("Model: RNN", {"cell": "rnn"}),
    ("Embedding: Static", {"embedding_mode": "static_pretrained"}),
)
