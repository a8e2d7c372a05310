"""Hand-crafted code features for the DKT-TFIDF and DKT-Expert baselines."""
import collections
import math

import numpy as np

from .. import javaparse

_BOOL_OPS = frozenset("== != < <= > >= && ||".split())


class TfidfFeaturizer:
    """TF-IDF over javaparse token lexemes, restricted to ``k`` tokens.

    Term frequency is the raw count, idf = ln((1 + N) / (1 + df)) + 1 over
    the N training documents, and each document vector is l2-normalised over
    the whole training vocabulary before the top-k projection. The kept
    tokens are those with the largest summed weight over training documents
    (ties broken lexically).
    """

    def __init__(self, k=50):
        self.k = k
        self.tokens = ()
        self.idf = {}

    @staticmethod
    def tokens_of(source):
        return [t.text for t in javaparse.tokenize(source)]

    def fit(self, documents):
        counts = [collections.Counter(self.tokens_of(d)) for d in documents]
        df = collections.Counter()
        for c in counts:
            df.update(c.keys())
        n = len(counts)
        self.idf = {t: math.log((1 + n) / (1 + d)) + 1.0 for t, d in df.items()}
        mass = collections.defaultdict(float)
        for c in counts:
            for t, w in self._weights(c).items():
                mass[t] += w
        ranked = sorted(mass, key=lambda t: (-mass[t], t))
        self.tokens = tuple(ranked[:self.k])
        self._col = {t: i for i, t in enumerate(self.tokens)}
        return self

    def _weights(self, counter):
        w = {t: c * self.idf[t] for t, c in counter.items() if t in self.idf}
        norm = math.sqrt(sum(v * v for v in w.values()))
        if norm == 0:
            return {}
        return {t: v / norm for t, v in w.items()}

    def transform_one(self, source):
        out = np.zeros(self.k)
        for t, v in self._weights(collections.Counter(self.tokens_of(source))).items():
            i = self._col.get(t)
            if i is not None:
                out[i] = v
        return out

    def transform(self, documents):
        cache = {}
        rows = []
        for d in documents:
            if d not in cache:
                cache[d] = self.transform_one(d)
            rows.append(cache[d])
        return np.array(rows).reshape(len(rows), self.k)

    def to_dict(self):
        return {"k": self.k, "tokens": list(self.tokens), "idf": self.idf}

    @classmethod
    def from_dict(cls, d):
        f = cls(d["k"])
        f.idf = dict(d["idf"])
        f.tokens = tuple(d["tokens"])
        f._col = {t: i for i, t in enumerate(f.tokens)}
        return f


def tfidf_features(train_corpus, test_corpus, k=50):
    """(train matrix, test matrix, featurizer) with features fit on ``train_corpus``."""
    f = TfidfFeaturizer(k).fit(train_corpus)
    return f.transform(train_corpus), f.transform(test_corpus), f


# structural rules over parsed trees; keyword leaves share their statement's
# label, so only internal nodes are matched

def _nodes(tree, label):
    return [n for n in tree.walk() if n.label == label and n.children]


def _has_label(tree, label):
    return bool(_nodes(tree, label))


def _else_if(tree):
    return any(any(c.label == "if" and c.children for c in n.children) for n in _nodes(tree, "else"))


def _nested_if(tree):
    # an if inside another if's branches; an else-if chain does not count
    def visit(node, depth):
        if not node.children:
            return False
        if node.label == "if":
            if depth > 0:
                return True
            depth = 1
        for c in node.children:
            d = depth
            if node.label == "else" and c.label == "if":
                d = depth - 1
            if visit(c, d):
                return True
        return False

    return visit(tree, 0)


def _is_boolean_expr(node):
    if node.label == "paren":
        return _is_boolean_expr(node.children[1])
    if node.label.startswith("binop:"):
        return node.label[6:] in _BOOL_OPS
    return node.label == "unary:!"


def _returns_boolean(tree):
    for n in _nodes(tree, "return"):
        if len(n.children) == 3 and _is_boolean_expr(n.children[1]):
            return True
    return False


def _qualified_call(tree):
    return any(any(c.label == "." for c in n.children) for n in _nodes(tree, "call"))


STRUCTURAL_RULES = {
    "has_if": lambda t: _has_label(t, "if"),
    "has_else": lambda t: _has_label(t, "else"),
    "has_else_if": _else_if,
    "has_nested_if": _nested_if,
    "uses_and": lambda t: _has_label(t, "binop:&&"),
    "uses_or": lambda t: _has_label(t, "binop:||"),
    "uses_not": lambda t: _has_label(t, "unary:!"),
    "returns_boolean_expression": _returns_boolean,
    "calls_qualified_function": _qualified_call,
}


# token-level approximations for fallback_flat trees

def _tok_nested_if(toks):
    heads = [i for i, t in enumerate(toks) if t == "if" and (i == 0 or toks[i - 1] != "else")]
    return len(heads) >= 2


def _tok_returns_boolean(toks):
    for i, t in enumerate(toks):
        if t != "return":
            continue
        for u in toks[i + 1:]:
            if u == ";":
                break
            if u in _BOOL_OPS or u == "!":
                return True
    return False


def _tok_qualified_call(toks):
    return any(toks[i + 1] == "." and toks[i + 3] == "(" and toks[i][:1].isalpha()
               for i in range(len(toks) - 3))


TOKEN_RULES = {
    "has_if": lambda s: "if" in s,
    "has_else": lambda s: "else" in s,
    "has_else_if": lambda s: any(a == "else" and b == "if" for a, b in zip(s, s[1:])),
    "has_nested_if": _tok_nested_if,
    "uses_and": lambda s: "&&" in s,
    "uses_or": lambda s: "||" in s,
    "uses_not": lambda s: "!" in s,
    "returns_boolean_expression": _tok_returns_boolean,
    "calls_qualified_function": _tok_qualified_call,
}


def check_rules(rules):
    unknown = [r for r in rules if r not in STRUCTURAL_RULES]
    if unknown:
        raise ValueError(f"unknown expert rules {unknown}; known: {sorted(STRUCTURAL_RULES)}")
    return tuple(rules)


def expert_features(outcome, rules):
    """Binary vector, one entry per rule name, from a ParseOutcome."""
    rules = check_rules(rules)
    if outcome.mode == "parsed":
        return np.array([float(bool(STRUCTURAL_RULES[r](outcome.tree))) for r in rules])
    toks = [leaf.label for leaf in outcome.tree.children]
    return np.array([float(bool(TOKEN_RULES[r](toks))) for r in rules])


class ExpertFeaturizer:
    def __init__(self, rules):
        self.rules = check_rules(rules)
        self.k = len(self.rules)

    def fit(self, documents):
        return self

    def transform(self, documents):
        cache = {}
        rows = []
        for d in documents:
            if d not in cache:
                cache[d] = expert_features(javaparse.parse_source(d), self.rules)
            rows.append(cache[d])
        return np.array(rows).reshape(len(rows), self.k)

    def to_dict(self):
        return {"rules": list(self.rules)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["rules"])
