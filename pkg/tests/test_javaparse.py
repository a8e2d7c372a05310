from hypothesis import given, settings, strategies as st

from codedkt import javaparse
from codedkt.javaparse import parse, parse_source, tokenize


def frontier(tree):
    return [] if tree.is_leaf and tree.label in ("flat", "unit") else [n.label for n in tree.leaves()]


def kinds(src):
    return [(t.kind, t.text) for t in tokenize(src)]


def test_tokenize_return():
    assert kinds("return x;") == [("keyword", "return"), ("identifier", "x"), ("punctuation", ";")]


def test_maximal_munch():
    assert kinds("a&&b") == [("identifier", "a"), ("operator", "&&"), ("identifier", "b")]
    assert [t.text for t in tokenize("x>>=2")] == ["x", ">>=", "2"]


def test_hand_lexed_call_with_negative_literal():
    toks = tokenize("int x = Math.abs(-3);")
    assert [t.text for t in toks] == ["int", "x", "=", "Math", ".", "abs", "(", "-3", ")", ";"]
    assert toks[-1].text == ";"
    # after an operand the minus is binary
    assert [t.text for t in tokenize("y-3")] == ["y", "-", "3"]


def test_comments_whitespace_and_unknown_chars():
    toks = tokenize("a /* b */ // c\n # ` d")
    assert [t.text for t in toks] == ["a", "#", "`", "d"]
    assert toks[1].kind == "punctuation"


def test_literal_kinds():
    got = kinds('"s\\"q" \'c\' 1.5f 0x1F true null')
    assert [k for k, _ in got] == ["string_literal", "char_literal", "float_literal", "int_literal",
                                   "boolean_literal", "keyword"]


def test_unterminated_string_does_not_raise():
    assert tokenize('"abc')


GREET = 'public String greet(String input) { return "value"; }'


def test_greet_shape():
    out = parse_source(GREET)
    assert out.mode == "parsed"
    labels = [n.label for n in out.tree.walk()]
    for lab in ("method", "param", "body", "return"):
        assert lab in labels
    leaves = [n.label for n in out.tree.leaves()]
    assert "input" in leaves and '"value"' in leaves


def test_if_inside_method():
    out = parse_source("int f(boolean vacation) { if (vacation) { return 10; } return 0; }")
    assert out.mode == "parsed"
    ifs = [n for n in out.tree.walk() if n.label == "if" and not n.is_leaf]
    assert len(ifs) == 1
    cond = [c for c in ifs[0].children if c.label == "condition"][0]
    assert [n.label for n in cond.leaves()] == ["vacation"]
    assert any(n.label == "return" and not n.is_leaf for n in ifs[0].walk())


def test_operator_labels_and_precedence():
    out = parse_source("boolean f(int a) { return a > 1 && a < 5 || !(a == 3); }")
    top = [n for n in out.tree.walk() if n.label.startswith("binop:")][0]
    assert top.label == "binop:||"
    assert top.children[0].label == "binop:&&"
    assert any(n.label == "unary:!" for n in out.tree.walk())


def test_class_wrapper_and_loops():
    src = """
    public class A {
      public static int f(int n) {
        int s = 0;
        for (int i = 0; i < n; i++) { s += i; }
        while (s > 10) s = s - 1;
        return s;
      }
      int g() { return f(3); }
    }"""
    out = parse_source(src)
    assert out.mode == "parsed"
    labels = {n.label for n in out.tree.walk()}
    assert {"class", "method", "for", "while", "update", "vardecl", "assign"} <= labels


def test_empty_tokens_fall_back():
    out = parse([])
    assert out.mode == "fallback_flat"
    assert out.tree.label == "flat" and out.tree.children == []


def test_syntax_error_falls_back_to_flat_tokens():
    src = "int f( { return x"
    out = parse_source(src)
    assert out.mode == "fallback_flat"
    assert [c.label for c in out.tree.children] == [t.text for t in tokenize(src)]
    assert all(c.is_leaf for c in out.tree.children)


def test_deep_nesting_does_not_raise():
    src = "int f() { return " + "(" * 5000 + "1" + ")" * 5000 + "; }"
    out = parse_source(src)
    assert out.mode in ("parsed", "fallback_flat")


def test_large_input_is_total():
    src = "x = 1; " * 50000
    out = parse_source(src)
    assert out.mode == "fallback_flat"


def test_json_output():
    import json
    d = json.loads(javaparse.tree_to_json(parse_source("int f() { return 1; }").tree))
    assert d["label"] == "unit" and d["children"][0]["label"] == "method"


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=400))
def test_parse_is_total_on_bytes(data):
    src = data.decode("utf-8", errors="replace")
    out = parse_source(src)
    if out.mode == "parsed":
        assert frontier(out.tree) == [t.text for t in tokenize(src)]


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="ab(){};=+-*!&|<>. \nifelsreturn01\"", max_size=200))
def test_lossless_frontier_and_determinism(src):
    a, b = parse_source(src), parse_source(src)
    assert a.tree.to_dict() == b.tree.to_dict()
    assert frontier(a.tree) == [t.text for t in tokenize(src)]


# grammar-based fuzzer

IDENTS = st.sampled_from(["a", "b", "n", "flag", "total"])
LITERALS = st.sampled_from(["0", "1", "42", "true", "false", '"s"', "'c'", "2.5"])


def expressions(depth=3):
    base = st.one_of(IDENTS, LITERALS)
    if depth == 0:
        return base
    sub = expressions(depth - 1)
    ops = st.sampled_from(["||", "&&", "==", "!=", "<", "<=", ">", ">=", "+", "-", "*", "/", "%"])
    return st.one_of(
        base,
        st.tuples(sub, ops, sub).map(lambda t: f"{t[0]} {t[1]} {t[2]}"),
        st.tuples(st.sampled_from(["!", "-"]), sub).map(lambda t: f"{t[0]}({t[1]})"),
        sub.map(lambda e: f"({e})"),
        st.tuples(st.sampled_from(["Math.abs", "Math.max", "helper"]), sub).map(lambda t: f"{t[0]}({t[1]})"),
    )


def statements(depth=2):
    expr = expressions(2)
    simple = st.one_of(
        st.tuples(st.sampled_from(["int", "boolean", "String"]), IDENTS, expr).map(
            lambda t: f"{t[0]} {t[1]} = {t[2]};"),
        st.tuples(IDENTS, expr).map(lambda t: f"{t[0]} = {t[1]};"),
        expr.map(lambda e: f"return {e};"),
        IDENTS.map(lambda i: f"{i}++;"),
    )
    if depth == 0:
        return simple
    sub = statements(depth - 1)
    block = st.lists(sub, max_size=3).map(lambda ss: "{ " + " ".join(ss) + " }")
    return st.one_of(
        simple,
        block,
        st.tuples(expr, block).map(lambda t: f"if ({t[0]}) {t[1]}"),
        st.tuples(expr, block, block).map(lambda t: f"if ({t[0]}) {t[1]} else {t[2]}"),
        st.tuples(expr, block, expr, block).map(lambda t: f"if ({t[0]}) {t[1]} else if ({t[2]}) {t[3]}"),
        st.tuples(expr, block).map(lambda t: f"while ({t[0]}) {t[1]}"),
        st.tuples(IDENTS, expr, block).map(lambda t: f"for (int {t[0]} = 0; {t[1]}; {t[0]}++) {t[2]}"),
    )


methods = st.tuples(
    st.sampled_from(["public int", "boolean", "static String", "public static void"]),
    IDENTS,
    st.lists(st.tuples(st.sampled_from(["int", "boolean", "String"]), IDENTS), max_size=3),
    st.lists(statements(), max_size=4),
).map(lambda t: f"{t[0]} {t[1]}({', '.join(a + ' ' + b for a, b in t[2])}) {{ {' '.join(t[3])} }}")


@settings(max_examples=300, deadline=None)
@given(st.lists(methods, min_size=1, max_size=2), st.booleans())
def test_grammar_programs_parse(ms, wrap):
    src = " ".join(ms)
    if wrap:
        src = "public class Sol { " + src + " }"
    out = parse_source(src)
    assert out.mode == "parsed", src
    assert frontier(out.tree) == [t.text for t in tokenize(src)]
