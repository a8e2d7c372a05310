"""Lexer and recursive-descent parser for the CS1 subset of Java.

Trees are concrete: every token is a leaf, in source order, under the
production that consumed it. Code that does not fit the grammar degrades to a
single ``flat`` node over all tokens, so no submission is ever rejected.
"""
import json
import re
from dataclasses import dataclass, field

LABEL_VERSION = 1

KEYWORDS = frozenset("""
abstract boolean break byte case catch char class continue default do double else
enum extends final finally float for if implements import instanceof int interface
long new null package private protected public return short static super switch
this throw throws try var void while
""".split())
PRIMITIVE_TYPES = frozenset("boolean byte char double float int long short void var".split())
MODIFIERS = frozenset("public private protected static final abstract".split())

OPERATORS = sorted("""
>>>= <<= >>= >>> == != <= >= && || ++ -- += -= *= /= %= &= |= ^= -> :: << >>
+ - * / % = < > ! & | ^ ~ ? :
""".split(), key=len, reverse=True)
PUNCTUATION = set("(){}[];,.@")
ASSIGN_OPS = frozenset("= += -= *= /= %= &= |= ^= <<= >>= >>>=".split())

# internal-node labels emitted by the parser (binop:/unary:/postfix: carry the operator)
NODE_LABELS = frozenset("""
unit class method param body block vardecl assign if condition else while for
update return exprstmt call field paren empty flat
""".split())

_NUMBER = re.compile(r"""
    (?:0[xX][0-9a-fA-F_]+[lL]?)
  | (?:(?:\d[\d_]*\.\d*|\.\d+)(?:[eE][+-]?\d+)?[fFdD]?)
  | (?:\d[\d_]*[eE][+-]?\d+[fFdD]?)
  | (?:\d[\d_]*[fFdD])
  | (?:\d[\d_]*[lL]?)
""", re.X)
_IDENT = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*")
_STRING = re.compile(r'"(?:[^"\\\n]|\\.)*"')
_CHAR = re.compile(r"'(?:[^'\\\n]|\\.)+'")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str


@dataclass
class AstNode:
    label: str
    children: list = field(default_factory=list)

    @property
    def is_leaf(self):
        return not self.children

    def leaves(self):
        if not self.children:
            return [self]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def to_dict(self):
        return {"label": self.label, "children": [c.to_dict() for c in self.children]}

    def pretty(self, indent=0):
        lines = ["  " * indent + self.label]
        for c in self.children:
            lines.append(c.pretty(indent + 1))
        return "\n".join(lines)


@dataclass
class ParseOutcome:
    tree: AstNode
    mode: str  # "parsed" or "fallback_flat"


def _leaf(tok):
    return AstNode(tok.text)


def _operand_before(tokens):
    """True when the previous token ends an operand, so '-' is binary."""
    if not tokens:
        return False
    t = tokens[-1]
    if t.kind in ("identifier", "int_literal", "float_literal", "string_literal",
                  "char_literal", "boolean_literal"):
        return True
    if t.kind == "keyword" and t.text in ("this", "null", "super"):
        return True
    return t.text in (")", "]", "++", "--")


def tokenize(source):
    """Maximal-munch lexing; comments/whitespace dropped, never raises.

    A ``-`` directly followed by a digit is folded into a numeric literal
    when it cannot be a binary operator (``f(-3)`` lexes ``-3`` as one token).
    """
    tokens = []
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            i = n if j < 0 else j
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            i = n if j < 0 else j + 2
            continue
        if ch == '"':
            m = _STRING.match(source, i)
            if m:
                tokens.append(Token("string_literal", m.group()))
                i = m.end()
                continue
            tokens.append(Token("punctuation", ch))
            i += 1
            continue
        if ch == "'":
            m = _CHAR.match(source, i)
            if m:
                tokens.append(Token("char_literal", m.group()))
                i = m.end()
                continue
            tokens.append(Token("punctuation", ch))
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()) or (
                ch == "-" and i + 1 < n and (source[i + 1].isdigit() or
                                             (source[i + 1] == "." and i + 2 < n and source[i + 2].isdigit()))
                and not _operand_before(tokens)):
            start = i + 1 if ch == "-" else i
            m = _NUMBER.match(source, start)
            if m and m.end() > start:
                text = source[i:m.end()]
                body = m.group()
                is_float = not body.lower().startswith("0x") and (
                    "." in body or "e" in body.lower() or body[-1] in "fFdD")
                tokens.append(Token("float_literal" if is_float else "int_literal", text))
                i = m.end()
                continue
        if ch.isalpha() or ch in "_$" or (ch.isidentifier() and not ch.isascii()):
            m = _IDENT.match(source, i)
            if m:
                word = m.group()
                i = m.end()
                if word in ("true", "false"):
                    tokens.append(Token("boolean_literal", word))
                elif word in KEYWORDS:
                    tokens.append(Token("keyword", word))
                else:
                    tokens.append(Token("identifier", word))
                continue
        for op in OPERATORS:
            if source.startswith(op, i):
                tokens.append(Token("operator", op))
                i += len(op)
                break
        else:
            tokens.append(Token("punctuation", ch))
            i += 1
    return tokens


class ParseError(Exception):
    pass


_BINARY_LEVELS = (
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
)
_LITERAL_KINDS = ("int_literal", "float_literal", "string_literal", "char_literal", "boolean_literal")


class Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    # token helpers
    def peek(self, offset=0):
        j = self.pos + offset
        return self.tokens[j] if j < len(self.tokens) else None

    def at(self, text, offset=0):
        t = self.peek(offset)
        return t is not None and t.text == text and t.kind != "string_literal"

    def advance(self):
        t = self.peek()
        if t is None:
            raise ParseError("unexpected end of input")
        self.pos += 1
        return t

    def expect(self, text):
        t = self.peek()
        if t is None or t.text != text:
            raise ParseError(f"expected {text!r}, got {t.text if t else 'EOF'!r}")
        self.pos += 1
        return _leaf(t)

    def expect_ident(self):
        t = self.peek()
        if t is None or t.kind != "identifier":
            raise ParseError(f"expected identifier, got {t.text if t else 'EOF'!r}")
        self.pos += 1
        return _leaf(t)

    def is_type_start(self, offset=0):
        t = self.peek(offset)
        if t is None:
            return False
        return (t.kind == "keyword" and t.text in PRIMITIVE_TYPES) or t.kind == "identifier"

    # grammar
    def parse_unit(self):
        if not self.tokens:
            raise ParseError("empty input")
        children = []
        j = 0
        while self.peek(j) is not None and self.peek(j).text in MODIFIERS:
            j += 1
        if self.at("class", j):
            children.append(self.parse_class())
        else:
            while self.peek() is not None:
                children.append(self.parse_method())
        if self.peek() is not None:
            raise ParseError(f"trailing tokens from {self.peek().text!r}")
        return AstNode("unit", children)

    def parse_class(self):
        kids = []
        while self.peek() is not None and self.peek().text in MODIFIERS:
            kids.append(_leaf(self.advance()))
        kids.append(self.expect("class"))
        kids.append(self.expect_ident())
        kids.append(self.expect("{"))
        while not self.at("}"):
            if self.peek() is None:
                raise ParseError("unterminated class")
            kids.append(self.parse_method())
        kids.append(self.expect("}"))
        return AstNode("class", kids)

    def parse_method(self):
        kids = []
        while self.peek() is not None and self.peek().text in MODIFIERS:
            kids.append(_leaf(self.advance()))
        if not self.is_type_start():
            raise ParseError("expected return type")
        kids.append(_leaf(self.advance()))
        kids.append(self.expect_ident())
        kids.append(self.expect("("))
        if not self.at(")"):
            kids.append(self.parse_param())
            while self.at(","):
                kids.append(self.expect(","))
                kids.append(self.parse_param())
        kids.append(self.expect(")"))
        kids.append(self.parse_block("body"))
        return AstNode("method", kids)

    def parse_param(self):
        kids = []
        if self.at("final"):
            kids.append(_leaf(self.advance()))
        if not self.is_type_start():
            raise ParseError("expected parameter type")
        kids.append(_leaf(self.advance()))
        kids.append(self.expect_ident())
        return AstNode("param", kids)

    def parse_block(self, label="block"):
        kids = [self.expect("{")]
        while not self.at("}"):
            if self.peek() is None:
                raise ParseError("unterminated block")
            kids.append(self.parse_statement())
        kids.append(self.expect("}"))
        return AstNode(label, kids)

    def looks_like_decl(self):
        j = 0
        if self.at("final"):
            j = 1
        t = self.peek(j)
        nxt = self.peek(j + 1)
        if t is None or nxt is None:
            return False
        if t.kind == "keyword" and t.text in PRIMITIVE_TYPES:
            return True
        return t.kind == "identifier" and nxt.kind == "identifier"

    def parse_statement(self):
        t = self.peek()
        if t is None:
            raise ParseError("expected statement")
        if t.text == "{":
            return self.parse_block()
        if t.text == ";":
            return AstNode("empty", [self.expect(";")])
        if t.kind == "keyword":
            if t.text == "if":
                return self.parse_if()
            if t.text == "while":
                return self.parse_while()
            if t.text == "for":
                return self.parse_for()
            if t.text == "return":
                kids = [_leaf(self.advance())]
                if not self.at(";"):
                    kids.append(self.parse_expression())
                kids.append(self.expect(";"))
                return AstNode("return", kids)
        if self.looks_like_decl():
            node = self.parse_vardecl()
            node.children.append(self.expect(";"))
            return node
        node = self.parse_simple()
        node.children.append(self.expect(";"))
        return node

    def parse_vardecl(self):
        kids = []
        if self.at("final"):
            kids.append(_leaf(self.advance()))
        kids.append(_leaf(self.advance()))  # type
        while True:
            kids.append(self.expect_ident())
            if self.at("="):
                kids.append(self.expect("="))
                kids.append(self.parse_expression())
            if not self.at(","):
                break
            kids.append(self.expect(","))
        return AstNode("vardecl", kids)

    def parse_simple(self):
        """Assignment, increment or expression statement (without ';')."""
        t = self.peek()
        if t is not None and t.text in ("++", "--"):
            return AstNode("exprstmt", [self.parse_unary()])
        expr = self.parse_expression()
        t = self.peek()
        if t is not None and t.kind == "operator" and t.text in ASSIGN_OPS:
            if expr.children and expr.label != "field":
                raise ParseError("invalid assignment target")
            op = _leaf(self.advance())
            return AstNode("assign", [expr, op, self.parse_expression()])
        if t is not None and t.text in ("++", "--"):
            op = _leaf(self.advance())
            return AstNode("exprstmt", [AstNode("postfix:" + op.label, [expr, op])])
        return AstNode("exprstmt", [expr])

    def parse_condition(self):
        kids = [self.expect("(")]
        kids.append(AstNode("condition", [self.parse_expression()]))
        kids.append(self.expect(")"))
        return kids

    def parse_if(self):
        kids = [self.expect("if")]
        kids.extend(self.parse_condition())
        kids.append(self.parse_statement())
        if self.at("else"):
            kids.append(AstNode("else", [self.expect("else"), self.parse_statement()]))
        return AstNode("if", kids)

    def parse_while(self):
        kids = [self.expect("while")]
        kids.extend(self.parse_condition())
        kids.append(self.parse_statement())
        return AstNode("while", kids)

    def parse_for(self):
        kids = [self.expect("for"), self.expect("(")]
        if not self.at(";"):
            kids.append(self.parse_vardecl() if self.looks_like_decl() else self.parse_simple())
        kids.append(self.expect(";"))
        if not self.at(";"):
            kids.append(AstNode("condition", [self.parse_expression()]))
        kids.append(self.expect(";"))
        if not self.at(")"):
            upd = [self.parse_simple()]
            while self.at(","):
                upd.append(self.expect(","))
                upd.append(self.parse_simple())
            kids.append(AstNode("update", upd))
        kids.append(self.expect(")"))
        kids.append(self.parse_statement())
        return AstNode("for", kids)

    def parse_expression(self, level=0):
        if level == len(_BINARY_LEVELS):
            return self.parse_unary()
        left = self.parse_expression(level + 1)
        while True:
            t = self.peek()
            if t is None or t.kind != "operator" or t.text not in _BINARY_LEVELS[level]:
                return left
            op = _leaf(self.advance())
            right = self.parse_expression(level + 1)
            left = AstNode("binop:" + op.label, [left, op, right])

    def parse_unary(self):
        t = self.peek()
        if t is not None and t.kind == "operator" and t.text in ("!", "-", "+", "++", "--", "~"):
            op = _leaf(self.advance())
            return AstNode("unary:" + op.label, [op, self.parse_unary()])
        return self.parse_primary()

    def parse_primary(self):
        t = self.peek()
        if t is None:
            raise ParseError("expected expression")
        if t.text == "(" and t.kind == "punctuation":
            kids = [self.expect("("), self.parse_expression(), self.expect(")")]
            return AstNode("paren", kids)
        if t.kind in _LITERAL_KINDS or (t.kind == "keyword" and t.text in ("null", "this")):
            self.advance()
            return _leaf(t)
        if t.kind != "identifier":
            raise ParseError(f"unexpected token {t.text!r}")
        parts = [_leaf(self.advance())]
        while self.at(".") and self.peek(1) is not None and self.peek(1).kind == "identifier":
            parts.append(self.expect("."))
            parts.append(self.expect_ident())
        if self.at("("):
            kids = parts + [self.expect("(")]
            if not self.at(")"):
                kids.append(self.parse_expression())
                while self.at(","):
                    kids.append(self.expect(","))
                    kids.append(self.parse_expression())
            kids.append(self.expect(")"))
            return AstNode("call", kids)
        if len(parts) > 1:
            return AstNode("field", parts)
        return parts[0]


def flat_tree(tokens):
    return AstNode("flat", [_leaf(t) for t in tokens])


def parse(tokens):
    """Parse a token list; any syntax error yields a ``fallback_flat`` tree."""
    tokens = list(tokens)
    if tokens:
        try:
            return ParseOutcome(Parser(tokens).parse_unit(), "parsed")
        except (ParseError, RecursionError):
            pass
    return ParseOutcome(flat_tree(tokens), "fallback_flat")


def parse_source(source):
    return parse(tokenize(source))


def tree_to_json(tree):
    return json.dumps(tree.to_dict())
