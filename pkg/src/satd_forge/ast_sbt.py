"""Simplified abstract syntax trees for if-statements and their
structure-based traversal serialization.

Node labels are drawn from a fixed set, with identifier/literal payloads
fused into the label after a colon:

    IfStatement ParExpr Block Stmt Return Assign Cond Index
    BinaryOp:<op> UnaryOp:<op> Name:<dotted.name> Literal:<lexeme>
    Call:<dotted.name> Call Field:<name> New:<type>

Constructs outside this set (declarations, loops, lambdas, casts) collapse
into payload-free Stmt leaves: lossy, but the bracketing structure that
distinguishes trees is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DataError
from .java_miner import JToken, _SKIP_KINDS


@dataclass(frozen=True)
class AstNode:
    label: str
    children: tuple["AstNode", ...] = ()


def sbt_serialize(node: AstNode) -> list[str]:
    """Bracketed traversal: "(" label <children...> ")" label.

    Emits exactly 4 tokens per node and distinct sequences for distinct
    trees.
    """
    out: list[str] = []
    stack: list[tuple[AstNode, bool]] = [(node, False)]
    while stack:
        n, closing = stack.pop()
        if closing:
            out.append(")")
            out.append(n.label)
        else:
            out.append("(")
            out.append(n.label)
            stack.append((n, True))
            for child in reversed(n.children):
                stack.append((child, False))
    return out


_ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>="}

# binary operators from loosest to tightest binding
_BINARY_LEVELS = (
    ("||",),
    ("&&",),
    ("|",),
    ("^",),
    ("&",),
    ("==", "!="),
    ("<", ">", "<=", ">=", "instanceof"),
    ("<<", ">>", ">>>"),
    ("+", "-"),
    ("*", "/", "%"),
)

_UNARY_OPS = {"!", "~", "+", "-", "++", "--"}

_OPEN = {"(": ")", "{": "}", "[": "]"}
_CLOSE = (")", "}", "]")


class _Unparsable(Exception):
    pass


class _Parser:
    def __init__(self, tokens: list[JToken]):
        self.toks = [t for t in tokens if t.kind not in _SKIP_KINDS]
        self.i = 0

    def peek(self) -> JToken | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def at(self, lexeme: str) -> bool:
        t = self.peek()
        return t is not None and t.lexeme == lexeme

    def at_kw(self, word: str) -> bool:
        t = self.peek()
        return t is not None and t.kind == "keyword" and t.lexeme == word

    def advance(self) -> JToken:
        t = self.peek()
        if t is None:
            raise _Unparsable("unexpected end of fragment")
        self.i += 1
        return t

    def expect(self, lexeme: str) -> JToken:
        t = self.advance()
        if t.lexeme != lexeme:
            raise _Unparsable(f"expected {lexeme!r}, found {t.lexeme!r}")
        return t

    # -- statements ------------------------------------------------------

    def parse_if(self) -> AstNode:
        t = self.peek()
        if t is None or not (t.kind == "keyword" and t.lexeme == "if"):
            raise DataError("fragment does not start with `if`")
        self.advance()
        cond = self.parse_par_expr()
        then = self.parse_statement()
        children = [cond, then]
        if self.at_kw("else"):
            self.advance()
            if self.at_kw("if"):
                children.append(self.parse_if())
            else:
                children.append(self.parse_statement())
        return AstNode("IfStatement", tuple(children))

    def parse_par_expr(self) -> AstNode:
        self.expect("(")
        mark = self.i
        try:
            expr = self.parse_expression()
            self.expect(")")
            return AstNode("ParExpr", (expr,))
        except _Unparsable:
            self.i = mark
            self._skip_until_closer(")")
            return AstNode("ParExpr", (AstNode("Stmt"),))

    def parse_statement(self) -> AstNode:
        """Total over balanced fragments: anything unrecognized becomes Stmt."""
        mark = self.i
        try:
            return self._parse_statement_strict()
        except _Unparsable:
            self.i = mark
            self._recover_statement()
            return AstNode("Stmt")

    def _strip_labels(self):
        while True:
            t = self.peek()
            nxt = self.toks[self.i + 1] if self.i + 1 < len(self.toks) else None
            if (
                t is not None
                and t.kind == "identifier"
                and nxt is not None
                and nxt.lexeme == ":"
            ):
                self.i += 2
                continue
            return t

    def _parse_statement_strict(self) -> AstNode:
        t = self._strip_labels()
        if t is None:
            raise _Unparsable("statement expected")
        if t.lexeme == "{":
            return self.parse_block()
        if t.lexeme == ";":
            self.advance()
            return AstNode("Stmt")
        if t.kind == "keyword":
            if t.lexeme == "if":
                return self.parse_if()
            if t.lexeme == "return":
                self.advance()
                if self.at(";"):
                    self.advance()
                    return AstNode("Return")
                expr = self.parse_expression()
                self.expect(";")
                return AstNode("Return", (expr,))
            self._skip_keyword_statement()
            return AstNode("Stmt")
        expr = self.parse_expression()
        self.expect(";")
        return expr

    def parse_block(self) -> AstNode:
        self.expect("{")
        children = []
        while not self.at("}"):
            if self.peek() is None:
                raise _Unparsable("unterminated block")
            before = self.i
            children.append(self.parse_statement())
            if self.i == before:  # recovery stopped at the closing brace
                break
        self.expect("}")
        return AstNode("Block", tuple(children))

    # -- structural skipping ----------------------------------------------

    def _skip_keyword_statement(self):
        word = self.advance().lexeme
        if word in ("for", "while", "switch", "synchronized"):
            if self.at("("):
                self._skip_bracketed()
            self._skip_any_statement()
        elif word == "do":
            self._skip_any_statement()
            if self.at_kw("while"):
                self.advance()
            if self.at("("):
                self._skip_bracketed()
            if self.at(";"):
                self.advance()
        elif word == "try":
            if self.at("("):
                self._skip_bracketed()
            if self.at("{"):
                self._skip_bracketed()
            while self.at_kw("catch"):
                self.advance()
                if self.at("("):
                    self._skip_bracketed()
                if self.at("{"):
                    self._skip_bracketed()
            if self.at_kw("finally"):
                self.advance()
                if self.at("{"):
                    self._skip_bracketed()
        else:
            # throw, break, continue, assert, typed declarations, ...
            self._skip_simple()

    def _skip_any_statement(self):
        t = self._strip_labels()
        if t is None:
            raise _Unparsable("statement expected")
        if t.lexeme == "{":
            self._skip_bracketed()
            return
        if t.lexeme == ";":
            self.advance()
            return
        if t.kind == "keyword":
            if t.lexeme == "if":
                self.advance()
                if self.at("("):
                    self._skip_bracketed()
                self._skip_any_statement()
                if self.at_kw("else"):
                    self.advance()
                    self._skip_any_statement()
                return
            if t.lexeme == "return":
                self._skip_simple()
                return
            self._skip_keyword_statement()
            return
        self._skip_simple()

    def _skip_simple(self):
        stack: list[str] = []
        while True:
            t = self.peek()
            if t is None:
                raise _Unparsable("unterminated statement")
            if not stack:
                if t.lexeme == ";":
                    self.advance()
                    return
                if t.lexeme == "}":
                    raise _Unparsable("statement runs into enclosing block")
            if t.lexeme in _OPEN:
                stack.append(_OPEN[t.lexeme])
            elif t.lexeme in _CLOSE:
                if not stack or t.lexeme != stack.pop():
                    raise _Unparsable("mismatched bracket")
            self.advance()

    def _skip_bracketed(self):
        opener = self.advance()
        if opener.lexeme not in _OPEN:
            raise _Unparsable(f"expected bracket, found {opener.lexeme!r}")
        stack = [_OPEN[opener.lexeme]]
        while stack:
            t = self.advance()
            if t.lexeme in _OPEN:
                stack.append(_OPEN[t.lexeme])
            elif t.lexeme in _CLOSE:
                if t.lexeme != stack.pop():
                    raise _Unparsable("mismatched bracket")

    def _skip_until_closer(self, closer: str):
        stack: list[str] = []
        while True:
            t = self.advance()
            if not stack and t.lexeme == closer:
                return
            if t.lexeme in _OPEN:
                stack.append(_OPEN[t.lexeme])
            elif t.lexeme in _CLOSE:
                if not stack or t.lexeme != stack.pop():
                    raise _Unparsable("mismatched bracket")

    def _recover_statement(self):
        """Last-resort consumption up to `;` at depth zero or the closing
        brace of the enclosing block (left unconsumed)."""
        stack: list[str] = []
        while True:
            t = self.peek()
            if t is None:
                return
            if not stack:
                if t.lexeme == ";":
                    self.advance()
                    return
                if t.lexeme == "}":
                    return
            if t.lexeme in _OPEN:
                stack.append(_OPEN[t.lexeme])
            elif t.lexeme in _CLOSE:
                if not stack or t.lexeme != stack.pop():
                    return
            self.advance()

    # -- expressions -----------------------------------------------------

    def parse_expression(self) -> AstNode:
        lhs = self.parse_ternary()
        t = self.peek()
        if t is not None and t.lexeme in _ASSIGN_OPS:
            self.advance()
            rhs = self.parse_expression()
            return AstNode("Assign", (lhs, rhs))
        return lhs

    def parse_ternary(self) -> AstNode:
        cond = self.parse_binary(0)
        if self.at("?"):
            self.advance()
            then = self.parse_expression()
            self.expect(":")
            other = self.parse_expression()
            return AstNode("Cond", (cond, then, other))
        return cond

    def parse_binary(self, level: int) -> AstNode:
        if level >= len(_BINARY_LEVELS):
            return self.parse_unary()
        node = self.parse_binary(level + 1)
        ops = _BINARY_LEVELS[level]
        while True:
            t = self.peek()
            if t is None or t.lexeme not in ops:
                return node
            self.advance()
            rhs = self.parse_binary(level + 1)
            node = AstNode(f"BinaryOp:{t.lexeme}", (node, rhs))

    def parse_unary(self) -> AstNode:
        t = self.peek()
        if t is not None and t.kind == "operator" and t.lexeme in _UNARY_OPS:
            self.advance()
            return AstNode(f"UnaryOp:{t.lexeme}", (self.parse_unary(),))
        return self.parse_postfix()

    def parse_postfix(self) -> AstNode:
        node = self.parse_primary()
        while True:
            t = self.peek()
            if t is None:
                return node
            if t.lexeme == ".":
                self.advance()
                name = self.advance()
                if name.kind not in ("identifier", "keyword"):
                    raise _Unparsable(f"bad member name {name.lexeme!r}")
                if node.label.startswith("Name:") and not node.children:
                    node = AstNode(f"{node.label}.{name.lexeme}")
                else:
                    node = AstNode(f"Field:{name.lexeme}", (node,))
            elif t.lexeme == "(":
                args = self.parse_arguments()
                if node.label.startswith("Name:") and not node.children:
                    node = AstNode(f"Call:{node.label[5:]}", tuple(args))
                else:
                    node = AstNode("Call", (node, *args))
            elif t.lexeme == "[":
                self.advance()
                index = self.parse_expression()
                self.expect("]")
                node = AstNode("Index", (node, index))
            elif t.lexeme in ("++", "--"):
                self.advance()
                node = AstNode(f"UnaryOp:{t.lexeme}", (node,))
            else:
                return node

    def parse_arguments(self) -> list[AstNode]:
        self.expect("(")
        args = []
        if not self.at(")"):
            args.append(self.parse_expression())
            while self.at(","):
                self.advance()
                args.append(self.parse_expression())
        self.expect(")")
        return args

    def parse_primary(self) -> AstNode:
        t = self.peek()
        if t is None:
            raise _Unparsable("expression expected")
        if t.kind == "identifier":
            self.advance()
            return AstNode(f"Name:{t.lexeme}")
        if t.kind == "literal":
            self.advance()
            return AstNode(f"Literal:{t.lexeme}")
        if t.kind == "keyword" and t.lexeme in ("this", "super"):
            self.advance()
            return AstNode(f"Name:{t.lexeme}")
        if t.kind == "keyword" and t.lexeme == "new":
            self.advance()
            name = self.advance()
            if name.kind not in ("identifier", "keyword"):
                raise _Unparsable("type name expected after new")
            parts = [name.lexeme]
            while self.at("."):
                self.advance()
                parts.append(self.advance().lexeme)
            if not self.at("("):
                raise _Unparsable("array or generic construction")
            args = self.parse_arguments()
            return AstNode(f"New:{'.'.join(parts)}", tuple(args))
        if t.lexeme == "(":
            self.advance()
            expr = self.parse_expression()
            self.expect(")")
            return expr
        raise _Unparsable(f"unexpected token {t.lexeme!r}")


def parse_if_statement(tokens: list[JToken]) -> AstNode:
    """Build the simplified tree for one extracted if-fragment."""
    return _Parser(tokens).parse_if()
