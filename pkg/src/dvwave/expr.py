"""Tiny expression language for coefficient fields and manufactured solutions.

Parses strings like ``1 + 0.5*sin(pi*x)*exp(-t)`` into an AST that can be
evaluated on numpy arrays, differentiated symbolically, serialized back to
text, and compiled to a plain Python callable.  Supported pieces:

* variables ``x``, ``y``, ``t``,
* numeric literals, ``pi``,
* ``+ - * /``, unary minus, ``^`` with an integer literal exponent,
* calls ``sin(...)``, ``cos(...)``, ``exp(...)``.

The AST is plain tuples: ``('num', v)``, ``('var', name)``,
``('add', a, b)``, ``('sub', a, b)``, ``('mul', a, b)``, ``('div', a, b)``,
``('pow', a, k)``, ``('neg', a)``, ``('call', fname, a)``.  Division nodes
built by the parser carry a fourth slot with the byte offset of the ``/``
so a zero divisor can be reported against the source text.
"""

import math

import numpy as np

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_VARS = ("x", "y", "t")


class ExprError(ValueError):
    """Raised for syntax errors; carries the byte offset of the problem."""

    def __init__(self, msg, pos):
        super().__init__("%s (at offset %d)" % (msg, pos))
        self.pos = pos


class EvalError(ValueError):
    """Raised when evaluation hits a singular operation (zero divisor)."""

    def __init__(self, msg, pos=None):
        if pos is not None:
            msg = "%s (at offset %d)" % (msg, pos)
        super().__init__(msg)
        self.pos = pos


# ---------------------------------------------------------------- tokenizer

def _tokenize(text):
    toks = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                seen_dot = seen_dot or text[j] == "."
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    while k < n and text[k].isdigit():
                        k += 1
                    j = k
            toks.append(("num", text[i:j], i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(("name", text[i:j], i))
            i = j
        elif c in "+-*/^()":
            toks.append((c, c, i))
            i += 1
        else:
            raise ExprError("unexpected character %r" % c, i)
    toks.append(("end", "", n))
    return toks


# ------------------------------------------------------------------ parser
#
# expr    := term (('+'|'-') term)*
# term    := factor (('*'|'/') factor)*
# factor  := '-' factor | power
# power   := atom ('^' intlit)?          (no chained exponents)
# atom    := num | name | name '(' expr ')' | '(' expr ')'

class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.k = 0

    def peek(self):
        return self.toks[self.k]

    def take(self, kind=None):
        tok = self.toks[self.k]
        if kind is not None and tok[0] != kind:
            raise ExprError("expected %r, found %r" % (kind, tok[1] or "end"), tok[2])
        self.k += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprError("trailing input %r" % tok[1], tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] in ("*", "/"):
            tok = self.take()
            rhs = self.factor()
            if tok[0] == "*":
                node = ("mul", node, rhs)
            else:
                node = ("div", node, rhs, tok[2])
        return node

    def factor(self):
        if self.peek()[0] == "-":
            self.take()
            return ("neg", self.factor())
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek()[0] == "^":
            tok = self.take()
            exp = self.peek()
            if exp[0] != "num" or any(ch in exp[1] for ch in ".eE"):
                raise ExprError("exponent must be an integer literal", exp[2])
            self.take()
            k = int(exp[1])
            if self.peek()[0] == "^":
                raise ExprError("chained '^' needs parentheses", self.peek()[2])
            node = ("pow", node, k)
        return node

    def atom(self):
        tok = self.peek()
        if tok[0] == "num":
            self.take()
            return ("num", float(tok[1]))
        if tok[0] == "name":
            self.take()
            if tok[1] == "pi":
                return ("num", math.pi)
            if self.peek()[0] == "(":
                if tok[1] not in _FUNCS:
                    raise ExprError("unknown function %r" % tok[1], tok[2])
                self.take("(")
                arg = self.expr()
                self.take(")")
                return ("call", tok[1], arg)
            if tok[1] in _FUNCS:
                raise ExprError("function %r needs an argument list" % tok[1], tok[2])
            if tok[1] not in _VARS:
                raise ExprError("unknown identifier %r" % tok[1], tok[2])
            return ("var", tok[1])
        if tok[0] == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        raise ExprError("expected a value, found %r" % (tok[1] or "end"), tok[2])


def parse(text):
    """Parse *text* into an AST tuple."""
    return _Parser(text).parse()


# -------------------------------------------------------------- evaluation

def evaluate(node, env):
    """Evaluate an AST with variables bound by the dict *env*.

    Values may be scalars or numpy arrays; broadcasting follows numpy rules.
    """
    op = node[0]
    if op == "num":
        return node[1]
    if op == "var":
        try:
            return env[node[1]]
        except KeyError:
            raise KeyError("unbound variable %r" % node[1]) from None
    if op == "add":
        return evaluate(node[1], env) + evaluate(node[2], env)
    if op == "sub":
        return evaluate(node[1], env) - evaluate(node[2], env)
    if op == "mul":
        return evaluate(node[1], env) * evaluate(node[2], env)
    if op == "div":
        den = evaluate(node[2], env)
        if np.any(np.asarray(den) == 0):
            raise EvalError("division by zero", node[3] if len(node) > 3 else None)
        return evaluate(node[1], env) / den
    if op == "neg":
        return -evaluate(node[1], env)
    if op == "pow":
        return evaluate(node[1], env) ** node[2]
    if op == "call":
        return _FUNCS[node[1]](evaluate(node[2], env))
    raise ValueError("bad node %r" % (op,))


def variables(node):
    """Set of variable names appearing in the AST."""
    op = node[0]
    if op == "num":
        return set()
    if op == "var":
        return {node[1]}
    if op == "call":
        return variables(node[2])
    if op in ("neg",):
        return variables(node[1])
    if op == "pow":
        return variables(node[1])
    return variables(node[1]) | variables(node[2])


# ------------------------------------------------------------ serialization

def serialize(node):
    """Render the AST back to parseable source text.

    The output is fully parenthesized, so operator precedence never gets in
    the way; ``parse(serialize(e))`` evaluates identically to ``e``.
    """
    op = node[0]
    if op == "num":
        return repr(node[1])
    if op == "var":
        return node[1]
    if op == "add":
        return "(%s + %s)" % (serialize(node[1]), serialize(node[2]))
    if op == "sub":
        return "(%s - %s)" % (serialize(node[1]), serialize(node[2]))
    if op == "mul":
        return "(%s * %s)" % (serialize(node[1]), serialize(node[2]))
    if op == "div":
        return "(%s / %s)" % (serialize(node[1]), serialize(node[2]))
    if op == "neg":
        return "(-%s)" % serialize(node[1])
    if op == "pow":
        base = node[1]
        base_s = serialize(base)
        # composites arrive parenthesized; a negative literal would re-parse
        # as -(v^k), so it needs an explicit wrap
        if base[0] == "num" and base[1] < 0:
            base_s = "(%s)" % base_s
        return "%s^%d" % (base_s, node[2])
    if op == "call":
        return "%s(%s)" % (node[1], serialize(node[2]))
    raise ValueError("bad node %r" % (op,))


# ----------------------------------------------------------- differentiation

def _is_zero(node):
    return node[0] == "num" and node[1] == 0.0


def _is_one(node):
    return node[0] == "num" and node[1] == 1.0


def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    if a[0] == "num" and b[0] == "num":
        return ("num", a[1] + b[1])
    return ("add", a, b)


def _sub(a, b):
    if _is_zero(b):
        return a
    if a[0] == "num" and b[0] == "num":
        return ("num", a[1] - b[1])
    if _is_zero(a):
        return _neg(b)
    return ("sub", a, b)


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return ("num", 0.0)
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    if a[0] == "num" and b[0] == "num":
        return ("num", a[1] * b[1])
    return ("mul", a, b)


def _div(a, b):
    if _is_zero(a):
        return ("num", 0.0)
    if _is_one(b):
        return a
    return ("div", a, b)


def _neg(a):
    if a[0] == "num":
        return ("num", -a[1])
    if a[0] == "neg":
        return a[1]
    return ("neg", a)


def _pow(a, k):
    if k == 0:
        return ("num", 1.0)
    if k == 1:
        return a
    if a[0] == "num":
        return ("num", a[1] ** k)
    return ("pow", a, k)


def diff(node, var):
    """Symbolic derivative of the AST with respect to *var* (simplified)."""
    op = node[0]
    if op == "num":
        return ("num", 0.0)
    if op == "var":
        return ("num", 1.0 if node[1] == var else 0.0)
    if op == "add":
        return _add(diff(node[1], var), diff(node[2], var))
    if op == "sub":
        return _sub(diff(node[1], var), diff(node[2], var))
    if op == "neg":
        return _neg(diff(node[1], var))
    if op == "mul":
        a, b = node[1], node[2]
        return _add(_mul(diff(a, var), b), _mul(a, diff(b, var)))
    if op == "div":
        a, b = node[1], node[2]
        num = _sub(_mul(diff(a, var), b), _mul(a, diff(b, var)))
        return _div(num, _pow(b, 2))
    if op == "pow":
        a, k = node[1], node[2]
        return _mul(_mul(("num", float(k)), _pow(a, k - 1)), diff(a, var))
    if op == "call":
        f, a = node[1], node[2]
        da = diff(a, var)
        if f == "sin":
            outer = ("call", "cos", a)
        elif f == "cos":
            outer = _neg(("call", "sin", a))
        elif f == "exp":
            outer = node
        else:
            raise ValueError("cannot differentiate %r" % f)
        return _mul(outer, da)
    raise ValueError("bad node %r" % (op,))


# ------------------------------------------------------------- compilation

def _emit(node):
    op = node[0]
    if op == "num":
        return repr(node[1])
    if op == "var":
        return node[1]
    if op == "add":
        return "(%s + %s)" % (_emit(node[1]), _emit(node[2]))
    if op == "sub":
        return "(%s - %s)" % (_emit(node[1]), _emit(node[2]))
    if op == "mul":
        return "(%s * %s)" % (_emit(node[1]), _emit(node[2]))
    if op == "div":
        return "(%s / %s)" % (_emit(node[1]), _emit(node[2]))
    if op == "neg":
        return "(-%s)" % _emit(node[1])
    if op == "pow":
        return "(%s ** %d)" % (_emit(node[1]), node[2])
    if op == "call":
        return "_f_%s(%s)" % (node[1], _emit(node[2]))
    raise ValueError("bad node %r" % (op,))


def compile_ast(node, argnames):
    """Compile an AST to a callable taking *argnames* positionally.

    All variables in the AST must appear in argnames.  The result works on
    scalars and numpy arrays alike.
    """
    missing = variables(node) - set(argnames)
    if missing:
        raise ValueError("unbound variables: %s" % ", ".join(sorted(missing)))
    src = "def _expr_fn(%s):\n    return %s\n" % (", ".join(argnames), _emit(node))
    ns = {"_f_%s" % name: fn for name, fn in _FUNCS.items()}
    exec(src, ns)
    return ns["_expr_fn"]


class Field:
    """A parsed expression bound to a fixed argument list.

    >>> f = Field("1 + x^2", ("x",))
    >>> f(2.0)
    5.0
    """

    def __init__(self, text, argnames):
        self.text = text
        self.argnames = tuple(argnames)
        self.ast = parse(text) if isinstance(text, str) else text
        self._fn = compile_ast(self.ast, self.argnames)

    def __call__(self, *args):
        if len(args) != len(self.argnames):
            raise TypeError("expected %d arguments" % len(self.argnames))
        return self._fn(*args)

    def diff(self, var):
        d = diff(self.ast, var)
        f = Field.__new__(Field)
        f.text = None
        f.argnames = self.argnames
        f.ast = d
        f._fn = compile_ast(d, self.argnames)
        return f

    def is_constant(self):
        return not variables(self.ast)

    def constant_value(self):
        if not self.is_constant():
            raise ValueError("field is not constant")
        return float(evaluate(self.ast, {}))
