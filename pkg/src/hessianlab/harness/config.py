"""Flat ``key = value`` experiment configs with dotted keys.

Format::

    # comment
    name = acceptance
    seed = 7
    quad.suite = solve          # every block needs a suite
    quad.h = 1/16, 1/32         # lists are comma separated
    quad.f = constant(c=1)      # catalog call ...
    quad.phi = quadratic        # ... or a bare name with dotted parameters
    quad.phi.a = 0.5

Numbers accept arithmetic with ``sqrt``, ``exp``, ``log`` and ``pi``.  Blocks
run in file order.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import fields
from ..errors import ConfigError, HessianLabError

__all__ = ["ExperimentConfig", "Block", "parse_config", "load_config", "resolve_field",
           "CATALOG", "SUITES"]

SUITES = ("solve", "sharpness", "probe", "kernel")
TOP_LEVEL = ("name", "seed", "out", "timing")

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_FUNCS = {"sqrt": math.sqrt, "exp": math.exp, "log": math.log}
_CONSTS = {"pi": math.pi}


def _num(node, key):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _num(node.operand, key)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        try:
            return float(_BINOPS[type(node.op)](_num(node.left, key), _num(node.right, key)))
        except (ZeroDivisionError, OverflowError) as exc:
            raise ConfigError(f"{key}: {exc}", key) from None
    if isinstance(node, ast.Name) and node.id in _CONSTS:
        return _CONSTS[node.id]
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
            and len(node.args) == 1 and not node.keywords:
        try:
            return float(_FUNCS[node.func.id](_num(node.args[0], key)))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", key) from None
    raise ConfigError(f"{key}: not a number: {ast.unparse(node)!r}", key)


def _parse_expr(text: str, key: str):
    try:
        return ast.parse(text.strip(), mode="eval").body
    except SyntaxError:
        raise ConfigError(f"{key}: cannot parse {text!r}", key) from None


def parse_number(text: str, key: str) -> float:
    return _num(_parse_expr(text, key), key)


def parse_numbers(text: str, key: str) -> tuple:
    if not text.strip():
        return ()
    node = _parse_expr(text, key)
    items = node.elts if isinstance(node, (ast.Tuple, ast.List)) else [node]
    return tuple(_num(e, key) for e in items)


# ---------------------------------------------------------------------------
# field catalog

def _wang(n, alpha, beta):
    return fields.wang_field(alpha, beta, n)


def _quadratic(n, a=1.0, b=0.0, center=None):
    return fields.quadratic(n, a, b, center=center)


def _affine(n, coeffs, const=0.0):
    return fields.affine(n, coeffs, const)


CATALOG = {
    # name: (builder, number of field arguments)
    "constant": (lambda n, c: fields.constant(c, n), 0),
    "quadratic": (_quadratic, 0),
    "affine": (_affine, 0),
    "radial_power": (lambda n, p, scale=1.0: fields.radial_power(n, p, scale), 0),
    "exp_quadratic": (lambda n, c=1.0, scale=1.0: fields.exp_quadratic(n, c, scale), 0),
    "wang": (_wang, 0),
    "product": (lambda n, f, g: fields.product(f, g), 2),
    "sum": (lambda n, f, g: fields.sum_of(f, g), 2),
    "power_of": (lambda n, f, inv_p: fields.power_transform(f, inv_p), 1),
}


def _arg_value(node, key):
    if isinstance(node, (ast.Tuple, ast.List)):
        return tuple(_num(e, key) for e in node.elts)
    return _num(node, key)


def _build(node, n, key, extra=None):
    if isinstance(node, ast.Name):
        name, args, kwargs = node.id, [], {}
    elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        name, args, kwargs = node.func.id, node.args, node.keywords
    else:
        raise ConfigError(f"{key}: expected a field name or call, got {ast.unparse(node)!r}", key)
    if name not in CATALOG:
        raise ConfigError(f"{key}: unknown field {name!r} (known: {', '.join(sorted(CATALOG))})", key)
    builder, nfields = CATALOG[name]
    if len(args) < nfields:
        raise ConfigError(f"{key}: {name} needs {nfields} field argument(s)", key)
    pos = [_build(a, n, key) for a in args[:nfields]]
    pos += [_arg_value(a, key) for a in args[nfields:]]
    kw = {k.arg: _arg_value(k.value, key) for k in kwargs}
    kw.update(extra or {})
    try:
        return builder(n, *pos, **kw)
    except TypeError as exc:
        raise ConfigError(f"{key}: bad arguments for {name}: {exc}", key) from None
    except HessianLabError as exc:
        raise ConfigError(f"{key}: {exc}", key) from None


def resolve_field(text: str, n: int, key: str = "field", extra: dict | None = None):
    """Build an :class:`AnalyticField` from a catalog expression."""
    return _build(_parse_expr(text, key), n, key, extra)


# ---------------------------------------------------------------------------
# config objects

@dataclass
class Block:
    name: str
    suite: str
    raw: dict = field(default_factory=dict)  # keys without the block prefix
    used: set = field(default_factory=set)

    def key(self, k: str) -> str:
        return f"{self.name}.{k}"

    def has(self, k: str) -> bool:
        return k in self.raw

    def _get(self, k, default, required):
        self.used.add(k)
        if k in self.raw:
            return self.raw[k]
        if required:
            raise ConfigError(f"missing key {self.key(k)}", self.key(k))
        return default

    def text(self, k, default=None, required=False):
        v = self._get(k, None, required)
        return default if v is None else v

    def number(self, k, default=None, required=False):
        v = self._get(k, None, required)
        return default if v is None else parse_number(v, self.key(k))

    def integer(self, k, default=None, required=False):
        v = self.number(k, default, required)
        if v is None:
            return None
        if v != int(v):
            raise ConfigError(f"{self.key(k)}: expected an integer, got {v}", self.key(k))
        return int(v)

    def numbers(self, k, default=None, required=False):
        v = self._get(k, None, required)
        return default if v is None else parse_numbers(v, self.key(k))

    def flag(self, k, default=False):
        v = self._get(k, None, False)
        if v is None:
            return default
        s = v.strip().lower()
        if s in ("true", "yes", "1", "on"):
            return True
        if s in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{self.key(k)}: expected a boolean, got {v!r}", self.key(k))

    def names(self, k, required=False):
        v = self._get(k, "", required)
        return tuple(s.strip() for s in v.split(",") if s.strip())

    def field(self, k, n, required=True):
        v = self._get(k, None, required)
        if v is None:
            return None
        prefix = k + "."
        extra = {}
        for sub in self.raw:
            if sub.startswith(prefix) and "." not in sub[len(prefix):]:
                self.used.add(sub)
                name = sub[len(prefix):]
                extra[name] = _arg_value(_parse_expr(self.raw[sub], self.key(sub)), self.key(sub))
        return resolve_field(v, n, self.key(k), extra)

    def unused(self) -> list[str]:
        return sorted(self.key(k) for k in self.raw if k not in self.used)


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    blocks: list
    out: str | None = None
    timing: bool = False
    source: str = ""
    text: str = ""

    def select(self, suite: str | None) -> list:
        return [b for b in self.blocks if suite is None or b.suite == suite]


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    top: dict = {}
    blocks: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'", f"line {lineno}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or any(not part for part in key.split(".")):
            raise ConfigError(f"{source}:{lineno}: malformed key {key!r}", key)
        if "." not in key:
            if key not in TOP_LEVEL:
                raise ConfigError(f"unknown top-level key {key!r}", key)
            if key in top:
                raise ConfigError(f"duplicate key {key!r}", key)
            top[key] = value
            continue
        bname, rest = key.split(".", 1)
        raw = blocks.setdefault(bname, {})
        if rest in raw:
            raise ConfigError(f"duplicate key {key!r}", key)
        raw[rest] = value

    out_blocks = []
    for bname, raw in blocks.items():
        suite = raw.get("suite")
        if suite is None:
            raise ConfigError(f"block {bname!r} has no suite ({bname}.suite)", f"{bname}.suite")
        if suite not in SUITES:
            raise ConfigError(f"{bname}.suite: unknown suite {suite!r} (known: {', '.join(SUITES)})",
                              f"{bname}.suite")
        b = Block(bname, suite, raw)
        b.used.add("suite")
        out_blocks.append(b)
    try:
        seed = int(top.get("seed", "0"))
    except ValueError:
        raise ConfigError(f"seed: expected an integer, got {top['seed']!r}", "seed") from None
    timing = top.get("timing", "false").lower() in ("true", "yes", "1", "on")
    cfg = ExperimentConfig(top.get("name", Path(source).stem), seed, out_blocks,
                           top.get("out"), timing, source, text)
    # resolve everything once so bad names surface before any solve runs
    from .suites import validate_block
    for b in cfg.blocks:
        validate_block(b)
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}", str(p)) from None
    return parse_config(text, str(p))


def as_vector(values, n: int, key: str) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.size == 1:
        return np.full(n, float(v.ravel()[0]))
    if v.shape != (n,):
        raise ConfigError(f"{key}: expected {n} components, got {v.size}", key)
    return v
