"""Core type grammar, the finite ground-type universe, substitution records,
and color multisets.

Types come in two flavors sharing one node grammar: *schemes* (may contain
type variables, associated-type projections, and field projections, as found
in API signatures) and *ground types* (fully concrete, indexing net places).
Reference nodes carry a lifetime name; the reserved hook lifetime ``HOOK`` is
the canonical lifetime slot of net-generated reference types and is never
legal in input files.

Everything here is immutable and freely shareable across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Mapping

# Reserved lifetime hook: carries concrete region labels inside token colors.
HOOK = "'•"

SHR = "shr"
MUT = "mut"

# Primitive scalar types of the object language; preloaded as Copy + Clone.
PRIMITIVES = frozenset(
    {
        "u8", "u16", "u32", "u64", "u128", "usize",
        "i8", "i16", "i32", "i64", "i128", "isize",
        "bool", "char", "f32", "f64",
    }
)


class TypeError_(Exception):
    """Malformed or ill-scoped type."""


class UnknownType(TypeError_):
    """A name that resolves to no declared type."""


@dataclass(frozen=True)
class Ty:
    """Base class for type nodes. Ordering is lexicographic on `render`."""

    def __lt__(self, other: "Ty") -> bool:
        return render(self) < render(other)

    def __le__(self, other: "Ty") -> bool:
        return render(self) <= render(other)


@dataclass(frozen=True)
class BaseTy(Ty):
    """Nominal or primitive monomorphic type, e.g. ``u8`` or ``R``."""

    name: str


@dataclass(frozen=True)
class TyVar(Ty):
    """Generic type variable declared by a callable item."""

    name: str


@dataclass(frozen=True)
class TyApp(Ty):
    """Generic application with a nominal head, e.g. ``Vec<u8>``."""

    head: BaseTy
    args: tuple


@dataclass(frozen=True)
class TupleTy(Ty):
    elems: tuple


@dataclass(frozen=True)
class SliceTy(Ty):
    elem: Ty


@dataclass(frozen=True)
class RefTy(Ty):
    """Reference type; `qual` is ``shr`` or ``mut``, `life` a lifetime name."""

    qual: str
    life: str
    inner: Ty


@dataclass(frozen=True)
class AssocTy(Ty):
    """Unresolved associated-type projection ``<base as trait>::name``."""

    base: Ty
    trait: str
    name: str


@dataclass(frozen=True)
class FieldTy(Ty):
    """Unresolved field projection ``base.field``."""

    base: Ty
    field: str


UNIT = TupleTy(())


@lru_cache(maxsize=None)
def render(t: Ty) -> str:
    """Deterministic concrete syntax; doubles as the total order key."""
    if isinstance(t, BaseTy):
        return t.name
    if isinstance(t, TyVar):
        return t.name
    if isinstance(t, TyApp):
        return f"{t.head.name}<{', '.join(render(a) for a in t.args)}>"
    if isinstance(t, TupleTy):
        if len(t.elems) == 1:
            return f"({render(t.elems[0])},)"
        return f"({', '.join(render(e) for e in t.elems)})"
    if isinstance(t, SliceTy):
        return f"[{render(t.elem)}]"
    if isinstance(t, RefTy):
        mut = "mut " if t.qual == MUT else ""
        life = "" if t.life == HOOK else t.life + " "
        return f"&{life}{mut}{render(t.inner)}"
    if isinstance(t, AssocTy):
        return f"<{render(t.base)} as {t.trait}>::{t.name}"
    if isinstance(t, FieldTy):
        return f"{render(t.base)}.{t.field}"
    raise TypeError_(f"unknown type node {t!r}")


# ---------------------------------------------------------------------------
# Parsing


class ParseError(TypeError_):
    def __init__(self, text: str, pos: int, msg: str):
        super().__init__(f"column {pos}: {msg} in {text!r}")
        self.text = text
        self.pos = pos


_SYMBOLS = ("::", "<", ">", "(", ")", "[", "]", "&", ",", ".")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    out = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if text.startswith("::", i):
            out.append(("sym", "::", i))
            i += 2
            continue
        if c in "<>()[]&,.":
            out.append(("sym", c, i))
            i += 1
            continue
        if c == "'":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            if j == i + 1:
                raise ParseError(text, i, "empty lifetime")
            out.append(("life", text[i:j], i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append(("ident", text[i:j], i))
            i = j
            continue
        raise ParseError(text, i, f"unexpected character {c!r}")
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int] | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self) -> tuple[str, str, int]:
        if self.i >= len(self.toks):
            raise ParseError(self.text, len(self.text), "unexpected end of type")
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, val: str) -> None:
        kind, v, pos = self.take()
        if v != val:
            raise ParseError(self.text, pos, f"expected {val!r}, found {v!r}")

    def type_(self) -> Ty:
        t = self.peek()
        if t is None:
            raise ParseError(self.text, len(self.text), "empty type")
        if t[1] == "&":
            self.take()
            life = None
            nxt = self.peek()
            if nxt is not None and nxt[0] == "life":
                life = self.take()[1]
            qual = SHR
            nxt = self.peek()
            if nxt is not None and nxt[1] == "mut":
                self.take()
                qual = MUT
            inner = self.type_()
            return RefTy(qual, life if life is not None else "", inner)
        node = self.atom()
        while True:
            nxt = self.peek()
            if nxt is not None and nxt[1] == ".":
                self.take()
                kind, name, pos = self.take()
                if kind != "ident":
                    raise ParseError(self.text, pos, "expected field name")
                node = FieldTy(node, name)
            else:
                return node

    def atom(self) -> Ty:
        kind, v, pos = self.take()
        if v == "(":
            elems = []
            trailing = False
            if self.peek() is not None and self.peek()[1] == ")":
                self.take()
                return TupleTy(())
            while True:
                elems.append(self.type_())
                kind2, v2, pos2 = self.take()
                if v2 == ")":
                    break
                if v2 != ",":
                    raise ParseError(self.text, pos2, "expected ',' or ')'")
                if self.peek() is not None and self.peek()[1] == ")":
                    self.take()
                    trailing = True
                    break
            if len(elems) == 1 and not trailing:
                return elems[0]  # plain parentheses
            return TupleTy(tuple(elems))
        if v == "[":
            inner = self.type_()
            self.expect("]")
            return SliceTy(inner)
        if v == "<":
            base = self.type_()
            kind2, v2, pos2 = self.take()
            if v2 != "as":
                raise ParseError(self.text, pos2, "expected 'as'")
            kind3, trait, pos3 = self.take()
            if kind3 != "ident":
                raise ParseError(self.text, pos3, "expected trait name")
            self.expect(">")
            self.expect("::")
            kind4, name, pos4 = self.take()
            if kind4 != "ident":
                raise ParseError(self.text, pos4, "expected associated type name")
            return AssocTy(base, trait, name)
        if kind == "ident":
            nxt = self.peek()
            if nxt is not None and nxt[1] == "<":
                self.take()
                args = []
                while True:
                    args.append(self.type_())
                    kind2, v2, pos2 = self.take()
                    if v2 == ">":
                        break
                    if v2 != ",":
                        raise ParseError(self.text, pos2, "expected ',' or '>'")
                return TyApp(BaseTy(v), tuple(args))
            return BaseTy(v)
        raise ParseError(self.text, pos, f"unexpected token {v!r}")


def parse_type(text: str) -> Ty:
    """Parse the concrete type grammar.

    Elided reference lifetimes come back with an empty `life`; callers
    resolve them per context (fresh implicit parameter in signatures, the
    hook in ground positions). The hook itself is rejected in input.
    """
    p = _Parser(text)
    t = p.type_()
    rest = p.peek()
    if rest is not None:
        raise ParseError(text, rest[2], f"trailing input {rest[1]!r}")
    for life in _all_lifetime_names(t):
        if life == HOOK:
            raise ParseError(text, 0, "reserved hook lifetime not allowed in input")
    return t


def _all_lifetime_names(t: Ty) -> Iterator[str]:
    if isinstance(t, RefTy):
        if t.life:
            yield t.life
        yield from _all_lifetime_names(t.inner)
    else:
        for c in components(t):
            yield from _all_lifetime_names(c)


# ---------------------------------------------------------------------------
# Structural helpers


def components(t: Ty) -> tuple:
    """Direct component types (tuple elems, slice elem, ref referent, app args,
    projection bases)."""
    if isinstance(t, TyApp):
        return t.args
    if isinstance(t, TupleTy):
        return t.elems
    if isinstance(t, SliceTy):
        return (t.elem,)
    if isinstance(t, RefTy):
        return (t.inner,)
    if isinstance(t, (AssocTy, FieldTy)):
        return (t.base,)
    return ()


def fv_lifetimes(t: Ty) -> frozenset:
    """Set of lifetime names occurring in `t`; Ref contributes its own label."""
    acc = set()
    if isinstance(t, RefTy):
        acc.add(t.life)
    for c in components(t):
        acc |= fv_lifetimes(c)
    return frozenset(acc)


def fv_typevars(t: Ty) -> frozenset:
    acc = set()
    if isinstance(t, TyVar):
        acc.add(t.name)
    for c in components(t):
        acc |= fv_typevars(c)
    return frozenset(acc)


def is_ground(t: Ty) -> bool:
    """No type variables and no unresolved projections anywhere."""
    if isinstance(t, (TyVar, AssocTy, FieldTy)):
        return False
    return all(is_ground(c) for c in components(t))


def hookify(t: Ty) -> Ty:
    """Replace every reference lifetime by the hook (place-index normal form)."""
    if isinstance(t, RefTy):
        return RefTy(t.qual, HOOK, hookify(t.inner))
    if isinstance(t, TyApp):
        return TyApp(t.head, tuple(hookify(a) for a in t.args))
    if isinstance(t, TupleTy):
        return TupleTy(tuple(hookify(e) for e in t.elems))
    if isinstance(t, SliceTy):
        return SliceTy(hookify(t.elem))
    if isinstance(t, AssocTy):
        return AssocTy(hookify(t.base), t.trait, t.name)
    if isinstance(t, FieldTy):
        return FieldTy(hookify(t.base), t.field)
    return t


def ref_depth_of(t: Ty) -> int:
    """Maximal count of Ref nodes on any root-to-leaf path."""
    inner = max((ref_depth_of(c) for c in components(t)), default=0)
    return inner + 1 if isinstance(t, RefTy) else inner


def base_names(t: Ty) -> frozenset:
    acc = set()
    if isinstance(t, BaseTy):
        acc.add(t.name)
    if isinstance(t, TyApp):
        acc.add(t.head.name)
    for c in components(t):
        acc |= base_names(c)
    return frozenset(acc)


def subst_types(t: Ty, tmap: Mapping[str, Ty]) -> Ty:
    """Apply a type-variable substitution."""
    if isinstance(t, TyVar):
        return tmap.get(t.name, t)
    if isinstance(t, TyApp):
        return TyApp(t.head, tuple(subst_types(a, tmap) for a in t.args))
    if isinstance(t, TupleTy):
        return TupleTy(tuple(subst_types(e, tmap) for e in t.elems))
    if isinstance(t, SliceTy):
        return SliceTy(subst_types(t.elem, tmap))
    if isinstance(t, RefTy):
        return RefTy(t.qual, t.life, subst_types(t.inner, tmap))
    if isinstance(t, AssocTy):
        return AssocTy(subst_types(t.base, tmap), t.trait, t.name)
    if isinstance(t, FieldTy):
        return FieldTy(subst_types(t.base, tmap), t.field)
    return t


# ---------------------------------------------------------------------------
# Substitution records


class JoinConflict(Exception):
    """Two records disagree on a key; join is undefined."""

    def __init__(self, key: str, left, right):
        super().__init__(f"incompatible binding for {key}: {left!r} vs {right!r}")
        self.key = key
        self.left = left
        self.right = right


@dataclass(frozen=True)
class Subst:
    """A pair of finite partial maps: type vars to ground types, lifetime
    names to region labels. Stored as sorted tuples for hashability."""

    tmap: tuple = ()
    lmap: tuple = ()

    @staticmethod
    def of(tmap: Mapping[str, Ty] | None = None, lmap: Mapping[str, int] | None = None) -> "Subst":
        tm = tuple(sorted((tmap or {}).items()))
        lm = tuple(sorted((lmap or {}).items()))
        return Subst(tm, lm)

    def types(self) -> dict:
        return dict(self.tmap)

    def lifetimes(self) -> dict:
        return dict(self.lmap)

    def tget(self, name: str):
        return dict(self.tmap).get(name)

    def lget(self, name: str):
        return dict(self.lmap).get(name)

    def join(self, other: "Subst") -> "Subst":
        tm = dict(self.tmap)
        for k, v in other.tmap:
            if k in tm and tm[k] != v:
                raise JoinConflict(k, tm[k], v)
            tm[k] = v
        lm = dict(self.lmap)
        for k, v in other.lmap:
            if k in lm and lm[k] != v:
                raise JoinConflict(k, lm[k], v)
            lm[k] = v
        return Subst.of(tm, lm)


def subst_join(a: Subst, b: Subst) -> Subst:
    return a.join(b)


# ---------------------------------------------------------------------------
# Multisets


class Multiset:
    """Immutable finite multiset with clamped difference.

    Elements must be hashable and mutually orderable; iteration is sorted,
    which keeps every downstream rendering deterministic.
    """

    __slots__ = ("_items", "_hash")

    def __init__(self, items: Iterable = ()):  # items: pairs or elements
        counts: dict = {}
        for it in items:
            if isinstance(it, tuple) and len(it) == 2 and isinstance(it[1], int):
                x, n = it
            else:
                x, n = it, 1
            if n < 0:
                raise ValueError("negative multiplicity")
            if n:
                counts[x] = counts.get(x, 0) + n
        self._items = tuple(sorted(counts.items(), key=lambda kv: kv[0]))
        self._hash = hash(self._items)

    @staticmethod
    def of(*elems) -> "Multiset":
        return Multiset(elems)

    def items(self) -> tuple:
        return self._items

    def count(self, x) -> int:
        return dict(self._items).get(x, 0)

    def total(self) -> int:
        return sum(n for _, n in self._items)

    def elements(self) -> Iterator:
        for x, n in self._items:
            for _ in range(n):
                yield x

    def support(self) -> tuple:
        return tuple(x for x, _ in self._items)

    def add(self, other: "Multiset") -> "Multiset":
        counts = dict(self._items)
        for x, n in other._items:
            counts[x] = counts.get(x, 0) + n
        return Multiset(counts.items())

    def sub(self, other: "Multiset") -> "Multiset":
        counts = dict(self._items)
        for x, n in other._items:
            counts[x] = max(counts.get(x, 0) - n, 0)
        return Multiset(counts.items())

    def leq(self, other: "Multiset") -> bool:
        theirs = dict(other._items)
        return all(n <= theirs.get(x, 0) for x, n in self._items)

    def __bool__(self) -> bool:
        return bool(self._items)

    def __eq__(self, other) -> bool:
        return isinstance(other, Multiset) and self._items == other._items

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        inner = ", ".join(f"{x!r}:{n}" for x, n in self._items)
        return "{" + inner + "}"


def ms_add(a: Multiset, b: Multiset) -> Multiset:
    return a.add(b)


def ms_sub(a: Multiset, b: Multiset) -> Multiset:
    return a.sub(b)


def ms_leq(a: Multiset, b: Multiset) -> bool:
    return a.leq(b)


# ---------------------------------------------------------------------------
# Ground universe


class Universe:
    """The finite set of ground types indexing places.

    Reference members are hook-normalized; nesting of generated references is
    bounded by `ref_depth` (given signature types deeper than the bound are
    kept as-is).
    """

    def __init__(self, members: Iterable, ref_depth: int):
        ms = set(members)
        for m in ms:
            if not is_ground(m):
                raise TypeError_(f"non-ground universe member {render(m)}")
        self._members = frozenset(ms)
        self.sorted = tuple(sorted(self._members, key=render))
        self.ref_depth = ref_depth

    def __contains__(self, t: Ty) -> bool:
        return t in self._members

    def __iter__(self) -> Iterator:
        return iter(self.sorted)

    def __len__(self) -> int:
        return len(self._members)

    def require(self, t: Ty) -> Ty:
        if t not in self._members:
            raise UnknownType(f"type {render(t)} is not in the ground universe")
        return t

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Universe)
            and self._members == other._members
            and self.ref_depth == other.ref_depth
        )

    def __hash__(self) -> int:
        return hash((self._members, self.ref_depth))


def build_ground_universe(
    sig_types: Iterable,
    structs: Mapping[str, Mapping[str, Ty]],
    ref_depth: int,
) -> Universe:
    """Least set containing the (hookified) signature types, closed under
    components, visible struct fields, and reference formation up to
    `ref_depth` levels of nesting."""
    if ref_depth < 0:
        raise ValueError("ref_depth must be >= 0")
    known_names = set(structs.keys())
    seeds = sorted({hookify(t) for t in sig_types}, key=render)
    for t in seeds:
        known_names |= base_names(t)

    members: set = set()
    pending: list = list(seeds)
    while pending:
        t = pending.pop()
        if t in members:
            continue
        if not is_ground(t):
            raise TypeError_(f"signature type did not ground: {render(t)}")
        members.add(t)
        for c in components(t):
            pending.append(c)
        if isinstance(t, BaseTy) and t.name in structs:
            for fname, fty in structs[t.name].items():
                fty = hookify(fty)
                missing = base_names(fty) - known_names
                if missing:
                    raise UnknownType(
                        f"struct {t.name} field {fname} references unknown type "
                        f"{sorted(missing)[0]}"
                    )
                pending.append(fty)

    # Reference closure, iterated because new refs admit further nesting.
    while True:
        fresh = set()
        for m in sorted(members, key=render):
            if ref_depth_of(m) < ref_depth:
                for qual in (SHR, MUT):
                    r = RefTy(qual, HOOK, m)
                    if r not in members:
                        fresh.add(r)
        if not fresh:
            break
        members |= fresh

    return Universe(members, ref_depth)
