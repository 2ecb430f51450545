"""Ordered-tree differencing over a language-agnostic lexical tree.

parse_tree builds a file → statement → bracket-group → token tree from
any curly/paren-style source without a real grammar: statements split at
newlines and semicolons outside brackets, bracket pairs nest, and every
non-whitespace byte lands in exactly one leaf span.

Matching follows the gumtree scheme: a top-down pass greedily pairs
isomorphic subtrees (tallest first), a bottom-up pass pairs containers
by dice overlap of their mapped descendants, with a recovery pass inside
small matched containers that pairs leftover same-label children in
order. edit_script then derives insert/delete/update/move actions the
Chawathe way, tracked against a working copy so every action's position
is meaningful at the moment it applies. apply_edit_script replays a
script mechanically, which is the correctness oracle for the whole
pipeline.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterator, Optional

# --- Tree --------------------------------------------------------------------


@dataclass(eq=False)
class TreeNode:
    label: str
    value: str  # token text for leaves, empty for interior nodes
    children: list
    span: tuple[int, int]  # byte offsets into the source
    warnings: tuple = ()  # only populated on roots

    @property
    def is_leaf(self) -> bool:
        return self.value != ""


def preorder(node: TreeNode) -> Iterator[TreeNode]:
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(n.children))


def postorder(node: TreeNode) -> Iterator[TreeNode]:
    out = []
    stack = [node]
    while stack:
        n = stack.pop()
        out.append(n)
        stack.extend(n.children)
    return reversed(out)


def tree_size(node: TreeNode) -> int:
    return sum(1 for _ in preorder(node))


def trees_equal(a: TreeNode, b: TreeNode) -> bool:
    """Structural equality: labels, values, shape. Spans are ignored."""
    if a.label != b.label or a.value != b.value:
        return False
    if len(a.children) != len(b.children):
        return False
    return all(trees_equal(x, y) for x, y in zip(a.children, b.children))


def assign_node_ids(root: TreeNode) -> dict:
    """Stable preorder ids, root = 0. Edit scripts reference these."""
    return {node: i for i, node in enumerate(preorder(root))}


# --- Lexical parser ----------------------------------------------------------

_OPEN = {"(": "paren", "[": "bracket", "{": "brace"}
_CLOSE = {")": "paren", "]": "bracket", "}": "brace"}

_MULTI_OPS = [
    "<<-", "<-", "->", "%in%", "%%", "==", "!=", "<=", ">=", "**", "//",
    "&&", "||", "+=", "-=", "*=", "/=", "::",
]


def _scan_tokens(source: str):
    """Yield (kind, text, start_byte, end_byte); newlines come out as
    ("nl", ...) markers so the parser can split statements."""
    i = 0
    byte = 0
    n = len(source)
    while i < n:
        ch = source[i]
        start_b = byte

        def advance(count):
            nonlocal i, byte
            for c in source[i : i + count]:
                byte += len(c.encode("utf-8"))
            i += count

        if ch == "\n":
            advance(1)
            yield ("nl", "\n", start_b, byte)
            continue
        if ch.isspace():
            advance(1)
            continue
        if ch == "#":
            j = i
            while j < n and source[j] != "\n":
                j += 1
            text = source[i:j]
            advance(j - i)
            yield ("comment", text, start_b, byte)
            continue
        if ch in "\"'":
            quote = ch
            j = i + 1
            while j < n and source[j] != quote and source[j] != "\n":
                j += 2 if source[j] == "\\" and j + 1 < n else 1
            j = min(j + 1, n) if j < n and source[j] == quote else j
            text = source[i:j]
            advance(j - i)
            yield ("string", text, start_b, byte)
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            while j < n and (source[j].isalnum() or source[j] in "._"):
                j += 1
            if j < n and source[j] in "+-" and source[j - 1] in "eE":
                j += 1
                while j < n and source[j].isalnum():
                    j += 1
            text = source[i:j]
            advance(j - i)
            yield ("number", text, start_b, byte)
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            advance(j - i)
            yield ("ident", text, start_b, byte)
            continue
        if ch in _OPEN:
            advance(1)
            yield ("open", ch, start_b, byte)
            continue
        if ch in _CLOSE:
            advance(1)
            yield ("close", ch, start_b, byte)
            continue
        for op in _MULTI_OPS:
            if source.startswith(op, i):
                advance(len(op))
                yield ("op", op, start_b, byte)
                break
        else:
            advance(1)
            yield ("op", ch, start_b, byte)


def parse_tree(source: str) -> TreeNode:
    """Lexical tree of the source. Unbalanced brackets never raise: an
    orphan close becomes a plain token and an unclosed group ends at EOF,
    each noted in root.warnings."""
    total_bytes = len(source.encode("utf-8"))
    root = TreeNode("file", "", [], (0, total_bytes))
    warnings: list[str] = []
    # Stack frames: (node, bracket_kind or None). The bottom frame is a
    # statement at file level or the file itself between statements.
    stmt: Optional[TreeNode] = None
    group_stack: list[tuple[TreeNode, str]] = []

    def current_container() -> TreeNode:
        nonlocal stmt
        if group_stack:
            return group_stack[-1][0]
        if stmt is None:
            stmt = TreeNode("stmt", "", [], (0, 0))
        return stmt

    def close_stmt():
        nonlocal stmt
        if stmt is not None and stmt.children:
            stmt.span = (stmt.children[0].span[0], stmt.children[-1].span[1])
            root.children.append(stmt)
        stmt = None

    def fix_span(node: TreeNode):
        if node.children:
            node.span = (node.children[0].span[0], node.children[-1].span[1])

    for kind, text, start_b, end_b in _scan_tokens(source):
        if kind == "nl":
            if not group_stack:
                close_stmt()
            continue
        if kind == "open":
            group = TreeNode(_OPEN[text], "", [], (start_b, end_b))
            group.children.append(TreeNode("op", text, [], (start_b, end_b)))
            current_container().children.append(group)
            group_stack.append((group, _OPEN[text]))
            continue
        if kind == "close":
            if group_stack and group_stack[-1][1] == _CLOSE[text]:
                group, _ = group_stack.pop()
                group.children.append(TreeNode("op", text, [], (start_b, end_b)))
                fix_span(group)
            else:
                warnings.append(f"unbalanced {text!r} at byte {start_b}")
                current_container().children.append(
                    TreeNode("op", text, [], (start_b, end_b))
                )
            continue
        leaf = TreeNode(kind, text, [], (start_b, end_b))
        current_container().children.append(leaf)
        if kind == "op" and text == ";" and not group_stack:
            close_stmt()

    while group_stack:
        group, bracket = group_stack.pop()
        warnings.append(f"unclosed {bracket} group at byte {group.span[0]}")
        fix_span(group)
    close_stmt()
    root.warnings = tuple(warnings)
    return root


# --- Matching ----------------------------------------------------------------


class Mapping:
    """Injective, label-preserving node correspondence between two trees."""

    def __init__(self):
        self._src2dst = {}
        self._dst2src = {}

    def add(self, a: TreeNode, b: TreeNode):
        if a.label != b.label:
            raise ValueError(f"label mismatch: {a.label} vs {b.label}")
        if a in self._src2dst or b in self._dst2src:
            raise ValueError("node already mapped")
        self._src2dst[a] = b
        self._dst2src[b] = a

    def has_src(self, a) -> bool:
        return a in self._src2dst

    def has_dst(self, b) -> bool:
        return b in self._dst2src

    def dst_of(self, a) -> TreeNode:
        return self._src2dst[a]

    def src_of(self, b) -> TreeNode:
        return self._dst2src[b]

    def pairs(self):
        return list(self._src2dst.items())

    def __len__(self):
        return len(self._src2dst)


class _Info:
    """Per-tree indexes: heights, isomorphism keys, parents, positions."""

    def __init__(self, root: TreeNode):
        self.root = root
        self.parent = {}
        self.pos = {}
        self.height = {}
        self.iso = {}
        self.descendants = {}
        for i, node in enumerate(preorder(root)):
            self.pos[node] = i
            for child in node.children:
                self.parent[child] = node
        for node in postorder(root):
            if node.children:
                self.height[node] = 1 + max(self.height[c] for c in node.children)
                desc = []
                for c in node.children:
                    desc.append(c)
                    desc.extend(self.descendants[c])
                self.descendants[node] = desc
            else:
                self.height[node] = 1
                self.descendants[node] = []
            key = (node.label, node.value, tuple(id(self.iso[c]) for c in node.children))
            self.iso[node] = _intern(key)


_iso_cache: dict = {}


def _intern(key):
    got = _iso_cache.get(key)
    if got is None:
        got = object()
        _iso_cache[key] = got
    return got


def _map_isomorphic(m: Mapping, a: TreeNode, b: TreeNode):
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        m.add(x, y)
        stack.extend(zip(x.children, y.children))


def _dice(m: Mapping, n1, n2, info1: _Info, info2: _Info) -> float:
    d1 = info1.descendants[n1]
    d2 = info2.descendants[n2]
    if not d1 and not d2:
        return 1.0
    in2 = set(d2)
    common = sum(
        1 for d in d1 if m.has_src(d) and m.dst_of(d) in in2
    )
    return 2.0 * common / (len(d1) + len(d2))


def top_down_match(t1: TreeNode, t2: TreeNode, min_height: int = 2) -> Mapping:
    """Greedy isomorphic-subtree matching, tallest first. Ambiguous hash
    classes are resolved by best parent dice, then leftmost position."""
    if min_height < 1:
        raise ValueError("min_height must be >= 1")
    info1, info2 = _Info(t1), _Info(t2)
    m = Mapping()
    by_height1 = defaultdict(list)
    by_height2 = defaultdict(list)
    for node in preorder(t1):
        by_height1[info1.height[node]].append(node)
    for node in preorder(t2):
        by_height2[info2.height[node]].append(node)
    max_h = max(
        max(by_height1, default=0), max(by_height2, default=0)
    )
    for h in range(max_h, min_height - 1, -1):
        classes1 = defaultdict(list)
        for node in by_height1.get(h, ()):
            if not m.has_src(node):
                classes1[info1.iso[node]].append(node)
        classes2 = defaultdict(list)
        for node in by_height2.get(h, ()):
            if not m.has_dst(node):
                classes2[info2.iso[node]].append(node)
        for key, list1 in classes1.items():
            list2 = classes2.get(key)
            if not list2:
                continue
            if len(list1) == 1 and len(list2) == 1:
                _map_isomorphic(m, list1[0], list2[0])
                continue
            candidates = []
            for a in list1:
                for b in list2:
                    pa, pb = info1.parent.get(a), info2.parent.get(b)
                    parent_dice = (
                        _dice(m, pa, pb, info1, info2) if pa and pb else 0.0
                    )
                    candidates.append((-parent_dice, info1.pos[a], info2.pos[b], a, b))
            for _, _, _, a, b in sorted(candidates, key=lambda t: t[:3]):
                if not m.has_src(a) and not m.has_dst(b):
                    _map_isomorphic(m, a, b)
    return m


def _recovery(m: Mapping, n1, n2, info1, info2, max_size: int):
    """Inside a matched container pair, pair leftover same-label children
    in order, recursing into interior pairs."""
    if (
        len(info1.descendants[n1]) >= max_size
        or len(info2.descendants[n2]) >= max_size
    ):
        return
    used = set()
    for c1 in n1.children:
        if m.has_src(c1):
            continue
        # prefer an equal-valued partner so e.g. ")" never pairs with "+"
        pick = None
        for c2 in n2.children:
            if id(c2) in used or m.has_dst(c2) or c2.label != c1.label:
                continue
            if c2.value == c1.value:
                pick = c2
                break
            if pick is None:
                pick = c2
        if pick is not None:
            m.add(c1, pick)
            used.add(id(pick))
            if c1.children or pick.children:
                _recovery(m, c1, pick, info1, info2, max_size)


def bottom_up_match(
    t1: TreeNode,
    t2: TreeNode,
    m: Mapping,
    dice_threshold: float = 0.5,
    max_size: int = 100,
) -> Mapping:
    """Container matching: an unmatched interior node with mapped
    descendants pairs with the same-label candidate maximizing dice, when
    that reaches the threshold. Roots always pair. Newly paired small
    containers get the recovery pass."""
    info1, info2 = _Info(t1), _Info(t2)
    for n1 in postorder(t1):
        if m.has_src(n1) or n1.is_leaf:
            continue
        if n1 is t1:
            if not m.has_dst(t2) and t1.label == t2.label:
                m.add(t1, t2)
                _recovery(m, t1, t2, info1, info2, max_size)
            continue
        candidates = []
        seen = set()
        for d in info1.descendants[n1]:
            if not m.has_src(d):
                continue
            anc = info2.parent.get(m.dst_of(d))
            while anc is not None:
                if id(anc) in seen:
                    break
                seen.add(id(anc))
                if anc.label == n1.label and not m.has_dst(anc):
                    candidates.append(anc)
                anc = info2.parent.get(anc)
        if not candidates:
            continue
        best = max(
            candidates,
            key=lambda c: (_dice(m, n1, c, info1, info2), -info2.pos[c]),
        )
        if _dice(m, n1, best, info1, info2) >= dice_threshold:
            m.add(n1, best)
            _recovery(m, n1, best, info1, info2, max_size)
    return m


def match_trees(
    t1: TreeNode,
    t2: TreeNode,
    min_height: int = 2,
    dice_threshold: float = 0.5,
    max_size: int = 100,
) -> Mapping:
    m = top_down_match(t1, t2, min_height)
    return bottom_up_match(t1, t2, m, dice_threshold, max_size)


# --- Edit script -------------------------------------------------------------


@dataclass(frozen=True)
class EditAction:
    """One step transforming the source tree toward the target.

    node_id references the source tree's preorder ids; inserted nodes get
    fresh ids past the source range. position is the child index at the
    moment the action applies (earlier actions already applied)."""

    kind: str  # insert | delete | update | move
    node_id: int
    label: str = ""
    value: str = ""
    parent_id: Optional[int] = None
    position: Optional[int] = None
    new_value: Optional[str] = None


class _WNode:
    __slots__ = ("id", "label", "value", "children", "parent", "in_order")

    def __init__(self, id_, label, value):
        self.id = id_
        self.label = label
        self.value = value
        self.children = []
        self.parent = None
        self.in_order = False

    def attach(self, parent, index):
        parent.children.insert(index, self)
        self.parent = parent

    def detach(self):
        self.parent.children.remove(self)
        self.parent = None

    def index(self):
        return self.parent.children.index(self)


def _copy_working(root: TreeNode, ids: dict) -> tuple[_WNode, dict]:
    nodes = {}

    def rec(node):
        w = _WNode(ids[node], node.label, node.value)
        nodes[node] = w
        for c in node.children:
            cw = rec(c)
            cw.parent = w
            w.children.append(cw)
        return w

    return rec(root), nodes


def _lcs(s1, s2, related):
    rows = [[0] * (len(s2) + 1) for _ in range(len(s1) + 1)]
    for i in range(len(s1) - 1, -1, -1):
        for j in range(len(s2) - 1, -1, -1):
            if related(s1[i], s2[j]):
                rows[i][j] = rows[i + 1][j + 1] + 1
            else:
                rows[i][j] = max(rows[i + 1][j], rows[i][j + 1])
    out = []
    i = j = 0
    while i < len(s1) and j < len(s2):
        if related(s1[i], s2[j]):
            out.append((s1[i], s2[j]))
            i += 1
            j += 1
        elif rows[i + 1][j] >= rows[i][j + 1]:
            i += 1
        else:
            j += 1
    return out


def edit_script(t1: TreeNode, t2: TreeNode, m: Mapping) -> list[EditAction]:
    """Chawathe-style action derivation against a working copy of t1."""
    ids = assign_node_ids(t1)
    wroot, t1_to_w = _copy_working(t1, ids)
    next_id = len(ids)

    # partner maps between working nodes and t2 nodes
    w2t: dict = {}
    t2w: dict = {}
    for a, b in m.pairs():
        w = t1_to_w[a]
        w2t[w] = b
        t2w[b] = w

    dummy_w = _WNode(-1, "@dummy", "")
    wroot.attach(dummy_w, 0)
    dummy_t = TreeNode("@dummy", "", [t2], (0, 0))
    t2_parent = {t2: dummy_t}
    for node in preorder(t2):
        for c in node.children:
            t2_parent[c] = node
    w2t[dummy_w] = dummy_t
    t2w[dummy_t] = dummy_w

    t2_in_order = set()
    script: list[EditAction] = []

    def find_pos(x: TreeNode) -> int:
        y = t2_parent[x]
        siblings = y.children
        x_idx = siblings.index(x)
        left = [v for v in siblings[:x_idx] if id(v) in t2_in_order]
        if not left:
            return 0
        u = t2w[left[-1]]
        return u.index() + 1

    def align_children(w: _WNode, x: TreeNode):
        for c in w.children:
            c.in_order = False
        for c in x.children:
            t2_in_order.discard(id(c))
        s1 = [c for c in w.children if c in w2t and t2_parent.get(w2t[c]) is x]
        s2 = [c for c in x.children if c in t2w and t2w[c].parent is w]
        lcs_pairs = _lcs(s1, s2, lambda a, b: w2t.get(a) is b)
        matched_in_lcs = {id(a) for a, _ in lcs_pairs}
        for a, b in lcs_pairs:
            a.in_order = True
            t2_in_order.add(id(b))
        for b in s2:
            a = t2w[b]
            if id(a) in matched_in_lcs:
                continue
            # detach before computing the slot: a sits under w already and
            # would shift its own target index
            a.detach()
            k = find_pos(b)
            script.append(
                EditAction(kind="move", node_id=a.id, parent_id=w.id, position=k)
            )
            a.attach(w, k)
            a.in_order = True
            t2_in_order.add(id(b))

    queue = deque([t2])
    while queue:
        x = queue.popleft()
        queue.extend(x.children)
        y = t2_parent[x]
        if x not in t2w:
            z = t2w[y]
            k = find_pos(x)
            w = _WNode(next_id, x.label, x.value)
            script.append(
                EditAction(
                    kind="insert",
                    node_id=next_id,
                    label=x.label,
                    value=x.value,
                    parent_id=z.id,
                    position=k,
                )
            )
            next_id += 1
            w.attach(z, k)
            w2t[w] = x
            t2w[x] = w
        else:
            w = t2w[x]
            if w.value != x.value:
                script.append(
                    EditAction(kind="update", node_id=w.id, new_value=x.value)
                )
                w.value = x.value
            z = t2w[y]
            if w.parent is not z:
                k = find_pos(x)
                script.append(
                    EditAction(kind="move", node_id=w.id, parent_id=z.id, position=k)
                )
                w.detach()
                w.attach(z, k)
        w.in_order = True
        t2_in_order.add(id(x))
        align_children(w, x)

    def w_postorder(node):
        for c in list(node.children):
            yield from w_postorder(c)
        yield node

    doomed = [w for w in w_postorder(dummy_w) if w is not dummy_w and w not in w2t]
    for w in doomed:
        script.append(EditAction(kind="delete", node_id=w.id))
        w.detach()
    return script


def apply_edit_script(t1: TreeNode, script: list[EditAction]) -> TreeNode:
    """Mechanically replay a script on a copy of t1 and return the result.

    Kept free of any matching logic so it can serve as the oracle for
    edit_script."""
    ids = assign_node_ids(t1)
    root, _ = _copy_working(t1, ids)
    dummy = _WNode(-1, "@dummy", "")
    root.attach(dummy, 0)
    by_id = {w.id: w for w in _walk_w(dummy)}
    for action in script:
        if action.kind == "insert":
            node = _WNode(action.node_id, action.label, action.value)
            node.attach(by_id[action.parent_id], action.position)
            by_id[action.node_id] = node
        elif action.kind == "update":
            by_id[action.node_id].value = action.new_value
        elif action.kind == "move":
            node = by_id[action.node_id]
            node.detach()
            node.attach(by_id[action.parent_id], action.position)
        elif action.kind == "delete":
            node = by_id.pop(action.node_id)
            node.detach()
        else:
            raise ValueError(f"unknown action kind {action.kind!r}")
    if not dummy.children:
        raise ValueError("script deleted the root")
    return _to_tree(dummy.children[0])


def _walk_w(w: _WNode):
    yield w
    for c in w.children:
        yield from _walk_w(c)


def _to_tree(w: _WNode) -> TreeNode:
    return TreeNode(
        label=w.label,
        value=w.value,
        children=[_to_tree(c) for c in w.children],
        span=(0, 0),
    )


def diff_sources(old: str, new: str, **params) -> tuple[TreeNode, TreeNode, Mapping, list[EditAction]]:
    """Parse, match, and script two sources in one call."""
    t1 = parse_tree(old)
    t2 = parse_tree(new)
    m = match_trees(t1, t2, **params)
    return t1, t2, m, edit_script(t1, t2, m)
