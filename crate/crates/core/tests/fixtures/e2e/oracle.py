#!/usr/bin/env python3
"""Builds the end-to-end fixture and scores it independently.

Writes cases.jsonl, hyps.tsv and freq.tsv, then the expected evaluate and
analyze reports (canonical JSON: sorted keys, compact, floats to 4 places).

Run from this directory:  python3 oracle.py
"""

import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))

# (case_id, origin, source, annotations, perturbations, hypothesis overrides)
# Annotations are lists of (start, end, replacement). Each perturbation is a
# list of edits on the original. Hypotheses default to the sentence corrected
# with annotation 0; overrides map sentence index -> text ("=" means leave
# the source untouched).
CASES = [
    ("c01", "conll14", "I like play basketball .",
     [[(2, 3, "playing")]],
     [[(1, 1, "really"), (3, 4, "hockey")], [(3, 4, "football")], [(0, 1, "We")],
      [(4, 4, "today")], [(1, 2, "love")]],
     {1: "=", 2: "I like playing soccer ."}),
    ("c02", "conll14", "He go to school every day .",
     [[(1, 2, "goes")], [(1, 2, "went")]],
     [[(3, 4, "class")], [(4, 5, "each")], [(6, 6, "again")], [(0, 0, "Now")], [(4, 6, "")]],
     {0: "He went to school every day .", 3: "He went to school every day again ."}),
    ("c03", "bea19", "She have two cat .",
     [[(1, 2, "has"), (3, 4, "cats")]],
     [[(2, 3, "three")], [(0, 0, "Today")], [(4, 4, "now")], [(0, 1, "He")],
      [(0, 0, "Yes"), (2, 3, "many")]],
     {0: "She has two cat .", 2: "Today she has two cat .", 3: "She has two cat now .",
      4: "=", 5: "Yes she has many cat ."}),
    ("c04", "bea19", "The informations is useful .",
     [[(1, 2, "information")]],
     [[(3, 4, "helpful")], [(4, 4, "today")], [(0, 1, "This")], [(2, 2, "really")], [(3, 3, "very")]],
     {}),
    ("c05", "tem8", "We discussed about the plan yesterday .",
     [[(2, 3, "")]],
     [[(5, 6, "today")], [(0, 0, "Then")], [(3, 4, "a")], [(4, 4, "new")], [(6, 6, "again")]],
     {2: "=", 3: "we discussed a plan yesterday ."}),
    ("c06", "tem8", "The weather is nice today .",
     [[]],
     [[(4, 5, "now")], [(1, 2, "sky")], [(3, 3, "very")], [(4, 5, "")], [(2, 3, "was")]],
     {2: "The sky is good today ."}),
    ("c07", "other", "I am agree with you .",
     [[(1, 2, "")], [(1, 3, "agree")]],
     [[(4, 5, "him")], [(5, 5, "completely")], [(0, 0, "Honestly ,")], [(4, 5, "them")], [(5, 6, "!")]],
     {5: "I agree with you ."}),
    ("c08", "other", "This are my book .",
     [[(1, 2, "is")]],
     [[(3, 4, "pen")], [(4, 4, "here")], [(2, 3, "your")]],
     {2: "These are my book here ."}),
    ("c09", "conll14", "Many people in the city which is very big and busy do not likes the noise .",
     [[(13, 14, "like")]],
     [[(0, 1, "Most")], [(8, 9, "large")], [(15, 16, "sound")], [(4, 5, "town")], [(9, 11, "")]],
     {2: "=", 5: "="}),
    ("c10", "bea19", "I look forward to hear from you .",
     [[(4, 5, "hearing")]],
     [[(0, 0, "So")], [(7, 7, "soon")], [(1, 2, "really look")], [(6, 7, "them")], [(2, 3, "ahead")]],
     {4: "I look forward to hear from them ."}),
]

FREQ = {
    "hockey": 120, "football": 60, "love": 40, "We": 500, "class": 30, "each": 200,
    "three": 55, "He": 700, "many": 600, "helpful": 12, "This": 650, "today": 300,
    "a": 1000, "was": 800, "sky": 10, "now": 50, "him": 80, "them": 90, "pen": 8,
    "your": 500, "Most": 45, "large": 70, "sound": 9, "town": 25, "really": 400,
    "ahead": 15,
}

BINS = [(0, 1), (2, 4), (5, 9), (10, None)]
BETA = 0.5


def toks(s):
    return s.split()


def edit(s, e, r):
    return (s, e, tuple(toks(r)))


def apply(src, edits):
    out = list(src)
    for s, e, r in sorted(edits, reverse=True):
        out[s:e] = list(r)
    return out


# ---- alignment -------------------------------------------------------------

def sub_cost(x, y):
    if x == y:
        return 0
    if x.lower() == y.lower():
        return 1
    return 10


def align_ops(a, b):
    n, m = len(a), len(b)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = 10 * i
    for j in range(1, m + 1):
        d[0][j] = 10 * j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i][j] = min(d[i - 1][j - 1] + sub_cost(a[i - 1], b[j - 1]),
                          d[i - 1][j] + 10, d[i][j - 1] + 10)
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and a[i - 1] == b[j - 1] and d[i][j] == d[i - 1][j - 1]:
            ops.append("M"); i -= 1; j -= 1
        elif i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + sub_cost(a[i - 1], b[j - 1]):
            ops.append("S"); i -= 1; j -= 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 10:
            ops.append("D"); i -= 1
        else:
            ops.append("I"); j -= 1
    return ops[::-1]


def diff(a, b):
    edits = []
    i = j = 0
    run = None
    for op in align_ops(a, b) + ["END"]:
        if op in ("M", "END"):
            if run is not None:
                edits.append((run[0], i, tuple(b[run[1]:j])))
                run = None
            i += 1
            j += 1
            continue
        if run is None:
            run = (i, j)
        if op in ("S", "D"):
            i += 1
        if op in ("S", "I"):
            j += 1
    return edits


# ---- scoring ---------------------------------------------------------------

def prf(tp, fp, fn):
    p = 1.0 if tp + fp == 0 else tp / (tp + fp)
    r = 1.0 if tp + fn == 0 else tp / (tp + fn)
    b2 = BETA * BETA
    f = 0.0 if p * r == 0 else (1 + b2) * p * r / (b2 * p + r)
    return p, r, f


def best_counts(hyp, annotations):
    best = None
    for ann in annotations:
        tp = len(set(hyp) & set(ann))
        c = (tp, len(hyp) - tp, len(ann) - tp)
        if best is None or prf(*c)[2] > prf(*best)[2]:
            best = c
    return best


def overlaps(a, b):
    (s1, e1), (s2, e2) = a, b
    if s1 < e1 and s2 < e2:
        return s1 < e2 and s2 < e1
    if s1 == e1 and s2 == e2:
        return s1 == s2
    if s1 == e1:
        return s2 < s1 < e2
    return s1 < s2 < e1


def perturbed_spans(perturbation):
    """Each perturbation edit's span in original and in variant coordinates."""
    out = []
    shift = 0
    for s, e, r in sorted(perturbation):
        out.append(((s, e), (s + shift, s + shift + len(r))))
        shift += len(r) - (e - s)
    return out


def to_variant(ed, spans):
    s, e, r = ed
    shift = sum((pv[1] - pv[0]) - (po[1] - po[0]) for po, pv in spans if po[1] <= s)
    return (s + shift, e + shift, r)


def to_original(ed, spans):
    s, e, r = ed
    shift = sum((pv[1] - pv[0]) - (po[1] - po[0]) for po, pv in spans if pv[1] <= s)
    return (s - shift, e - shift, r)


def build():
    cases = []
    for cid, origin, src, anns, perts, overrides in CASES:
        src = toks(src)
        anns = [[edit(*x) for x in a] for a in anns]
        perts = [[edit(*x) for x in p] for p in perts]
        sentences = [(src, anns)]
        for p in perts:
            spans = perturbed_spans(p)
            sentences.append((apply(src, p), [[to_variant(x, spans) for x in a] for a in anns]))
        hyps = []
        for k, (s, a) in enumerate(sentences):
            o = overrides.get(k)
            hyps.append(list(s) if o == "=" else toks(o) if o else apply(s, a[0]))
        cases.append(dict(id=cid, origin=origin, src=src, anns=anns, perts=perts,
                          sentences=sentences, hyps=hyps))
    return cases


def evaluate(case):
    counts = [best_counts(diff(s, h), a) for (s, a), h in zip(case["sentences"], case["hyps"])]
    fs = [prf(*c)[2] for c in counts]
    upper = max(range(len(fs)), key=lambda k: (fs[k], -k))
    lower = min(range(len(fs)), key=lambda k: (fs[k], k))
    e0 = diff(case["src"], case["hyps"][0])
    consistent = []
    for k, p in enumerate(case["perts"], start=1):
        spans = perturbed_spans(p)
        ei = diff(case["sentences"][k][0], case["hyps"][k])
        boundary = any(overlaps((x[0], x[1]), po) for x in e0 for po, _ in spans) or \
            any(overlaps((x[0], x[1]), pv) for x in ei for _, pv in spans)
        consistent.append(not boundary and sorted(to_original(x, spans) for x in ei) == sorted(e0))
    return dict(counts=counts, upper=upper, lower=lower, consistent=consistent)


def score(c):
    p, r, f = prf(*c)
    return {"tp": c[0], "fp": c[1], "fn": c[2], "p": p, "r": r, "f": f}


def scope(name, cases, evals):
    def total(pick):
        return tuple(sum(x) for x in zip(*[ev["counts"][pick(ev)] for ev in evals]))
    o, u, l = total(lambda e: 0), total(lambda e: e["upper"]), total(lambda e: e["lower"])
    pairs = sum(len(e["consistent"]) for e in evals)
    good = sum(sum(e["consistent"]) for e in evals)
    full = sum(all(e["consistent"]) for e in evals)
    return {
        "scope": name, "cases": len(evals), "pairs": pairs,
        "original": score(o), "upper": score(u), "lower": score(l),
        "delta_f": abs(prf(*u)[2] - prf(*l)[2]),
        "crs": 100.0 * full / len(evals),
        "p_crs": 100.0 if pairs == 0 else 100.0 * good / pairs,
    }


def action(ed):
    s, e, r = ed
    return "insert" if s == e else "delete" if not r else "substitute"


def gap(a, b):
    if a[1] <= b[0]:
        return b[0] - a[1]
    if b[1] <= a[0]:
        return a[0] - b[1]
    return 0


def band(n):
    return "low" if n < 10 else "medium" if n <= 50 else "high"


def bin_label(b):
    return f"{b[0]}+" if b[1] is None else f"{b[0]}-{b[1]}"


def group(rows, order):
    out = []
    for g in order:
        hits = [ok for key, ok in rows if key == g]
        if hits:
            out.append({"group": g, "pairs": len(hits), "consistent": sum(hits),
                        "p_crs": 100.0 * sum(hits) / len(hits)})
    return out


def analysis(cases, evals):
    recs = []
    for case, ev in zip(cases, evals):
        errs = case["anns"][0]
        for k, p in enumerate(case["perts"]):
            for ed in p:
                dist = gap(ed[:2], errs[0][:2]) if len(p) == 1 and len(errs) == 1 else None
                recs.append(dict(action=action(ed), dist=dist,
                                 word=ed[2][0] if ed[2] else None, ok=ev["consistent"][k]))
    acts = ["substitute", "insert", "delete"]
    labels = [bin_label(b) for b in BINS]

    def which_bin(d):
        for b in BINS:
            if d >= b[0] and (b[1] is None or d <= b[1]):
                return bin_label(b)

    n_edits = len(recs)
    variants = sum(len(c["perts"]) for c in cases)
    return {
        "records": n_edits,
        "by_action": group([(r["action"], r["ok"]) for r in recs], acts),
        "distance_bins": labels,
        "by_distance": group([(which_bin(r["dist"]), r["ok"]) for r in recs if r["dist"] is not None], labels),
        "by_frequency": group([(band(FREQ.get(r["word"], 0)), r["ok"]) for r in recs
                               if r["action"] == "substitute"], ["low", "medium", "high"]),
        "annotation": {
            "cases": len(cases), "variants": variants, "edits": n_edits,
            "avg_edits_per_variant": n_edits / variants,
            "action_distribution": [
                {"action": a, "edits": sum(r["action"] == a for r in recs),
                 "share": 100.0 * sum(r["action"] == a for r in recs) / n_edits} for a in acts],
        },
    }


def canonical(v):
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v + 0.0:.4f}".replace("-0.0000", "0.0000")
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, list):
        return "[" + ",".join(canonical(x) for x in v) + "]"
    return "{" + ",".join(json.dumps(k) + ":" + canonical(v[k]) for k in sorted(v)) + "}"


def edit_json(ed):
    return {"start": ed[0], "end": ed[1], "replacement": " ".join(ed[2])}


def main():
    cases = build()
    with open(os.path.join(HERE, "cases.jsonl"), "w") as f:
        for c in cases:
            rec = {
                "case_id": c["id"], "origin": c["origin"],
                "original": {"id": c["id"] + "-0", "source": " ".join(c["src"]),
                             "references": [[edit_json(x) for x in a] for a in c["anns"]]},
                "variants": [{"id": f'{c["id"]}-{k}', "source": " ".join(c["sentences"][k][0]),
                              "perturbations": [edit_json(x) for x in p]}
                             for k, p in enumerate(c["perts"], start=1)],
            }
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")
    with open(os.path.join(HERE, "hyps.tsv"), "w") as f:
        for c in cases:
            for k, h in enumerate(c["hyps"]):
                f.write(f'{c["id"]}\t{k}\t{" ".join(h)}\n')
    with open(os.path.join(HERE, "freq.tsv"), "w") as f:
        for w in sorted(FREQ):
            f.write(f"{w}\t{FREQ[w]}\n")

    evals = [evaluate(c) for c in cases]
    scopes = [scope("total", cases, evals)]
    for origin in ["conll14", "bea19", "tem8", "other"]:
        sub = [(c, e) for c, e in zip(cases, evals) if c["origin"] == origin]
        if sub:
            scopes.append(scope(origin, [c for c, _ in sub], [e for _, e in sub]))
    report = {"beta": BETA, "consistency": "vs_original", "scopes": scopes}
    with open(os.path.join(HERE, "expected_evaluate.json"), "w") as f:
        f.write(canonical(report) + "\n")
    with open(os.path.join(HERE, "expected_analyze.json"), "w") as f:
        f.write(canonical(analysis(cases, evals)) + "\n")


if __name__ == "__main__":
    main()
