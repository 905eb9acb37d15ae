#!/usr/bin/env python3
"""Generate the deterministic test fixtures under fixtures/.

Usage: make_fixtures.py [--resources DIR] [--out DIR]

Needs a CMU pronouncing dictionary (cmudict.dict) and a WordNet 3.0
database directory (wordnet-3.0/) under --resources. Output is identical
for identical inputs.
"""

import argparse
import hashlib
import json
import math
import random
import re
import shutil
from pathlib import Path

FUNCTION_WORDS = [
    "the", "a", "of", "and", "to", "in", "is", "was", "that", "for", "it", "with",
    "as", "on", "by", "this", "be", "are", "from", "at", "or", "which", "not", "we",
    "they", "his", "her", "all", "were", "their", "has", "have", "had", "but",
]
DET = {"the", "a", "this", "all", "his", "her", "their"}
PREP = {"of", "to", "in", "for", "with", "as", "on", "by", "from", "at"}
CONJ = {"and", "or", "but", "that", "which"}
PRON = {"it", "we", "they"}
AUX = {"is", "was", "be", "are", "were", "has", "have", "had"}
CORPORA = ["bible", "biomed", "europarl"]
TOKEN_RE = re.compile(r"[^\W_]+(?:['\-’][^\W_]+)*")


def tokenize(text):
    return [t.replace("’", "'").lower() for t in TOKEN_RE.findall(text)]


def read_cmudict(path):
    pron = {}
    for line in path.read_text(encoding="latin-1").splitlines():
        if not line or line.startswith(";;;"):
            continue
        word, rest = line.split(" ", 1)
        if "(" in word:
            continue
        pron.setdefault(word.lower(), line)
    return pron


def wordnet_lemmas(wn):
    pos_of = {}
    for name, tag in [("noun", "NN"), ("verb", "VB"), ("adj", "JJ")]:
        for line in (wn / f"index.{name}").read_text().splitlines():
            if line.startswith(" "):
                continue
            lemma = line.split(" ", 1)[0]
            if lemma.isalpha() and lemma.islower():
                pos_of.setdefault(lemma, tag)
    return pos_of


def choose_vocab(rng, pron, pos_of, n):
    candidates = sorted(w for w in pos_of if w in pron and 3 <= len(w) <= 12 and w not in FUNCTION_WORDS)
    rng.shuffle(candidates)
    vocab = candidates[:n]
    # a few common words keep the frequency distribution realistic
    for w in ["water", "light", "people", "house", "small", "system", "power", "work"]:
        if w in pos_of and w in pron and w not in vocab:
            vocab[-1 - len(w)] = w
    return vocab


def make_sentence(rng, content, weights, pos_of):
    n_content = rng.randint(3, 7)
    words = rng.choices(content, weights=weights, k=n_content)
    out = []
    for i, w in enumerate(words):
        if pos_of[w] == "NN":
            out.append(rng.choice(sorted(DET)))
        elif pos_of[w] == "VB" and rng.random() < 0.5:
            out.append(rng.choice(sorted(AUX)))
        out.append(w)
        if i < n_content - 1 and rng.random() < 0.35:
            out.append(rng.choice(sorted(PREP | CONJ)))
    if rng.random() < 0.2:
        out.insert(0, rng.choice(sorted(PRON)))
    text = " ".join(out)
    if rng.random() < 0.05:
        text = text.replace(" and ", " and well-known ", 1)
    if rng.random() < 0.05:
        text += " , don't they"
    text = text[0].upper() + text[1:]
    return (text + ".").replace(" , ", ", ")


def tag(word, pos_of):
    w = word.lower()
    if w in DET:
        return "DT"
    if w in PREP:
        return "IN"
    if w in CONJ:
        return "CC"
    if w in PRON:
        return "PRP"
    if w in AUX:
        return "VBZ"
    if w in ("well-known",):
        return "JJ"
    if w in ("don't",):
        return "VBP"
    return {"NN": "NN", "VB": "VB", "JJ": "JJ"}.get(pos_of.get(w, "NN"), "NN")


def bracket(sentence, pos_of):
    words = re.findall(r"[^\s,.]+|[,.]", sentence)
    chunks, cur = [], []
    for w in words:
        if w in ",.":
            continue
        cur.append(w)
        if tag(w, pos_of).startswith(("NN", "VB")) and len(cur) >= 2:
            chunks.append(cur)
            cur = []
    if cur:
        chunks.append(cur)
    parts = []
    for c in chunks:
        label = "VP" if any(tag(w, pos_of).startswith("VB") for w in c) else "NP"
        leaves = " ".join(f"({tag(w, pos_of)} {w})" for w in c)
        parts.append(f"({label} {leaves})")
    inner = " ".join(parts)
    if len(parts) > 2:
        inner = f"{parts[0]} (VP {' '.join(parts[1:])})"
    return f"(ROOT (S {inner} (. .)))"


def label_for(word, rank, vocab_size, rng):
    freq_part = math.log(rank + 2) / math.log(vocab_size + 2)
    value = 0.85 * freq_part - 0.05 + 0.03 * (len(word) - 6) + rng.gauss(0, 0.04)
    return round(min(max(value, 0.0), 1.0), 4)


def excerpt_wordnet(wn, words, out):
    out.mkdir(parents=True, exist_ok=True)
    names = ["noun", "verb", "adj", "adv"]
    keep = {n: set() for n in names}
    sym_to_file = {"n": "noun", "v": "verb", "a": "adj", "s": "adj", "r": "adv"}
    for n in names:
        lines = []
        for line in (wn / f"index.{n}").read_text().splitlines():
            if line.startswith(" "):
                continue
            f = line.split()
            if f[0] in words:
                lines.append(line)
                k = int(f[2])
                keep[n].update(f[-k:])
        (out / f"index.{n}").write_text("\n".join(lines) + "\n")
    data = {n: {} for n in names}
    for n in names:
        for line in (wn / f"data.{n}").read_text(encoding="latin-1").splitlines():
            if line[:1].isdigit():
                data[n][line[:8]] = line
    # direct hypernyms and hyponyms of kept synsets, without their own links
    extra = {n: set() for n in names}
    for n in names:
        for off in keep[n]:
            f = data[n][off].split(" | ")[0].split()
            w_cnt = int(f[3], 16)
            p = 4 + 2 * w_cnt
            p_cnt = int(f[p])
            for i in range(p_cnt):
                sym, target, pos = f[p + 1 + 4 * i], f[p + 2 + 4 * i], f[p + 3 + 4 * i]
                if sym.rstrip("i") in ("@", "~"):
                    extra[sym_to_file[pos]].add(target)
    for n in names:
        offs = sorted(keep[n] | extra[n])
        (out / f"data.{n}").write_text("\n".join(data[n][o] for o in offs) + "\n")
        exc = wn / f"{n}.exc"
        if exc.exists():
            rows = [l for l in exc.read_text().splitlines() if l.split(" ")[-1] in words]
            (out / f"{n}.exc").write_text("\n".join(rows) + ("\n" if rows else ""))


def attention_sample(rng, sid, words, freq, layers, heads, proportional):
    pieces, align = ["[CLS]"], [-1]
    for i, w in enumerate(words):
        if len(w) > 7 and not proportional:
            pieces += [w[:4], "##" + w[4:]]
            align += [i, i]
        else:
            pieces.append(w)
            align.append(i)
    pieces.append("[SEP]")
    align.append(-1)
    t = len(pieces)
    att = []
    for _ in range(layers):
        layer = []
        for h in range(heads):
            rows = []
            for _ in range(t):
                if proportional:
                    # every word gets weight proportional to its log frequency
                    raw = [0.0 if a < 0 else math.log1p(freq[words[a]]) for a in align]
                    scale = (1 + h) * rng.uniform(0.5, 2.0)
                    raw = [r * scale for r in raw]
                else:
                    raw = [rng.random() + 0.01 for _ in range(t)]
                s = sum(raw)
                rows.append([r / s for r in raw])
            layer.append(rows)
        att.append(layer)
    return {"id": sid, "bpe_tokens": pieces, "word_alignment": align, "attention": att, "words": words}


def main():
    ap = argparse.ArgumentParser()
    root = Path(__file__).resolve().parent.parent
    ap.add_argument("--resources", type=Path, default=Path("/root/resources"))
    ap.add_argument("--out", type=Path, default=root / "fixtures")
    args = ap.parse_args()
    rng = random.Random(20210805)
    out = args.out
    if out.exists():
        shutil.rmtree(out)
    for d in ["data", "corpora", "lexicons", "precomputed", "parses", "neural", "attention", "oracle"]:
        (out / d).mkdir(parents=True)

    pron = read_cmudict(args.resources / "cmudict.dict")
    pos_of = wordnet_lemmas(args.resources / "wordnet-3.0")
    vocab = choose_vocab(rng, pron, pos_of, 700)
    weights = [1.0 / (i + 1) ** 1.05 for i in range(len(vocab))]
    rank = {w: i for i, w in enumerate(vocab)}

    lines = [make_sentence(rng, vocab, weights, pos_of) for _ in range(10000)]
    (out / "corpora" / "corpus.txt").write_text("\n".join(lines) + "\n")

    def dataset(n, start, prefix):
        rows = []
        for i in range(n):
            sent = lines[start + i]
            content = [w for w in tokenize(sent) if w in rank]
            target = rng.choice(content)
            rows.append((f"{prefix}{i:04d}", CORPORA[i % 3], sent, target, label_for(target, rank[target], len(vocab), rng)))
        return rows

    train = dataset(200, 0, "tr")
    test = dataset(60, 500, "te")
    mwe = []
    for i in range(30):
        j = 800 + i
        while True:
            toks = tokenize(lines[j])
            pairs = [(a, b) for a, b in zip(toks, toks[1:]) if a in rank and b in rank]
            if pairs:
                break
            j += 50
        head, tail = rng.choice(pairs)
        c = min(1.0, round(0.5 * (label_for(head, rank[head], len(vocab), rng) + label_for(tail, rank[tail], len(vocab), rng)) + 0.05, 4))
        mwe.append((f"mw{i:04d}", CORPORA[i % 3], lines[j], f"{head} {tail}", c))
    header = "id\tcorpus\tsentence\ttoken\tcomplexity\n"
    for name, rows in [("train", train), ("test", test), ("mwe_test", mwe)]:
        (out / "data" / f"{name}.tsv").write_text(header + "".join("\t".join(map(str, r)) + "\n" for r in rows))

    words = set(vocab) | set(FUNCTION_WORDS)
    dict_lines = [pron[w] for w in sorted(words) if w in pron]
    (out / "lexicons" / "cmudict.dict").write_text("\n".join(dict_lines) + "\n")
    shutil.copy(args.resources / "LICENSE", out / "lexicons" / "LICENSE")
    excerpt_wordnet(args.resources / "wordnet-3.0", words, out / "lexicons" / "wordnet")

    counts = {}
    for line in lines:
        for t in tokenize(line):
            counts[t] = counts.get(t, 0) + 1
    ordered = sorted(counts)
    sub = ["Word\tFREQcount\tCDcount\tFREQlow\tCDlow\tSUBTLWF\tSUBTLCD"]
    for w in ordered:
        if rng.random() < 0.85:
            f = counts[w] * 37 + rng.randint(0, 20)
            cd = max(1, f // 3)
            sub.append(f"{w.capitalize() if rng.random() < 0.1 else w}\t{f}\t{cd}\t{f - f // 10}\t{cd - cd // 10}\t{f / 51.0:.2f}\t{cd / 84.0:.2f}")
    (out / "lexicons" / "subtlex.tsv").write_text("\n".join(sub) + "\n")
    bnc = ["word\tcount"] + [f"{w}\t{counts[w] * 91 + rng.randint(0, 50)}" for w in ordered if rng.random() < 0.8]
    (out / "lexicons" / "bnc.tsv").write_text("\n".join(bnc) + "\n")

    ngram = {}
    for _, _, sent, _, _ in train + test + mwe:
        toks = tokenize(sent)
        for order in (1, 2, 3):
            for k in range(len(toks) - order + 1):
                g = " ".join(toks[k:k + order])
                ngram[g] = ngram.get(g, 0) + 1
    google = [f"{g}\t{c * 100003 + len(g) * 17}" for g, c in sorted(ngram.items()) if rng.random() < 0.9]
    (out / "lexicons" / "google_local.tsv").write_text("\n".join(google) + "\n")

    emb = []
    for w in sorted(words):
        if rng.random() < 0.95:
            emb.append(w + " " + " ".join(f"{rng.gauss(0, 0.5):.5f}" for _ in range(8)))
    (out / "lexicons" / "embeddings.txt").write_text("\n".join(emb) + "\n")
    (out / "lexicons" / "familiar.txt").write_text("\n".join(sorted(FUNCTION_WORDS + vocab[:120])) + "\n")

    all_rows = train + test + mwe
    pre = [f"{r[0]}\t" + " ".join(f"{rng.gauss(0, 1):.5f}" for _ in range(4)) for r in all_rows]
    (out / "precomputed" / "sentence_vectors.tsv").write_text("\n".join(pre) + "\n")
    ppl = ["id\tppl\tppl_aspect_only"] + [
        f"{r[0]}\t{rng.uniform(20, 400):.4f}\t{rng.uniform(5, 2000):.4f}" for r in all_rows
    ]
    (out / "precomputed" / "perplexity.tsv").write_text("\n".join(ppl) + "\n")

    parses = sorted(
        f"{hashlib.sha256(s.encode()).hexdigest()}\t{bracket(s, pos_of)}" for s in {r[2] for r in all_rows}
    )
    (out / "parses" / "parses.tsv").write_text("\n".join(parses) + "\n")

    preds = ["id\tprediction"] + [f"{r[0]}\t{min(1.0, max(0.0, r[4] + rng.gauss(0, 0.08))):.6f}" for r in test]
    (out / "neural" / "predictions.tsv").write_text("\n".join(preds) + "\n")
    preds = ["id\tprediction"] + [f"{r[0]}\t{min(1.0, max(0.0, r[4] + rng.gauss(0, 0.08))):.6f}" for r in mwe]
    (out / "neural" / "mwe_predictions.tsv").write_text("\n".join(preds) + "\n")
    oracle = ["id\tprediction"] + [f"{r[0]}\t{r[4]}" for r in test]
    (out / "neural" / "oracle_predictions.tsv").write_text("\n".join(oracle) + "\n")

    samples = [attention_sample(rng, r[0], tokenize(r[2]), counts, 2, 3, False) for r in test[:20]]
    dump = {"model": {"name": "fixture-encoder", "num_layers": 2, "num_heads": 3}, "samples": samples}
    (out / "attention" / "dump.json").write_text(json.dumps(dump, separators=(",", ":")) + "\n")
    samples = [attention_sample(rng, r[0], tokenize(r[2]), counts, 2, 3, True) for r in test[:30]]
    dump = {"model": {"name": "proportional", "num_layers": 2, "num_heads": 3}, "samples": samples}
    (out / "attention" / "proportional.json").write_text(json.dumps(dump, separators=(",", ":")) + "\n")

    # brute-force n-gram counts and line document frequencies
    tf = [dict(), dict(), dict()]
    df = [dict(), dict(), dict()]
    for line in lines:
        toks = tokenize(line)
        for order in (1, 2, 3):
            seen = set()
            for k in range(len(toks) - order + 1):
                g = " ".join(toks[k:k + order])
                tf[order - 1][g] = tf[order - 1].get(g, 0) + 1
                seen.add(g)
            for g in seen:
                df[order - 1][g] = df[order - 1].get(g, 0) + 1
    rows = ["order\tngram\tcount\tdf"]
    for order in (1, 2, 3):
        rows += [f"{order}\t{g}\t{c}\t{df[order - 1][g]}" for g, c in sorted(tf[order - 1].items())]
    (out / "oracle" / "ngram_counts.tsv").write_text("\n".join(rows) + "\n")

    (out / "config.toml").write_text(CONFIG)


CONFIG = """seed = 7

[data]
train = "data/train.tsv"
test = "data/test.tsv"
mwe_test = "data/mwe_test.tsv"

[corpus]
files = ["corpora/corpus.txt"]
doc_unit = "line"
bpe_merges = 300

[lexicons]
cmudict = "lexicons/cmudict.dict"
wordnet_dir = "lexicons/wordnet"
subtlex = "lexicons/subtlex.tsv"
bnc = "lexicons/bnc.tsv"
google_local = "lexicons/google_local.tsv"
word_embeddings = "lexicons/embeddings.txt"
familiar_words = "lexicons/familiar.txt"
precomputed_embeddings = [{ path = "precomputed/sentence_vectors.tsv", prefix = "sentvec" }]
external_features = ["precomputed/perplexity.tsv"]

[parser]
precomputed_path = "parses/parses.tsv"
offline = true

[model]
kind = "gbrt"
n_estimators = 60

[reduced]
class_1 = 0.3
class_2 = 0.1
class_3 = 0.0

[cv]
folds = 5

[ensemble]
neural_predictions = "neural/predictions.tsv"
neural_mwe_predictions = "neural/mwe_predictions.tsv"

[attention]
dumps = ["attention/dump.json"]
frequency = "index"
n_samples = 20
"""

if __name__ == "__main__":
    main()
