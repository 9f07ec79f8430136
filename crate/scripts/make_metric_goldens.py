"""Regenerate crates/core/tests/data/metric_goldens.json.

BLEU values come from sacrebleu (13a tokenization, exp smoothing with
effective order for sentences, no smoothing for the corpus). chrF values
follow the documented per-order F-score mean, computed here directly.
"""

import json
from collections import Counter
from pathlib import Path

from sacrebleu.metrics.bleu import BLEU

PAIRS = [
    ("The cat sat on the mat.", "The cat sat on the mat."),
    ("Hello, world!", "Hello world!"),
    ("the quick brown fox jumps over the lazy dog", "a quick brown dog jumps over the lazy fox"),
    ("It costs $1,000.50 today.", "It costs 1,000.50 dollars today."),
    ("\"Quoted\" text (with brackets) and -- dashes", "Quoted text with brackets and dashes"),
    ("Die Katze saß auf der Matte.", "Die Katze sitzt auf der Matte."),
    ("Кошка сидела на коврике.", "Кошка сидит на коврике."),
    ("a b c d e", "a b c d f"),
    ("a a a a", "a"),
    ("one two three", "one two four five six seven"),
    ("He said: 'no way!'", "He said 'no way'."),
    ("Tom &amp; Jerry &quot;forever&quot;", "Tom & Jerry \"forever\""),
    ("version 2.0-beta was released on 2021-07-01", "version 2.0 beta was released on 1 July 2021"),
    ("x", "x y z"),
    ("New   York    City", "New York City"),
    ("e-mail me at test@example.com, please", "please e-mail me at test@example.com"),
    ("What?! Really...", "What? Really?"),
    ("We meet at 10:30 a.m. in room #4.", "We meet at 10:30 in room 4."),
    ("the the the the the the", "the cat is on the mat"),
    ("I can't believe it's not butter", "I cannot believe it is not butter"),
    ("A long sentence with many words that goes on and on without much point at all",
     "A long sentence with many words that continues on and on with little point"),
    ("100% sure; 50/50 chance", "100 % sure ; 50 / 50 chance"),
    ("Mr. Smith went to Washington.", "Mr Smith went to Washington"),
    ("<b>bold</b> move", "bold move"),
    ("first, second, third, and fourth", "first second third fourth"),
    ("Ça va très bien, merci.", "Ça va bien, merci beaucoup."),
    ("日本語 の テキスト", "日本語 テキスト"),
    ("data-driven machine translation", "data driven machine translation"),
    ("The results (Section 4) show gains.", "Results in Section 4 show gains."),
    ("3.14159 is pi", "pi is 3.14159"),
    ("left {brace} and [bracket]", "left brace and bracket"),
    ("yes", "yes"),
    ("no no no", "no"),
    ("translation quality estimation", "quality estimation for translation"),
    ("She sells sea shells by the sea shore.", "She sells seashells by the seashore."),
    ("A-B-C test", "A B C test"),
    ("tab\tseparated\twords", "tab separated words"),
    ("ending with comma,", "ending with comma"),
    ("Multiple!!! exclamation marks!!!", "Multiple exclamation marks!"),
    ("the model generates candidates and ranks them", "the model ranks candidates it generates"),
    ("abc def ghi jkl mno", "abc def ghi jkl mno pqr"),
    ("abc def ghi jkl mno pqr stu", "abc def ghi jkl mno"),
    ("Zürich, Genève & Lugano", "Zürich, Geneva and Lugano"),
    ("won't go", "will not go"),
    ("The U.S.A. is big.", "The USA is big."),
    ("a b a b a b", "b a b a b a"),
    ("Numbers: 1, 2, 3.", "Numbers 1 2 3"),
    ("under_score and back\\slash", "under score and backslash"),
    ("Email: test@example.org", "email test@example.org"),
    ("MBR decoding with COMET works well.", "MBR decoding with BLEU works well too."),
]

BETA = 2.0
CHAR_ORDER = 6


def char_stats(hyp, ref):
    h = [c for c in hyp if not c.isspace()]
    r = [c for c in ref if not c.isspace()]
    stats = []
    for n in range(1, CHAR_ORDER + 1):
        hc = Counter(tuple(h[i:i + n]) for i in range(len(h) - n + 1))
        rc = Counter(tuple(r[i:i + n]) for i in range(len(r) - n + 1))
        m = sum(min(c, rc[g]) for g, c in hc.items())
        stats.append((sum(hc.values()), sum(rc.values()), m))
    return stats


def chrf(stats):
    f_sum, orders = 0.0, 0
    for h, r, m in stats:
        if h == 0 or r == 0:
            continue
        orders += 1
        if m == 0:
            continue
        p, rec = m / h, m / r
        f_sum += (1 + BETA**2) * p * rec / (BETA**2 * p + rec)
    return 100.0 * f_sum / orders if orders else 0.0


def main():
    assert len(PAIRS) == 50
    sent = BLEU(smooth_method="exp", effective_order=True)
    corp = BLEU(smooth_method="none")
    tok = sent.tokenizer
    rows, corpus_chr = [], [[0, 0, 0] for _ in range(CHAR_ORDER)]
    for hyp, ref in PAIRS:
        stats = char_stats(hyp, ref)
        for acc, s in zip(corpus_chr, stats):
            for i in range(3):
                acc[i] += s[i]
        rows.append({
            "hyp": hyp,
            "ref": ref,
            "hyp_tokens": tok(hyp).split(),
            "sentence_bleu": sent.sentence_score(hyp, [ref]).score,
            "sentence_chrf": chrf(stats),
        })
    hyps = [h for h, _ in PAIRS]
    refs = [r for _, r in PAIRS]
    out = {
        "pairs": rows,
        "corpus_bleu": corp.corpus_score(hyps, [refs]).score,
        "corpus_chrf": chrf(corpus_chr),
    }
    path = Path(__file__).resolve().parent.parent / "crates/core/tests/data/metric_goldens.json"
    path.write_text(json.dumps(out, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
