#!/usr/bin/env python3
"""Extract class metadata for `clone catalog --wordnet-meta` from WordNet 3.0.

Reads the `data.noun` database file and writes a JSON array of
{"wnid", "lemmas", "hypernym_lemmas", "definition"} objects. Hypernym lemmas
take the first lemma of each parent synset (regular and instance hypernyms).

    python3 tools/extract_wordnet_meta.py --data-noun /path/to/dict/data.noun \
        --classes classes.txt --out wordnet_meta.json
"""

import argparse
import json
import sys


def parse_data_noun(path):
    synsets = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("  "):  # license header
                continue
            body, _, gloss = line.rstrip("\n").partition(" | ")
            fields = body.split()
            offset = fields[0]
            w_cnt = int(fields[3], 16)
            pos = 4
            lemmas = []
            for _ in range(w_cnt):
                lemmas.append(fields[pos].replace("_", " "))
                pos += 2
            p_cnt = int(fields[pos])
            pos += 1
            parents = []
            for _ in range(p_cnt):
                symbol, target, target_pos = fields[pos], fields[pos + 1], fields[pos + 2]
                if symbol in ("@", "@i") and target_pos == "n":
                    parents.append(target)
                pos += 4
            definition = gloss.split('; "')[0].strip()
            synsets[offset] = {"lemmas": lemmas, "parents": parents, "definition": definition}
    return synsets


def read_class_list(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#")[0].strip()
            if line:
                out.append(line.split()[0])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-noun", required=True, help="WordNet 3.0 dict/data.noun")
    ap.add_argument("--classes", help="wnids to keep, one per line (default: all)")
    ap.add_argument("--out", default="-", help="output JSON path, '-' for stdout")
    args = ap.parse_args(argv)

    synsets = parse_data_noun(args.data_noun)
    wanted = read_class_list(args.classes) if args.classes else ["n" + k for k in sorted(synsets)]
    records = []
    for wnid in wanted:
        key = wnid[1:]
        if not wnid.startswith("n") or key not in synsets:
            print(f"error: {wnid} not found in {args.data_noun}", file=sys.stderr)
            return 1
        s = synsets[key]
        records.append({
            "wnid": wnid,
            "lemmas": s["lemmas"],
            "hypernym_lemmas": [synsets[p]["lemmas"][0] for p in s["parents"] if p in synsets],
            "definition": s["definition"],
        })
    text = json.dumps(records, indent=2, ensure_ascii=False) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
