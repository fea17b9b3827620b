"""Write the two-class synthetic corpus (chain vs. star event motifs) as labeled TSV."""
import argparse

from segcl.synthetic import write_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("output", help="destination .tsv")
    ap.add_argument("--docs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    path = write_corpus(args.output, args.docs, args.seed)
    print(f"wrote {args.docs} documents to {path}")


if __name__ == "__main__":
    main()
