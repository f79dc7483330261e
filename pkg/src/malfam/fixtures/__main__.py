import argparse

from malfam.fixtures import FIXTURE_DIR, FIXTURE_SEED, build_fixture

if __name__ == "__main__":
    parser = argparse.ArgumentParser(prog="python -m malfam.fixtures",
                                     description="Write the synthetic corpus, gold labels and replay cache.")
    parser.add_argument("out_dir", nargs="?", default=str(FIXTURE_DIR))
    parser.add_argument("--seed", type=int, default=FIXTURE_SEED)
    parser.add_argument("--prompts", default="P0", help="comma-separated prompt ids to cache, e.g. P1,P2")
    args = parser.parse_args()
    prompt_ids = tuple(p.strip() for p in args.prompts.split(",") if p.strip())
    for name, path in build_fixture(args.out_dir, args.seed, prompt_ids).items():
        print(f"{name}: {path}")
