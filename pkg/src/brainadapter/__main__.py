"""``python -m brainadapter``; caps BLAS threads from ``--threads`` before numpy loads."""

import os
import sys


def _thread_cap(argv) -> str:
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            return argv[i + 1]
        if arg.startswith("--threads="):
            return arg.split("=", 1)[1]
    return "1"


def run() -> int:
    cap = _thread_cap(sys.argv[1:])
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)
    from .cli import main

    return main()


if __name__ == "__main__":
    sys.exit(run())
