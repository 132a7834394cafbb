"""The ``dr-lab`` console script

``dr-lab <action> ...`` is a shortcut for ``datalad drlab <action> ...``.
"""
import sys
from typing import (
    List,
    Optional,
)

from datalad.cli.main import main as datalad_main


def main(args: Optional[List[str]] = None):
    args = sys.argv[1:] if args is None else list(args)
    return datalad_main(["datalad", "drlab"] + args)


if __name__ == "__main__":
    main()
