#!/usr/bin/env python3
import importlib.util
import os
import sys

if __name__ == "__main__":
    self_name: str = "fcn_texton_forest"
    self_spec = importlib.util.find_spec(self_name)
    if self_spec is None:
        parent_folder: str = os.path.dirname(
            os.path.dirname(os.path.realpath(__file__))
        )
        expected_folder: str = f"{parent_folder}{os.path.sep}"
        if os.path.isdir(expected_folder):
            sys.path.append(expected_folder)

    from fcn_texton_forest.lib.cli import run_cli

    uvloop_spec = importlib.util.find_spec("uvloop")
    if uvloop_spec:
        import uvloop

        uvloop.install()

    sys.exit(run_cli(sys.argv[1:]))
