#!/usr/bin/env python3
"""
levyflow launcher
Runs the command-line interface without installing the package, e.g.

    python run.py run --config experiments/uniqueness.toml --out results
    python run.py describe verify-flow
"""

import os
import sys

# Add project root to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from levyflow.main import main

if __name__ == "__main__":
    sys.exit(main())
