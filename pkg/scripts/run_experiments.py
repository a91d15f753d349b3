"""
Run every experiment config under experiments/ through the command line.

Usage:
    python scripts/run_experiments.py [--only escape_symmetric] [--out results]
"""
import argparse
import glob
import json
import os
import subprocess
import sys
import time

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))


class Colors:
    """ANSI color codes for terminal output."""
    GREEN = '\033[92m'
    RED = '\033[91m'
    BLUE = '\033[94m'
    END = '\033[0m'


def print_status(message, ok=None):
    if ok is None:
        print(f"{Colors.BLUE}ℹ{Colors.END} {message}")
    elif ok:
        print(f"{Colors.GREEN}✓{Colors.END} {message}")
    else:
        print(f"{Colors.RED}✗{Colors.END} {message}")


def run_experiment(path, out_root):
    """Run one config; returns (name, exit code, seconds)."""
    name = os.path.splitext(os.path.basename(path))[0]
    with open(path, 'r', encoding='utf-8') as f:
        command = json.load(f).get('command')
    if not command:
        print_status(f"{name}: no 'command' key, skipped", False)
        return name, 2, 0.0

    started = time.time()
    result = subprocess.run(
        [sys.executable, os.path.join(ROOT, 'run.py'), command,
         '--config', path, '--out', os.path.join(out_root, name)],
        cwd=ROOT, capture_output=True, text=True
    )
    elapsed = time.time() - started
    print_status(f"{name} ({command}) exit={result.returncode} in {elapsed:.1f}s", result.returncode == 0)
    if result.returncode != 0:
        print(result.stderr.strip())
    return name, result.returncode, elapsed


def main():
    parser = argparse.ArgumentParser(description='Run the experiment configs')
    parser.add_argument('--only', action='append', default=[], help='Config name to run (repeatable)')
    parser.add_argument('--out', default=os.path.join(ROOT, 'results'), help='Output root')
    args = parser.parse_args()

    paths = sorted(glob.glob(os.path.join(ROOT, 'experiments', '*.json')))
    if args.only:
        paths = [p for p in paths if os.path.splitext(os.path.basename(p))[0] in args.only]
    if not paths:
        print_status("No experiment configs found", False)
        return 1

    results = [run_experiment(p, args.out) for p in paths]
    failed = [name for name, code, _ in results if code != 0]

    print("\n" + "=" * 60)
    print_status(f"{len(results) - len(failed)}/{len(results)} experiments succeeded", not failed)
    return 1 if failed else 0


if __name__ == '__main__':
    sys.exit(main())
