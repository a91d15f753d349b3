"""
Chaotic Walk Lab command-line entry point.

Usage:
    python run.py poisson --config experiments/poisson_srw_n10.json --out results/poisson_srw_n10
"""
import os

from flask.cli import FlaskGroup

from app import create_app


def _create_app():
    # Get configuration from environment
    return create_app(os.getenv('FLASK_ENV', 'development'))


cli = FlaskGroup(create_app=_create_app)


if __name__ == '__main__':
    cli()
