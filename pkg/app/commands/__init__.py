"""
Command-line blueprints: simulate, encode, validate, poisson, escape, scaling, birkhoff.
"""
