"""
Test suite for Broker Assistant application.
"""