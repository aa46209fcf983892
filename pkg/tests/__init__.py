"""
Test suite for TWD Tools.

- unit/: unit tests per core module and the CLI
- fixtures/: golden vectors, published metric pairs and a tiny experiment config
- factories.py: scene builders shared by the unit tests

Run tests with:
    python tests/test_runner.py
    # or
    python -m pytest tests/unit/ -m "not slow"
"""
