"""
SQLite run ledger.
"""
