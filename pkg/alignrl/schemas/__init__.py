"""
Typed specs, configs, reports and value types.
"""
