"""
Torch modules.
"""
