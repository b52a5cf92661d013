"""
sasvfusion - spoofing-aware speaker verification fusion with gated CM scores
"""

__version__ = "0.1.0"
