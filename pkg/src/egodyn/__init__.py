"""Ego-network dynamics from call-detail records.

Social-signature persistence (Jensen-Shannon self/reference distances),
alter turnover (Jaccard), rank transition matrices with the stability
metric ``C``, trait-subgroup statistics, and a seeded synthetic generator.
"""

__version__ = "0.1.0"
