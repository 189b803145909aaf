"""semql: embedding-augmented relational queries.

Textifies relational tables into token sentences, trains word
embeddings over them, and exposes the vectors to a small SQL dialect
through semantic UDFs, with optional approximate-neighbor indexes.
"""

__version__ = "0.1.0"
