"""satd-forge: mine Java if-statement/comment pairs, detect self-admitted
technical debt in code or comments, and generate debt-admitting comments."""

__version__ = "0.1.0"
