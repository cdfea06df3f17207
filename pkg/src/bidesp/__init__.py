"""Starting-material-constrained synthesis planning over abstract reaction networks."""

__version__ = "0.1.0"
