"""Clustering of gene time courses: simulation studies, six methods, evaluation and a benchmark CLI."""
from .core import (CrossSectionalMatrix, GeneSet, ParseError, Partition, SymmetricMatrix,
                   TimeCourseMatrix, TimeGrid, ValidationError)

__version__ = "0.1.0"

__all__ = ["CrossSectionalMatrix", "GeneSet", "ParseError", "Partition", "SymmetricMatrix",
           "TimeCourseMatrix", "TimeGrid", "ValidationError", "__version__"]
