"""finprog: FinQA solution programs, pretraining corpora built from them, and a reference trainer."""

__version__ = "0.1.0"
