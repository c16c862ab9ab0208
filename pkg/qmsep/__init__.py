# qmsep - entropy production and detailed balance for finite quantum Markov semigroups
__version__ = "1.0.0"
