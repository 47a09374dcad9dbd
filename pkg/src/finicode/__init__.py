"""finicode: exact sampling for probabilistic cellular automata and the
stopping-time transport construction of finitary codings from i.i.d. fields.

The package splits into a geometry/randomness substrate (:mod:`.spacetime`,
:mod:`.randomness`), the automaton engine with coupling-from-the-past
(:mod:`.pca`, :mod:`.models`), stopping-rule machinery (:mod:`.stopping`), the
space-time transport engine (:mod:`.coding`), exact verification oracles
(:mod:`.oracle`) and a reporting CLI (:mod:`.cli`, :mod:`.report`).
"""

__version__ = "0.1.0"
