"""Tutoring stack built around a fixed, machine-checkable reply template.

The package splits into small layers: ``protocol`` (reply taxonomy and the
subproblem state machine), ``template`` (tolerant JSON parsing and canonical
serialization of model replies), ``retrieval`` (BM25 passage search over
course text), ``backend`` (chat-completion providers, scripted and live),
``datagen`` (synthetic dataset pipelines), ``engine`` (live tutoring
sessions), ``evalkit`` (expert rating protocol), ``service`` (HTTP API)
and ``cli``.
"""

__version__ = "0.1.0"
