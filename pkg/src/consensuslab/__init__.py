"""consensuslab: noisy consensus over switching graphs, with certificates.

Core package layout:

* ``graph``            digraphs, switching signals, joint connectivity
* ``dynamics``         weight/disturbance families and the integrator
* ``bounds``           robustness certificates and bound verification
* ``event_triggered``  the distributed trigger protocol simulator
* ``scenarios``        canonical and randomized scenario constructors
* ``pipeline``         config-driven experiment runner
* ``service``          FastAPI wrapper; the CLI is a thin client of it
"""

__version__ = "0.1.0"
