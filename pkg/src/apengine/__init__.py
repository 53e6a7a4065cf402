"""Self-hostable agentic publication engine.

A research submission becomes an interactive knowledge system: a versioned
store of chunks and claim triples, exact vector retrieval, automated
evidence synthesis, and citation-grounded question answering served over
HTTP and a CLI.
"""

__version__ = "0.1.0"
