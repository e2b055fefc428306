"""surface-sync: authoritative shared-map server with AR object replication.

Subpackages map onto the system's entities: `geo` (coordinate math),
`query` (dialect translation), `datastore` (asset records + evaluation),
`protocol` (wire envelopes), `tuio` (multitouch input), `server`
(authoritative session), `sim` (headless clients + consistency checker).
"""

__version__ = "0.1.0"
