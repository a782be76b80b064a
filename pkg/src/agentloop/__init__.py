"""agentloop: an always-on see-and-act voice agent loop, offline-testable.

Media capture flows into a live bidirectional session; the (mock) model
answers with speech, transcripts and tool calls; tool calls route over HTTP
to a local skill gateway; results come back as spoken confirmations. Memory
and interaction analytics ride along.
"""

__version__ = "0.1.0"
