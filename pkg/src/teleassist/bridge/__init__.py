"""Wire protocol and TCP server exposing a live simulation to a remote console."""
