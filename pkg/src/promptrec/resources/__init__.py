"""Bundled plain-text resources (negative-cue lexicon)."""
