"""Utils package for the three-cat decoherence engine."""
