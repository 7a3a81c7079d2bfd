"""Acousto-electric current-density reconstruction."""
