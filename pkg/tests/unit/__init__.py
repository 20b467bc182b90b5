"""Unit tests for RAG system."""
