"""Tests for RAG system."""
