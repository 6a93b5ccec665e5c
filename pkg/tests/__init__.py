"""
Unit tests for the A_p Weight Laboratory
Tests grids, supremum engines, the maximal operator, norm estimation and studies
"""
