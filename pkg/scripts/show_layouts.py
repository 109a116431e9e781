#!/usr/bin/env python3
"""Print the shipped GridWorld layouts (S start, G goal, # pit)."""

from cmdp_forge.envs import ascii_map, desk_grid, large_grid, tiny_grid

for name, cfg in (
    ("8x8 (18 pits, horizon 200)", large_grid()),
    ("5x5 desk preset (4 pits, horizon 50)", desk_grid()),
    ("3x3 fixture (1 pit)", tiny_grid()),
):
    print(f"{name}:")
    print(ascii_map(cfg))
    print()
