"""Browse the bundled clause catalog and draw a few clause groups per complexity."""

from __future__ import annotations

from collections import Counter

import numpy as np

from autogeo.catalog import reference_catalog
from autogeo.selector import Complexity, SelectionRules, select_group

catalog = reference_catalog()
print(f"{len(catalog.clauses)} clauses by tier: {catalog.counts()}")
for clause in catalog:
    print(f"  {clause.id:<20} {clause.difficulty.name.lower():<7} {clause.category}")

rng = np.random.default_rng(0)
rules = SelectionRules()
for complexity in Complexity:
    print(f"\n{complexity.value} groups:")
    for _ in range(3):
        group = select_group(complexity, catalog, rules, rng)
        print("   " + "; ".join(group.texts()))

# Group sizes for Hard are uniform over 3..5
sizes = Counter(len(select_group(Complexity.HARD, catalog, rules, rng).instances) for _ in range(3000))
print("\nhard group sizes:", dict(sorted(sizes.items())))
