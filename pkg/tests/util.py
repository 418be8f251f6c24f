"""Shared fixtures-by-hand for the unit tests."""

import numpy as np

from svdgcl.interactions import InteractionDataset


def tiny_dataset(num_users=8, num_items=10):
    """Ring-structured dataset small enough for loop oracles.

    Each user trains on five consecutive items, tests on the sixth and
    validates on the seventh, so every split is warm and every user has
    sampleable negatives.
    """
    train, val, test = [], [], []
    for u in range(num_users):
        for j in range(5):
            train.append((u, (u + j) % num_items))
        test.append((u, (u + 5) % num_items))
        val.append((u, (u + 6) % num_items))
    return InteractionDataset(
        num_users=num_users,
        num_items=num_items,
        train=np.array(train, dtype=np.int64),
        validation=np.array(val, dtype=np.int64),
        test=np.array(test, dtype=np.int64),
        user_id_map={f"u{u}": u for u in range(num_users)},
        item_id_map={f"i{i}": i for i in range(num_items)},
    )
