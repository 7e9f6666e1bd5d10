"""Small builders shared across the test modules."""

from __future__ import annotations

from agentrank import Catalog, Interaction, Item, UserContext


def make_item(
    item_id: str,
    title: str | None = None,
    description: str = "",
    reviews: tuple[str, ...] = (),
    category: str = "misc",
) -> Item:
    return Item(
        id=item_id,
        title=title if title is not None else item_id,
        description=description,
        reviews=reviews,
        category=category,
    )


def make_catalog(*items: Item) -> Catalog:
    catalog = Catalog()
    for item in items:
        catalog.add(item)
    return catalog


def make_log(
    user_id: str,
    item_ids: list[str],
    start: int = 1_700_000_000,
    step: int = 60,
) -> list[Interaction]:
    """One interaction per id, spaced ``step`` seconds apart."""
    return [
        Interaction(user_id=user_id, item_id=item_id, timestamp=start + i * step)
        for i, item_id in enumerate(item_ids)
    ]


def handbag_catalog() -> Catalog:
    """A small bag catalog whose token overlap structure is easy to reason about."""
    return make_catalog(
        make_item(
            "bag-tote-checkered",
            title="Checkered tote shoulder bag",
            description="Large checkered canvas tote with shoulder straps",
            reviews=("Roomy and the checkered pattern is lovely",),
            category="bags",
        ),
        make_item(
            "bag-hobo-plain",
            title="Slouchy hobo handbag",
            description="Soft faux leather hobo with a zipper pocket",
            reviews=("Comfortable strap",),
            category="bags",
        ),
        make_item(
            "bag-tote-plain",
            title="Plain canvas tote",
            description="Simple everyday canvas tote bag",
            category="bags",
        ),
        make_item(
            "scarf-checkered",
            title="Checkered wool scarf",
            description="Warm scarf with a classic checkered pattern",
            category="accessories",
        ),
        make_item(
            "wallet-leather",
            title="Leather bifold wallet",
            description="Compact bifold wallet in brown leather",
            category="accessories",
        ),
        make_item(
            "belt-leather",
            title="Leather belt",
            description="Classic brown leather belt",
            category="accessories",
        ),
    )


def handbag_context() -> UserContext:
    """History ending in a session that signals checkered-bag intent."""
    log = [
        Interaction("u-bags", "wallet-leather", 1_700_000_000),
        Interaction("u-bags", "belt-leather", 1_700_050_000),
        Interaction("u-bags", "scarf-checkered", 1_700_100_000),
        Interaction("u-bags", "bag-tote-plain", 1_700_200_000),
        Interaction("u-bags", "scarf-checkered", 1_700_200_060),
    ]
    return UserContext(user_id="u-bags", long_term=tuple(log[:3]), session=tuple(log[3:]))
