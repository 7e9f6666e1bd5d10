"""Walk through the embedding recall layer on a hand-built catalog.

Shows how items and users share one hashed token space, how the exact
top-k scan behaves, and what the id tie rule does when vectors collide.
"""

from agentrank import (
    Catalog,
    HashEmbedder,
    Interaction,
    Item,
    UserContext,
    build_index,
    cosine,
    embed_user,
    retrieve_topk,
)

catalog = Catalog()
for item in [
    Item("bag-tote-check", "Checkered canvas tote", "Roomy checkered tote bag for daily errands"),
    Item("bag-tote-plain", "Plain canvas tote", "Roomy plain tote bag for daily errands"),
    Item("bag-hobo", "Leather hobo bag", "Slouchy leather shoulder bag"),
    Item("scarf-check", "Checkered wool scarf", "Warm checkered scarf in soft wool"),
    Item("wallet", "Leather wallet", "Slim leather wallet with card slots"),
    # an exact duplicate of the plain tote's text, to force a score tie
    Item("bag-tote-spare", "Plain canvas tote", "Roomy plain tote bag for daily errands"),
]:
    catalog.add(item)

embedder = HashEmbedder(dim=256)
index = build_index(catalog, embedder)
print(f"indexed {len(index)} items at d={index.dim}")

query = embedder.embed_text("checkered tote bag")
print("\ntop-4 for 'checkered tote bag':")
for item_id, score in retrieve_topk(index, query, k=4):
    print(f"  {score:.4f}  {item_id}")

# bag-tote-plain and bag-tote-spare embed identically; the tie is broken
# by id, so the order is stable no matter how the index was built.
tie_query = embedder.embed_text("plain tote bag errands")
print("\ntop-3 for 'plain tote bag errands' (note the id tie-break):")
for item_id, score in retrieve_topk(index, tie_query, k=3):
    print(f"  {score:.4f}  {item_id}")

# a user is embedded as the concatenated metadata of their recent items
context = UserContext(
    user_id="u-demo",
    long_term=[
        Interaction("u-demo", "wallet", timestamp=1_000),
        Interaction("u-demo", "bag-hobo", timestamp=2_000),
    ],
    session=[Interaction("u-demo", "scarf-check", timestamp=9_000)],
)
user_vec = embed_user(embedder, context, catalog)
print("\nuser query built from history; similarity to each item:")
for item_id in catalog.ids():
    print(f"  {cosine(index.vector(item_id), user_vec):.4f}  {item_id}")
