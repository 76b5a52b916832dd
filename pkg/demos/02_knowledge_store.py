"""
Building a vector knowledge store and querying it
=================================================
"""

import tempfile
from pathlib import Path

from medeval.knowledge import HashEmbedder, VectorIndex, build_chunks, build_store, load_store

documents = {
    "hypertension.txt": (
        "Adults with confirmed hypertension should target blood pressure below "
        "130 over 80. Lifestyle change comes first; thiazides, ACE inhibitors, "
        "or calcium channel blockers are reasonable initial agents."
    ),
    "diabetes.txt": (
        "Metformin remains the first line agent for type 2 diabetes. Dose must "
        "be reduced or stopped as kidney function declines."
    ),
}

# In memory: chunk with a sliding word window, embed, exact cosine search.
embedder = HashEmbedder(dim=128)
index = VectorIndex(build_chunks(documents, embedder, window=16, overlap=4), embedder)
for chunk, score in index.query("initial drug for type 2 diabetes", k=2):
    print(f"{score:.3f}  {chunk.chunk_id}: {chunk.text[:60]}...")

# On disk: build_store indexes every *.txt under a directory and writes
# chunks.jsonl / embeddings.f32 / meta.json; load_store rebuilds the
# embedder from the store's own fingerprint, so the embedding dimension
# never has to be passed around.
docs_dir = Path(tempfile.mkdtemp())
for name, text in documents.items():
    (docs_dir / name).write_text(text, encoding="utf-8")
store_dir = tempfile.mkdtemp()
build_store(docs_dir, store_dir, embedder, window=16, overlap=4)
reopened = load_store(store_dir)
hits = reopened.query("blood pressure target", k=1)
print(f"reloaded store answers with: {hits[0][0].text[:60]}...")
