"""
Driving the human review service: verification, jury, blinded preference
========================================================================

The service normally runs via `medeval serve`; here FastAPI's test client
exercises the same HTTP surface in process.
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from medeval.review.service import create_app
from medeval.review.store import ReviewStore

store = ReviewStore(Path(tempfile.mkdtemp()))
app = create_app(store, reviewers={"tok-alice": "alice", "tok-bob": "bob"})
client = TestClient(app)
alice = {"X-Reviewer-Token": "tok-alice"}
bob = {"X-Reviewer-Token": "tok-bob"}

# --- verification queue: claim, judge three criteria, decide ---

payload = {
    "record_id": "rec-1",
    "case": {"question": "How is strep throat treated?"},
    "evaluation": {"raw_text": "Analyze: ...\nScore: Doctor 1: 4 points."},
}
item_id = client.post("/api/enqueue", json={"kind": "verification", "payload": payload}, headers=alice).json()["item_id"]

pending = client.get("/api/verification/pending", headers=alice).json()
print(f"verification pending: {len(pending['items'])}, guideline keys {sorted(pending['guidelines'])}")

# Claiming takes a 30-minute lease; other reviewers see the item as taken.
client.post(f"/api/verification/{item_id}/claim", headers=alice)
decision = {"criteria": [True, True, True], "note": "clean"}
state = client.post(f"/api/verification/{item_id}/decision", json=decision, headers=alice).json()
print(f"decision: {state['verification']['status']} by {state['verification']['reviewer_id']}")

# --- blinded preference: sources stay hidden until the experiment closes ---

for text_a, text_b, src_a, src_b in [
    ("Take amoxicillin for ten days.", "Gargle salt water only.", "tuned", "baseline"),
    ("Rest and fluids help recovery.", "Rest, fluids, and penicillin.", "tuned", "baseline"),
]:
    store.enqueue_preference(text_a, text_b, src_a, src_b)

listing = client.get("/api/preference/pending", headers=bob).json()
first = listing["items"][0]
print(f"preference payload keys (blinded): {sorted(first['payload'])}")

for item in listing["items"]:
    client.post(f"/api/preference/{item['item_id']}/claim", headers=bob).raise_for_status()
    choice = {"choice": "A", "permutation": {"left": "A", "right": "B"}}
    client.post(f"/api/preference/{item['item_id']}/choice", json=choice, headers=bob).raise_for_status()

results = client.post("/api/preference/close", headers=bob).json()
print(f"after close, pooled counts: {results['results']['pooled']['counts']}")

# --- shared stats endpoint ---

stats = client.get("/api/stats", headers=alice).json()
print(f"verification stats: {stats['verification']}")
