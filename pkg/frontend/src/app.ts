/** Browser entry point: token gate, queue navigation, and the submit flows.
 *
 * The page holds no state of its own beyond the reviewer token; every view
 * is rebuilt from API GETs, so a reload (or another reviewer racing us)
 * can never leave stale decisions on screen.
 */

import { ApiError, ReviewClient, type Permutation } from "./client";
import { drawPermutation, sideToChoice } from "./blinding";
import {
  renderBanner,
  renderEmpty,
  renderJuryCard,
  renderPreferenceCard,
  renderPreferenceResults,
  renderStats,
  renderVerificationCard,
} from "./render";
import type {
  JuryPayload,
  PreferencePayload,
  QueueItem,
  QueueName,
  VerificationPayload,
} from "./types";

const TOKEN_KEY = "medeval-reviewer-token";

type View = QueueName | "stats";

const $ = (sel: string): HTMLElement => {
  const node = document.querySelector(sel);
  if (!node) throw new Error(`missing element ${sel}`);
  return node as HTMLElement;
};

// ── state ───────────────────────────────────────────

let client: ReviewClient | null = null;
let banner = "";

function currentView(): View {
  const hash = location.hash.replace("#", "");
  if (hash === "jury" || hash === "preference" || hash === "stats") return hash;
  return "verification";
}

function showBanner(text: string): void {
  banner = text;
}

function takeBanner(): string {
  const html = banner ? renderBanner("warn", banner) : "";
  banner = "";
  return html;
}

// ── token gate ──────────────────────────────────────

function renderTokenForm(): void {
  $("#app").innerHTML = `
    <article class="card token-form">
      <h2>Reviewer sign-in</h2>
      <p class="muted">Paste the reviewer token you were provisioned with.</p>
      <form id="token-form">
        <input type="password" id="token" placeholder="reviewer token" autofocus />
        <button type="submit">Start reviewing</button>
      </form>
    </article>`;
  $("#token-form").addEventListener("submit", (e) => {
    e.preventDefault();
    const token = ($("#token") as HTMLInputElement).value.trim();
    if (!token) return;
    localStorage.setItem(TOKEN_KEY, token);
    client = new ReviewClient(token);
    void loadView();
  });
}

function signOut(): void {
  localStorage.removeItem(TOKEN_KEY);
  client = null;
  renderTokenForm();
}

// ── error handling ──────────────────────────────────

async function guarded(work: () => Promise<void>): Promise<void> {
  try {
    await work();
  } catch (err) {
    if (err instanceof ApiError && err.status === 401) {
      signOut();
      return;
    }
    if (err instanceof ApiError && err.leaseLost) {
      // Lease expired or someone else got there first: the item is back in
      // (or gone from) the queue; nothing we sent was recorded.
      showBanner(`Item returned to queue: ${err.message}`);
      await loadView();
      return;
    }
    $("#app").innerHTML = renderBanner("warn", `Request failed: ${String(err)}`);
  }
}

// ── verification flow ───────────────────────────────

async function loadVerification(api: ReviewClient): Promise<void> {
  const body = await api.pending<VerificationPayload>("verification");
  const item = body.items[0];
  if (!item) {
    $("#app").innerHTML = takeBanner() + renderEmpty("verification");
    return;
  }
  await api.claim("verification", item.item_id);
  $("#app").innerHTML = takeBanner() + renderVerificationCard(item, body.guidelines ?? {});

  const checkbox = (i: number) => $(`#crit-${i}`) as HTMLInputElement;
  $(".decision").addEventListener("submit", (e) => {
    e.preventDefault();
    const criteria: [boolean, boolean, boolean] = [
      checkbox(0).checked,
      checkbox(1).checked,
      checkbox(2).checked,
    ];
    const note = ($("#note") as HTMLInputElement).value.trim() || undefined;
    void guarded(async () => {
      const out = await api.decideVerification(item.item_id, criteria, note);
      showBanner(`Recorded: ${out.verification.status}`);
      await loadView();
    });
  });
}

// ── jury flow ───────────────────────────────────────

async function loadJury(api: ReviewClient): Promise<void> {
  const body = await api.pending<JuryPayload>("jury");
  const item = body.items[0];
  if (!item) {
    $("#app").innerHTML = takeBanner() + renderEmpty("jury");
    return;
  }
  await api.claim("jury", item.item_id);
  $("#app").innerHTML = takeBanner() + renderJuryCard(item);

  let accept: boolean | null = null;
  const submitBtn = $("#submit-jury") as HTMLButtonElement;
  const pick = (value: boolean) => {
    accept = value;
    $("#accept").classList.toggle("picked", value);
    $("#reject").classList.toggle("picked", !value);
    submitBtn.disabled = false;
  };
  $("#accept").addEventListener("click", () => pick(true));
  $("#reject").addEventListener("click", () => pick(false));
  $(".decision").addEventListener("submit", (e) => {
    e.preventDefault();
    if (accept === null) return;
    const chosen = accept;
    const revised = ($("#revised") as HTMLTextAreaElement).value.trim();
    void guarded(async () => {
      const out = await api.submitJuryVerdict(
        item.payload.ticket_id,
        chosen,
        chosen && revised ? revised : undefined,
      );
      showBanner(`Verdict recorded: ${out.ticket.verdict?.accept ? "accepted" : "rejected"}`);
      await loadView();
    });
  });
}

// ── preference flow ─────────────────────────────────

async function loadPreference(api: ReviewClient): Promise<void> {
  const body = await api.pending<PreferencePayload>("preference");
  const item = body.items[0];
  if (!item) {
    const stats = await api.stats();
    if (stats.preference_closed) {
      const results = await api.preferenceResults();
      $("#app").innerHTML = takeBanner() + renderPreferenceResults(results);
    } else {
      $("#app").innerHTML = takeBanner() + renderEmpty("preference");
    }
    return;
  }
  await api.claim("preference", item.item_id);
  const perm = drawPermutation();
  $("#app").innerHTML =
    takeBanner() +
    renderPreferenceCard(item, body.criteria ?? [], body.progress ?? { done: 0, total: 0 }, perm);

  document.querySelectorAll<HTMLButtonElement>(".choice-btn").forEach((btn) => {
    btn.addEventListener("click", () => {
      const side = btn.dataset.side as "left" | "right";
      void choosePreference(api, item, perm, side);
    });
  });
}

async function choosePreference(
  api: ReviewClient,
  item: QueueItem<PreferencePayload>,
  perm: Permutation,
  side: "left" | "right",
): Promise<void> {
  await guarded(async () => {
    const out = await api.submitPreferenceChoice(item.item_id, sideToChoice(perm, side), perm);
    showBanner(`Choice recorded (${out.done}/${out.total} done)`);
    await loadView();
  });
}

// ── router ──────────────────────────────────────────

async function loadView(): Promise<void> {
  if (!client) {
    renderTokenForm();
    return;
  }
  const api = client;
  document
    .querySelectorAll<HTMLAnchorElement>("nav a")
    .forEach((a) => a.classList.toggle("active", a.hash === `#${currentView()}`));
  await guarded(async () => {
    switch (currentView()) {
      case "verification":
        return loadVerification(api);
      case "jury":
        return loadJury(api);
      case "preference":
        return loadPreference(api);
      case "stats": {
        $("#app").innerHTML = takeBanner() + renderStats(await api.stats());
        return;
      }
    }
  });
}

// ── keyboard ────────────────────────────────────────

function onKey(e: KeyboardEvent): void {
  const target = e.target as HTMLElement | null;
  if (target && (target.tagName === "INPUT" || target.tagName === "TEXTAREA")) return;
  const view = currentView();
  if (view === "verification" && ["1", "2", "3"].includes(e.key)) {
    const box = document.querySelector<HTMLInputElement>(`#crit-${Number(e.key) - 1}`);
    if (box) box.checked = !box.checked;
  } else if (view === "jury" && (e.key === "a" || e.key === "r")) {
    const btn = document.querySelector<HTMLButtonElement>(e.key === "a" ? "#accept" : "#reject");
    btn?.click();
  } else if (view === "preference" && (e.key === "1" || e.key === "2")) {
    const side = e.key === "1" ? "left" : "right";
    document.querySelector<HTMLButtonElement>(`.choice-btn[data-side="${side}"]`)?.click();
  } else if (e.key === "Enter") {
    document.querySelector<HTMLFormElement>(".decision")?.requestSubmit();
  }
}

// ── boot ────────────────────────────────────────────

function main(): void {
  const token = localStorage.getItem(TOKEN_KEY);
  if (token) client = new ReviewClient(token);
  $("#sign-out").addEventListener("click", signOut);
  window.addEventListener("hashchange", () => void loadView());
  window.addEventListener("keydown", onKey);
  void loadView();
}

document.addEventListener("DOMContentLoaded", main);
