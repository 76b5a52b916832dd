/** Pure HTML builders: API payload in, markup string out.
 *
 * Keeping these free of DOM and fetch calls means the exact markup shown
 * to reviewers can be inspected in tests, in particular the blinding scan
 * over preference views. Everything user-visible passes through esc().
 */

import type { Permutation } from "./client";
import { textForSide } from "./blinding";
import type {
  JuryPayload,
  Progress,
  QueueItem,
  Stats,
  PreferencePayload,
  PreferenceResults,
  VerificationPayload,
} from "./types";

export function esc(s: unknown): string {
  return String(s)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderBanner(kind: "info" | "warn", text: string): string {
  return `<div class="banner banner-${kind}">${esc(text)}</div>`;
}

export function renderEmpty(queue: string): string {
  return `<div class="empty">No open ${esc(queue)} items. You are all caught up.</div>`;
}

// ── verification ────────────────────────────────────

const CRITERION_KEYS = ["knowledge_correct", "no_misattribution", "fluent"] as const;

export function renderVerificationCard(
  item: QueueItem<VerificationPayload>,
  guidelines: Record<string, string>,
): string {
  const { case: evalCase, evaluation } = item.payload;
  const recordId = item.payload.record_id ?? evalCase.case_id;

  const responses = evalCase.responses
    .map(
      (r) => `
      <section class="response">
        <h4>${esc(r.model_label)}</h4>
        <p>${esc(r.text)}</p>
      </section>`,
    )
    .join("");

  const scores = Object.entries(evaluation.scores)
    .sort(([a], [b]) => Number(a) - Number(b))
    .map(([idx, score]) => `Doctor ${Number(idx) + 1}: ${esc(score)}`)
    .join(" | ");

  // Toggle labels are the guideline text exactly as the service sent it.
  const toggles = CRITERION_KEYS.map(
    (key, i) => `
      <label class="criterion">
        <input type="checkbox" id="crit-${i}" data-key="${esc(key)}" />
        <span class="key-hint">[${i + 1}]</span>
        <span class="criterion-name">${esc(key)}</span>
        <span class="guideline">${esc(guidelines[key] ?? "")}</span>
      </label>`,
  ).join("");

  return `
  <article class="card verification" data-item-id="${esc(item.item_id)}">
    <header><h2>Verify evaluation</h2><span class="muted">record ${esc(recordId)}</span></header>
    <section class="case">
      <h3>Question</h3>
      <p>${esc(evalCase.question)}</p>
      ${responses}
      <h3>Reference answer</h3>
      <p>${esc(evalCase.reference_answer)}</p>
    </section>
    <section class="evaluation">
      <h3>Evaluation under review</h3>
      <pre>${esc(evaluation.raw_text)}</pre>
      <p class="muted">Scores: ${scores}</p>
    </section>
    <form class="decision">
      ${toggles}
      <input type="text" id="note" placeholder="optional note" />
      <button type="submit" id="submit-verification">Submit decision <span class="key-hint">[Enter]</span></button>
    </form>
  </article>`;
}

// ── jury ────────────────────────────────────────────

export function renderJuryCard(item: QueueItem<JuryPayload>): string {
  const { ticket_id, record_id, transcript } = item.payload;
  const turns = transcript
    .map(
      (m) => `
      <div class="turn turn-${esc(m.role)}">
        <span class="role">${esc(m.role)}</span>
        <p>${esc(m.text)}</p>
      </div>`,
    )
    .join("");

  return `
  <article class="card jury" data-item-id="${esc(item.item_id)}" data-ticket-id="${esc(ticket_id)}">
    <header><h2>Jury ticket</h2><span class="muted">record ${esc(record_id)}</span></header>
    <section class="transcript">${turns}</section>
    <form class="decision">
      <div class="verdict-buttons">
        <button type="button" id="accept">Accept <span class="key-hint">[a]</span></button>
        <button type="button" id="reject">Reject <span class="key-hint">[r]</span></button>
      </div>
      <textarea id="revised" placeholder="optional revised suggestion text (used on accept)"></textarea>
      <button type="submit" id="submit-jury" disabled>Submit verdict <span class="key-hint">[Enter]</span></button>
    </form>
  </article>`;
}

// ── preference ──────────────────────────────────────

export function renderPreferenceCard(
  item: QueueItem<PreferencePayload>,
  criteria: string[],
  progress: Progress,
  perm: Permutation,
): string {
  const { text_a, text_b } = item.payload;
  const criteriaList = criteria.map((c) => `<li>${esc(c)}</li>`).join("");

  const panel = (side: "left" | "right", hint: string) => `
    <section class="option" data-side="${side}">
      <pre>${esc(textForSide(perm, side, text_a, text_b))}</pre>
      <button type="button" class="choice-btn" data-side="${side}">
        Choose this one <span class="key-hint">[${hint}]</span>
      </button>
    </section>`;

  return `
  <article class="card preference" data-item-id="${esc(item.item_id)}">
    <header>
      <h2>Which evaluation is better?</h2>
      <span class="muted">progress ${esc(progress.done)}/${esc(progress.total)}</span>
    </header>
    <ul class="criteria">${criteriaList}</ul>
    <div class="pair">
      ${panel("left", "1")}
      ${panel("right", "2")}
    </div>
  </article>`;
}

/** Only reachable after close: the results endpoint refuses to unblind
 * while the experiment is open, so sources appearing here is correct. */
export function renderPreferenceResults(results: PreferenceResults): string {
  const rows = Object.entries(results.pooled.counts)
    .sort(([a], [b]) => a.localeCompare(b))
    .map(
      ([source, count]) => `
      <tr><td>${esc(source)}</td><td>${count}</td>
      <td>${((results.pooled.fractions[source] ?? 0) * 100).toFixed(1)}%</td></tr>`,
    )
    .join("");
  return `
  <article class="card preference-results">
    <header><h2>Preference results</h2><span class="muted">experiment closed, ${results.pooled.n} choices</span></header>
    <table>
      <thead><tr><th>source</th><th>chosen</th><th>share</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>
  </article>`;
}

// ── stats ───────────────────────────────────────────

export function renderStats(stats: Stats): string {
  const rows = Object.entries(stats.queues)
    .map(
      ([name, c]) => `
      <tr><td>${esc(name)}</td><td>${c.open}</td><td>${c.claimed}</td><td>${c.done}</td><td>${c.total}</td></tr>`,
    )
    .join("");

  const verification = stats.verification
    ? `<p>Verification: ${stats.verification.approved} approved, ${stats.verification.rejected} rejected
       (criterion pass rates ${stats.verification.criterion_proportions
         .map((p) => p.toFixed(4))
         .join(", ")})</p>`
    : `<p class="muted">No verification decisions yet.</p>`;

  return `
  <article class="card stats">
    <header><h2>Queue stats</h2></header>
    <table>
      <thead><tr><th>queue</th><th>open</th><th>claimed</th><th>done</th><th>total</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>
    ${verification}
    <p>Preference experiment: ${stats.preference_closed ? "closed" : "open"}</p>
  </article>`;
}
