import { describe, expect, it } from "vitest";

import {
  esc,
  renderJuryCard,
  renderPreferenceCard,
  renderVerificationCard,
} from "../src/render";
import type { JuryPayload, QueueItem, VerificationPayload, PreferencePayload } from "../src/types";

function verificationItem(question: string): QueueItem<VerificationPayload> {
  return {
    item_id: "item-1",
    kind: "verification",
    status: "open",
    created_at: 0,
    payload: {
      record_id: "case-1",
      case: {
        case_id: "case-1",
        question,
        responses: [
          { model_label: "model-x", text: "Answer one." },
          { model_label: "model-y", text: "Answer two." },
        ],
        reference_answer: "The reference.",
      },
      evaluation: {
        steps: ["Compared both answers."],
        scores: { "0": 5, "1": 2 },
        raw_text: "Analyze: ... Score: Doctor 1: 5 points. Doctor 2: 2 points.",
      },
    },
  };
}

const GUIDELINES = {
  knowledge_correct: "Approve only if every statement is medically correct.",
  no_misattribution: "Approve only if nothing is credited to the wrong answer.",
  fluent: "Approve only if the prose is fluent.",
};

describe("esc", () => {
  it("neutralizes markup in payload text", () => {
    const html = renderVerificationCard(verificationItem('<script>alert("x")</script>'), GUIDELINES);
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });

  it("escapes quotes and ampersands", () => {
    expect(esc(`a & "b" < 'c'`)).toBe("a &amp; &quot;b&quot; &lt; &#39;c&#39;");
  });
});

describe("renderVerificationCard", () => {
  it("shows the case, the evaluation, and the served guideline text verbatim", () => {
    const html = renderVerificationCard(verificationItem("What is the first-line therapy?"), GUIDELINES);
    expect(html).toContain("What is the first-line therapy?");
    expect(html).toContain("Answer one.");
    expect(html).toContain("Answer two.");
    expect(html).toContain("The reference.");
    expect(html).toContain("Doctor 1: 5 points");
    for (const text of Object.values(GUIDELINES)) {
      expect(html).toContain(text);
    }
    for (const i of [0, 1, 2]) {
      expect(html).toContain(`id="crit-${i}"`);
    }
  });
});

describe("renderJuryCard", () => {
  it("renders the transcript in order with role labels", () => {
    const item: QueueItem<JuryPayload> = {
      item_id: "item-2",
      kind: "jury",
      status: "open",
      created_at: 0,
      payload: {
        ticket_id: "tick-1",
        record_id: "case-9",
        status: "open",
        verdict: null,
        transcript: [
          { role: "suggester", text: "First suggestion." },
          { role: "judge", text: "REJECT too vague." },
          { role: "suggester", text: "Second suggestion." },
        ],
      },
    };
    const html = renderJuryCard(item);
    const first = html.indexOf("First suggestion.");
    const second = html.indexOf("REJECT too vague.");
    const third = html.indexOf("Second suggestion.");
    expect(first).toBeGreaterThan(-1);
    expect(second).toBeGreaterThan(first);
    expect(third).toBeGreaterThan(second);
    expect(html).toContain('id="accept"');
    expect(html).toContain('id="reject"');
    expect(html).toContain('id="revised"');
  });
});

describe("renderPreferenceCard", () => {
  const item: QueueItem<PreferencePayload> = {
    item_id: "item-3",
    kind: "preference",
    status: "open",
    created_at: 0,
    payload: { text_a: "The tuned evaluation text.", text_b: "The baseline evaluation text." },
  };
  const criteria = ["Which analyzes more accurately?"];

  it("places texts according to the permutation", () => {
    const html = renderPreferenceCard(item, criteria, { done: 0, total: 2 }, { left: "B", right: "A" });
    const left = html.indexOf("The baseline evaluation text.");
    const right = html.indexOf("The tuned evaluation text.");
    expect(left).toBeGreaterThan(-1);
    expect(right).toBeGreaterThan(left);
    expect(html).toContain("progress 0/2");
    expect(html).toContain("Which analyzes more accurately?");
  });

  it("renders nothing beyond the two texts from the payload", () => {
    const html = renderPreferenceCard(item, criteria, { done: 0, total: 2 }, { left: "A", right: "B" });
    // The blinded payload is two texts; no other payload-derived field exists
    // to leak, and the markup carries only ids, criteria, and progress.
    expect(html).toContain("The tuned evaluation text.");
    expect(html).toContain("The baseline evaluation text.");
    expect(html).not.toContain("source");
  });
});
