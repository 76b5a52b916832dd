import { describe, expect, it } from "vitest";

import { drawPermutation, sideToChoice, textForSide } from "../src/blinding";

describe("drawPermutation", () => {
  it("keeps canonical order when the draw is low", () => {
    expect(drawPermutation(() => 0.0)).toEqual({ left: "A", right: "B" });
  });

  it("flips the pair when the draw is high", () => {
    expect(drawPermutation(() => 0.99)).toEqual({ left: "B", right: "A" });
  });

  it("always covers both slots exactly once", () => {
    for (let i = 0; i < 50; i++) {
      const perm = drawPermutation();
      expect([perm.left, perm.right].sort()).toEqual(["A", "B"]);
    }
  });
});

describe("sideToChoice / textForSide", () => {
  it("maps a picked side back to the canonical slot", () => {
    const flipped = { left: "B", right: "A" } as const;
    expect(sideToChoice(flipped, "left")).toBe("B");
    expect(sideToChoice(flipped, "right")).toBe("A");
  });

  it("shows each text on the side its slot was assigned", () => {
    const perm = { left: "B", right: "A" } as const;
    expect(textForSide(perm, "left", "alpha", "beta")).toBe("beta");
    expect(textForSide(perm, "right", "alpha", "beta")).toBe("alpha");
  });
});
