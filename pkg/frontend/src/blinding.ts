/** Client-side presentation order for blinded A/B pairs.
 *
 * The service stores pairs in a canonical (A, B) order with the source
 * mapping hidden server-side. The console additionally randomizes which
 * side of the screen shows A, per item, and reports that permutation with
 * the choice so the audit trail records exactly what the reviewer saw.
 */

import type { Permutation } from "./client";

export function drawPermutation(rng: () => number = Math.random): Permutation {
  return rng() < 0.5 ? { left: "A", right: "B" } : { left: "B", right: "A" };
}

/** Which canonical slot the reviewer picked when clicking a screen side. */
export function sideToChoice(perm: Permutation, side: "left" | "right"): "A" | "B" {
  return perm[side];
}

/** The text to show on a screen side, given the canonical pair. */
export function textForSide(
  perm: Permutation,
  side: "left" | "right",
  textA: string,
  textB: string,
): string {
  return perm[side] === "A" ? textA : textB;
}
