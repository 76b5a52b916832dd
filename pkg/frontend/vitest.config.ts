import { defineConfig } from "vitest/config";

// The live-flow suite boots a real review service, so hooks need headroom.
export default defineConfig({
  test: {
    environment: "node",
    hookTimeout: 30_000,
    testTimeout: 30_000,
  },
});
