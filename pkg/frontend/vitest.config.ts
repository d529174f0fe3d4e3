import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    hookTimeout: 120_000,
    testTimeout: 60_000,
    // The session tests share one live server; keep them in a single worker.
    fileParallelism: false,
  },
});
