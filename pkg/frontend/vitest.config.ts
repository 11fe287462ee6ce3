import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // The round-trip suite spawns the Python service and trains nothing,
    // but session setup still pays a real forward pass at 128x128.
    testTimeout: 120_000,
    hookTimeout: 60_000,
  },
});
