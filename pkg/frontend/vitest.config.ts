import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // the e2e file boots a real gateway subprocess and polls at the
    // console's production cadence, so give it room
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
