import { defineConfig } from "vitest/config";

// Contract tests spawn the Python API server as a subprocess; generous
// timeouts cover interpreter startup on a cold cache.
export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
