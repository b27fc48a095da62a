import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'happy-dom',
    globalSetup: ['./tests/setup/daemon.ts'],
    // one shared fixture daemon; keep files sequential so the admin test
    // doesn't mutate state under the feed tests
    fileParallelism: false,
    testTimeout: 30_000,
    hookTimeout: 120_000,
    include: ['tests/**/*.test.ts'],
  },
});
