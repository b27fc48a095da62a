import { readFileSync } from 'node:fs';
import { join } from 'node:path';

export interface DaemonFixture {
  baseUrl: string;
  content: string[];
  data_dir: string;
  forum: string;
  mods: string[];
  port: number;
  stores: string[];
}

/** Connection details written by the global setup. */
export function fixture(): DaemonFixture {
  // import.meta.url is an http:// URL under the DOM test environment, so
  // resolve from the project root instead (vitest runs with cwd there).
  const raw = readFileSync(join(process.cwd(), 'tests', '.daemon.json'), 'utf8');
  return JSON.parse(raw) as DaemonFixture;
}
