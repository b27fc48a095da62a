/**
 * Typed client for the node daemon HTTP API.
 *
 * Every piece of state the UI shows comes from these endpoints; the client
 * does no filtering or moderation of its own. Configuration is a single
 * base URL.
 */

// ============================================================================
// Payload types (mirroring the daemon's canonical JSON bodies)
// ============================================================================

export interface EntryRecord {
  author: string;
  content_hash: string;
  payload_kind: string;
  prev_hash: string;
  seq: number;
  stream_id: string;
  timestamp: number;
  signature?: string;
  reply_to?: { seq: number; stream_id: string };
  writers?: string[];
  action?: Record<string, unknown>;
}

export interface FeedItem {
  entry: EntryRecord;
  labels: [string, string][];
  payload: string | null;
  provenance: string[];
  revealed_by: string[];
  scores: [number, string][];
  unresolved: boolean;
}

export interface FeedPayload {
  forum_id?: string;
  generated_at: number;
  hidden_count: number;
  items: FeedItem[];
  mode: string;
  policy_digest: string;
  raw_count: number;
  snapshot_id: string;
  warnings: string[];
}

export interface HiddenRef {
  seq: number;
  sources: string[];
  stream_id: string;
}

export interface DiffPayload {
  forum_id: string;
  hidden: HiddenRef[];
  hidden_count: number;
  label_summary: Record<string, number>;
  revealed_only_by: HiddenRef[];
}

export interface ForumInfo {
  content_streams: string[];
  default_streams: { locked: boolean; stream_id: string }[];
  forum_id: string;
  moderator_streams: string[];
}

export interface CompareRef {
  seq: number;
  stream_id: string;
}

export interface ComparePayload {
  agreements: CompareRef[];
  contentions: CompareRef[];
  only_a: Record<string, unknown>[];
  only_b: Record<string, unknown>[];
  warnings: string[];
}

export interface ModeratorMetrics {
  agreement: number;
  composite: number;
  coverage: number;
  recency_score: number;
  recency_seconds: number | null;
  stream_id: string;
}

export interface RankPayload {
  order: string[];
  ranking: ModeratorMetrics[];
  warnings: string[];
}

export interface MigrationReport {
  blobs_imported: number;
  conflicts: { reason: string; stream_id: string }[];
  entries_imported: number;
  hints_issued: number;
  streams_imported: number;
  warnings: string[];
}

export interface HealthPayload {
  node: string;
  ok: boolean;
  public_key: string;
  streams: number;
}

/** Query parameters for feed endpoints; undefined fields are omitted. */
export interface FeedQuery {
  mods?: string[];
  disabled?: string[];
  asUser?: string;
}

// ============================================================================
// Errors
// ============================================================================

/** Domain error from the daemon's {code, message} envelope. */
export class ApiError extends Error {
  constructor(
    readonly code: string,
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

/** Network-level failure: daemon unreachable, not a domain error. */
export class OfflineError extends Error {
  constructor(cause: unknown) {
    super(`daemon unreachable: ${cause instanceof Error ? cause.message : String(cause)}`);
    this.name = 'OfflineError';
  }
}

// ============================================================================
// Client
// ============================================================================

export class Client {
  constructor(readonly baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(this.baseUrl + path, init);
    } catch (err) {
      throw new OfflineError(err);
    }
    const body = await resp.text();
    if (!resp.ok) {
      let code = 'UNKNOWN';
      let message = body || resp.statusText;
      try {
        const envelope = JSON.parse(body) as { code?: string; message?: string };
        code = envelope.code ?? code;
        message = envelope.message ?? message;
      } catch {
        // non-JSON error body; keep the raw text
      }
      throw new ApiError(code, resp.status, message);
    }
    return JSON.parse(body) as T;
  }

  health(): Promise<HealthPayload> {
    return this.request('/health');
  }

  forums(): Promise<{ forums: ForumInfo[] }> {
    return this.request('/forums');
  }

  forumFeed(forumId: string, query: FeedQuery = {}): Promise<FeedPayload> {
    return this.request(`/feeds/forum/${forumId}${feedParams(query)}`);
  }

  followFeed(subs: string[], muted: string[] = []): Promise<FeedPayload> {
    const params = new URLSearchParams();
    if (subs.length) params.set('subs', subs.join(','));
    if (muted.length) params.set('muted', muted.join(','));
    const qs = params.toString();
    return this.request(`/feeds/follow${qs ? '?' + qs : ''}`);
  }

  feedDiff(forumId: string, query: FeedQuery = {}): Promise<DiffPayload> {
    const params = feedParams(query, new URLSearchParams({ forum: forumId }));
    return this.request(`/feeds/diff${params}`);
  }

  compare(a: string, b: string, streams?: string[]): Promise<ComparePayload> {
    const params = new URLSearchParams({ a, b });
    if (streams && streams.length) params.set('streams', streams.join(','));
    return this.request(`/mod/compare?${params.toString()}`);
  }

  rank(candidates: string[]): Promise<RankPayload> {
    const params = new URLSearchParams({ candidates: candidates.join(',') });
    return this.request(`/moderators/rank?${params.toString()}`);
  }

  switchProvider(streamId: string, oldStore: string, newStore: string): Promise<MigrationReport> {
    const body = JSON.stringify({
      new_store: newStore,
      old_store: oldStore,
      stream_id: streamId,
    });
    return this.request('/admin/switch-provider', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body,
    });
  }
}

/** `mods` is always sent explicitly (even empty) so the reader's checkbox set
 * is exactly what the daemon applies; absent means "forum defaults". */
function feedParams(query: FeedQuery, params = new URLSearchParams()): string {
  if (query.mods !== undefined) params.set('mods', [...query.mods].sort().join(','));
  if (query.disabled !== undefined && query.disabled.length) {
    params.set('disabled', [...query.disabled].sort().join(','));
  }
  if (query.asUser) params.set('as', query.asUser);
  const qs = params.toString();
  return qs ? '?' + qs : '';
}
