import type { FeedQuery, ForumInfo } from './api.js';

/** Everything the reader has chosen in this session. Nothing here is sent to
 * the daemon except as query parameters on the next fetch. */
export interface ViewState {
  mode: 'forum' | 'follow';
  forumId: string | null;
  /** moderator streams currently ticked (forum mode) */
  enabledMods: Set<string>;
  /** unlocked default streams the reader turned off */
  disabledDefaults: Set<string>;
  diffMode: boolean;
  comparePair: [string, string] | null;
  asUser: string | null;
  /** follow mode: allow-list streams the reader subscribes to */
  subs: string[];
  /** policy digest of the last rendered feed, to drop stale responses */
  lastPolicyDigest: string | null;
}

export function initialState(): ViewState {
  return {
    mode: 'forum',
    forumId: null,
    enabledMods: new Set(),
    disabledDefaults: new Set(),
    diffMode: false,
    comparePair: null,
    asUser: null,
    subs: [],
    lastPolicyDigest: null,
  };
}

/** Select a forum and reset the checkbox set to its configuration:
 * moderator streams all on, default streams untouched. */
export function selectForum(state: ViewState, forum: ForumInfo): void {
  state.mode = 'forum';
  state.forumId = forum.forum_id;
  state.enabledMods = new Set(forum.moderator_streams);
  state.disabledDefaults = new Set();
  state.diffMode = false;
  state.comparePair = null;
  state.lastPolicyDigest = null;
}

export function toggleMod(state: ViewState, streamId: string): void {
  if (state.enabledMods.has(streamId)) {
    state.enabledMods.delete(streamId);
  } else {
    state.enabledMods.add(streamId);
  }
}

/** Toggle a default stream. Locked defaults are not togglable; the caller
 * must not wire this to a locked checkbox (render disables them). */
export function toggleDefault(state: ViewState, streamId: string): void {
  if (state.disabledDefaults.has(streamId)) {
    state.disabledDefaults.delete(streamId);
  } else {
    state.disabledDefaults.add(streamId);
  }
}

/** Is the current checkbox set different from the forum's own defaults?
 * When it is, the feed may reveal items the stock view hides. */
export function divergesFromDefaults(state: ViewState, forum: ForumInfo): boolean {
  if (state.disabledDefaults.size > 0) return true;
  if (state.enabledMods.size !== forum.moderator_streams.length) return true;
  return forum.moderator_streams.some((sid) => !state.enabledMods.has(sid));
}

export function feedQuery(state: ViewState): FeedQuery {
  return {
    mods: [...state.enabledMods],
    disabled: [...state.disabledDefaults],
    asUser: state.asUser ?? undefined,
  };
}

/** Query for the forum's stock view (all configured moderation applied). */
export function defaultQuery(): FeedQuery {
  return {};
}

/** Query for the raw view (no moderator streams applied at all). Locked
 * default streams still apply server-side; the UI cannot override them. */
export function rawQuery(): FeedQuery {
  return { mods: [], disabled: [] };
}
