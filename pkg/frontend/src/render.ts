/**
 * Pure renderers: (state, API payloads) -> HTML strings. No fetching, no
 * moderation decisions — hidden/visible/revealed all arrive pre-computed
 * from the daemon payloads.
 */

import type {
  ComparePayload,
  DiffPayload,
  FeedItem,
  FeedPayload,
  ForumInfo,
  MigrationReport,
} from './api.js';
import type { ViewState } from './state.js';

export function escapeHtml(text: string): string {
  return text
    .replaceAll('&', '&amp;')
    .replaceAll('<', '&lt;')
    .replaceAll('>', '&gt;')
    .replaceAll('"', '&quot;')
    .replaceAll("'", '&#39;');
}

export function refKey(streamId: string, seq: number): string {
  return `${streamId}:${seq}`;
}

/** Abbreviate a 64-hex identifier for badges; full id stays in the title. */
function short(id: string): string {
  return id.length > 12 ? id.slice(0, 10) + '…' : id;
}

function badge(cls: string, text: string, title = ''): string {
  const titleAttr = title ? ` title="${escapeHtml(title)}"` : '';
  return `<span class="badge ${cls}"${titleAttr}>${escapeHtml(text)}</span>`;
}

// ============================================================================
// navigation + controls
// ============================================================================

export function renderForumNav(forums: ForumInfo[], activeId: string | null): string {
  const links = forums.map((f) => {
    const cls = f.forum_id === activeId ? 'forum-link active' : 'forum-link';
    return `<button class="${cls}" data-forum="${escapeHtml(f.forum_id)}">${escapeHtml(f.forum_id)}</button>`;
  });
  return links.join('\n');
}

/** Checkbox per moderation stream. Locked defaults render as disabled,
 * always-checked boxes: the reader cannot opt out of those. */
export function renderControls(forum: ForumInfo, state: ViewState): string {
  const rows: string[] = [];
  for (const sid of forum.moderator_streams) {
    const checked = state.enabledMods.has(sid) ? ' checked' : '';
    rows.push(
      `<label class="mod-toggle"><input type="checkbox" data-mod="${escapeHtml(sid)}"${checked}>` +
        ` <code title="${escapeHtml(sid)}">${escapeHtml(short(sid))}</code></label>`,
    );
  }
  for (const d of forum.default_streams) {
    const disabledByReader = state.disabledDefaults.has(d.stream_id);
    const lockAttr = d.locked ? ' disabled' : '';
    const checked = d.locked || !disabledByReader ? ' checked' : '';
    const mark = d.locked ? ' <span class="lock" title="locked by the community">locked</span>' : '';
    rows.push(
      `<label class="mod-toggle default"><input type="checkbox" data-default="${escapeHtml(d.stream_id)}"${checked}${lockAttr}>` +
        ` <code title="${escapeHtml(d.stream_id)}">${escapeHtml(short(d.stream_id))}</code>${mark}</label>`,
    );
  }
  const diffLabel = state.diffMode ? 'back to feed' : 'diff view';
  return `
    <div class="controls-box">
      <h3>moderation streams</h3>
      ${rows.join('\n') || '<p class="muted">none configured</p>'}
      <button data-diff-toggle>${diffLabel}</button>
    </div>`;
}

// ============================================================================
// feed
// ============================================================================

function renderItem(item: FeedItem, revealedRefs: Set<string>): string {
  const entry = item.entry;
  const key = refKey(entry.stream_id, entry.seq);
  const badges: string[] = [];
  if (item.unresolved) badges.push(badge('badge-unresolved', 'UNRESOLVED'));
  if (revealedRefs.has(key)) {
    badges.push(badge('badge-revealed', 'revealed', 'hidden in the stock view'));
  }
  for (const src of item.revealed_by) {
    badges.push(badge('badge-revealed', 'revealed by ' + short(src), src));
  }
  for (const [label, src] of item.labels) {
    badges.push(badge('badge-label', label, 'labeled by ' + src));
  }
  for (const [score, src] of item.scores) {
    badges.push(badge('badge-score', `score ${score}`, 'scored by ' + src));
  }
  for (const sid of item.provenance) {
    badges.push(badge('badge-prov', short(sid), 'moderation source ' + sid));
  }
  const body =
    item.payload !== null
      ? `<p class="item-body">${escapeHtml(item.payload)}</p>`
      : '<p class="item-body muted">[payload not resolvable]</p>';
  const when = new Date(entry.timestamp * 1000).toISOString();
  return `
    <article class="item" data-ref="${escapeHtml(key)}">
      <header>
        <code class="author" title="${escapeHtml(entry.author)}">${escapeHtml(short(entry.author))}</code>
        <code class="ref">${escapeHtml(short(entry.stream_id))}#${entry.seq}</code>
        <time>${escapeHtml(when)}</time>
      </header>
      ${body}
      <footer>${badges.join(' ')}</footer>
    </article>`;
}

export interface FeedRenderOptions {
  /** refs visible now but hidden under the forum's stock view */
  revealedRefs?: Set<string>;
}

export function renderFeed(feed: FeedPayload, options: FeedRenderOptions = {}): string {
  const revealed = options.revealedRefs ?? new Set<string>();
  const items = feed.items.map((item) => renderItem(item, revealed)).join('\n');
  const hiddenBanner =
    feed.hidden_count > 0
      ? `<div class="banner hidden-banner">` +
        `<a href="#diff" data-diff-toggle>${feed.hidden_count} item${feed.hidden_count === 1 ? '' : 's'} hidden by moderation — view diff</a>` +
        `</div>`
      : '';
  const warnings = feed.warnings.map((w) => `<p class="warning">${escapeHtml(w)}</p>`).join('');
  return `
    <section class="feed" data-policy-digest="${escapeHtml(feed.policy_digest)}">
      <header class="feed-meta">
        <span>${feed.items.length} visible / ${feed.raw_count} total</span>
        ${badge('badge-digest', 'policy ' + short(feed.policy_digest), feed.policy_digest)}
        ${badge('badge-digest', 'snapshot ' + short(feed.snapshot_id), feed.snapshot_id)}
      </header>
      ${warnings}
      ${hiddenBanner}
      ${items || '<p class="muted">no visible items</p>'}
    </section>`;
}

// ============================================================================
// diff view
// ============================================================================

/** Raw order with the hidden entries struck through, each annotated with the
 * moderator streams responsible. The raw feed supplies bodies; the diff
 * payload supplies hidden refs + sources. */
export function renderDiffView(rawFeed: FeedPayload, diff: DiffPayload): string {
  const sources = new Map<string, string[]>();
  for (const h of diff.hidden) {
    sources.set(refKey(h.stream_id, h.seq), h.sources);
  }
  const rows = rawFeed.items.map((item) => {
    const key = refKey(item.entry.stream_id, item.entry.seq);
    const hiddenBy = sources.get(key);
    if (hiddenBy === undefined) {
      return renderItem(item, new Set());
    }
    const who = hiddenBy.map((sid) => badge('badge-prov', short(sid), sid)).join(' ');
    const body = item.payload !== null ? escapeHtml(item.payload) : '[payload not resolvable]';
    return `
      <article class="item hidden-item" data-ref="${escapeHtml(key)}">
        <del>${body}</del>
        <footer>hidden by ${who}</footer>
      </article>`;
  });
  const labels = Object.entries(diff.label_summary)
    .map(([label, count]) => `<li>${escapeHtml(label)}: ${count}</li>`)
    .join('');
  return `
    <section class="diff" data-hidden-count="${diff.hidden_count}">
      <header class="feed-meta">
        <span>diff vs raw: ${diff.hidden_count} hidden</span>
      </header>
      ${labels ? `<ul class="label-summary">${labels}</ul>` : ''}
      ${rows.join('\n') || '<p class="muted">raw feed is empty</p>'}
    </section>`;
}

// ============================================================================
// moderator comparison
// ============================================================================

export function renderCompare(a: string, b: string, payload: ComparePayload): string {
  const list = (refs: { stream_id: string; seq: number }[]): string =>
    refs.map((r) => `<li><code>${escapeHtml(short(r.stream_id))}#${r.seq}</code></li>`).join('') ||
    '<li class="muted">none</li>';
  return `
    <section class="compare">
      <h3>${escapeHtml(short(a))} vs ${escapeHtml(short(b))}</h3>
      <div class="compare-cols">
        <div><h4>contentions (${payload.contentions.length})</h4><ul data-contentions>${list(payload.contentions)}</ul></div>
        <div><h4>agreements (${payload.agreements.length})</h4><ul>${list(payload.agreements)}</ul></div>
      </div>
      <p class="muted">acts alone: ${payload.only_a.length} / ${payload.only_b.length}</p>
    </section>`;
}

// ============================================================================
// provider switch
// ============================================================================

export function renderSwitchResult(
  report: MigrationReport,
  feedsIdentical: boolean | null,
): string {
  const warnings = report.warnings.map((w) => `<li>${escapeHtml(w)}</li>`).join('');
  let bannerClass = 'banner';
  let bannerText = 'equality check pending';
  if (feedsIdentical === true) {
    bannerClass = 'banner ok-banner';
    bannerText = 'feeds identical before and after switch';
  } else if (feedsIdentical === false) {
    bannerClass = 'banner warn-banner';
    bannerText = 'feeds differ after switch — check per-item badges';
  }
  return `
    <section class="switch-result">
      <div class="${bannerClass}" data-switch-banner>${bannerText}</div>
      <p>${report.blobs_imported} blobs replicated, ${report.hints_issued} hints issued</p>
      ${warnings ? `<ul class="warnings">${warnings}</ul>` : ''}
    </section>`;
}

// ============================================================================
// offline / error
// ============================================================================

export function renderOffline(message: string): string {
  return `
    <section class="offline">
      <div class="banner warn-banner">daemon unreachable — nothing shown is current</div>
      <p class="muted">${escapeHtml(message)}</p>
      <button data-retry>retry</button>
    </section>`;
}

export function renderError(code: string, message: string): string {
  return `
    <section class="api-error">
      <div class="banner warn-banner">error [${escapeHtml(code)}]</div>
      <p class="muted">${escapeHtml(message)}</p>
    </section>`;
}
