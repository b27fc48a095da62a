import { ApiError, Client, OfflineError } from './api.js';
import type { FeedPayload, ForumInfo } from './api.js';
import {
  divergesFromDefaults,
  feedQuery,
  initialState,
  rawQuery,
  selectForum,
  toggleDefault,
  toggleMod,
} from './state.js';
import type { ViewState } from './state.js';
import {
  refKey,
  renderCompare,
  renderControls,
  renderDiffView,
  renderError,
  renderFeed,
  renderForumNav,
  renderOffline,
  renderSwitchResult,
} from './render.js';

const SHELL = `
  <header class="topbar">
    <h1>plurinet</h1>
    <nav id="forum-nav"></nav>
    <span id="node-id" class="muted"></span>
  </header>
  <div class="layout">
    <aside id="controls"></aside>
    <main id="view"><p class="muted">loading…</p></main>
    <aside id="tools">
      <form id="compare-form">
        <h3>compare moderators</h3>
        <select id="cmp-a" name="a"></select>
        <select id="cmp-b" name="b"></select>
        <button type="submit">compare</button>
      </form>
      <div id="compare-result"></div>
      <form id="switch-form">
        <h3>switch provider</h3>
        <input name="stream" placeholder="stream id" required>
        <input name="old" placeholder="old store" required>
        <input name="new" placeholder="new store" required>
        <button type="submit">switch</button>
      </form>
      <div id="switch-result"></div>
    </aside>
  </div>`;

/** Sorted-keys serialization for before/after feed equality checks. */
function stableStringify(value: unknown): string {
  if (Array.isArray(value)) {
    return '[' + value.map(stableStringify).join(',') + ']';
  }
  if (value !== null && typeof value === 'object') {
    const rec = value as Record<string, unknown>;
    const keys = Object.keys(rec).sort();
    return '{' + keys.map((k) => JSON.stringify(k) + ':' + stableStringify(rec[k])).join(',') + '}';
  }
  return JSON.stringify(value);
}

function feedFingerprint(feed: FeedPayload): string {
  const { generated_at: _ignored, ...rest } = feed;
  return stableStringify(rest);
}

export class App {
  readonly state: ViewState = initialState();
  forums: ForumInfo[] = [];
  /** last fully rendered feed payload (forum or follow mode) */
  lastFeed: FeedPayload | null = null;
  /** tests and callers can await the in-flight refresh here */
  lastRefresh: Promise<void> = Promise.resolve();
  private fetchSeq = 0;

  constructor(
    readonly root: HTMLElement,
    readonly client: Client,
  ) {
    root.innerHTML = SHELL;
    this.bind();
  }

  private el(id: string): HTMLElement {
    const found = this.root.querySelector('#' + id);
    if (!found) throw new Error(`shell element missing: #${id}`);
    return found as HTMLElement;
  }

  async start(): Promise<void> {
    try {
      const [health, forumsResp] = await Promise.all([this.client.health(), this.client.forums()]);
      this.el('node-id').textContent = health.node.slice(0, 24) + '…';
      this.forums = forumsResp.forums;
    } catch (err) {
      this.el('view').innerHTML = renderOffline(err instanceof Error ? err.message : String(err));
      return;
    }
    const first = this.forums[0];
    if (first) selectForum(this.state, first);
    this.renderNav();
    this.fillCompareSelects();
    await this.refresh();
  }

  refresh(): Promise<void> {
    const pending = this.doRefresh();
    this.lastRefresh = pending;
    return pending;
  }

  activeForum(): ForumInfo | null {
    return this.forums.find((f) => f.forum_id === this.state.forumId) ?? null;
  }

  private renderNav(): void {
    this.el('forum-nav').innerHTML = renderForumNav(this.forums, this.state.forumId);
  }

  private fillCompareSelects(): void {
    const forum = this.activeForum();
    const options = (forum?.moderator_streams ?? [])
      .map((sid) => `<option value="${sid}">${sid.slice(0, 10)}…</option>`)
      .join('');
    (this.el('cmp-a') as HTMLSelectElement).innerHTML = options;
    (this.el('cmp-b') as HTMLSelectElement).innerHTML = options;
  }

  private async doRefresh(): Promise<void> {
    const forum = this.activeForum();
    const view = this.el('view');
    if (!forum || !this.state.forumId) {
      view.innerHTML = '<p class="muted">no forum configured on this node</p>';
      return;
    }
    const seq = ++this.fetchSeq;
    const forumId = this.state.forumId;
    try {
      if (this.state.diffMode) {
        const [raw, diff] = await Promise.all([
          this.client.forumFeed(forumId, rawQuery()),
          this.client.feedDiff(forumId, feedQuery(this.state)),
        ]);
        if (seq !== this.fetchSeq) return;
        view.innerHTML = renderDiffView(raw, diff);
      } else {
        const feedPromise = this.client.forumFeed(forumId, feedQuery(this.state));
        // "revealed" badges: anything visible now that the forum's stock
        // view hides. Derived purely from two API responses.
        const stockDiffPromise = divergesFromDefaults(this.state, forum)
          ? this.client.feedDiff(forumId, {})
          : null;
        const feed = await feedPromise;
        const revealedRefs = new Set<string>();
        if (stockDiffPromise) {
          const stockDiff = await stockDiffPromise;
          const visible = new Set(feed.items.map((i) => refKey(i.entry.stream_id, i.entry.seq)));
          for (const h of stockDiff.hidden) {
            const key = refKey(h.stream_id, h.seq);
            if (visible.has(key)) revealedRefs.add(key);
          }
        }
        if (seq !== this.fetchSeq) return;
        this.state.lastPolicyDigest = feed.policy_digest;
        this.lastFeed = feed;
        view.innerHTML = renderFeed(feed, { revealedRefs });
      }
      this.el('controls').innerHTML = renderControls(forum, this.state);
    } catch (err) {
      if (seq !== this.fetchSeq) return;
      if (err instanceof OfflineError) {
        view.innerHTML = renderOffline(err.message);
      } else if (err instanceof ApiError) {
        view.innerHTML = renderError(err.code, err.message);
      } else {
        throw err;
      }
    }
  }

  private bind(): void {
    this.root.addEventListener('change', (event) => {
      const input = event.target as HTMLInputElement;
      if (input.dataset && input.dataset.mod !== undefined) {
        toggleMod(this.state, input.dataset.mod);
        void this.refresh();
      } else if (input.dataset && input.dataset.default !== undefined && !input.disabled) {
        toggleDefault(this.state, input.dataset.default);
        void this.refresh();
      }
    });

    this.root.addEventListener('click', (event) => {
      const target = event.target as HTMLElement;
      const diffToggle = target.closest('[data-diff-toggle]');
      if (diffToggle) {
        event.preventDefault();
        this.state.diffMode = !this.state.diffMode;
        void this.refresh();
        return;
      }
      const forumButton = target.closest('[data-forum]') as HTMLElement | null;
      if (forumButton && forumButton.dataset.forum) {
        const forum = this.forums.find((f) => f.forum_id === forumButton.dataset.forum);
        if (forum) {
          selectForum(this.state, forum);
          this.renderNav();
          this.fillCompareSelects();
          void this.refresh();
        }
        return;
      }
      if (target.closest('[data-retry]')) {
        void this.start();
      }
    });

    this.root.addEventListener('submit', (event) => {
      const form = event.target as HTMLFormElement;
      event.preventDefault();
      if (form.id === 'compare-form') {
        const a = (this.el('cmp-a') as HTMLSelectElement).value;
        const b = (this.el('cmp-b') as HTMLSelectElement).value;
        if (a && b) {
          this.state.comparePair = [a, b];
          this.lastRefresh = this.runCompare(a, b);
        }
      } else if (form.id === 'switch-form') {
        const data = new FormData(form);
        this.lastRefresh = this.runSwitch(
          String(data.get('stream') ?? ''),
          String(data.get('old') ?? ''),
          String(data.get('new') ?? ''),
        );
      }
    });
  }

  private async runCompare(a: string, b: string): Promise<void> {
    const out = this.el('compare-result');
    try {
      const payload = await this.client.compare(a, b);
      out.innerHTML = renderCompare(a, b, payload);
    } catch (err) {
      out.innerHTML =
        err instanceof ApiError ? renderError(err.code, err.message) : renderOffline(String(err));
    }
  }

  /** Provider switch with a before/after feed equality check. */
  private async runSwitch(streamId: string, oldStore: string, newStore: string): Promise<void> {
    const out = this.el('switch-result');
    const forumId = this.state.forumId;
    try {
      const before =
        forumId !== null
          ? feedFingerprint(await this.client.forumFeed(forumId, feedQuery(this.state)))
          : null;
      const report = await this.client.switchProvider(streamId, oldStore, newStore);
      let identical: boolean | null = null;
      if (forumId !== null && before !== null) {
        const after = await this.client.forumFeed(forumId, feedQuery(this.state));
        identical = feedFingerprint(after) === before;
      }
      out.innerHTML = renderSwitchResult(report, identical);
      await this.refresh();
    } catch (err) {
      out.innerHTML =
        err instanceof ApiError ? renderError(err.code, err.message) : renderOffline(String(err));
    }
  }
}

export function initApp(root: HTMLElement, client: Client): App {
  return new App(root, client);
}

export function resolveBaseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get('api');
  return fromQuery ?? window.location.origin;
}

// boot only when the host page provides the mount point (tests create their
// own containers and drive initApp directly)
const mount = typeof document !== 'undefined' ? document.getElementById('app') : null;
if (mount) {
  void initApp(mount, new Client(resolveBaseUrl())).start();
}
