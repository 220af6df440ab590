/** Dashboard state: last acknowledged snapshots plus pending mutations.
 *
 * Rendered state always derives from the last server snapshot with pending
 * optimistic actions layered on top and clearly marked; a failed action is
 * rolled back (dropped) and its error surfaced inline. The dashboard holds
 * no policy logic of its own.
 */

import { ApiError, ControlApi } from "./api.js";
import type { PendingAction, SiteView, ThirdPartyEntry } from "./types.js";

export interface RowModel extends ThirdPartyEntry {
  pending: boolean;
  error: string | null;
}

export interface SiteModel {
  site: string;
  rows: RowModel[];
}

export interface DashboardState {
  offline: boolean;
  policy: string | null;
  sites: SiteModel[];
}

type Listener = (state: DashboardState) => void;

export class DashboardStore {
  private views = new Map<string, SiteView>();
  private pending: PendingAction[] = [];
  private errors = new Map<string, string>(); // "site|tp" -> message
  private offline = false;
  private policy: string | null = null;
  private listeners: Listener[] = [];

  constructor(private readonly api: ControlApi) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    const state = this.state();
    for (const listener of this.listeners) listener(state);
  }

  private static key(site: string, thirdParty: string): string {
    return `${site}|${thirdParty}`;
  }

  /** One polling round; on failure keeps the last snapshot and flags offline. */
  async refresh(): Promise<void> {
    try {
      const health = await this.api.health();
      const sites = await this.api.sites();
      const views = await Promise.all(sites.map((site) => this.api.siteView(site)));
      this.views = new Map(views.map((view) => [view.site, view]));
      this.policy = health.policy;
      this.offline = false;
    } catch {
      this.offline = true;
    }
    this.notify();
  }

  isPending(site: string, thirdParty: string): boolean {
    return this.pending.some((a) => a.site === site && a.thirdParty === thirdParty);
  }

  private async run(action: PendingAction, send: () => Promise<unknown>): Promise<void> {
    const key = DashboardStore.key(action.site, action.thirdParty);
    this.errors.delete(key);
    this.pending.push(action);
    this.notify();
    try {
      await send();
      this.pending = this.pending.filter((a) => a !== action);
      await this.refresh(); // ack: re-derive rows from the server
    } catch (err) {
      // rollback: drop the optimistic action, keep server-derived state
      this.pending = this.pending.filter((a) => a !== action);
      this.errors.set(key, err instanceof ApiError ? err.message : "request failed");
      this.notify();
    }
  }

  activate(site: string, thirdParty: string): Promise<void> {
    return this.run({ kind: "activate", site, thirdParty }, () =>
      this.api.activate(site, thirdParty),
    );
  }

  whitelistAdd(site: string, thirdParty: string): Promise<void> {
    return this.run({ kind: "whitelist-add", site, thirdParty }, () =>
      this.api.whitelistAdd(site, thirdParty),
    );
  }

  whitelistRemove(site: string, thirdParty: string): Promise<void> {
    return this.run({ kind: "whitelist-remove", site, thirdParty }, () =>
      this.api.whitelistRemove(site, thirdParty),
    );
  }

  /** Server snapshot with the pending overlay applied. */
  state(): DashboardState {
    const sites: SiteModel[] = [...this.views.values()]
      .sort((a, b) => a.site.localeCompare(b.site))
      .map((view) => ({
        site: view.site,
        rows: view.third_parties.map((entry) => {
          const optimistic = this.pending.find(
            (a) => a.site === view.site && a.thirdParty === entry.domain,
          );
          let state = entry.state;
          if (optimistic?.kind === "activate") state = "activated";
          if (optimistic?.kind === "whitelist-add") state = "whitelisted";
          if (optimistic?.kind === "whitelist-remove") state = "blocked";
          return {
            ...entry,
            state,
            pending: optimistic !== undefined,
            error: this.errors.get(DashboardStore.key(view.site, entry.domain)) ?? null,
          };
        }),
      }));
    return { offline: this.offline, policy: this.policy, sites };
  }
}
