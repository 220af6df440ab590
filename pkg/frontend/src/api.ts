/** Thin typed client for the proxy control API. */

import type { ActivateResult, Health, SiteView } from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ControlApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/+$/, "") + path;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.url(path), init);
    const body = await response.text();
    if (!response.ok) {
      let message = `HTTP ${response.status}`;
      try {
        const parsed = JSON.parse(body) as { error?: string };
        if (parsed.error) message = parsed.error;
      } catch {
        // non-JSON error body: keep the status message
      }
      throw new ApiError(response.status, message);
    }
    return JSON.parse(body) as T;
  }

  private mutate<T>(method: string, path: string, site: string, thirdParty: string): Promise<T> {
    return this.request<T>(path, {
      method,
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ site, thirdParty }),
    });
  }

  health(): Promise<Health> {
    return this.request<Health>("/ctl/v1/health");
  }

  sites(): Promise<string[]> {
    return this.request<string[]>("/ctl/v1/sites");
  }

  siteView(site: string): Promise<SiteView> {
    return this.request<SiteView>(`/ctl/v1/sites/${encodeURIComponent(site)}`);
  }

  activate(site: string, thirdParty: string): Promise<ActivateResult> {
    return this.mutate("POST", "/ctl/v1/activate", site, thirdParty);
  }

  whitelistAdd(site: string, thirdParty: string): Promise<unknown> {
    return this.mutate("POST", "/ctl/v1/whitelist", site, thirdParty);
  }

  whitelistRemove(site: string, thirdParty: string): Promise<unknown> {
    return this.mutate("DELETE", "/ctl/v1/whitelist", site, thirdParty);
  }
}
