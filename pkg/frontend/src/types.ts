/** Wire types mirroring the proxy control API (/ctl/v1). */

export type ThirdPartyState = "blocked" | "activated" | "whitelisted";
export type CookieStatus = "none" | "quarantined" | "has_cookies";

export interface ThirdPartyEntry {
  domain: string;
  frame_kind: string;
  state: ThirdPartyState;
  cookie_status: CookieStatus;
  request_count: number;
}

export interface SiteView {
  site: string;
  third_parties: ThirdPartyEntry[];
}

export interface Health {
  status: string;
  policy: string;
}

export interface ActivateResult {
  activated: boolean;
  released: number;
  reloaded: unknown[];
}

/** A mutation sent to the server but not yet acknowledged. */
export interface PendingAction {
  kind: "activate" | "whitelist-add" | "whitelist-remove";
  site: string;
  thirdParty: string;
}
