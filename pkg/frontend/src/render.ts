/** Pure HTML renderers; the app layer mounts the strings and wires events. */

import type { DashboardState, RowModel, SiteModel } from "./store.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const COOKIE_STATUS_LABEL: Record<string, string> = {
  none: "no cookies",
  quarantined: "quarantined",
  has_cookies: "has cookies",
};

function renderRow(site: string, row: RowModel): string {
  const domain = escapeHtml(row.domain);
  const siteAttr = escapeHtml(site);
  const pending = row.pending ? ' <span class="pending">(pending)</span>' : "";
  const error = row.error
    ? `<div class="row-error">${escapeHtml(row.error)}</div>`
    : "";
  const actions: string[] = [];
  if (row.state === "blocked") {
    actions.push(
      `<button data-action="activate" data-site="${siteAttr}" data-tp="${domain}">activate</button>`,
      `<button data-action="whitelist-add" data-site="${siteAttr}" data-tp="${domain}">whitelist</button>`,
    );
  } else if (row.state === "activated") {
    actions.push(
      `<button data-action="whitelist-add" data-site="${siteAttr}" data-tp="${domain}">whitelist</button>`,
    );
  } else {
    actions.push(
      `<button data-action="whitelist-remove" data-site="${siteAttr}" data-tp="${domain}">unwhitelist</button>`,
    );
  }
  return `
    <li class="row state-${row.state} cookies-${row.cookie_status}">
      <span class="domain">${domain}</span>
      <span class="badge badge-state badge-${row.state}">${row.state}</span>
      <span class="badge badge-cookies badge-${row.cookie_status}">${
        COOKIE_STATUS_LABEL[row.cookie_status] ?? row.cookie_status
      }</span>
      <span class="kind">${escapeHtml(row.frame_kind)}</span>
      <span class="count">${row.request_count} req</span>
      <span class="actions">${actions.join(" ")}</span>${pending}
      ${error}
    </li>`;
}

export function renderSiteView(model: SiteModel): string {
  if (model.rows.length === 0) {
    return `
      <section class="site">
        <h2>${escapeHtml(model.site)}</h2>
        <p class="empty">No third parties observed on this site.</p>
      </section>`;
  }
  return `
    <section class="site">
      <h2>${escapeHtml(model.site)} <span class="count">${model.rows.length} third parties</span></h2>
      <ul class="third-parties">
        ${model.rows.map((row) => renderRow(model.site, row)).join("\n")}
      </ul>
    </section>`;
}

export function renderDashboard(state: DashboardState): string {
  const banner = state.offline
    ? '<div class="banner offline">control API unreachable; showing last snapshot</div>'
    : "";
  const policy = state.policy
    ? `<div class="policy">policy: <strong>${escapeHtml(state.policy)}</strong></div>`
    : "";
  const body =
    state.sites.length === 0
      ? '<p class="empty">No sites observed yet. Browse through the proxy first.</p>'
      : state.sites.map(renderSiteView).join("\n");
  return `${banner}${policy}${body}`;
}
