/** Mounts the dashboard: 1 s polling plus event-delegated mutations. */

import { ControlApi } from "./api.js";
import { renderDashboard } from "./render.js";
import { DashboardStore } from "./store.js";

const POLL_INTERVAL_MS = 1000;

export function startDashboard(root: HTMLElement, controlBase: string): DashboardStore {
  const store = new DashboardStore(new ControlApi(controlBase));

  store.subscribe((state) => {
    root.innerHTML = renderDashboard(state);
  });

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement | null;
    const button = target?.closest<HTMLButtonElement>("button[data-action]");
    if (!button) return;
    const site = button.dataset.site ?? "";
    const tp = button.dataset.tp ?? "";
    if (button.dataset.action === "activate") void store.activate(site, tp);
    if (button.dataset.action === "whitelist-add") void store.whitelistAdd(site, tp);
    if (button.dataset.action === "whitelist-remove") void store.whitelistRemove(site, tp);
  });

  void store.refresh();
  setInterval(() => void store.refresh(), POLL_INTERVAL_MS);
  return store;
}

declare global {
  interface Window {
    cookiegateDashboard?: DashboardStore;
  }
}

if (typeof document !== "undefined") {
  const root = document.getElementById("dashboard");
  if (root) {
    const params = new URLSearchParams(window.location.search);
    const base = params.get("control") ?? "http://127.0.0.1:8900";
    window.cookiegateDashboard = startDashboard(root, base);
  }
}
