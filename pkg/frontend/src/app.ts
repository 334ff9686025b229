// Staff console page: live alert feed with verdict buttons and per-camera
// threshold tuning. All state shown here is server-confirmed.

import { ApiError, ConsoleApi } from "./api.js";
import { subscribeAlerts, type StreamState } from "./sse.js";
import { AlertFeedStore } from "./store.js";
import type { Alert, Verdict } from "./types.js";

const params = new URLSearchParams(location.search);
const baseUrl = params.get("api") ?? location.origin;
const token = params.get("token") ?? "";
const operator = params.get("operator") ?? "console";

const api = new ConsoleApi(baseUrl, token);
const store = new AlertFeedStore();
const fpByZone = new Map<string, number>();

const feedEl = document.getElementById("feed")!;
const stateEl = document.getElementById("conn-state")!;
const emptyEl = document.getElementById("empty")!;
const fpEl = document.getElementById("fp-counters")!;
const thresholdForm = document.getElementById("threshold-form") as HTMLFormElement;
const thresholdOut = document.getElementById("threshold-state")!;

function render(): void {
  emptyEl.style.display = store.size === 0 ? "block" : "none";
  for (const { seq, alert } of store.list()) {
    const id = `alert-${alert.alert_id}`;
    let card = document.getElementById(id);
    if (!card) {
      card = document.createElement("article");
      card.id = id;
      card.className = "alert";
      feedEl.appendChild(card); // feed order == creation order
    }
    card.innerHTML = alertHtml(seq, alert);
    card.querySelectorAll<HTMLButtonElement>("button[data-verdict]").forEach((btn) => {
      btn.onclick = () => submitVerdict(alert.alert_id, btn.dataset.verdict as Verdict);
    });
  }
}

function alertHtml(seq: number, alert: Alert): string {
  const terminal = alert.status !== "Open";
  const badge = `<span class="badge ${alert.status.toLowerCase()}">${alert.status}</span>`;
  const buttons = terminal
    ? ""
    : `<button data-verdict="Confirmed">Confirm</button>
       <button data-verdict="Dismissed">Dismiss</button>`;
  return `
    <header>#${seq} ${escapeHtml(alert.product_id)} ${badge}</header>
    <dl>
      <dt>deficit</dt><dd>${alert.deficit} (expected ${alert.expected_count}, observed ${alert.observed_count})</dd>
      <dt>anomaly score</dt><dd>${alert.event.anomaly_score.toFixed(2)}</dd>
      <dt>pose</dt><dd>${alert.event.pose_label ?? "n/a"}</dd>
      <dt>camera / zone</dt><dd>${escapeHtml(alert.event.camera_id)} / ${escapeHtml(alert.event.zone_id)}</dd>
      <dt>evidence</dt><dd class="evidence" title="frame reference">${escapeHtml(alert.event.frame_ref)}</dd>
    </dl>
    <footer>${buttons}</footer>`;
}

async function submitVerdict(alertId: string, verdict: Verdict): Promise<void> {
  const current = store.get(alertId);
  if (!current || current.status !== "Open") return; // idempotent button
  try {
    const updated = await api.submitVerdict({
      alert_id: alertId,
      verdict,
      note: null,
      timestamp: Date.now(),
      operator_id: operator,
    });
    store.applyServerUpdate(updated);
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      // someone else got there first: show the winning verdict
      const { alerts } = await api.fetchAlerts(0);
      const winner = alerts.find((e) => e.alert.alert_id === alertId);
      if (winner) store.applyServerUpdate(winner.alert);
    } else {
      console.error("verdict failed", err);
    }
  }
  await refreshFalsePositives();
  render();
}

async function refreshFalsePositives(): Promise<void> {
  const zones = new Set(store.list().map((e) => e.alert.event.zone_id));
  for (const zone of zones) {
    try {
      const status = await api.zoneStatus(zone);
      fpByZone.set(zone, status.false_positives);
    } catch {
      // zone view is best-effort
    }
  }
  fpEl.textContent = [...fpByZone.entries()]
    .map(([zone, count]) => `${zone}: ${count} dismissed`)
    .join("  |  ") || "no dismissals yet";
}

function onState(state: StreamState): void {
  stateEl.textContent = state;
  stateEl.className = `state ${state}`;
}

thresholdForm.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const camera = (document.getElementById("camera-id") as HTMLInputElement).value.trim();
  const value = Number((document.getElementById("threshold") as HTMLInputElement).value);
  if (!camera || !(value > 0)) {
    thresholdOut.textContent = "threshold must be > 0";
    return;
  }
  api
    .tuneThreshold(camera, value)
    .then((status) => {
      thresholdOut.textContent = `${status.camera_id}: ${status.status} v${status.version}`;
      if (status.status === "pending") pollUntilApplied(camera, status.version);
    })
    .catch((err: unknown) => {
      thresholdOut.textContent = err instanceof Error ? err.message : String(err);
    });
});

function pollUntilApplied(camera: string, version: number): void {
  const timer = setInterval(async () => {
    const resp = await fetch(`${baseUrl}/control/${camera}`);
    if (resp.status === 204) {
      thresholdOut.textContent = `${camera}: applied v${version}`;
      clearInterval(timer);
    }
  }, 1000);
}

function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (c) => `&#${c.charCodeAt(0)};`);
}

async function start(): Promise<void> {
  const { alerts } = await api.fetchAlerts(0);
  for (const { seq, alert } of alerts) store.insert(seq, alert);
  render();
  await refreshFalsePositives();
  subscribeAlerts(baseUrl, {
    since: store.cursor,
    onAlert: (seq, alert) => {
      store.insert(seq, alert);
      render();
    },
    onState,
  });
}

void start();
