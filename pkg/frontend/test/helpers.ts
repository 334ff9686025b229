// Spawns the real cloud service as a child process for round-trip tests.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export const TOKEN = "console-test-token";
export const T0 = 1_700_000_000_000;

export interface CloudHarness {
  baseUrl: string;
  stop(): void;
}

const CATALOG = [
  { product_id: "sku-a", zone_id: "zone-a", display_name: "Cola", expected_count: 10 },
  { product_id: "sku-b", zone_id: "zone-b", display_name: "Chips", expected_count: 10 },
  { product_id: "sku-c", zone_id: "zone-c", display_name: "Soap", expected_count: 10 },
];

export async function startCloud(): Promise<CloudHarness> {
  const dir = mkdtempSync(join(tmpdir(), "console-test-"));
  const catalogPath = join(dir, "catalog.json");
  writeFileSync(catalogPath, JSON.stringify(CATALOG));
  const port = 18000 + Math.floor(Math.random() * 2000);
  const child: ChildProcess = spawn(
    "python3",
    [
      "-m", "shopwatch", "cloud",
      "--catalog", catalogPath,
      "--port", String(port),
      "--state-dir", join(dir, "state"),
      "--token", TOKEN,
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  const baseUrl = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 15_000;
  for (;;) {
    try {
      const resp = await fetch(`${baseUrl}/healthz`);
      if (resp.ok) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      child.kill();
      throw new Error("cloud service did not come up");
    }
    await sleep(100);
  }
  return {
    baseUrl,
    stop() {
      child.kill();
    },
  };
}

let eventCounter = 0;

/** Create one alert by planting a deficit and posting a suspicion event. */
export async function createAlert(
  baseUrl: string,
  zone: "a" | "b" | "c",
  ts = T0,
): Promise<void> {
  eventCounter += 1;
  const headers = { "Content-Type": "application/json", "X-Auth-Token": TOKEN };
  let resp = await fetch(`${baseUrl}/inventory/observations`, {
    method: "POST",
    headers,
    body: JSON.stringify({
      zone_id: `zone-${zone}`,
      product_id: `sku-${zone}`,
      observed_count: 8,
      timestamp: ts,
    }),
  });
  if (!resp.ok) throw new Error(`observation failed: ${resp.status}`);
  resp = await fetch(`${baseUrl}/events`, {
    method: "POST",
    headers,
    body: JSON.stringify({
      event_id: `console-ev-${eventCounter}`,
      camera_id: `cam-${zone}`,
      zone_id: `zone-${zone}`,
      timestamp: ts,
      anomaly_score: 4.5,
      pose_label: "FacingDown",
      frame_ref: `frames/${eventCounter}`,
    }),
  });
  const body = (await resp.json()) as { alerts: string[] };
  if (!resp.ok || body.alerts.length !== 1) {
    throw new Error(`expected one alert, got ${JSON.stringify(body)}`);
  }
}

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
