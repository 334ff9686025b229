// Request/response calls against the cloud service. The console never mutates
// alert state locally: every transition comes back from the server.

import type { Alert, ControlStatus, FeedEntry, StaffFeedback, ZoneStatus } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    throw new ApiError(resp.status, (body as { error?: string }).error ?? resp.statusText);
  }
  return body as T;
}

export class ConsoleApi {
  constructor(
    private baseUrl: string,
    private token: string = "",
  ) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["X-Auth-Token"] = this.token;
    return headers;
  }

  async fetchAlerts(since = 0): Promise<{ alerts: FeedEntry[]; cursor: number }> {
    const resp = await fetch(`${this.baseUrl}/alerts?since=${since}`);
    return asJson(resp);
  }

  async submitVerdict(feedback: StaffFeedback): Promise<Alert> {
    const resp = await fetch(`${this.baseUrl}/feedback`, {
      method: "POST",
      headers: this.headers(),
      body: JSON.stringify(feedback),
    });
    return asJson<Alert>(resp);
  }

  async tuneThreshold(cameraId: string, threshold: number): Promise<ControlStatus> {
    if (!(threshold > 0)) {
      throw new ApiError(0, "threshold must be > 0");
    }
    const resp = await fetch(`${this.baseUrl}/control/threshold`, {
      method: "POST",
      headers: this.headers(),
      body: JSON.stringify({ camera_id: cameraId, threshold }),
    });
    return asJson<ControlStatus>(resp);
  }

  async zoneStatus(zoneId: string): Promise<ZoneStatus> {
    const resp = await fetch(`${this.baseUrl}/zones/${zoneId}/status`);
    return asJson<ZoneStatus>(resp);
  }
}
