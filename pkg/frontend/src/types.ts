// Mirrors of the cloud service JSON schemas.

export type PoseLabel = "FacingForward" | "EyesClosed" | "FacingDown" | "FacingSideways";
export type AlertStatus = "Open" | "Confirmed" | "Dismissed";
export type Verdict = "Confirmed" | "Dismissed";

export interface SuspicionEvent {
  event_id: string;
  camera_id: string;
  zone_id: string;
  timestamp: number;
  anomaly_score: number;
  pose_label: PoseLabel | null;
  frame_ref: string;
}

export interface Alert {
  alert_id: string;
  event: SuspicionEvent;
  product_id: string;
  expected_count: number;
  observed_count: number;
  deficit: number;
  created_at: number;
  status: AlertStatus;
}

export interface FeedEntry {
  seq: number;
  alert: Alert;
}

export interface StaffFeedback {
  alert_id: string;
  verdict: Verdict;
  note: string | null;
  timestamp: number;
  operator_id: string;
}

export interface ControlStatus {
  camera_id: string;
  version: number;
  status: "applied" | "pending" | "rejected";
}

export interface ZoneStatus {
  zone_id: string;
  false_positives: number;
  open_alerts: string[];
  products: Array<Record<string, unknown>>;
}
