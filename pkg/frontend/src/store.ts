// Client-side view of the alert feed. Inserts keep server creation order,
// duplicates (same seq or alert id) are dropped, and verdict updates only
// land through server-confirmed alert payloads.

import type { Alert, FeedEntry } from "./types.js";

export class AlertFeedStore {
  private entries: FeedEntry[] = [];
  private seen = new Set<string>();
  cursor = 0;

  insert(seq: number, alert: Alert): boolean {
    if (this.seen.has(alert.alert_id)) return false;
    this.seen.add(alert.alert_id);
    this.entries.push({ seq, alert });
    this.entries.sort((a, b) => a.seq - b.seq);
    if (seq > this.cursor) this.cursor = seq;
    return true;
  }

  applyServerUpdate(alert: Alert): void {
    const entry = this.entries.find((e) => e.alert.alert_id === alert.alert_id);
    if (entry) entry.alert = alert;
  }

  list(): readonly FeedEntry[] {
    return this.entries;
  }

  get(alertId: string): Alert | undefined {
    return this.entries.find((e) => e.alert.alert_id === alertId)?.alert;
  }

  get size(): number {
    return this.entries.length;
  }

  /** seqs are creation order and must be contiguous from a full fetch */
  hasGaps(): boolean {
    for (let i = 1; i < this.entries.length; i++) {
      if (this.entries[i]!.seq !== this.entries[i - 1]!.seq + 1) return true;
    }
    return false;
  }
}
