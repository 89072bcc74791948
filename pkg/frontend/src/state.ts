/**
 * UI state: pose, lobes, resolution, controller settings, and a capped
 * history of frame timings for the live charts.
 */
import { Pose } from "./arcball.js";
import { Lobe } from "./tf.js";

export interface FrameRecord {
  predicted_ms: number | null;
  actual_ms: number;
  delta_used: number;
}

export interface ControllerState {
  enabled: boolean;
  target_ms: number;
}

export const HISTORY_CAP = 200;

export class History {
  private buf: FrameRecord[] = [];

  push(rec: FrameRecord): void {
    this.buf.push(rec);
    if (this.buf.length > HISTORY_CAP) {
      this.buf.splice(0, this.buf.length - HISTORY_CAP);
    }
  }

  get records(): readonly FrameRecord[] {
    return this.buf;
  }

  get length(): number {
    return this.buf.length;
  }

  /** FPS over the last ten frames: 1000 / mean(actual_ms). */
  fps(window = 10): number | null {
    if (this.buf.length === 0) return null;
    const tail = this.buf.slice(-window);
    const mean = tail.reduce((acc, r) => acc + r.actual_ms, 0) / tail.length;
    return mean > 0 ? 1000 / mean : null;
  }
}

export interface UiState {
  volumeId: string | null;
  pose: Pose;
  lobes: Lobe[];
  resolution: [number, number];
  controller: ControllerState;
  history: History;
}

export function initialState(): UiState {
  return {
    volumeId: null,
    pose: { rx: 30, ry: 15, dz: 2.0 },
    lobes: [
      { center: 0.55, width: 0.05, height: 0.9 },
      { center: 0.3, width: 0.02, height: 0.3 },
      { center: 0.8, width: 0.05, height: 0.5 },
    ],
    resolution: [256, 256],
    controller: { enabled: false, target_ms: 25 },
    history: new History(),
  };
}
