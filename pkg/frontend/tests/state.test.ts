import { describe, expect, it } from "vitest";

import { History, HISTORY_CAP, initialState } from "../src/state.js";

describe("frame history", () => {
  it("caps at the ring size", () => {
    const h = new History();
    for (let i = 0; i < HISTORY_CAP + 50; i++) {
      h.push({ predicted_ms: i, actual_ms: i, delta_used: 1 });
    }
    expect(h.length).toBe(HISTORY_CAP);
    expect(h.records[0].actual_ms).toBe(50);
  });

  it("fps over the last ten frames: constant 25 ms gives 40 FPS", () => {
    const h = new History();
    for (let i = 0; i < 20; i++) {
      h.push({ predicted_ms: null, actual_ms: 25, delta_used: 1 });
    }
    expect(h.fps()).toBeCloseTo(40, 6);
  });

  it("empty history has no fps", () => {
    expect(new History().fps()).toBeNull();
  });

  it("fps uses only the trailing window", () => {
    const h = new History();
    for (let i = 0; i < 10; i++) h.push({ predicted_ms: null, actual_ms: 1000, delta_used: 1 });
    for (let i = 0; i < 10; i++) h.push({ predicted_ms: null, actual_ms: 10, delta_used: 1 });
    expect(h.fps()).toBeCloseTo(100, 6);
  });
});

describe("initial state", () => {
  it("starts inside server bounds with controller off", () => {
    const s = initialState();
    expect(s.pose.dz).toBeGreaterThanOrEqual(1.2);
    expect(s.controller.enabled).toBe(false);
    expect(s.lobes.length).toBe(3);
  });
});
