import { describe, expect, it } from "vitest";

import {
  ACTOR_PIXEL_COUNT,
  CAM_COL_START,
  CAM_ROW_START,
  CRUISE_SPEED,
  decideControl,
  steerTowards,
  targetWaypoint,
} from "../src/policy";
import { Observation, RouteInfo } from "../src/protocol";

const ANCHOR: [number, number] = [0, 0];
const M_PER_DEG = (6371000 * Math.PI) / 180;

function gnssOf(x: number, y: number): [number, number] {
  return [y / M_PER_DEG, x / M_PER_DEG];
}

function route(points: [number, number][]): RouteInfo {
  return { anchor: ANCHOR, waypoints: points.map(([x, y]) => gnssOf(x, y)) };
}

function observation(overrides: Partial<Observation> = {}): Observation {
  return {
    tick: 0,
    simTimeS: 0,
    camera: { width: 64, height: 64, pixels: new Uint8Array(64 * 64) },
    lidar: { numChannels: 16, points: [] },
    scalars: [
      { kind: "GNSS", values: gnssOf(0, 0) },
      { kind: "IMU", values: [0, 0, 0, 0] },
      { kind: "SPEEDOMETER", values: [0] },
    ],
    ...overrides,
  };
}

const STRAIGHT = route([
  [0, 0],
  [5, 0],
  [10, 0],
  [15, 0],
]);

describe("waypoint following", () => {
  it("selects a target beyond the lookahead", () => {
    const target = targetWaypoint(
      [0, 0],
      [
        [0, 0],
        [5, 0],
        [10, 0],
        [15, 0],
      ],
    );
    expect(target).toEqual([10, 0]);
  });

  it("drives straight with near-zero steer on a straight route", () => {
    const ctrl = decideControl(observation(), STRAIGHT);
    expect(Math.abs(ctrl.steer)).toBeLessThan(0.05);
    expect(ctrl.throttle).toBeGreaterThan(0);
    expect(ctrl.brake).toBe(0);
  });

  it("steers left toward a leftward target", () => {
    expect(steerTowards([0, 0], 0, [5, 5])).toBeGreaterThan(0);
    expect(steerTowards([0, 0], 0, [5, -5])).toBeLessThan(0);
  });

  it("throttle tracks the cruise speed", () => {
    const atCruise = observation({
      scalars: [
        { kind: "GNSS", values: gnssOf(0, 0) },
        { kind: "IMU", values: [0, 0, 0, 0] },
        { kind: "SPEEDOMETER", values: [CRUISE_SPEED] },
      ],
    });
    expect(decideControl(atCruise, STRAIGHT).throttle).toBe(0);
  });
});

describe("braking cues", () => {
  it("brakes on a bright blob in the forward window", () => {
    const obs = observation();
    const pixels = obs.camera!.pixels;
    for (let i = 0; i < ACTOR_PIXEL_COUNT + 2; i++) {
      pixels[(CAM_ROW_START + 2) * 64 + CAM_COL_START + i] = 255;
    }
    const ctrl = decideControl(obs, STRAIGHT);
    expect(ctrl.brake).toBe(1);
    expect(ctrl.throttle).toBe(0);
  });

  it("brakes on stop-line pixels", () => {
    const obs = observation();
    const pixels = obs.camera!.pixels;
    for (let i = 0; i < 4; i++) {
      pixels[(CAM_ROW_START + 5) * 64 + CAM_COL_START + i] = 180;
    }
    expect(decideControl(obs, STRAIGHT).brake).toBe(1);
  });

  it("brakes on a close forward lidar return", () => {
    const obs = observation({
      lidar: { numChannels: 16, points: [6.0, 0.0, -0.1, 0] },
    });
    expect(decideControl(obs, STRAIGHT).brake).toBe(1);
  });

  it("ignores lidar returns outside the corridor", () => {
    const obs = observation({
      lidar: { numChannels: 16, points: [6.0, 5.0, -0.1, 0, -3.0, 0.0, -0.1, 1] },
    });
    expect(decideControl(obs, STRAIGHT).brake).toBe(0);
  });
});

describe("degraded inputs", () => {
  it("never throws with every sensor missing", () => {
    const obs = observation({ camera: null, lidar: null, scalars: [] });
    const ctrl = decideControl(obs, STRAIGHT);
    expect(ctrl.steer).toBe(0);
    expect(ctrl.brake).toBe(0);
    expect(ctrl.throttle).toBeGreaterThan(0);
  });

  it("ignores a saturated (faulty) camera and keeps driving", () => {
    const obs = observation();
    obs.camera!.pixels.fill(255, 0, 2048); // half the frame near-white
    const ctrl = decideControl(obs, STRAIGHT);
    expect(ctrl.brake).toBe(0);
    expect(ctrl.throttle).toBeGreaterThan(0);
  });
});
